//! Zonotope set representation and the operations the tube recursion needs.

use nalgebra::{DMatrix, DVector};

use super::simplex::min_inf_norm_solution;

/// Centrally symmetric set { c + sum beta_i g_i : |beta_i| <= 1 }.
#[derive(Debug, Clone)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: Vec<DVector<f64>>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: Vec<DVector<f64>>) -> Self {
        for g in &generators {
            assert_eq!(g.len(), center.len(), "generator dimension mismatch");
        }
        Zonotope { center, generators }
    }

    /// Singleton set.
    pub fn point(center: DVector<f64>) -> Self {
        Zonotope {
            center,
            generators: Vec::new(),
        }
    }

    /// Axis-aligned box with the given per-axis radii (zero radii skipped).
    pub fn from_box(center: DVector<f64>, radii: &DVector<f64>) -> Self {
        let dim = center.len();
        let mut generators = Vec::new();
        for i in 0..dim {
            if radii[i] > 0.0 {
                let mut g = DVector::zeros(dim);
                g[i] = radii[i];
                generators.push(g);
            }
        }
        Zonotope { center, generators }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Image under a linear map.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Zonotope {
        Zonotope {
            center: m * &self.center,
            generators: self.generators.iter().map(|g| m * g).collect(),
        }
    }

    /// Minkowski sum.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Zonotope {
        let mut generators = self.generators.clone();
        generators.extend(other.generators.iter().cloned());
        Zonotope {
            center: &self.center + &other.center,
            generators,
        }
    }

    /// Minkowski sum with a centered axis-aligned box.
    pub fn add_box(&self, radii: &DVector<f64>) -> Zonotope {
        self.minkowski_sum(&Zonotope::from_box(DVector::zeros(self.dim()), radii))
    }

    /// Per-axis half-width of the tightest axis-aligned bounding box.
    pub fn box_radius(&self) -> DVector<f64> {
        let mut radius = DVector::zeros(self.dim());
        for g in &self.generators {
            for i in 0..self.dim() {
                radius[i] += g[i].abs();
            }
        }
        radius
    }

    /// Zonotope enclosure of the convex hull of two zonotopes (and of every
    /// segment between points of the two).
    pub fn enclose_with(&self, other: &Zonotope) -> Zonotope {
        let dim = self.dim();
        let n = self.generators.len().max(other.generators.len());
        let zero = DVector::zeros(dim);
        let ga = |i: usize| self.generators.get(i).unwrap_or(&zero);
        let gb = |i: usize| other.generators.get(i).unwrap_or(&zero);
        let mut generators = Vec::with_capacity(2 * n + 1);
        generators.push((&self.center - &other.center) * 0.5);
        for i in 0..n {
            generators.push((ga(i) + gb(i)) * 0.5);
        }
        for i in 0..n {
            generators.push((ga(i) - gb(i)) * 0.5);
        }
        generators.retain(|g| g.amax() > 0.0);
        Zonotope {
            center: (&self.center + &other.center) * 0.5,
            generators,
        }
    }

    /// Order reduction: keeps the largest generators and boxes the rest
    /// (interval hull of the removed part). Sound over-approximation.
    pub fn reduce(&self, cap: usize) -> Zonotope {
        if self.generators.len() <= cap {
            return self.clone();
        }
        let dim = self.dim();
        let keep = cap.saturating_sub(dim);
        let mut order: Vec<usize> = (0..self.generators.len()).collect();
        // Girard metric: box the generators closest to axis-aligned segments.
        let metric = |g: &DVector<f64>| g.iter().map(|v| v.abs()).sum::<f64>() - g.amax();
        order.sort_by(|&a, &b| {
            metric(&self.generators[b])
                .total_cmp(&metric(&self.generators[a]))
                .then(a.cmp(&b))
        });
        let mut generators: Vec<DVector<f64>> = order[..keep]
            .iter()
            .map(|&i| self.generators[i].clone())
            .collect();
        let mut radii = DVector::zeros(dim);
        for &i in &order[keep..] {
            for d in 0..dim {
                radii[d] += self.generators[i][d].abs();
            }
        }
        for d in 0..dim {
            if radii[d] > 0.0 {
                let mut g = DVector::zeros(dim);
                g[d] = radii[d];
                generators.push(g);
            }
        }
        Zonotope {
            center: self.center.clone(),
            generators,
        }
    }

    /// Projection onto the first `k` coordinates.
    pub fn project(&self, k: usize) -> Zonotope {
        Zonotope {
            center: self.center.rows(0, k).into_owned(),
            generators: self
                .generators
                .iter()
                .map(|g| g.rows(0, k).into_owned())
                .collect(),
        }
    }

    /// Support value in direction `u`: max over the set of <u, x>.
    pub fn support(&self, u: &DVector<f64>) -> f64 {
        self.center.dot(u) + self.generators.iter().map(|g| g.dot(u).abs()).sum::<f64>()
    }

    /// Exact membership test via a small linear program: p is inside iff some
    /// coefficient vector with infinity norm <= 1 + tol reproduces it.
    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        assert_eq!(p.len(), self.dim(), "point dimension mismatch");
        let d = p - &self.center;
        if self.generators.is_empty() {
            let scale = self.center.amax().max(1.0);
            return d.amax() <= tol * scale;
        }
        let mut g = DMatrix::zeros(self.dim(), self.generators.len());
        for (j, gen) in self.generators.iter().enumerate() {
            g.set_column(j, gen);
        }
        match min_inf_norm_solution(&g, &d) {
            Some(t) => t <= 1.0 + tol,
            None => false,
        }
    }
}
