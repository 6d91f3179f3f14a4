//! Matrix exponential, truncated input-response series, and the interval
//! remainder bounds the tube recursion needs.

use nalgebra::DMatrix;

/// Elementwise interval matrix, lower <= upper.
#[derive(Debug, Clone)]
pub struct IntervalMatrix {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl IntervalMatrix {
    pub fn symmetric(radius: DMatrix<f64>) -> Self {
        IntervalMatrix {
            lower: -&radius,
            upper: radius,
        }
    }

    /// Elementwise half-width.
    pub fn radius(&self) -> DMatrix<f64> {
        (&self.upper - &self.lower) * 0.5
    }
}

/// Propagation operators for one time step of a linear system.
#[derive(Debug, Clone)]
pub struct TaylorTerms {
    /// Matrix exponential exp(A r), computed by scaling and squaring.
    pub exponential: DMatrix<f64>,
    /// Truncated series of the step response: sum_{i=0..order} A^i r^(i+1) / (i+1)!.
    pub gamma_center: DMatrix<f64>,
    /// Absolute series sum_{i=0..order} |A|^i r^(i+1) / (i+1)!: componentwise
    /// bound on |Gamma(t)| for every t in [0, r], covering partial-step and
    /// time-varying disturbance responses.
    pub gamma_abs: DMatrix<f64>,
    /// Interval remainder of the step-response series.
    pub epsilon: IntervalMatrix,
    /// Dimensionless bound on the deviation of exp(A t) x, t in [0, r], from
    /// the chord between x and exp(A r) x; applied to |x| per axis.
    pub chord_deviation: DMatrix<f64>,
}

/// Computes the propagation terms for step length `r` with series order
/// `order` (>= 2).
pub fn taylor_terms(a: &DMatrix<f64>, r: f64, order: usize) -> TaylorTerms {
    assert!(order >= 2, "series order must be at least 2");
    assert!(r > 0.0, "step must be positive");
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "system matrix must be square");

    let exponential = matrix_exp(&(a * r));

    // Truncated series of int_0^r exp(A t) dt, plus its absolute companion.
    let abs_a = a.map(|v| v.abs());
    let mut gamma_center = DMatrix::<f64>::zeros(n, n);
    let mut gamma_abs = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n); // A^i
    let mut abs_power = DMatrix::<f64>::identity(n, n); // |A|^i
    let mut factor = r; // r^(i+1) / (i+1)!
    for i in 0..=order {
        gamma_center += &power * factor;
        gamma_abs += &abs_power * factor;
        power = &power * a;
        abs_power = &abs_power * &abs_a;
        factor *= r / (i + 2) as f64;
    }

    // Remainder of the exponential series on |A| r beyond the given order:
    // W = exp(|A| r) - sum_{i=0..order} (|A| r)^i / i!, elementwise nonnegative.
    let abs_a_r = &abs_a * r;
    let mut partial = DMatrix::<f64>::zeros(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for i in 0..=order {
        partial += &term;
        term = (&term * &abs_a_r) / (i + 1) as f64;
    }
    let w = (matrix_exp(&abs_a_r) - partial).map(|v| v.max(0.0));
    let epsilon = IntervalMatrix::symmetric(&w * r);

    // Chord deviation: sum_{i=2..order} kappa_i (|A| r)^i / i!  +  W,
    // with kappa_i = i^(-1/(i-1)) - i^(-i/(i-1)).
    let mut chord = w.clone();
    let mut abs_power = &abs_a_r * &abs_a_r; // (|A| r)^2
    let mut fact = 2.0;
    for i in 2..=order {
        let fi = i as f64;
        let kappa = fi.powf(-1.0 / (fi - 1.0)) - fi.powf(-fi / (fi - 1.0));
        chord += &abs_power * (kappa / fact);
        abs_power = &abs_power * &abs_a_r;
        fact *= (i + 1) as f64;
    }

    TaylorTerms {
        exponential,
        gamma_center,
        gamma_abs,
        epsilon,
        chord_deviation: chord,
    }
}

/// Scaling-and-squaring matrix exponential with a fixed-order series.
pub fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.iter().map(|v| v.abs()).fold(0.0f64, f64::max) * n as f64;
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for i in 1..=18 {
        term = (&term * &scaled) / i as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
