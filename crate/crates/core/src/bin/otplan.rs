//! Command-line front end: scenario validation, planning, ratio sweeps and
//! closed-loop tracking reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use overtake_planner::error::Error;
use overtake_planner::pipeline::{self, plan, sweep_verdicts, track_candidates, CandidateRecord};
use overtake_planner::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "otplan",
    about = "Two-layer overtaking trajectory planner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker pool (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a scenario file parses and satisfies its invariants.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the full pipeline and write skeletons, candidates and selection.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the reachable-tube dump.
        #[arg(long)]
        dump_tubes: bool,
    },
    /// Sweep the fit ratio on one skeleton and report metric monotonicity.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Topology class to sweep.
        #[arg(long, default_value_t = 0)]
        topo_id: usize,
    },
    /// Track the planned candidates with the pure-pursuit controller.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Candidate records from a previous plan run (defaults to
        /// `<out>/candidates.json`).
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Selected record (defaults to `<out>/selected.json`).
        #[arg(long)]
        selected: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_FEASIBLE: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Scenario(_) => EXIT_VALIDATION,
                Error::NoFeasibleTrajectory { .. } => EXIT_NO_FEASIBLE,
                Error::Search(overtake_planner::error::SearchError::NoPathToGoal { .. }) => {
                    EXIT_NO_FEASIBLE
                }
                Error::Tracking(overtake_planner::error::TrackingError::Diverged { .. }) => {
                    EXIT_DIVERGENCE
                }
                _ => 1,
            })
        }
    }
}

fn setup(common: &CommonArgs) -> Result<ScenarioConfig, Error> {
    if let Some(n) = common.threads {
        // Ignore failure when a pool already exists (e.g. repeated setup).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut config = ScenarioConfig::load(&common.scenario)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Validate { scenario } => {
            let config = ScenarioConfig::load(&scenario)?;
            let goal = config.goal_resolved();
            println!(
                "scenario ok: {} obstacle(s), goal at s = {} m, arrival window [{}, {}] s",
                config.obstacles.len(),
                goal.s,
                goal.t_min,
                goal.t_max
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { common, dump_tubes } => {
            let config = setup(&common)?;
            let outcome = plan(&config, dump_tubes)?;
            println!(
                "topology classes: {} | upper layer {:.1} ms, lower layer {:.1} ms",
                outcome.skeletons.len(),
                outcome.timings.upper_ms,
                outcome.timings.lower_ms
            );
            pipeline::write_skeletons_json(&common.out.join("skeletons.json"), &outcome.skeletons)?;
            pipeline::write_candidates_csv(
                &common.out.join("candidates.csv"),
                &outcome.candidates,
            )?;
            pipeline::write_candidates_json(
                &common.out.join("candidates.json"),
                &outcome.candidates,
            )?;
            if dump_tubes {
                pipeline::write_tubes_json(&common.out.join("tubes.json"), &outcome.tubes)?;
            }
            match outcome.selected {
                Some(i) => {
                    let record = &outcome.candidates[i];
                    let report = record.report.as_ref().expect("selected has a report");
                    println!(
                        "selected: topo {} r_alpha {} (J_RS {:.4}, J_s {:.3})",
                        report.topo_id, report.r_alpha, report.jrs.total, report.jerk_cost
                    );
                    pipeline::write_selected_json(&common.out.join("selected.json"), record)?;
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    let reasons = outcome.selection_failure.unwrap_or_default();
                    eprintln!("no feasible trajectory:");
                    for reason in &reasons {
                        eprintln!("  - {reason}");
                    }
                    Ok(ExitCode::from(EXIT_NO_FEASIBLE))
                }
            }
        }
        Command::Sweep { common, topo_id } => {
            let config = setup(&common)?;
            let outcome = plan(&config, false)?;
            if topo_id >= outcome.skeletons.len() {
                return Err(Error::Scenario(
                    overtake_planner::error::ScenarioError::invalid(
                        "topo_id",
                        format!("only {} topology classes found", outcome.skeletons.len()),
                    ),
                ));
            }
            let rows: Vec<CandidateRecord> = outcome
                .candidates
                .iter()
                .filter(|c| c.skeleton_id == topo_id)
                .cloned()
                .collect();
            pipeline::write_candidates_csv(&common.out.join("sweep.csv"), &rows)?;
            let verdicts = sweep_verdicts(&outcome.candidates, topo_id);
            println!(
                "sweep on topo {topo_id}: {} rows | jerk cost strictly decreasing: {} | deviation score strictly decreasing: {}",
                rows.len(),
                verdicts.jerk_cost_strictly_decreasing,
                verdicts.jrs_strictly_decreasing
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Track {
            common,
            candidates,
            selected,
        } => {
            let config = setup(&common)?;
            let candidates_path = candidates.unwrap_or_else(|| common.out.join("candidates.json"));
            let selected_path = selected.unwrap_or_else(|| common.out.join("selected.json"));
            let records = pipeline::read_candidates_json(&candidates_path)?;
            let outcome = track_candidates(&config, &records);
            pipeline::write_tracking_csv(&common.out.join("tracking.csv"), &outcome.records)?;
            match outcome.jrs_lateral_rank_correlation {
                Some(rho) => {
                    println!("deviation-score vs lateral-error rank correlation: {rho:.3}")
                }
                None => println!("not enough tracked candidates for a rank correlation"),
            }
            // Divergence of the selected trajectory is a hard failure.
            if let Ok(selected_record) = pipeline::read_selected_json(&selected_path) {
                let diverged = outcome.records.iter().any(|r| {
                    r.skeleton_id == selected_record.skeleton_id
                        && r.r_alpha == selected_record.r_alpha
                        && r.error.as_deref().is_some_and(|e| e.contains("diverged"))
                });
                if diverged {
                    eprintln!("selected trajectory diverged under tracking");
                    return Ok(ExitCode::from(EXIT_DIVERGENCE));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
