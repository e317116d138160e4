//! Library side of the `biharm` command: configuration, dispatch and
//! artifact writing. The binary only parses flags into a [`RunConfig`].

pub mod config;
pub mod io;

use std::path::PathBuf;

use biharm_core::diagnostics::{classify_growth, default_probes, GrowthClassification};
use biharm_core::functionals::adams_ratio_search;
use biharm_core::model::{check_conditions, ConditionReport, ProblemConfig};
use biharm_core::moser::moser_sweep;
use biharm_core::rearrangement::fourier_rearrange;
use biharm_core::solvers::{limiting_gap, minimize_nehari, seeded_init, solve_ground_state, GroundState, SolveMode, SolveReport};
use biharm_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error as ThisError;

pub use config::{Command, RunConfig};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if solver_failure(e) => EXIT_NOT_CONVERGED,
            CliError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

fn solver_failure(e: &Error) -> bool {
    matches!(e, Error::NotConverged { .. } | Error::NoSignChange { .. } | Error::BudgetExhausted(_))
}

#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    report: T,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Attempt<T: Serialize> {
    Converged { result: T },
    Failed { error: String },
}

impl<T: Serialize> Attempt<T> {
    fn failed(&self) -> bool {
        matches!(self, Attempt::Failed { .. })
    }
}

struct Writer<'a> {
    config: &'a RunConfig,
    artifacts: Vec<PathBuf>,
}

impl Writer<'_> {
    fn report<T: Serialize>(&mut self, name: &str, report: T) -> Result<(), CliError> {
        let env = Envelope { version: VERSION, command: self.config.command.name(), config: self.config, report };
        self.bytes(name, io::to_json(&env)?.as_bytes())
    }

    fn field(&mut self, name: &str, u: &biharm_core::RadialField) -> Result<(), CliError> {
        self.bytes(name, io::field_csv(u).as_bytes())
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = io::out_path(&self.config.out_dir, name);
        io::write_atomic(&path, data)?;
        self.artifacts.push(path);
        Ok(())
    }
}

/// Runs one command. Solver failures inside `solve`, `sweep` and `gap` still
/// produce a report and yield exit code 2; configuration errors return `Err`.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let mut w = Writer { config, artifacts: Vec::new() };
    let grid = config.build_grid()?;
    let problem = config.problem_config(&grid)?;
    let seed0 = config.solver.seeds.first().copied().unwrap_or(1);
    let mut exit_code = EXIT_OK;
    match config.command {
        Command::Solve => {
            let mut entries = Vec::new();
            for &seed in &config.solver.seeds {
                let (entry, field) = solve_one(config, &problem, &grid, seed)?;
                if entry.attempt_failed() {
                    exit_code = EXIT_NOT_CONVERGED;
                }
                if let Some(u) = field {
                    w.field(&format!("solve_seed{seed}.csv"), &u)?;
                }
                entries.push(entry);
            }
            w.report("solve.json", entries)?;
        }
        Command::Rearrange => {
            let u = match &config.input {
                Some(path) => io::load_field(path, config.dimension())?,
                None => seeded_init(&grid, seed0)?,
            };
            let r = fourier_rearrange(&u)?;
            w.field("rearrange_in.csv", &u)?;
            w.field("rearrange_out.csv", &r.field)?;
            w.report("rearrange.json", r.checks)?;
        }
        Command::Moser => {
            let g = |t: f64| problem.g_lambda(t);
            let table = moser_sweep(config.moser.k, &config.moser.b, &g)?;
            let mut csv = String::from("k,b,K,l2_sq,lap_l2_sq,lap_excess,g_integral,lap_exponent,l2_exponent\n");
            for (i, row) in table.rows.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    i + 1,
                    row.b,
                    table.k,
                    row.l2_sq,
                    row.lap_l2_sq,
                    row.lap_excess,
                    row.g_integral,
                    table.lap_exponent,
                    table.l2_exponent
                ));
            }
            w.bytes("moser.csv", csv.as_bytes())?;
            w.report("moser.json", table)?;
        }
        Command::Ratio => {
            let l = config.ratio.l.unwrap_or_else(|| problem.threshold_r());
            let report = adams_ratio_search(&problem, l, config.ratio.budget)?;
            w.report("ratio.json", report)?;
        }
        Command::Check => {
            #[derive(Serialize)]
            struct CheckReport {
                classification: GrowthClassification,
                conditions: ConditionReport,
            }
            let probes = default_probes();
            let classification = match &config.check.g {
                Some(src) => {
                    let g = config::parse(src)?;
                    classify_growth(&|t| g.eval(t), config.check.k, &probes)?
                }
                None => classify_growth(&|t| problem.g_lambda(t), config.check.k, &probes)?,
            };
            let conditions = check_conditions(&problem.nonlinearity, &probes)?;
            w.report("check.json", CheckReport { classification, conditions })?;
        }
        Command::Gap => {
            let init = seeded_init(&grid, seed0)?;
            let attempt = match limiting_gap(&problem, &init, &config.solve_options()) {
                Ok(r) => Attempt::Converged { result: r },
                Err(e) if solver_failure(&e) => Attempt::Failed { error: e.to_string() },
                Err(e) => return Err(e.into()),
            };
            if attempt.failed() {
                exit_code = EXIT_NOT_CONVERGED;
            }
            w.report("gap.json", attempt)?;
        }
        Command::Sweep => {
            #[derive(Serialize)]
            struct SweepEntry {
                value: f64,
                #[serde(flatten)]
                entry: SolveEntry,
            }
            let jobs = config.jobs.max(1);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            let results: Vec<Result<SweepEntry, CliError>> = pool.install(|| {
                config
                    .sweep
                    .values
                    .par_iter()
                    .map(|&value| {
                        let cfg = sweep_config(config, value)?;
                        let problem = cfg.problem_config(&grid)?;
                        let (entry, _) = solve_one(&cfg, &problem, &grid, seed0)?;
                        Ok(SweepEntry { value, entry })
                    })
                    .collect()
            });
            let entries: Vec<SweepEntry> = results.into_iter().collect::<Result<_, _>>()?;
            if entries.iter().any(|e| e.entry.attempt_failed()) {
                exit_code = EXIT_NOT_CONVERGED;
            }
            w.report("sweep.json", entries)?;
        }
    }
    Ok(Outcome { exit_code, artifacts: w.artifacts })
}

#[derive(Serialize)]
struct SolveEntry {
    seed: u64,
    #[serde(flatten)]
    attempt: SolveAttempt,
}

#[derive(Serialize)]
#[serde(untagged)]
enum SolveAttempt {
    Pohozaev(Attempt<GroundState>),
    Nehari(Attempt<SolveReport>),
}

impl SolveEntry {
    fn attempt_failed(&self) -> bool {
        match &self.attempt {
            SolveAttempt::Pohozaev(a) => a.failed(),
            SolveAttempt::Nehari(a) => a.failed(),
        }
    }
}

fn solve_one(
    config: &RunConfig,
    problem: &ProblemConfig,
    grid: &std::sync::Arc<biharm_core::RadialGrid>,
    seed: u64,
) -> Result<(SolveEntry, Option<biharm_core::RadialField>), CliError> {
    let init = seeded_init(grid, seed)?;
    let opts = config.solve_options();
    let wrap = |e: Error| -> Result<String, CliError> {
        if solver_failure(&e) {
            Ok(e.to_string())
        } else {
            Err(e.into())
        }
    };
    Ok(match config.solver.mode {
        SolveMode::Pohozaev => match solve_ground_state(problem, &init, &opts) {
            Ok(gs) => {
                let u = gs.field().clone();
                (SolveEntry { seed, attempt: SolveAttempt::Pohozaev(Attempt::Converged { result: gs }) }, Some(u))
            }
            Err(e) => (SolveEntry { seed, attempt: SolveAttempt::Pohozaev(Attempt::Failed { error: wrap(e)? }) }, None),
        },
        SolveMode::Nehari => match minimize_nehari(problem, &init, &opts) {
            Ok(r) => {
                let u = r.field().clone();
                (SolveEntry { seed, attempt: SolveAttempt::Nehari(Attempt::Converged { result: r }) }, Some(u))
            }
            Err(e) => (SolveEntry { seed, attempt: SolveAttempt::Nehari(Attempt::Failed { error: wrap(e)? }) }, None),
        },
    })
}

fn sweep_config(config: &RunConfig, value: f64) -> Result<RunConfig, CliError> {
    use config::{NonlinearityChoice, PotentialSpec, SweepParam};
    let mut cfg = config.clone();
    match config.sweep.param {
        SweepParam::Lambda => cfg.problem.lambda = value,
        SweepParam::Gamma => match &mut cfg.problem.potential {
            PotentialSpec::Constant { gamma } => *gamma = value,
            PotentialSpec::Radial { .. } => {
                return Err(CliError::Config("gamma sweep needs a constant potential".into()));
            }
        },
        SweepParam::Theta => match &mut cfg.problem.nonlinearity {
            NonlinearityChoice::ExactGrowth { theta } => *theta = value,
            _ => return Err(CliError::Config("theta sweep needs the exact_growth nonlinearity".into())),
        },
    }
    Ok(cfg)
}
