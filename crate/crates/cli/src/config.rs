use std::path::PathBuf;
use std::sync::Arc;

use biharm_core::model::{NonlinearitySpec, OrderDim, Potential, ProblemConfig};
use biharm_core::solvers::{SolveMode, SolveOptions};
use biharm_core::{build_grid, RadialGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    #[default]
    Solve,
    Rearrange,
    Moser,
    Ratio,
    Check,
    Gap,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Rearrange => "rearrange",
            Command::Moser => "moser",
            Command::Ratio => "ratio",
            Command::Check => "check",
            Command::Gap => "gap",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { gamma: f64 },
    /// Expression in `t`, read as the radius.
    Radial { expr: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityChoice {
    ExpCritical,
    ExactGrowth {
        theta: f64,
    },
    User {
        f: String,
        #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
        big_f: Option<String>,
        alpha0: f64,
        ar_mu: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub order_dim: OrderDim,
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub nonlinearity: NonlinearityChoice,
    pub overflow_cap: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            order_dim: OrderDim::Biharmonic4,
            lambda: 0.5,
            potential: PotentialSpec::Constant { gamma: 1.0 },
            nonlinearity: NonlinearityChoice::ExpCritical,
            overflow_cap: biharm_core::model::DEFAULT_OVERFLOW_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Defaults to 20 in R⁴ and 30 in R².
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { r_max: None, n_points: 2048 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub mode: SolveMode,
    pub max_iters: usize,
    pub tol: f64,
    pub rearrange_interval: usize,
    pub seeds: Vec<u64>,
    pub polish: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolverSpec {
            mode: SolveMode::Pohozaev,
            max_iters: o.max_iters,
            tol: o.tol,
            rearrange_interval: o.rearrange_interval,
            seeds: vec![1],
            polish: o.polish,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    /// Defaults to the problem's `g_λ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(rename = "K")]
    pub k: f64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec { g: None, k: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoserSpec {
    #[serde(rename = "K")]
    pub k: f64,
    pub b: Vec<f64>,
}

impl Default for MoserSpec {
    fn default() -> Self {
        MoserSpec { k: 1.0, b: vec![3.0, 5.0, 8.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSpec {
    /// Defaults to the threshold `R(F)`.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    pub budget: usize,
}

impl Default for RatioSpec {
    fn default() -> Self {
        RatioSpec { l: None, budget: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Gamma,
    Theta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { param: SweepParam::Lambda, values: vec![0.1, 0.3, 0.5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub check: CheckSpec,
    pub moser: MoserSpec,
    pub ratio: RatioSpec,
    pub sweep: SweepSpec,
    /// Field CSV for `rearrange`; a seeded field is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Solve,
            problem: ProblemSpec::default(),
            grid: GridSpec::default(),
            solver: SolverSpec::default(),
            check: CheckSpec::default(),
            moser: MoserSpec::default(),
            ratio: RatioSpec::default(),
            sweep: SweepSpec::default(),
            input: None,
            out_dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(src: &str) -> Result<Self, CliError> {
        serde_json::from_str(src).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn dimension(&self) -> usize {
        self.problem.order_dim.dimension().n()
    }

    pub fn build_grid(&self) -> Result<Arc<RadialGrid>, CliError> {
        let r_max = self.grid.r_max.unwrap_or(if self.dimension() == 4 { 20.0 } else { 30.0 });
        Ok(build_grid(r_max, self.grid.n_points, self.dimension())?)
    }

    pub fn problem_config(&self, grid: &RadialGrid) -> Result<ProblemConfig, CliError> {
        let p = &self.problem;
        let potential = match &p.potential {
            PotentialSpec::Constant { gamma } => Potential::constant(*gamma)?,
            PotentialSpec::Radial { expr } => Potential::radial(parse(expr)?, grid)?,
        };
        let nl = match &p.nonlinearity {
            NonlinearityChoice::ExpCritical => NonlinearitySpec::exp_critical(p.lambda, p.order_dim),
            NonlinearityChoice::ExactGrowth { theta } => NonlinearitySpec::exact_growth(*theta),
            NonlinearityChoice::User { f, big_f, alpha0, ar_mu } => {
                let big_f = big_f.as_deref().map(parse).transpose()?;
                NonlinearitySpec::user(parse(f)?, big_f, *alpha0, *ar_mu)?
            }
        };
        let mut cfg = ProblemConfig::new(p.order_dim, p.lambda, potential, nl)?;
        cfg.overflow_cap = p.overflow_cap;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.solver.max_iters,
            tol: self.solver.tol,
            rearrange_interval: self.solver.rearrange_interval,
            polish: self.solver.polish,
            ..SolveOptions::default()
        }
    }
}

pub(crate) fn parse(src: &str) -> Result<biharm_core::expr::Expr, CliError> {
    biharm_core::expr::parse_expression(src).map_err(|e| CliError::Config(format!("expression {src:?}: {e}")))
}
