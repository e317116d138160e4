use std::path::PathBuf;
use std::process::ExitCode;

use biharm_cli::config::{NonlinearityChoice, PotentialSpec, SweepParam};
use biharm_cli::{run, CliError, Command, RunConfig, EXIT_CONFIG};
use biharm_core::model::OrderDim;
use biharm_core::solvers::SolveMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biharm", version, about = "Radial ground states and Adams-type diagnostics for critical exponential growth")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Ground state by Pohozaev (default) or Nehari minimization
    Solve,
    /// Fourier rearrangement of a field with property checks
    Rearrange,
    /// Moser-sequence energy table
    Moser,
    /// Adams-ratio lower bound search
    Ratio,
    /// Growth classification and nonlinearity conditions
    Check,
    /// Ground-state levels m_V and m_infinity
    Gap,
    /// Solves over a list of parameter values
    Sweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dim {
    #[value(name = "4")]
    Four,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum NlKind {
    ExpCritical,
    ExactGrowth,
    User,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pohozaev,
    Nehari,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Lambda,
    Gamma,
    Theta,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for `sweep` (BIHARM_JOBS overrides)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    dim: Option<Dim>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Radial potential expression in t = r
    #[arg(long = "V", global = true)]
    potential: Option<String>,
    /// R_MAX:N_POINTS
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long, global = true)]
    nonlinearity: Option<NlKind>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// User nonlinearity f(t)
    #[arg(long, global = true)]
    f: Option<String>,
    /// Primitive F(t) of the user nonlinearity
    #[arg(long = "F", global = true)]
    big_f: Option<String>,
    #[arg(long, global = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true)]
    ar_mu: Option<f64>,
    #[arg(long, global = true)]
    overflow_cap: Option<f64>,

    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    rearrange_interval: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    no_polish: bool,

    /// Growth function g(t) for `check`
    #[arg(long, global = true)]
    g: Option<String>,
    #[arg(long = "K", global = true)]
    k: Option<f64>,
    /// Moser heights b_k
    #[arg(long, global = true, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    /// Principal-norm level for `ratio` (default R(F))
    #[arg(long = "L", global = true)]
    l: Option<f64>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    param: Option<Param>,
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
    /// Field CSV for `rearrange`
    #[arg(long, global = true)]
    input: Option<PathBuf>,
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let c = cli.common;
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.command = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Rearrange => Command::Rearrange,
        Cmd::Moser => Command::Moser,
        Cmd::Ratio => Command::Ratio,
        Cmd::Check => Command::Check,
        Cmd::Gap => Command::Gap,
        Cmd::Sweep => Command::Sweep,
    };
    if let Some(d) = c.out_dir {
        cfg.out_dir = d;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Ok(j) = std::env::var("BIHARM_JOBS") {
        cfg.jobs = j.trim().parse().map_err(|_| CliError::Config(format!("BIHARM_JOBS={j:?} is not a count")))?;
    }

    let p = &mut cfg.problem;
    if let Some(d) = c.dim {
        p.order_dim = match d {
            Dim::Four => OrderDim::Biharmonic4,
            Dim::Two => OrderDim::Laplace2,
        };
    }
    if let Some(l) = c.lambda {
        p.lambda = l;
    }
    if let Some(g) = c.gamma {
        p.potential = PotentialSpec::Constant { gamma: g };
    }
    if let Some(v) = c.potential {
        p.potential = PotentialSpec::Radial { expr: v };
    }
    if let Some(kind) = c.nonlinearity {
        p.nonlinearity = match kind {
            NlKind::ExpCritical => NonlinearityChoice::ExpCritical,
            NlKind::ExactGrowth => NonlinearityChoice::ExactGrowth { theta: 1.0 },
            NlKind::User => NonlinearityChoice::User { f: String::new(), big_f: None, alpha0: 1.0, ar_mu: 2.0 },
        };
    }
    if let Some(th) = c.theta {
        match &mut p.nonlinearity {
            NonlinearityChoice::ExactGrowth { theta } => *theta = th,
            _ => return Err(CliError::Config("--theta needs --nonlinearity exact-growth".into())),
        }
    }
    if c.f.is_some() || c.big_f.is_some() || c.alpha0.is_some() || c.ar_mu.is_some() {
        match &mut p.nonlinearity {
            NonlinearityChoice::User { f, big_f, alpha0, ar_mu } => {
                if let Some(v) = c.f {
                    *f = v;
                }
                if let Some(v) = c.big_f {
                    *big_f = Some(v);
                }
                if let Some(v) = c.alpha0 {
                    *alpha0 = v;
                }
                if let Some(v) = c.ar_mu {
                    *ar_mu = v;
                }
            }
            _ => return Err(CliError::Config("--f/--F/--alpha0/--ar-mu need --nonlinearity user".into())),
        }
    }
    if let Some(cap) = c.overflow_cap {
        p.overflow_cap = cap;
    }
    if let Some(g) = c.grid {
        let (r, n) = g.split_once(':').ok_or_else(|| CliError::Config(format!("--grid {g:?}: expected R_MAX:N_POINTS")))?;
        cfg.grid.r_max = Some(r.parse().map_err(|_| CliError::Config(format!("--grid: bad r_max {r:?}")))?);
        cfg.grid.n_points = n.parse().map_err(|_| CliError::Config(format!("--grid: bad n_points {n:?}")))?;
    }

    let s = &mut cfg.solver;
    if let Some(m) = c.mode {
        s.mode = match m {
            Mode::Pohozaev => SolveMode::Pohozaev,
            Mode::Nehari => SolveMode::Nehari,
        };
    }
    if let Some(v) = c.max_iters {
        s.max_iters = v;
    }
    if let Some(v) = c.tol {
        s.tol = v;
    }
    if let Some(v) = c.rearrange_interval {
        s.rearrange_interval = v;
    }
    if let Some(v) = c.seeds {
        s.seeds = v;
    }
    if c.no_polish {
        s.polish = false;
    }

    if let Some(g) = c.g {
        cfg.check.g = Some(g);
    }
    if let Some(k) = c.k {
        cfg.check.k = k;
        cfg.moser.k = k;
    }
    if let Some(b) = c.b {
        cfg.moser.b = b;
    }
    if let Some(l) = c.l {
        cfg.ratio.l = Some(l);
    }
    if let Some(b) = c.budget {
        cfg.ratio.budget = b;
    }
    if let Some(p) = c.param {
        cfg.sweep.param = match p {
            Param::Lambda => SweepParam::Lambda,
            Param::Gamma => SweepParam::Gamma,
            Param::Theta => SweepParam::Theta,
        };
    }
    if let Some(v) = c.values {
        cfg.sweep.values = v;
    }
    if let Some(i) = c.input {
        cfg.input = Some(i);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap uses exit code 2 for usage errors; here 2 means non-convergence
            let code = if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("biharm: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for path in &outcome.artifacts {
                println!("{}", path.display());
            }
            if outcome.exit_code != 0 {
                eprintln!("biharm: solver did not converge for every run; see the report");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("biharm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
