use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mkl_forge::bounds::{self, BoundInputs, Family};
use mkl_forge::harness::dataset::{load_dataset, Dataset, Standardizer};
use mkl_forge::harness::experiment::{self, kernel_specs, GridPoint, Method, MetricsReport};
use mkl_forge::harness::{output, Algorithm, ExperimentConfig, Task};
use mkl_forge::kernels::{build_bank, Degree};
use mkl_forge::mkl::FeasibleRegion;
use mkl_forge::{BaseKernelBank, Error};

#[derive(Parser)]
#[command(name = "mkl-forge", version, about = "Multiple kernel learning experiments")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
    /// Search the final-fit lambda separately from the kernel-learning lambda.
    #[arg(long)]
    decouple_lambda: bool,
}

#[derive(Subcommand)]
enum Command {
    /// CV selection, repeated splits and baselines; writes all result files.
    Run(ConfigArg),
    /// CV table for the configured algorithm.
    Cv(ConfigArg),
    /// Error against lambda for both degrees.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', required = true)]
        lambda_grid: Vec<f64>,
    },
    /// Rademacher and margin bounds.
    Bounds {
        #[arg(long)]
        p: usize,
        #[arg(long = "R")]
        r: f64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value = "linear")]
        family: String,
        /// Empirical margin loss; adds the generalization bound to the output.
        #[arg(long)]
        margin_loss: Option<f64>,
    },
    /// Monte-Carlo curvature constants on the full standardized dataset.
    Curvature {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n_samples: usize,
        /// Radius; defaults to the first entry of the config's Lambda grid.
        #[arg(long = "Lambda")]
        radius: Option<f64>,
        /// Also probe the Hessian sign at this lambda.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 200)]
        probe_dirs: usize,
    },
    /// One solver run on the full standardized dataset.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "Lambda")]
        radius: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
}

enum Failure {
    Config(Error),
    Data(Error),
    Run(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Run(Error::Diverged) => 4,
            Failure::Run(Error::Config(_) | Error::InvalidArgument(_)) => 2,
            Failure::Run(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Run(e) => e,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load(cli: &Cli, arg: &ConfigArg) -> Outcome<(ExperimentConfig, Dataset)> {
    let mut cfg = ExperimentConfig::from_file(&arg.config).map_err(Failure::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.decouple_lambda |= arg.decouple_lambda;
    cfg.validate().map_err(Failure::Config)?;
    let mut ds = load_dataset(&cfg.dataset.path, cfg.dataset.format).map_err(Failure::Data)?;
    if cfg.is_classification() {
        ds = ds.into_binary().map_err(Failure::Data)?;
    }
    Ok((cfg, ds))
}

fn load_path(cli: &Cli, path: &Path) -> Outcome<(ExperimentConfig, Dataset)> {
    load(cli, &ConfigArg { config: path.to_path_buf(), decouple_lambda: false })
}

fn full_bank(cfg: &ExperimentConfig, ds: &Dataset) -> Outcome<BaseKernelBank> {
    let x = Standardizer::fit(&ds.x)?.apply(&ds.x)?;
    Ok(build_bank(&kernel_specs(cfg, ds), &x, None)?)
}

fn summary_line(r: &MetricsReport) {
    println!(
        "{:<9} d={} rmse {:.4} ± {:.4}  msf {:.4} ± {:.4}  ({}/{} splits)",
        r.method,
        r.degree,
        r.rmse_mean,
        r.rmse_std,
        r.msf_mean,
        r.msf_std,
        r.effective_splits,
        r.rmse_per_split.len()
    );
}

fn execute(cli: &Cli) -> Outcome<()> {
    let out = &cli.out_dir;
    match &cli.command {
        Command::Run(arg) => {
            let (cfg, ds) = load(cli, arg)?;
            let res = experiment::run_experiment(&cfg, &ds)?;
            output::emit_experiment(out, &cfg, &res)?;
            res.reports.iter().for_each(summary_line);
        }
        Command::Cv(arg) => {
            let (cfg, ds) = load(cli, arg)?;
            let cv = experiment::run_cv(&cfg, &ds, Method::new(cfg.algorithm, cfg.degree()))?;
            output::emit_cv(out, &cfg, std::slice::from_ref(&cv))?;
            match cv.selected_point() {
                Some(p) => println!("selected {}", serde_json::to_string(p).map_err(Error::from)?),
                None => return Err(Failure::Run(Error::Diverged)),
            }
        }
        Command::Sweep { config, lambda_grid } => {
            let (cfg, ds) = load(cli, config)?;
            if lambda_grid.iter().any(|&l| !(l > 0.0)) {
                return Err(Failure::Config(Error::Config("lambda grid entries must be positive".into())));
            }
            let rows = experiment::lambda_sweep(&cfg, &ds, lambda_grid, &[Degree::Linear, Degree::Quadratic])?;
            output::emit_sweep(out, &cfg, &rows)?;
        }
        Command::Bounds { p, r, m, rho, delta, family, margin_loss } => {
            let family = match family.as_str() {
                "linear" => Family::Linear,
                "polynomial" => Family::Polynomial,
                other => return Err(Failure::Config(Error::Config(format!("unknown family {other}")))),
            };
            let inputs = BoundInputs { p: *p, r: *r, m: *m, rho: *rho, delta: *delta, family };
            let rad = bounds::rademacher_bound(&inputs).map_err(Failure::Config)?;
            let gen = margin_loss.map(|l| bounds::generalization_bound(&inputs, l)).transpose().map_err(Failure::Config)?;
            let v = json!({ "inputs": inputs, "rademacher_bound": rad, "generalization_bound": gen });
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            output::emit_json(out, "bounds.json", &v)?;
        }
        Command::Curvature { config, n_samples, radius, lambda, probe_dirs } => {
            let (cfg, ds) = load_path(cli, config)?;
            let bank = full_bank(&cfg, &ds)?;
            let radius = radius.unwrap_or(cfg.radius_grid[0]);
            let region = FeasibleRegion::constant(bank.num_kernels(), cfg.mu0, radius, cfg.q).map_err(Failure::Config)?;
            let consts = bounds::estimate_curvature_constants(&bank, &region, *n_samples, cfg.seed)?;
            let probe = lambda
                .map(|l| bounds::hessian_sign_probe(&bank, &region.default_start(), l, &ds.y, *probe_dirs, cfg.seed))
                .transpose()?;
            let v = json!({ "constants": consts, "lambda": lambda, "sign_probe": probe });
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            output::emit_json(out, "curvature.json", &v)?;
        }
        Command::Solve { config, algorithm, lambda, radius, beta } => {
            let (mut cfg, ds) = load_path(cli, config)?;
            if matches!(algorithm, Algorithm::Bm | Algorithm::Unif) {
                return Err(Failure::Config(Error::Config("solve needs a learning algorithm".into())));
            }
            cfg.algorithm = *algorithm;
            if *algorithm == Algorithm::SvmGmkl {
                cfg.task = Task::SvmClassification;
            } else if cfg.task == Task::SvmClassification {
                cfg.task = Task::Classification;
            }
            if algorithm.fixed_degree().is_some() {
                cfg.degree = None;
            }
            cfg.validate().map_err(Failure::Config)?;
            let bank = full_bank(&cfg, &ds)?;
            let method = Method::new(*algorithm, cfg.degree());
            let point = GridPoint {
                radius: algorithm.uses_radius().then(|| radius.unwrap_or(cfg.radius_grid[0])),
                beta: algorithm.uses_beta().then(|| beta.unwrap_or(cfg.beta_grid[0])),
                ..GridPoint::lambda_only(*lambda)
            };
            let res = experiment::learn(&cfg, method, &point, &bank, &ds.y)?;
            let report = MetricsReport::trace_only(method, res.trace.clone());
            std::fs::create_dir_all(out).map_err(Error::from)?;
            std::fs::write(out.join("trace.jsonl"), output::trace_jsonl(std::slice::from_ref(&report))?)
                .map_err(Error::from)?;
            let v = json!({
                "algorithm": algorithm.name(),
                "degree": method.degree.as_u8(),
                "point": point,
                "mu_star": res.mu_star,
                "objective": res.final_objective(),
                "iterations": res.iterations,
                "status": res.status,
                "residual": res.residual,
            });
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            output::emit_json(out, "solve.json", &v)?;
            if res.status == mkl_forge::mkl::Status::Diverged {
                return Err(Failure::Run(Error::Diverged));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.code())
        }
    }
}
