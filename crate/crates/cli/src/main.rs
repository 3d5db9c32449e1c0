use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use levy_probe::asymptotics::AsymptoticReport;
use levy_probe::estimate::{estimate_phi_curve, estimate_psi_threshold, mle_psi, PsiEstimate, PsiMethod};
use levy_probe::harness::{builtin, list_scenarios, run_with_threads, ExperimentConfig, ToolConfig};
use levy_probe::simulate::{fmt_f64, simulate_probed_workload, ProbedSample};
use levy_probe::{Error, Result};

#[derive(Parser)]
#[command(name = "levy-probe", version, about = "Inference for Levy-driven queues from probed workload samples")]
struct Cli {
    /// Worker threads for replicated runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probe rate.
    #[arg(long)]
    xi: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a probed workload sample and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of probe transitions.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate psi and the exponent curve from a sample CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Sample CSV written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = ["mle", "threshold", "oracle"])]
        psi_method: Option<String>,
        /// Comma-separated alpha grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// The sample comes from a time grid, so its zeros are not exact.
        #[arg(long)]
        grid_sample: bool,
    },
    /// Asymptotic variance constants on an alpha grid.
    Asymptotics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["exact-mm1", "plugin", "gpk"])]
        backend: Option<String>,
        #[arg(long, value_parser = ["mle", "threshold", "oracle"])]
        psi_method: Option<String>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Sample CSV feeding the plug-in backend; simulated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run a replicated experiment.
    Experiment {
        /// Built-in scenario name (see `list-scenarios`).
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_parser = ["exact-mm1", "plugin", "gpk"])]
        backend: Option<String>,
        #[arg(long, value_parser = ["mle", "threshold", "oracle"])]
        psi_method: Option<String>,
        /// Comma-separated probe rates.
        #[arg(long, value_delimiter = ',')]
        xi: Option<Vec<f64>>,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

fn tool_config(common: &Common) -> Result<ToolConfig> {
    let mut cfg = match &common.config {
        Some(p) => ToolConfig::load(p)?,
        None => ToolConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(x) = common.xi {
        cfg.xi = x;
    }
    Ok(cfg)
}

/// Writes `bytes` to `dir/name`, or to stdout when no directory is given.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            info!("wrote {}", p.display());
        }
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn read_sample(path: &Path, xi: f64, exact: bool) -> Result<ProbedSample> {
    let f = fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    ProbedSample::read_csv(BufReader::new(f), xi, exact)
}

fn simulate(common: Common, n: Option<usize>) -> Result<()> {
    let mut cfg = tool_config(&common)?;
    if let Some(n) = n {
        cfg.n = n;
    }
    let sample = simulate_probed_workload(&cfg.simulation()?)?;
    let mut buf = Vec::new();
    sample.write_csv(&mut buf)?;
    emit(common.out.as_deref(), "sample.csv", &buf)
}

fn estimate(
    common: Common,
    input: PathBuf,
    psi_method: Option<String>,
    alphas: Option<Vec<f64>>,
    grid_sample: bool,
) -> Result<()> {
    let mut cfg = tool_config(&common)?;
    if let Some(m) = psi_method {
        cfg.psi_method = m;
    }
    if let Some(a) = alphas {
        cfg.alphas = a;
    }
    let sample = read_sample(&input, cfg.xi, !grid_sample)?;
    let psi = match cfg.psi_method.parse::<PsiMethod>()? {
        PsiMethod::Mle => mle_psi(&sample, cfg.psi_space())?,
        PsiMethod::ThresholdMoment => estimate_psi_threshold(&sample, cfg.m, cfg.tau, cfg.psi_bar)?.0,
        PsiMethod::Oracle => PsiEstimate::oracle(cfg.model()?.psi(cfg.xi)?),
    };
    let curve = estimate_phi_curve(&sample, &psi, &cfg.alphas)?;
    let mut csv = Vec::new();
    writeln!(csv, "alpha,phi_hat")?;
    for (a, v) in curve.alphas.iter().zip(&curve.values) {
        writeln!(csv, "{},{}", fmt_f64(*a), fmt_f64(*v))?;
    }
    let mut summary = Vec::new();
    writeln!(summary, "psi_hat={}", fmt_f64(psi.value))?;
    writeln!(summary, "method={}", psi.method)?;
    writeln!(summary, "psi_lo={}", fmt_f64(psi.space.lo))?;
    writeln!(summary, "psi_hi={}", fmt_f64(psi.space.hi))?;
    writeln!(summary, "at_boundary={}", psi.at_boundary)?;
    if let Some(v) = psi.variance {
        writeln!(summary, "sigma_xi_sq={}", fmt_f64(v))?;
    }
    writeln!(summary, "n={}", sample.n())?;
    match common.out.as_deref() {
        Some(dir) => {
            emit(Some(dir), "phi_curve.csv", &csv)?;
            emit(Some(dir), "psi.txt", &summary)
        }
        None => {
            io::stderr().write_all(&summary)?;
            io::stdout().write_all(&csv)?;
            Ok(())
        }
    }
}

fn asymptotics(
    common: Common,
    backend: Option<String>,
    psi_method: Option<String>,
    alphas: Option<Vec<f64>>,
    input: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = tool_config(&common)?;
    if let Some(b) = backend {
        cfg.backend = b;
    }
    if let Some(m) = psi_method {
        cfg.psi_method = m;
    }
    if let Some(a) = alphas {
        cfg.alphas = a;
    }
    let model = cfg.model()?;
    let sample = match &input {
        Some(p) => Some(read_sample(p, cfg.xi, true)?),
        None => None,
    };
    let backend = cfg.backend(&model, sample.as_ref())?;
    let method: PsiMethod = cfg.psi_method.parse()?;
    let report = AsymptoticReport::compute(&backend, &model, cfg.xi, &cfg.alphas, method)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    emit(common.out.as_deref(), "asymptotics.csv", &buf)?;
    if report.sigma.is_some() && common.out.is_some() {
        let mut buf = Vec::new();
        report.write_sigma_csv(&mut buf)?;
        emit(common.out.as_deref(), "sigma.csv", &buf)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    scenario: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    reps: Option<usize>,
    backend: Option<String>,
    psi_method: Option<String>,
    xi: Option<Vec<f64>>,
    threads: Option<usize>,
) -> Result<()> {
    let mut cfg = match (&config, &scenario) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(name)) => builtin(name)
            .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}; see list-scenarios")))?,
        (None, None) => return Err(Error::Config("give --scenario or --config".into())),
    };
    if let (Some(_), Some(name)) = (&config, &scenario) {
        if *name != cfg.scenario {
            return Err(Error::Config(format!(
                "--scenario {name} conflicts with the config's scenario {}",
                cfg.scenario
            )));
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = reps {
        cfg.reps = r;
    }
    if let Some(b) = backend {
        cfg.backend = b;
    }
    if let Some(m) = psi_method {
        cfg.psi_method = m;
    }
    if let Some(x) = xi {
        cfg.xi = x;
    }
    if let Some(o) = &out {
        cfg.out = o.display().to_string();
    }
    if cfg.out.is_empty() {
        cfg.out = format!("results/{}", cfg.scenario);
    }
    cfg.validate()?;
    let result = run_with_threads(&cfg, threads)?;
    let files = result.write(Path::new(&cfg.out), threads)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
    }
    match cli.command {
        Command::Simulate { common, n } => simulate(common, n),
        Command::Estimate {
            common,
            input,
            psi_method,
            alphas,
            grid_sample,
        } => estimate(common, input, psi_method, alphas, grid_sample),
        Command::Asymptotics {
            common,
            backend,
            psi_method,
            alphas,
            input,
        } => asymptotics(common, backend, psi_method, alphas, input),
        Command::Experiment {
            scenario,
            config,
            seed,
            out,
            reps,
            backend,
            psi_method,
            xi,
        } => experiment(scenario, config, seed, out, reps, backend, psi_method, xi, cli.threads),
        Command::ListScenarios => {
            for (name, desc) in list_scenarios() {
                println!("{name}\t{desc}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
