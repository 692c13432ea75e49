use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mfgraph::estimator::{recover, score};
use mfgraph::experiment::{self, CellResult, ExperimentSpec, Harness, Sweep};
use mfgraph::oracle::{approximation_residuals, environment_diagnostics, residual_csv_row, RESIDUAL_CSV_HEADER};
use mfgraph::simulator::Simulator;
use mfgraph::{svg, trajectory_io};
use mfgraph::{CommunityLayout, Environment, ModelParams, OracleOptions, OracleQuantities, SimConfig, ThetaEncoding};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "mfgraph", version, about = "Simulate interacting binary chains and recover their communities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a random environment and write it as JSON.
    Env(EnvArgs),
    /// Simulate one trajectory.
    Simulate(SimulateArgs),
    /// Recover communities from a trajectory file.
    Estimate(EstimateArgs),
    /// Exact means and covariances of an environment.
    Oracle(OracleArgs),
    /// Monte Carlo estimate of PER and MMP for one cell.
    Mc(McArgs),
    /// PER over an (N, T) grid.
    Heatmap(GridArgs),
    /// PER and MMP while one parameter varies.
    Sweep(GridArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// JSON file with n, r_plus, beta, lambda, p; inline flags override it
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Number of components [default: 50]
    #[arg(long)]
    n: Option<usize>,
    /// Excitatory proportion [default: 0.5]
    #[arg(long = "r-plus")]
    r_plus: Option<f64>,
    /// Spontaneous activity level, mu = lambda * beta [default: 0.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Memory loss parameter [default: 0.5]
    #[arg(long)]
    lambda: Option<f64>,
    /// Edge probability [default: 0.5]
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args, Debug)]
struct Output {
    /// Output file; standard output when absent
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnvArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Randomly permute community labels
    #[arg(long)]
    shuffle: bool,
    /// Encoding of theta rows
    #[arg(long, value_enum, default_value_t = Encoding::Hex)]
    encoding: Encoding,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Environment file; sampled from --seed when absent
    #[arg(long, value_name = "FILE")]
    env: Option<PathBuf>,
    /// Number of recorded steps
    #[arg(long)]
    t: usize,
    /// Discarded steps [default: ceil((ln N + ln 1e6) / ln(1/(1-lambda)))]
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Trajectory file (CSV or binary)
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Environment file holding the true layout
    #[arg(long, value_name = "FILE", conflicts_with = "layout")]
    env: Option<PathBuf>,
    /// JSON array of true labels (+1 / -1)
    #[arg(long, value_name = "FILE")]
    layout: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Environment file; sampled from --seed when absent
    #[arg(long, value_name = "FILE")]
    env: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the lag-0 and lag-1 covariance matrices
    #[arg(long)]
    matrices: bool,
    /// Write the residual diagnostics row to this CSV file
    #[arg(long, value_name = "FILE")]
    residuals: Option<PathBuf>,
    #[arg(long, default_value_t = mfgraph::oracle::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = mfgraph::oracle::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = mfgraph::oracle::DEFAULT_MAX_N)]
    max_n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed burn-in for every cell [default: per-cell rule]
    #[arg(long)]
    burn_in: Option<usize>,
    /// Worker threads [default: all cores]
    #[arg(long, env = "MFGRAPH_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    t: usize,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Experiment spec JSON; replaces the grid flags
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Comma-separated T values
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    t_grid: Vec<usize>,
    /// Comma-separated N values (heatmap)
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
    n_grid: Vec<usize>,
    /// Swept parameter (sweep): n, r_plus, beta, lambda or p
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values of the swept parameter
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Svg,
    Binary,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Encoding {
    Hex,
    Bits,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn check_format(format: Format, allowed: &[Format], command: &str) -> Outcome<()> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        usage(format!("{command} does not support --format {format:?}").to_lowercase())
    }
}

impl ModelArgs {
    fn resolve(&self) -> Outcome<ModelParams> {
        let mut params = match &self.params {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<ModelParams>(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => ModelParams::defaults(),
        };
        let overrides = [("r_plus", self.r_plus), ("beta", self.beta), ("lambda", self.lambda), ("p", self.p)];
        if let Some(n) = self.n {
            params = params.with_n(n).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        for (name, value) in overrides {
            if let Some(v) = value {
                params = params.with(name, v).map_err(|e| Failure::Usage(e.to_string()))?;
            }
        }
        Ok(params)
    }
}

fn emit(out: &Output, bytes: &[u8]) -> anyhow::Result<()> {
    match &out.out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

// Summary goes to stdout unless stdout already carries the data.
fn summary(out: &Output, line: String) {
    if out.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn load_or_sample(env: &Option<PathBuf>, model: &ModelArgs, seed: u64) -> Outcome<Environment> {
    match env {
        Some(path) => Ok(Environment::read_file(path).with_context(|| format!("reading {}", path.display()))?),
        None => {
            let params = model.resolve()?;
            Ok(Environment::sample(&params, &CommunityLayout::canonical(&params), seed).map_err(anyhow::Error::from)?)
        }
    }
}

fn run_env(a: EnvArgs) -> Outcome<()> {
    let params = a.model.resolve()?;
    let layout =
        if a.shuffle { CommunityLayout::shuffled(&params, a.seed) } else { CommunityLayout::canonical(&params) };
    let env = Environment::sample(&params, &layout, a.seed).map_err(anyhow::Error::from)?;
    let encoding = match a.encoding {
        Encoding::Hex => ThetaEncoding::Hex,
        Encoding::Bits => ThetaEncoding::Bits,
    };
    let mut text = env.to_json(encoding).map_err(anyhow::Error::from)?;
    text.push('\n');
    emit(&a.output, text.as_bytes())?;
    summary(&a.output, format!("environment N={} edges={} seed={}", env.n(), env.edge_count(), a.seed));
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Outcome<()> {
    check_format(a.format, &[Format::Csv, Format::Binary], "simulate")?;
    if a.t == 0 {
        return usage("--t must be at least 1");
    }
    let env = load_or_sample(&a.env, &a.model, a.seed)?;
    let mut config = SimConfig::new(a.t, a.seed);
    config.burn_in = a.burn_in;
    let traj = Simulator::new(&env).simulate(&config);
    let mut buf = Vec::new();
    match a.format {
        Format::Binary => trajectory_io::write_binary(&traj, &mut buf),
        _ => trajectory_io::write_csv(&traj, &mut buf),
    }
    .map_err(anyhow::Error::from)?;
    emit(&a.output, &buf)?;
    let s = traj.summarize();
    summary(
        &a.output,
        format!("simulated N={} T={} burn_in={} grand_mean={:.6}", traj.n(), traj.t(), traj.burn_in(), s.grand_mean),
    );
    Ok(())
}

fn run_estimate(a: EstimateArgs) -> Outcome<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let traj = trajectory_io::read_any(&bytes).with_context(|| format!("parsing {}", a.input.display()))?;
    let layout = match (&a.env, &a.layout) {
        (Some(path), _) => {
            Some(Environment::read_file(path).with_context(|| format!("reading {}", path.display()))?.layout().clone())
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let labels: Vec<i8> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Some(CommunityLayout::from_labels(labels).map_err(anyhow::Error::from)?)
        }
        (None, None) => None,
    };
    let rec = recover(&traj).map_err(anyhow::Error::from)?;
    let scored = match &layout {
        Some(l) => Some(score(&rec.labels_hat, l).map_err(anyhow::Error::from)?),
        None => None,
    };
    let out = json!({
        "sigma_hat": rec.sigma_hat,
        "centroids": [rec.centroids.0, rec.centroids.1],
        "labels_hat": rec.labels_hat,
        "exact": scored.map(|s| s.exact),
        "misclassified_fraction": scored.map(|s| s.misclassified_fraction),
    });
    emit(&a.output, format!("{}\n", serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?).as_bytes())?;
    let plus = rec.labels_hat.iter().filter(|&&l| l == 1).count();
    let tail = match scored {
        Some(s) => format!(" exact={} misclassified={:.4}", s.exact, s.misclassified_fraction),
        None => String::new(),
    };
    summary(&a.output, format!("estimated N={} T={} plus={plus}{tail}", traj.n(), traj.t()));
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Outcome<()> {
    let env = load_or_sample(&a.env, &a.model, a.seed)?;
    let opts = OracleOptions { tol: a.tol, max_iter: a.max_iter, max_n: a.max_n };
    let oq = OracleQuantities::compute(&env, &opts).map_err(anyhow::Error::from)?;
    let constants = mfgraph::TheoreticalConstants::from_params(env.params());
    let res = approximation_residuals(&env, &oq, &constants);
    let diag = environment_diagnostics(&env, &oq.var_vec, &constants);
    let mut value = oq.to_json(a.matrices);
    value["constants"] = serde_json::to_value(constants).map_err(anyhow::Error::from)?;
    emit(&a.output, format!("{}\n", serde_json::to_string_pretty(&value).map_err(anyhow::Error::from)?).as_bytes())?;
    if let Some(path) = &a.residuals {
        let text = format!("{RESIDUAL_CSV_HEADER}\n{}\n", residual_csv_row(&env, &oq, &res, &diag));
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    summary(
        &a.output,
        format!(
            "oracle N={} iterations={} residual={:.3e} sigma_sup_err={:.3e}",
            env.n(),
            oq.iterations,
            oq.residual,
            res.sigma_supnorm
        ),
    );
    Ok(())
}

fn write_cells(
    format: Format,
    spec: &ExperimentSpec,
    cells: &[CellResult],
    sweep: Option<&str>,
) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, cells)?;
            buf.push(b'\n');
        }
        Format::Svg => buf.extend(
            match sweep {
                Some(param) => svg::sweep_curves(cells, param),
                None => svg::heatmap(cells),
            }
            .into_bytes(),
        ),
        _ => experiment::write_csv(&mut buf, spec, cells)?,
    }
    Ok(buf)
}

fn harness(run: &RunArgs) -> Outcome<Harness> {
    if run.threads == Some(0) {
        return usage("--threads must be at least 1");
    }
    Ok(Harness::new(run.threads))
}

fn run_mc(a: McArgs) -> Outcome<()> {
    check_format(a.format, &[Format::Csv, Format::Json], "mc")?;
    let params = a.model.resolve()?;
    let mut spec = ExperimentSpec::single(params, a.t, a.run.replicas, a.run.seed);
    spec.burn_in = a.run.burn_in;
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let cells = harness(&a.run)?.run(&spec).map_err(anyhow::Error::from)?;
    emit(&a.output, &write_cells(a.format, &spec, &cells, None)?)?;
    let c = &cells[0];
    summary(
        &a.output,
        format!(
            "mc N={} T={} replicas={} per_hat={:.4} mmp_hat={:.4} ({:.1}s)",
            params.n(),
            a.t,
            c.replicas,
            c.per_hat,
            c.mmp_hat,
            c.wall_time_s
        ),
    );
    Ok(())
}

fn grid_spec(a: &GridArgs, sweep: bool) -> Outcome<ExperimentSpec> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            ExperimentSpec::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut spec = ExperimentSpec::single(a.model.resolve()?, 0, a.run.replicas, a.run.seed);
            spec.t_grid = a.t_grid.clone();
            spec.burn_in = a.run.burn_in;
            if sweep {
                let Some(param) = &a.param else { return usage("sweep needs --param and --values (or --spec)") };
                if a.values.is_empty() {
                    return usage("sweep needs --values");
                }
                spec.sweep = Some(Sweep { param: param.clone(), values: a.values.clone() });
            } else {
                spec.n_grid = Some(a.n_grid.clone());
            }
            spec
        }
    };
    spec.cells().map_err(|e| Failure::Usage(e.to_string()))?;
    if sweep && spec.sweep.is_none() {
        return usage("spec has no sweep");
    }
    if !sweep && spec.n_grid.is_none() {
        return usage("spec has no n_grid");
    }
    Ok(spec)
}

fn run_grid(a: GridArgs, sweep: bool) -> Outcome<()> {
    let name = if sweep { "sweep" } else { "heatmap" };
    check_format(a.format, &[Format::Csv, Format::Json, Format::Svg], name)?;
    let spec = grid_spec(&a, sweep)?;
    let h = harness(&a.run)?;
    let cells = if sweep { h.run_sweep(&spec) } else { h.run_heatmap(&spec) }.map_err(anyhow::Error::from)?;
    let param = spec.sweep.as_ref().map(|s| s.param.as_str());
    emit(&a.output, &write_cells(a.format, &spec, &cells, param)?)?;
    let wall: f64 = cells.iter().map(|c| c.wall_time_s).sum();
    summary(&a.output, format!("{name} cells={} replicas={} ({wall:.1}s)", cells.len(), spec.replicas));
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Env(a) => run_env(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Mc(a) => run_mc(a),
        Command::Heatmap(a) => run_grid(a, false),
        Command::Sweep(a) => run_grid(a, true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
