//! `esn`: generate, run, train and benchmark linear echo state networks.

mod settings;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use linres::bench::{
    connectivity_sweep, gen_mso, grid_search, memory_capacity_curve, timing_suite, BenchReport,
    GridOptions, GridSpec, McOptions, Method, TimingOptions, MSO_LENGTH,
};
use linres::dpg::DEFAULT_SIGMA;
use linres::scan::Engine;
use linres::{Distribution, EsnConfig, Model, TrainMethod, TrainOptions};

use settings::FileConfig;
use table::{num, read_series, write_columns, write_report};

#[derive(Parser)]
#[command(
    name = "esn",
    version,
    about = "Linear echo state networks with O(N) diagonal reservoirs"
)]
struct Cli {
    /// TOML file whose keys supply values for flags that are not given.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reservoir and write it as a model file.
    Gen(GenArgs),
    /// Run a model over an input CSV and write its states (and outputs).
    Run(RunArgs),
    /// Fit a readout on a CSV with targets and write the trained model.
    Train(TrainArgs),
    /// Benchmark suites.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct GenArgs {
    /// normal, diag, dpg-uniform, dpg-golden, dpg-noisy-golden or dpg-sim.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    units: Option<usize>,
    /// Spectral radius.
    #[arg(long)]
    sr: Option<f64>,
    /// Leak rate in (0, 1].
    #[arg(long)]
    leak: Option<f64>,
    #[arg(long, env = "ESN_SEED")]
    seed: Option<u64>,
    /// Noise level of dpg-noisy-golden.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    input_scaling: Option<f64>,
    /// Fraction of nonzero recurrent weights.
    #[arg(long)]
    connectivity: Option<f64>,
    /// Fraction of nonzero input weights.
    #[arg(long)]
    connectivity_in: Option<f64>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    d_out: Option<usize>,
    /// Add output feedback weights.
    #[arg(long)]
    feedback: bool,
    /// Train readouts without a bias term.
    #[arg(long)]
    no_bias: bool,
    /// Leading steps excluded from training.
    #[arg(long)]
    washout: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with columns u_0.. and, for teacher forcing, y_0..
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with columns u_0.. followed by y_0..
    #[arg(long)]
    data: PathBuf,
    /// Ridge strength; defaults to the model's ridge_alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// ridge, eet or gamma.
    #[arg(long)]
    method: Option<TrainMethod>,
    /// Fit in neuron coordinates, then map the readout to the eigenbasis.
    #[arg(long)]
    ewt: bool,
    /// Overrides the model's washout.
    #[arg(long)]
    washout: Option<usize>,
    /// Also write the predictions on the training span.
    #[arg(long, value_name = "CSV")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// MSO grid search.
    Mso(MsoArgs),
    /// Memory capacity curves.
    Mc(McArgs),
    /// Per-step and generation timings.
    Timing(TimingArgs),
    /// Memory at one delay against recurrent connectivity.
    Connectivity(ConnectivityArgs),
}

#[derive(Args)]
struct Common {
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, env = "ESN_SEED")]
    seed: Option<u64>,
    /// Output prefix; `<prefix>.csv` and `<prefix>.json` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MsoArgs {
    /// Task orders, `1..12` or `1,3,5`.
    #[arg(long)]
    tasks: Option<String>,
    /// Comma-separated methods or `all`.
    #[arg(long)]
    methods: Option<String>,
    /// Number of seeds, counted from --seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// table1 or small.
    #[arg(long)]
    grid: Option<String>,
    /// Collect states once per (seed, lr, ρ) and rescale them per input scaling.
    #[arg(long)]
    share_states: bool,
    #[arg(long)]
    units: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct McArgs {
    /// Reservoir sizes, `100,300` or `100..400` (doubling).
    #[arg(long)]
    units: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Largest delay; defaults to 2N.
    #[arg(long)]
    max_delay: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TimingArgs {
    /// Reservoir sizes, `128..4096` (doubling) or a list.
    #[arg(long)]
    units: Option<String>,
    /// Methods to time; `normal` times the dense step, the others the diagonal step.
    #[arg(long, alias = "methods")]
    paths: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Also time model construction.
    #[arg(long)]
    generation: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ConnectivityArgs {
    #[arg(long)]
    units: Option<usize>,
    /// Connectivity range `lo..hi`, sampled log-uniformly, or a list.
    #[arg(long)]
    range: Option<String>,
    /// Number of connectivities in a range.
    #[arg(long, default_value_t = 10)]
    points: usize,
    /// Delay to report; defaults to where the dense reservoir's memory falls below one half.
    #[arg(long)]
    delay: Option<usize>,
    #[command(flatten)]
    common: Common,
}

/// An error that exits with status 2 and the usage text.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_key<T: FromStr>(key: &str, value: Option<String>) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    value
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| usage(format!("config key {key}: {e}")))
        })
        .transpose()
}

fn parse_list<T: FromStr>(what: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| usage(format!("{what}: {s:?}: {e}")))
        })
        .collect()
}

fn parse_tasks(text: &str) -> Result<Vec<usize>> {
    let tasks = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| usage(format!("tasks: bad range {text:?}")))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| usage(format!("tasks: bad range {text:?}")))?;
            (lo..=hi).collect()
        }
        None => parse_list("tasks", text)?,
    };
    if tasks.is_empty() || tasks.iter().any(|k| !(1..=12).contains(k)) {
        return Err(usage(format!("tasks must lie in 1..12, got {text:?}")));
    }
    Ok(tasks)
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let sizes = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| usage(format!("units: bad range {text:?}")))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| usage(format!("units: bad range {text:?}")))?;
            if lo == 0 || lo > hi {
                return Err(usage(format!("units: bad range {text:?}")));
            }
            std::iter::successors(Some(lo), |n| n.checked_mul(2))
                .take_while(|n| *n <= hi)
                .collect()
        }
        None => parse_list("units", text)?,
    };
    if sizes.contains(&0) {
        return Err(usage("units must be positive"));
    }
    Ok(sizes)
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    if text.trim() == "all" {
        return Ok(Method::all().to_vec());
    }
    parse_list("methods", text)
}

fn parse_connectivities(text: &str, points: usize) -> Result<Vec<f64>> {
    let values = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| usage(format!("range: bad bound in {text:?}")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| usage(format!("range: bad bound in {text:?}")))?;
            if !(lo > 0.0 && lo <= hi) || points == 0 {
                return Err(usage(format!(
                    "range: need 0 < lo <= hi and points > 0, got {text:?}"
                )));
            }
            if points == 1 {
                vec![hi]
            } else {
                let (a, b) = (lo.ln(), hi.ln());
                (0..points)
                    .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                    .collect()
            }
        }
        None => parse_list("range", text)?,
    };
    if values.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
        return Err(usage("connectivities must lie in (0, 1]"));
    }
    Ok(values)
}

fn seed_list(base: u64, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    Ok((0..count as u64).map(|i| base + i).collect())
}

fn gen(args: GenArgs, file: FileConfig) -> Result<()> {
    let method = match args.method {
        Some(m) => m,
        None => parse_key("method", file.method)?.unwrap_or(Method::Normal),
    };
    let method = match (method, args.sigma) {
        (Method::Dpg(Distribution::NoisyGolden { .. }), flag) => {
            let sigma = flag.or(file.sigma).unwrap_or(DEFAULT_SIGMA);
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(usage(format!(
                    "--sigma must be a nonnegative number, got {sigma}"
                )));
            }
            Method::Dpg(Distribution::NoisyGolden { sigma })
        }
        (Method::Dpg(Distribution::Golden), Some(s)) if s == 0.0 => method,
        (m, Some(_)) => {
            return Err(usage(format!(
                "--sigma applies to dpg-noisy-golden only (dpg-golden accepts --sigma 0), not {m}"
            )))
        }
        (m, None) => m,
    };
    let defaults = EsnConfig::default();
    let config = EsnConfig {
        units: args.units.or(file.units).unwrap_or(defaults.units),
        d_in: args.d_in.or(file.d_in).unwrap_or(defaults.d_in),
        d_out: args.d_out.or(file.d_out).unwrap_or(defaults.d_out),
        spectral_radius: args.sr.or(file.sr).unwrap_or(defaults.spectral_radius),
        leak_rate: args.leak.or(file.leak).unwrap_or(defaults.leak_rate),
        input_scaling: args
            .input_scaling
            .or(file.input_scaling)
            .unwrap_or(defaults.input_scaling),
        connectivity_r: args
            .connectivity
            .or(file.connectivity)
            .unwrap_or(defaults.connectivity_r),
        connectivity_in: args
            .connectivity_in
            .or(file.connectivity_in)
            .unwrap_or(defaults.connectivity_in),
        ridge_alpha: file.alpha.unwrap_or(defaults.ridge_alpha),
        use_bias: !args.no_bias && file.bias.unwrap_or(defaults.use_bias),
        use_feedback: args.feedback || file.feedback.unwrap_or(defaults.use_feedback),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        washout: args.washout.or(file.washout).unwrap_or(defaults.washout),
        ..defaults
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let model = Model::generate(method, &config)?;
    model
        .save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn run(args: RunArgs, file: FileConfig) -> Result<()> {
    let engine = match args.engine {
        Some(e) => e,
        None => parse_key("engine", file.engine)?.unwrap_or_default(),
    };
    let model = load_model(&args.model)?;
    let series = read_series(&args.input)?;
    if series.inputs.ncols() != model.d_in() {
        anyhow::bail!(
            "{} has {} input columns but the model expects {}",
            args.input.display(),
            series.inputs.ncols(),
            model.d_in()
        );
    }
    let teacher = series
        .targets
        .as_ref()
        .map(|m| m.as_ref())
        .filter(|_| model.d_fb().is_some());
    let out = model.run(series.inputs.as_ref(), teacher, engine)?;
    let states = out.states.to_mat();
    let mut blocks = vec![("r", states.as_ref())];
    if let Some(y) = &out.outputs {
        blocks.push(("yhat", y.as_ref()));
    }
    write_columns(&args.out, &blocks)
}

fn train(args: TrainArgs, file: FileConfig) -> Result<()> {
    let mut model = load_model(&args.model)?;
    let method = match args.method {
        Some(m) => m,
        None => parse_key("train_method", file.train_method)?.unwrap_or(TrainMethod::Ridge),
    };
    let alpha = args
        .alpha
        .or(file.alpha)
        .unwrap_or(model.config.ridge_alpha);
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(usage(format!(
            "--alpha must be a nonnegative number, got {alpha}"
        )));
    }
    if args.ewt && method != TrainMethod::Ridge {
        return Err(usage("--ewt combines with --method ridge only"));
    }
    if let Some(w) = args.washout.or(file.washout) {
        model.config.washout = w;
    }
    let series = read_series(&args.data)?;
    let targets = series
        .targets
        .with_context(|| format!("{} has no target columns y_0..", args.data.display()))?;
    if series.inputs.ncols() != model.d_in() {
        anyhow::bail!(
            "{} has {} input columns but the model expects {}",
            args.data.display(),
            series.inputs.ncols(),
            model.d_in()
        );
    }
    let options = TrainOptions {
        method,
        alpha,
        ewt: args.ewt,
    };
    let predictions = model.train(series.inputs.as_ref(), targets.as_ref(), &options)?;
    let start = model.config.washout;
    let fitted = targets.subrows(start, predictions.nrows());
    let err = linres::bench::rmse(predictions.as_ref(), fitted)?;
    eprintln!(
        "training rmse {err:.6e} over steps {start}..{}",
        targets.nrows()
    );
    if let Some(path) = &args.predictions {
        write_columns(path, &[("yhat", predictions.as_ref())])?;
    }
    model
        .save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn prefix(common: &Common, name: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(name))
}

fn bench_mso(args: MsoArgs, file: FileConfig) -> Result<()> {
    let tasks = parse_tasks(
        args.tasks
            .as_deref()
            .or(file.tasks.as_deref())
            .unwrap_or("1..12"),
    )?;
    let methods = parse_methods(
        args.methods
            .as_deref()
            .or(file.methods.as_deref())
            .unwrap_or("all"),
    )?;
    let grid_name = args.grid.or(file.grid).unwrap_or_else(|| "table1".into());
    let grid = GridSpec::by_name(&grid_name).map_err(|e| usage(e.to_string()))?;
    let seeds = seed_list(
        args.common.seed.or(file.seed).unwrap_or(0),
        args.seeds.or(file.seeds).unwrap_or(10),
    )?;
    let options = GridOptions {
        units: args.units.or(file.units).unwrap_or(100),
        share_states: args.share_states || file.share_states.unwrap_or(false),
        jobs: args.common.jobs.or(file.jobs),
        use_bias: file.bias.unwrap_or(true),
    };
    let mut report = BenchReport::default();
    for &k in &tasks {
        let data = gen_mso(k, MSO_LENGTH)?;
        for &method in &methods {
            let r = grid_search(&data, &format!("MSO{k}"), method, &grid, &seeds, &options)?;
            eprintln!(
                "MSO{k} {method}: rmse {:.3e} ± {:.1e} ({:.0} ms)",
                r.row.rmse_mean, r.row.rmse_std, r.row.wall_ms
            );
            report.mso.push(r);
        }
    }
    let rows = report.mso.iter().map(|r| {
        let m = &r.row;
        vec![
            m.task.clone(),
            m.method.clone(),
            num(m.rmse_mean),
            num(m.rmse_std),
            num(m.best_lr),
            num(m.best_rho),
            num(m.best_scale),
            num(m.best_alpha),
            format!("{:.3}", m.wall_ms),
        ]
    });
    let header = [
        "task",
        "method",
        "rmse_mean",
        "rmse_std",
        "best_lr",
        "best_rho",
        "best_scale",
        "best_alpha",
        "wall_ms",
    ];
    write_report(
        &prefix(&args.common, "mso"),
        &header,
        rows.collect::<Vec<_>>(),
        &report,
    )
}

fn bench_mc(args: McArgs, file: FileConfig) -> Result<()> {
    let sizes = match args.units {
        Some(u) => parse_sizes(&u)?,
        None => vec![file.units.unwrap_or(100)],
    };
    let methods = parse_methods(
        args.methods
            .as_deref()
            .or(file.methods.as_deref())
            .unwrap_or("all"),
    )?;
    let seeds = seed_list(
        args.common.seed.or(file.seed).unwrap_or(0),
        args.seeds.or(file.seeds).unwrap_or(1),
    )?;
    let options = McOptions::default();
    let mut report = BenchReport::default();
    for &n in &sizes {
        let k_max = args.max_delay.or(file.max_delay).unwrap_or(2 * n);
        for &method in &methods {
            let rows = memory_capacity_curve(method, n, k_max, &seeds, &options)?;
            let total: f64 = rows.iter().map(|r| r.mc).sum();
            eprintln!("N={n} {method}: total memory capacity {total:.3}");
            report.mc.extend(rows);
        }
    }
    let rows: Vec<Vec<String>> = report
        .mc
        .iter()
        .map(|r| {
            vec![
                r.units.to_string(),
                r.method.clone(),
                r.delay.to_string(),
                num(r.mc),
            ]
        })
        .collect();
    write_report(
        &prefix(&args.common, "mc"),
        &["N", "method", "delay", "mc"],
        rows,
        &report,
    )
}

fn bench_timing(args: TimingArgs, file: FileConfig) -> Result<()> {
    let sizes = parse_sizes(args.units.as_deref().unwrap_or("128..4096"))?;
    let methods = parse_methods(
        args.paths
            .as_deref()
            .or(file.methods.as_deref())
            .unwrap_or("normal,diag"),
    )?;
    let options = TimingOptions {
        repeats: args.repeats.or(file.repeats).unwrap_or(5).max(1),
        generation: args.generation,
        seed: args.common.seed.or(file.seed).unwrap_or(0),
        ..TimingOptions::default()
    };
    let report = BenchReport {
        timing: timing_suite(&sizes, &methods, &options)?,
        ..BenchReport::default()
    };
    let rows: Vec<Vec<String>> = report
        .timing
        .iter()
        .map(|r| {
            vec![
                r.units.to_string(),
                r.method.clone(),
                fmt_opt(r.generation_ms),
                num(r.step_us),
                num(r.readout_us),
            ]
        })
        .collect();
    let header = ["N", "method", "generation_ms", "step_us", "readout_us"];
    write_report(&prefix(&args.common, "timing"), &header, rows, &report)
}

fn bench_connectivity(args: ConnectivityArgs, file: FileConfig) -> Result<()> {
    let units = args.units.or(file.units).unwrap_or(100);
    let connectivities =
        parse_connectivities(args.range.as_deref().unwrap_or("0.001..1"), args.points)?;
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    let report = BenchReport {
        connectivity: connectivity_sweep(
            units,
            &connectivities,
            args.delay,
            seed,
            &McOptions::default(),
        )?,
        ..BenchReport::default()
    };
    let rows: Vec<Vec<String>> = report
        .connectivity
        .iter()
        .map(|r| {
            vec![
                r.units.to_string(),
                num(r.connectivity),
                r.delay.to_string(),
                num(r.mc_normal),
                fmt_opt(r.mc_diag),
                fmt_opt(r.difference),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let header = [
        "N",
        "connectivity",
        "delay",
        "mc_normal",
        "mc_diag",
        "difference",
        "error",
    ];
    write_report(
        &prefix(&args.common, "connectivity"),
        &header,
        rows,
        &report,
    )
}

fn jobs_of(command: &Command) -> Option<usize> {
    match command {
        Command::Bench(BenchCommand::Mso(a)) => a.common.jobs,
        Command::Bench(BenchCommand::Mc(a)) => a.common.jobs,
        Command::Bench(BenchCommand::Timing(a)) => a.common.jobs,
        Command::Bench(BenchCommand::Connectivity(a)) => a.common.jobs,
        _ => None,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    if let Some(jobs) = jobs_of(&cli.command).or(file.jobs) {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // sizes the global worker pool before its first use
        std::env::set_var("RAYON_NUM_THREADS", jobs.to_string());
    }
    match cli.command {
        Command::Gen(a) => gen(a, file),
        Command::Run(a) => run(a, file),
        Command::Train(a) => train(a, file),
        Command::Bench(BenchCommand::Mso(a)) => bench_mso(a, file),
        Command::Bench(BenchCommand::Mc(a)) => bench_mc(a, file),
        Command::Bench(BenchCommand::Timing(a)) => bench_timing(a, file),
        Command::Bench(BenchCommand::Connectivity(a)) => bench_connectivity(a, file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Usage>() {
            Some(u) => Cli::command()
                .error(ErrorKind::ValueValidation, &u.0)
                .exit(),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
