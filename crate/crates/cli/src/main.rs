//! `rrit`: recurrence-rate independence tests from the command line.
//!
//! Subcommands: `test` runs one permutation test on a pair of CSV samples,
//! `power` runs a config-driven power study, `generate` writes simulated
//! sample pairs, `sigma2` emits the diagonal limit curve, and `validate`
//! runs the numeric cross-check suites.
//!
//! Exit codes: 0 success (for `test`: p ≥ level), 1 error, 2 validation
//! failures, 3 rejection (p < level).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rrit_core::asymptotics::{diagonal_sigma, diagonal_sigma_max};
use rrit_core::generators::{self, AlternativeName, AlternativeSpec};
use rrit_core::io as csvio;
use rrit_core::permutation::permutation_pvalue;
use rrit_core::power::run_power_study;
use rrit_core::validate::{run_suite, Suite};
use rrit_core::weights::WeightChoice;
use rrit_core::{pair_arrays, DistanceMatrix, Estimator, Metric, PairedSample, PowerStudyConfig, StatKind};

#[derive(Parser)]
#[command(
    name = "rrit",
    version,
    about = "Independence tests between random elements of metric spaces via recurrence rates"
)]
struct Cli {
    /// Worker thread count (overrides RRIT_THREADS; default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test two aligned CSV samples for independence
    Test(TestArgs),
    /// Run a power study from a JSON config; table as CSV on stdout
    Power(PowerArgs),
    /// Write one simulated sample pair as two CSV files
    Generate(GenerateArgs),
    /// Emit the diagonal limit curve r, sigma(r,r) for normal marginals
    Sigma2(Sigma2Args),
    /// Run numeric validation suites; exit 2 if any check fails
    Validate(ValidateArgs),
}

#[derive(Args)]
struct TestArgs {
    /// X observations: one row per observation, columns are coordinates
    x: PathBuf,
    /// Y observations: same row count as X
    y: PathBuf,
    /// Inputs start with a header row
    #[arg(long)]
    header: bool,
    /// Treat inputs as precomputed square distance tables, not points
    #[arg(long)]
    distance_tables: bool,
    /// Weights: auto, N(mu,sigma2), N(..)xN(..), or a preset like n_1_1
    #[arg(long, default_value = "auto", value_parser = parse_weights)]
    weights: WeightChoice,
    /// Statistic: cvm (integral form) or sup
    #[arg(long, default_value = "cvm", value_parser = parse_stat)]
    stat: StatKind,
    /// Permutation replicates
    #[arg(long, default_value_t = 199, value_name = "M")]
    perms: usize,
    /// Master seed for the permutation stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decision level used for the exit code
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// P-value estimator: basic or plus_one
    #[arg(long, default_value = "basic", value_parser = parse_estimator)]
    estimator: Estimator,
    /// Replace each coordinate by its normal score before testing
    #[arg(long)]
    normal_scores: bool,
    /// Emit the full result as JSON instead of summary lines
    #[arg(long)]
    json: bool,
    /// Record wall-clock seconds in the result (output is no longer byte-stable)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct PowerArgs {
    /// Config JSON path, or - for standard input
    config: PathBuf,
    /// Emit the table as JSON instead of CSV
    #[arg(long)]
    json: bool,
    /// Record per-cell elapsed seconds (output is no longer byte-stable)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model name, e.g. two_parabolas, circle, ar1, fbm, fou2
    #[arg(value_parser = parse_alternative)]
    name: AlternativeName,
    /// Observation count
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model parameter as key=value; repeatable
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Destination for the X rows
    #[arg(long, value_name = "FILE")]
    x_out: PathBuf,
    /// Destination for the Y rows
    #[arg(long, value_name = "FILE")]
    y_out: PathBuf,
    /// Write header rows c1..cp
    #[arg(long)]
    header: bool,
    /// Apply the normal-scores transform before writing
    #[arg(long)]
    normal_scores: bool,
}

#[derive(Args)]
struct Sigma2Args {
    /// Largest threshold on the grid
    #[arg(long, default_value_t = 5.0)]
    r_max: f64,
    /// Grid intervals (emits points + 1 rows starting at r = 0)
    #[arg(long, default_value_t = 500)]
    points: usize,
    /// Print the curve maximum as JSON instead of the curve
    #[arg(long)]
    max: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suites to run: oracles, envelope, sigma2, size (default: all)
    #[arg(value_parser = parse_suite)]
    suites: Vec<Suite>,
    /// Emit the reports as JSON
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Power(args) => cmd_power(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Sigma2(args) => cmd_sigma2(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

/// Worker count: `--threads` wins, then RRIT_THREADS, then the rayon default.
fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let count = match flag {
        Some(n) => Some(n),
        None => match std::env::var("RRIT_THREADS") {
            Ok(v) => {
                Some(v.parse::<usize>().context("RRIT_THREADS must be a positive integer")?)
            }
            Err(_) => None,
        },
    };
    if let Some(n) = count {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the thread pool")?;
    }
    Ok(())
}

fn cmd_test(args: TestArgs) -> anyhow::Result<ExitCode> {
    if !(args.level > 0.0 && args.level < 1.0) {
        bail!("level must lie strictly between 0 and 1, got {}", args.level);
    }
    let started = Instant::now();
    let (dx, dy) = if args.distance_tables {
        if args.normal_scores {
            bail!("--normal-scores needs point inputs, not distance tables");
        }
        (read_table(&args.x, args.header)?, read_table(&args.y, args.header)?)
    } else {
        let xs = read_points(&args.x, args.header)?;
        let ys = read_points(&args.y, args.header)?;
        let (mx, my) = (metric_for(&xs), metric_for(&ys));
        let mut sample = PairedSample::new(xs, ys, mx, my)?;
        if args.normal_scores {
            sample = generators::normal_scores_sample(&sample)?;
        }
        sample.distance_matrices()?
    };
    let pairs = pair_arrays(&dx, &dy)?;
    let w = args.weights.resolve(&pairs)?;
    let mut result =
        permutation_pvalue(&dx, &dy, &w, args.stat, args.perms, args.seed, args.estimator)?;
    if args.timing {
        result.elapsed = Some(started.elapsed().as_secs_f64());
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!("statistic  {} = {:.6e}", stat_name(args.stat), result.statistic.t);
        println!(
            "p_value    {} (m = {}, estimator {}, seed {})",
            result.p_value, result.m, result.estimator, result.seed
        );
        println!("weights    {}", result.weight.label());
        let decision = if result.p_value < args.level { "reject" } else { "fail to reject" };
        println!("decision   {decision} independence at level {}", args.level);
    }
    Ok(if result.p_value < args.level { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cmd_power(args: PowerArgs) -> anyhow::Result<ExitCode> {
    let text = if args.config.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf).context("reading config from stdin")?;
        buf
    } else {
        std::fs::read_to_string(&args.config)
            .with_context(|| format!("reading {}", args.config.display()))?
    };
    let config = parse_config(&text)?;
    for warning in config.validate()? {
        eprintln!("warning: {warning}");
    }
    let table = run_power_study(&config, args.timing)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{}", table.to_csv()?);
    }
    Ok(ExitCode::SUCCESS)
}

/// Schema errors name the offending field, not just a byte offset.
fn parse_config(text: &str) -> anyhow::Result<PowerStudyConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let mut spec = AlternativeSpec::new(args.name, args.n, args.seed);
    for raw in &args.params {
        let (key, value) = split_param(raw)?;
        spec = spec.with_param(key, value);
    }
    let mut sample = generators::generate(&spec)?;
    if args.normal_scores {
        sample = generators::normal_scores_sample(&sample)?;
    }
    write_points(&args.x_out, &sample.xs, args.header)?;
    write_points(&args.y_out, &sample.ys, args.header)?;
    println!(
        "wrote {} observations ({}-dim X, {}-dim Y) to {} and {}",
        sample.n(),
        sample.xs[0].len(),
        sample.ys[0].len(),
        args.x_out.display(),
        args.y_out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sigma2(args: Sigma2Args) -> anyhow::Result<ExitCode> {
    if args.max {
        let (argmax, max) = diagonal_sigma_max();
        println!("{}", serde_json::json!({ "argmax": argmax, "max": max }));
        return Ok(ExitCode::SUCCESS);
    }
    if !(args.r_max > 0.0) {
        bail!("r_max must be positive, got {}", args.r_max);
    }
    if args.points == 0 {
        bail!("points must be at least 1");
    }
    println!("r,sigma");
    for k in 0..=args.points {
        let r = args.r_max * k as f64 / args.points as f64;
        println!("{r},{}", diagonal_sigma(r));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let suites: Vec<Suite> =
        if args.suites.is_empty() { Suite::ALL.to_vec() } else { args.suites.clone() };
    let mut reports = Vec::new();
    for suite in suites {
        reports.extend(run_suite(suite)?);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            let tag = if r.passed { " ok " } else { "FAIL" };
            println!(
                "[{tag}] {:<8} {:<24} measured {:<13.6e} requires {}",
                r.suite.as_str(),
                r.check,
                r.measured,
                r.requirement
            );
        }
    }
    let failures = reports.iter().filter(|r| !r.passed).count();
    if failures > 0 {
        eprintln!("{failures} check(s) failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

/// Scalars compare by absolute difference; anything wider is euclidean.
fn metric_for(points: &[Vec<f64>]) -> Metric {
    if points.first().map_or(0, Vec::len) == 1 {
        Metric::Absolute
    } else {
        Metric::Euclidean
    }
}

fn read_points(path: &Path, header: bool) -> anyhow::Result<Vec<Vec<f64>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    csvio::read_points(BufReader::new(file), header)
        .with_context(|| format!("reading {}", path.display()))
}

fn read_table(path: &Path, header: bool) -> anyhow::Result<DistanceMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    csvio::read_distance_table(BufReader::new(file), header)
        .with_context(|| format!("reading {}", path.display()))
}

fn write_points(path: &Path, points: &[Vec<f64>], header: bool) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    csvio::write_points(BufWriter::new(file), points, header)
        .with_context(|| format!("writing {}", path.display()))
}

fn split_param(raw: &str) -> anyhow::Result<(&str, f64)> {
    let (key, value) = raw.split_once('=').context("expected --param key=value")?;
    let value =
        value.parse::<f64>().with_context(|| format!("parameter {key}: not a number: {value}"))?;
    Ok((key, value))
}

fn stat_name(kind: StatKind) -> &'static str {
    match kind {
        StatKind::Cvm => "cvm",
        StatKind::Sup => "sup",
    }
}

fn parse_weights(s: &str) -> Result<WeightChoice, String> {
    s.parse().map_err(|e: rrit_core::Error| e.to_string())
}

fn parse_stat(s: &str) -> Result<StatKind, String> {
    match s {
        "cvm" => Ok(StatKind::Cvm),
        "sup" => Ok(StatKind::Sup),
        other => Err(format!("unknown statistic {other:?}, expected cvm or sup")),
    }
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: rrit_core::Error| e.to_string())
}

fn parse_alternative(s: &str) -> Result<AlternativeName, String> {
    s.parse().map_err(|e: rrit_core::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: rrit_core::Error| e.to_string())
}
