use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use volrough::experiments::{
    run_bias_curve, run_heston_roughness, run_market_roughness, run_rough_exp, run_table1, run_table2, slide,
    write_bias_curve, write_heston, write_market, write_rough_exp, write_table1, write_table2, Artifacts,
    BiasCurveSpec, ExperimentError, HestonSpec, MarketResult, MarketSpec, RoughExpSpec, Scale, Table1Spec, Table2Spec,
    WindowPolicy,
};
use volrough::pvariation::{Histogram, DEFAULT_HISTOGRAM_BINS};
use volrough::regression::{estimate_h_regression, RegressionConfig};
use volrough::timeseries::{DateFormat, IngestSpec, TimeSeriesPath};

#[derive(Parser)]
#[command(name = "volrough", version, about = "Roughness estimation for volatility time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sliding p-variation estimate of a dated CSV series.
    Estimate(EstimateArgs),
    /// Sliding estimate with the per-window density written out.
    Slide(SlideArgs),
    /// Simulate a model and measure the roughness of its volatility.
    Simulate(SimulateArgs),
    /// Discretization study of one-day implied vols.
    Table1(ExperimentArgs),
    /// Roughness by maturity and volatility proxy.
    Table2(ExperimentArgs),
    /// Measured against model Hurst index of implied vols.
    BiasCurve(ExperimentArgs),
    /// Log-moment regression estimate.
    Regression(RegressionArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Value column of a dated CSV. Without it the input is read as `t,value`.
    #[arg(long)]
    value_col: Option<String>,
    #[arg(long, default_value = "Date")]
    date_col: String,
    #[arg(long, value_enum, default_value_t = DateArg::Date)]
    date_format: DateArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum DateArg {
    Date,
    DateTimeOffset,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 70)]
    k: usize,
    /// Estimate on the log of the series.
    #[arg(long)]
    log: bool,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SlideArgs {
    #[command(flatten)]
    estimate: EstimateArgs,
    #[arg(long)]
    max_windows: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    bins: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Heston,
    Roughexp,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON spec; overrides the preset selected by `--scale`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Smoke)]
    scale: ScaleArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Smoke,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Smoke => Scale::Smoke,
        }
    }
}

#[derive(Args)]
struct RegressionArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 40)]
    max_lag_div: usize,
    /// Use the values as given instead of their logarithm.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

fn load_spec<T: DeserializeOwned>(args: &ExperimentArgs, preset: impl FnOnce(Scale) -> T) -> Result<T, ExperimentError> {
    match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| ExperimentError::InvalidSpec(format!("{}: {e}", path.display())))
        }
        None => Ok(preset(args.scale.into())),
    }
}

fn ingest_spec(input: &InputArgs, value_col: &str) -> IngestSpec {
    IngestSpec {
        date_column: input.date_col.clone(),
        value_column: value_col.to_owned(),
        date_format: match input.date_format {
            DateArg::Date => DateFormat::Date,
            DateArg::DateTimeOffset => DateFormat::DateTimeOffset,
        },
    }
}

fn read_path(input: &InputArgs) -> Result<TimeSeriesPath, ExperimentError> {
    let data = |source| ExperimentError::Data {
        context: input.input.display().to_string(),
        source,
    };
    let file = fs::File::open(&input.input).map_err(|e| data(e.into()))?;
    match &input.value_col {
        Some(col) => Ok(volrough::timeseries::ingest_csv(file, &ingest_spec(input, col))
            .map_err(data)?
            .path),
        None => TimeSeriesPath::read_csv(file).map_err(data),
    }
}

fn market_spec(args: &EstimateArgs, windows: WindowPolicy) -> MarketSpec {
    let col = args.input.value_col.as_deref().unwrap_or("value");
    let mut spec = MarketSpec::new("estimate", args.input.input.clone(), ingest_spec(&args.input, col), args.k);
    spec.log = args.log;
    spec.windows = windows;
    spec
}

fn estimate(args: &EstimateArgs, windows: WindowPolicy, bins: Option<usize>) -> Result<(), ExperimentError> {
    let spec = market_spec(args, windows);
    let out = Artifacts::new(&args.out, &spec)?;
    let r = if args.input.value_col.is_some() {
        run_market_roughness(&spec)?
    } else {
        let path = read_path(&args.input)?;
        let summary = slide(&path, &spec.estimator, &spec.windows, spec.log).map_err(|source| ExperimentError::Estimator {
            context: args.input.input.display().to_string(),
            source,
        })?;
        MarketResult {
            n_observations: path.len(),
            dropped_rows: 0,
            summary,
        }
    };
    write_market(&out, &spec, &r)?;
    if let Some(bins) = bins {
        write_density(&out, &r.summary.hs(), bins)?;
    }
    Ok(())
}

fn write_density(out: &Artifacts, hs: &[f64], bins: usize) -> Result<(), ExperimentError> {
    let hist = Histogram::from_samples(hs, bins);
    out.csv("density.csv", |b| {
        use std::io::Write;
        writeln!(b, "bin_lo,bin_hi,count,density")?;
        let total = hs.len() as f64;
        for (i, &count) in hist.counts.iter().enumerate() {
            let (lo, hi) = (hist.edges[i], hist.edges[i + 1]);
            let width = hi - lo;
            let density = if width > 0.0 { count as f64 / (total * width) } else { 0.0 };
            writeln!(b, "{lo},{hi},{count},{density}")?;
        }
        Ok(())
    })?;
    Ok(())
}

fn regression(args: &RegressionArgs) -> Result<(), ExperimentError> {
    let path = read_path(&args.input)?;
    let series = if args.raw {
        path
    } else {
        path.log_transform().map_err(|source| ExperimentError::Data {
            context: args.input.input.display().to_string(),
            source,
        })?
    };
    let cfg = RegressionConfig {
        max_lag_div: args.max_lag_div,
        ..RegressionConfig::default()
    };
    let fit = estimate_h_regression(&series, &cfg)?;
    let out = Artifacts::new(
        &args.out,
        &serde_json::json!({
            "input": args.input.input,
            "value_col": args.input.value_col,
            "transform": if args.raw { "none" } else { "log" },
            "regression": cfg,
        }),
    )?;
    out.csv("moments.csv", |b| fit.write_moments_csv(b))?;
    out.summary(serde_json::to_value(&fit)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<PathBuf, ExperimentError> {
    let out_dir = |p: &Path| p.to_owned();
    match cli.command {
        Command::Estimate(a) => {
            estimate(&a, WindowPolicy { stride: a.stride, max_windows: None }, None)?;
            Ok(out_dir(&a.out))
        }
        Command::Slide(a) => {
            let e = &a.estimate;
            estimate(e, WindowPolicy { stride: e.stride, max_windows: a.max_windows }, Some(a.bins))?;
            Ok(out_dir(&e.out))
        }
        Command::Simulate(a) => {
            let x = &a.experiment;
            match a.model {
                ModelArg::Heston => {
                    let spec: HestonSpec = load_spec(x, HestonSpec::preset)?;
                    let r = run_heston_roughness(&spec)?;
                    write_heston(&Artifacts::new(&x.out, &spec)?, &r)?;
                }
                ModelArg::Roughexp => {
                    let spec: RoughExpSpec = load_spec(x, RoughExpSpec::preset)?;
                    let r = run_rough_exp(&spec)?;
                    write_rough_exp(&Artifacts::new(&x.out, &spec)?, &r)?;
                }
            }
            Ok(out_dir(&x.out))
        }
        Command::Table1(x) => {
            let spec: Table1Spec = load_spec(&x, Table1Spec::preset)?;
            let r = run_table1(&spec)?;
            write_table1(&Artifacts::new(&x.out, &spec)?, &r)?;
            Ok(out_dir(&x.out))
        }
        Command::Table2(x) => {
            let spec: Table2Spec = load_spec(&x, Table2Spec::preset)?;
            let r = run_table2(&spec)?;
            write_table2(&Artifacts::new(&x.out, &spec)?, &r)?;
            Ok(out_dir(&x.out))
        }
        Command::BiasCurve(x) => {
            let spec: BiasCurveSpec = load_spec(&x, BiasCurveSpec::preset)?;
            let r = run_bias_curve(&spec, None)?;
            write_bias_curve(&Artifacts::new(&x.out, &spec)?, &r)?;
            Ok(out_dir(&x.out))
        }
        Command::Regression(a) => {
            regression(&a)?;
            Ok(out_dir(&a.out))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("wrote {}", dir.join("summary.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

