//! Sliding roughness estimate of a daily close series.
//!
//! ```bash
//! cargo run --release --example estimate_market -- path/to/VIX.csv Close 51
//! ```
//!
//! Without arguments a synthetic lognormal series is generated and used.

use std::io::Cursor;

use volrough::pvariation::{sliding_estimate, EstimatorConfig, Histogram};
use volrough::stream::{GaussianStream, Purpose};
use volrough::timeseries::{ingest_csv, IngestSpec};

fn synthetic_csv(n: usize) -> String {
    let z = GaussianStream::new(42, Purpose::InitialPath, 0, 0).normals(n);
    let mut log_level = 3.0f64;
    let mut out = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
    let start = chrono::NaiveDate::from_ymd_opt(2004, 1, 2).unwrap();
    for (i, e) in z.iter().enumerate() {
        // mean-reverting log level
        log_level += 0.02 * (3.0 - log_level) + 0.06 * e;
        let close = log_level.exp();
        let day = start + chrono::Days::new(i as u64);
        out += &format!("{day},{close},{close},{close},{close},{close},0\n");
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (text, column, k) = match args.as_slice() {
        [file, column, k, ..] => (std::fs::read_to_string(file)?, column.clone(), k.parse()?),
        [file] => (std::fs::read_to_string(file)?, "Close".to_owned(), 51),
        _ => (synthetic_csv(3000), "Close".to_owned(), 51),
    };

    let ingested = ingest_csv(Cursor::new(text), &IngestSpec::yahoo(&column))?;
    println!(
        "{} observations ({} rows dropped), {} to {}",
        ingested.path.len(),
        ingested.dropped_rows,
        ingested.dates.first().unwrap(),
        ingested.dates.last().unwrap()
    );

    let cfg = EstimatorConfig::new(k);
    let summary = sliding_estimate(&ingested.path, &cfg, 1)?;
    println!(
        "K = {k}, L = {}: H mean {:.3}, std {:.3} over {} windows ({} failed)",
        cfg.l,
        summary.mean,
        summary.std,
        summary.n_windows(),
        summary.failures.len()
    );

    let hist = Histogram::from_samples(&summary.hs(), 12);
    let peak = *hist.counts.iter().max().unwrap_or(&1) as f64;
    for (i, c) in hist.counts.iter().enumerate() {
        let bar = "#".repeat((40.0 * *c as f64 / peak).round() as usize);
        println!("{:.3} - {:.3} {bar}", hist.edges[i], hist.edges[i + 1]);
    }
    Ok(())
}
