//! Roughness of instantaneous, integrated and implied volatility by maturity.
//!
//! ```bash
//! cargo run --release --example proxy_table
//! ```

use volrough::experiments::{run_table2, Proxy, Scale, Table2Spec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = Table2Spec::preset(Scale::Smoke);
    spec.hs = vec![0.05, 0.10];
    let res = run_table2(&spec)?;
    println!("{:>8} {:>22} {:>16} {:>16}", "maturity", "proxy", "H = 0.05", "H = 0.10");
    let mut rows: Vec<(usize, Proxy)> = vec![(0, Proxy::Instantaneous)];
    for &k in &spec.maturities {
        rows.extend([Proxy::IntegratedOnPath, Proxy::IntegratedOnAverage, Proxy::Implied].map(|p| (k, p)));
    }
    for (k, proxy) in rows {
        let cell = |h| {
            res.cell(h, k, proxy)
                .and_then(|c| c.aggregate)
                .map(|a| format!("{:.3} ({:.3})", a.mean, a.sliding_std))
                .unwrap_or_else(|| "-".into())
        };
        println!("{k:>8} {:>22} {:>16} {:>16}", proxy.name(), cell(0.05), cell(0.10));
    }
    Ok(())
}
