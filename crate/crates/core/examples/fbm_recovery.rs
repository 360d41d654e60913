//! Exact fractional Brownian motion paths and both Hurst estimators.
//!
//! ```bash
//! cargo run --release --example fbm_recovery
//! ```

use volrough::fbm::FbmEngine;
use volrough::pvariation::{estimate_h, EstimatorConfig};
use volrough::regression::{estimate_h_regression, RegressionConfig};
use volrough::stream::{GaussianStream, Purpose};
use volrough::timeseries::TimeSeriesPath;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4900;
    let dt = 1.0 / n as f64;
    let cfg = EstimatorConfig::new(70);
    let reg = RegressionConfig::default();
    let n_paths = 20;

    println!("{:>5} {:>10} {:>8} {:>10}", "H", "p-var", "no root", "regress");
    for h in [0.1, 0.3, 0.5, 0.7] {
        let engine = FbmEngine::uniform(h, dt, n)?;
        let (mut pv, mut ok, mut rg) = (0.0, 0, 0.0);
        for seed in 0..n_paths {
            let w = engine.draw_path(&GaussianStream::new(seed, Purpose::InitialPath, 0, 0));
            let path = TimeSeriesPath::uniform(dt, w.with_origin())?;
            // very rough paths can put the root beyond the p bracket
            if let Ok(est) = estimate_h(&path, &cfg, 0) {
                pv += est.h;
                ok += 1;
            }
            rg += estimate_h_regression(&path, &reg)?.h;
        }
        println!(
            "{h:>5} {:>10.4} {:>8} {:>10.4}",
            pv / ok.max(1) as f64,
            n_paths - ok,
            rg / n_paths as f64
        );
    }
    Ok(())
}
