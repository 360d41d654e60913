//! p-variation against log-moment regression on a daily implied-vol series.
//!
//! ```bash
//! cargo run --release --example regression_cross_check
//! ```

use volrough::experiments::{run_table2, Scale, Table2Spec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = Table2Spec::preset(Scale::Paper);
    spec.hs = vec![0.05];
    spec.maturities = vec![1];
    let res = run_table2(&spec)?;
    for c in &res.cross_checks {
        let fit = &c.regression;
        println!("model H {}: {}-day implied vol over {} days", c.h, c.maturity_days, spec.days);
        println!("  p-variation sliding mean {:.4}", c.pvariation);
        println!("  regression H {:.4} (lags {}..={})", fit.h, fit.min_lag, fit.max_lag);
        if let Some(h) = fit.h_half_max_lag {
            println!("  regression H with half the lags {h:.4}");
        }
        for s in &fit.slopes {
            println!("    q {:>3}: zeta {:.4}, R^2 {:.4}", s.q, s.zeta, s.r_squared);
        }
    }
    Ok(())
}
