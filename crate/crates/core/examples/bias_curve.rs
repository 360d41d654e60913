//! Measured implied-vol roughness against the model Hurst index.
//!
//! ```bash
//! cargo run --release --example bias_curve
//! ```
//!
//! The fitted line per maturity inverts a measured estimate back to a model
//! Hurst index.

use volrough::experiments::{run_bias_curve, BiasCurveSpec, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = BiasCurveSpec::preset(Scale::Smoke);
    let res = run_bias_curve(&spec, None)?;
    for p in &res.points {
        if let Some(a) = p.aggregate {
            let (lo, hi) = a.ci95();
            println!(
                "H {:.2} {:>2}d: {:.3} [{:.3}, {:.3}] min {:.3} max {:.3}",
                p.model_h, p.t_days, a.mean, lo, hi, a.min, a.max
            );
        }
    }
    for l in &res.lines {
        if let Some(line) = l.line {
            println!(
                "{:>2}d: slope {:.3}, intercept {:.3}; a measured 0.35 maps to H {:.3}",
                l.t_days,
                line.slope,
                line.intercept,
                line.invert(0.35)
            );
        }
    }
    println!("slope flattens with maturity: {}", res.flattens_with_maturity);
    Ok(())
}
