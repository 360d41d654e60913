//! Implied-vol roughness against the total-variance quadrature and its step.
//!
//! ```bash
//! cargo run --release --example discretization_study            # smoke scale
//! cargo run --release --example discretization_study -- paper   # hours of CPU
//! ```

use volrough::experiments::{run_table1, Scale, Table1Spec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale = match std::env::args().nth(1).as_deref() {
        Some("paper") => Scale::Paper,
        _ => Scale::Smoke,
    };
    let spec = Table1Spec::preset(scale);
    let res = run_table1(&spec)?;
    println!("{} initial paths, M = {}", spec.n_initial_paths, spec.mc.m_paths);
    println!("{:>8} {:>18} {:>8} {:>8}", "dt", "rule", "H", "se");
    for c in &res.cells {
        if let Some(a) = c.aggregate {
            println!("{:>8} {:>18} {:>8.4} {:>8.4}", c.dt, c.rule.name(), a.mean, a.se);
        }
    }
    Ok(())
}
