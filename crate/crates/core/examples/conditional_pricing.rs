//! Conditional continuation of a rough volatility path and the resulting
//! one-day ATM implied vols.
//!
//! ```bash
//! cargo run --release --example conditional_pricing
//! ```

use volrough::models::{simulate_rough_exp_vol_on, RoughExpParams, SimGrid};
use volrough::pricing::{McConfig, QuadratureRule, QuadratureSpec, Valuation};
use volrough::stream::{GaussianStream, Purpose};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = RoughExpParams { sigma: 0.5, eta: 0.5, h: 0.1 };
    let grid = SimGrid::new(0.002, 30)?;
    let spd = grid.steps_per_day()?;
    let engine = grid.engine(params.h)?;
    let path = simulate_rough_exp_vol_on(&engine, &params, grid.dt, &GaussianStream::new(1, Purpose::InitialPath, 0, 0))?;

    let val = Valuation {
        engine: &engine,
        params,
        dt: grid.dt,
        steps_per_day: spd,
        vol: &path.vol,
        normals: &path.normals,
    };
    let mc = McConfig { m_paths: 4096, seed: 5, ..McConfig::default() };
    let specs: Vec<QuadratureSpec> = QuadratureRule::ALL.iter().map(|&r| QuadratureSpec::new(r, 1)).collect();

    println!("{:>4} {:>9} {:>12} {:>12} {:>12}", "day", "sigma*v", "trapezoidal", "right", "left");
    for day in 0..20 {
        let quotes = val.quote(day, 1, &mc, &specs)?;
        let vols: Vec<f64> = quotes
            .into_iter()
            .map(|q| volrough::pricing::quote_to_point(day, 1, q).map(|p| p.implied_vol))
            .collect::<Result<_, _>>()?;
        println!(
            "{day:>4} {:>9.4} {:>12.4} {:>12.4} {:>12.4}",
            params.sigma * path.vol[day * spd],
            vols[0],
            vols[1],
            vols[2]
        );
    }
    Ok(())
}
