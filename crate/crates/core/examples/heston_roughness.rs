//! Roughness of classical Heston volatility and of its ATM proxy.
//!
//! ```bash
//! cargo run --release --example heston_roughness
//! ```

use volrough::experiments::{run_heston_roughness, HestonSpec, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HestonSpec::preset(Scale::Smoke);
    println!("{:?}, Feller condition holds: {}", spec.params, spec.params.satisfies_feller());
    let res = run_heston_roughness(&spec)?;
    for p in &res.paths {
        println!(
            "path {:>2}: sqrt(v) H {:.3} ({:.3})  proxy H {:.3} ({:.3})",
            p.path, p.vol_mean, p.vol_std, p.proxy_mean, p.proxy_std
        );
    }
    println!("mean over {} paths: sqrt(v) {:.3}, ATM proxy {:.3}", res.paths.len(), res.vol_mean, res.proxy_mean);
    Ok(())
}
