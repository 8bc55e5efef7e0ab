//! Coherent-state (Poisson channel) capacity and its mass-point prior.
//!
//! `cargo run --release --example poisson_capacity -- 3`

use photon_capacity::continuous::{best_on_off_rate, poisson_capacity_observed};
use photon_capacity::ContinuousSolverConfig;

fn main() -> photon_capacity::Result<()> {
    let mean = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let config = ContinuousSolverConfig {
        tolerance: 1e-8,
        ..ContinuousSolverConfig::default()
    };
    let r = poisson_capacity_observed(mean, &config, |cycle, rate| {
        if cycle % 10 == 0 {
            println!("cycle {cycle:<4} rate {rate:.10}");
        }
    })?;
    let (on_off, on) = best_on_off_rate(mean)?;
    println!("output mean {mean}: C_poisson = {:.10} bits", r.capacity.rate_bits);
    println!("best on-off input (intensity {on:.4}) reaches {on_off:.10}");
    println!("{:>12} {:>12}", "intensity", "weight");
    for (c, w) in r.prior.intensities().iter().zip(r.prior.weights()) {
        println!("{c:>12.6} {w:>12.6e}");
    }
    Ok(())
}
