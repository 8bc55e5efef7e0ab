//! Fock-ensemble capacity of a lossy channel with the solver's progress.
//!
//! `cargo run --release --example fock_capacity -- 0.5 4`

use photon_capacity::ba::fock_capacity_observed;
use photon_capacity::{PhotonBudget, SolverConfig, Transmission};

fn main() -> photon_capacity::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let eta = args.first().copied().unwrap_or(0.5);
    let nbar = args.get(1).copied().unwrap_or(4.0);
    let config = SolverConfig {
        tolerance: 1e-8,
        ..SolverConfig::default()
    };
    let r = fock_capacity_observed(Transmission::new(eta)?, PhotonBudget::new(nbar)?, &config, |cutoff, rep| {
        if rep.iteration % 500 == 0 {
            println!(
                "K={cutoff:<6} it={:<6} rate={:.10} gap={:.2e}",
                rep.iteration, rep.rate_lower_bound_bits, rep.capacity_gap_bits
            );
        }
    })?;
    println!(
        "eta={eta} nbar={nbar}: C_fock = {:.10} bits (gap {:.1e}, {} iterations, support 0..={})",
        r.rate_bits,
        r.gap_bits,
        r.iterations,
        r.prior.len() - 1
    );
    Ok(())
}
