//! At low transmissivity the optimal Fock prior is a vacuum spike plus
//! separated bumps; the bumps move out as eta drops.

use photon_capacity::experiments::{prior_profile, ExperimentConfig};
use photon_capacity::SolverConfig;

fn main() -> photon_capacity::Result<()> {
    let config = ExperimentConfig {
        fock: SolverConfig {
            tolerance: 1e-6,
            max_iterations: 3000,
            ..SolverConfig::default()
        },
        ..ExperimentConfig::default()
    };
    for eta in [0.1, 0.05, 0.02] {
        let p = prior_profile(eta, 30.0, &config)?;
        let peaks: Vec<String> = p.tail_maxima.iter().map(|&k| format!("{k} ({:.3})", p.probs[k])).collect();
        println!("eta={eta}: rate {:.6}, p0 {:.4}, tail maxima {}", p.rate_bits, p.p0, peaks.join(", "));
    }
    Ok(())
}
