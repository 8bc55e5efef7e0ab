//! At fixed received mean the Fock capacity falls to the Poisson capacity
//! as eta -> 0, and the priors line up.

use photon_capacity::experiments::{poisson_limit_study, scaled_fock_check, ExperimentConfig};
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
    let study = poisson_limit_study(1.0, &[0.3, 0.1, 0.03], Some(40.0), &config)?;
    println!("C_poisson(1) = {:.8}", study.c_poisson);
    for r in &study.records {
        println!("eta={:<5} C_fock={:.8} gap={:.2e} TV={:.4}", r.eta, r.c_fock, r.gap, r.prior_tv);
    }
    let check = scaled_fock_check(1.0, 0.01, 0.5, 20, &SolverConfig::default())?;
    println!(
        "scaled Fock alphabet at eta 0.01: {:.8} vs Poisson on the same intensities {:.8}",
        check.fock_rate, check.poisson_rate
    );
    Ok(())
}
