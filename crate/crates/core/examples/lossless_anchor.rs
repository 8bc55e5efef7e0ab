//! Without loss the Fock capacity equals g(nbar) and the optimal prior is
//! thermal.

use photon_capacity::analytic::{holevo_g, thermal_prior};
use photon_capacity::{fock_capacity, PhotonBudget, SolverConfig, Transmission};

fn main() -> photon_capacity::Result<()> {
    println!("{:>6} {:>12} {:>12} {:>10} {:>10}", "nbar", "C_fock", "g(nbar)", "gap", "TV");
    for nbar in [0.1, 1.0, 5.0, 30.0] {
        let n = PhotonBudget::new(nbar)?;
        let r = fock_capacity(Transmission::new(1.0)?, n, &SolverConfig::default())?;
        let thermal = thermal_prior(n, r.prior.len() - 1).renormalized();
        println!(
            "{nbar:>6} {:>12.9} {:>12.9} {:>10.1e} {:>10.1e}",
            r.rate_bits,
            holevo_g(nbar)?,
            r.gap_bits,
            r.prior.total_variation(&thermal)
        );
    }
    Ok(())
}
