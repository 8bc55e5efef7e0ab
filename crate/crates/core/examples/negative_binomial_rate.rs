//! Rate of the negative-binomial Fock ensemble against the full capacity.

use photon_capacity::negbin::{negbin_best_rate, negbin_mutual_info};
use photon_capacity::{fock_capacity, PhotonBudget, SolverConfig, Transmission};

fn main() -> photon_capacity::Result<()> {
    let config = SolverConfig {
        tolerance: 1e-7,
        max_iterations: 20_000,
        ..SolverConfig::default()
    };
    println!("{:>5} {:>5} {:>8} {:>12} {:>12} {:>8}", "eta", "nbar", "r*", "R_NB", "C_fock", "rel gap");
    for eta in [0.3, 0.9] {
        for nbar in [1.0, 10.0] {
            let (e, n) = (Transmission::new(eta)?, PhotonBudget::new(nbar)?);
            let (rate, r) = negbin_best_rate(e, n)?;
            let c = fock_capacity(e, n, &config)?.rate_bits;
            println!("{eta:>5} {nbar:>5} {r:>8.4} {rate:>12.9} {c:>12.9} {:>7.3}%", 100.0 * (c - rate) / c);
        }
    }
    let (e, n) = (Transmission::new(0.5)?, PhotonBudget::new(4.0)?);
    println!("fixed r = 1 (thermal input) at eta 0.5, nbar 4: {:.9}", negbin_mutual_info(e, n, 1.0)?);
    Ok(())
}
