//! The solver works on any discrete channel: a binary symmetric channel
//! and a Z-channel with the use of its `1` input fixed.

use photon_capacity::{ba_solve, ChannelMatrix, ConstraintSpec, SolverConfig};

fn main() -> photon_capacity::Result<()> {
    let bsc = ChannelMatrix::from_dense(&[vec![0.9, 0.1], vec![0.1, 0.9]])?;
    let r = ba_solve(&bsc, &ConstraintSpec::unconstrained(2), &SolverConfig::default())?;
    println!("BSC(0.1): {:.9} bits, prior {:?}", r.rate_bits, r.prior.probs());

    let z = ChannelMatrix::from_dense(&[vec![1.0, 0.0], vec![0.3, 0.7]])?;
    for budget in [0.1, 0.3, 0.5] {
        let r = ba_solve(&z, &ConstraintSpec::new(vec![0.0, 1.0], budget)?, &SolverConfig::default())?;
        println!("Z-channel, P(1) = {budget}: {:.9} bits", r.rate_bits);
    }
    Ok(())
}
