//! Closed-form reference rates over a range of received photon numbers.

use photon_capacity::report::AnalyticRow;
use photon_capacity::{PhotonBudget, Transmission};

fn main() -> photon_capacity::Result<()> {
    let eta = Transmission::new(0.5)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}", "eta*nbar", "g", "hom", "het", "bowen", "gordon");
    for s in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let row = AnalyticRow::new(eta, PhotonBudget::new(s / eta.value())?);
        println!(
            "{s:>8} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            row.c_classical,
            row.c_hom,
            row.c_het,
            row.bowen.unwrap_or(f64::NAN),
            row.gordon.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
