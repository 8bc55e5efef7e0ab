//! Fock/Poisson capacity ratio over a small grid, written as CSV to stdout.

use photon_capacity::experiments::{capacity_ratio_grid, ExperimentConfig, GridAxis, SweepGrid};
use photon_capacity::report::write_sweep_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = SweepGrid::new(vec![0.5, 0.9], GridAxis::Nbar(vec![0.3, 1.0, 3.0]))?;
    let config = ExperimentConfig {
        fock: photon_capacity::SolverConfig {
            tolerance: 1e-6,
            max_iterations: 5000,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let records = capacity_ratio_grid(&grid, &config)?;
    write_sweep_csv(std::io::stdout().lock(), &records, &[])?;
    for r in &records {
        eprintln!("eta={} nbar={}: ratio {:.4}", r.eta, r.nbar, r.ratio().unwrap_or(f64::NAN));
    }
    Ok(())
}
