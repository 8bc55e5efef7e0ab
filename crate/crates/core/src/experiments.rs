//! Parameter sweeps and limit studies built on the solvers.
//!
//! Cells run on a rayon pool capped at `jobs` threads; results always come
//! back in grid order.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    bowen_asymptotic, classical_capacity, gordon_asymptotic, heterodyne_capacity, homodyne_capacity, PhotonBudget,
};
use crate::ba::{ba_solve, fock_capacity, CapacityResult, ConstraintSpec, CutoffPolicy, SolverConfig};
use crate::channel::{build_poisson_channel, default_poisson_cutoff, fock_column, ChannelMatrix, IntensityAlphabet, Transmission};
use crate::continuous::{poisson_capacity, ContinuousSolverConfig, MassPointPrior, PoissonCapacity};
use crate::error::{invalid, Result};
use crate::negbin::negbin_best_rate;

/// Masses below this are ignored when looking for local maxima.
pub const PROFILE_MIN_MASS: f64 = 1e-10;

/// Which solvers a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverSet {
    pub fock: bool,
    pub poisson: bool,
    pub negbin: bool,
}

impl Default for SolverSet {
    fn default() -> Self {
        Self {
            fock: true,
            poisson: true,
            negbin: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub fock: SolverConfig,
    pub poisson: ContinuousSolverConfig,
    pub solvers: SolverSet,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fock: SolverConfig {
                tolerance: 1e-7,
                max_iterations: 20_000,
                ..SolverConfig::default()
            },
            poisson: ContinuousSolverConfig {
                tolerance: 1e-7,
                ..ContinuousSolverConfig::default()
            },
            solvers: SolverSet::default(),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .expect("thread pool")
    }
}

/// Second axis of a sweep: photon budgets, or received means `eta nbar`
/// held fixed across the transmissivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum GridAxis {
    Nbar(Vec<f64>),
    OutputMean(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub etas: Vec<f64>,
    pub axis: GridAxis,
}

impl SweepGrid {
    pub fn new(etas: Vec<f64>, axis: GridAxis) -> Result<Self> {
        if etas.is_empty() {
            return Err(invalid("etas", 0.0, "grid needs at least one transmissivity"));
        }
        for &e in &etas {
            Transmission::new(e)?;
        }
        let values = match &axis {
            GridAxis::Nbar(v) | GridAxis::OutputMean(v) => v,
        };
        if values.is_empty() {
            return Err(invalid("nbars", 0.0, "grid needs at least one photon number"));
        }
        for &v in values {
            PhotonBudget::new(v)?;
        }
        if matches!(axis, GridAxis::OutputMean(_)) && etas.contains(&0.0) {
            return Err(invalid("eta", 0.0, "a fixed output mean needs eta > 0"));
        }
        Ok(Self { etas, axis })
    }

    /// `(eta, nbar)` cells, transmissivity-major.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &e in &self.etas {
            match &self.axis {
                GridAxis::Nbar(v) => out.extend(v.iter().map(|&n| (e, n))),
                GridAxis::OutputMean(v) => out.extend(v.iter().map(|&s| (e, s / e))),
            }
        }
        out
    }
}

/// One sweep cell. Solver outputs are `None` when the solver was skipped or
/// failed; failures are listed in `errors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eta: f64,
    pub nbar: f64,
    pub output_mean: f64,
    pub c_fock: Option<f64>,
    pub fock_gap: Option<f64>,
    pub c_poisson: Option<f64>,
    pub r_negbin: Option<f64>,
    pub r_star: Option<f64>,
    pub c_hom: f64,
    pub c_het: f64,
    pub c_classical: f64,
    /// `None` where the expansion is undefined (`eta = 1` or zero output).
    pub bowen: Option<f64>,
    pub gordon: Option<f64>,
    pub fock_converged: bool,
    pub poisson_converged: bool,
    pub errors: Vec<String>,
}

impl SweepRecord {
    /// `c_fock / c_poisson`.
    pub fn ratio(&self) -> Option<f64> {
        match (self.c_fock, self.c_poisson) {
            (Some(f), Some(p)) if p > 0.0 => Some(f / p),
            _ => None,
        }
    }

    /// Names of the ordering relations this record breaks by more than
    /// `slack`: `c_poisson <= c_fock <= c_classical`, `r_negbin <= c_fock`.
    pub fn ordering_violations(&self, slack: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if let Some(f) = self.c_fock {
            if f > self.c_classical + slack {
                out.push("c_fock <= c_classical");
            }
            if self.c_poisson.is_some_and(|p| p > f + slack) {
                out.push("c_poisson <= c_fock");
            }
            if self.r_negbin.is_some_and(|r| r > f + slack) {
                out.push("r_negbin <= c_fock");
            }
        }
        if self.c_poisson.is_some_and(|p| p > self.c_classical + slack) {
            out.push("c_poisson <= c_classical");
        }
        out
    }
}

fn analytic_part(eta: f64, nbar: f64) -> Result<SweepRecord> {
    let (e, n) = (Transmission::new(eta)?, PhotonBudget::new(nbar)?);
    Ok(SweepRecord {
        eta,
        nbar,
        output_mean: eta * nbar,
        c_fock: None,
        fock_gap: None,
        c_poisson: None,
        r_negbin: None,
        r_star: None,
        c_hom: homodyne_capacity(e, n),
        c_het: heterodyne_capacity(e, n),
        c_classical: classical_capacity(e, n),
        bowen: bowen_asymptotic(e, n).ok(),
        gordon: gordon_asymptotic(e, n).ok(),
        fock_converged: false,
        poisson_converged: false,
        errors: Vec::new(),
    })
}

fn fill_cell(record: &mut SweepRecord, poisson: Option<&Result<PoissonCapacity>>, config: &ExperimentConfig) {
    let (e, n) = match (Transmission::new(record.eta), PhotonBudget::new(record.nbar)) {
        (Ok(e), Ok(n)) => (e, n),
        _ => return,
    };
    if config.solvers.fock {
        match fock_capacity(e, n, &config.fock) {
            Ok(r) => {
                record.c_fock = Some(r.rate_bits);
                record.fock_gap = Some(r.gap_bits);
                record.fock_converged = r.converged;
            }
            Err(err) => record.errors.push(format!("fock: {err}")),
        }
    }
    match poisson {
        Some(Ok(p)) => {
            record.c_poisson = Some(p.capacity.rate_bits);
            record.poisson_converged = p.capacity.converged;
        }
        Some(Err(err)) => record.errors.push(format!("poisson: {err}")),
        None => {}
    }
    if config.solvers.negbin {
        match negbin_best_rate(e, n) {
            Ok((rate, r)) => {
                record.r_negbin = Some(rate);
                record.r_star = Some(r);
            }
            Err(err) => record.errors.push(format!("negbin: {err}")),
        }
    }
}

/// Solve every cell of the grid. The Poisson capacity depends only on
/// `eta nbar`, so it is solved once per distinct received mean. Per-cell
/// solver failures are recorded, not returned.
pub fn capacity_ratio_grid(grid: &SweepGrid, config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    use rayon::prelude::*;
    let cells = grid.cells();
    let mut records = cells
        .iter()
        .map(|&(e, n)| analytic_part(e, n))
        .collect::<Result<Vec<_>>>()?;
    let pool = config.pool();
    let mut means: Vec<f64> = records.iter().map(|r| r.output_mean).collect();
    means.sort_by(f64::total_cmp);
    means.dedup();
    let poisson: Vec<Result<PoissonCapacity>> = if config.solvers.poisson {
        pool.install(|| means.par_iter().map(|&s| poisson_capacity(s, &config.poisson)).collect())
    } else {
        Vec::new()
    };
    pool.install(|| {
        records.par_iter_mut().for_each(|rec| {
            let solved = means
                .binary_search_by(|m| m.total_cmp(&rec.output_mean))
                .ok()
                .and_then(|i| poisson.get(i));
            fill_cell(rec, solved, config);
        })
    });
    Ok(records)
}

/// One transmissivity of [`poisson_limit_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRecord {
    pub eta: f64,
    pub nbar: f64,
    pub c_fock: f64,
    pub fock_gap_bits: f64,
    pub fock_converged: bool,
    /// `c_fock - c_poisson`.
    pub gap: f64,
    /// Total variation between the Fock prior, placed at intensities
    /// `eta k`, and the mass-point prior.
    pub prior_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStudy {
    pub output_mean: f64,
    pub c_poisson: f64,
    pub poisson_prior: MassPointPrior,
    pub records: Vec<LimitRecord>,
}

impl LimitStudy {
    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }

    /// Whether the gaps never grow by more than `slack` along the sequence.
    pub fn gaps_non_increasing(&self, slack: f64) -> bool {
        self.gaps().windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Total variation between a Fock prior seen at intensities `eta k` and a
/// mass-point prior. Each Fock state is assigned to the nearest atom in
/// `sqrt(c)` (the scale on which Poisson laws have constant spread), so
/// clusters of adjacent photon numbers count as one atom.
pub fn fock_to_mass_point_tv(fock_probs: &[f64], eta: f64, prior: &MassPointPrior) -> f64 {
    let roots: Vec<f64> = prior.intensities().iter().map(|c| c.sqrt()).collect();
    let mut mass = vec![0.0; roots.len()];
    for (k, &p) in fock_probs.iter().enumerate() {
        let x = (eta * k as f64).sqrt();
        let i = roots.partition_point(|&r| r < x);
        let nearest = if i == 0 {
            0
        } else if i == roots.len() || x - roots[i - 1] <= roots[i] - x {
            i - 1
        } else {
            i
        };
        mass[nearest] += p;
    }
    0.5 * mass.iter().zip(prior.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Fock capacity at `nbar = output_mean / eta` along a decreasing sequence
/// of transmissivities, against the Poisson capacity at the same received
/// mean.
///
/// With `intensity_reach = Some(c)` each Fock alphabet is fixed at
/// `k <= ceil(c / eta)` instead of following `config.fock.cutoff_policy`.
/// At small `eta` the adaptive rule chases prior tails far below any
/// visible effect on the rate, so a reach a few times past the largest
/// Poisson atom is much cheaper.
pub fn poisson_limit_study(
    output_mean: f64,
    etas: &[f64],
    intensity_reach: Option<f64>,
    config: &ExperimentConfig,
) -> Result<LimitStudy> {
    use rayon::prelude::*;
    if !(output_mean > 0.0) || !output_mean.is_finite() {
        return Err(invalid("output_mean", output_mean, "must be positive"));
    }
    if etas.is_empty() {
        return Err(invalid("etas", 0.0, "need at least one transmissivity"));
    }
    for w in etas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(invalid("etas", w[1], "sequence must be strictly decreasing"));
        }
    }
    for &e in etas {
        if !(e > 0.0) {
            return Err(invalid("eta", e, "must be positive"));
        }
        Transmission::new(e)?;
    }
    if let Some(c) = intensity_reach {
        if !(c > 0.0) || !c.is_finite() {
            return Err(invalid("intensity_reach", c, "must be positive"));
        }
    }
    let poisson = poisson_capacity(output_mean, &config.poisson)?;
    let c_poisson = poisson.capacity.rate_bits;
    let pool = config.pool();
    let solved: Vec<Result<CapacityResult>> = pool.install(|| {
        etas.par_iter()
            .map(|&e| {
                let mut fock = config.fock;
                if let Some(c) = intensity_reach {
                    fock.cutoff_policy = CutoffPolicy::Fixed {
                        k_max: (c / e).ceil() as usize,
                    };
                }
                fock_capacity(Transmission::new(e)?, PhotonBudget::new(output_mean / e)?, &fock)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(etas.len());
    for (&e, res) in etas.iter().zip(solved) {
        let r = res?;
        records.push(LimitRecord {
            eta: e,
            nbar: output_mean / e,
            c_fock: r.rate_bits,
            fock_gap_bits: r.gap_bits,
            fock_converged: r.converged,
            gap: r.rate_bits - c_poisson,
            prior_tv: fock_to_mass_point_tv(r.prior.probs(), e, &poisson.prior),
        });
    }
    Ok(LimitStudy {
        output_mean,
        c_poisson,
        poisson_prior: poisson.prior,
        records,
    })
}

/// Indices of local maxima among entries of at least `min_mass`. A run of
/// equal values counts once (its middle index) and is a maximum when both
/// neighbours are strictly smaller; the ends compare against nothing.
pub fn local_maxima(probs: &[f64], min_mass: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let n = probs.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && probs[j + 1] == probs[i] {
            j += 1;
        }
        let v = probs[i];
        let left_lower = i == 0 || probs[i - 1] < v;
        let right_lower = j + 1 == n || probs[j + 1] < v;
        if v >= min_mass && left_lower && right_lower {
            out.push((i + j) / 2);
        }
        i = j + 1;
    }
    out
}

/// Optimal Fock prior with the features needed to plot it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorProfile {
    pub eta: f64,
    pub nbar: f64,
    pub rate_bits: f64,
    pub gap_bits: f64,
    pub converged: bool,
    pub p0: f64,
    pub probs: Vec<f64>,
    /// Local maxima at `k > 0`.
    pub tail_maxima: Vec<usize>,
}

impl PriorProfile {
    /// The tail maximum carrying the most mass.
    pub fn dominant_tail_maximum(&self) -> Option<usize> {
        self.tail_maxima
            .iter()
            .copied()
            .max_by(|&a, &b| self.probs[a].total_cmp(&self.probs[b]))
    }
}

pub fn prior_profile(eta: f64, nbar: f64, config: &ExperimentConfig) -> Result<PriorProfile> {
    let r = fock_capacity(Transmission::new(eta)?, PhotonBudget::new(nbar)?, &config.fock)?;
    let probs = r.prior.probs().to_vec();
    let tail_maxima = local_maxima(&probs, PROFILE_MIN_MASS)
        .into_iter()
        .filter(|&k| k > 0)
        .collect();
    Ok(PriorProfile {
        eta,
        nbar,
        rate_bits: r.rate_bits,
        gap_bits: r.gap_bits,
        converged: r.converged,
        p0: probs[0],
        probs,
        tail_maxima,
    })
}

/// Result of [`scaled_fock_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledFockCheck {
    pub eta: f64,
    /// Photon numbers `f_j = round(c_j / eta)` of the grid intensities.
    pub photon_numbers: Vec<u64>,
    pub fock_rate: f64,
    /// Poisson channel on the realized intensities `eta f_j`.
    pub poisson_rate: f64,
}

/// Explicit scaled-Fock ensemble: intensities `c_j = step j` for
/// `j <= points` are realized by Fock states `f_j = round(c_j / eta)`, and
/// the Fock channel restricted to them is compared with the Poisson channel
/// on the same intensities. The two rates meet as `eta -> 0`.
pub fn scaled_fock_check(
    output_mean: f64,
    eta: f64,
    step: f64,
    points: usize,
    config: &SolverConfig,
) -> Result<ScaledFockCheck> {
    let e = Transmission::new(eta)?;
    if !(eta > 0.0) {
        return Err(invalid("eta", eta, "must be positive"));
    }
    if !(step >= eta) {
        return Err(invalid("step", step, "must be at least eta so photon numbers are distinct"));
    }
    let photon_numbers: Vec<u64> = (0..=points).map(|j| (step * j as f64 / eta).round() as u64).collect();
    let intensities: Vec<f64> = photon_numbers.iter().map(|&f| eta * f as f64).collect();
    let out_cutoff = default_poisson_cutoff(*intensities.last().unwrap_or(&0.0));
    let columns = photon_numbers.iter().map(|&f| fock_column(f, e, out_cutoff)).collect();
    let fock = ChannelMatrix::from_columns(columns, out_cutoff)?;
    let photons: Vec<f64> = photon_numbers.iter().map(|&f| f as f64).collect();
    let fock_rate = ba_solve(&fock, &ConstraintSpec::new(photons, output_mean / eta)?, config)?.rate_bits;
    let poisson = build_poisson_channel(&IntensityAlphabet::new(intensities.clone())?, out_cutoff);
    let poisson_rate = ba_solve(&poisson, &ConstraintSpec::new(intensities, output_mean)?, config)?.rate_bits;
    Ok(ScaledFockCheck {
        eta,
        photon_numbers,
        fock_rate,
        poisson_rate,
    })
}
