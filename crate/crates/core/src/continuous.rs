//! Capacity of the discrete-time Poisson channel over a continuous intensity
//! alphabet, with the input law represented by movable mass points.
//!
//! Each outer cycle re-optimizes the weights with the discrete solver, moves
//! the points uphill on `D(Poisson(c) || q) + lambda c`, merges points that
//! meet, and inserts new points wherever a probe intensity violates the
//! optimality condition. The largest violation over the probe grid is the
//! reported gap.

use serde::{Deserialize, Serialize};

use crate::ba::{ba_solve_observed, CapacityResult, ConstraintSpec, SolverConfig};
use crate::channel::{build_poisson_channel, default_poisson_cutoff, poisson_column, ChannelColumn, IntensityAlphabet};
use crate::error::{invalid, Result};
use crate::optimize::{maximize_brent, maximize_scan_refine};
use crate::prior::PriorDistribution;

const LN2: f64 = std::f64::consts::LN_2;
const MERGE_FRACTION: f64 = 1e-6;
const PRUNE_WEIGHT: f64 = 1e-12;
const MAX_BIRTHS: usize = 4;
const LINE_SEARCH_HALVINGS: usize = 30;
const MOVES_PER_CYCLE: usize = 20;

/// Input law on received intensities `c_i = eta |alpha_i|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassPointPrior {
    intensities: IntensityAlphabet,
    weights: PriorDistribution,
}

impl MassPointPrior {
    pub fn new(intensities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let alphabet = IntensityAlphabet::new(intensities.clone())?;
        let weights = PriorDistribution::new(weights, intensities)?;
        Ok(Self {
            intensities: alphabet,
            weights,
        })
    }

    pub fn intensities(&self) -> &[f64] {
        self.intensities.intensities()
    }

    pub fn alphabet(&self) -> &IntensityAlphabet {
        &self.intensities
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.probs()
    }

    pub fn distribution(&self) -> &PriorDistribution {
        &self.weights
    }

    /// `sum_i w_i c_i`.
    pub fn mean(&self) -> f64 {
        self.weights.mean_photons()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// How the output alphabet of the Poisson channel is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutCutoffPolicy {
    /// `c_max + 10 sqrt(c_max) + 25`, recomputed as points move.
    Auto,
    Fixed { out_cutoff: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSolverConfig {
    /// Initial number of mass points.
    pub n_points: usize,
    /// Initial step for moving points along their gradient.
    pub position_step: f64,
    /// Stop when an outer cycle changes the rate by less than this (bits).
    /// The probe violation is reported in `gap_bits` but does not gate
    /// convergence: with unbounded optimal support it stays loose.
    pub tolerance: f64,
    pub max_outer_iterations: usize,
    pub out_cutoff: OutCutoffPolicy,
    /// Probe intensities for point insertion and the gap.
    pub probe_points: usize,
    /// Configuration of the weight solve in each cycle.
    pub weights: SolverConfig,
}

impl Default for ContinuousSolverConfig {
    fn default() -> Self {
        Self {
            n_points: 64,
            position_step: 1.0,
            tolerance: 1e-9,
            max_outer_iterations: 400,
            out_cutoff: OutCutoffPolicy::Auto,
            probe_points: 400,
            weights: SolverConfig {
                max_iterations: 300,
                ..SolverConfig::default()
            },
        }
    }
}

impl ContinuousSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(invalid("n_points", self.n_points as f64, "need at least two points"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", self.tolerance, "must be positive"));
        }
        if !(self.position_step > 0.0) {
            return Err(invalid("position_step", self.position_step, "must be positive"));
        }
        if self.max_outer_iterations == 0 {
            return Err(invalid("max_outer_iterations", 0.0, "must be positive"));
        }
        if self.probe_points < 3 {
            return Err(invalid("probe_points", self.probe_points as f64, "need at least three probes"));
        }
        self.weights.validate()
    }
}

/// Result of [`poisson_capacity`]. `capacity.prior` carries the same weights
/// as `prior`, with the intensities as symbol values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCapacity {
    pub capacity: CapacityResult,
    pub prior: MassPointPrior,
    pub outer_iterations: usize,
    /// Rate after each outer cycle (bits).
    pub rate_history: Vec<f64>,
}

/// Divergence `D(col || q)` in nats and its derivative in the intensity.
///
/// `dP(l|c)/dc = P(l-1|c) - P(l|c)`; the overflow probability grows at rate
/// `P(L|c)`.
fn divergence_and_slope(col: &ChannelColumn, lnq: &[f64], out_cutoff: usize) -> (f64, f64) {
    let mut div = 0.0;
    let mut slope = 0.0;
    let mut prev = 0.0;
    for (j, &p) in col.probs.iter().enumerate() {
        let l = col.offset + j;
        let ratio = if p > 0.0 { p.ln() - lnq[l] } else { 0.0 };
        div += p * ratio;
        slope += (prev - p) * ratio;
        prev = p;
    }
    if col.tail > 0.0 {
        let ratio = col.tail.ln() - lnq[out_cutoff + 1];
        div += col.tail * ratio;
        let at_cutoff = if col.offset + col.probs.len() == out_cutoff + 1 { prev } else { 0.0 };
        slope += at_cutoff * ratio;
    }
    (div, slope)
}

struct Snapshot {
    info: f64,
    lambda: f64,
    lnq: Vec<f64>,
    out_cutoff: usize,
}

fn out_cutoff_for(policy: OutCutoffPolicy, c_max: f64) -> usize {
    match policy {
        OutCutoffPolicy::Auto => default_poisson_cutoff(c_max),
        OutCutoffPolicy::Fixed { out_cutoff } => out_cutoff,
    }
}

/// `ln q` of the output law induced by `weights` on `positions`, always with
/// an overflow slot at `out_cutoff + 1`.
fn output_log_law(positions: &[f64], weights: &[f64], out_cutoff: usize) -> Vec<f64> {
    let mut q = vec![0.0; out_cutoff + 2];
    for (&c, &w) in positions.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let col = poisson_column(c, out_cutoff);
        for (l, p) in col.entries() {
            q[l] += w * p;
        }
        q[out_cutoff + 1] += w * col.tail;
    }
    q.into_iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect()
}

fn mutual_info_nats(positions: &[f64], weights: &[f64], out_cutoff: usize) -> f64 {
    let cols: Vec<(ChannelColumn, f64)> = positions
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&c, &w)| (poisson_column(c, out_cutoff), w))
        .collect();
    let mut q = vec![0.0; out_cutoff + 2];
    for (col, w) in &cols {
        for (l, p) in col.entries() {
            q[l] += w * p;
        }
        q[out_cutoff + 1] += w * col.tail;
    }
    let lnq: Vec<f64> = q.into_iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    cols.iter()
        .map(|(col, w)| w * divergence_and_slope(col, &lnq, out_cutoff).0)
        .sum::<f64>()
        .max(0.0)
}

/// Mutual information of a mass-point ensemble through the Poisson channel.
pub fn rate_of_ensemble(prior: &MassPointPrior) -> Result<f64> {
    let cutoff = default_poisson_cutoff(prior.intensities.max_intensity());
    let channel = build_poisson_channel(&prior.intensities, cutoff);
    crate::ba::mutual_information(&prior.weights, &channel)
}

/// Rate of on-off keying `{0, c}` with the mean fixed at `output_mean`.
pub fn on_off_rate(output_mean: f64, on_intensity: f64) -> Result<f64> {
    if !(output_mean > 0.0) || !(on_intensity >= output_mean) {
        return Err(invalid("on_intensity", on_intensity, "must be at least the mean, which must be positive"));
    }
    if on_intensity == output_mean {
        return Ok(0.0);
    }
    let w = output_mean / on_intensity;
    rate_of_ensemble(&MassPointPrior::new(vec![0.0, on_intensity], vec![1.0 - w, w])?)
}

/// Best on-off keying rate at the given mean, `(rate, on intensity)`.
pub fn best_on_off_rate(output_mean: f64) -> Result<(f64, f64)> {
    if output_mean == 0.0 {
        return Ok((0.0, 0.0));
    }
    on_off_rate(output_mean, output_mean * 2.0)?;
    let lo = output_mean.ln();
    let hi = (output_mean * 1e4).max(output_mean + 200.0).ln();
    let grid: Vec<f64> = (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).collect();
    let f = |u: f64| on_off_rate(output_mean, u.exp().max(output_mean)).unwrap_or(0.0);
    let m = maximize_scan_refine(f, &grid, 1e-9);
    Ok((m.value, m.x.exp()))
}

/// Capacity of the Poisson channel with mean received intensity
/// `output_mean`.
pub fn poisson_capacity(output_mean: f64, config: &ContinuousSolverConfig) -> Result<PoissonCapacity> {
    poisson_capacity_observed(output_mean, config, |_, _| {})
}

/// [`poisson_capacity`] calling `observer(outer_cycle, rate_bits)` after each
/// cycle.
pub fn poisson_capacity_observed<F: FnMut(usize, f64)>(
    output_mean: f64,
    config: &ContinuousSolverConfig,
    mut observer: F,
) -> Result<PoissonCapacity> {
    config.validate()?;
    if !(output_mean >= 0.0) || !output_mean.is_finite() {
        return Err(invalid("output_mean", output_mean, "must be finite and nonnegative"));
    }
    if output_mean == 0.0 {
        let prior = MassPointPrior::new(vec![0.0], vec![1.0])?;
        let capacity = CapacityResult {
            rate_bits: 0.0,
            prior: prior.weights.clone(),
            multiplier: 0.0,
            iterations: 0,
            gap_bits: 0.0,
            mean_constraint_residual: 0.0,
            converged: true,
        };
        return Ok(PoissonCapacity {
            capacity,
            prior,
            outer_iterations: 0,
            rate_history: vec![0.0],
        });
    }

    let s = output_mean;
    let n = config.n_points;
    // exponential quantiles, first point pinned at zero
    let mut positions: Vec<f64> = (0..n).map(|i| -s * (-(i as f64) / n as f64).ln_1p()).collect();
    let mut history: Vec<f64> = Vec::new();
    let slack = 1e-3 * config.tolerance;
    let mut converged = false;
    let mut outer = 0;

    let (mut result, mut snap) = solve_weights(&positions, None, s, config)?;
    loop {
        outer += 1;
        let mut w = result.prior.probs().to_vec();

        // collapse clusters that stand for a single atom when that costs nothing
        if let Some((cand_c, cand_w)) = collapse_clusters(&positions, &w) {
            let (res2, snap2) = solve_weights(&cand_c, Some(&cand_w), s, config)?;
            if res2.rate_bits >= result.rate_bits - slack {
                positions = cand_c;
                result = res2;
                snap = snap2;
                w = result.prior.probs().to_vec();
            }
        }

        let births = probe_violations(&positions, &w, snap.lambda, s, snap.info, config);
        result.gap_bits = result.gap_bits.max(births.sup_violation_bits);
        let rate = result.rate_bits;
        observer(outer, rate);
        let improvement = history.last().map_or(f64::INFINITY, |&prev| rate - prev);
        history.push(rate);
        if improvement.abs() < config.tolerance {
            converged = true;
            break;
        }
        if outer >= config.max_outer_iterations {
            break;
        }

        // positions, with the weights fixed
        let mut moved_info = snap.info;
        let mut step = config.position_step;
        for _ in 0..MOVES_PER_CYCLE {
            let (moved, moved_w, used_step) = move_points(&positions, &w, &snap, s, step, config);
            if used_step == 0.0 {
                break;
            }
            step = (used_step * 2.0).min(config.position_step * 1e3);
            positions = moved;
            w = moved_w;
            let cutoff = out_cutoff_for(config.out_cutoff, positions[positions.len() - 1]);
            snap.lnq = output_log_law(&positions, &w, cutoff);
            snap.out_cutoff = cutoff;
            let info = mutual_info_nats(&positions, &w, cutoff);
            let gain = info - moved_info;
            moved_info = info;
            if gain < 1e-3 * config.tolerance * LN2 {
                break;
            }
        }
        merge_points(&mut positions, &mut w);
        for c in births.points {
            insert_point(&mut positions, &mut w, c);
        }
        let (res, sn) = solve_weights(&positions, Some(&w), s, config)?;
        result = res;
        snap = sn;
    }

    let (positions, probs) = compact(&positions, result.prior.probs());
    result.prior = PriorDistribution::from_parts_unchecked(probs.clone(), positions.clone(), 0.0);
    result.converged = converged;
    result.iterations = outer;
    let mean: f64 = positions.iter().zip(&probs).map(|(c, w)| c * w).sum();
    result.mean_constraint_residual = mean - s;
    let prior = MassPointPrior {
        intensities: IntensityAlphabet::new(positions)?,
        weights: result.prior.clone(),
    };
    Ok(PoissonCapacity {
        capacity: result,
        prior,
        outer_iterations: outer,
        rate_history: history,
    })
}

/// Points whose square roots lie within this of each other are candidates
/// for collapsing; the Poisson law has standard deviation 1/2 in that scale.
const CLUSTER_SQRT_RADIUS: f64 = 0.05;

/// Replace runs of close points by their weighted barycentre. Returns `None`
/// if there is nothing to collapse.
fn collapse_clusters(positions: &[f64], weights: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut out_c: Vec<f64> = Vec::with_capacity(positions.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(positions.len());
    let mut anchor = f64::NEG_INFINITY;
    let mut changed = false;
    for (&c, &w) in positions.iter().zip(weights) {
        if let (Some(lc), Some(lw)) = (out_c.last_mut(), out_w.last_mut()) {
            if c.sqrt() - anchor < CLUSTER_SQRT_RADIUS {
                let total = *lw + w;
                if *lc != 0.0 && total > 0.0 {
                    *lc = (*lc * *lw + c * w) / total;
                }
                *lw = total;
                changed = true;
                continue;
            }
        }
        anchor = c.sqrt();
        out_c.push(c);
        out_w.push(w);
    }
    changed.then_some((out_c, out_w))
}

fn solve_weights(
    positions: &[f64],
    warm: Option<&[f64]>,
    s: f64,
    config: &ContinuousSolverConfig,
) -> Result<(CapacityResult, Snapshot)> {
    let c_max = *positions.last().expect("at least one point");
    let cutoff = out_cutoff_for(config.out_cutoff, c_max);
    let alphabet = IntensityAlphabet::new(positions.to_vec())?;
    let channel = build_poisson_channel(&alphabet, cutoff);
    let spec = ConstraintSpec::new(positions.to_vec(), s)?;
    let warm = warm.filter(|w| w.len() == positions.len());
    let result = ba_solve_observed(&channel, &spec, &config.weights, warm, |_| {})?;
    let lnq = output_log_law(positions, result.prior.probs(), cutoff);
    let snap = Snapshot {
        info: result.rate_bits * LN2,
        lambda: result.multiplier,
        lnq,
        out_cutoff: cutoff,
    };
    Ok((result, snap))
}

/// Gradient ascent on the positions. The mean is restored by trading weight
/// between the zero point and the rest, as in on-off keying. Returns the
/// accepted positions and weights and the step used (zero if no step was
/// accepted).
fn move_points(
    positions: &[f64],
    weights: &[f64],
    snap: &Snapshot,
    s: f64,
    step: f64,
    config: &ContinuousSolverConfig,
) -> (Vec<f64>, Vec<f64>, f64) {
    let slopes: Vec<f64> = positions
        .iter()
        .map(|&c| {
            let col = poisson_column(c, snap.out_cutoff);
            divergence_and_slope(&col, &snap.lnq, snap.out_cutoff).1 + snap.lambda
        })
        .collect();
    let mut base: Option<(usize, f64)> = None;
    let mut h = step;
    for _ in 0..LINE_SEARCH_HALVINGS {
        // natural gradient: the Poisson Fisher information is 1/c
        let mut pairs: Vec<(f64, f64)> = positions
            .iter()
            .zip(&slopes)
            .zip(weights)
            .enumerate()
            .map(|(i, ((&c, &g), &w))| (if i == 0 { 0.0 } else { c * (h * g).clamp(-LN2, LN2).exp() }, w))
            .collect();
        pairs[1..].sort_by(|a, b| a.0.total_cmp(&b.0));
        let trial: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let trial_w0: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Some(trial_w) = restore_mean(&trial, &trial_w0, s) {
            if trial.windows(2).all(|p| p[0] < p[1]) {
                let c_max = trial[trial.len() - 1].max(positions[positions.len() - 1]);
                let cutoff = out_cutoff_for(config.out_cutoff, c_max);
                let base = match base {
                    Some((k, v)) if k == cutoff => v,
                    _ => {
                        let v = mutual_info_nats(positions, weights, cutoff);
                        base = Some((cutoff, v));
                        v
                    }
                };
                if mutual_info_nats(&trial, &trial_w, cutoff) >= base {
                    return (trial, trial_w, h);
                }
            }
        }
        h *= 0.5;
    }
    (positions.to_vec(), weights.to_vec(), 0.0)
}

/// Scale the weights of the nonzero points so the mean is `s`, putting the
/// remainder on the zero point.
fn restore_mean(positions: &[f64], weights: &[f64], s: f64) -> Option<Vec<f64>> {
    let moment: f64 = positions.iter().zip(weights).map(|(c, w)| c * w).sum();
    let active: f64 = weights[1..].iter().sum();
    if !(moment > 0.0) {
        return None;
    }
    let t = s / moment;
    if t * active > 1.0 {
        return None;
    }
    let mut w: Vec<f64> = weights.iter().map(|v| v * t).collect();
    w[0] = 1.0 - t * active;
    Some(w)
}

/// Merge neighbours closer than a fraction of the range and drop points
/// with negligible weight (never the point at zero).
fn merge_points(positions: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let range = positions.last().copied().unwrap_or(0.0) - positions[0];
    let tol = MERGE_FRACTION * range.max(1e-300);
    let mut out_c: Vec<f64> = Vec::with_capacity(positions.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(positions.len());
    for (&c, &w) in positions.iter().zip(weights.iter()) {
        if let (Some(lc), Some(lw)) = (out_c.last_mut(), out_w.last_mut()) {
            if c - *lc < tol {
                let total = *lw + w;
                if *lc != 0.0 && total > 0.0 {
                    *lc = (*lc * *lw + c * w) / total;
                }
                *lw = total;
                continue;
            }
        }
        out_c.push(c);
        out_w.push(w);
    }
    let mut i = 1;
    while i < out_c.len() {
        if out_w[i] < PRUNE_WEIGHT && out_c.len() > 2 {
            out_c.remove(i);
            out_w.remove(i);
        } else {
            i += 1;
        }
    }
    *positions = out_c;
    *weights = out_w;
}

fn insert_point(positions: &mut Vec<f64>, weights: &mut Vec<f64>, c: f64) {
    let idx = positions.partition_point(|&x| x < c);
    if positions.get(idx) == Some(&c) || (idx > 0 && positions[idx - 1] == c) {
        return;
    }
    positions.insert(idx, c);
    weights.insert(idx, 0.0);
}

/// Strip zero-weight points after the final solve (the zero point stays).
fn compact(positions: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut c = Vec::new();
    let mut w = Vec::new();
    for (i, (&x, &v)) in positions.iter().zip(weights).enumerate() {
        if i == 0 || v > 0.0 {
            c.push(x);
            w.push(v);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (c, w)
}

struct Births {
    points: Vec<f64>,
    sup_violation_bits: f64,
}

/// Scan `J(c) = D(Poisson(c) || q) + lambda (c - S)` against the current
/// rate on a grid reaching beyond the largest point.
fn probe_violations(
    positions: &[f64],
    weights: &[f64],
    lambda: f64,
    s: f64,
    info: f64,
    config: &ContinuousSolverConfig,
) -> Births {
    // beyond the points that carry weight the optimality condition fails
    // forever (the optimal law has unbounded support), so probe near them
    let c_max = positions
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w >= PRUNE_WEIGHT)
        .map(|(&c, _)| c)
        .fold(s, f64::max);
    let reach = c_max * 1.5 + 10.0;
    let cutoff = out_cutoff_for(config.out_cutoff, reach).max(out_cutoff_for(config.out_cutoff, c_max));
    let lnq = output_log_law(positions, weights, cutoff);
    let lnq = &lnq;
    let n = config.probe_points;
    // uniform in sqrt(c), where the Poisson spread is constant
    let grid: Vec<f64> = (0..=n).map(|i| reach * (i as f64 / n as f64).powi(2)).collect();
    let j = |c: f64| {
        let col = poisson_column(c, cutoff);
        divergence_and_slope(&col, lnq, cutoff).0 + lambda * (c - s) - info
    };
    let values: Vec<f64> = grid.iter().map(|&c| j(c)).collect();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 0..values.len() {
        let left = if i == 0 { f64::NEG_INFINITY } else { values[i - 1] };
        let right = values.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if values[i] >= left && values[i] >= right {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(grid.len() - 1)];
            let m = if hi > lo {
                maximize_brent(j, lo, hi, 1e-10 * reach, 100)
            } else {
                crate::optimize::Maximum {
                    x: grid[i],
                    value: values[i],
                    evaluations: 0,
                }
            };
            let (x, v) = if m.value >= values[i] { (m.x, m.value) } else { (grid[i], values[i]) };
            peaks.push((x, v));
        }
    }
    let sup = peaks.iter().map(|p| p.1).fold(0.0, f64::max) / LN2;
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let tol = config.tolerance * LN2;
    let near_existing = |x: f64| {
        positions
            .iter()
            .any(|&c| (c.sqrt() - x.sqrt()).abs() < CLUSTER_SQRT_RADIUS)
    };
    let points = peaks
        .into_iter()
        .filter(|&(x, v)| v > tol && x > 0.0 && !near_existing(x))
        .take(MAX_BIRTHS)
        .map(|p| p.0)
        .collect();
    Births {
        points,
        sup_violation_bits: sup.max(0.0),
    }
}
