//! Blahut-Arimoto iteration under a linear cost constraint.
//!
//! The production path ([`ba_solve`]) keeps the prior in the log domain and
//! fuses the posterior and prior steps: with `D_x = D(W_x || q)` the update
//! `p_x <- p_x exp(D_x + lambda f_x) / Z` is algebraically the same as
//! forming the posterior table and re-estimating the prior from it, but costs
//! two passes over the stored channel entries instead of a dense table.
//! The explicit-table steps ([`phi_update`], [`prior_update`],
//! [`solve_multiplier`], [`ba_step`]) are kept for small channels and as a
//! cross-check.
//!
//! Stopping uses the dual bound `C <= max_x [D(W_x || q) + lambda (f_x - K)]`,
//! valid for any output law `q` and any `lambda`. Besides the current output
//! law the bound is also evaluated at `q` mixed with a small amount of the
//! uniform law, which tames symbols near the alphabet edge whose outputs the
//! current prior barely reaches.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::analytic::PhotonBudget;
use crate::channel::{build_fock_channel, ChannelMatrix, FockAlphabet, Transmission};
use crate::error::{invalid, Error, Result};
use crate::prior::PriorDistribution;

const LN2: f64 = std::f64::consts::LN_2;
const MAX_DOUBLINGS: usize = 200;
const LADDER: [f64; 6] = [1e-16, 1e-15, 1e-14, 1e-13, 1e-12, 1e-10];
const LADDER_EVERY: usize = 16;
const WARM_MIX: f64 = 1e-8;
const NORM_TOL: f64 = 1e-10;
const SQUAREM_STEP0: f64 = 4.0;
const SQUAREM_STEP_MIN: f64 = 2.0;
const SQUAREM_FLOOR: f64 = 3.0;
const PROBE_ITERATIONS: usize = 2000;
// ln 1e-4; ln 1e6, ln 1e3, ln 10
const BOOST_LN_MASS: f64 = -4.0 * LN_10;
const BOOST_JUMPS: [f64; 3] = [6.0 * LN_10, 3.0 * LN_10, LN_10];

/// Linear cost constraint `sum_x p_x f(x) = K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    weights: Vec<f64>,
    target: f64,
}

impl ConstraintSpec {
    pub fn new(weights: Vec<f64>, target: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weights", 0.0, "no input symbols"));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights", w, "costs must be finite and nonnegative"));
        }
        if !target.is_finite() {
            return Err(invalid("target", target, "must be finite"));
        }
        let spec = Self { weights, target };
        let (min, max) = (spec.min_weight(), spec.max_weight());
        if target < min || target > max {
            return Err(Error::Infeasible { target, min, max });
        }
        Ok(spec)
    }

    /// Photon-number cost `f(k) = k` over `0..n_inputs`.
    pub fn photon_number(n_inputs: usize, nbar: f64) -> Result<Self> {
        Self::new((0..n_inputs).map(|k| k as f64).collect(), nbar)
    }

    /// Same mean for every symbol: the constraint is inactive.
    pub fn unconstrained(n_inputs: usize) -> Self {
        Self {
            weights: vec![0.0; n_inputs],
            target: 0.0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How the Fock alphabet is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// Inputs `0..=k_max`.
    Fixed { k_max: usize },
    /// Grow the alphabet until the optimal prior puts less than
    /// `tail_threshold` on its last `margin` symbols.
    Adaptive {
        tail_threshold: f64,
        margin: usize,
        growth: f64,
        max_cutoff: usize,
    },
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy::Adaptive {
            tail_threshold: 1e-12,
            margin: 10,
            growth: 1.5,
            max_cutoff: 400_000,
        }
    }
}

/// Update rule on top of the plain iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    /// Textbook iteration.
    None,
    /// Squared extrapolation of the log-prior across two plain steps. A
    /// candidate is kept only if it does not lower the mutual information,
    /// so the lower bound still never decreases.
    #[default]
    Squarem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the certified capacity gap is below this (bits).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cutoff_policy: CutoffPolicy,
    /// Initial bracket for the multiplier, widened geometrically as needed.
    pub multiplier_bracket: (f64, f64),
    pub acceleration: Acceleration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 100_000,
            cutoff_policy: CutoffPolicy::default(),
            multiplier_bracket: (-1.0, 1.0),
            acceleration: Acceleration::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", self.tolerance, "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", 0.0, "must be positive"));
        }
        let (lo, hi) = self.multiplier_bracket;
        if !(lo < hi) {
            return Err(invalid("multiplier_bracket", lo, "lower end must be below upper end"));
        }
        if let CutoffPolicy::Adaptive {
            tail_threshold,
            growth,
            ..
        } = self.cutoff_policy
        {
            if !(tail_threshold > 0.0) {
                return Err(invalid("tail_threshold", tail_threshold, "must be positive"));
            }
            if !(growth > 1.0) {
                return Err(invalid("growth", growth, "must exceed one"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub rate_bits: f64,
    pub prior: PriorDistribution,
    /// Multiplier on the cost, in nats per unit cost.
    pub multiplier: f64,
    pub iterations: usize,
    pub gap_bits: f64,
    pub mean_constraint_residual: f64,
    pub converged: bool,
}

impl CapacityResult {
    /// Certified upper bound on the capacity of the (truncated) channel.
    pub fn upper_bound_bits(&self) -> f64 {
        self.rate_bits + self.gap_bits
    }
}

/// Progress record passed to observers once per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub rate_lower_bound_bits: f64,
    pub capacity_gap_bits: f64,
    pub multiplier: f64,
}

/// Posterior table `Phi[x | y]`, stored output-major. When the channel has
/// overflow mass the last output is the aggregated overflow symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    n_inputs: usize,
    n_outputs: usize,
    data: Vec<f64>,
}

impl PhiTable {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.n_inputs + x]
    }

    /// Distribution over inputs given output `y`.
    pub fn column(&self, y: usize) -> &[f64] {
        &self.data[y * self.n_inputs..(y + 1) * self.n_inputs]
    }
}

/// One step of the explicit-table iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BAState {
    pub prior: PriorDistribution,
    pub phi: PhiTable,
    pub iteration: usize,
    pub rate_lower_bound: f64,
    pub capacity_gap: f64,
}

// ---------------------------------------------------------------------------
// shared kernels

/// Precomputed per-channel data for the fused iteration.
pub(crate) struct Kernel<'a> {
    channel: &'a ChannelMatrix,
    neg_entropy: Vec<f64>,
    n_out: usize,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(channel: &'a ChannelMatrix) -> Self {
        let neg_entropy = channel
            .columns()
            .iter()
            .map(|c| {
                let xl = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
                c.probs.iter().map(|&p| xl(p)).sum::<f64>() + xl(c.tail)
            })
            .collect();
        let n_out = channel.n_outputs() + usize::from(channel.has_overflow());
        Self {
            channel,
            neg_entropy,
            n_out,
        }
    }

    /// Output law including the overflow symbol when present.
    pub(crate) fn output_law(&self, p: &[f64], q: &mut Vec<f64>) {
        q.clear();
        q.resize(self.n_out, 0.0);
        let over = self.channel.n_outputs();
        for (col, &px) in self.channel.columns().iter().zip(p) {
            if px == 0.0 {
                continue;
            }
            for (dst, &w) in q[col.offset..col.offset + col.probs.len()].iter_mut().zip(&col.probs) {
                *dst += px * w;
            }
            if col.tail > 0.0 {
                q[over] += px * col.tail;
            }
        }
    }

    /// `ln q` floored at the smallest normal double, after mixing `eps` of
    /// the uniform law into `q`.
    pub(crate) fn log_law(&self, q: &[f64], eps: f64, lnq: &mut Vec<f64>) {
        let u = eps / self.n_out as f64;
        lnq.clear();
        lnq.extend(q.iter().map(|&v| ((1.0 - eps) * v + u).max(f64::MIN_POSITIVE).ln()));
    }

    /// Divergence of input `x`'s output law from the law whose log is `lnq`.
    #[inline]
    pub(crate) fn divergence(&self, x: usize, lnq: &[f64]) -> f64 {
        let col = &self.channel.columns()[x];
        let cross: f64 = col
            .probs
            .iter()
            .zip(&lnq[col.offset..col.offset + col.probs.len()])
            .map(|(w, l)| w * l)
            .sum();
        let over = if col.tail > 0.0 {
            col.tail * lnq[self.channel.n_outputs()]
        } else {
            0.0
        };
        self.neg_entropy[x] - cross - over
    }

    pub(crate) fn divergences(&self, lnq: &[f64], d: &mut Vec<f64>) {
        d.clear();
        d.extend((0..self.channel.n_inputs()).map(|x| self.divergence(x, lnq)));
    }

    /// `max_x [D(W_x || q_eps) + lambda (f_x - K)]` minimized over the
    /// mixing ladder; `lnq0` is the unmixed log law.
    fn tightest_dual(&self, q: &[f64], lnq0: &[f64], lambda: f64, f: &[f64], k: f64, scratch: &mut Vec<f64>) -> f64 {
        let mut best = self.dual_at(lnq0, lambda, f, k);
        for &eps in &LADDER {
            self.log_law(q, eps, scratch);
            best = best.min(self.dual_at(scratch, lambda, f, k));
        }
        best
    }

    fn dual_at(&self, lnq: &[f64], lambda: f64, f: &[f64], k: f64) -> f64 {
        (0..self.channel.n_inputs())
            .map(|x| self.divergence(x, lnq) + lambda * (f[x] - k))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The plain update evaluated at log-prior `theta`.
struct Step {
    theta: Vec<f64>,
    /// Multiplier that produced `theta`.
    lambda: f64,
    /// `I(p)` in nats.
    info: f64,
    d: Vec<f64>,
    q: Vec<f64>,
    lnq: Vec<f64>,
    next_lambda: f64,
    next: Vec<f64>,
}

impl Kernel<'_> {
    fn step(&self, theta: Vec<f64>, lambda: f64, f: &[f64], k: f64, bracket: (f64, f64)) -> Result<Step> {
        let p: Vec<f64> = theta.iter().map(|v| v.exp()).collect();
        let (mut q, mut lnq, mut d) = (Vec::new(), Vec::new(), Vec::new());
        self.output_law(&p, &mut q);
        self.log_law(&q, 0.0, &mut lnq);
        self.divergences(&lnq, &mut d);
        let info = p.iter().zip(&d).map(|(a, b)| a * b).sum();
        let s: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + b).collect();
        let next_lambda = solve_lambda(&s, f, k, lambda, bracket)?;
        let mut next = Vec::with_capacity(s.len());
        log_softmax_into(&s, f, next_lambda, &mut next);
        Ok(Step {
            theta,
            lambda,
            info,
            d,
            q,
            lnq,
            next_lambda,
            next,
        })
    }
}

fn dual_from(d: &[f64], f: &[f64], k: f64, lambda: f64) -> f64 {
    d.iter()
        .zip(f)
        .map(|(dx, fx)| dx + lambda * (fx - k))
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Moments {
    log_z: f64,
    mean: f64,
    var: f64,
}

/// Log-partition, mean and variance of `f` under `softmax(s + lambda f)`.
fn moments(s: &[f64], f: &[f64], lambda: f64) -> Moments {
    let m = s
        .iter()
        .zip(f)
        .map(|(a, b)| a + lambda * b)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut first) = (0.0, 0.0);
    for (a, b) in s.iter().zip(f) {
        let w = (a + lambda * b - m).exp();
        z += w;
        first += w * b;
    }
    let mean = first / z;
    let var = s
        .iter()
        .zip(f)
        .map(|(a, b)| (a + lambda * b - m).exp() * (b - mean) * (b - mean))
        .sum::<f64>()
        / z;
    Moments {
        log_z: m + z.ln(),
        mean,
        var,
    }
}

/// Find `lambda` with `mean_f(softmax(s + lambda f)) = target`.
///
/// The mean is nondecreasing in `lambda` with derivative equal to the
/// variance of `f`, so after bracketing a Newton step is tried and replaced
/// by bisection whenever it leaves the bracket.
fn solve_lambda(s: &[f64], f: &[f64], target: f64, start: f64, bracket: (f64, f64)) -> Result<f64> {
    let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if fmax - fmin == 0.0 {
        return Ok(start);
    }
    let tol = 1e-12 * target.abs().max(1.0);
    let residual = |l: f64| moments(s, f, l).mean - target;

    let (mut lo, mut hi) = (start + bracket.0, start + bracket.1);
    let mut width = bracket.0.abs().max(1.0);
    let mut n = 0;
    while residual(lo) > 0.0 {
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::MultiplierBracket { doublings: n - 1 });
        }
        hi = lo;
        width *= 2.0;
        lo = start - width;
    }
    let mut width = bracket.1.abs().max(1.0);
    let mut n = 0;
    while residual(hi) < 0.0 {
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::MultiplierBracket { doublings: n - 1 });
        }
        lo = hi;
        width *= 2.0;
        hi = start + width;
    }

    let mut lambda = start.clamp(lo, hi);
    let mut best = (f64::INFINITY, lambda);
    for _ in 0..500 {
        let mo = moments(s, f, lambda);
        let r = mo.mean - target;
        if r.abs() < best.0 {
            best = (r.abs(), lambda);
        }
        if r.abs() <= tol {
            return Ok(lambda);
        }
        if r > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lambda.abs().max(1e-300) {
            break;
        }
        let newton = if mo.var > 0.0 { lambda - r / mo.var } else { f64::NAN };
        lambda = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // residual at its floating-point floor; the caller reports it
    Ok(best.1)
}

fn log_softmax_into(s: &[f64], f: &[f64], lambda: f64, out: &mut Vec<f64>) {
    let lz = moments(s, f, lambda).log_z;
    out.clear();
    out.extend(s.iter().zip(f).map(|(a, b)| a + lambda * b - lz));
}

fn check_prior(prior: &PriorDistribution, channel: &ChannelMatrix) -> Result<()> {
    if prior.len() != channel.n_inputs() {
        return Err(Error::DimensionMismatch {
            prior: prior.len(),
            channel: channel.n_inputs(),
        });
    }
    let s: f64 = prior.probs().iter().sum();
    if (s - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { sum: s });
    }
    Ok(())
}

fn check_constraint(constraint: &ConstraintSpec, channel: &ChannelMatrix) -> Result<()> {
    if constraint.weights.len() != channel.n_inputs() {
        return Err(Error::DimensionMismatch {
            prior: constraint.weights.len(),
            channel: channel.n_inputs(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// explicit-table operations

/// `I(X; Y)` in bits. Overflow mass is treated as one extra output symbol.
pub fn mutual_information(prior: &PriorDistribution, channel: &ChannelMatrix) -> Result<f64> {
    check_prior(prior, channel)?;
    let kern = Kernel::new(channel);
    let (mut q, mut lnq) = (Vec::new(), Vec::new());
    kern.output_law(prior.probs(), &mut q);
    kern.log_law(&q, 0.0, &mut lnq);
    let nats: f64 = prior
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x, &p)| p * kern.divergence(x, &lnq))
        .sum();
    Ok((nats / LN2).max(0.0))
}

/// Posterior `Phi[x | y] = p(y | x) p_x / q_y`. Outputs the prior never
/// reaches get a uniform column.
pub fn phi_update(prior: &PriorDistribution, channel: &ChannelMatrix) -> Result<PhiTable> {
    check_prior(prior, channel)?;
    let n_in = channel.n_inputs();
    let dense = channel.dense_with_overflow();
    let n_out = channel.n_outputs() + usize::from(channel.has_overflow());
    let mut data = vec![0.0; n_in * n_out];
    for y in 0..n_out {
        let col = &mut data[y * n_in..(y + 1) * n_in];
        for (x, v) in col.iter_mut().enumerate() {
            *v = dense[x][y] * prior.probs()[x];
        }
        let qy: f64 = col.iter().sum();
        if qy > 0.0 {
            col.iter_mut().for_each(|v| *v /= qy);
        } else {
            col.iter_mut().for_each(|v| *v = 1.0 / n_in as f64);
        }
    }
    Ok(PhiTable {
        n_inputs: n_in,
        n_outputs: n_out,
        data,
    })
}

fn phi_scores(phi: &PhiTable, channel: &ChannelMatrix) -> Result<Vec<f64>> {
    if phi.n_inputs != channel.n_inputs() {
        return Err(Error::DimensionMismatch {
            prior: phi.n_inputs,
            channel: channel.n_inputs(),
        });
    }
    let dense = channel.dense_with_overflow();
    Ok((0..phi.n_inputs)
        .map(|x| {
            (0..phi.n_outputs)
                .filter(|&y| dense[x][y] > 0.0)
                .map(|y| dense[x][y] * phi.get(x, y).ln())
                .sum()
        })
        .collect())
}

/// `p_x ∝ exp(lambda f_x + sum_y p(y | x) ln Phi[x | y])`.
pub fn prior_update(phi: &PhiTable, channel: &ChannelMatrix, lambda: f64, weights: &[f64]) -> Result<PriorDistribution> {
    if weights.len() != channel.n_inputs() {
        return Err(Error::DimensionMismatch {
            prior: weights.len(),
            channel: channel.n_inputs(),
        });
    }
    let s = phi_scores(phi, channel)?;
    let r: Vec<f64> = s.iter().zip(weights).map(|(a, f)| a + lambda * f).collect();
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegeneratePrior);
    }
    let unnorm: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegeneratePrior);
    }
    let probs = unnorm.iter().map(|v| v / z).collect();
    Ok(PriorDistribution::from_parts_unchecked(probs, weights.to_vec(), 0.0))
}

/// Multiplier that makes [`prior_update`] meet the constraint.
pub fn solve_multiplier(phi: &PhiTable, channel: &ChannelMatrix, constraint: &ConstraintSpec) -> Result<f64> {
    check_constraint(constraint, channel)?;
    let s = phi_scores(phi, channel)?;
    solve_lambda(&s, &constraint.weights, constraint.target, 0.0, (-1.0, 1.0))
}

impl BAState {
    /// Maximum-entropy prior meeting the constraint (thermal for photon-number
    /// costs) and its posterior table.
    pub fn initial(channel: &ChannelMatrix, constraint: &ConstraintSpec) -> Result<Self> {
        check_constraint(constraint, channel)?;
        let zeros = vec![0.0; channel.n_inputs()];
        let lambda = solve_lambda(&zeros, &constraint.weights, constraint.target, 0.0, (-1.0, 1.0))?;
        let mut logp = Vec::new();
        log_softmax_into(&zeros, &constraint.weights, lambda, &mut logp);
        let prior = PriorDistribution::from_parts_unchecked(
            logp.iter().map(|v| v.exp()).collect(),
            constraint.weights.clone(),
            0.0,
        );
        Self::evaluate(prior, channel, constraint, lambda, 0)
    }

    fn evaluate(prior: PriorDistribution, channel: &ChannelMatrix, constraint: &ConstraintSpec, lambda: f64, iteration: usize) -> Result<Self> {
        let phi = phi_update(&prior, channel)?;
        let rate = mutual_information(&prior, channel)?;
        let kern = Kernel::new(channel);
        let (mut q, mut lnq) = (Vec::new(), Vec::new());
        kern.output_law(prior.probs(), &mut q);
        kern.log_law(&q, 0.0, &mut lnq);
        let upper = kern.dual_at(&lnq, lambda, &constraint.weights, constraint.target) / LN2;
        Ok(Self {
            prior,
            phi,
            iteration,
            rate_lower_bound: rate,
            capacity_gap: (upper - rate).max(0.0),
        })
    }
}

/// One explicit iteration: multiplier, prior re-estimate, new posterior.
pub fn ba_step(state: &BAState, channel: &ChannelMatrix, constraint: &ConstraintSpec) -> Result<BAState> {
    let lambda = solve_multiplier(&state.phi, channel, constraint)?;
    let prior = prior_update(&state.phi, channel, lambda, &constraint.weights)?;
    BAState::evaluate(prior, channel, constraint, lambda, state.iteration + 1)
}

// ---------------------------------------------------------------------------
// fused solver

/// Capacity of `channel` under `constraint`.
pub fn ba_solve(channel: &ChannelMatrix, constraint: &ConstraintSpec, config: &SolverConfig) -> Result<CapacityResult> {
    ba_solve_observed(channel, constraint, config, None, |_| {})
}

/// [`ba_solve`] with an optional starting prior and a per-iteration callback.
///
/// A warm start is mixed with a little of the maximum-entropy prior so that
/// no symbol starts at zero mass, then pulled back onto the constraint.
pub fn ba_solve_observed<F: FnMut(&IterationReport)>(
    channel: &ChannelMatrix,
    constraint: &ConstraintSpec,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
    mut observer: F,
) -> Result<CapacityResult> {
    solve_dyn(channel, constraint, config, warm_start, &mut observer)
}

fn solve_dyn(
    channel: &ChannelMatrix,
    constraint: &ConstraintSpec,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
    observer: &mut dyn FnMut(&IterationReport),
) -> Result<CapacityResult> {
    config.validate()?;
    check_constraint(constraint, channel)?;
    let f = &constraint.weights;
    let k = constraint.target;
    let (fmin, fmax) = (constraint.min_weight(), constraint.max_weight());
    if k < fmin || k > fmax {
        return Err(Error::Infeasible { target: k, min: fmin, max: fmax });
    }
    if fmax > fmin && (k == fmin || k == fmax) {
        return solve_on_boundary(channel, constraint, config, observer);
    }

    let n = channel.n_inputs();
    let kern = Kernel::new(channel);
    let mut logp: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => {
            let total: f64 = w.iter().sum();
            w.iter()
                .map(|&v| ((1.0 - WARM_MIX) * v / total + WARM_MIX / n as f64).ln())
                .collect()
        }
        Some(w) => {
            return Err(Error::DimensionMismatch {
                prior: w.len(),
                channel: n,
            })
        }
        None => vec![0.0; n],
    };
    let lambda = solve_lambda(&logp, f, k, 0.0, config.multiplier_bracket)?;
    let seed = logp.clone();
    log_softmax_into(&seed, f, lambda, &mut logp);

    let mut cur = kern.step(logp, lambda, f, k, config.multiplier_bracket)?;
    let mut scratch = Vec::new();
    let mut step_max = SQUAREM_STEP0;
    let mut t = 0;
    let mut gap;
    let converged = loop {
        // any multiplier gives a valid bound; take the better of the two
        let (u_now, u_next) = (dual_from(&cur.d, f, k, cur.lambda), dual_from(&cur.d, f, k, cur.next_lambda));
        let best_lambda = if u_next < u_now { cur.next_lambda } else { cur.lambda };
        gap = (u_now.min(u_next) - cur.info) / LN2;
        let last = t + 1 >= config.max_iterations;
        if gap >= config.tolerance && ((t + 1) % LADDER_EVERY == 0 || last) {
            let u = kern.tightest_dual(&cur.q, &cur.lnq, best_lambda, f, k, &mut scratch);
            gap = gap.min((u - cur.info) / LN2);
        }
        observer(&IterationReport {
            iteration: t,
            rate_lower_bound_bits: cur.info.max(0.0) / LN2,
            capacity_gap_bits: gap.max(0.0),
            multiplier: cur.lambda,
        });
        if gap < config.tolerance {
            break true;
        }
        if last {
            break false;
        }
        let plain = kern.step(cur.next.clone(), cur.next_lambda, f, k, config.multiplier_bracket)?;
        cur = match config.acceleration {
            Acceleration::None => plain,
            Acceleration::Squarem => {
                match squarem_candidate(&cur, &plain, step_max, f, k, config.multiplier_bracket)? {
                    Some((theta, alpha)) => {
                        let cand = kern.step(theta, plain.lambda, f, k, config.multiplier_bracket)?;
                        if cand.info >= plain.info {
                            if alpha >= step_max {
                                step_max *= 4.0;
                            }
                            cand
                        } else {
                            step_max = (step_max / 4.0).max(SQUAREM_STEP_MIN);
                            plain
                        }
                    }
                    None => plain,
                }
            }
        };
        if config.acceleration == Acceleration::Squarem && (t + 1) % LADDER_EVERY == 0 {
            if let Some(b) = boost_emerging(&kern, &cur, f, k, config.multiplier_bracket)? {
                cur = b;
            }
        }
        t += 1;
    };

    let p: Vec<f64> = cur.theta.iter().map(|v| v.exp()).collect();
    let mean: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
    Ok(CapacityResult {
        rate_bits: cur.info.max(0.0) / LN2,
        prior: PriorDistribution::from_parts_unchecked(p, f.clone(), 0.0),
        multiplier: cur.lambda,
        iterations: t + 1,
        gap_bits: gap.max(0.0),
        mean_constraint_residual: mean - k,
        converged,
    })
}

/// Symbols with almost no mass but positive slack grow by only `e^slack` per
/// plain step. Jump them ahead along that direction, largest jump first, and
/// keep the first candidate that raises the mutual information.
fn boost_emerging(kern: &Kernel, cur: &Step, f: &[f64], k: f64, bracket: (f64, f64)) -> Result<Option<Step>> {
    let lambda = cur.next_lambda;
    let slack: Vec<f64> = (0..f.len())
        .map(|x| {
            if cur.theta[x] < BOOST_LN_MASS {
                cur.d[x] + lambda * (f[x] - k) - cur.info
            } else {
                0.0
            }
        })
        .collect();
    let top = slack.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Ok(None);
    }
    for &jump in &BOOST_JUMPS {
        let raw: Vec<f64> = cur
            .theta
            .iter()
            .zip(&slack)
            .map(|(t, &sl)| if sl > 0.0 { t + jump * sl / top } else { *t })
            .collect();
        let mu = solve_lambda(&raw, f, k, 0.0, bracket)?;
        let mut theta = Vec::with_capacity(raw.len());
        log_softmax_into(&raw, f, mu, &mut theta);
        let cand = kern.step(theta, lambda, f, k, bracket)?;
        if cand.info > cur.info {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

/// Squared extrapolation of the log-prior through two plain steps,
/// `theta - 2 a r + a^2 v`, pulled back onto the constraint. Returns the
/// candidate and the step length `|a|` used.
fn squarem_candidate(cur: &Step, plain: &Step, step_max: f64, f: &[f64], k: f64, bracket: (f64, f64)) -> Result<Option<(Vec<f64>, f64)>> {
    let (t0, t1, t2) = (&cur.theta, &cur.next, &plain.next);
    // Fisher metric: symbols with no mass do not set the step
    let (mut rr, mut vv) = (0.0, 0.0);
    for i in 0..t0.len() {
        let w = t1[i].exp();
        let r = t1[i] - t0[i];
        let v = t2[i] - 2.0 * t1[i] + t0[i];
        rr += w * r * r;
        vv += w * v * v;
    }
    if !(vv > 0.0) || !rr.is_finite() || !vv.is_finite() {
        return Ok(None);
    }
    let alpha = (rr / vv).sqrt().clamp(1.0, step_max);
    if alpha == 1.0 {
        return Ok(None);
    }
    let raw: Vec<f64> = (0..t0.len())
        .map(|i| {
            let r = t1[i] - t0[i];
            let v = t2[i] - 2.0 * t1[i] + t0[i];
            // never push a symbol far below where plain steps would put it
            (t0[i] + 2.0 * alpha * r + alpha * alpha * v).max(t2[i] - SQUAREM_FLOOR)
        })
        .collect();
    let mu = solve_lambda(&raw, f, k, 0.0, bracket)?;
    let mut theta = Vec::with_capacity(raw.len());
    log_softmax_into(&raw, f, mu, &mut theta);
    Ok(Some((theta, alpha)))
}

/// Target at an extreme cost: only the symbols with that cost are usable and
/// the constraint no longer binds among them.
fn solve_on_boundary(
    channel: &ChannelMatrix,
    constraint: &ConstraintSpec,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationReport),
) -> Result<CapacityResult> {
    let k = constraint.target;
    let keep: Vec<usize> = (0..channel.n_inputs())
        .filter(|&x| constraint.weights[x] == k)
        .collect();
    let n = channel.n_inputs();
    let embed = |sub: &[f64]| {
        let mut probs = vec![0.0; n];
        for (&x, &v) in keep.iter().zip(sub) {
            probs[x] = v;
        }
        PriorDistribution::from_parts_unchecked(probs, constraint.weights.clone(), 0.0)
    };
    if keep.len() == 1 {
        observer(&IterationReport {
            iteration: 0,
            rate_lower_bound_bits: 0.0,
            capacity_gap_bits: 0.0,
            multiplier: 0.0,
        });
        return Ok(CapacityResult {
            rate_bits: 0.0,
            prior: embed(&[1.0]),
            multiplier: 0.0,
            iterations: 0,
            gap_bits: 0.0,
            mean_constraint_residual: 0.0,
            converged: true,
        });
    }
    let sub = ChannelMatrix::from_columns(
        keep.iter().map(|&x| channel.column(x).clone()).collect(),
        channel.out_cutoff(),
    )?;
    let sub_spec = ConstraintSpec::new(vec![k; keep.len()], k)?;
    let r = solve_dyn(&sub, &sub_spec, config, None, observer)?;
    Ok(CapacityResult {
        prior: embed(r.prior.probs()),
        ..r
    })
}

/// Initial Fock cutoff for mean photon number `nbar`.
pub fn initial_fock_cutoff(nbar: f64) -> usize {
    ((4.0 * nbar + 10.0 * nbar.sqrt() + 20.0).ceil() as usize).max(32)
}

/// Capacity of the lossy channel over Fock-state inputs.
pub fn fock_capacity(eta: Transmission, nbar: PhotonBudget, config: &SolverConfig) -> Result<CapacityResult> {
    fock_capacity_observed(eta, nbar, config, |_, _| {})
}

/// [`fock_capacity`] reporting `(cutoff, iteration report)` as it runs.
pub fn fock_capacity_observed<F: FnMut(usize, &IterationReport)>(
    eta: Transmission,
    nbar: PhotonBudget,
    config: &SolverConfig,
    mut observer: F,
) -> Result<CapacityResult> {
    config.validate()?;
    let solve = |cutoff: usize, warm: Option<&[f64]>, iterations: usize, obs: &mut F| {
        let channel = build_fock_channel(eta, FockAlphabet::new(cutoff), cutoff);
        let spec = ConstraintSpec::photon_number(cutoff + 1, nbar.value())?;
        let cfg = SolverConfig {
            max_iterations: iterations,
            ..*config
        };
        ba_solve_observed(&channel, &spec, &cfg, warm, |r| obs(cutoff, r))
    };
    match config.cutoff_policy {
        CutoffPolicy::Fixed { k_max } => solve(k_max, None, config.max_iterations, &mut observer),
        CutoffPolicy::Adaptive {
            tail_threshold,
            margin,
            growth,
            max_cutoff,
        } => {
            let edge_mass = |r: &CapacityResult, cutoff: usize| r.prior.mass_from((cutoff + 1).saturating_sub(margin));
            let mut cutoff = initial_fock_cutoff(nbar.value()).min(max_cutoff);
            let mut warm: Option<Vec<f64>> = None;
            loop {
                // a short run is enough to see whether the tail needs room
                let probe_iters = PROBE_ITERATIONS.min(config.max_iterations);
                let mut result = solve(cutoff, warm.as_deref(), probe_iters, &mut observer)?;
                let mut tail = edge_mass(&result, cutoff);
                if tail < tail_threshold && !result.converged && probe_iters < config.max_iterations {
                    let start = result.prior.probs().to_vec();
                    result = solve(cutoff, Some(&start), config.max_iterations, &mut observer)?;
                    tail = edge_mass(&result, cutoff);
                }
                if tail < tail_threshold || cutoff >= max_cutoff {
                    if tail >= tail_threshold {
                        result.converged = false;
                    }
                    return Ok(result);
                }
                let next = next_cutoff(cutoff, tail, tail_threshold, result.multiplier, growth).min(max_cutoff);
                let mut padded = result.prior.probs().to_vec();
                padded.resize(next + 1, 0.0);
                warm = Some(padded);
                cutoff = next;
            }
        }
    }
}

/// Grow by at least `growth`; when the multiplier is negative the optimal
/// prior decays roughly like `exp(lambda k)`, which predicts how much room
/// the tail needs.
fn next_cutoff(cutoff: usize, tail: f64, threshold: f64, lambda: f64, growth: f64) -> usize {
    let grown = ((cutoff as f64) * growth).ceil();
    let predicted = if lambda < 0.0 {
        cutoff as f64 + (tail / threshold).ln() / -lambda
    } else {
        grown
    };
    let cap = (cutoff as f64) * growth.powi(3);
    (predicted.min(cap).max(grown) as usize).max(cutoff + 1)
}
