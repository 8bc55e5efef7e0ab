//! Information rate of a negative-binomial Fock prior through the lossy
//! channel, from integral forms of the binomial and negative-binomial
//! entropies.
//!
//! Every integral here has the shape `int_0^1 B(z) / (z ln(1 - z)) dz` with a
//! bracket `B` that vanishes to second order at `z = 0`. Below a switch point
//! the bracket is taken from its Taylor series, which removes the
//! cancellation; the upper half runs through `z = 1 - e^-u`.

use serde::{Deserialize, Serialize};

use crate::analytic::PhotonBudget;
use crate::channel::Transmission;
use crate::error::{invalid, Error, Result};
use crate::optimize::maximize_scan_refine;
use crate::prior::PriorDistribution;
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig};
use crate::special::{binary_entropy, ln_negbin_pmf};

const LN2: f64 = std::f64::consts::LN_2;
const SERIES_ORDER: usize = 6;
const SERIES_SWITCH: f64 = 1e-4;
const R_MIN: f64 = 1e-3;
const R_MAX: f64 = 1e3;
const R_SCAN: usize = 31;
/// Largest accepted error estimate for one bracket integral, in nats for
/// integrals below one and relative above. The estimate is
/// roundoff-limited when the bracket cancels large terms.
const QUAD_FAIL: f64 = 1e-9;

/// Shape `r`, success parameter `p = mean / (mean + r)` and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinParams {
    r: f64,
    p: f64,
    mean: f64,
}

impl NegBinParams {
    pub fn new(mean: f64, r: f64) -> Result<Self> {
        check_r(r)?;
        let mean = PhotonBudget::new(mean)?.value();
        Ok(Self {
            r,
            p: mean / (mean + r),
            mean,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// Photocount law of a negative-binomial input: same `r`, success
/// parameter `P = eta nbar / (eta nbar + r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputNegBin {
    pub r: f64,
    pub p: f64,
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(invalid("r", r, "shape must be finite and positive"))
    }
}

/// Negative-binomial Fock prior with mean `nbar` up to `cutoff`, the rest
/// kept as tail mass.
pub fn negbin_prior(nbar: PhotonBudget, r: f64, cutoff: usize) -> Result<PriorDistribution> {
    let params = NegBinParams::new(nbar.value(), r)?;
    let values: Vec<f64> = (0..=cutoff).map(|k| k as f64).collect();
    if params.p == 0.0 {
        return Ok(PriorDistribution::point_mass(values, 0));
    }
    let probs: Vec<f64> = (0..=cutoff as u64)
        .map(|k| ln_negbin_pmf(k, r, params.p).exp())
        .collect();
    // P(K > cutoff) = I_p(cutoff + 1, r)
    let tail = statrs::function::beta::beta_reg(cutoff as f64 + 1.0, r, params.p);
    Ok(PriorDistribution::from_parts_unchecked(probs, values, tail))
}

pub fn output_negbin(eta: Transmission, nbar: PhotonBudget, r: f64) -> Result<OutputNegBin> {
    check_r(r)?;
    let x = eta.value() * nbar.value();
    Ok(OutputNegBin { r, p: x / (x + r) })
}

/// Truncated Taylor coefficients of `(1 + a z)^s`.
fn series_pow(a: f64, s: f64) -> [f64; SERIES_ORDER + 1] {
    let mut c = [0.0; SERIES_ORDER + 1];
    c[0] = 1.0;
    for j in 1..=SERIES_ORDER {
        c[j] = c[j - 1] * (s - (j - 1) as f64) / j as f64 * a;
    }
    c
}

fn series_mul(a: &[f64; SERIES_ORDER + 1], b: &[f64; SERIES_ORDER + 1]) -> [f64; SERIES_ORDER + 1] {
    let mut c = [0.0; SERIES_ORDER + 1];
    for i in 0..=SERIES_ORDER {
        for j in 0..=SERIES_ORDER - i {
            c[i + j] += a[i] * b[j];
        }
    }
    c
}

fn series_axpy(c: &mut [f64; SERIES_ORDER + 1], k: f64, b: &[f64; SERIES_ORDER + 1]) {
    for (x, y) in c.iter_mut().zip(b) {
        *x += k * y;
    }
}

/// `(1 + a z)^s` without cancellation for small `a z`.
fn pow1p(a: f64, z: f64, s: f64) -> f64 {
    (s * (a * z).ln_1p()).exp()
}

fn quad_config() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_intervals: 4000,
        // checked on the total instead
        fail_above: f64::INFINITY,
    }
}

/// Bracket `B(z) = (1 - z)^power * outer(z) + inner(z)`.
struct Bracket<P, Q> {
    power: f64,
    outer: P,
    inner: Q,
    series: [f64; SERIES_ORDER + 1],
    /// Largest `|s a|` over the factors of `B`, bounding the series terms.
    scale: f64,
}

impl<P: Fn(f64) -> f64, Q: Fn(f64) -> f64> Bracket<P, Q> {
    fn at(&self, z: f64) -> f64 {
        let w = (-z).ln_1p();
        (self.power * w).exp() * (self.outer)(z) + (self.inner)(z)
    }

    /// `int_0^1 B(z) / (z ln(1 - z)) dz` in nats.
    fn integral(&self) -> Result<f64> {
        let switch = (SERIES_SWITCH / self.scale.max(1.0)).min(0.25);
        let cfg = quad_config();
        let f = |z: f64| {
            if z < switch {
                // B = z^2 (c2 + c3 z + ...) and z ln(1 - z) = -z^2 L(z)
                let c = &self.series;
                let poly = c[2..].iter().rev().fold(0.0, |acc, &v| acc * z + v);
                let l = if z == 0.0 { 1.0 } else { (-z).ln_1p() / -z };
                return -poly / l;
            }
            self.at(z) / (z * (-z).ln_1p())
        };
        let low = integrate(f, 0.0, switch, &cfg)?;
        // geometric pieces resolve features near z ~ 1/scale
        let mut mid = 0.0;
        let mut mid_err = 0.0;
        let mut a = switch;
        while a < 0.5 {
            let b = (a * 8.0).min(0.5);
            let piece = integrate(f, a, b, &cfg)?;
            mid += piece.value;
            mid_err += piece.abs_error;
            a = b;
        }
        // z = 1 - e^-u: dz / (z ln(1 - z)) = -du / (u (e^u - 1)); the power
        // term is combined in logs so it neither overflows nor underflows
        let g = |u: f64| {
            let z = -(-u).exp_m1();
            let ln_den = u.ln() + u + (-(-u).exp()).ln_1p();
            let outer = (self.outer)(z);
            let a = if outer == 0.0 { 0.0 } else { outer * (-self.power * u - ln_den).exp() };
            let inner = (self.inner)(z);
            let b = if inner == 0.0 { 0.0 } else { inner * (-ln_den).exp() };
            -(a + b)
        };
        let decay = (self.power + 1.0).min(1.0);
        // geometric pieces out to many decay lengths, then the remainder
        let reach = 50.0 / decay;
        let mut high = 0.0;
        let mut high_err = 0.0;
        let mut a = LN2;
        while a < reach {
            let b = (a * 4.0).min(reach);
            let piece = integrate(g, a, b, &cfg)?;
            high += piece.value;
            high_err += piece.abs_error;
            a = b;
        }
        let tail = integrate_to_infinity(g, a, &cfg)?;
        high += tail.value;
        high_err += tail.abs_error;
        let total = low.value + mid + high;
        let error = low.abs_error + mid_err + high_err;
        if !total.is_finite() || error > QUAD_FAIL * total.abs().max(1.0) {
            return Err(Error::Quadrature { estimate: total, error });
        }
        Ok(total)
    }
}

/// Entropy (bits) of the negative binomial with shape `r` and success
/// parameter `p_out`.
pub fn negbin_entropy(r: f64, p_out: f64) -> Result<f64> {
    check_r(r)?;
    if !(0.0..1.0).contains(&p_out) {
        return Err(invalid("P", p_out, "success parameter must lie in [0, 1)"));
    }
    if p_out == 0.0 {
        return Ok(0.0);
    }
    let a = p_out / (1.0 - p_out);
    let closed = r * (binary_entropy(p_out) - p_out * r.log2()) / (1.0 - p_out);
    let right_of = |z: f64| pow1p(a, z, -r) + a * r * z - 1.0;
    let mut left = series_pow(-1.0, r - 1.0);
    left[0] -= 1.0;
    let mut right = series_pow(a, -r);
    right[0] -= 1.0;
    right[1] += a * r;
    let bracket = Bracket {
        power: r - 1.0,
        outer: right_of,
        inner: |z: f64| -right_of(z),
        series: series_mul(&left, &right),
        scale: (r - 1.0).abs().max(a * r),
    };
    Ok(closed + bracket.integral()? / LN2)
}

/// Entropy (bits) of `Binomial(k, eta)`.
pub fn binomial_entropy(k: u64, eta: Transmission) -> Result<f64> {
    let e = eta.value();
    if k == 0 || e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let mut series = series_pow(-e, kf);
    series_axpy(&mut series, 1.0, &series_pow(e - 1.0, kf));
    series_axpy(&mut series, -1.0, &series_pow(-1.0, kf));
    series[0] -= 1.0;
    let bracket = Bracket {
        power: kf,
        outer: |_: f64| -1.0,
        inner: |z: f64| pow1p(-e, z, kf) + pow1p(e - 1.0, z, kf) - 1.0,
        series,
        scale: kf,
    };
    // dt / (t (e^t - 1)) = -dz / (z ln(1 - z))
    Ok(kf * binary_entropy(e) - bracket.integral()? / LN2)
}

/// `H(Y|X)` in bits for the negative-binomial prior through the lossy
/// channel.
pub fn negbin_conditional_entropy(eta: Transmission, nbar: PhotonBudget, r: f64) -> Result<f64> {
    check_r(r)?;
    let (e, n) = (eta.value(), nbar.value());
    if e == 0.0 || e == 1.0 || n == 0.0 {
        return Ok(0.0);
    }
    let t = |c: f64, z: f64| pow1p(c / r, z, -r);
    let mut series = series_pow(e * n / r, -r);
    series_axpy(&mut series, 1.0, &series_pow((1.0 - e) * n / r, -r));
    series_axpy(&mut series, -1.0, &series_pow(n / r, -r));
    series[0] -= 1.0;
    let bracket = Bracket {
        power: 0.0,
        outer: |_: f64| 0.0,
        inner: |z: f64| t(e * n, z) + t((1.0 - e) * n, z) - t(n, z) - 1.0,
        series,
        scale: n,
    };
    Ok(n * binary_entropy(e) - bracket.integral()? / LN2)
}

/// Mutual information (bits) of the negative-binomial prior with shape `r`
/// and mean `nbar`, evaluated as one combined integral.
pub fn negbin_mutual_info(eta: Transmission, nbar: PhotonBudget, r: f64) -> Result<f64> {
    check_r(r)?;
    let (e, n) = (eta.value(), nbar.value());
    let x = e * n;
    if x == 0.0 {
        return Ok(0.0);
    }
    let closed = (x + r) * binary_entropy(x / (x + r)) - n * binary_entropy(e) - x * r.log2();
    let t = |c: f64, z: f64| pow1p(c / r, z, -r);
    let mut inner = series_pow(x / r, -r);
    inner[0] -= 1.0;
    inner[1] += x;
    let mut series = series_mul(&series_pow(-1.0, r - 1.0), &inner);
    series_axpy(&mut series, 1.0, &series_pow((1.0 - e) * n / r, -r));
    series_axpy(&mut series, -1.0, &series_pow(n / r, -r));
    series[1] -= x;
    let bracket = Bracket {
        power: r - 1.0,
        outer: |z: f64| t(x, z) + x * z - 1.0,
        inner: |z: f64| t((1.0 - e) * n, z) - t(n, z) - x * z,
        series,
        scale: (r - 1.0).abs().max(n),
    };
    let rate = closed + bracket.integral()? / LN2;
    Ok(rate.max(0.0))
}

/// Best negative-binomial rate over `r` in `[1e-3, 1e3]`: a log-spaced scan
/// followed by a bracketed golden-section/parabolic refinement in `ln r`.
/// Returns `(rate_bits, r_star)`.
pub fn negbin_best_rate(eta: Transmission, nbar: PhotonBudget) -> Result<(f64, f64)> {
    if eta.value() * nbar.value() == 0.0 {
        return Ok((0.0, 1.0));
    }
    let (lo, hi) = (R_MIN.ln(), R_MAX.ln());
    let grid: Vec<f64> = (0..R_SCAN)
        .map(|i| lo + (hi - lo) * i as f64 / (R_SCAN - 1) as f64)
        .collect();
    let mut failure = None;
    let best = maximize_scan_refine(
        |u| match negbin_mutual_info(eta, nbar, u.exp()) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        &grid,
        1e-9,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((best.value, best.x.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::holevo_g;
    use crate::special::ln_binomial_pmf;

    fn eta(e: f64) -> Transmission {
        Transmission::new(e).unwrap()
    }

    fn nb(n: f64) -> PhotonBudget {
        PhotonBudget::new(n).unwrap()
    }

    fn negbin_entropy_sum(r: f64, p: f64, lmax: u64) -> f64 {
        (0..=lmax)
            .map(|l| {
                let lp = ln_negbin_pmf(l, r, p);
                -lp.exp() * lp / LN2
            })
            .sum()
    }

    fn binomial_entropy_sum(k: u64, e: f64) -> f64 {
        (0..=k)
            .map(|l| {
                let lp = ln_binomial_pmf(l, k, e);
                if lp.is_finite() {
                    -lp.exp() * lp / LN2
                } else {
                    0.0
                }
            })
            .sum()
    }

    #[test]
    fn prior_examples() {
        let g = negbin_prior(nb(1.0), 1.0, 60).unwrap();
        assert!((g.probs()[0] - 0.5).abs() < 1e-15);
        assert!((g.probs()[1] - 0.25).abs() < 1e-15);
        let v = negbin_prior(nb(0.0), 3.0, 10).unwrap();
        assert_eq!(v.probs()[0], 1.0);
        let p = negbin_prior(nb(2.0), 2.0, 10).unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-15);
        let big = negbin_prior(nb(3.0), 0.7, 400).unwrap();
        assert!((big.mean_photons() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn output_parameter() {
        let p = NegBinParams::new(3.0, 2.0).unwrap().p();
        assert_eq!(output_negbin(eta(1.0), nb(3.0), 2.0).unwrap().p, p);
        assert_eq!(output_negbin(eta(0.0), nb(3.0), 2.0).unwrap().p, 0.0);
        assert_eq!(output_negbin(eta(0.5), nb(2.0), 1.0).unwrap().p, 0.5);
        assert!(NegBinParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn negbin_entropy_against_sums() {
        assert_eq!(negbin_entropy(2.0, 0.0).unwrap(), 0.0);
        assert!((negbin_entropy(1.0, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((negbin_entropy(1.0, 0.5).unwrap() - negbin_entropy_sum(1.0, 0.5, 200)).abs() < 1e-12);
        for &(r, p) in &[(2.0, 0.6), (0.3, 0.8), (5.0, 0.2), (0.01, 0.5), (50.0, 0.9), (1e3, 0.01)] {
            let q = negbin_entropy(r, p).unwrap();
            let s = negbin_entropy_sum(r, p, 20_000);
            assert!((q - s).abs() < 1e-8, "r={r} p={p}: {q} vs {s}");
        }
    }

    #[test]
    fn binomial_entropy_against_sums() {
        assert_eq!(binomial_entropy(7, eta(0.0)).unwrap(), 0.0);
        assert!((binomial_entropy(1, eta(0.5)).unwrap() - 1.0).abs() < 1e-12);
        for &(k, e) in &[(10, 0.3), (2, 0.9), (100, 0.5), (400, 0.02), (3, 0.999)] {
            let q = binomial_entropy(k, eta(e)).unwrap();
            let s = binomial_entropy_sum(k, e);
            assert!((q - s).abs() < 1e-9, "k={k} eta={e}: {q} vs {s}");
        }
    }

    #[test]
    fn conditional_entropy_against_sum() {
        assert_eq!(negbin_conditional_entropy(eta(1.0), nb(3.0), 1.0).unwrap(), 0.0);
        assert_eq!(negbin_conditional_entropy(eta(0.0), nb(3.0), 1.0).unwrap(), 0.0);
        for &(e, n, r) in &[(0.5, 1.0, 1.0), (0.2, 5.0, 0.5), (0.8, 3.0, 4.0)] {
            let p = NegBinParams::new(n, r).unwrap().p();
            let s: f64 = (0..=600u64)
                .map(|k| ln_negbin_pmf(k, r, p).exp() * binomial_entropy_sum(k, e))
                .sum();
            let q = negbin_conditional_entropy(eta(e), nb(n), r).unwrap();
            assert!((q - s).abs() < 1e-8, "{e} {n} {r}: {q} vs {s}");
        }
    }

    #[test]
    fn mutual_info_is_entropy_difference() {
        for &(e, n, r) in &[(0.5, 4.0, 2.0), (0.1, 10.0, 0.2), (0.9, 30.0, 1.3), (0.3, 0.5, 50.0)] {
            let i = negbin_mutual_info(eta(e), nb(n), r).unwrap();
            let out = output_negbin(eta(e), nb(n), r).unwrap();
            let d = negbin_entropy(r, out.p).unwrap() - negbin_conditional_entropy(eta(e), nb(n), r).unwrap();
            assert!((i - d).abs() < 1e-8, "{e} {n} {r}: {i} vs {d}");
        }
    }

    #[test]
    fn mutual_info_edges() {
        assert!((negbin_mutual_info(eta(1.0), nb(1.0), 1.0).unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(negbin_mutual_info(eta(0.0), nb(4.0), 1.0).unwrap(), 0.0);
        assert_eq!(negbin_mutual_info(eta(0.5), nb(0.0), 1.0).unwrap(), 0.0);
    }

    /// Independent oracle: the truncated prior pushed through the channel
    /// matrix.
    fn matrix_path(e: f64, n: f64, r: f64) -> f64 {
        let mut cutoff = 64;
        while negbin_prior(nb(n), r, cutoff).unwrap().tail_mass() > 1e-15 {
            cutoff *= 2;
        }
        let prior = negbin_prior(nb(n), r, cutoff).unwrap().renormalized();
        let ch = crate::channel::build_fock_channel(eta(e), crate::channel::FockAlphabet::new(cutoff), cutoff);
        crate::ba::mutual_information(&prior, &ch).unwrap()
    }

    #[test]
    fn mutual_info_against_matrix_path() {
        for &(e, n, r) in &[(0.5, 4.0, 2.0), (0.1, 10.0, 0.3), (0.9, 1.0, 10.0), (0.7, 6.0, 1.0)] {
            let q = negbin_mutual_info(eta(e), nb(n), r).unwrap();
            let m = matrix_path(e, n, r);
            assert!((q - m).abs() < 1e-7, "{e} {n} {r}: {q} vs {m}");
        }
    }

    #[test]
    fn best_rate_lossless_is_thermal() {
        for &n in &[0.5, 3.0, 30.0] {
            let (rate, r) = negbin_best_rate(eta(1.0), nb(n)).unwrap();
            assert!((rate - holevo_g(n).unwrap()).abs() < 1e-9);
            assert!((r - 1.0).abs() < 1e-3, "{r}");
        }
        assert_eq!(negbin_best_rate(eta(0.5), nb(0.0)).unwrap().0, 0.0);
    }
}
