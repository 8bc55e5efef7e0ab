//! Closed-form rates and asymptotics used as baselines for the solvers.
//!
//! All rates are in bits per channel use. Functions taking `(eta, nbar)`
//! depend on the received mean photon number `eta * nbar` except for the
//! Fock-ensemble large-signal approximation, which also carries `1/(1-eta)`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::channel::Transmission;
use crate::error::{invalid, Error, Result};
use crate::prior::PriorDistribution;

/// Mean number of photons per channel use at the input.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PhotonBudget(f64);

impl PhotonBudget {
    pub fn new(nbar: f64) -> Result<Self> {
        if nbar >= 0.0 && nbar.is_finite() {
            Ok(Self(nbar))
        } else {
            Err(invalid("nbar", nbar, "mean photon number must be finite and nonnegative"))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Received mean photon number `eta * nbar`.
#[inline]
pub fn output_mean(eta: Transmission, nbar: PhotonBudget) -> f64 {
    eta.value() * nbar.value()
}

/// Entropy of a thermal state with mean `x`:
/// `(x + 1) log2(x + 1) - x log2 x`, with `g(0) = 0`.
pub fn holevo_g(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid("x", x, "mean photon number must be nonnegative"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // (x+1)log(x+1) - x log x = log(x+1) + x log(1 + 1/x)
    Ok(x.ln_1p() / std::f64::consts::LN_2 + x * (1.0 / x).ln_1p() / std::f64::consts::LN_2)
}

/// Classical (Holevo) capacity of the pure-loss channel, `g(eta nbar)`.
pub fn classical_capacity(eta: Transmission, nbar: PhotonBudget) -> f64 {
    holevo_g(output_mean(eta, nbar)).expect("output mean is nonnegative")
}

/// Homodyne capacity `1/2 log2(1 + 4 eta nbar)`.
pub fn homodyne_capacity(eta: Transmission, nbar: PhotonBudget) -> f64 {
    0.5 * (4.0 * output_mean(eta, nbar)).ln_1p() / std::f64::consts::LN_2
}

/// Heterodyne capacity `log2(1 + eta nbar)`.
pub fn heterodyne_capacity(eta: Transmission, nbar: PhotonBudget) -> f64 {
    output_mean(eta, nbar).ln_1p() / std::f64::consts::LN_2
}

/// Large-signal approximation of the Fock-ensemble capacity,
/// `1/2 [log2(eta nbar) + log2(e / (pi (1 - eta)))]`.
///
/// Evaluated for any `eta < 1` and `eta nbar > 0`; whether the approximation
/// is accurate there is left to the caller.
pub fn bowen_asymptotic(eta: Transmission, nbar: PhotonBudget) -> Result<f64> {
    let e = eta.value();
    if e >= 1.0 {
        return Err(Error::Divergent("large-signal Fock approximation diverges at eta = 1"));
    }
    let x = output_mean(eta, nbar);
    if x <= 0.0 {
        return Err(invalid("eta*nbar", x, "received photon number must be positive"));
    }
    Ok(0.5 * (x.log2() + (E / (PI * (1.0 - e))).log2()))
}

/// Large-signal rate of the Poisson channel, `1/2 log2(eta nbar)`.
pub fn gordon_asymptotic(eta: Transmission, nbar: PhotonBudget) -> Result<f64> {
    let x = output_mean(eta, nbar);
    if x <= 0.0 {
        return Err(invalid("eta*nbar", x, "received photon number must be positive"));
    }
    Ok(0.5 * x.log2())
}

/// Thermal (geometric) Fock prior `p_k = nbar^k / (nbar + 1)^(k + 1)` up to
/// `cutoff`; the mass above the cutoff is kept as the prior's tail.
pub fn thermal_prior(nbar: PhotonBudget, cutoff: usize) -> PriorDistribution {
    let n = nbar.value();
    let values: Vec<f64> = (0..=cutoff).map(|k| k as f64).collect();
    if n == 0.0 {
        return PriorDistribution::point_mass(values, 0);
    }
    let ratio = n / (n + 1.0);
    let ln_ratio = (-1.0 / (n + 1.0)).ln_1p();
    let probs: Vec<f64> = (0..=cutoff)
        .map(|k| ((k as f64) * ln_ratio).exp() / (n + 1.0))
        .collect();
    let tail = ratio.powf(cutoff as f64 + 1.0);
    PriorDistribution::from_parts_unchecked(probs, values, tail)
}

/// Radial intensity density of the Gaussian coherent-state ensemble:
/// `|alpha|^2` is exponentially distributed with mean `nbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialIntensity {
    mean: f64,
}

impl ExponentialIntensity {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn pdf(&self, intensity: f64) -> f64 {
        if intensity < 0.0 {
            0.0
        } else {
            (-intensity / self.mean).exp() / self.mean
        }
    }

    pub fn cdf(&self, intensity: f64) -> f64 {
        if intensity <= 0.0 {
            0.0
        } else {
            -(-intensity / self.mean).exp_m1()
        }
    }

    /// Inverse CDF for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        -self.mean * (-u).ln_1p()
    }
}

pub fn gaussian_coherent_reference(nbar: PhotonBudget) -> Result<ExponentialIntensity> {
    if nbar.value() <= 0.0 {
        return Err(invalid("nbar", nbar.value(), "Gaussian ensemble needs positive mean"));
    }
    Ok(ExponentialIntensity { mean: nbar.value() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tr(v: f64) -> Transmission {
        Transmission::new(v).unwrap()
    }
    fn nb(v: f64) -> PhotonBudget {
        PhotonBudget::new(v).unwrap()
    }

    #[test]
    fn holevo_g_values() {
        assert_eq!(holevo_g(0.0).unwrap(), 0.0);
        assert_relative_eq!(holevo_g(1.0).unwrap(), 2.0, max_relative = 1e-15);
        // 31 log2 31 - 30 log2 30
        let g30 = 31.0 * 31f64.log2() - 30.0 * 30f64.log2();
        assert_relative_eq!(holevo_g(30.0).unwrap(), g30, max_relative = 1e-13);
        assert!((holevo_g(30.0).unwrap() - 6.373_367_753_737_568).abs() < 1e-12);
        assert!(holevo_g(-1e-3).is_err());
    }

    #[test]
    fn g_is_increasing_and_concave() {
        let h = 1e-3;
        for i in 1..400 {
            let x = 0.05 * i as f64;
            let (a, b, c) = (
                holevo_g(x - h).unwrap(),
                holevo_g(x).unwrap(),
                holevo_g(x + h).unwrap(),
            );
            assert!(c > b && b > a);
            assert!(a + c - 2.0 * b < 0.0);
        }
    }

    #[test]
    fn classical_depends_on_product_only() {
        assert_relative_eq!(classical_capacity(tr(1.0), nb(1.0)), 2.0, max_relative = 1e-15);
        assert_relative_eq!(classical_capacity(tr(0.5), nb(2.0)), 2.0, max_relative = 1e-15);
        assert_eq!(classical_capacity(tr(0.3), nb(0.0)), 0.0);
        for &(e1, n1, e2) in &[(0.2, 10.0, 0.8), (0.9, 3.0, 0.1), (0.5, 0.4, 0.25)] {
            let n2 = e1 * n1 / e2;
            assert_relative_eq!(
                classical_capacity(tr(e1), nb(n1)),
                classical_capacity(tr(e2), nb(n2)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn quadrature_capacities() {
        assert_eq!(homodyne_capacity(tr(0.5), nb(0.0)), 0.0);
        assert_relative_eq!(homodyne_capacity(tr(1.0), nb(2.0)), 3f64.log2(), max_relative = 1e-14);
        assert_relative_eq!(heterodyne_capacity(tr(1.0), nb(1.0)), 1.0, max_relative = 1e-15);
        assert_relative_eq!(homodyne_capacity(tr(0.5), nb(2.0)), 0.5 * 5f64.log2(), max_relative = 1e-15);
    }

    #[test]
    fn homodyne_beats_heterodyne_once() {
        // the difference changes sign exactly once on (0, 10)
        let xs: Vec<f64> = (1..10_000).map(|i| i as f64 * 1e-3).collect();
        let sign = |x: f64| homodyne_capacity(tr(1.0), nb(x)) - heterodyne_capacity(tr(1.0), nb(x)) > 0.0;
        let changes = xs.windows(2).filter(|w| sign(w[0]) != sign(w[1])).count();
        assert_eq!(changes, 1);
        let small = 1e-7;
        let ratio = homodyne_capacity(tr(1.0), nb(small)) / heterodyne_capacity(tr(1.0), nb(small));
        assert!((ratio - 2.0).abs() < 1e-5);
    }

    #[test]
    fn heterodyne_within_one_nat_of_classical() {
        // the gap approaches 1/ln 2 from below
        let mut prev = 0.0;
        for i in 0..50 {
            let x = 100.0 * 1.2f64.powi(i);
            let d = classical_capacity(tr(1.0), nb(x)) - heterodyne_capacity(tr(1.0), nb(x));
            assert!(d > 0.0 && d < 1.0 / std::f64::consts::LN_2 + 0.05);
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn bowen_and_gordon() {
        let b = bowen_asymptotic(tr(0.5), nb(200.0)).unwrap();
        assert_relative_eq!(b, 0.5 * (100f64.log2() + (2.0 * E / PI).log2()), max_relative = 1e-15);
        assert!((b - 3.717_527_550_6).abs() < 1e-9);
        let b1 = bowen_asymptotic(tr(0.5), nb(2.0)).unwrap();
        assert!((b1 - 0.395_599_455_7).abs() < 1e-9);
        assert!(matches!(bowen_asymptotic(tr(1.0), nb(5.0)), Err(Error::Divergent(_))));

        assert_eq!(gordon_asymptotic(tr(1.0), nb(1.0)).unwrap(), 0.0);
        assert_relative_eq!(gordon_asymptotic(tr(0.5), nb(8.0)).unwrap(), 1.0);
        assert!((gordon_asymptotic(tr(1.0), nb(100.0)).unwrap() - std::f64::consts::LOG2_10).abs() < 1e-12);
        assert!(gordon_asymptotic(tr(0.0), nb(1.0)).is_err());
    }

    #[test]
    fn thermal_prior_values() {
        let p = thermal_prior(nb(0.0), 4);
        assert_eq!(p.probs()[0], 1.0);
        let p = thermal_prior(nb(1.0), 10);
        assert_relative_eq!(p.probs()[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(p.probs()[1], 0.25, max_relative = 1e-15);
        assert_relative_eq!(p.tail_mass(), 0.5f64.powi(11), max_relative = 1e-14);
        let p = thermal_prior(nb(1.0), 200);
        assert!((p.mean_photons() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_reference() {
        assert!(gaussian_coherent_reference(nb(0.0)).is_err());
        let d = gaussian_coherent_reference(nb(1.0)).unwrap();
        assert_eq!(d.pdf(0.0), 1.0);
        let d = gaussian_coherent_reference(nb(2.0)).unwrap();
        assert_relative_eq!(d.quantile(0.5), 2.0 * 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(d.cdf(d.quantile(0.3)), 0.3, max_relative = 1e-14);
        assert_eq!(d.mean(), 2.0);
        // mean by quadrature of the density
        let m = crate::quadrature::integrate_to_infinity(
            |x| x * d.pdf(x),
            0.0,
            &crate::quadrature::QuadConfig::default(),
        )
        .unwrap();
        assert!((m.value - 2.0).abs() < 1e-10);
    }
}
