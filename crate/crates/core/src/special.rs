//! Special functions used by the channel models and entropy formulas.
//!
//! Binomial and Poisson masses use the saddle-point form (Stirling error
//! plus deviance) so that they keep full relative precision for counts in
//! the thousands, where a plain difference of log-gamma values would lose
//! roughly `log10(n ln n)` digits.

use std::f64::consts::{LN_2, PI};

pub use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `x * log2(x)` with the continuity value 0 at `x = 0`.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// `x * ln(x)` with the continuity value 0 at `x = 0`.
#[inline]
pub fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> f64 {
    -xlog2x(x) - xlog2x(1.0 - x)
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlog2x(v)).sum::<f64>()
}

/// Convert nats to bits.
#[inline]
pub fn nats_to_bits(x: f64) -> f64 {
    x / LN_2
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Stirling-formula error `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`.
pub fn stirling_error(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    if n <= 15 {
        let nf = n as f64;
        let lnfact: f64 = (2..=n).map(|i| (i as f64).ln()).sum();
        return lnfact - (nf + 0.5) * nf.ln() + nf - LN_SQRT_2PI;
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        return (S0 - S1 / nn) / nf;
    }
    if n > 80 {
        return (S0 - (S1 - S2 / nn) / nn) / nf;
    }
    if n > 35 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
}

/// Deviance term `x ln(x / m) + m - x`, evaluated without cancellation
/// when `x` is close to `m`.
pub fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / m).ln() + m - x
}

/// Natural log of the binomial mass `C(n, x) p^x (1-p)^(n-x)`.
pub fn ln_binomial_pmf(x: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if x > n {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 {
            -deviance(nf, nf * q) - nf * p
        } else {
            nf * (-p).ln_1p()
        };
    }
    if x == n {
        return if q < 0.1 {
            -deviance(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
    }
    let xf = x as f64;
    let lc = stirling_error(n)
        - stirling_error(x)
        - stirling_error(n - x)
        - deviance(xf, nf * p)
        - deviance(nf - xf, nf * q);
    let lf = (2.0 * PI).ln() + xf.ln() + (-xf / nf).ln_1p();
    lc - 0.5 * lf
}

/// Binomial mass `C(n, x) p^x (1-p)^(n-x)`.
pub fn binomial_pmf(x: u64, n: u64, p: f64) -> f64 {
    ln_binomial_pmf(x, n, p).exp()
}

/// Natural log of the Poisson mass `e^-m m^x / x!`.
pub fn ln_poisson_pmf(x: u64, m: f64) -> f64 {
    if m == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x == 0 {
        return -m;
    }
    let xf = x as f64;
    -stirling_error(x) - deviance(xf, m) - 0.5 * (2.0 * PI * xf).ln()
}

/// Poisson mass `e^-m m^x / x!`.
pub fn poisson_pmf(x: u64, m: f64) -> f64 {
    ln_poisson_pmf(x, m).exp()
}

/// Natural log of the negative-binomial mass
/// `Gamma(k + r) / (k! Gamma(r)) p^k (1-p)^r`.
pub fn ln_negbin_pmf(k: u64, r: f64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    let mut lp = r * (-p).ln_1p();
    if k > 0 {
        lp += ln_gamma(kf + r) - ln_factorial(k) - ln_gamma(r) + kf * p.ln();
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Independent oracle: direct product form in extended precision-free
    // arithmetic for small arguments.
    fn binom_direct(x: u64, n: u64, p: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..x {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32)
    }

    #[test]
    fn binomial_matches_direct_product() {
        for n in 0..40u64 {
            for x in 0..=n {
                for &p in &[0.02, 0.3, 0.5, 0.91] {
                    assert_relative_eq!(
                        binomial_pmf(x, n, p),
                        binom_direct(x, n, p),
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn binomial_large_n_sums_to_one() {
        for &(n, p) in &[(3000u64, 0.02), (5000, 0.5), (20000, 0.001)] {
            let s: f64 = (0..=n).map(|x| binomial_pmf(x, n, p)).sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} p={p} sum={s}");
        }
    }

    #[test]
    fn poisson_values() {
        assert_relative_eq!(poisson_pmf(0, 1.0), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(poisson_pmf(2, 2.0), 2.0 * (-2.0f64).exp(), max_relative = 1e-14);
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(3, 0.0), 0.0);
        let s: f64 = (0..2000).map(|x| poisson_pmf(x, 700.0)).sum();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stirling_error_is_continuous_across_branches() {
        for n in [15u64, 16, 35, 36, 80, 81, 500, 501] {
            let exact = ln_gamma(n as f64 + 1.0) - (n as f64 + 0.5) * (n as f64).ln() + n as f64
                - LN_SQRT_2PI;
            assert!((stirling_error(n) - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn negbin_geometric_special_case() {
        // r = 1 is geometric: (1-p) p^k
        for k in 0..20 {
            assert_relative_eq!(
                ln_negbin_pmf(k, 1.0, 0.5).exp(),
                0.5f64.powi(k as i32 + 1),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn binary_entropy_endpoints() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_relative_eq!(binary_entropy(0.5), 1.0);
    }
}
