//! Classical conditional laws induced by a lossy channel followed by
//! photon-number-resolving detection.
//!
//! Fock inputs `|k>` produce a binomial count distribution; coherent inputs
//! with received intensity `c = eta |alpha|^2` produce a Poisson one. Columns
//! are stored as bands of non-negligible entries; whatever mass lies above the
//! output cutoff is kept in `tail` instead of being folded back in.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{ln_binomial_pmf, ln_poisson_pmf};

/// Entries with `ln p` below this are treated as exact zeros (p < 1e-35).
const LN_NEGLIGIBLE: f64 = -80.0;
const STOCHASTIC_TOL: f64 = 1e-12;

/// Power transmissivity of the channel, `0 <= eta <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Transmission(f64);

impl Transmission {
    pub fn new(eta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&eta) {
            Ok(Self(eta))
        } else {
            Err(invalid("eta", eta, "transmissivity must lie in [0, 1]"))
        }
    }

    pub const LOSSLESS: Transmission = Transmission(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Fock input alphabet `{0, 1, ..., cutoff}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockAlphabet {
    pub cutoff: usize,
}

impl FockAlphabet {
    pub fn new(cutoff: usize) -> Self {
        Self { cutoff }
    }

    pub fn len(&self) -> usize {
        self.cutoff + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        (0..=self.cutoff).map(|k| k as f64).collect()
    }
}

/// Received intensities `c_i = eta |alpha_i|^2`, nonnegative and strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityAlphabet {
    intensities: Vec<f64>,
}

impl IntensityAlphabet {
    pub fn new(intensities: Vec<f64>) -> Result<Self> {
        if intensities.is_empty() {
            return Err(invalid("intensities", 0.0, "alphabet must not be empty"));
        }
        if let Some(&c) = intensities.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(invalid("intensity", c, "intensities must be finite and nonnegative"));
        }
        if let Some(w) = intensities.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid("intensity", w[1], "intensities must be strictly increasing"));
        }
        Ok(Self { intensities })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn max_intensity(&self) -> f64 {
        *self.intensities.last().expect("non-empty by construction")
    }
}

/// One input symbol's output law: `probs[j]` is `p(offset + j | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelColumn {
    pub offset: usize,
    pub probs: Vec<f64>,
    /// Probability of counts above the output cutoff.
    pub tail: f64,
}

impl ChannelColumn {
    pub fn in_table_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Iterate `(l, p(l|x))` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(j, &p)| (self.offset + j, p))
    }
}

/// Truncated conditional probability table `p(l | x)` for `l <= out_cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    columns: Vec<ChannelColumn>,
    out_cutoff: usize,
}

impl ChannelMatrix {
    /// Build from explicit columns, checking every invariant.
    pub fn from_columns(columns: Vec<ChannelColumn>, out_cutoff: usize) -> Result<Self> {
        if columns.is_empty() {
            return Err(invalid("columns", 0.0, "channel needs at least one input"));
        }
        for col in &columns {
            if col.probs.len() + col.offset > out_cutoff + 1 {
                return Err(invalid(
                    "out_cutoff",
                    out_cutoff as f64,
                    "column extends past the output cutoff",
                ));
            }
            if let Some(&p) = col.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(invalid("probability", p, "entries must lie in [0, 1]"));
            }
            if !(col.tail >= 0.0) {
                return Err(invalid("tail", col.tail, "tail mass must be nonnegative"));
            }
            let total = col.in_table_mass() + col.tail;
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotNormalized { sum: total });
            }
        }
        Ok(Self {
            columns,
            out_cutoff,
        })
    }

    /// Build from a dense table indexed `[input][output]` with no tail.
    pub fn from_dense(rows_by_input: &[Vec<f64>]) -> Result<Self> {
        let width = rows_by_input.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(invalid("columns", 0.0, "channel needs at least one output"));
        }
        let columns = rows_by_input
            .iter()
            .map(|r| ChannelColumn {
                offset: 0,
                probs: r.clone(),
                tail: 0.0,
            })
            .collect();
        Self::from_columns(columns, width - 1)
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }

    /// Number of in-table output symbols (`out_cutoff + 1`).
    pub fn n_outputs(&self) -> usize {
        self.out_cutoff + 1
    }

    pub fn out_cutoff(&self) -> usize {
        self.out_cutoff
    }

    pub fn columns(&self) -> &[ChannelColumn] {
        &self.columns
    }

    pub fn column(&self, x: usize) -> &ChannelColumn {
        &self.columns[x]
    }

    /// `p(l | x)`; zero outside the stored band.
    pub fn prob(&self, l: usize, x: usize) -> f64 {
        let c = &self.columns[x];
        if l < c.offset {
            0.0
        } else {
            c.probs.get(l - c.offset).copied().unwrap_or(0.0)
        }
    }

    pub fn tail_mass(&self, x: usize) -> f64 {
        self.columns[x].tail
    }

    /// Whether any column carries mass above the cutoff; if so the overflow
    /// acts as one extra output symbol.
    pub fn has_overflow(&self) -> bool {
        self.columns.iter().any(|c| c.tail > 0.0)
    }

    /// Number of stored nonzero-band entries.
    pub fn stored_entries(&self) -> usize {
        self.columns.iter().map(|c| c.probs.len()).sum()
    }

    /// Dense `[input][output]` table including the trailing overflow symbol.
    pub fn dense_with_overflow(&self) -> Vec<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| {
                let mut row = vec![0.0; self.n_outputs() + 1];
                for (l, p) in c.entries() {
                    row[l] = p;
                }
                row[self.n_outputs()] = c.tail;
                row
            })
            .collect()
    }

    /// Reorder inputs so that new input `i` is old input `perm[i]`.
    pub fn permute_inputs(&self, perm: &[usize]) -> Self {
        Self {
            columns: perm.iter().map(|&i| self.columns[i].clone()).collect(),
            out_cutoff: self.out_cutoff,
        }
    }
}

/// `C(k, l) eta^l (1 - eta)^(k - l)`, zero for `l > k`.
pub fn binomial_conditional(k: u64, l: u64, eta: Transmission) -> f64 {
    ln_binomial_pmf(l, k, eta.value()).exp()
}

/// `e^-c c^l / l!` for received intensity `c >= 0`.
pub fn poisson_conditional(c: f64, l: u64) -> f64 {
    debug_assert!(c >= 0.0);
    ln_poisson_pmf(l, c).exp()
}

/// Walk outward from `mode` collecting entries with `ln p` above the
/// negligible threshold. Returns `(first index, values)`.
fn band<F: Fn(u64) -> f64>(mode: u64, upper: Option<u64>, ln_p: F) -> (u64, Vec<f64>) {
    let mut left = Vec::new();
    let mut lo = mode;
    while lo > 0 {
        let v = ln_p(lo - 1);
        if v <= LN_NEGLIGIBLE {
            break;
        }
        left.push(v.exp());
        lo -= 1;
    }
    left.reverse();
    left.push(ln_p(mode).exp());
    let mut hi = mode;
    while upper.is_none_or(|u| hi < u) {
        let v = ln_p(hi + 1);
        if v <= LN_NEGLIGIBLE {
            break;
        }
        left.push(v.exp());
        hi += 1;
    }
    (lo, left)
}

/// Poisson band by the ratio recurrence from the mode, which is evaluated
/// directly; relative error grows like the band length times the epsilon.
fn poisson_band(c: f64) -> (u64, Vec<f64>) {
    let mode = c.floor() as u64;
    let floor = LN_NEGLIGIBLE.exp();
    let top = ln_poisson_pmf(mode, c).exp();
    let mut left = Vec::new();
    let mut p = top;
    let mut l = mode;
    while l > 0 {
        p *= l as f64 / c;
        if p <= floor {
            break;
        }
        left.push(p);
        l -= 1;
    }
    let lo = l;
    left.reverse();
    left.push(top);
    let mut p = top;
    let mut l = mode;
    loop {
        p *= c / (l + 1) as f64;
        if p <= floor {
            break;
        }
        left.push(p);
        l += 1;
    }
    (lo, left)
}

fn split_at_cutoff(lo: u64, values: Vec<f64>, out_cutoff: usize) -> ChannelColumn {
    let cut = out_cutoff as u64;
    if lo > cut {
        return ChannelColumn {
            offset: out_cutoff,
            probs: Vec::new(),
            tail: values.iter().sum(),
        };
    }
    let keep = ((cut - lo + 1) as usize).min(values.len());
    let tail: f64 = values[keep..].iter().sum();
    let mut probs = values;
    probs.truncate(keep);
    ChannelColumn {
        offset: lo as usize,
        probs,
        tail,
    }
}

/// Binomial column for Fock input `k`.
pub fn fock_column(k: u64, eta: Transmission, out_cutoff: usize) -> ChannelColumn {
    let e = eta.value();
    let mode = (((k + 1) as f64) * e).floor().min(k as f64) as u64;
    let (lo, values) = band(mode, Some(k), |l| ln_binomial_pmf(l, k, e));
    split_at_cutoff(lo, values, out_cutoff)
}

/// Poisson column for received intensity `c`.
pub fn poisson_column(c: f64, out_cutoff: usize) -> ChannelColumn {
    if c == 0.0 {
        return split_at_cutoff(0, vec![1.0], out_cutoff);
    }
    let (lo, values) = poisson_band(c);
    split_at_cutoff(lo, values, out_cutoff)
}

/// Fock channel: column `k` holds the binomial law of detected counts.
pub fn build_fock_channel(eta: Transmission, alphabet: FockAlphabet, out_cutoff: usize) -> ChannelMatrix {
    let columns = (0..=alphabet.cutoff as u64)
        .map(|k| fock_column(k, eta, out_cutoff))
        .collect();
    ChannelMatrix {
        columns,
        out_cutoff,
    }
}

/// Output cutoff that keeps all but a negligible Poisson tail for intensities
/// up to `max_intensity`.
pub fn default_poisson_cutoff(max_intensity: f64) -> usize {
    (max_intensity + 10.0 * max_intensity.sqrt() + 25.0).ceil() as usize
}

/// Discrete-time Poisson channel over the given intensities.
pub fn build_poisson_channel(alphabet: &IntensityAlphabet, out_cutoff: usize) -> ChannelMatrix {
    let columns = alphabet
        .intensities()
        .iter()
        .map(|&c| poisson_column(c, out_cutoff))
        .collect();
    ChannelMatrix {
        columns,
        out_cutoff,
    }
}

/// Both sides of the mixing identity
/// `Poisson(eta a)(l) = sum_k Poisson(a)(k) Binomial(k, eta)(l)`,
/// with the right side summed up to `k_cutoff`.
pub fn mixture_identity_check(alpha_sq: f64, eta: Transmission, l: u64, k_cutoff: u64) -> (f64, f64) {
    let lhs = poisson_conditional(eta.value() * alpha_sq, l);
    let rhs = (l..=k_cutoff.max(l))
        .map(|k| poisson_conditional(alpha_sq, k) * binomial_conditional(k, l, eta))
        .sum();
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eta(v: f64) -> Transmission {
        Transmission::new(v).unwrap()
    }

    #[test]
    fn transmission_range() {
        assert!(Transmission::new(-0.1).is_err());
        assert!(Transmission::new(1.01).is_err());
        assert!(Transmission::new(f64::NAN).is_err());
        assert!(Transmission::new(0.0).is_ok());
    }

    #[test]
    fn binomial_conditional_examples() {
        assert_eq!(binomial_conditional(0, 0, eta(0.3)), 1.0);
        assert_eq!(binomial_conditional(2, 3, eta(0.5)), 0.0);
        assert_relative_eq!(binomial_conditional(2, 1, eta(0.5)), 0.5, max_relative = 1e-14);
        // far beyond the range where k! overflows
        let p = binomial_conditional(5000, 100, eta(0.02));
        assert!(p.is_finite() && p > 0.0);
    }

    #[test]
    fn poisson_conditional_examples() {
        assert_eq!(poisson_conditional(0.0, 0), 1.0);
        assert_relative_eq!(poisson_conditional(1.0, 0), 0.367_879_441_171_442_3, max_relative = 1e-15);
        assert_relative_eq!(poisson_conditional(2.0, 2), 0.270_670_566_473_225_4, max_relative = 1e-14);
    }

    #[test]
    fn lossless_fock_channel_is_identity() {
        let ch = build_fock_channel(eta(1.0), FockAlphabet::new(5), 5);
        for k in 0..=5 {
            for l in 0..=5 {
                assert_eq!(ch.prob(l, k), if l == k { 1.0 } else { 0.0 });
            }
            assert_eq!(ch.tail_mass(k), 0.0);
        }
    }

    #[test]
    fn fock_channel_examples() {
        let ch = build_fock_channel(eta(0.5), FockAlphabet::new(2), 2);
        let col: Vec<f64> = (0..=2).map(|l| ch.prob(l, 2)).collect();
        for (a, b) in col.iter().zip([0.25, 0.5, 0.25]) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        let ch = build_fock_channel(eta(0.5), FockAlphabet::new(2), 1);
        assert_relative_eq!(ch.prob(0, 2), 0.25, max_relative = 1e-14);
        assert_relative_eq!(ch.prob(1, 2), 0.5, max_relative = 1e-14);
        assert_relative_eq!(ch.tail_mass(2), 0.25, max_relative = 1e-14);
    }

    #[test]
    fn poisson_channel_examples() {
        let a = IntensityAlphabet::new(vec![0.0]).unwrap();
        let ch = build_poisson_channel(&a, 4);
        assert_eq!(ch.n_outputs(), 5);
        assert_eq!(ch.prob(0, 0), 1.0);
        assert!((1..=4).all(|l| ch.prob(l, 0) == 0.0));

        let a = IntensityAlphabet::new(vec![1.0]).unwrap();
        let ch = build_poisson_channel(&a, 0);
        assert_relative_eq!(ch.prob(0, 0), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(ch.tail_mass(0), 1.0 - (-1.0f64).exp(), max_relative = 1e-14);

        let a = IntensityAlphabet::new(vec![0.0, 1.0]).unwrap();
        let ch = build_poisson_channel(&a, 10);
        for x in 0..2 {
            let c = ch.column(x);
            assert!((c.in_table_mass() + c.tail - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_alphabet_validation() {
        assert!(IntensityAlphabet::new(vec![-1.0]).is_err());
        assert!(IntensityAlphabet::new(vec![1.0, 1.0]).is_err());
        assert!(IntensityAlphabet::new(vec![2.0, 1.0]).is_err());
        assert!(IntensityAlphabet::new(vec![]).is_err());
    }

    #[test]
    fn mixture_identity_examples() {
        let (l, r) = mixture_identity_check(0.0, eta(0.5), 0, 10);
        assert_eq!((l, r), (1.0, 1.0));
        let (l, r) = mixture_identity_check(1.0, eta(0.5), 0, 60);
        assert_relative_eq!(l, (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(r, (-0.5f64).exp(), max_relative = 1e-14);
        let (l, r) = mixture_identity_check(2.0, eta(0.3), 1, 80);
        assert!((l - r).abs() < 1e-12);
    }

    #[test]
    fn channel_from_dense_checks_stochasticity() {
        assert!(ChannelMatrix::from_dense(&[vec![0.5, 0.4]]).is_err());
        assert!(ChannelMatrix::from_dense(&[vec![0.5, 0.5], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn negligible_entries_are_dropped() {
        let col = fock_column(3000, eta(0.5), 3000);
        assert!(col.probs.len() < 1000);
        assert!((col.in_table_mass() - 1.0).abs() < 1e-13);
    }
}
