use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A probability vector over a discrete input alphabet.
///
/// Each symbol carries its photon number (`k` for Fock symbols, the received
/// intensity `c_i` for coherent-state mass points) so the mean photon number
/// is always consistent with the weights. A truncated distribution records
/// the mass that fell beyond its last symbol in `tail_mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDistribution {
    probs: Vec<f64>,
    values: Vec<f64>,
    mean: f64,
    tail_mass: f64,
}

impl PriorDistribution {
    /// Validated constructor; `probs` must sum to one.
    pub fn new(probs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::truncated(probs, values, 0.0)
    }

    /// Validated constructor for a distribution cut off with `tail_mass`
    /// probability above its last symbol.
    pub fn truncated(probs: Vec<f64>, values: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.len() != values.len() {
            return Err(Error::DimensionMismatch {
                prior: probs.len(),
                channel: values.len(),
            });
        }
        if probs.is_empty() {
            return Err(invalid("probs", 0.0, "empty distribution"));
        }
        if let Some(&p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(invalid("probs", p, "entries must be finite and nonnegative"));
        }
        if !(tail_mass >= 0.0) {
            return Err(invalid("tail_mass", tail_mass, "must be nonnegative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum + tail_mass - 1.0).abs() > SUM_TOL {
            return Err(Error::NotNormalized { sum: sum + tail_mass });
        }
        Ok(Self::from_parts_unchecked(probs, values, tail_mass))
    }

    /// Fock-state prior: symbol `k` carries `k` photons.
    pub fn fock(probs: Vec<f64>) -> Result<Self> {
        let values = (0..probs.len()).map(|k| k as f64).collect();
        Self::new(probs, values)
    }

    pub(crate) fn from_parts_unchecked(probs: Vec<f64>, values: Vec<f64>, tail_mass: f64) -> Self {
        let mean = probs.iter().zip(&values).map(|(p, v)| p * v).sum();
        Self {
            probs,
            values,
            mean,
            tail_mass,
        }
    }

    /// All mass on symbol `index`.
    pub fn point_mass(values: Vec<f64>, index: usize) -> Self {
        let mut probs = vec![0.0; values.len()];
        probs[index] = 1.0;
        Self::from_parts_unchecked(probs, values, 0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mean photon number `sum_x p_x v_x` over the represented symbols.
    pub fn mean_photons(&self) -> f64 {
        self.mean
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mass carried by symbols with index `>= from`.
    pub fn mass_from(&self, from: usize) -> f64 {
        self.probs.iter().skip(from).sum()
    }

    /// Drop the tail and rescale to unit mass.
    pub fn renormalized(&self) -> Self {
        let s: f64 = self.probs.iter().sum();
        let probs = self.probs.iter().map(|p| p / s).collect();
        Self::from_parts_unchecked(probs, self.values.clone(), 0.0)
    }

    /// Total-variation distance to `other`, indexing both by symbol position
    /// and treating missing symbols as zero mass.
    pub fn total_variation(&self, other: &PriorDistribution) -> f64 {
        let n = self.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..n)
            .map(|i| (get(&self.probs, i) - get(&other.probs, i)).abs())
            .sum::<f64>()
    }
}
