//! Sample sizes for manual inspection and deterministic stratified draws.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::{IndicatorMatch, SourceKind};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("margin must lie in (0, 1), got {0}")]
    Margin(f64),
    #[error("planning proportion must lie in [0, 1], got {0}")]
    Proportion(f64),
    #[error("population must be at least 1")]
    EmptyPopulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub confidence: f64,
    pub margin: f64,
    pub proportion: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            margin: 0.05,
            proportion: 0.5,
            seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SamplerError::Confidence(self.confidence));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(SamplerError::Margin(self.margin));
        }
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(SamplerError::Proportion(self.proportion));
        }
        Ok(())
    }

    /// Two-sided standard normal critical value for the confidence level.
    pub fn z(&self) -> f64 {
        normal_quantile(1.0 - (1.0 - self.confidence) / 2.0)
    }

    /// Sample size for an unbounded population, before correction.
    pub fn infinite_population_size(&self) -> f64 {
        let z = self.z();
        z * z * self.proportion * (1.0 - self.proportion) / (self.margin * self.margin)
    }
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9 on (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Cochran's sample size with finite-population correction, rounded up and
/// capped at the population.
pub fn required_sample_size(population: u64, spec: &SampleSpec) -> Result<u64, SamplerError> {
    spec.validate()?;
    if population == 0 {
        return Err(SamplerError::EmptyPopulation);
    }
    let n0 = spec.infinite_population_size();
    let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
    // Absorb rounding noise before the ceiling (e.g. 278.0000000001).
    let n = (n - 1e-9).ceil().max(1.0) as u64;
    Ok(n.min(population))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTask {
    pub task_id: String,
    pub source_kind: SourceKind,
    /// `project/source` by default.
    pub stratum: String,
    /// Text shown to the rater; match spans index into it.
    pub payload: String,
    pub matches: Vec<IndicatorMatch>,
}

fn stratum_rng(seed: u64, stratum: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stratum.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Draws, for each stratum, `required_sample_size` candidates uniformly
/// without replacement. The generator of each stratum is seeded from the
/// spec seed and the stratum name, so strata are independent of each other.
/// Output is ordered by stratum name, then by original candidate order.
pub fn draw_sample(
    strata: &BTreeMap<String, Vec<SampleTask>>,
    spec: &SampleSpec,
) -> Result<Vec<SampleTask>, SamplerError> {
    spec.validate()?;
    let mut out = Vec::new();
    for (name, candidates) in strata {
        if candidates.is_empty() {
            continue;
        }
        let n = required_sample_size(candidates.len() as u64, spec)? as usize;
        let mut rng = stratum_rng(spec.seed, name);
        let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), n).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| candidates[i].clone()));
    }
    Ok(out)
}
