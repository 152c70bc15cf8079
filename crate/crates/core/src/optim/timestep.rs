//! Truncated-normal noise-level sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormalSpec {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl Default for TruncNormalSpec {
    fn default() -> Self {
        Self {
            mean: 0.8,
            std: 0.075,
            lo: 0.6,
            hi: 1.0,
            seed: 0,
        }
    }
}

impl TruncNormalSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mean, self.std, self.lo, self.hi]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.std > 0.0) || !(self.lo < self.hi) {
            return Err(Error::InvalidSpec(format!(
                "need finite values, std > 0 and lo < hi; got {self:?}"
            )));
        }
        let (a, b) = self.cdf_bounds();
        if !(b > a) {
            return Err(Error::InvalidSpec(
                "support carries no probability mass".into(),
            ));
        }
        Ok(())
    }

    fn cdf_bounds(&self) -> (f64, f64) {
        let n = std_normal();
        (
            n.cdf((self.lo - self.mean) / self.std),
            n.cdf((self.hi - self.mean) / self.std),
        )
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// CDF of the truncated distribution.
pub fn truncated_normal_cdf(spec: &TruncNormalSpec, x: f64) -> f64 {
    if x <= spec.lo {
        return 0.0;
    }
    if x >= spec.hi {
        return 1.0;
    }
    let (a, b) = spec.cdf_bounds();
    (std_normal().cdf((x - spec.mean) / spec.std) - a) / (b - a)
}

/// `n` samples by inverse-CDF transform of uniform draws.
pub fn sample_timestep<T: Real>(spec: &TruncNormalSpec, n: usize) -> Result<Vec<T>> {
    spec.validate()?;
    let (a, b) = spec.cdf_bounds();
    let normal = std_normal();
    let mut rng = rng_from_seed(spec.seed);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let z = normal.inverse_cdf(a + u * (b - a));
            T::lit((spec.mean + spec.std * z).clamp(spec.lo, spec.hi))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_and_determinism() {
        let spec = TruncNormalSpec::default();
        let a: Vec<f64> = sample_timestep(&spec, 10_000).unwrap();
        let b: Vec<f64> = sample_timestep(&spec, 10_000).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| (0.6..=1.0).contains(t)));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = TruncNormalSpec {
            lo: 1.0,
            hi: 0.6,
            ..Default::default()
        };
        assert!(matches!(
            sample_timestep::<f64>(&bad, 1),
            Err(Error::InvalidSpec(_))
        ));
        let bad = TruncNormalSpec {
            std: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cdf_endpoints() {
        let spec = TruncNormalSpec::default();
        assert_eq!(truncated_normal_cdf(&spec, 0.6), 0.0);
        assert_eq!(truncated_normal_cdf(&spec, 1.0), 1.0);
        // The default support is symmetric about the mean.
        assert!((truncated_normal_cdf(&spec, 0.8) - 0.5).abs() < 1e-12);
    }
}
