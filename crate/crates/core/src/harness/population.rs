//! Synthetic consumer populations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negotiation::{Member, Population};

const MAX_ATTEMPTS: usize = 100_000;

/// Derives an independent stream seed from a run seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Normal distribution truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDistribution {
    pub mean: f64,
    pub sd: f64,
}

impl Default for RiskDistribution {
    fn default() -> Self {
        Self { mean: 0.6, sd: 0.25 }
    }
}

impl RiskDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd >= 0.0 && self.sd.is_finite()) {
            return Err(Error::invalid(format!("standard deviation must be non-negative, got {}", self.sd)));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("mean must be finite"));
        }
        if self.sd == 0.0 && !(0.0..=1.0).contains(&self.mean) {
            return Err(Error::invalid(format!("degenerate distribution at {} lies outside [0, 1]", self.mean)));
        }
        Ok(())
    }

    /// One draw by rejection; gives up after a bounded number of attempts
    /// when almost no mass lies inside `[0, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        if self.sd == 0.0 {
            return Ok(self.mean);
        }
        let normal = Normal::new(self.mean, self.sd).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..MAX_ATTEMPTS {
            let x = normal.sample(rng);
            if (0.0..=1.0).contains(&x) {
                return Ok(x);
            }
        }
        Err(Error::invalid(format!(
            "truncated normal (mean {}, sd {}) has too little mass in [0, 1]",
            self.mean, self.sd
        )))
    }
}

/// Shift of the consumers' risk perception with a provider's star rating:
/// consumers of better-rated providers perceive less risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcrCoupling {
    pub intercept: f64,
    pub slope: f64,
    pub sd: f64,
}

impl Default for PcrCoupling {
    fn default() -> Self {
        Self {
            intercept: 0.95,
            slope: 0.12,
            sd: 0.15,
        }
    }
}

impl PcrCoupling {
    pub fn distribution(&self, stars: f64) -> RiskDistribution {
        RiskDistribution {
            mean: (self.intercept - self.slope * stars).clamp(0.0, 1.0),
            sd: self.sd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub size: usize,
    pub risk: RiskDistribution,
}

pub fn sample_risks(spec: &PopulationSpec, seed: u64) -> Result<Vec<f64>> {
    if spec.size == 0 {
        return Err(Error::invalid("population size must be positive"));
    }
    spec.risk.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.size).map(|_| spec.risk.sample(&mut rng)).collect()
}

pub fn consumer_id(i: usize) -> String {
    format!("consumer-{:04}", i + 1)
}

/// Population valued at `premium` per unit of risk.
pub fn population_from_risks(risks: &[f64], premium: f64) -> Result<Population> {
    Population::new(
        risks
            .iter()
            .enumerate()
            .map(|(i, &psi)| Member {
                consumer_id: consumer_id(i),
                expected_payoff: psi * premium,
                psi,
            })
            .collect(),
    )
}

pub fn generate_population(spec: &PopulationSpec, premium: f64, seed: u64) -> Result<Population> {
    population_from_risks(&sample_risks(spec, seed)?, premium)
}
