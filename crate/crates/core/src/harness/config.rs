//! Experiment configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::population::{PcrCoupling, RiskDistribution};
use crate::error::{Error, Result};
use crate::negotiation::{ConsumerParams, ProviderParams};
use crate::payoff::PremiumModel;

/// Bundled travel-agency fixtures rated 1, 1.5, 3, 4 and 4.5 stars.
pub const TRAVEL_FIXTURES: [&str; 5] = ["travel-sp1", "travel-sp2", "travel-sp3", "travel-sp4", "travel-sp5"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumerSection {
    /// Reservation price; absent means "equal to the current premium".
    #[serde(default)]
    pub reservation_price: Option<f64>,
    /// Opening ask; defaults to the reservation price.
    #[serde(default)]
    pub initial_price: Option<f64>,
    pub deadline: u32,
    /// Concession exponent; absent means sit-and-wait.
    #[serde(default)]
    pub eta: Option<f64>,
}

impl ConsumerSection {
    pub fn params(&self, premium: f64) -> ConsumerParams {
        let rp = self.reservation_price.unwrap_or(premium);
        ConsumerParams {
            initial_price: self.initial_price.unwrap_or(rp).max(rp),
            reservation_price: rp,
            deadline: self.deadline,
            eta: self.eta.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumSection {
    pub r0: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PremiumSection {
    fn default() -> Self {
        Self {
            r0: 50.0,
            mu: 0.0,
            sigma: 0.0,
            horizon: 1.0,
        }
    }
}

impl PremiumSection {
    pub fn model(&self) -> Result<PremiumModel> {
        PremiumModel::new(self.r0, self.mu, self.sigma)
    }

    pub fn expected(&self) -> Result<f64> {
        self.model()?.expected_premium(self.horizon)
    }

    /// Premium at a drift-sweep point: `R0 e^(drift - 1)`, so drift 1 gives `R0`.
    pub fn at_drift(&self, drift: f64) -> Result<f64> {
        PremiumModel::new(self.r0, drift - 1.0, self.sigma)?.expected_premium(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for DriftSweep {
    fn default() -> Self {
        Self {
            start: 1.0,
            stop: 2.0,
            step: 0.1,
        }
    }
}

impl DriftSweep {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.stop >= self.start) {
            return Err(Error::invalid("drift sweep needs step > 0 and stop >= start"));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        // round away accumulated error so points print as 1.1, 1.2, ...
        Ok((0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentMode {
    /// Every accepted record is paid the agreed price.
    Uniform,
    /// Every accepted consumer is paid their own expected payoff, capped at the agreed price.
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: u8,
    pub seed: u64,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_provider_id")]
    pub provider_id: String,
    pub consumer: ConsumerSection,
    pub provider: ProviderParams,
    #[serde(default)]
    pub premium: PremiumSection,
    #[serde(default)]
    pub distribution: RiskDistribution,
    #[serde(default)]
    pub coupling: PcrCoupling,
    #[serde(default)]
    pub drift: Option<DriftSweep>,
    #[serde(default)]
    pub providers: Vec<String>,
    pub payment: PaymentMode,
}

fn default_population() -> usize {
    2000
}

fn default_provider_id() -> String {
    "provider".into()
}

impl ExperimentConfig {
    /// The four published parameter sets.
    pub fn preset(experiment: u8, seed: u64) -> Result<Self> {
        let consumer = |rp: Option<f64>, deadline| ConsumerSection {
            reservation_price: rp,
            initial_price: None,
            deadline,
            eta: None,
        };
        let (consumer, provider) = match experiment {
            1 => (consumer(Some(45.0), 10), ProviderParams::new(70.0, 35.0, 6, 3.0)),
            2 => (consumer(Some(45.0), 50), ProviderParams::new(70.0, 50.0, 25, 5.0)),
            3 => (consumer(Some(45.0), 100), ProviderParams::new(70.0, 35.0, 100, 3.0)),
            4 => (consumer(None, 15), ProviderParams::new(70.0, 35.0, 10, 3.0)),
            other => return Err(Error::invalid(format!("unknown experiment {other}; expected 1-4"))),
        };
        let multi = experiment >= 3;
        Ok(Self {
            experiment,
            seed,
            population: default_population(),
            provider_id: default_provider_id(),
            consumer,
            provider,
            premium: PremiumSection::default(),
            distribution: RiskDistribution::default(),
            coupling: PcrCoupling::default(),
            drift: (experiment == 4).then(DriftSweep::default),
            providers: if multi {
                TRAVEL_FIXTURES.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
            payment: if multi { PaymentMode::Individual } else { PaymentMode::Uniform },
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::parse("config", e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.experiment) {
            return Err(Error::invalid(format!("unknown experiment {}; expected 1-4", self.experiment)));
        }
        if self.population == 0 {
            return Err(Error::invalid("population must be positive"));
        }
        self.provider.validate()?;
        self.premium.model()?;
        self.distribution.validate()?;
        let premium = self.premium.expected()?;
        if self.experiment != 4 {
            if self.consumer.reservation_price.is_none() {
                return Err(Error::invalid("consumer reservation price is required"));
            }
            self.consumer.params(premium).validate()?;
        }
        if self.experiment >= 3 && self.providers.is_empty() {
            return Err(Error::invalid("experiments 3 and 4 need provider fixtures"));
        }
        if self.experiment == 4 {
            let sweep = self.drift.ok_or_else(|| Error::invalid("experiment 4 needs a drift sweep"))?;
            for d in sweep.points()? {
                self.consumer.params(self.premium.at_drift(d)?).validate()?;
            }
        }
        Ok(())
    }
}
