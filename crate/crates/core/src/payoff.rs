//! Risk-premium payoffs and community surplus settlement.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market risk premium per record, following a geometric Brownian motion
/// with zero risk-free rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiumModel {
    pub r0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for PremiumModel {
    fn default() -> Self {
        Self {
            r0: 50.0,
            mu: 0.0,
            sigma: 0.0,
        }
    }
}

impl PremiumModel {
    pub fn new(r0: f64, mu: f64, sigma: f64) -> Result<Self> {
        let model = Self { r0, mu, sigma };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::invalid(format!("initial premium must be positive, got {}", self.r0)));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("drift must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("volatility must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        self.validate()?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("time must be non-negative, got {t}")));
        }
        Ok(())
    }

    /// `E[R_t] = R0 e^(mu t)`.
    pub fn expected_premium(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.r0 * (self.mu * t).exp())
    }

    /// One draw of `R_t = R0 exp((mu - sigma^2/2) t + sigma W_t)` with `W_t ~ N(0, t)`.
    pub fn sample_premium<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        self.check_time(t)?;
        if self.sigma == 0.0 {
            return Ok(self.r0 * (self.mu * t).exp());
        }
        let z: f64 = rng.sample(StandardNormal);
        let w = t.sqrt() * z;
        Ok(self.r0 * ((self.mu - 0.5 * self.sigma * self.sigma) * t + self.sigma * w).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffQuote {
    pub consumer_id: String,
    pub psi: f64,
    pub premium: f64,
    pub expected_payoff: f64,
}

/// Expected payoff `E(U) = psi * premium` of revealing one record.
pub fn quote_payoff(consumer_id: impl Into<String>, psi: f64, premium: f64) -> Result<PayoffQuote> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::invalid(format!("risk {psi} is outside [0, 1]")));
    }
    if !(premium >= 0.0 && premium.is_finite()) {
        return Err(Error::invalid(format!("premium must be non-negative, got {premium}")));
    }
    Ok(PayoffQuote {
        consumer_id: consumer_id.into(),
        psi,
        premium,
        expected_payoff: psi * premium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementEntry {
    pub consumer_id: String,
    /// Initial valuation: what the consumer asked for the record.
    pub g: f64,
    pub share: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub unit_price: f64,
    /// `v(C) = price * |C|`.
    pub community_gain: f64,
    pub total_valuation: f64,
    /// `S(C) = v(C) - sum g`.
    pub surplus: f64,
    pub entries: Vec<SettlementEntry>,
}

/// Splits the community's surplus over the agreed price in proportion to
/// each member's initial valuation. When every valuation is zero the
/// surplus is split equally.
pub fn distribute_surplus(unit_price: f64, members: &[(String, f64)]) -> Result<Settlement> {
    if members.is_empty() {
        return Err(Error::invalid("cannot settle an empty community"));
    }
    if !(unit_price >= 0.0 && unit_price.is_finite()) {
        return Err(Error::invalid(format!("unit price must be non-negative, got {unit_price}")));
    }
    for (id, g) in members {
        if !(*g >= 0.0 && g.is_finite()) {
            return Err(Error::invalid(format!("consumer `{id}` has invalid valuation {g}")));
        }
        if *g > unit_price + 1e-9 {
            return Err(Error::invalid(format!(
                "consumer `{id}` valued the record at {g}, above the agreed price {unit_price}"
            )));
        }
    }

    let community_gain = unit_price * members.len() as f64;
    let total_valuation: f64 = members.iter().map(|(_, g)| g).sum();
    let surplus = community_gain - total_valuation;
    let entries = members
        .iter()
        .map(|(id, g)| {
            let share = if total_valuation > 0.0 {
                g * surplus / total_valuation
            } else {
                surplus / members.len() as f64
            };
            SettlementEntry {
                consumer_id: id.clone(),
                g: *g,
                share,
                total: g + share,
            }
        })
        .collect();

    Ok(Settlement {
        unit_price,
        community_gain,
        total_valuation,
        surplus,
        entries,
    })
}
