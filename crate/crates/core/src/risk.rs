//! Privacy-risk quantification over a categorized profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::CategorizedProfile;

/// A consumer's sensitivity weights `β` for one transaction context, one per
/// profile category in profile order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub context_id: String,
    pub beta: Vec<f64>,
}

impl RiskWeights {
    pub fn new(context_id: impl Into<String>, beta: Vec<f64>) -> Result<Self> {
        let weights = Self {
            context_id: context_id.into(),
            beta,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.beta.iter().enumerate() {
            if !(0.0..=1.0).contains(b) {
                return Err(Error::invalid(format!("weight {i} = {b} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub context_id: String,
    /// Normalized category sizes `NX_i`.
    pub nx: Vec<f64>,
    /// Weighted risks `Ψ_ij = NX_i β_ij`.
    pub psi_ij: Vec<f64>,
    /// Normalized risks `NΨ_ij`.
    pub npsi_ij: Vec<f64>,
    /// Risk of the revealed part of each category, `Ψ_i = (α_i / X_i) NΨ_ij`.
    pub psi_i: Vec<f64>,
    pub psi_total: f64,
}

pub fn normalized_sizes(profile: &CategorizedProfile) -> Result<Vec<f64>> {
    sizes_to_nx(&profile.cardinalities())
}

fn sizes_to_nx(x: &[usize]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if x.contains(&0) {
        return Err(Error::invalid("category with no subsets"));
    }
    let total: usize = x.iter().sum();
    Ok(x.iter().map(|&xi| xi as f64 / total as f64).collect())
}

pub fn quantify_risk(profile: &CategorizedProfile, weights: &RiskWeights, alpha: &[usize]) -> Result<RiskProfile> {
    let mut risk = quantify_counts(&profile.cardinalities(), &weights.beta, alpha)?;
    risk.context_id = weights.context_id.clone();
    Ok(risk)
}

/// Same computation as [`quantify_risk`] on bare category sizes `X`.
pub fn quantify_counts(x: &[usize], beta: &[f64], alpha: &[usize]) -> Result<RiskProfile> {
    let nx = sizes_to_nx(x)?;
    for len in [beta.len(), alpha.len()] {
        if len != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: len,
            });
        }
    }
    if let Some(b) = beta.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::invalid(format!("weight {b} is outside [0, 1]")));
    }
    if let Some(i) = (0..x.len()).find(|&i| alpha[i] > x[i]) {
        return Err(Error::invalid(format!(
            "category {i} reveals {} subsets but holds only {}",
            alpha[i], x[i]
        )));
    }

    let psi_ij: Vec<f64> = nx.iter().zip(beta).map(|(n, b)| n * b).collect();
    let sum: f64 = psi_ij.iter().sum();
    let npsi_ij: Vec<f64> = if sum > 0.0 {
        psi_ij.iter().map(|p| p / sum).collect()
    } else {
        vec![0.0; psi_ij.len()]
    };
    let psi_i: Vec<f64> = npsi_ij
        .iter()
        .zip(alpha.iter().zip(x))
        .map(|(np, (&a, &xi))| a as f64 / xi as f64 * np)
        .collect();
    let psi_total = psi_i.iter().sum::<f64>().clamp(0.0, 1.0);

    Ok(RiskProfile {
        context_id: String::new(),
        nx,
        psi_ij,
        npsi_ij,
        psi_i,
        psi_total,
    })
}
