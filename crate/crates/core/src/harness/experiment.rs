//! Drivers for the four simulation experiments.
//!
//! 1 and 2 run one negotiation against a single provider and split the
//! community surplus. 3 runs one negotiation per rated travel provider,
//! each with its own population whose risk perception follows the
//! provider's star rating. 4 repeats 3 across a sweep of premium drifts.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PaymentMode};
use super::population::{population_from_risks, sample_risks, PopulationSpec};
use crate::error::{Error, Result};
use crate::negotiation::{run_session, ConsumerParams, Outcome, Population, ProviderParams, Session};
use crate::payoff::distribute_surplus;
use crate::trust::{build_report, AttributeCatalog, CredentialStore, FuzzyEngine};

#[derive(Debug, Clone)]
pub struct ExperimentStores {
    pub credentials: CredentialStore,
    pub catalog: AttributeCatalog,
    pub engine: FuzzyEngine,
}

impl Default for ExperimentStores {
    fn default() -> Self {
        Self {
            credentials: CredentialStore::bundled(),
            catalog: AttributeCatalog::standard(),
            engine: FuzzyEngine::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferCurveRow {
    pub provider: String,
    pub drift: Option<f64>,
    pub round: u32,
    pub provider_offer: f64,
    pub is_final: bool,
    pub consumer_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRow {
    pub provider: String,
    pub consumer_id: String,
    pub g: f64,
    pub share: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSummaryRow {
    pub provider: String,
    pub stars: Option<f64>,
    pub sessions: usize,
    pub agreed_price: Option<f64>,
    pub completed: usize,
    pub consumer_benefit: f64,
    pub provider_benefit: f64,
    pub community_gain: Option<f64>,
    pub surplus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub provider: String,
    pub stars: f64,
    pub drift: f64,
    pub premium: f64,
    pub agreed_price: Option<f64>,
    pub completed: usize,
    pub consumer_benefit: f64,
    pub provider_benefit: f64,
}

/// One accepted record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRow {
    pub provider: String,
    pub drift: Option<f64>,
    pub consumer_id: String,
    pub psi: f64,
    pub expected_payoff: f64,
    pub paid: f64,
    pub provider_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRow {
    pub provider: String,
    pub drift: Option<f64>,
    pub round: u32,
    pub performative: crate::agents::Performative,
    pub sender: String,
    pub receiver: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub offer_curve: Vec<OfferCurveRow>,
    pub settlement: Vec<SettlementRow>,
    pub summary: Vec<ProviderSummaryRow>,
    pub drift: Vec<DriftRow>,
    pub transactions: Vec<TransactionRow>,
    pub messages: Vec<MessageRow>,
}

/// Result of one negotiation plus its payments.
struct Run {
    session: Session,
    transactions: Vec<TransactionRow>,
    settlement: Vec<SettlementRow>,
    community_gain: Option<f64>,
    surplus: Option<f64>,
    consumer_benefit: f64,
    provider_benefit: f64,
}

fn negotiate(
    provider_label: &str,
    drift: Option<f64>,
    consumer: ConsumerParams,
    provider: ProviderParams,
    population: Population,
    payment: PaymentMode,
) -> Result<Run> {
    let session = run_session(consumer, provider, population.clone())?;
    let mut run = Run {
        session,
        transactions: Vec::new(),
        settlement: Vec::new(),
        community_gain: None,
        surplus: None,
        consumer_benefit: 0.0,
        provider_benefit: 0.0,
    };
    let Outcome::Agreed { price, records, .. } = run.session.outcome() else {
        return Ok(run);
    };
    let accepted = population.accepted(price, records);
    for m in &accepted {
        let paid = match payment {
            PaymentMode::Uniform => price,
            PaymentMode::Individual => m.expected_payoff.min(price),
        };
        run.transactions.push(TransactionRow {
            provider: provider_label.into(),
            drift,
            consumer_id: m.consumer_id.clone(),
            psi: m.psi,
            expected_payoff: m.expected_payoff,
            paid,
            provider_margin: provider.utility - paid,
        });
    }
    run.provider_benefit = run.transactions.iter().map(|t| t.provider_margin).sum();

    match payment {
        PaymentMode::Uniform if !accepted.is_empty() => {
            // a consumer taking the price never values the record above it
            let members: Vec<(String, f64)> = accepted
                .iter()
                .map(|m| (m.consumer_id.clone(), m.expected_payoff.min(price)))
                .collect();
            let settlement = distribute_surplus(price, &members)?;
            run.community_gain = Some(settlement.community_gain);
            run.surplus = Some(settlement.surplus);
            run.consumer_benefit = settlement.entries.iter().map(|e| e.total).sum();
            run.settlement = settlement
                .entries
                .into_iter()
                .map(|e| SettlementRow {
                    provider: provider_label.into(),
                    consumer_id: e.consumer_id,
                    g: e.g,
                    share: e.share,
                    total: e.total,
                })
                .collect();
        }
        _ => run.consumer_benefit = run.transactions.iter().map(|t| t.paid).sum(),
    }
    Ok(run)
}

fn offer_rows(provider: &str, drift: Option<f64>, session: &Session) -> Vec<OfferCurveRow> {
    session
        .offers()
        .iter()
        .map(|o| OfferCurveRow {
            provider: provider.into(),
            drift,
            round: o.round,
            provider_offer: o.price,
            is_final: o.is_final,
            consumer_count: o.consumer_count,
        })
        .collect()
}

fn message_rows(provider: &str, drift: Option<f64>, session: &Session) -> Vec<MessageRow> {
    session
        .messages
        .iter()
        .map(|m| MessageRow {
            provider: provider.into(),
            drift,
            round: m.round,
            performative: m.performative,
            sender: m.sender.clone(),
            receiver: m.receiver.clone(),
            content: m.content.clone(),
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig, stores: &ExperimentStores) -> Result<ExperimentResult> {
    config.validate()?;
    let mut result = ExperimentResult {
        config: config.clone(),
        offer_curve: Vec::new(),
        settlement: Vec::new(),
        summary: Vec::new(),
        drift: Vec::new(),
        transactions: Vec::new(),
        messages: Vec::new(),
    };
    match config.experiment {
        1 | 2 => single_provider(config, &mut result)?,
        _ => rated_providers(config, stores, &mut result)?,
    }
    Ok(result)
}

fn single_provider(config: &ExperimentConfig, result: &mut ExperimentResult) -> Result<()> {
    let premium = config.premium.expected()?;
    let spec = PopulationSpec {
        size: config.population,
        risk: config.distribution,
    };
    let risks = sample_risks(&spec, super::population::derive_seed(config.seed, 0))?;
    let population = population_from_risks(&risks, premium)?;
    let label = config.provider_id.as_str();
    let run = negotiate(
        label,
        None,
        config.consumer.params(premium),
        config.provider,
        population,
        config.payment,
    )?;
    result.offer_curve.extend(offer_rows(label, None, &run.session));
    result.messages.extend(message_rows(label, None, &run.session));
    result.summary.push(ProviderSummaryRow {
        provider: label.into(),
        stars: None,
        sessions: 1,
        agreed_price: run.session.outcome().agreed_price(),
        completed: run.transactions.len(),
        consumer_benefit: run.consumer_benefit,
        provider_benefit: run.provider_benefit,
        community_gain: run.community_gain,
        surplus: run.surplus,
    });
    result.settlement.extend(run.settlement);
    result.transactions.extend(run.transactions);
    Ok(())
}

fn rated_providers(config: &ExperimentConfig, stores: &ExperimentStores, result: &mut ExperimentResult) -> Result<()> {
    // resolve every fixture before simulating anything
    let mut rated = Vec::new();
    for id in &config.providers {
        let profile = stores.credentials.get(id)?;
        let report = build_report(profile, &stores.catalog, &stores.engine)?;
        rated.push((profile.provider_id.clone(), report.stars));
    }

    let drifts = match config.drift {
        Some(sweep) if config.experiment == 4 => sweep.points()?.into_iter().map(Some).collect(),
        _ => vec![None],
    };
    for (k, (provider, stars)) in rated.iter().enumerate() {
        let spec = PopulationSpec {
            size: config.population,
            risk: config.coupling.distribution(*stars),
        };
        let risks = sample_risks(&spec, super::population::derive_seed(config.seed, k as u64 + 1))?;
        let mut row = ProviderSummaryRow {
            provider: provider.clone(),
            stars: Some(*stars),
            sessions: 0,
            agreed_price: None,
            completed: 0,
            consumer_benefit: 0.0,
            provider_benefit: 0.0,
            community_gain: None,
            surplus: None,
        };
        for &drift in &drifts {
            let premium = match drift {
                Some(d) => config.premium.at_drift(d)?,
                None => config.premium.expected()?,
            };
            let population = population_from_risks(&risks, premium)?;
            let run = negotiate(
                provider,
                drift,
                config.consumer.params(premium),
                config.provider,
                population,
                config.payment,
            )?;
            let price = run.session.outcome().agreed_price();
            if let Some(d) = drift {
                result.drift.push(DriftRow {
                    provider: provider.clone(),
                    stars: *stars,
                    drift: d,
                    premium,
                    agreed_price: price,
                    completed: run.transactions.len(),
                    consumer_benefit: run.consumer_benefit,
                    provider_benefit: run.provider_benefit,
                });
            }
            row.sessions += 1;
            row.agreed_price = row.agreed_price.or(price);
            row.completed += run.transactions.len();
            row.consumer_benefit += run.consumer_benefit;
            row.provider_benefit += run.provider_benefit;
            result.offer_curve.extend(offer_rows(provider, drift, &run.session));
            result.messages.extend(message_rows(provider, drift, &run.session));
            result.settlement.extend(run.settlement);
            result.transactions.extend(run.transactions);
        }
        result.summary.push(row);
    }
    if result.summary.is_empty() {
        return Err(Error::invalid("no providers to simulate"));
    }
    Ok(())
}
