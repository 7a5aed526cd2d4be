//! Experiment configuration, synthetic populations, stores and reports.

mod config;
mod experiment;
mod population;
mod report;
mod stores;

pub use config::{
    ConsumerSection, DriftSweep, ExperimentConfig, PaymentMode, PremiumSection, TRAVEL_FIXTURES,
};
pub use experiment::{
    run_experiment, DriftRow, ExperimentResult, ExperimentStores, MessageRow, OfferCurveRow, ProviderSummaryRow,
    SettlementRow, TransactionRow,
};
pub use population::{
    consumer_id, derive_seed, generate_population, population_from_risks, rng_for, sample_risks, PcrCoupling,
    PopulationSpec, RiskDistribution,
};
pub use report::{emit_reports, summary_text, FileEntry, Manifest};
pub use stores::{AccountRecord, AccountStore, DEFAULT_CONTEXT};
