use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use privpay_core::agents::{run_pipeline, write_log, PipelineConfig, PipelineStores};
use privpay_core::harness::{emit_reports, run_experiment, AccountStore, ExperimentConfig, ExperimentStores};
use privpay_core::ontology::{categorize, match_request, AttributeOntology, DataRequest};
use privpay_core::payoff::{quote_payoff, PremiumModel};
use privpay_core::trust::{build_report, AttributeCatalog, CredentialStore, FuzzyEngine};
use privpay_core::{Error, Result};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "privpay", version, about = "Privacy payoff simulator")]
struct Cli {
    /// Seed for every random draw [default: 42, or the config file's seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Account store (JSON lines).
    #[arg(long, global = true)]
    accounts: Option<PathBuf>,
    /// Credential repository (CSV); defaults to the bundled one.
    #[arg(long, global = true)]
    credentials: Option<PathBuf>,
    /// Attribute ontology (TOML); defaults to the bundled one.
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Categorize every account and print the profiles as JSON lines.
    Categorize {
        /// Also report the subsets a request for these fields would reveal.
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
    },
    /// Print privacy credential reports.
    Rate {
        /// Providers to rate; all of them when omitted.
        providers: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Quote the expected payoff for a risk value.
    Payoff {
        #[arg(long)]
        psi: f64,
        #[arg(long, default_value_t = 50.0)]
        r0: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Run the full agent pipeline for one provider request against the account store.
    Negotiate {
        #[arg(long)]
        provider: String,
        /// Requested fields, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        fields: Vec<String>,
        /// Context the consumers' risk weights are keyed by; defaults to the provider.
        #[arg(long)]
        context: Option<String>,
    },
    /// Run one of the four simulation experiments.
    Experiment {
        /// Experiment number (1-4); ignored when --config is given.
        #[arg(default_value_t = 1)]
        id: u8,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn ontology(cli: &Cli) -> Result<AttributeOntology> {
    match &cli.ontology {
        Some(p) => AttributeOntology::load(p).map_err(|e| e.at_stage("load ontology")),
        None => Ok(AttributeOntology::default_ontology()),
    }
}

fn credentials(cli: &Cli) -> Result<CredentialStore> {
    match &cli.credentials {
        Some(p) => CredentialStore::load(p).map_err(|e| e.at_stage("load credentials")),
        None => Ok(CredentialStore::bundled()),
    }
}

fn accounts(cli: &Cli) -> Result<AccountStore> {
    let path = cli
        .accounts
        .as_ref()
        .ok_or_else(|| Error::invalid("--accounts is required").at_stage("load accounts"))?;
    AccountStore::load(path).map_err(|e| e.at_stage("load accounts"))
}

fn experiment_config(cli: &Cli, id: u8) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => ExperimentConfig::preset(id, DEFAULT_SEED),
    }
    .map_err(|e| e.at_stage("load config"))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new("out").join(default))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Categorize { fields } => {
            let ontology = ontology(cli)?;
            let store = accounts(cli)?;
            let request = DataRequest::new("cli", fields.clone());
            for record in store.records() {
                let profile = categorize(&record.spec(), &ontology).map_err(|e| e.at_stage("categorization"))?;
                let mut value = serde_json::to_value(&profile)?;
                value["cardinalities"] = serde_json::to_value(profile.cardinalities())?;
                if !fields.is_empty() {
                    value["reveal"] = serde_json::to_value(match_request(&profile, &request, &ontology))?;
                }
                println!("{}", serde_json::to_string(&value)?);
            }
        }
        Command::Rate { providers, json } => {
            let store = credentials(cli)?;
            let catalog = AttributeCatalog::standard();
            let engine = FuzzyEngine::default();
            let ids: Vec<String> = if providers.is_empty() {
                store.profiles().iter().map(|p| p.provider_id.clone()).collect()
            } else {
                providers.clone()
            };
            for id in ids {
                let profile = store.get(&id).map_err(|e| e.at_stage("trust"))?;
                let report = build_report(profile, &catalog, &engine).map_err(|e| e.at_stage("trust"))?;
                if *json {
                    println!("{}", serde_json::to_string(&report)?);
                } else {
                    println!("{}", report.to_text());
                }
            }
        }
        Command::Payoff { psi, r0, mu, sigma, t } => {
            let premium = PremiumModel::new(*r0, *mu, *sigma)
                .and_then(|m| m.expected_premium(*t))
                .map_err(|e| e.at_stage("payoff"))?;
            let quote = quote_payoff("cli", *psi, premium).map_err(|e| e.at_stage("payoff"))?;
            println!("{}", serde_json::to_string(&quote)?);
        }
        Command::Negotiate {
            provider,
            fields,
            context,
        } => {
            let base = experiment_config(cli, 1)?;
            let premium = base.premium.expected().map_err(|e| e.at_stage("load config"))?;
            let mut request = DataRequest::new(provider.clone(), fields.clone());
            if let Some(c) = context {
                request = request.with_context(c.clone());
            }
            let config = PipelineConfig {
                request,
                consumer: base.consumer.params(premium),
                provider: base.provider,
                premium: base.premium.model()?,
                horizon: base.premium.horizon,
            };
            let stores = PipelineStores {
                ontology: ontology(cli)?,
                accounts: accounts(cli)?,
                credentials: credentials(cli)?,
                catalog: AttributeCatalog::standard(),
                engine: FuzzyEngine::default(),
            };
            let dir = out_dir(cli, "negotiate");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let result = match run_pipeline(&config, &stores) {
                Ok(r) => r,
                Err(failure) => {
                    write_log(&failure.log, dir.join("messages.jsonl"))?;
                    return Err(failure.error);
                }
            };
            write_log(&result.log, dir.join("messages.jsonl"))?;
            let path = dir.join("result.json");
            std::fs::write(&path, serde_json::to_string_pretty(&result)? + "\n").map_err(|e| Error::io(&path, e))?;
            println!("{}", serde_json::to_string(&result.outcome)?);
        }
        Command::Experiment { id } => {
            let config = experiment_config(cli, *id)?;
            let stores = ExperimentStores {
                credentials: credentials(cli)?,
                ..ExperimentStores::default()
            };
            let result = run_experiment(&config, &stores).map_err(|e| e.at_stage("experiment"))?;
            let dir = out_dir(cli, &format!("experiment-{}", config.experiment));
            let manifest = emit_reports(&result, &dir).map_err(|e| e.at_stage("reports"))?;
            print!("{}", privpay_core::harness::summary_text(&result));
            eprintln!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
        }
    }
    Ok(())
}
