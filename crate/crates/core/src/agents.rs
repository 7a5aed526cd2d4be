//! Message bus, task ledger and the agents that run the full valuation
//! pipeline: categorize accounts, rate the requesting provider, collect
//! risk weights, quantify risk, quote payoffs, negotiate, report back.
//!
//! Scheduling is single-threaded round-robin: every pass gives each agent,
//! in registration order, at most one message from its queue. Runs are
//! therefore fully deterministic.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::AccountStore;
use crate::negotiation::{
    ConsumerParams, ConsumerSide, Member, Outcome, Population, ProviderParams, ProviderSide, SessionState,
    CONSUMER_AGENT, PROVIDER_AGENT,
};
use crate::ontology::{categorize, match_request, AttributeOntology, CategorizedProfile, DataRequest};
use crate::payoff::{distribute_surplus, quote_payoff, PayoffQuote, PremiumModel, Settlement};
use crate::risk::{quantify_risk, RiskWeights};
use crate::trust::{build_report, AttributeCatalog, CredentialStore, FuzzyEngine, PcrReport};

pub const FACILITATOR: &str = "facilitator";
pub const DATABASE: &str = "database";
pub const TRUST: &str = "trust";
pub const PAYOFF: &str = "payoff";

/// Pipeline stages in execution order.
pub const STAGES: [&str; 7] = [
    "categorization",
    "trust",
    "weight collection",
    "risk",
    "payoff",
    "negotiation",
    "inform",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Performative {
    #[serde(rename = "REQUEST")]
    Request,
    #[serde(rename = "INFORM")]
    Inform,
    #[serde(rename = "CFP")]
    Cfp,
    #[serde(rename = "PROPOSE")]
    Propose,
    #[serde(rename = "ACCEPT-PROPOSAL")]
    AcceptProposal,
    #[serde(rename = "REJECT-PROPOSAL")]
    RejectProposal,
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Performative::Request => "REQUEST",
            Performative::Inform => "INFORM",
            Performative::Cfp => "CFP",
            Performative::Propose => "PROPOSE",
            Performative::AcceptProposal => "ACCEPT-PROPOSAL",
            Performative::RejectProposal => "REJECT-PROPOSAL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclMessage {
    pub performative: Performative,
    pub sender: String,
    pub receivers: Vec<String>,
    pub content: String,
    pub conversation_id: String,
}

impl AclMessage {
    pub fn new(
        performative: Performative,
        sender: &str,
        receivers: &[&str],
        content: impl Into<String>,
        conversation_id: impl Into<String>,
    ) -> Self {
        Self {
            performative,
            sender: sender.into(),
            receivers: receivers.iter().map(|r| r.to_string()).collect(),
            content: content.into(),
            conversation_id: conversation_id.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sender.trim().is_empty() {
            return Err(Error::invalid("message without sender"));
        }
        if self.receivers.is_empty() || self.receivers.iter().any(|r| r.trim().is_empty()) {
            return Err(Error::invalid("message needs at least one named receiver"));
        }
        Ok(())
    }
}

/// One line of the global message log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub performative: Performative,
    pub sender: String,
    pub receivers: Vec<String>,
    pub conversation_id: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub step: u64,
    pub delivered_to: Vec<String>,
}

/// Named inbound queues plus the log of every dispatched message.
#[derive(Debug, Default)]
pub struct AgentRegistry {
    order: Vec<String>,
    queues: HashMap<String, VecDeque<AclMessage>>,
    log: Vec<LogRecord>,
}

impl AgentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str) -> Result<()> {
        if name.trim().is_empty() {
            return Err(Error::invalid("agent name must not be empty"));
        }
        if self.queues.contains_key(name) {
            return Err(Error::invalid(format!("agent `{name}` is already registered")));
        }
        self.order.push(name.to_string());
        self.queues.insert(name.to_string(), VecDeque::new());
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn dispatch(&mut self, message: AclMessage) -> Result<Receipt> {
        message.validate()?;
        if let Some(missing) = message.receivers.iter().find(|r| !self.queues.contains_key(*r)) {
            return Err(Error::UnknownAgent(missing.clone()));
        }
        let step = self.log.len() as u64 + 1;
        self.log.push(LogRecord {
            step,
            performative: message.performative,
            sender: message.sender.clone(),
            receivers: message.receivers.clone(),
            conversation_id: message.conversation_id.clone(),
            content: message.content.clone(),
        });
        for r in &message.receivers {
            self.queues.get_mut(r).expect("checked above").push_back(message.clone());
        }
        Ok(Receipt {
            step,
            delivered_to: message.receivers,
        })
    }

    pub fn receive(&mut self, name: &str) -> Option<AclMessage> {
        self.queues.get_mut(name)?.pop_front()
    }

    pub fn pending(&self, name: &str) -> usize {
        self.queues.get(name).map_or(0, VecDeque::len)
    }

    pub fn is_idle(&self) -> bool {
        self.queues.values().all(VecDeque::is_empty)
    }

    /// Step number the next dispatched message will get.
    pub fn next_step(&self) -> u64 {
        self.log.len() as u64 + 1
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<LogRecord> {
        self.log
    }
}

/// Writes a message log as JSON lines.
pub fn write_log(log: &[LogRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for record in log {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub name: String,
    pub issued_at: u64,
    pub completed_at: Option<u64>,
    pub result: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLedger {
    tasks: Vec<TaskRecord>,
}

impl TaskLedger {
    pub fn issue(&mut self, name: &str, step: u64) -> Result<()> {
        if self.tasks.iter().any(|t| t.name == name) {
            return Err(Error::invalid(format!("task `{name}` issued twice")));
        }
        self.tasks.push(TaskRecord {
            name: name.into(),
            issued_at: step,
            completed_at: None,
            result: None,
        });
        Ok(())
    }

    pub fn complete(&mut self, name: &str, step: u64, result: impl Into<String>) -> Result<()> {
        let task = self
            .tasks
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("task `{name}` was never issued")))?;
        if task.completed_at.is_some() {
            return Err(Error::invalid(format!("task `{name}` completed twice")));
        }
        task.completed_at = Some(step);
        task.result = Some(result.into());
        Ok(())
    }

    pub fn tasks(&self) -> &[TaskRecord] {
        &self.tasks
    }

    pub fn completed(&self) -> usize {
        self.tasks.iter().filter(|t| t.completed_at.is_some()).count()
    }

    /// The open task, if any.
    pub fn current(&self) -> Option<&str> {
        self.tasks
            .iter()
            .rev()
            .find(|t| t.completed_at.is_none())
            .map(|t| t.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub request: DataRequest,
    pub consumer: ConsumerParams,
    pub provider: ProviderParams,
    pub premium: PremiumModel,
    /// Time at which the expected premium is evaluated.
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineStores {
    pub ontology: AttributeOntology,
    pub accounts: AccountStore,
    pub credentials: CredentialStore,
    pub catalog: AttributeCatalog,
    pub engine: FuzzyEngine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerRisk {
    pub consumer_id: String,
    pub context: String,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub report: PcrReport,
    pub risks: Vec<ConsumerRisk>,
    /// Accounts without any categorizable field.
    pub skipped: Vec<String>,
    pub quotes: Vec<PayoffQuote>,
    pub session: SessionState,
    pub outcome: Outcome,
    pub settlement: Option<Settlement>,
    pub ledger: TaskLedger,
    #[serde(skip)]
    pub log: Vec<LogRecord>,
}

/// A failed run: the stage-tagged error plus everything recorded before it.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: Error,
    pub ledger: TaskLedger,
    pub log: Vec<LogRecord>,
}

impl fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<PipelineFailure> for Error {
    fn from(f: PipelineFailure) -> Self {
        f.error
    }
}

fn number(content: &str, what: &str) -> Result<f64> {
    content
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("expected {what}, got `{content}`")))
}

struct Facilitator {
    stage: usize,
    provider_id: String,
    context: String,
    premium: f64,
    conversation: String,
}

impl Facilitator {
    fn start(&mut self, bus: &mut AgentRegistry, ledger: &mut TaskLedger) -> Result<()> {
        self.issue(0, bus, ledger)
    }

    fn issue(&mut self, stage: usize, bus: &mut AgentRegistry, ledger: &mut TaskLedger) -> Result<()> {
        self.stage = stage;
        ledger.issue(STAGES[stage], bus.next_step())?;
        let conv = self.conversation.clone();
        let (performative, to, content) = match STAGES[stage] {
            "categorization" => (Performative::Inform, DATABASE, "Prepare Categorization".to_string()),
            "trust" => (Performative::Request, TRUST, format!("Assess Provider:{}", self.provider_id)),
            "weight collection" => (Performative::Request, DATABASE, format!("Collect Weights:{}", self.context)),
            "risk" => (Performative::Request, DATABASE, format!("Quantify Risk:{}", self.provider_id)),
            "payoff" => (Performative::Request, PAYOFF, format!("Compute Payoff:{}", self.premium)),
            "negotiation" => (Performative::Inform, CONSUMER_AGENT, "Start Negotiation".to_string()),
            _ => (Performative::Inform, CONSUMER_AGENT, "Negotiation Terminated".to_string()),
        };
        let receipt = bus.dispatch(AclMessage::new(performative, FACILITATOR, &[to], content, conv))?;
        if STAGES[stage] == "inform" {
            ledger.complete("inform", receipt.step, "Negotiation Terminated")?;
        }
        Ok(())
    }

    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry, ledger: &mut TaskLedger) -> Result<()> {
        let expected = match STAGES[self.stage] {
            "categorization" => (DATABASE, "Categorization Done:"),
            "trust" => (TRUST, "PCR Report:"),
            "weight collection" => (DATABASE, "Weights Collected:"),
            "risk" => (DATABASE, "Risk Quantified:"),
            "payoff" => (PAYOFF, "Payoff Computed:"),
            "negotiation" => (CONSUMER_AGENT, "Negotiation Result:"),
            _ => return Err(Error::invalid(format!("unexpected message after the last stage: `{}`", msg.content))),
        };
        let Some(result) = (msg.sender == expected.0).then(|| msg.content.strip_prefix(expected.1)).flatten() else {
            return Err(Error::invalid(format!(
                "facilitator expected `{}` from {} but got `{}` from {}",
                expected.1, expected.0, msg.content, msg.sender
            )));
        };
        let summary = if STAGES[self.stage] == "trust" {
            let report: serde_json::Value = serde_json::from_str(result)?;
            format!("{} stars", report["stars"].as_f64().unwrap_or(f64::NAN))
        } else {
            result.to_string()
        };
        ledger.complete(STAGES[self.stage], bus.next_step(), summary)?;
        self.issue(self.stage + 1, bus, ledger)
    }
}

struct Database {
    accounts: AccountStore,
    ontology: AttributeOntology,
    request: DataRequest,
    profiles: Vec<(String, CategorizedProfile)>,
    skipped: Vec<String>,
    weights: Vec<RiskWeights>,
    risks: Vec<ConsumerRisk>,
}

impl Database {
    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry) -> Result<()> {
        let reply = |bus: &mut AgentRegistry, content: String| {
            bus.dispatch(AclMessage::new(
                Performative::Inform,
                DATABASE,
                &[FACILITATOR],
                content,
                msg.conversation_id.clone(),
            ))
        };
        if msg.content == "Prepare Categorization" {
            if self.accounts.is_empty() {
                return Err(Error::invalid("account store is empty"));
            }
            for record in self.accounts.records() {
                let profile = categorize(&record.spec(), &self.ontology)?;
                if profile.is_empty() {
                    self.skipped.push(record.consumer_id.clone());
                } else {
                    self.profiles.push((record.consumer_id.clone(), profile));
                }
            }
            if self.profiles.is_empty() {
                return Err(Error::invalid("no account holds categorizable data"));
            }
            reply(bus, format!("Categorization Done:{}", self.profiles.len()))?;
        } else if let Some(context) = msg.content.strip_prefix("Collect Weights:") {
            for (id, profile) in &self.profiles {
                let record = self.accounts.get(id).expect("profile built from this store");
                self.weights.push(record.weights_for(context, &profile.category_names())?);
            }
            reply(bus, format!("Weights Collected:{}", self.weights.len()))?;
        } else if msg.content.starts_with("Quantify Risk:") {
            for ((id, profile), weights) in self.profiles.iter().zip(&self.weights) {
                let reveal = match_request(profile, &self.request, &self.ontology);
                let risk = quantify_risk(profile, weights, &reveal.alpha)?;
                bus.dispatch(AclMessage::new(
                    Performative::Inform,
                    DATABASE,
                    &[PAYOFF],
                    risk.psi_total.to_string(),
                    id.clone(),
                ))?;
                self.risks.push(ConsumerRisk {
                    consumer_id: id.clone(),
                    context: weights.context_id.clone(),
                    psi: risk.psi_total,
                });
            }
            reply(bus, format!("Risk Quantified:{}", self.risks.len()))?;
        } else {
            return Err(Error::invalid(format!("database cannot handle `{}`", msg.content)));
        }
        Ok(())
    }
}

struct TrustAgent {
    credentials: CredentialStore,
    catalog: AttributeCatalog,
    engine: FuzzyEngine,
    report: Option<PcrReport>,
}

impl TrustAgent {
    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry) -> Result<()> {
        let provider = msg
            .content
            .strip_prefix("Assess Provider:")
            .ok_or_else(|| Error::invalid(format!("trust agent cannot handle `{}`", msg.content)))?;
        let report = build_report(self.credentials.get(provider)?, &self.catalog, &self.engine)?;
        let content = format!("PCR Report:{}", serde_json::to_string(&report)?);
        bus.dispatch(AclMessage::new(
            Performative::Inform,
            TRUST,
            &[FACILITATOR, CONSUMER_AGENT],
            content,
            msg.conversation_id,
        ))?;
        self.report = Some(report);
        Ok(())
    }
}

#[derive(Default)]
struct PayoffAgent {
    risks: Vec<(String, f64)>,
    quotes: Vec<PayoffQuote>,
}

impl PayoffAgent {
    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry) -> Result<()> {
        if msg.performative == Performative::Inform && msg.sender == DATABASE {
            self.risks.push((msg.conversation_id, number(&msg.content, "a risk value")?));
            return Ok(());
        }
        let premium = msg
            .content
            .strip_prefix("Compute Payoff:")
            .ok_or_else(|| Error::invalid(format!("payoff agent cannot handle `{}`", msg.content)))?;
        let premium = number(premium, "a premium")?;
        for (id, psi) in &self.risks {
            let quote = quote_payoff(id.clone(), *psi, premium)?;
            bus.dispatch(AclMessage::new(
                Performative::Inform,
                PAYOFF,
                &[CONSUMER_AGENT],
                format!("payoff:{};psi:{}", quote.expected_payoff, psi),
                id.clone(),
            ))?;
            self.quotes.push(quote);
        }
        bus.dispatch(AclMessage::new(
            Performative::Inform,
            PAYOFF,
            &[FACILITATOR],
            format!("Payoff Computed:{}", self.quotes.len()),
            msg.conversation_id,
        ))?;
        Ok(())
    }
}

struct ConsumerAgent {
    params: ConsumerParams,
    members: Vec<Member>,
    report: Option<String>,
    side: Option<ConsumerSide>,
    conversation: String,
}

impl ConsumerAgent {
    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry) -> Result<()> {
        let send = |bus: &mut AgentRegistry, performative, to: &str, content: String, conv: &str| {
            bus.dispatch(AclMessage::new(performative, CONSUMER_AGENT, &[to], content, conv.to_string()))
        };
        match (msg.sender.as_str(), msg.performative) {
            (TRUST, Performative::Inform) => self.report = Some(msg.content),
            (PAYOFF, Performative::Inform) => {
                let parsed = msg
                    .content
                    .strip_prefix("payoff:")
                    .and_then(|rest| rest.split_once(";psi:"))
                    .ok_or_else(|| Error::invalid(format!("malformed payoff `{}`", msg.content)))?;
                self.members.push(Member {
                    consumer_id: msg.conversation_id,
                    expected_payoff: number(parsed.0, "a payoff")?,
                    psi: number(parsed.1, "a risk value")?,
                });
            }
            (FACILITATOR, Performative::Inform) if msg.content == "Start Negotiation" => {
                let population = Population::new(std::mem::take(&mut self.members))?;
                let mut side = ConsumerSide::new(self.params, population)?;
                let cfp = side.start()?;
                send(bus, cfp.performative, PROVIDER_AGENT, cfp.content, &self.conversation)?;
                self.side = Some(side);
            }
            (FACILITATOR, Performative::Inform) if msg.content == "Negotiation Terminated" => {}
            (PROVIDER_AGENT, performative) => {
                let side = self
                    .side
                    .as_mut()
                    .ok_or_else(|| Error::invalid("provider spoke before the negotiation started"))?;
                match side.respond(performative, &msg.content)? {
                    Some(reply) => send(bus, reply.performative, PROVIDER_AGENT, reply.content, &self.conversation)?,
                    None => {
                        let result = match side.session().outcome {
                            Some(Outcome::Agreed { price, records, .. }) => format!("agreed:{price:?}:{records}"),
                            _ => "failed".to_string(),
                        };
                        send(
                            bus,
                            Performative::Inform,
                            FACILITATOR,
                            format!("Negotiation Result:{result}"),
                            &self.conversation,
                        )?
                    }
                };
            }
            _ => return Err(Error::invalid(format!("consumer negotiator cannot handle `{}`", msg.content))),
        }
        Ok(())
    }
}

struct ProviderAgent {
    side: ProviderSide,
}

impl ProviderAgent {
    fn handle(&mut self, msg: AclMessage, bus: &mut AgentRegistry) -> Result<()> {
        if let Some(reply) = self.side.respond(msg.performative, &msg.content)? {
            bus.dispatch(AclMessage::new(
                reply.performative,
                PROVIDER_AGENT,
                &[msg.sender.as_str()],
                reply.content,
                msg.conversation_id,
            ))?;
        }
        Ok(())
    }
}

struct Agents {
    facilitator: Facilitator,
    database: Database,
    trust: TrustAgent,
    payoff: PayoffAgent,
    consumer: ConsumerAgent,
    provider: ProviderAgent,
}

impl Agents {
    fn step(&mut self, name: &str, bus: &mut AgentRegistry, ledger: &mut TaskLedger) -> Result<bool> {
        let Some(msg) = bus.receive(name) else {
            return Ok(false);
        };
        match name {
            FACILITATOR => self.facilitator.handle(msg, bus, ledger)?,
            DATABASE => self.database.handle(msg, bus)?,
            TRUST => self.trust.handle(msg, bus)?,
            PAYOFF => self.payoff.handle(msg, bus)?,
            CONSUMER_AGENT => self.consumer.handle(msg, bus)?,
            PROVIDER_AGENT => self.provider.handle(msg, bus)?,
            other => return Err(Error::UnknownAgent(other.to_string())),
        }
        Ok(true)
    }
}

/// Runs the whole pipeline for one provider request against every account.
pub fn run_pipeline(config: &PipelineConfig, stores: &PipelineStores) -> Result<PipelineResult, PipelineFailure> {
    let mut bus = AgentRegistry::new();
    let mut ledger = TaskLedger::default();
    match drive(config, stores, &mut bus, &mut ledger) {
        Ok(agents) => finish(agents, bus, ledger).map_err(|error| PipelineFailure {
            error,
            ledger: TaskLedger::default(),
            log: Vec::new(),
        }),
        Err(error) => {
            let stage = ledger.current().unwrap_or(STAGES[0]).to_string();
            Err(PipelineFailure {
                error: error.at_stage(stage),
                ledger,
                log: bus.into_log(),
            })
        }
    }
}

fn drive(
    config: &PipelineConfig,
    stores: &PipelineStores,
    bus: &mut AgentRegistry,
    ledger: &mut TaskLedger,
) -> Result<Agents> {
    let premium = config.premium.expected_premium(config.horizon)?;
    let conversation = format!("negotiation-{}", config.request.provider_id);
    let mut agents = Agents {
        facilitator: Facilitator {
            stage: 0,
            provider_id: config.request.provider_id.clone(),
            context: config.request.context_id().to_string(),
            premium,
            conversation: format!("pipeline-{}", config.request.provider_id),
        },
        database: Database {
            accounts: stores.accounts.clone(),
            ontology: stores.ontology.clone(),
            request: config.request.clone(),
            profiles: Vec::new(),
            skipped: Vec::new(),
            weights: Vec::new(),
            risks: Vec::new(),
        },
        trust: TrustAgent {
            credentials: stores.credentials.clone(),
            catalog: stores.catalog.clone(),
            engine: stores.engine.clone(),
            report: None,
        },
        payoff: PayoffAgent::default(),
        consumer: ConsumerAgent {
            params: config.consumer,
            members: Vec::new(),
            report: None,
            side: None,
            conversation,
        },
        provider: ProviderAgent {
            side: ProviderSide::new(config.provider)?,
        },
    };
    for name in [FACILITATOR, DATABASE, TRUST, PAYOFF, CONSUMER_AGENT, PROVIDER_AGENT] {
        bus.register(name)?;
    }
    config.consumer.validate()?;

    agents.facilitator.start(bus, ledger)?;
    let names: Vec<String> = bus.names().to_vec();
    loop {
        let mut progressed = false;
        for name in &names {
            progressed |= agents.step(name, bus, ledger)?;
        }
        if !progressed {
            break;
        }
    }
    if ledger.completed() != STAGES.len() {
        return Err(Error::invalid("pipeline stalled before all stages completed"));
    }
    Ok(agents)
}

fn finish(agents: Agents, bus: AgentRegistry, ledger: TaskLedger) -> Result<PipelineResult> {
    let side = agents.consumer.side.expect("negotiation ran");
    let outcome = side.session().outcome.expect("finished session has an outcome");
    let settlement = match outcome {
        Outcome::Agreed { price, records, .. } if records > 0 => {
            let members: Vec<(String, f64)> = side
                .population()
                .accepted(price, records)
                .into_iter()
                .map(|m| (m.consumer_id.clone(), m.expected_payoff.min(price)))
                .collect();
            Some(distribute_surplus(price, &members)?)
        }
        _ => None,
    };
    Ok(PipelineResult {
        report: agents.trust.report.expect("trust stage completed"),
        risks: agents.database.risks,
        skipped: agents.database.skipped,
        quotes: agents.payoff.quotes,
        session: side.into_session(),
        outcome,
        settlement,
        ledger,
        log: bus.into_log(),
    })
}
