//! Bilateral negotiation over the per-record price of a batch of personal
//! data records.
//!
//! The consumer side speaks for a whole community of consumers. The provider
//! raises its per-record offer by a fixed step each round; after every offer
//! the consumer side answers with the number of records whose owners would
//! accept that price, or closes the deal.
//!
//! Both sides are plain state machines driven by message contents, so the
//! same code runs in [`run_session`] and behind the agent message bus.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::Performative;
use crate::error::{Error, Result};

pub const CONSUMER_AGENT: &str = "consumer-negotiator";
pub const PROVIDER_AGENT: &str = "provider";

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Time-dependent concession: `IP - (t/T)^eta (IP - RP)`.
///
/// `eta = f64::INFINITY` is the sit-and-wait tactic: hold `IP` until the
/// deadline, then concede to `RP`.
pub fn concession_price(t: u32, ip: f64, rp: f64, deadline: u32, eta: f64) -> Result<f64> {
    if deadline == 0 {
        return Err(Error::invalid("deadline must be at least one round"));
    }
    if t > deadline {
        return Err(Error::invalid(format!("round {t} is past the deadline {deadline}")));
    }
    if eta.is_nan() || eta <= 0.0 {
        return Err(Error::invalid(format!("time preference must be positive, got {eta}")));
    }
    if eta.is_infinite() {
        return Ok(if t < deadline { ip } else { rp });
    }
    let frac = (t as f64 / deadline as f64).powf(eta);
    Ok(ip - frac * (ip - rp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumerParams {
    pub initial_price: f64,
    pub reservation_price: f64,
    pub deadline: u32,
    pub eta: f64,
}

impl ConsumerParams {
    /// Sit-and-wait consumer whose ask is `rp` throughout.
    pub fn sit_and_wait(rp: f64, deadline: u32) -> Self {
        Self {
            initial_price: rp,
            reservation_price: rp,
            deadline,
            eta: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reservation_price >= 0.0 && self.reservation_price.is_finite()) {
            return Err(Error::invalid("consumer reservation price must be non-negative"));
        }
        if !(self.initial_price >= self.reservation_price && self.initial_price.is_finite()) {
            return Err(Error::invalid("consumer initial price must be at least the reservation price"));
        }
        if self.deadline == 0 {
            return Err(Error::invalid("consumer deadline must be at least one round"));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::invalid("consumer time preference must be positive"));
        }
        Ok(())
    }

    /// The consumer's ask at round `t`; any offer at or above it is taken
    /// for the whole community.
    pub fn ask(&self, t: u32) -> Result<f64> {
        concession_price(t, self.initial_price, self.reservation_price, self.deadline, self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProviderParams {
    /// Utility `V` the provider draws from one record.
    pub utility: f64,
    pub reservation_price: f64,
    pub deadline: u32,
    /// Increase of the offer per round.
    pub theta: f64,
    /// Opening offer as a fraction of `V`.
    #[serde(default = "default_initial_fraction")]
    pub initial_fraction: f64,
}

fn default_initial_fraction() -> f64 {
    0.1
}

impl ProviderParams {
    pub fn new(utility: f64, reservation_price: f64, deadline: u32, theta: f64) -> Self {
        Self {
            utility,
            reservation_price,
            deadline,
            theta,
            initial_fraction: default_initial_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reservation_price > 0.0 && self.reservation_price < self.utility && self.utility.is_finite()) {
            return Err(Error::invalid(format!(
                "provider reservation price {} must lie strictly between 0 and the utility {}",
                self.reservation_price, self.utility
            )));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("bid increment must be positive"));
        }
        if !(0.0..1.0).contains(&self.initial_fraction) {
            return Err(Error::invalid("initial fraction must lie in [0, 1)"));
        }
        if self.deadline == 0 {
            return Err(Error::invalid("provider deadline must be at least one round"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub price: f64,
    pub is_final: bool,
}

/// The provider's offer for round `t >= 1`, in whole cents.
pub fn provider_next_offer(t: u32, params: &ProviderParams) -> Result<Offer> {
    if t == 0 {
        return Err(Error::invalid("offers start at round 1"));
    }
    let rp = params.reservation_price;
    let scheduled = cents(params.initial_fraction * params.utility + (t - 1) as f64 * params.theta);
    let price = if t >= params.deadline { rp } else { scheduled.min(rp) };
    Ok(Offer {
        price,
        is_final: price >= rp || t >= params.deadline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub consumer_id: String,
    pub expected_payoff: f64,
    pub psi: f64,
}

/// The consumers a negotiator speaks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<Member>,
    sorted_payoffs: Vec<f64>,
}

impl Population {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("population is empty"));
        }
        if let Some(m) = members
            .iter()
            .find(|m| !(m.expected_payoff >= 0.0 && m.expected_payoff.is_finite()))
        {
            return Err(Error::invalid(format!(
                "consumer `{}` has invalid expected payoff {}",
                m.consumer_id, m.expected_payoff
            )));
        }
        let mut sorted_payoffs: Vec<f64> = members.iter().map(|m| m.expected_payoff).collect();
        sorted_payoffs.sort_by(f64::total_cmp);
        Ok(Self { members, sorted_payoffs })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `N'(price)`: consumers whose expected payoff does not exceed `price`.
    pub fn willing(&self, price: f64) -> usize {
        self.sorted_payoffs.partition_point(|&u| u <= price)
    }

    /// Members that take part in a deal closed at `price` for `records` records.
    pub fn accepted(&self, price: f64, records: usize) -> Vec<&Member> {
        if records >= self.members.len() {
            self.members.iter().collect()
        } else {
            self.members.iter().filter(|m| m.expected_payoff <= price).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "records", rename_all = "snake_case")]
pub enum Decision {
    Counter(usize),
    AcceptAll(usize),
    AcceptPartial(usize),
    Reject,
}

/// The consumer side's answer to an offer made in round `t`.
///
/// Offers at or above the current ask close the deal for every record.
/// Below the ask the consumer side counters with `N'`, except on the
/// provider's final offer or at its own deadline, where it takes the `N'`
/// willing records (or rejects when nobody is willing).
pub fn consumer_evaluate(
    offer: Offer,
    t: u32,
    population: &Population,
    params: &ConsumerParams,
) -> Result<Decision> {
    let ask = params.ask(t.min(params.deadline))?;
    let willing = population.willing(offer.price);
    let last_chance = offer.is_final || t >= params.deadline;
    Ok(if offer.price >= ask {
        Decision::AcceptAll(population.len())
    } else if last_chance && willing > 0 {
        Decision::AcceptPartial(willing)
    } else if last_chance {
        Decision::Reject
    } else {
        Decision::Counter(willing)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum State {
    Start,
    S1,
    S2,
    S3,
    /// Part of the published state diagram; no observed trace reaches it.
    S4,
    S5,
    S6,
    End,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            State::Start => "START",
            State::S1 => "S1",
            State::S2 => "S2",
            State::S3 => "S3",
            State::S4 => "S4",
            State::S5 => "S5",
            State::S6 => "S6",
            State::End => "END",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    SendCfp,
    ReceivePropose,
    SendCounter,
    SendAccept,
    SendReject,
    ReceiveInform,
    Abort,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The consumer side's protocol automaton.
pub fn transition(from: State, event: Event) -> Result<State> {
    use Event::*;
    use State::*;
    let to = match (from, event) {
        (Start, SendCfp) => S1,
        (S1, ReceivePropose) | (S3, ReceivePropose) => S2,
        (S2, SendCounter) => S3,
        (S2, SendAccept) => S6,
        (S2, SendReject) => S5,
        (S5, ReceiveInform) | (S6, ReceiveInform) => End,
        (s, Abort) if s != End => End,
        _ => {
            return Err(Error::IllegalTransition {
                from: from.to_string(),
                event: event.to_string(),
            })
        }
    };
    Ok(to)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferRecord {
    pub round: u32,
    pub price: f64,
    pub is_final: bool,
    pub decision: Decision,
    /// Records on the table after this offer: the counter, or the records accepted.
    pub consumer_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Agreed { price: f64, records: usize, round: u32 },
    Failed { round: u32 },
}

impl Outcome {
    pub fn agreed_price(&self) -> Option<f64> {
        match self {
            Outcome::Agreed { price, .. } => Some(*price),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn records(&self) -> usize {
        match self {
            Outcome::Agreed { records, .. } => *records,
            Outcome::Failed { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationMessage {
    pub round: u32,
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub content: String,
}

/// What one side says next.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub performative: Performative,
    pub content: String,
}

impl Utterance {
    fn new(performative: Performative, content: impl Into<String>) -> Self {
        Self {
            performative,
            content: content.into(),
        }
    }
}

fn offer_content(offer: Offer) -> String {
    let tag = if offer.is_final { "finalbidPR" } else { "inbidPR" };
    format!("{tag}:{:?}", offer.price)
}

/// Parses a provider offer such as `inbidPR:16.0` or `finalbidPR:35.0`.
pub fn parse_offer(content: &str) -> Option<Offer> {
    let (tag, value) = content.split_once(':')?;
    let is_final = match tag {
        "inbidPR" => false,
        "finalbidPR" => true,
        _ => return None,
    };
    Some(Offer {
        price: value.trim().parse().ok()?,
        is_final,
    })
}

/// Parses a consumer record count such as `inbidCA:371`.
pub fn parse_count(content: &str) -> Option<usize> {
    content.strip_prefix("inbidCA:")?.trim().parse().ok()
}

fn unexpected(side: &str, performative: Performative, content: &str) -> Error {
    Error::invalid(format!("{side} cannot handle {performative} `{content}`"))
}

#[derive(Debug, Clone)]
pub struct ProviderSide {
    params: ProviderParams,
    round: u32,
    finished: bool,
}

impl ProviderSide {
    pub fn new(params: ProviderParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            round: 0,
            finished: false,
        })
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn respond(&mut self, performative: Performative, content: &str) -> Result<Option<Utterance>> {
        if self.finished {
            return Err(unexpected("finished provider", performative, content));
        }
        match performative {
            Performative::Cfp if self.round == 0 => self.next_offer().map(Some),
            Performative::Propose if self.round > 0 && parse_count(content).is_some() => {
                self.next_offer().map(Some)
            }
            Performative::AcceptProposal => {
                let records = parse_count(content).ok_or_else(|| unexpected("provider", performative, content))?;
                self.finished = true;
                Ok(Some(Utterance::new(Performative::Inform, format!("accepted:{records}"))))
            }
            Performative::RejectProposal => {
                self.finished = true;
                Ok(Some(Utterance::new(Performative::Inform, "rejectedbid:")))
            }
            _ => Err(unexpected("provider", performative, content)),
        }
    }

    fn next_offer(&mut self) -> Result<Utterance> {
        self.round += 1;
        let offer = provider_next_offer(self.round, &self.params)?;
        Ok(Utterance::new(Performative::Propose, offer_content(offer)))
    }
}

/// Transcript and result of one negotiation, as seen by the consumer side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub state: State,
    pub round: u32,
    pub states: Vec<State>,
    pub offers: Vec<OfferRecord>,
    pub outcome: Option<Outcome>,
}

impl SessionState {
    fn new() -> Self {
        Self {
            state: State::Start,
            round: 0,
            states: vec![State::Start],
            offers: Vec::new(),
            outcome: None,
        }
    }

    fn fire(&mut self, event: Event) -> Result<()> {
        self.state = transition(self.state, event)?;
        self.states.push(self.state);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConsumerSide {
    params: ConsumerParams,
    population: Population,
    session: SessionState,
}

impl ConsumerSide {
    pub fn new(params: ConsumerParams, population: Population) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            population,
            session: SessionState::new(),
        })
    }

    pub fn session(&self) -> &SessionState {
        &self.session
    }

    pub fn into_session(self) -> SessionState {
        self.session
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn is_finished(&self) -> bool {
        self.session.state == State::End
    }

    /// Opens the negotiation with a call for proposals.
    pub fn start(&mut self) -> Result<Utterance> {
        self.session.fire(Event::SendCfp)?;
        Ok(Utterance::new(Performative::Cfp, format!("cfp:{}", self.population.len())))
    }

    pub fn respond(&mut self, performative: Performative, content: &str) -> Result<Option<Utterance>> {
        match performative {
            Performative::Propose => {
                let offer = parse_offer(content).ok_or_else(|| unexpected("consumer", performative, content))?;
                self.session.fire(Event::ReceivePropose)?;
                self.session.round += 1;
                let t = self.session.round;
                let decision = consumer_evaluate(offer, t, &self.population, &self.params)?;
                let (event, reply, count) = match decision {
                    Decision::Counter(n) => (
                        Event::SendCounter,
                        Utterance::new(Performative::Propose, format!("inbidCA:{n}")),
                        n,
                    ),
                    Decision::AcceptAll(n) | Decision::AcceptPartial(n) => {
                        self.session.outcome = Some(Outcome::Agreed {
                            price: offer.price,
                            records: n,
                            round: t,
                        });
                        (
                            Event::SendAccept,
                            Utterance::new(Performative::AcceptProposal, format!("inbidCA:{n}")),
                            n,
                        )
                    }
                    Decision::Reject => {
                        self.session.outcome = Some(Outcome::Failed { round: t });
                        (
                            Event::SendReject,
                            Utterance::new(Performative::RejectProposal, "rejectedbid:"),
                            0,
                        )
                    }
                };
                self.session.fire(event)?;
                self.session.offers.push(OfferRecord {
                    round: t,
                    price: offer.price,
                    is_final: offer.is_final,
                    decision,
                    consumer_count: count,
                });
                Ok(Some(reply))
            }
            Performative::Inform => {
                self.session.fire(Event::ReceiveInform)?;
                Ok(None)
            }
            _ => Err(unexpected("consumer", performative, content)),
        }
    }

    /// Abandons the session; records a failure unless a deal was already struck.
    pub fn abort(&mut self) -> Result<()> {
        self.session.fire(Event::Abort)?;
        if self.session.outcome.is_none() {
            self.session.outcome = Some(Outcome::Failed {
                round: self.session.round,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub messages: Vec<NegotiationMessage>,
    pub state: SessionState,
}

impl Session {
    pub fn outcome(&self) -> Outcome {
        self.state.outcome.expect("finished session has an outcome")
    }

    pub fn offers(&self) -> &[OfferRecord] {
        &self.state.offers
    }
}

/// Runs a whole negotiation between the two sides without a message bus.
pub fn run_session(consumer: ConsumerParams, provider: ProviderParams, population: Population) -> Result<Session> {
    let mut consumer = ConsumerSide::new(consumer, population)?;
    let mut provider_side = ProviderSide::new(provider)?;
    let mut messages = Vec::new();
    let mut log = |round: u32, sender: &str, receiver: &str, u: &Utterance| {
        messages.push(NegotiationMessage {
            round,
            performative: u.performative,
            sender: sender.into(),
            receiver: receiver.into(),
            content: u.content.clone(),
        });
    };

    let cfp = consumer.start()?;
    log(0, CONSUMER_AGENT, PROVIDER_AGENT, &cfp);
    let mut to_provider = cfp;
    // each exchange is one offer and one reply; the bound only guards against bugs
    let limit = consumer.params.deadline.max(provider.deadline) + 2;
    while let Some(reply) = provider_side.respond(to_provider.performative, &to_provider.content)? {
        log(provider_side.round(), PROVIDER_AGENT, CONSUMER_AGENT, &reply);
        match consumer.respond(reply.performative, &reply.content)? {
            Some(answer) => {
                log(consumer.session().round, CONSUMER_AGENT, PROVIDER_AGENT, &answer);
                to_provider = answer;
            }
            None => break,
        }
        if provider_side.round() > limit {
            consumer.abort()?;
            break;
        }
    }
    if !consumer.is_finished() {
        consumer.abort()?;
    }
    Ok(Session {
        messages,
        state: consumer.into_session(),
    })
}
