//! Invariant suite shared by the `properties` and `acceptance` targets.
//!
//! Every invariant is a plain function so the acceptance report can run the
//! whole suite and count the cases.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privpay_core::agents::{run_pipeline, PipelineConfig, PipelineStores, STAGES};
use privpay_core::harness::{
    run_experiment, sample_risks, AccountRecord, AccountStore, ExperimentConfig, ExperimentStores, PaymentMode,
    PopulationSpec, RiskDistribution, TRAVEL_FIXTURES,
};
use privpay_core::negotiation::{
    provider_next_offer, run_session, transition, ConsumerParams, Decision, Event, Member, Outcome, Population,
    ProviderParams, State,
};
use privpay_core::ontology::{categorize, match_request, AttributeOntology, CategorizedProfile, DataRequest, FieldEntry, PersonalDataSpec};
use privpay_core::payoff::{distribute_surplus, quote_payoff, PremiumModel};
use privpay_core::risk::quantify_counts;
use privpay_core::trust::{
    count_credentials, crisp_label, star_rating, AttributeCatalog, CatalogAttribute, CredentialCounts,
    CredentialProfile, CredentialStore, FuzzyEngine, Polarity, Significance,
};

/// Cases per invariant.
pub const CASES: u32 = 256;
/// Random credential rows for the fuzzy monotonicity check.
pub const CREDENTIAL_ROWS: u32 = 1000;

/// Checks that enumerate a fixed input set instead of sampling.
pub const EXHAUSTIVE: &[&str] = &["trust: dominating repository rows rate no lower"];

pub type Check = fn() -> Result<u32, String>;

/// Name and check of every invariant; a check returns the number of cases it ran.
pub const SUITE: &[(&str, Check)] = &[
    ("ontology: canonicalization is idempotent", canonicalization_idempotent),
    ("ontology: categorize is order-insensitive", categorize_order_insensitive),
    ("ontology: alpha bounded and monotone in the request", alpha_bounded_and_monotone),
    ("ontology: substitution within a subset", substitution_within_subset),
    ("risk: brute-force oracle", risk_oracle),
    ("risk: bounds and full reveal", risk_bounds),
    ("risk: weight scale invariance", risk_scale_invariance),
    ("risk: monotone in alpha", risk_alpha_monotone),
    ("trust: adding credit never lowers phi or stars", fuzzy_monotone),
    ("trust: deterministic phi", fuzzy_deterministic),
    ("trust: saturated inputs match the crisp rules", fuzzy_saturated_matches_crisp),
    ("trust: dominating repository rows rate no lower", repository_dominance),
    ("payoff: linear in psi", payoff_linear),
    ("payoff: zero-drift premium is a martingale", premium_martingale),
    ("payoff: settlement conserves the community gain", settlement_conservation),
    ("payoff: shares proportional to valuations", settlement_proportional),
    ("negotiation: provider offers rise to the reservation price", provider_schedule),
    ("negotiation: demand and counters are monotone", demand_monotone),
    ("negotiation: sessions terminate on protocol edges", session_terminates),
    ("negotiation: automaton follows its edges", automaton_edges),
    ("negotiation: sit-and-wait dominates finite concession", sit_and_wait_dominance),
    ("negotiation: crossing rule", crossing_rule),
    ("agents: deterministic, complete and causal log", pipeline_log),
    ("harness: sampled risks lie in [0, 1]", sampled_risks_bounded),
    ("harness: offer curves show monotone demand", experiment_demand_monotone),
    ("harness: benefit accounting", benefit_accounting),
];

fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<u32, String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())?;
    Ok(cases)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- ontology

fn field_pool(ont: &AttributeOntology) -> Vec<String> {
    let mut pool: BTreeSet<String> = ont.equivalence_sets().iter().flat_map(|s| s.members.clone()).collect();
    for c in ont.schema() {
        for s in &c.subsets {
            pool.extend(s.attributes.iter().cloned());
        }
    }
    pool.insert("Shoe Size".into());
    pool.insert("Favourite Colour".into());
    pool.into_iter().collect()
}

fn schema_attributes(ont: &AttributeOntology) -> Vec<String> {
    ont.schema()
        .iter()
        .flat_map(|c| c.subsets.iter().flat_map(|s| s.attributes.iter().cloned()))
        .collect()
}

fn entries_strategy(pool: Vec<String>) -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((select(pool), select(vec!["a", "b", "c", "d"]).prop_map(String::from)), 0..14)
}

fn spec_of(entries: &[(String, String)]) -> PersonalDataSpec {
    PersonalDataSpec::new("p", entries.iter().map(|(n, v)| FieldEntry::new(n.clone(), v.clone())).collect())
}

pub fn canonicalization_idempotent() -> Result<u32, String> {
    let ont = AttributeOntology::default_ontology();
    let pool = field_pool(&ont);
    check(CASES, (select(pool), any::<bool>(), 0..3usize), |(name, upper, pad)| {
        let mut raw = if upper { name.to_uppercase() } else { name.to_lowercase() };
        raw = format!("{}{raw}{}", " ".repeat(pad), "\t".repeat(pad));
        if let Some(c) = ont.canonicalize(&raw) {
            prop_assert_eq!(ont.canonicalize(c), Some(c));
            prop_assert_eq!(ont.canonicalize(&name), Some(c));
        }
        Ok(())
    })
}

pub fn categorize_order_insensitive() -> Result<u32, String> {
    let ont = AttributeOntology::default_ontology();
    let strategy = entries_strategy(field_pool(&ont)).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()));
    check(CASES, strategy, |(entries, shuffled)| {
        let a = categorize(&spec_of(&entries), &ont).unwrap();
        let b = categorize(&spec_of(&shuffled), &ont).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn alpha_bounded_and_monotone() -> Result<u32, String> {
    let ont = AttributeOntology::default_ontology();
    let pool = field_pool(&ont);
    let request = prop::collection::vec(select(pool.clone()), 0..8);
    check(CASES, (entries_strategy(pool), request.clone(), request), |(entries, small, extra)| {
        let profile = categorize(&spec_of(&entries), &ont).unwrap();
        let mut big = small.clone();
        big.extend(extra);
        let a = match_request(&profile, &DataRequest::new("sp", small), &ont).alpha;
        let b = match_request(&profile, &DataRequest::new("sp", big), &ont).alpha;
        let x = profile.cardinalities();
        for i in 0..x.len() {
            prop_assert!(a[i] <= b[i], "alpha shrank: {a:?} -> {b:?}");
            prop_assert!(b[i] <= x[i], "alpha {b:?} exceeds X {x:?}");
        }
        Ok(())
    })
}

/// Subsets touched by `fields`: resolved, placed and actually held.
fn touched(profile: &CategorizedProfile, fields: &[String], ont: &AttributeOntology) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for f in fields {
        let Some(c) = ont.canonicalize(f) else { continue };
        let Some((cat, sub)) = ont.locate(c) else { continue };
        let held = profile
            .categories
            .iter()
            .filter(|k| k.name == cat)
            .flat_map(|k| &k.subsets)
            .any(|s| s.name == sub && s.items.iter().any(|i| i.attribute == c));
        if held {
            out.insert((cat.to_string(), sub.to_string()));
        }
    }
    out
}

pub fn substitution_within_subset() -> Result<u32, String> {
    let ont = AttributeOntology::default_ontology();
    let pool = field_pool(&ont);
    let attributes = schema_attributes(&ont);
    let request = prop::collection::vec(select(pool.clone()), 1..6);
    check(CASES, (entries_strategy(pool), request), |(entries, fields)| {
        let profile = categorize(&spec_of(&entries), &ont).unwrap();
        let base = match_request(&profile, &DataRequest::new("sp", fields.clone()), &ont).alpha;
        let hit = touched(&profile, &fields, &ont);
        for attr in &attributes {
            let (cat, sub) = ont.locate(attr).unwrap();
            if !hit.contains(&(cat.to_string(), sub.to_string())) {
                continue;
            }
            let mut more = fields.clone();
            more.push(attr.clone());
            let alpha = match_request(&profile, &DataRequest::new("sp", more), &ont).alpha;
            prop_assert_eq!(&alpha, &base, "adding {} changed alpha", attr);
        }
        Ok(())
    })
}

// -------------------------------------------------------------------- risk

fn weight() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 1 => Just(1.0), 6 => 0.0..=1.0f64]
}

/// `(x, beta, alpha)` with `alpha <= x`.
fn risk_inputs(max_categories: usize, max_x: usize) -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<usize>)> {
    prop::collection::vec((1..=max_x, weight()), 1..=max_categories)
        .prop_flat_map(|xb| {
            let alpha: Vec<_> = xb.iter().map(|&(x, _)| 0..=x).collect();
            (Just(xb), alpha)
        })
        .prop_map(|(xb, alpha)| {
            let (x, beta) = xb.into_iter().unzip();
            (x, beta, alpha)
        })
}

/// Direct evaluation: the normalizations cancel to `sum(alpha b) / sum(x b)`.
fn risk_closed_form(x: &[usize], beta: &[f64], alpha: &[usize]) -> f64 {
    let den: f64 = x.iter().zip(beta).map(|(&x, b)| x as f64 * b).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = alpha.iter().zip(beta).map(|(&a, b)| a as f64 * b).sum();
    num / den
}

pub fn risk_oracle() -> Result<u32, String> {
    check(CASES, risk_inputs(3, 3), |(x, beta, alpha)| {
        let got = quantify_counts(&x, &beta, &alpha).unwrap().psi_total;
        let want = risk_closed_form(&x, &beta, &alpha);
        prop_assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        Ok(())
    })
}

pub fn risk_bounds() -> Result<u32, String> {
    check(CASES, risk_inputs(7, 6), |(x, beta, alpha)| {
        let r = quantify_counts(&x, &beta, &alpha).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.psi_total));
        let full = quantify_counts(&x, &beta, &x).unwrap().psi_total;
        if beta.iter().any(|&b| b > 0.0) {
            prop_assert!((full - 1.0).abs() <= 1e-12, "full reveal gave {full}");
        } else {
            prop_assert_eq!(full, 0.0);
        }
        Ok(())
    })
}

pub fn risk_scale_invariance() -> Result<u32, String> {
    check(CASES, (risk_inputs(5, 5), 0.01..=1.0f64), |((x, beta, alpha), frac)| {
        let top = beta.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return Ok(());
        }
        let c = frac / top;
        let scaled: Vec<f64> = beta.iter().map(|b| b * c).collect();
        let a = quantify_counts(&x, &beta, &alpha).unwrap();
        let b = quantify_counts(&x, &scaled, &alpha).unwrap();
        for i in 0..x.len() {
            prop_assert!((a.npsi_ij[i] - b.npsi_ij[i]).abs() <= 1e-12);
            prop_assert!((a.psi_i[i] - b.psi_i[i]).abs() <= 1e-12);
        }
        prop_assert!((a.psi_total - b.psi_total).abs() <= 1e-12);
        Ok(())
    })
}

pub fn risk_alpha_monotone() -> Result<u32, String> {
    check(CASES, risk_inputs(6, 5), |(x, beta, alpha)| {
        let base = quantify_counts(&x, &beta, &alpha).unwrap().psi_total;
        for i in 0..x.len() {
            if alpha[i] < x[i] {
                let mut up = alpha.clone();
                up[i] += 1;
                let next = quantify_counts(&x, &beta, &up).unwrap().psi_total;
                prop_assert!(next >= base - 1e-12, "alpha {alpha:?} -> {up:?}: {base} -> {next}");
            }
        }
        Ok(())
    })
}

// ------------------------------------------------------------------- trust

fn rate(catalog: &AttributeCatalog, credit: &[bool]) -> (f64, f64) {
    let profile = CredentialProfile::from_credit("p", catalog, |a| {
        credit[catalog.attributes().iter().position(|b| b.name == a.name).unwrap()]
    });
    let counts = count_credentials(&profile, catalog).unwrap();
    let r = FuzzyEngine::default().reliability(counts, catalog).unwrap();
    (r.phi, star_rating(r.phi))
}

pub fn fuzzy_monotone() -> Result<u32, String> {
    let catalog = AttributeCatalog::standard();
    let n = catalog.attributes().len();
    // only the counts reach the engine, so rate each count triple once
    let [hx, hy, hz] = catalog.sizes();
    let mut table = BTreeMap::new();
    for x in 0..=hx {
        for y in 0..=hy {
            for z in 0..=hz {
                let r = FuzzyEngine::default().reliability(CredentialCounts::new(x, y, z), &catalog).unwrap();
                table.insert((x, y, z), (r.phi, star_rating(r.phi)));
            }
        }
    }
    let rate = |credit: &[bool]| {
        let profile = CredentialProfile::from_credit("p", &catalog, |a| {
            credit[catalog.attributes().iter().position(|b| b.name == a.name).unwrap()]
        });
        let c = count_credentials(&profile, &catalog).unwrap();
        table[&(c.x, c.y, c.z)]
    };
    check(CREDENTIAL_ROWS, prop::collection::vec(any::<bool>(), n), |credit| {
        let (phi, stars) = rate(&credit);
        for i in 0..n {
            if !credit[i] {
                let mut more = credit.clone();
                more[i] = true;
                let (phi2, stars2) = rate(&more);
                prop_assert!(phi2 >= phi, "credit {i} on {credit:?}: phi {phi} -> {phi2}");
                prop_assert!(stars2 >= stars);
            }
        }
        Ok(())
    })
}

pub fn fuzzy_deterministic() -> Result<u32, String> {
    let catalog = AttributeCatalog::standard();
    check(CASES, (0..=3usize, 0..=3usize, 0..=4usize), |(x, y, z)| {
        let counts = CredentialCounts::new(x, y, z);
        let a = FuzzyEngine::default().reliability(counts, &catalog).unwrap();
        let b = FuzzyEngine::default().reliability(counts, &catalog).unwrap();
        prop_assert_eq!(a.phi.to_bits(), b.phi.to_bits());
        prop_assert_eq!(a.label, b.label);
        Ok(())
    })
}

/// A catalog with the given class sizes.
pub fn sized_catalog(sizes: [usize; 3]) -> AttributeCatalog {
    let classes = [Significance::High, Significance::Medium, Significance::Low];
    let mut attributes = Vec::new();
    for (class, &n) in classes.iter().zip(&sizes) {
        for i in 0..n {
            attributes.push(CatalogAttribute {
                name: format!("{class:?}-{i}"),
                significance: *class,
                polarity: Polarity::Positive,
                report_item: None,
            });
        }
    }
    AttributeCatalog::new(attributes).unwrap()
}

/// Counts whose threshold memberships are all exactly 0 or 1.
fn saturating_counts(n: usize, ramp: f64) -> Vec<usize> {
    let hw = (ramp / n as f64).min(0.5);
    (0..=n)
        .filter(|&c| 2 * c == n || (c as f64 / n as f64 - 0.5).abs() >= hw)
        .collect()
}

pub fn fuzzy_saturated_matches_crisp() -> Result<u32, String> {
    let ramp = FuzzyEngine::default().ramp_counts;
    let dim = move || (1..=12usize).prop_flat_map(move |n| (Just(n), select(saturating_counts(n, ramp))));
    check(CASES, (dim(), dim(), dim()), |((nx, x), (ny, y), (nz, z))| {
        let sizes = [nx, ny, nz];
        let counts = CredentialCounts::new(x, y, z);
        let r = FuzzyEngine::default().reliability(counts, &sized_catalog(sizes)).unwrap();
        prop_assert_eq!(r.label, crisp_label(counts, sizes), "counts {:?} sizes {:?}", counts, sizes);
        Ok(())
    })
}

pub fn repository_dominance() -> Result<u32, String> {
    let catalog = AttributeCatalog::standard();
    let store = CredentialStore::bundled();
    let rows: Vec<(String, Vec<bool>, f64)> = store
        .profiles()
        .iter()
        .map(|p| {
            let credit: Vec<bool> = catalog
                .attributes()
                .iter()
                .map(|a| a.earns_credit(p.attributes[&a.name]))
                .collect();
            let stars = rate(&catalog, &credit).1;
            (p.provider_id.clone(), credit, stars)
        })
        .collect();
    let mut pairs = 0;
    for (a, ca, sa) in &rows {
        for (b, cb, sb) in &rows {
            let dominates = ca.iter().zip(cb).all(|(x, y)| x >= y) && ca != cb;
            if dominates {
                pairs += 1;
                if sa < sb {
                    return Err(format!("{a} dominates {b} but rates {sa} < {sb}"));
                }
            }
        }
    }
    Ok(pairs)
}

// ------------------------------------------------------------------ payoff

pub fn payoff_linear() -> Result<u32, String> {
    check(CASES, (0.0..=1.0f64, 0.0..=1.0f64, 0.0..500.0f64), |(psi, c, premium)| {
        let scaled = quote_payoff("c", c * psi, premium).unwrap().expected_payoff;
        let base = quote_payoff("c", psi, premium).unwrap().expected_payoff;
        prop_assert!(close(scaled, c * base, 1e-12));
        prop_assert!((0.0..=premium).contains(&base));
        Ok(())
    })
}

pub fn premium_martingale() -> Result<u32, String> {
    const DRAWS: usize = 4000;
    check(CASES, (10.0..100.0f64, 0.05..0.6f64, 0.1..2.0f64, any::<u64>()), |(r0, sigma, t, seed)| {
        let model = PremiumModel::new(r0, 0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..DRAWS).map(|_| model.sample_premium(t, &mut rng).unwrap()).collect();
        prop_assert!(draws.iter().all(|&d| d > 0.0));
        let mean = draws.iter().sum::<f64>() / DRAWS as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
        let se = (var / DRAWS as f64).sqrt();
        prop_assert!((mean - r0).abs() <= 4.5 * se, "mean {mean} vs {r0} (se {se})");
        Ok(())
    })
}

fn valuations() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (0.5..100.0f64).prop_flat_map(|price| {
        let g = prop_oneof![1 => Just(0.0), 1 => Just(price), 8 => 0.0..=price];
        (Just(price), prop::collection::vec(g, 1..40))
    })
}

fn members(g: &[f64]) -> Vec<(String, f64)> {
    g.iter().enumerate().map(|(i, &g)| (format!("c{i}"), g)).collect()
}

pub fn settlement_conservation() -> Result<u32, String> {
    check(CASES, valuations(), |(price, g)| {
        let s = distribute_surplus(price, &members(&g)).unwrap();
        let v = price * g.len() as f64;
        let total: f64 = s.entries.iter().map(|e| e.total).sum();
        let shares: f64 = s.entries.iter().map(|e| e.share).sum();
        prop_assert!((total - v).abs() <= 1e-6, "totals {total} vs v(C) {v}");
        prop_assert!((shares - s.surplus).abs() <= 1e-6);
        prop_assert!(s.surplus >= -1e-9);
        for e in &s.entries {
            prop_assert!(e.total >= e.g - 1e-9);
        }
        Ok(())
    })
}

pub fn settlement_proportional() -> Result<u32, String> {
    check(CASES, valuations(), |(price, g)| {
        let s = distribute_surplus(price, &members(&g)).unwrap();
        for a in &s.entries {
            for b in &s.entries {
                if a.g < b.g {
                    prop_assert!(a.share <= b.share + 1e-9);
                }
                if b.g > 0.0 && s.surplus > 1e-9 {
                    prop_assert!(close(a.share / b.share, a.g / b.g, 1e-9));
                }
            }
        }
        Ok(())
    })
}

// ------------------------------------------------------------- negotiation

fn provider_params() -> impl Strategy<Value = ProviderParams> {
    (10.0..200.0f64, 0.05..0.95f64, 1..40u32, 0.5..10.0f64, 0.0..0.9f64).prop_map(|(v, rp, deadline, theta, frac)| {
        ProviderParams {
            utility: v,
            reservation_price: (v * rp * 100.0).round() / 100.0,
            deadline,
            theta,
            initial_fraction: frac,
        }
    })
}

fn consumer_params() -> impl Strategy<Value = ConsumerParams> {
    let eta = prop_oneof![Just(f64::INFINITY), 0.3..6.0f64];
    (1.0..150.0f64, 0.0..50.0f64, 1..40u32, eta).prop_map(|(rp, extra, deadline, eta)| ConsumerParams {
        initial_price: rp + extra,
        reservation_price: rp,
        deadline,
        eta,
    })
}

fn population_of(payoffs: &[f64]) -> Population {
    Population::new(
        payoffs
            .iter()
            .enumerate()
            .map(|(i, &u)| Member {
                consumer_id: format!("c{i}"),
                expected_payoff: u,
                psi: u / 200.0,
            })
            .collect(),
    )
    .unwrap()
}

fn payoffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..200.0f64, 1..60)
}

pub fn provider_schedule() -> Result<u32, String> {
    check(CASES, provider_params(), |p| {
        let offers: Vec<_> = (1..=p.deadline).map(|t| provider_next_offer(t, &p).unwrap()).collect();
        for w in offers.windows(2) {
            prop_assert!(w[0].price <= w[1].price);
        }
        prop_assert!(offers.iter().all(|o| o.price <= p.reservation_price));
        let last = offers.last().unwrap();
        prop_assert!(last.is_final && last.price == p.reservation_price);
        Ok(())
    })
}

pub fn demand_monotone() -> Result<u32, String> {
    check(
        CASES,
        (payoffs(), 0.0..200.0f64, 0.0..200.0f64, provider_params(), consumer_params()),
        |(u, a, b, provider, consumer)| {
            let pop = population_of(&u);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(pop.willing(lo) <= pop.willing(hi));
            prop_assert_eq!(pop.willing(hi), u.iter().filter(|&&x| x <= hi).count());

            let session = run_session(consumer, provider, pop).unwrap();
            let counters: Vec<usize> = session
                .offers()
                .iter()
                .filter_map(|o| match o.decision {
                    Decision::Counter(n) => Some(n),
                    _ => None,
                })
                .collect();
            for w in counters.windows(2) {
                prop_assert!(w[0] <= w[1], "counters {counters:?}");
            }
            Ok(())
        },
    )
}

const EDGES: [(State, Event, State); 8] = [
    (State::Start, Event::SendCfp, State::S1),
    (State::S1, Event::ReceivePropose, State::S2),
    (State::S3, Event::ReceivePropose, State::S2),
    (State::S2, Event::SendCounter, State::S3),
    (State::S2, Event::SendAccept, State::S6),
    (State::S2, Event::SendReject, State::S5),
    (State::S5, Event::ReceiveInform, State::End),
    (State::S6, Event::ReceiveInform, State::End),
];

fn edge_target(from: State, event: Event) -> Option<State> {
    if event == Event::Abort {
        return (from != State::End).then_some(State::End);
    }
    EDGES.iter().find(|e| e.0 == from && e.1 == event).map(|e| e.2)
}

pub fn session_terminates() -> Result<u32, String> {
    check(CASES, (payoffs(), provider_params(), consumer_params()), |(u, provider, consumer)| {
        let session = run_session(consumer, provider, population_of(&u)).unwrap();
        let bound = consumer.deadline.max(provider.deadline) + 1;
        let outcome = session.outcome();
        let round = match outcome {
            Outcome::Agreed { round, .. } | Outcome::Failed { round } => round,
        };
        prop_assert!(round <= bound);
        prop_assert!(session.offers().iter().all(|o| o.round <= bound));
        let states = &session.state.states;
        prop_assert_eq!(states[0], State::Start);
        prop_assert_eq!(*states.last().unwrap(), State::End);
        for w in states.windows(2) {
            let ok = EDGES.iter().any(|e| e.0 == w[0] && e.2 == w[1]) || (w[1] == State::End && w[0] != State::End);
            prop_assert!(ok, "illegal step {:?} -> {:?}", w[0], w[1]);
        }
        Ok(())
    })
}

pub fn automaton_edges() -> Result<u32, String> {
    let event = select(vec![
        Event::SendCfp,
        Event::ReceivePropose,
        Event::SendCounter,
        Event::SendAccept,
        Event::SendReject,
        Event::ReceiveInform,
        Event::Abort,
    ]);
    check(CASES, prop::collection::vec(event, 1..30), |events| {
        let mut state = State::Start;
        for e in events {
            match (transition(state, e), edge_target(state, e)) {
                (Ok(next), Some(want)) => {
                    prop_assert_eq!(next, want);
                    state = next;
                }
                (Err(_), None) => {}
                (got, want) => prop_assert!(false, "{state:?} on {e:?}: got {got:?}, table says {want:?}"),
            }
        }
        Ok(())
    })
}

pub fn sit_and_wait_dominance() -> Result<u32, String> {
    let strategy = (payoffs(), provider_params(), 1.0..150.0f64, 0.0..50.0f64, 1..20u32, 1.0..8.0f64);
    check(CASES, strategy, |(mut u, provider, rp, extra, lead, eta)| {
        u.push(0.0);
        let deadline = provider.deadline + lead;
        let finite = ConsumerParams {
            initial_price: rp + extra,
            reservation_price: rp,
            deadline,
            eta,
        };
        let patient = ConsumerParams {
            eta: f64::INFINITY,
            ..finite
        };
        let a = run_session(patient, provider, population_of(&u)).unwrap().outcome();
        let b = run_session(finite, provider, population_of(&u)).unwrap().outcome();
        let (Some(pa), Some(pb)) = (a.agreed_price(), b.agreed_price()) else {
            return Err(TestCaseError::fail(format!("no agreement: {a:?} / {b:?}")));
        };
        prop_assert!(pa >= pb, "sit-and-wait {pa} < eta {eta}: {pb}");
        Ok(())
    })
}

pub fn crossing_rule() -> Result<u32, String> {
    check(CASES, (payoffs(), provider_params(), 1.0..150.0f64, 0..10u32), |(u, provider, rp, lead)| {
        let consumer = ConsumerParams::sit_and_wait(rp, provider.deadline + lead);
        let pop = population_of(&u);
        let willing = pop.willing(provider.reservation_price);
        let outcome = run_session(consumer, provider, pop).unwrap().outcome();
        let crossing = (1..=provider.deadline)
            .map(|t| (t, provider_next_offer(t, &provider).unwrap().price))
            .find(|&(_, price)| price >= rp);
        match (crossing, outcome) {
            (Some((t, price)), Outcome::Agreed { price: got, round, records }) => {
                prop_assert_eq!(got, price);
                prop_assert_eq!(round, t);
                prop_assert_eq!(records, u.len());
            }
            (None, Outcome::Agreed { price, records, .. }) => {
                prop_assert_eq!(price, provider.reservation_price);
                prop_assert_eq!(records, willing);
            }
            (None, Outcome::Failed { .. }) => prop_assert_eq!(willing, 0),
            (c, o) => prop_assert!(false, "crossing {c:?} but outcome {o:?}"),
        }
        Ok(())
    })
}

// ------------------------------------------------------------------ agents

fn account_store() -> impl Strategy<Value = AccountStore> {
    let ont = AttributeOntology::default_ontology();
    let pool = schema_attributes(&ont);
    let categories: Vec<String> = ont.schema().iter().map(|c| c.name.clone()).collect();
    let record = (subsequence(pool, 1..8), prop::collection::vec(0.0..=1.0f64, categories.len()));
    prop::collection::vec(record, 1..12).prop_map(move |records| {
        let records = records
            .into_iter()
            .enumerate()
            .map(|(i, (fields, beta))| {
                let weights: BTreeMap<String, f64> = categories.iter().cloned().zip(beta).collect();
                AccountRecord {
                    consumer_id: format!("consumer-{i}"),
                    fields: fields.into_iter().map(|f| FieldEntry::new(f, "v")).collect(),
                    weights: BTreeMap::from([("default".to_string(), weights)]),
                }
            })
            .collect();
        AccountStore::new(records).unwrap()
    })
}

pub fn pipeline_log() -> Result<u32, String> {
    let ont = AttributeOntology::default_ontology();
    let request = subsequence(schema_attributes(&ont), 1..10);
    let strategy = (account_store(), request, select(TRAVEL_FIXTURES.to_vec()), 20.0..80.0f64);
    check(CASES, strategy, |(accounts, fields, provider, rp)| {
        let config = PipelineConfig {
            request: DataRequest::new(provider, fields),
            consumer: ConsumerParams::sit_and_wait(rp, 10),
            provider: ProviderParams::new(70.0, 35.0, 6, 3.0),
            premium: PremiumModel::default(),
            horizon: 1.0,
        };
        let stores = PipelineStores {
            ontology: ont.clone(),
            accounts,
            credentials: CredentialStore::bundled(),
            catalog: AttributeCatalog::standard(),
            engine: FuzzyEngine::default(),
        };
        let a = run_pipeline(&config, &stores).map_err(|f| TestCaseError::fail(f.to_string()))?;
        let b = run_pipeline(&config, &stores).map_err(|f| TestCaseError::fail(f.to_string()))?;
        prop_assert_eq!(&a.log, &b.log);

        for (i, r) in a.log.iter().enumerate() {
            prop_assert_eq!(r.step, i as u64 + 1);
        }
        let tasks = a.ledger.tasks();
        prop_assert_eq!(tasks.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(), STAGES.to_vec());
        for w in tasks.windows(2) {
            let done = w[0].completed_at.expect("stage completed");
            prop_assert!(done <= w[1].issued_at, "{} issued before {} completed", w[1].name, w[0].name);
        }
        Ok(())
    })
}

// ----------------------------------------------------------------- harness

pub fn sampled_risks_bounded() -> Result<u32, String> {
    check(CASES, (0.0..=1.0f64, 0.01..1.0f64, 1..300usize, any::<u64>()), |(mean, sd, size, seed)| {
        let spec = PopulationSpec {
            size,
            risk: RiskDistribution { mean, sd },
        };
        let risks = sample_risks(&spec, seed).unwrap();
        prop_assert_eq!(risks.len(), size);
        prop_assert!(risks.iter().all(|r| (0.0..=1.0).contains(r)));
        Ok(())
    })
}

fn small_experiment() -> impl Strategy<Value = ExperimentConfig> {
    (1..=4u8, any::<u64>(), 5..120usize, 0.2..0.9f64, any::<bool>()).prop_map(|(id, seed, size, mean, flip)| {
        let mut config = ExperimentConfig::preset(id, seed).unwrap();
        config.population = size;
        config.distribution.mean = mean;
        if flip {
            config.payment = match config.payment {
                PaymentMode::Uniform => PaymentMode::Individual,
                PaymentMode::Individual => PaymentMode::Uniform,
            };
        }
        config
    })
}

pub fn experiment_demand_monotone() -> Result<u32, String> {
    let stores = ExperimentStores::default();
    check(CASES, small_experiment(), |config| {
        let result = run_experiment(&config, &stores).unwrap();
        let mut curves = BTreeMap::<_, Vec<(f64, usize)>>::new();
        for row in &result.offer_curve {
            curves
                .entry((row.provider.clone(), row.drift.map(f64::to_bits)))
                .or_default()
                .push((row.provider_offer, row.consumer_count));
        }
        for (key, curve) in curves {
            for a in &curve {
                for b in &curve {
                    if a.0 < b.0 {
                        prop_assert!(a.1 <= b.1, "{key:?}: {curve:?}");
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn benefit_accounting() -> Result<u32, String> {
    let stores = ExperimentStores::default();
    check(CASES, small_experiment(), |config| {
        let result = run_experiment(&config, &stores).unwrap();
        let utility = config.provider.utility;
        for row in &result.summary {
            let tx: Vec<_> = result.transactions.iter().filter(|t| t.provider == row.provider).collect();
            let margin: f64 = tx.iter().map(|t| utility - t.paid).sum();
            prop_assert!(close(row.provider_benefit, margin, 1e-9));
            prop_assert_eq!(row.completed, tx.len());
            let consumer: f64 = match config.payment {
                PaymentMode::Uniform => result
                    .settlement
                    .iter()
                    .filter(|s| s.provider == row.provider)
                    .map(|s| s.total)
                    .sum(),
                PaymentMode::Individual => tx.iter().map(|t| t.paid).sum(),
            };
            prop_assert!(close(row.consumer_benefit, consumer, 1e-9));
            if let (PaymentMode::Uniform, Some(price)) = (config.payment, row.agreed_price) {
                prop_assert!(close(consumer, price * tx.len() as f64, 1e-9));
            }
        }
        for d in &result.drift {
            let margin: f64 = result
                .transactions
                .iter()
                .filter(|t| t.provider == d.provider && t.drift == Some(d.drift))
                .map(|t| utility - t.paid)
                .sum();
            prop_assert!(close(d.provider_benefit, margin, 1e-9));
        }
        Ok(())
    })
}
