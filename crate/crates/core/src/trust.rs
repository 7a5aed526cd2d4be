//! Privacy credential rating (PCR) of service providers.
//!
//! Credential attributes are split into high, medium and low significance
//! sets. The counts of credit-earning attributes in each set, `(X, Y, Z)`,
//! feed an eleven-rule fuzzy rule base whose output is defuzzified into the
//! reliability `phi` and then into a star rating.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

const DEFAULT_CREDENTIALS: &str = include_str!("../data/credentials.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Holding the attribute earns credit.
    Positive,
    /// The attribute describes a bad practice; its absence earns credit.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogAttribute {
    /// Column key in the credential repository.
    pub name: String,
    pub significance: Significance,
    pub polarity: Polarity,
    /// Statement shown in the consumer-facing report, if any.
    #[serde(default)]
    pub report_item: Option<String>,
}

impl CatalogAttribute {
    fn new(name: &str, significance: Significance, polarity: Polarity, report_item: Option<&str>) -> Self {
        Self {
            name: name.into(),
            significance,
            polarity,
            report_item: report_item.map(String::from),
        }
    }

    pub fn earns_credit(&self, held: bool) -> bool {
        match self.polarity {
            Polarity::Positive => held,
            Polarity::Negative => !held,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCatalog {
    attributes: Vec<CatalogAttribute>,
}

impl AttributeCatalog {
    pub fn new(attributes: Vec<CatalogAttribute>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &attributes {
            if a.name.trim().is_empty() {
                return Err(Error::invalid("catalog attribute with empty name"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::invalid(format!("duplicate catalog attribute `{}`", a.name)));
            }
        }
        let catalog = Self { attributes };
        if catalog.sizes().contains(&0) {
            return Err(Error::invalid("every significance class needs at least one attribute"));
        }
        Ok(catalog)
    }

    /// The shipped catalog over the ten repository columns.
    pub fn standard() -> Self {
        use Polarity::*;
        use Significance::*;
        Self::new(vec![
            CatalogAttribute::new("shares_with_unknown_policies", Low, Negative, None),
            CatalogAttribute::new("collects_for_unknown_purposes", Low, Negative, None),
            CatalogAttribute::new(
                "shares_identifying_data",
                Medium,
                Negative,
                Some("Shares consumers' data that identifies them with marketing companies"),
            ),
            CatalogAttribute::new(
                "uses_identifying_data_for_ads",
                Medium,
                Negative,
                Some("Uses consumers' data that identifies them for advertisement"),
            ),
            CatalogAttribute::new(
                "privacy_seal",
                High,
                Positive,
                Some("Has valid privacy seal certificate (BBB, TRUSTe, ...)"),
            ),
            CatalogAttribute::new(
                "issues_reports",
                Low,
                Positive,
                Some("Reports to consumer of any impact on their private data"),
            ),
            CatalogAttribute::new(
                "audit_membership",
                High,
                Positive,
                Some("Member of privacy compliance auditing service"),
            ),
            CatalogAttribute::new(
                "secure_infrastructure",
                Low,
                Positive,
                Some("Implements secure infrastructure to protect consumer data"),
            ),
            CatalogAttribute::new(
                "opt_out",
                High,
                Positive,
                Some("Allows consumers to opt out from mailing lists"),
            ),
            CatalogAttribute::new(
                "personnel_trained",
                Medium,
                Positive,
                Some("Employed personnel are trained to respect consumers' privacy"),
            ),
        ])
        .expect("standard catalog is valid")
    }

    pub fn attributes(&self) -> &[CatalogAttribute] {
        &self.attributes
    }

    pub fn get(&self, name: &str) -> Option<&CatalogAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// `(|high|, |medium|, |low|)`.
    pub fn sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for a in &self.attributes {
            sizes[class_index(a.significance)] += 1;
        }
        sizes
    }
}

fn class_index(s: Significance) -> usize {
    match s {
        Significance::High => 0,
        Significance::Medium => 1,
        Significance::Low => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredentialProfile {
    pub provider_id: String,
    /// Customer reputation in stars; `None` for a provider too new to have one.
    pub reputation: Option<f64>,
    pub attributes: BTreeMap<String, bool>,
}

impl CredentialProfile {
    pub fn new(provider_id: impl Into<String>, reputation: Option<f64>, attributes: BTreeMap<String, bool>) -> Self {
        Self {
            provider_id: provider_id.into(),
            reputation,
            attributes,
        }
    }

    /// Profile whose credit pattern is set per attribute by `credit`.
    pub fn from_credit(provider_id: &str, catalog: &AttributeCatalog, credit: impl Fn(&CatalogAttribute) -> bool) -> Self {
        let attributes = catalog
            .attributes()
            .iter()
            .map(|a| {
                let held = match a.polarity {
                    Polarity::Positive => credit(a),
                    Polarity::Negative => !credit(a),
                };
                (a.name.clone(), held)
            })
            .collect();
        Self::new(provider_id, None, attributes)
    }

    fn check(&self, catalog: &AttributeCatalog) -> Result<()> {
        if let Some(name) = self.attributes.keys().find(|k| catalog.get(k).is_none()) {
            return Err(Error::UnknownAttribute(name.clone()));
        }
        if let Some(a) = catalog.attributes().iter().find(|a| !self.attributes.contains_key(&a.name)) {
            return Err(Error::invalid(format!(
                "provider `{}` has no value for `{}`",
                self.provider_id, a.name
            )));
        }
        if let Some(r) = self.reputation {
            if !(0.0..=5.0).contains(&r) {
                return Err(Error::invalid(format!("reputation {r} is outside [0, 5]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialCounts {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl CredentialCounts {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }
}

pub fn count_credentials(profile: &CredentialProfile, catalog: &AttributeCatalog) -> Result<CredentialCounts> {
    profile.check(catalog)?;
    let mut counts = [0; 3];
    for a in catalog.attributes() {
        if a.earns_credit(profile.attributes[&a.name]) {
            counts[class_index(a.significance)] += 1;
        }
    }
    Ok(CredentialCounts::new(counts[0], counts[1], counts[2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "vl")]
    VeryLow,
    #[serde(rename = "l")]
    Low,
    #[serde(rename = "m")]
    Moderate,
    #[serde(rename = "h")]
    High,
    #[serde(rename = "vh")]
    VeryHigh,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::VeryLow, Label::Low, Label::Moderate, Label::High, Label::VeryHigh];

    pub fn short(self) -> &'static str {
        match self {
            Label::VeryLow => "vl",
            Label::Low => "l",
            Label::Moderate => "m",
            Label::High => "h",
            Label::VeryHigh => "vh",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Threshold comparison of a count against half its set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    /// count >= half
    Ge,
    /// count <= half
    Le,
    /// count < half
    Lt,
}

impl Cmp {
    pub fn crisp(self, count: usize, size: usize) -> bool {
        // compare 2*count with size to avoid halving odd sizes
        let (c, n) = (2 * count, size);
        match self {
            Cmp::Ge => c >= n,
            Cmp::Le => c <= n,
            Cmp::Lt => c < n,
        }
    }
}

/// The rule base: `(X, Y, Z)` comparisons and the conclusion for `phi`.
pub const RULES: [(Cmp, Cmp, Cmp, Label); 11] = {
    use Cmp::*;
    use Label::*;
    [
        (Ge, Ge, Ge, VeryHigh),
        (Ge, Ge, Le, VeryHigh),
        (Ge, Le, Ge, High),
        (Ge, Le, Le, High),
        (Lt, Ge, Ge, Moderate),
        (Lt, Ge, Le, Moderate),
        (Lt, Le, Ge, Moderate),
        (Lt, Le, Le, Low),
        (Lt, Lt, Ge, Low),
        (Lt, Lt, Le, VeryLow),
        (Lt, Lt, Lt, VeryLow),
    ]
};

/// Label of the crisp rule base: the lowest conclusion among the rules whose
/// comparisons all hold.
pub fn crisp_label(counts: CredentialCounts, sizes: [usize; 3]) -> Label {
    RULES
        .iter()
        .filter(|(a, b, c, _)| {
            a.crisp(counts.x, sizes[0]) && b.crisp(counts.y, sizes[1]) && c.crisp(counts.z, sizes[2])
        })
        .map(|r| r.3)
        .min()
        .expect("rule base covers every input")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub phi: f64,
    pub label: Label,
    /// Aggregated firing strength per label, `vl` first.
    pub strengths: [f64; 5],
}

/// Mamdani-style evaluator of the rule base.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyEngine {
    /// Half-width of the threshold ramps, in counts (capped at half the ratio range).
    pub ramp_counts: f64,
    /// Centers of the five output sets on `[0, 1]`, `vl` first.
    pub centers: [f64; 5],
    pub half_width: f64,
    /// Number of grid points used for centroid integration.
    pub resolution: usize,
}

impl Default for FuzzyEngine {
    fn default() -> Self {
        Self {
            ramp_counts: 1.5,
            centers: [0.1, 0.3, 0.5, 0.7, 0.9],
            half_width: 0.2,
            resolution: 4001,
        }
    }
}

impl FuzzyEngine {
    fn membership(&self, cmp: Cmp, count: usize, size: usize) -> f64 {
        let r = count as f64 / size as f64;
        let hw = (self.ramp_counts / size as f64).min(0.5);
        let ge = ((r - (0.5 - hw)) / hw).clamp(0.0, 1.0);
        match cmp {
            Cmp::Ge => ge,
            Cmp::Le => (((0.5 + hw) - r) / hw).clamp(0.0, 1.0),
            Cmp::Lt => 1.0 - ge,
        }
    }

    fn output_set(&self, label: usize, y: f64) -> f64 {
        (1.0 - (y - self.centers[label]).abs() / self.half_width).max(0.0)
    }

    /// Centroid of the union of the output sets, each clipped at its strength.
    fn centroid(&self, strengths: &[f64; 5]) -> Option<f64> {
        let n = self.resolution.max(2);
        let step = 1.0 / (n - 1) as f64;
        let (mut moment, mut area) = (0.0, 0.0);
        for k in 0..n {
            let y = k as f64 * step;
            let mu = (0..5)
                .map(|l| strengths[l].min(self.output_set(l, y)))
                .fold(0.0, f64::max);
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            moment += w * y * mu;
            area += w * mu;
        }
        (area > 0.0).then(|| moment / area)
    }

    pub fn strengths(&self, counts: CredentialCounts, sizes: [usize; 3]) -> [f64; 5] {
        let mut strengths = [0.0f64; 5];
        for (a, b, c, label) in RULES {
            let fire = self
                .membership(a, counts.x, sizes[0])
                .min(self.membership(b, counts.y, sizes[1]))
                .min(self.membership(c, counts.z, sizes[2]));
            let slot = &mut strengths[label.index()];
            *slot = slot.max(fire);
        }
        strengths
    }

    /// Reliability `phi` and the winning label for the given counts.
    ///
    /// The raw centroid is rescaled so that the centroids of a lone `vl` and
    /// a lone `vh` conclusion map to 0 and 1. Ties in firing strength go to
    /// the lower label.
    pub fn reliability(&self, counts: CredentialCounts, catalog: &AttributeCatalog) -> Result<Reliability> {
        let sizes = catalog.sizes();
        for (count, size, set) in [(counts.x, sizes[0], "high"), (counts.y, sizes[1], "medium"), (counts.z, sizes[2], "low")] {
            if count > size {
                return Err(Error::invalid(format!("{count} {set} credentials but the set holds {size}")));
            }
        }
        let strengths = self.strengths(counts, sizes);
        let mut lone = [0.0; 5];
        lone[0] = 1.0;
        let lo = self.centroid(&lone).unwrap_or(0.0);
        lone = [0.0, 0.0, 0.0, 0.0, 1.0];
        let hi = self.centroid(&lone).unwrap_or(1.0);
        let phi = match self.centroid(&strengths) {
            Some(c) => ((c - lo) / (hi - lo)).clamp(0.0, 1.0),
            None => 0.0,
        };
        let mut label = Label::VeryLow;
        for l in Label::ALL {
            if strengths[l.index()] > strengths[label.index()] {
                label = l;
            }
        }
        Ok(Reliability { phi, label, strengths })
    }
}

/// `phi * 5` rounded half-up to the nearest half star.
pub fn star_rating(phi: f64) -> f64 {
    let phi = phi.clamp(0.0, 1.0);
    ((phi * 10.0 + 0.5 + 1e-9).floor() / 2.0).min(5.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub statement: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcrReport {
    pub provider_id: String,
    pub counts: CredentialCounts,
    pub phi: f64,
    pub label: Label,
    pub stars: f64,
    #[serde(serialize_with = "reputation_or_na")]
    pub reputation: Option<f64>,
    pub items: Vec<ReportItem>,
}

fn reputation_or_na<S: Serializer>(value: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match value {
        Some(r) => s.serialize_f64(*r),
        None => s.serialize_str("NA"),
    }
}

impl PcrReport {
    pub fn reputation_text(&self) -> String {
        match self.reputation {
            Some(r) => format!("{r}"),
            None => "NA".into(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Privacy credential report: {}", self.provider_id);
        let _ = writeln!(out, "PCR: {} stars (phi {:.4}, {})", self.stars, self.phi, self.label.short());
        let _ = writeln!(out, "Reputation: {}", self.reputation_text());
        for item in &self.items {
            let _ = writeln!(out, "  [{}] {}", if item.holds { "yes" } else { "no" }, item.statement);
        }
        out
    }
}

pub fn build_report(profile: &CredentialProfile, catalog: &AttributeCatalog, engine: &FuzzyEngine) -> Result<PcrReport> {
    let counts = count_credentials(profile, catalog)?;
    let reliability = engine.reliability(counts, catalog)?;
    let items = catalog
        .attributes()
        .iter()
        .filter_map(|a| {
            a.report_item.as_ref().map(|statement| ReportItem {
                statement: statement.clone(),
                holds: profile.attributes[&a.name],
            })
        })
        .collect();
    Ok(PcrReport {
        provider_id: profile.provider_id.clone(),
        counts,
        phi: reliability.phi,
        label: reliability.label,
        stars: star_rating(reliability.phi),
        reputation: profile.reputation,
        items,
    })
}

/// Credential repository: one row per provider.
#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    profiles: Vec<CredentialProfile>,
}

impl CredentialStore {
    pub fn new(profiles: Vec<CredentialProfile>) -> Self {
        Self { profiles }
    }

    /// The bundled repository: the twenty surveyed shopping sites plus five
    /// travel-agency fixtures.
    pub fn bundled() -> Self {
        Self::from_csv_str(DEFAULT_CREDENTIALS).expect("bundled credentials are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    /// Parses `provider,reputation,<attribute columns...>`. A blank
    /// reputation marks a new provider.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::parse("credentials", "expected provider and reputation columns"));
        }
        let mut profiles = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row = line + 2;
            let provider = record.get(0).unwrap_or_default();
            if provider.is_empty() {
                return Err(Error::parse("credentials", format!("row {row}: empty provider")));
            }
            let reputation = match record.get(1).unwrap_or_default() {
                "" => None,
                text => Some(
                    text.parse::<f64>()
                        .map_err(|e| Error::parse("credentials", format!("row {row}: reputation: {e}")))?,
                ),
            };
            let mut attributes = BTreeMap::new();
            for (header, value) in headers.iter().zip(record.iter()).skip(2) {
                let held = match value {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(Error::parse(
                            "credentials",
                            format!("row {row}: `{header}` must be 0 or 1, got `{other}`"),
                        ))
                    }
                };
                attributes.insert(header.to_string(), held);
            }
            profiles.push(CredentialProfile::new(provider, reputation, attributes));
        }
        Ok(Self { profiles })
    }

    pub fn profiles(&self) -> &[CredentialProfile] {
        &self.profiles
    }

    pub fn get(&self, provider_id: &str) -> Result<&CredentialProfile> {
        self.profiles
            .iter()
            .find(|p| p.provider_id == provider_id)
            .or_else(|| self.profiles.iter().find(|p| p.provider_id.eq_ignore_ascii_case(provider_id)))
            .ok_or_else(|| Error::UnknownProvider(provider_id.to_string()))
    }
}
