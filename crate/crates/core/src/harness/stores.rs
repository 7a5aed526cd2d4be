//! Account store: one JSON object per line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{FieldEntry, PersonalDataSpec};
use crate::risk::RiskWeights;

/// Context whose weights apply when a record has none for the requested one.
pub const DEFAULT_CONTEXT: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub consumer_id: String,
    pub fields: Vec<FieldEntry>,
    /// context -> category -> weight
    #[serde(default)]
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
}

impl AccountRecord {
    pub fn spec(&self) -> PersonalDataSpec {
        PersonalDataSpec::new(self.consumer_id.clone(), self.fields.clone())
    }

    /// Weights for `context`, one per category in `categories` order.
    pub fn weights_for(&self, context: &str, categories: &[&str]) -> Result<RiskWeights> {
        let table = self
            .weights
            .get(context)
            .or_else(|| self.weights.get(DEFAULT_CONTEXT))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "consumer `{}` has no risk weights for context `{context}`",
                    self.consumer_id
                ))
            })?;
        let beta = categories
            .iter()
            .map(|c| {
                table.get(*c).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "consumer `{}` has no weight for category `{c}` in context `{context}`",
                        self.consumer_id
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RiskWeights::new(context, beta)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccountStore {
    records: Vec<AccountRecord>,
}

impl AccountStore {
    pub fn new(records: Vec<AccountRecord>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &records {
            r.spec().validate()?;
            if !seen.insert(r.consumer_id.as_str()) {
                return Err(Error::invalid(format!("duplicate consumer `{}`", r.consumer_id)));
            }
        }
        Ok(Self { records })
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: AccountRecord =
                serde_json::from_str(line).map_err(|e| Error::parse("accounts", format!("line {}: {e}", i + 1)))?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl_str(&text)
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[AccountRecord] {
        &self.records
    }

    pub fn get(&self, consumer_id: &str) -> Option<&AccountRecord> {
        self.records.iter().find(|r| r.consumer_id == consumer_id)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}
