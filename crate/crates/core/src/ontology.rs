//! Attribute ontology and categorization of personal data.
//!
//! An ontology has two parts. Equivalence sets group field-name synonyms
//! (`LastName` and `Surname` both mean `FamilyName`); the first member of a
//! set is its canonical name. The schema places every canonical attribute in
//! exactly one subset of exactly one category. Revealing several attributes
//! from the same subset counts as revealing that subset once, so subsets
//! rather than attributes are the unit of disclosure.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_ONTOLOGY: &str = include_str!("../data/ontology.toml");

/// Lookup key for field names: surrounding whitespace stripped, lowercased.
fn normalize(name: &str) -> String {
    name.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceSet {
    #[serde(default)]
    pub name: Option<String>,
    pub members: Vec<String>,
}

impl EquivalenceSet {
    pub fn canonical(&self) -> &str {
        &self.members[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSchema {
    pub name: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySchema {
    pub name: String,
    #[serde(rename = "subset")]
    pub subsets: Vec<SubsetSchema>,
}

/// On-disk form of an ontology (one TOML document per ontology).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct OntologyDocument {
    #[serde(default, rename = "equivalence")]
    equivalence_sets: Vec<EquivalenceSet>,
    #[serde(rename = "category")]
    categories: Vec<CategorySchema>,
}

/// Where a canonical attribute sits in the schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Placement {
    category: usize,
    subset: usize,
    attribute: usize,
}

#[derive(Debug, Clone)]
pub struct AttributeOntology {
    equivalence_sets: Vec<EquivalenceSet>,
    schema: Vec<CategorySchema>,
    /// normalized synonym -> canonical name
    synonyms: HashMap<String, String>,
    /// canonical name -> schema position
    placements: HashMap<String, Placement>,
}

impl AttributeOntology {
    /// Builds and validates an ontology.
    ///
    /// Schema attributes that are not listed in any equivalence set resolve
    /// to themselves, as if they formed a singleton set.
    pub fn new(equivalence_sets: Vec<EquivalenceSet>, schema: Vec<CategorySchema>) -> Result<Self> {
        let mut synonyms: HashMap<String, String> = HashMap::new();
        for set in &equivalence_sets {
            if set.members.is_empty() {
                return Err(Error::Ontology("equivalence set with no members".into()));
            }
            for member in &set.members {
                if member.trim().is_empty() {
                    return Err(Error::Ontology("empty attribute name in equivalence set".into()));
                }
                let key = normalize(member);
                if let Some(previous) = synonyms.get(&key) {
                    if previous != set.canonical() {
                        return Err(Error::Ontology(format!(
                            "`{member}` appears in the sets of both `{previous}` and `{}`",
                            set.canonical()
                        )));
                    }
                }
                synonyms.insert(key, set.canonical().to_string());
            }
        }

        let mut category_names = BTreeSet::new();
        let mut subset_names = BTreeSet::new();
        let mut placements = HashMap::new();
        for (ci, category) in schema.iter().enumerate() {
            if category.name.trim().is_empty() {
                return Err(Error::Ontology("empty category name".into()));
            }
            if !category_names.insert(normalize(&category.name)) {
                return Err(Error::Ontology(format!("duplicate category `{}`", category.name)));
            }
            for (si, subset) in category.subsets.iter().enumerate() {
                if subset.name.trim().is_empty() {
                    return Err(Error::Ontology(format!("empty subset name in `{}`", category.name)));
                }
                if !subset_names.insert(normalize(&subset.name)) {
                    return Err(Error::Ontology(format!("duplicate subset `{}`", subset.name)));
                }
                for (ai, attribute) in subset.attributes.iter().enumerate() {
                    let key = normalize(attribute);
                    if key.is_empty() {
                        return Err(Error::Ontology(format!("empty attribute in `{}`", subset.name)));
                    }
                    match synonyms.get(&key) {
                        Some(canonical) if canonical != attribute => {
                            return Err(Error::Ontology(format!(
                                "schema attribute `{attribute}` is a synonym of `{canonical}`; use the canonical name"
                            )));
                        }
                        Some(_) => {}
                        None => {
                            synonyms.insert(key, attribute.clone());
                        }
                    }
                    let placement = Placement {
                        category: ci,
                        subset: si,
                        attribute: ai,
                    };
                    if placements.insert(attribute.clone(), placement).is_some() {
                        return Err(Error::Ontology(format!(
                            "attribute `{attribute}` placed in more than one subset"
                        )));
                    }
                }
            }
        }

        Ok(Self {
            equivalence_sets,
            schema,
            synonyms,
            placements,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: OntologyDocument = toml::from_str(text).map_err(|e| Error::parse("ontology", e))?;
        Self::new(doc.equivalence_sets, doc.categories)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The shipped ontology: the contact/hobbies/income example schema plus
    /// the account-form fields.
    pub fn default_ontology() -> Self {
        Self::from_toml_str(DEFAULT_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn to_toml_string(&self) -> String {
        let doc = OntologyDocument {
            equivalence_sets: self.equivalence_sets.clone(),
            categories: self.schema.clone(),
        };
        toml::to_string(&doc).expect("ontology serializes")
    }

    pub fn equivalence_sets(&self) -> &[EquivalenceSet] {
        &self.equivalence_sets
    }

    pub fn schema(&self) -> &[CategorySchema] {
        &self.schema
    }

    /// Canonical name for `raw_name`, or `None` when no set contains it.
    pub fn canonicalize(&self, raw_name: &str) -> Option<&str> {
        self.synonyms.get(&normalize(raw_name)).map(String::as_str)
    }

    /// `(category, subset)` names for a canonical attribute.
    pub fn locate(&self, canonical: &str) -> Option<(&str, &str)> {
        self.placements.get(canonical).map(|p| {
            let category = &self.schema[p.category];
            (category.name.as_str(), category.subsets[p.subset].name.as_str())
        })
    }

    fn placement(&self, canonical: &str) -> Option<Placement> {
        self.placements.get(canonical).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub name: String,
    pub value: String,
}

impl FieldEntry {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

/// Raw personal data as captured by the account form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalDataSpec {
    pub consumer_id: String,
    pub entries: Vec<FieldEntry>,
}

impl PersonalDataSpec {
    pub fn new(consumer_id: impl Into<String>, entries: Vec<FieldEntry>) -> Self {
        Self {
            consumer_id: consumer_id.into(),
            entries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.consumer_id.trim().is_empty() {
            return Err(Error::invalid("consumer_id must not be empty"));
        }
        if let Some(entry) = self.entries.iter().find(|e| e.name.trim().is_empty()) {
            return Err(Error::invalid(format!(
                "consumer `{}` has a field with an empty name (value `{}`)",
                self.consumer_id, entry.value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub name: String,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub subsets: Vec<Subset>,
}

impl Category {
    /// Cardinality of the category: the number of subsets it holds.
    pub fn cardinality(&self) -> usize {
        self.subsets.len()
    }

    pub fn item_count(&self) -> usize {
        self.subsets.iter().map(|s| s.items.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// No equivalence set knows the name.
    Unresolvable,
    /// The name resolves but its canonical attribute has no place in the schema.
    NotInSchema,
    /// Another entry already supplied this canonical attribute.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RejectedField {
    pub name: String,
    pub value: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizedProfile {
    pub consumer_id: String,
    pub categories: Vec<Category>,
    pub rejected: Vec<RejectedField>,
}

impl CategorizedProfile {
    /// `X_i` for every retained category, in schema order.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.categories.iter().map(Category::cardinality).collect()
    }

    pub fn item_counts(&self) -> Vec<usize> {
        self.categories.iter().map(Category::item_count).collect()
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    fn holds(&self, category: &str, subset: &str, attribute: &str) -> bool {
        self.categories
            .iter()
            .filter(|c| c.name == category)
            .flat_map(|c| c.subsets.iter())
            .filter(|s| s.name == subset)
            .any(|s| s.items.iter().any(|i| i.attribute == attribute))
    }
}

/// Sorts raw entries into the ontology's categories and subsets.
///
/// Output order follows the schema, never the input, so permuting the
/// entries yields the same profile. When two entries resolve to the same
/// attribute the lexicographically smaller value is kept and the other one
/// is rejected as a duplicate.
pub fn categorize(spec: &PersonalDataSpec, ontology: &AttributeOntology) -> Result<CategorizedProfile> {
    spec.validate()?;

    // (category, subset, attribute) -> candidate values
    let mut slots: HashMap<Placement, Vec<&FieldEntry>> = HashMap::new();
    let mut rejected = Vec::new();
    for entry in &spec.entries {
        let Some(canonical) = ontology.canonicalize(&entry.name) else {
            rejected.push(RejectedField {
                name: entry.name.clone(),
                value: entry.value.clone(),
                reason: RejectReason::Unresolvable,
            });
            continue;
        };
        match ontology.placement(canonical) {
            Some(p) => slots.entry(p).or_default().push(entry),
            None => rejected.push(RejectedField {
                name: entry.name.clone(),
                value: entry.value.clone(),
                reason: RejectReason::NotInSchema,
            }),
        }
    }

    let mut categories = Vec::new();
    for (ci, category) in ontology.schema.iter().enumerate() {
        let mut subsets = Vec::new();
        for (si, subset) in category.subsets.iter().enumerate() {
            let mut items = Vec::new();
            for (ai, attribute) in subset.attributes.iter().enumerate() {
                let key = Placement {
                    category: ci,
                    subset: si,
                    attribute: ai,
                };
                let Some(candidates) = slots.get_mut(&key) else {
                    continue;
                };
                candidates.sort_by(|a, b| (&a.value, &a.name).cmp(&(&b.value, &b.name)));
                items.push(Item {
                    attribute: attribute.clone(),
                    value: candidates[0].value.clone(),
                });
                rejected.extend(candidates[1..].iter().map(|e| RejectedField {
                    name: e.name.clone(),
                    value: e.value.clone(),
                    reason: RejectReason::Duplicate,
                }));
            }
            if !items.is_empty() {
                subsets.push(Subset {
                    name: subset.name.clone(),
                    items,
                });
            }
        }
        if !subsets.is_empty() {
            categories.push(Category {
                name: category.name.clone(),
                subsets,
            });
        }
    }
    rejected.sort();

    Ok(CategorizedProfile {
        consumer_id: spec.consumer_id.clone(),
        categories,
        rejected,
    })
}

/// A provider's request for a slice of consumers' data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRequest {
    pub provider_id: String,
    /// Transaction context the consumer's risk weights are keyed by.
    /// Defaults to the provider id.
    #[serde(default)]
    pub context: Option<String>,
    pub fields: Vec<String>,
}

impl DataRequest {
    pub fn new(provider_id: impl Into<String>, fields: Vec<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
            context: None,
            fields,
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn context_id(&self) -> &str {
        self.context.as_deref().unwrap_or(&self.provider_id)
    }
}

/// Number of distinct subsets revealed per profile category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealVector {
    pub alpha: Vec<usize>,
    /// Requested names that no equivalence set resolves.
    pub rejected: Vec<String>,
}

pub fn match_request(
    profile: &CategorizedProfile,
    request: &DataRequest,
    ontology: &AttributeOntology,
) -> RevealVector {
    let mut touched: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); profile.categories.len()];
    let mut rejected = Vec::new();
    for field in &request.fields {
        let Some(canonical) = ontology.canonicalize(field) else {
            rejected.push(field.clone());
            continue;
        };
        let Some((category, subset)) = ontology.locate(canonical) else {
            continue;
        };
        if let Some(ci) = profile.category_index(category) {
            if profile.holds(category, subset, canonical) {
                touched[ci].insert(subset);
            }
        }
    }
    RevealVector {
        alpha: touched.iter().map(BTreeSet::len).collect(),
        rejected,
    }
}
