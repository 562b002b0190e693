//! Cohort ingestion: embeddings plus per-image attributes, aggregated into
//! per-individual profiles.

mod io;
mod profile;
mod schema;

pub use io::{
    load_cohort, read_attributes, read_embeddings, write_attributes, write_embeddings_binary,
    write_embeddings_csv, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use profile::{aggregate_profiles, AttributeProfile};
pub use schema::{AttributeSchema, Family, Variable, VariableKind};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CohortError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: malformed input: {message}")]
    Parse { path: String, message: String },
    #[error("embedding dimension mismatch: image `{image_id}` has {found}, expected {expected}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("duplicate image_id `{0}`")]
    DuplicateImage(String),
    #[error("non-finite embedding value in image `{0}`")]
    NonFiniteEmbedding(String),
    #[error("attribute `{variable}` of image `{image_id}` out of range: {value}")]
    RangeViolation {
        variable: String,
        image_id: String,
        value: String,
    },
    #[error("attribute row for unknown image `{0}` (no embedding)")]
    UnknownImage(String),
    #[error("attribute file column mismatch: {0}")]
    Columns(String),
}

/// One image's identity label and feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub identity_id: String,
    pub vector: Vec<f32>,
}

/// Per-image attribute values, aligned with the schema's variable order.
/// Categorical values are level indices, booleans 0/1, `None` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAttributes {
    pub image_id: String,
    pub values: Vec<Option<f64>>,
}

impl ImageAttributes {
    pub fn get(&self, schema: &AttributeSchema, name: &str) -> Option<f64> {
        schema.index_of(name).and_then(|i| self.values[i])
    }

    /// Checks every present value against its variable's kind.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), CohortError> {
        if self.values.len() != schema.len() {
            return Err(CohortError::Columns(format!(
                "image `{}` has {} values, schema has {}",
                self.image_id,
                self.values.len(),
                schema.len()
            )));
        }
        for (var, value) in schema.variables.iter().zip(&self.values) {
            if let Some(v) = value {
                if !var.kind.accepts(*v) {
                    return Err(CohortError::RangeViolation {
                        variable: var.name.clone(),
                        image_id: self.image_id.clone(),
                        value: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// identity_id -> image ids (sorted).
pub type IdentityIndex = BTreeMap<String, Vec<String>>;

/// In-memory cohort. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    by_image: HashMap<String, usize>,
    identities: IdentityIndex,
    attributes: BTreeMap<String, ImageAttributes>,
    unattributed: Vec<String>,
}

impl Cohort {
    /// Validates and indexes records and attributes. Attribute rows must
    /// reference embedded images; embedded images without attributes are
    /// allowed and listed by [`Cohort::unattributed`].
    pub fn new(
        records: Vec<EmbeddingRecord>,
        attributes: Vec<ImageAttributes>,
        schema: &AttributeSchema,
    ) -> Result<Self, CohortError> {
        let dim = records.first().map(|r| r.vector.len()).unwrap_or(0);
        let mut by_image = HashMap::with_capacity(records.len());
        let mut identities = IdentityIndex::new();
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(CohortError::DimensionMismatch {
                    image_id: r.image_id.clone(),
                    expected: dim,
                    found: r.vector.len(),
                });
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(CohortError::NonFiniteEmbedding(r.image_id.clone()));
            }
            if by_image.insert(r.image_id.clone(), i).is_some() {
                return Err(CohortError::DuplicateImage(r.image_id.clone()));
            }
            identities
                .entry(r.identity_id.clone())
                .or_default()
                .push(r.image_id.clone());
        }
        if !records.is_empty() && dim == 0 {
            return Err(CohortError::ZeroDimension);
        }
        for images in identities.values_mut() {
            images.sort();
        }

        let mut attr_map = BTreeMap::new();
        for a in attributes {
            if !by_image.contains_key(&a.image_id) {
                return Err(CohortError::UnknownImage(a.image_id));
            }
            a.validate(schema)?;
            let id = a.image_id.clone();
            if attr_map.insert(id.clone(), a).is_some() {
                return Err(CohortError::DuplicateImage(id));
            }
        }
        let mut unattributed: Vec<String> = records
            .iter()
            .filter(|r| !attr_map.contains_key(&r.image_id))
            .map(|r| r.image_id.clone())
            .collect();
        unattributed.sort();

        Ok(Self {
            dim,
            records,
            by_image,
            identities,
            attributes: attr_map,
            unattributed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, image_id: &str) -> Option<&EmbeddingRecord> {
        self.by_image.get(image_id).map(|&i| &self.records[i])
    }

    pub fn identities(&self) -> &IdentityIndex {
        &self.identities
    }

    pub fn attributes(&self) -> &BTreeMap<String, ImageAttributes> {
        &self.attributes
    }

    /// Embedded images that have no attribute row.
    pub fn unattributed(&self) -> &[String] {
        &self.unattributed
    }

    /// image_id -> identity_id.
    pub fn identity_lookup(&self) -> HashMap<String, String> {
        self.records
            .iter()
            .map(|r| (r.image_id.clone(), r.identity_id.clone()))
            .collect()
    }

    pub fn profiles(&self, schema: &AttributeSchema) -> Vec<AttributeProfile> {
        aggregate_profiles(&self.identities, &self.attributes, schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(img: &str, id: &str, v: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            image_id: img.into(),
            identity_id: id.into(),
            vector: v,
        }
    }

    #[test]
    fn indexes_identities_sorted() {
        let schema = AttributeSchema::standard();
        let c = Cohort::new(
            vec![
                rec("b", "u1", vec![1.0, 0.0]),
                rec("a", "u1", vec![0.0, 1.0]),
                rec("c", "u2", vec![1.0, 1.0]),
            ],
            vec![],
            &schema,
        )
        .unwrap();
        assert_eq!(c.identities()["u1"], vec!["a", "b"]);
        assert_eq!(c.unattributed(), ["a", "b", "c"]);
        assert_eq!(c.dim(), 2);
    }

    #[test]
    fn rejects_duplicates_and_mismatches() {
        let schema = AttributeSchema::standard();
        let dup = Cohort::new(
            vec![rec("a", "u", vec![1.0]), rec("a", "v", vec![2.0])],
            vec![],
            &schema,
        );
        assert!(matches!(dup, Err(CohortError::DuplicateImage(_))));
        let dim = Cohort::new(
            vec![rec("a", "u", vec![1.0]), rec("b", "v", vec![2.0, 1.0])],
            vec![],
            &schema,
        );
        assert!(matches!(dim, Err(CohortError::DimensionMismatch { .. })));
        let unknown = Cohort::new(
            vec![rec("a", "u", vec![1.0])],
            vec![ImageAttributes {
                image_id: "zzz".into(),
                values: vec![None; schema.len()],
            }],
            &schema,
        );
        assert!(matches!(unknown, Err(CohortError::UnknownImage(_))));
    }
}
