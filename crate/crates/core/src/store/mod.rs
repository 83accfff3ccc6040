//! Frozen embedding store: entity and relation vectors plus a decoding head.

mod ablate;
mod io;
mod synth;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ablate::{randomize_entity_embeddings, randomize_relation_embeddings};
pub(crate) use io::write_atomic;
pub use io::{load_model, load_store, read_model, read_store, save_model, save_store, write_model, write_store, Section};
pub use synth::{
    gen_math_store, gen_orthogonal_store, gen_shared_property_store, gen_store, math_token, SyntheticStore,
    SyntheticTeacherSpec, TeacherKind,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic: expected \"LREC\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (this reader understands version 1)")]
    UnsupportedVersion(u32),
    #[error("truncated file: ran out of bytes while reading {0}")]
    Truncated(String),
    #[error("wrong section: expected {expected}, found tag {found}")]
    WrongSection { expected: &'static str, found: u32 },
    #[error("invalid store: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub vector: Vec<f64>,
    pub first_token_id: u32,
}

/// Entities and relations keyed by name; the head maps a `d`-vector to `V` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    d: usize,
    layer_index: u32,
    vocab_size: usize,
    /// `V×d`, row-major.
    head_weights: Vec<f64>,
    head_bias: Option<Vec<f64>>,
    entities: BTreeMap<String, Entity>,
    relations: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(
        d: usize,
        layer_index: u32,
        vocab_size: usize,
        head_weights: Vec<f64>,
        head_bias: Option<Vec<f64>>,
        entities: BTreeMap<String, Entity>,
        relations: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, StoreError> {
        let s = Self { d, layer_index, vocab_size, head_weights, head_bias, entities, relations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let (d, v) = (self.d, self.vocab_size);
        if d == 0 {
            return Err(StoreError::Invalid("d must be at least 1".into()));
        }
        if v == 0 {
            return Err(StoreError::Invalid("vocabulary is empty".into()));
        }
        if self.head_weights.len() != v * d {
            return Err(StoreError::Invalid(format!(
                "head has {} entries, expected V·d = {}",
                self.head_weights.len(),
                v * d
            )));
        }
        if let Some(b) = &self.head_bias {
            if b.len() != v {
                return Err(StoreError::Invalid(format!("head bias has {} entries, expected {v}", b.len())));
            }
        }
        for (name, e) in &self.entities {
            if e.vector.len() != d {
                return Err(StoreError::Dimension { what: format!("entity `{name}`"), expected: d, got: e.vector.len() });
            }
            if e.first_token_id as usize >= v {
                return Err(StoreError::Invalid(format!(
                    "entity `{name}` has token {} outside vocabulary of {v}",
                    e.first_token_id
                )));
            }
        }
        for (name, r) in &self.relations {
            if r.len() != d {
                return Err(StoreError::Dimension { what: format!("relation `{name}`"), expected: d, got: r.len() });
            }
        }
        for name in self.entities.keys().chain(self.relations.keys()) {
            if name.len() > u16::MAX as usize {
                let head: String = name.chars().take(16).collect();
                return Err(StoreError::Invalid(format!("name `{head}…` longer than 65535 bytes")));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn layer_index(&self) -> u32 {
        self.layer_index
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.head_weights
    }

    pub fn head_bias(&self) -> Option<&[f64]> {
        self.head_bias.as_deref()
    }

    pub fn entities(&self) -> &BTreeMap<String, Entity> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.relations
    }

    pub fn entity(&self, name: &str) -> Result<&Entity, StoreError> {
        self.entities.get(name).ok_or_else(|| StoreError::UnknownEntity(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<&[f64], StoreError> {
        self.relations.get(name).map(Vec::as_slice).ok_or_else(|| StoreError::UnknownRelation(name.to_string()))
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), StoreError> {
        if x.len() != self.d {
            return Err(StoreError::Dimension { what: "head input".into(), expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// `head_weights·x + head_bias`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, StoreError> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    pub(crate) fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out: Vec<f64> = self
            .head_weights
            .chunks_exact(d)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        if let Some(b) = &self.head_bias {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += bi;
            }
        }
        out
    }

    /// Arg-max token of the head logits; ties go to the lowest token id.
    pub fn head_decode(&self, x: &[f64]) -> Result<u32, StoreError> {
        self.check_dim(x)?;
        Ok(self.head_decode_unchecked(x))
    }

    pub(crate) fn head_decode_unchecked(&self, x: &[f64]) -> u32 {
        argmax(&self.logits_unchecked(x)) as u32
    }

    pub(crate) fn with_entities(&self, entities: BTreeMap<String, Entity>) -> Self {
        Self { entities, ..self.clone() }
    }

    pub(crate) fn with_relations(&self, relations: BTreeMap<String, Vec<f64>>) -> Self {
        Self { relations, ..self.clone() }
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Head whose logits `2·e_m·x − |e_m|²` pick the nearest of `rows` to `x`.
pub(crate) fn nearest_neighbour_head(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let w = rows.iter().flat_map(|r| r.iter().map(|v| 2.0 * v)).collect();
    let b = rows.iter().map(|r| -r.iter().map(|v| v * v).sum::<f64>()).collect();
    (w, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EmbeddingStore {
        let mut entities = BTreeMap::new();
        entities.insert("a".to_string(), Entity { vector: vec![1.0, 0.0], first_token_id: 0 });
        entities.insert("b".to_string(), Entity { vector: vec![0.0, 1.0], first_token_id: 1 });
        let mut relations = BTreeMap::new();
        relations.insert("r".to_string(), vec![0.5, 0.5]);
        EmbeddingStore::new(2, 3, 2, vec![1.0, 0.0, 0.0, 1.0], None, entities, relations).unwrap()
    }

    #[test]
    fn decode_picks_row_and_breaks_ties_low() {
        let s = tiny();
        assert_eq!(s.head_decode(&[1.0, 0.0]).unwrap(), 0);
        assert_eq!(s.head_decode(&[0.0, 1.0]).unwrap(), 1);
        assert_eq!(s.head_decode(&[0.0, 0.0]).unwrap(), 0);
        assert!(matches!(s.head_decode(&[0.0]), Err(StoreError::Dimension { .. })));
    }

    #[test]
    fn validation_catches_bad_tokens_and_lengths() {
        let s = tiny();
        let mut e = s.entities().clone();
        e.get_mut("a").unwrap().first_token_id = 2;
        assert!(matches!(
            EmbeddingStore::new(2, 0, 2, s.head_weights().to_vec(), None, e, BTreeMap::new()),
            Err(StoreError::Invalid(_))
        ));
        assert!(EmbeddingStore::new(2, 0, 3, vec![0.0; 4], None, BTreeMap::new(), BTreeMap::new()).is_err());
        let mut r = BTreeMap::new();
        r.insert("x".to_string(), vec![1.0]);
        assert!(matches!(
            EmbeddingStore::new(2, 0, 2, vec![0.0; 4], None, BTreeMap::new(), r),
            Err(StoreError::Dimension { .. })
        ));
    }

    #[test]
    fn nearest_neighbour_head_is_exact() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, -1.0]];
        let (w, b) = nearest_neighbour_head(&rows);
        let s = EmbeddingStore::new(2, 0, 3, w, Some(b), BTreeMap::new(), BTreeMap::new()).unwrap();
        assert_eq!(s.head_decode(&[0.4, 0.3]).unwrap(), 0);
        assert_eq!(s.head_decode(&[0.9, 0.6]).unwrap(), 1);
        assert_eq!(s.head_decode(&[2.0, -0.5]).unwrap(), 2);
    }
}
