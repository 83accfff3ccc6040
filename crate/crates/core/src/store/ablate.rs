//! Store copies with relation or entity vectors replaced by fixed random draws.

use super::EmbeddingStore;
use crate::rng::{normal_vec, seeded};

/// Every relation vector becomes an i.i.d. standard-normal draw, in name order.
pub fn randomize_relation_embeddings(store: &EmbeddingStore, seed: u64) -> EmbeddingStore {
    let mut rng = seeded(seed);
    let d = store.d();
    let relations = store.relations().keys().map(|name| (name.clone(), normal_vec(&mut rng, d, 1.0))).collect();
    store.with_relations(relations)
}

/// Every entity vector becomes an i.i.d. standard-normal draw; tokens and head are kept.
pub fn randomize_entity_embeddings(store: &EmbeddingStore, seed: u64) -> EmbeddingStore {
    let mut rng = seeded(seed);
    let d = store.d();
    let mut entities = store.entities().clone();
    for e in entities.values_mut() {
        e.vector = normal_vec(&mut rng, d, 1.0);
    }
    store.with_entities(entities)
}
