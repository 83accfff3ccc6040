//! Faithfulness scoring and the cross-evaluation matrix.

pub mod report;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::RelationRecord;
use crate::model::{AffineDecoder, ModelError, TensorNetworkModel};
use crate::store::{EmbeddingStore, StoreError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("decoder relations {decoders:?} do not match dataset relations {dataset:?}")]
    NameMismatch { decoders: Vec<String>, dataset: Vec<String> },
    #[error("decoder dimension {decoder} does not match store dimension {store}")]
    Dimension { decoder: usize, store: usize },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaithfulnessReport {
    pub relation: String,
    pub decoder_id: String,
    pub n_samples: usize,
    pub n_correct: usize,
    pub score: f64,
}

/// Share of samples whose decoded subject lands on the object's first token.
pub fn faithfulness(dec: &AffineDecoder, relation: &RelationRecord, store: &EmbeddingStore) -> Result<FaithfulnessReport, EvalError> {
    if dec.dim() != store.d() {
        return Err(EvalError::Dimension { decoder: dec.dim(), store: store.d() });
    }
    let mut n_correct = 0;
    for s in &relation.samples {
        let subject = store.entity(&s.subject)?;
        let object = store.entity(&s.object)?;
        let pred = store.head_decode_unchecked(&dec.apply_unchecked(&subject.vector));
        n_correct += (pred == object.first_token_id) as usize;
    }
    let n_samples = relation.samples.len();
    let score = if n_samples == 0 { 0.0 } else { n_correct as f64 / n_samples as f64 };
    Ok(FaithfulnessReport { relation: relation.name.clone(), decoder_id: relation.name.clone(), n_samples, n_correct, score })
}

/// Faithfulness of the decoder the model produces for each relation's stored embedding.
pub fn model_faithfulness(
    model: &TensorNetworkModel,
    relations: &[RelationRecord],
    store: &EmbeddingStore,
) -> Result<Vec<FaithfulnessReport>, EvalError> {
    relations
        .iter()
        .map(|r| {
            let dec = model.materialize_decoder(store.relation(&r.name)?)?;
            faithfulness(&dec, r, store)
        })
        .collect()
}

/// Unweighted mean of the scores; 0 for an empty list.
pub fn mean_score(reports: &[FaithfulnessReport]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    reports.iter().map(|r| r.score).sum::<f64>() / reports.len() as f64
}

/// `entries[j][l]`: decoder of relation `j` scored on the samples of relation `l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossEvalMatrix {
    pub names: Vec<String>,
    pub entries: Vec<Vec<f64>>,
    /// Display order for block visualization; never affects the entries.
    pub order: Vec<usize>,
}

impl CrossEvalMatrix {
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let j = self.names.iter().position(|n| n == row)?;
        let l = self.names.iter().position(|n| n == col)?;
        Some(self.entries[j][l])
    }

    pub fn mean_diagonal(&self) -> f64 {
        let k = self.k();
        (0..k).map(|i| self.entries[i][i]).sum::<f64>() / k as f64
    }

    /// Mean over `j != l`; 0 when `k = 1`.
    pub fn mean_off_diagonal(&self) -> f64 {
        let k = self.k();
        if k < 2 {
            return 0.0;
        }
        let total: f64 = (0..k).flat_map(|j| (0..k).filter(move |&l| l != j).map(move |l| (j, l))).map(|(j, l)| self.entries[j][l]).sum();
        total / (k * (k - 1)) as f64
    }

    /// Copy with rows and columns permuted into `order`.
    pub fn reordered(&self) -> CrossEvalMatrix {
        let names = self.order.iter().map(|&i| self.names[i].clone()).collect();
        let entries = self.order.iter().map(|&j| self.order.iter().map(|&l| self.entries[j][l]).collect()).collect();
        CrossEvalMatrix { names, entries, order: (0..self.k()).collect() }
    }
}

/// Applies every decoder to every relation; the relation order follows `dataset`.
pub fn cross_evaluate(
    decoders: &[(String, AffineDecoder)],
    dataset: &[RelationRecord],
    store: &EmbeddingStore,
) -> Result<CrossEvalMatrix, EvalError> {
    let mut dec_names: Vec<String> = decoders.iter().map(|(n, _)| n.clone()).collect();
    let mut data_names: Vec<String> = dataset.iter().map(|r| r.name.clone()).collect();
    dec_names.sort();
    data_names.sort();
    if dec_names != data_names || dec_names.windows(2).any(|w| w[0] == w[1]) {
        return Err(EvalError::NameMismatch { decoders: dec_names, dataset: data_names });
    }
    let by_row: Vec<&AffineDecoder> = dataset
        .iter()
        .map(|r| &decoders.iter().find(|(n, _)| *n == r.name).expect("names checked").1)
        .collect();
    let entries = by_row
        .par_iter()
        .map(|dec| dataset.iter().map(|rel| faithfulness(dec, rel, store).map(|f| f.score)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let order = average_linkage_order(&entries);
    Ok(CrossEvalMatrix { names: dataset.iter().map(|r| r.name.clone()).collect(), entries, order })
}

/// Leaf order of an average-linkage clustering of the rows (Euclidean distance).
///
/// Clusters are merged in order of smallest mean pairwise distance, ties going to
/// the lowest cluster indices; the merged cluster lists the left members first.
pub fn average_linkage_order(rows: &[Vec<f64>]) -> Vec<usize> {
    let n = rows.len();
    let dist = |a: usize, b: usize| rows[a].iter().zip(&rows[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let total: f64 = clusters[i].iter().flat_map(|&a| clusters[j].iter().map(move |&b| (a, b))).map(|(a, b)| dist(a, b)).sum();
                let avg = total / (clusters[i].len() * clusters[j].len()) as f64;
                if avg < best.0 {
                    best = (avg, i, j);
                }
            }
        }
        let right = clusters.remove(best.2);
        clusters[best.1].extend(right);
    }
    clusters.pop().unwrap_or_default()
}
