use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, train_low_rank_baseline, TrainConfig, TrainError};
use crate::dataset::RelationRecord;
use crate::eval::{faithfulness, mean_score, model_faithfulness};
use crate::model::{init_model, param_count, ArchitectureConfig, ArchitectureKind};
use crate::store::EmbeddingStore;
use crate::train::low_rank_param_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kinds: Vec<ArchitectureKind>,
    pub relation_dims: Vec<usize>,
    /// Each value is used for both `d_s'` and `d_o'`.
    pub subject_object_dims: Vec<usize>,
    pub embedder: Vec<bool>,
    /// `(x, y, z)` for triangle rows.
    pub triangle_dims: (usize, usize, usize),
    pub train: TrainConfig,
    pub model_seed: u64,
}

impl GridSpec {
    /// The standard search ranges with the default training setup.
    pub fn standard() -> Self {
        Self {
            kinds: vec![ArchitectureKind::Simple, ArchitectureKind::Triangle],
            relation_dims: vec![2, 4, 6, 8, 30, 100],
            subject_object_dims: vec![10, 50, 100, 300],
            embedder: vec![false, true],
            triangle_dims: (50, 50, 50),
            train: TrainConfig::default(),
            model_seed: 0,
        }
    }

    /// Every configuration, in kind, `d_r'`, `d_s'`, embedder order.
    pub fn configs(&self, d: usize) -> Vec<ArchitectureConfig> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &dr in &self.relation_dims {
                for &dso in &self.subject_object_dims {
                    for &emb in &self.embedder {
                        let mut c = match kind {
                            ArchitectureKind::Simple => ArchitectureConfig::simple(d, dso, dr, dso),
                            ArchitectureKind::Triangle => ArchitectureConfig::triangle(d, dso, dr, dso, self.triangle_dims),
                        };
                        if emb {
                            c = c.with_embedder();
                        }
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub arch: ArchitectureKind,
    #[serde(rename = "d_r'")]
    pub relation_dim: usize,
    #[serde(rename = "d_s'")]
    pub subject_dim: usize,
    #[serde(rename = "d_o'")]
    pub object_dim: usize,
    pub embedder: bool,
    pub param_count_formula: usize,
    pub param_count_actual: usize,
    /// Mean faithfulness over the training relations.
    pub mean_faithfulness: Option<f64>,
    pub seed: u64,
    /// Mean faithfulness over the held-out relations, when given.
    pub heldout_faithfulness: Option<f64>,
    pub error: Option<String>,
}

fn run_config(
    cfg: &ArchitectureConfig,
    grid: &GridSpec,
    store: &EmbeddingStore,
    train_data: &[RelationRecord],
    heldout: Option<&[RelationRecord]>,
) -> Result<(f64, Option<f64>), TrainError> {
    let model = init_model(cfg.clone(), grid.model_seed)?;
    let (model, _) = train(model, store, train_data, &grid.train)?;
    let tr = mean_score(&model_faithfulness(&model, train_data, store)?);
    let ho = match heldout {
        Some(h) if !h.is_empty() => Some(mean_score(&model_faithfulness(&model, h, store)?)),
        _ => None,
    };
    Ok((tr, ho))
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool")
}

/// Trains and scores every grid configuration; failures are kept as rows with `error` set.
///
/// Rows are sorted by actual parameter count (stable, so ties keep grid order).
pub fn grid_search(
    grid: &GridSpec,
    store: &EmbeddingStore,
    train_data: &[RelationRecord],
    heldout: Option<&[RelationRecord]>,
    jobs: usize,
) -> Vec<GridRow> {
    let configs = grid.configs(store.d());
    let mut rows: Vec<GridRow> = pool(jobs).install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let pc = param_count(cfg);
                let result = run_config(cfg, grid, store, train_data, heldout);
                if let Err(e) = &result {
                    log::warn!("grid row {} d_r'={} d_s'={} failed: {e}", cfg.kind, cfg.relation_dim, cfg.subject_dim);
                }
                let (tr, ho, error) = match result {
                    Ok((t, h)) => (Some(t), h, None),
                    Err(e) => (None, None, Some(e.to_string())),
                };
                GridRow {
                    arch: cfg.kind,
                    relation_dim: cfg.relation_dim,
                    subject_dim: cfg.subject_dim,
                    object_dim: cfg.object_dim,
                    embedder: cfg.use_relation_embedder,
                    param_count_formula: pc.formula,
                    param_count_actual: pc.total,
                    mean_faithfulness: tr,
                    seed: grid.model_seed,
                    heldout_faithfulness: ho,
                    error,
                }
            })
            .collect()
    });
    rows.sort_by_key(|r| r.param_count_actual);
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankRow {
    pub rank: usize,
    /// Summed over all relations: one decoder each.
    pub param_count: usize,
    pub mean_faithfulness: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

/// One low-rank decoder per relation at each rank, scored on its own relation.
pub fn low_rank_sweep(
    ranks: &[usize],
    store: &EmbeddingStore,
    data: &[RelationRecord],
    cfg: &TrainConfig,
    jobs: usize,
) -> Vec<LowRankRow> {
    let d = store.d();
    pool(jobs).install(|| {
        ranks
            .par_iter()
            .map(|&rank| {
                let scores: Result<Vec<f64>, TrainError> = data
                    .iter()
                    .map(|rel| {
                        let dec = train_low_rank_baseline(rel, rank, store, cfg)?;
                        Ok(faithfulness(&dec, rel, store)?.score)
                    })
                    .collect();
                let (mean, error) = match scores {
                    Ok(s) => (Some(s.iter().sum::<f64>() / s.len().max(1) as f64), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                LowRankRow { rank, param_count: data.len() * low_rank_param_count(d, rank), mean_faithfulness: mean, seed: cfg.seed, error }
            })
            .collect()
    })
}
