//! End-to-end training through the frozen head, per-relation decoder fits, and grid search.

mod decoder;
mod grid;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decoder::{full_param_count, low_rank_param_count, train_decoder, train_full_decoder, train_low_rank_baseline};
pub use grid::{grid_search, low_rank_sweep, GridRow, GridSpec, LowRankRow};
pub use optim::OptimizerKind;

use crate::dataset::RelationRecord;
use crate::eval::{model_faithfulness, EvalError};
use crate::model::{augment, embedder, ModelError, TensorNetworkModel, RELATION_NODE};
use crate::rng::seeded;
use crate::store::{EmbeddingStore, StoreError};
use crate::tensor::{contract_network, network_vjp, Tensor, TensorError};

use optim::Optimizer;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model dimension {model} does not match store dimension {store}")]
    Dimension { model: usize, store: usize },
    #[error("no training samples")]
    EmptyData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Iterations between loss records.
    pub log_every: usize,
    /// AdamW decoupled decay.
    pub weight_decay: f64,
    /// Training stops once the mean loss of two consecutive windows of this
    /// length differs by less than `plateau_tolerance`; 0 disables the check.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Record per-relation faithfulness with every loss record.
    pub snapshot_faithfulness: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.001,
            batch_size: 16,
            iterations: 15_000,
            seed: 0,
            log_every: 500,
            weight_decay: 0.01,
            plateau_window: 500,
            plateau_tolerance: 1e-6,
            snapshot_faithfulness: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub iteration: usize,
    /// Mean minibatch cross-entropy since the previous record.
    pub loss: f64,
    pub faithfulness: Option<Vec<(String, f64)>>,
}

pub(crate) struct Example {
    pub relation: usize,
    pub subject_aug: Vec<f64>,
    pub target: usize,
}

/// Relation vectors and (augmented subject, object token) pairs looked up once.
pub(crate) struct Resolved {
    pub relation_vectors: Vec<Vec<f64>>,
    pub examples: Vec<Example>,
}

pub(crate) fn resolve(store: &EmbeddingStore, data: &[RelationRecord], with_relations: bool) -> Result<Resolved, TrainError> {
    let mut relation_vectors = Vec::with_capacity(data.len());
    let mut examples = Vec::new();
    for (k, rel) in data.iter().enumerate() {
        if with_relations {
            relation_vectors.push(store.relation(&rel.name)?.to_vec());
        }
        for s in &rel.samples {
            let subject = store.entity(&s.subject)?;
            let object = store.entity(&s.object)?;
            examples.push(Example { relation: k, subject_aug: augment(&subject.vector), target: object.first_token_id as usize });
        }
    }
    if examples.is_empty() {
        return Err(TrainError::EmptyData);
    }
    Ok(Resolved { relation_vectors, examples })
}

/// Cross-entropy of the head logits at `x` against `target`, and its gradient in `x`.
pub(crate) fn cross_entropy(store: &EmbeddingStore, x: &[f64], target: usize) -> (f64, Vec<f64>) {
    let logits = store.logits_unchecked(x);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[target];
    let d = store.d();
    let mut g = vec![0.0; d];
    for (m, (e, row)) in exps.iter().zip(store.head_weights().chunks_exact(d)).enumerate() {
        let coef = e / z - (m == target) as usize as f64;
        if coef != 0.0 {
            for (gi, hi) in g.iter_mut().zip(row) {
                *gi += coef * hi;
            }
        }
    }
    (loss, g)
}

/// Loss tracking, logging, and the plateau rule shared by every training loop.
struct Tracker<'c> {
    cfg: &'c TrainConfig,
    since_record: (f64, usize),
    window: f64,
    previous_window: Option<f64>,
    records: Vec<LossRecord>,
}

impl<'c> Tracker<'c> {
    fn new(cfg: &'c TrainConfig) -> Self {
        Self { cfg, since_record: (0.0, 0), window: 0.0, previous_window: None, records: Vec::new() }
    }

    /// Returns true when the plateau rule fires.
    fn push(&mut self, iteration: usize, loss: f64) -> bool {
        self.since_record.0 += loss;
        self.since_record.1 += 1;
        let w = self.cfg.plateau_window;
        if w == 0 {
            return false;
        }
        self.window += loss;
        if iteration % w == 0 {
            let mean = self.window / w as f64;
            self.window = 0.0;
            let stop = self.previous_window.is_some_and(|p| (p - mean).abs() < self.cfg.plateau_tolerance);
            self.previous_window = Some(mean);
            return stop;
        }
        false
    }

    fn due(&self, iteration: usize) -> bool {
        iteration % self.cfg.log_every == 0
    }

    fn record(&mut self, iteration: usize, faithfulness: Option<Vec<(String, f64)>>) {
        let (sum, n) = std::mem::take(&mut self.since_record);
        if n == 0 {
            return;
        }
        let loss = sum / n as f64;
        log::debug!("iteration {iteration}: loss {loss:.6}");
        self.records.push(LossRecord { iteration, loss, faithfulness });
    }
}

/// Minibatch loop: `grad` adds one example's gradient into the buffers and returns its loss.
pub(crate) fn optimize<P>(
    state: &mut P,
    cfg: &TrainConfig,
    n_examples: usize,
    blocks: impl Fn(&mut P) -> Vec<&mut [f64]>,
    mut grad: impl FnMut(&P, usize, &mut [Vec<f64>]) -> Result<f64, TrainError>,
    mut snapshot: impl FnMut(&P) -> Result<Option<Vec<(String, f64)>>, TrainError>,
) -> Result<Vec<LossRecord>, TrainError> {
    cfg.validate()?;
    let sizes: Vec<usize> = blocks(state).iter().map(|b| b.len()).collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay, &sizes);
    let mut rng = seeded(cfg.seed);
    let mut tracker = Tracker::new(cfg);
    let scale = 1.0 / cfg.batch_size as f64;
    let mut last = 0;
    for it in 1..=cfg.iterations {
        let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            loss += grad(state, rng.random_range(0..n_examples), &mut grads)?;
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { iteration: it });
        }
        for g in grads.iter_mut().flatten() {
            *g *= scale;
        }
        opt.step(&mut blocks(state), &grads);
        last = it;
        let stop = tracker.push(it, loss);
        if tracker.due(it) || stop {
            let snap = snapshot(state)?;
            tracker.record(it, snap);
        }
        if stop {
            log::info!("loss plateaued at iteration {it}");
            break;
        }
    }
    if tracker.since_record.1 > 0 {
        let snap = snapshot(state)?;
        tracker.record(last, snap);
    }
    Ok(tracker.records)
}

fn check_dims(model: &TensorNetworkModel, store: &EmbeddingStore) -> Result<(), TrainError> {
    if model.config().d != store.d() {
        return Err(TrainError::Dimension { model: model.config().d, store: store.d() });
    }
    Ok(())
}

/// Loss of one example and its gradient with respect to every model tensor.
fn model_example_grad(
    model: &TensorNetworkModel,
    store: &EmbeddingStore,
    relation: &[f64],
    ex: &Example,
    grads: &mut [Vec<f64>],
) -> Result<f64, TrainError> {
    let use_embedder = model.config().use_relation_embedder;
    let layers = model.embedder_layers();
    let (r, trace) = if use_embedder {
        let (r, t) = embedder::forward(&layers, relation);
        (r, Some(t))
    } else {
        (relation.to_vec(), None)
    };
    let spec = model.network_with_inputs(ex.subject_aug.clone(), r)?;
    let x = contract_network(&spec, &[])?;
    let (loss, g) = cross_entropy(store, x.data(), ex.target);
    let cot = Tensor::vector("o", g)?;
    let mut k = 0;
    for (name, _) in model.params() {
        if name.starts_with('E') {
            continue;
        }
        let gt = network_vjp(&spec, &cot, name, &[])?;
        for (a, b) in grads[k].iter_mut().zip(gt.data()) {
            *a += b;
        }
        k += 1;
    }
    if let Some(trace) = trace {
        let gr = network_vjp(&spec, &cot, RELATION_NODE, &[])?;
        for (i, ge) in embedder::backward(&layers, &trace, gr.data()).into_iter().enumerate() {
            for (a, b) in grads[k + i].iter_mut().zip(&ge) {
                *a += b;
            }
        }
    }
    Ok(loss)
}

/// Trains every model tensor against the cross-entropy of the decoded first object token.
///
/// The store stays untouched; minibatches draw uniformly from all (relation, sample) pairs.
pub fn train(
    mut model: TensorNetworkModel,
    store: &EmbeddingStore,
    data: &[RelationRecord],
    cfg: &TrainConfig,
) -> Result<(TensorNetworkModel, Vec<LossRecord>), TrainError> {
    cfg.validate()?;
    check_dims(&model, store)?;
    let res = resolve(store, data, true)?;
    let records = optimize(
        &mut model,
        cfg,
        res.examples.len(),
        |m| m.params_mut().iter_mut().map(|(_, t)| t.data_mut()).collect(),
        |m, i, grads| {
            let ex = &res.examples[i];
            model_example_grad(m, store, &res.relation_vectors[ex.relation], ex, grads)
        },
        |m| {
            if !cfg.snapshot_faithfulness {
                return Ok(None);
            }
            let reports = model_faithfulness(m, data, store)?;
            Ok(Some(reports.into_iter().map(|r| (r.relation, r.score)).collect()))
        },
    )?;
    Ok((model, records))
}

/// Mean cross-entropy over every sample of `data`.
pub fn dataset_loss(model: &TensorNetworkModel, store: &EmbeddingStore, data: &[RelationRecord]) -> Result<f64, TrainError> {
    check_dims(model, store)?;
    let res = resolve(store, data, true)?;
    let mut total = 0.0;
    for ex in &res.examples {
        let r = model.embed_relation(&res.relation_vectors[ex.relation])?;
        let spec = model.network_with_inputs(ex.subject_aug.clone(), r)?;
        let x = contract_network(&spec, &[])?;
        total += cross_entropy(store, x.data(), ex.target).0;
    }
    Ok(total / res.examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ArchitectureConfig};
    use crate::store::{gen_math_store, SyntheticTeacherSpec};

    fn math(d: usize) -> (EmbeddingStore, Vec<RelationRecord>) {
        let m = gen_math_store(&SyntheticTeacherSpec::math_ramp(d, 1, 0.0)).unwrap();
        (m.store, m.dataset)
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let (store, _) = math(6);
        let x = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.9];
        let (_, g) = cross_entropy(&store, &x, 120);
        for i in 0..6 {
            let mut p = x.clone();
            p[i] += 1e-6;
            let mut m = x.clone();
            m[i] -= 1e-6;
            let fd = (cross_entropy(&store, &p, 120).0 - cross_entropy(&store, &m, 120).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let (store, data) = math(4);
        let cfg = ArchitectureConfig::triangle(4, 2, 2, 3, (2, 2, 2)).with_embedder();
        let model = init_model(cfg, 3).unwrap();
        let res = resolve(&store, &data[..1], true).unwrap();
        let ex = &res.examples[5];
        let mut grads: Vec<Vec<f64>> = model.params().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        model_example_grad(&model, &store, &res.relation_vectors[0], ex, &mut grads).unwrap();
        let loss_of = |m: &TensorNetworkModel| {
            let mut g: Vec<Vec<f64>> = m.params().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            model_example_grad(m, &store, &res.relation_vectors[0], ex, &mut g).unwrap()
        };
        let h = 1e-6;
        for k in 0..model.params().len() {
            for i in 0..model.params()[k].1.len() {
                let mut p = model.clone();
                p.params_mut()[k].1.data_mut()[i] += h;
                let mut m = model.clone();
                m.params_mut()[k].1.data_mut()[i] -= h;
                let fd = (loss_of(&p) - loss_of(&m)) / (2.0 * h);
                let an = grads[k][i];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{} [{i}]: {fd} vs {an}", model.params()[k].0);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (store, data) = math(8);
        let model = init_model(ArchitectureConfig::simple(8, 2, 2, 2), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, iterations: 30, batch_size: 4, ..Default::default() };
        let (after, records) = train(model.clone(), &store, &data[..3], &cfg).unwrap();
        assert_eq!(after, model);
        assert_eq!(records.last().unwrap().iteration, 30);
    }

    #[test]
    fn training_is_deterministic() {
        let (store, data) = math(8);
        let model = init_model(ArchitectureConfig::simple(8, 3, 2, 3), 2).unwrap();
        let cfg = TrainConfig { iterations: 40, log_every: 10, seed: 5, optimizer: OptimizerKind::Adam, ..Default::default() };
        let a = train(model.clone(), &store, &data[..4], &cfg).unwrap();
        let b = train(model, &store, &data[..4], &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.len(), 4);
    }

    #[test]
    fn rejects_bad_config_and_unknown_names() {
        let (store, mut data) = math(4);
        let model = init_model(ArchitectureConfig::simple(4, 2, 2, 2), 0).unwrap();
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(matches!(train(model.clone(), &store, &data, &cfg), Err(TrainError::InvalidConfig(_))));
        data[0].name = "no such relation".into();
        assert!(matches!(train(model, &store, &data[..1], &TrainConfig::default()), Err(TrainError::Store(_))));
    }
}
