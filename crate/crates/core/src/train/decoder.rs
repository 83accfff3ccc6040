//! Per-relation affine decoders fitted with the same loss: full-matrix or low-rank `U·Vᵀ`.

use super::{cross_entropy, optimize, resolve, LossRecord, TrainConfig, TrainError};
use crate::dataset::RelationRecord;
use crate::model::AffineDecoder;
use crate::rng::{normal_vec, seeded};
use crate::store::EmbeddingStore;

pub fn low_rank_param_count(d: usize, rank: usize) -> usize {
    2 * d * rank + d
}

pub fn full_param_count(d: usize) -> usize {
    d * d + d
}

/// Blocks: `[W, b]` for the full fit, `[U, V, b]` with `W = U·Vᵀ` for the low-rank fit.
struct Params {
    d: usize,
    rank: Option<usize>,
    blocks: Vec<Vec<f64>>,
}

impl Params {
    fn init(d: usize, rank: Option<usize>, seed: u64) -> Self {
        let blocks = match rank {
            None => vec![vec![0.0; d * d], vec![0.0; d]],
            Some(r) => {
                let mut rng = seeded(seed);
                let scale = 1.0 / (d as f64).sqrt();
                vec![normal_vec(&mut rng, d * r, scale), normal_vec(&mut rng, d * r, scale), vec![0.0; d]]
            }
        };
        Self { d, rank, blocks }
    }

    fn decoder(&self) -> Result<AffineDecoder, TrainError> {
        let d = self.d;
        let w = match self.rank {
            None => self.blocks[0].clone(),
            Some(r) => {
                let (u, v) = (&self.blocks[0], &self.blocks[1]);
                let mut w = vec![0.0; d * d];
                for o in 0..d {
                    for s in 0..d {
                        w[o * d + s] = (0..r).map(|k| u[o * r + k] * v[s * r + k]).sum();
                    }
                }
                w
            }
        };
        Ok(AffineDecoder::new(d, w, self.blocks.last().unwrap().clone())?)
    }

    /// Forward pass on augmented subject `s`, then the gradient for output gradient `g`.
    fn example(&self, store: &EmbeddingStore, s: &[f64], target: usize, grads: &mut [Vec<f64>]) -> f64 {
        let d = self.d;
        let s = &s[..d];
        let b = self.blocks.last().unwrap();
        match self.rank {
            None => {
                let w = &self.blocks[0];
                let x: Vec<f64> = (0..d).map(|o| b[o] + w[o * d..(o + 1) * d].iter().zip(s).map(|(a, c)| a * c).sum::<f64>()).collect();
                let (loss, g) = cross_entropy(store, &x, target);
                for o in 0..d {
                    for (gw, si) in grads[0][o * d..(o + 1) * d].iter_mut().zip(s) {
                        *gw += g[o] * si;
                    }
                    grads[1][o] += g[o];
                }
                loss
            }
            Some(r) => {
                let (u, v) = (&self.blocks[0], &self.blocks[1]);
                let mut h = vec![0.0; r];
                for (si, vrow) in s.iter().zip(v.chunks_exact(r)) {
                    for (hk, vk) in h.iter_mut().zip(vrow) {
                        *hk += vk * si;
                    }
                }
                let x: Vec<f64> = (0..d).map(|o| b[o] + (0..r).map(|k| u[o * r + k] * h[k]).sum::<f64>()).collect();
                let (loss, g) = cross_entropy(store, &x, target);
                let mut gh = vec![0.0; r];
                for o in 0..d {
                    for k in 0..r {
                        grads[0][o * r + k] += g[o] * h[k];
                        gh[k] += u[o * r + k] * g[o];
                    }
                    grads[2][o] += g[o];
                }
                for (i, si) in s.iter().enumerate() {
                    for k in 0..r {
                        grads[1][i * r + k] += si * gh[k];
                    }
                }
                loss
            }
        }
    }
}

/// Fits one decoder on `relation`; `rank = None` gives the unconstrained affine map.
pub fn train_decoder(
    relation: &RelationRecord,
    store: &EmbeddingStore,
    rank: Option<usize>,
    cfg: &TrainConfig,
) -> Result<(AffineDecoder, Vec<LossRecord>), TrainError> {
    let d = store.d();
    if let Some(r) = rank {
        if r == 0 || r > d {
            return Err(TrainError::InvalidConfig(format!("rank {r} must lie in 1..={d}")));
        }
    }
    let res = resolve(store, std::slice::from_ref(relation), false)?;
    let mut p = Params::init(d, rank, cfg.seed);
    let records = optimize(
        &mut p,
        cfg,
        res.examples.len(),
        |p| p.blocks.iter_mut().map(|b| b.as_mut_slice()).collect(),
        |p, i, grads| {
            let ex = &res.examples[i];
            Ok(p.example(store, &ex.subject_aug, ex.target, grads))
        },
        |_| Ok(None),
    )?;
    Ok((p.decoder()?, records))
}

pub fn train_low_rank_baseline(
    relation: &RelationRecord,
    rank: usize,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<AffineDecoder, TrainError> {
    Ok(train_decoder(relation, store, Some(rank), cfg)?.0)
}

pub fn train_full_decoder(relation: &RelationRecord, store: &EmbeddingStore, cfg: &TrainConfig) -> Result<AffineDecoder, TrainError> {
    Ok(train_decoder(relation, store, None, cfg)?.0)
}
