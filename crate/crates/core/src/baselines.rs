//! Jacobian-estimated decoders and the majority-object baseline.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::RelationRecord;
use crate::model::{AffineDecoder, ModelError};
use crate::rng::seeded;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("teacher returned a non-finite value at subject {subject}")]
    NonFinite { subject: usize },
    #[error("n_examples {n_examples} must lie in 1..={available}")]
    Examples { n_examples: usize, available: usize },
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("subject {index} has length {got}, teacher expects {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A deterministic map from subject vectors to object vectors of the same width.
pub trait TeacherFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, s: &[f64]) -> Vec<f64>;
}

impl TeacherFunction for AffineDecoder {
    fn dim(&self) -> usize {
        AffineDecoder::dim(self)
    }

    fn eval(&self, s: &[f64]) -> Vec<f64> {
        self.apply_unchecked(s)
    }
}

/// Wraps a closure as a teacher.
pub struct FnTeacher<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> TeacherFunction for FnTeacher<F> {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, s: &[f64]) -> Vec<f64> {
        (self.f)(s)
    }
}

pub const DEFAULT_STEP: f64 = 1e-4;

fn finite_or(v: Vec<f64>, subject: usize) -> Result<Vec<f64>, BaselineError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(BaselineError::NonFinite { subject })
    }
}

/// Central-difference Jacobian `W` at `s` and the offset `F(s) − W·s`.
pub fn taylor_at(teacher: &dyn TeacherFunction, s: &[f64], step: f64, index: usize) -> Result<(Vec<f64>, Vec<f64>), BaselineError> {
    let d = teacher.dim();
    if s.len() != d {
        return Err(BaselineError::Dimension { index, expected: d, got: s.len() });
    }
    let mut w = vec![0.0; d * d];
    let mut probe = s.to_vec();
    for j in 0..d {
        let h = step * (1.0 + s[j].abs());
        probe[j] = s[j] + h;
        let plus = finite_or(teacher.eval(&probe), index)?;
        probe[j] = s[j] - h;
        let minus = finite_or(teacher.eval(&probe), index)?;
        probe[j] = s[j];
        for o in 0..d {
            w[o * d + j] = (plus[o] - minus[o]) / (2.0 * h);
        }
    }
    let f = finite_or(teacher.eval(s), index)?;
    let b = (0..d).map(|o| f[o] - (0..d).map(|j| w[o * d + j] * s[j]).sum::<f64>()).collect();
    Ok((w, b))
}

/// Averages the first-order expansions at the first `n_examples` subjects.
pub fn jacobian_lre(
    teacher: &dyn TeacherFunction,
    subjects: &[Vec<f64>],
    n_examples: usize,
    step: f64,
) -> Result<AffineDecoder, BaselineError> {
    if n_examples == 0 || n_examples > subjects.len() {
        return Err(BaselineError::Examples { n_examples, available: subjects.len() });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(BaselineError::Step(step));
    }
    let d = teacher.dim();
    let mut w = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for (i, s) in subjects[..n_examples].iter().enumerate() {
        let (wi, bi) = taylor_at(teacher, s, step, i)?;
        for (a, x) in w.iter_mut().zip(&wi) {
            *a += x;
        }
        for (a, x) in b.iter_mut().zip(&bi) {
            *a += x;
        }
    }
    let inv = 1.0 / n_examples as f64;
    w.iter_mut().chain(b.iter_mut()).for_each(|x| *x *= inv);
    Ok(AffineDecoder::new(d, w, b)?)
}

/// Subject names of `relation` in a seeded shuffled order, first `n` kept.
pub fn select_subjects(relation: &RelationRecord, n: usize, seed: u64) -> Vec<String> {
    let mut names: Vec<String> = relation.samples.iter().map(|s| s.subject.clone()).collect();
    names.shuffle(&mut seeded(seed));
    names.truncate(n);
    log::info!("jacobian subjects for `{}` (seed {seed}): {names:?}", relation.name);
    names
}

/// The most frequent object (ties to the lexicographically smallest) and its share.
pub fn majority_baseline(relation: &RelationRecord) -> (String, f64) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &relation.samples {
        *counts.entry(&s.object).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (o, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((o, c));
        }
    }
    match best {
        Some((o, c)) => (o.to_string(), c as f64 / relation.samples.len() as f64),
        None => (String::new(), 0.0),
    }
}
