//! Synthetic teachers: stores whose relations are exactly affine by construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{nearest_neighbour_head, EmbeddingStore, Entity, StoreError};
use crate::dataset::{generate_math_dataset, minus_name, plus_name, RelationRecord, Sample, MINUS_OFFSETS, PLUS_OFFSETS};
use crate::model::AffineDecoder;
use crate::rng::{normal_vec, seeded, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TeacherKind {
    /// Numbers on a line: `E(n) = n·u + w`, one token per number in `vocab_min..=vocab_max`.
    MathRamp { number_max: u32, vocab_min: i64, vocab_max: i64 },
    /// Independent affine maps with disjoint vocabularies, one object per subject.
    Orthogonal { relations: usize, samples_per_relation: usize },
    /// Relations grouped so that each group shares one affine map and its object vocabulary.
    SharedProperty { groups: Vec<usize>, classes_per_group: usize, subjects_per_class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTeacherSpec {
    pub kind: TeacherKind,
    pub d: usize,
    pub seed: u64,
    /// Scale of the per-entity jitter.
    pub sigma: f64,
}

impl SyntheticTeacherSpec {
    pub fn math_ramp(d: usize, seed: u64, sigma: f64) -> Self {
        Self { kind: TeacherKind::MathRamp { number_max: 200, vocab_min: -100, vocab_max: 300 }, d, seed, sigma }
    }

    pub fn orthogonal(relations: usize, samples_per_relation: usize, d: usize, seed: u64) -> Self {
        Self { kind: TeacherKind::Orthogonal { relations, samples_per_relation }, d, seed, sigma: 0.0 }
    }

    pub fn shared_property(groups: Vec<usize>, classes_per_group: usize, subjects_per_class: usize, d: usize, seed: u64, sigma: f64) -> Self {
        Self { kind: TeacherKind::SharedProperty { groups, classes_per_group, subjects_per_class }, d, seed, sigma }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::InvalidSpec(m));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        match &self.kind {
            TeacherKind::MathRamp { number_max, vocab_min, vocab_max } => {
                if *number_max < 100 {
                    return bad(format!("number_max {number_max} is below the largest offset 100"));
                }
                if *vocab_min > 0 || *vocab_max < *number_max as i64 {
                    return bad(format!(
                        "vocabulary {vocab_min}..={vocab_max} must cover the number range 0..={number_max}"
                    ));
                }
            }
            TeacherKind::Orthogonal { relations, samples_per_relation } => {
                if *relations == 0 || *samples_per_relation == 0 {
                    return bad("orthogonal store needs at least one relation and one sample".into());
                }
            }
            TeacherKind::SharedProperty { groups, classes_per_group, subjects_per_class } => {
                if groups.is_empty() {
                    return bad("no groups".into());
                }
                if let Some(g) = groups.iter().position(|&n| n == 0) {
                    return bad(format!("group {g} is empty"));
                }
                if *classes_per_group == 0 || *subjects_per_class == 0 {
                    return bad("classes_per_group and subjects_per_class must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// A generated store together with its dataset and the exact decoders behind it.
#[derive(Debug, Clone)]
pub struct SyntheticStore {
    pub store: EmbeddingStore,
    pub dataset: Vec<RelationRecord>,
    pub ground_truth: BTreeMap<String, AffineDecoder>,
    /// Group index of each relation (every relation is its own group outside `SharedProperty`).
    pub groups: BTreeMap<String, usize>,
}

/// Token of number `n` in a MathRamp vocabulary starting at `vocab_min`.
pub fn math_token(n: i64, vocab_min: i64) -> u32 {
    (n - vocab_min) as u32
}

fn unit(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    let v = normal_vec(rng, d, 1.0);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

pub fn gen_store(spec: &SyntheticTeacherSpec) -> Result<SyntheticStore, StoreError> {
    match spec.kind {
        TeacherKind::MathRamp { .. } => gen_math_store(spec),
        TeacherKind::Orthogonal { .. } => gen_orthogonal_store(spec),
        TeacherKind::SharedProperty { .. } => gen_shared_property_store(spec),
    }
}

/// Number line store; the head decodes to the nearest number embedding.
///
/// Relation vectors are `q0 + X·q1` for `plus X` and `q0 − X·q1` for `minus X`,
/// and the exact decoder of `plus X` is `W = I`, `b = X·u`.
pub fn gen_math_store(spec: &SyntheticTeacherSpec) -> Result<SyntheticStore, StoreError> {
    spec.validate()?;
    let TeacherKind::MathRamp { number_max, vocab_min, vocab_max } = spec.kind else {
        return Err(StoreError::InvalidSpec("gen_math_store needs a MathRamp spec".into()));
    };
    let d = spec.d;
    let mut rng = seeded(spec.seed);
    let u: Vec<f64> = unit(&mut rng, d).into_iter().map(|x| 0.1 * x).collect();
    let w = unit(&mut rng, d);
    let q0 = unit(&mut rng, d);
    let q1: Vec<f64> = unit(&mut rng, d).into_iter().map(|x| 0.02 * x).collect();

    let mut rows = Vec::new();
    let mut entities = BTreeMap::new();
    for n in vocab_min..=vocab_max {
        let jitter = normal_vec(&mut rng, d, spec.sigma / (d as f64).sqrt());
        let e: Vec<f64> = (0..d).map(|i| n as f64 * u[i] + w[i] + jitter[i]).collect();
        entities.insert(n.to_string(), Entity { vector: e.clone(), first_token_id: math_token(n, vocab_min) });
        rows.push(e);
    }
    let (head, bias) = nearest_neighbour_head(&rows);

    let mut relations = BTreeMap::new();
    let mut ground_truth = BTreeMap::new();
    let mut groups = BTreeMap::new();
    let mut add = |name: String, x: f64| {
        relations.insert(name.clone(), axpy(x, &q1, &q0));
        let b: Vec<f64> = u.iter().map(|ui| x * ui).collect();
        let id = AffineDecoder::identity(d);
        ground_truth.insert(name.clone(), AffineDecoder::new(d, id.weight().to_vec(), b).expect("finite"));
        let g = groups.len();
        groups.insert(name, g);
    };
    for x in PLUS_OFFSETS {
        add(plus_name(x), x as f64);
    }
    for x in MINUS_OFFSETS {
        add(minus_name(x), -(x as f64));
    }
    let store = EmbeddingStore::new(d, 0, rows.len(), head, Some(bias), entities, relations)?;
    let dataset = generate_math_dataset(number_max).map_err(|e| StoreError::InvalidSpec(e.to_string()))?;
    Ok(SyntheticStore { store, dataset, ground_truth, groups })
}

/// `relations` independent maps, each with its own subjects and one object per subject.
pub fn gen_orthogonal_store(spec: &SyntheticTeacherSpec) -> Result<SyntheticStore, StoreError> {
    spec.validate()?;
    let TeacherKind::Orthogonal { relations, samples_per_relation } = spec.kind else {
        return Err(StoreError::InvalidSpec("gen_orthogonal_store needs an Orthogonal spec".into()));
    };
    let names: Vec<String> = (0..relations).map(|i| format!("relation {i}")).collect();
    grouped(spec, &names, &vec![1; relations], samples_per_relation, 1)
}

/// Groups of relations sharing one map and object vocabulary; subjects are distinct per relation.
///
/// Subjects are drawn around per-class centres `z` shared inside a group; the
/// object of class `z` is `A·z + c` with the group's `(A, c)`.
pub fn gen_shared_property_store(spec: &SyntheticTeacherSpec) -> Result<SyntheticStore, StoreError> {
    spec.validate()?;
    let TeacherKind::SharedProperty { ref groups, classes_per_group, subjects_per_class } = spec.kind else {
        return Err(StoreError::InvalidSpec("gen_shared_property_store needs a SharedProperty spec".into()));
    };
    let mut names = Vec::new();
    for (g, &n) in groups.iter().enumerate() {
        for i in 0..n {
            names.push(format!("group {g} relation {i}"));
        }
    }
    grouped(spec, &names, groups, classes_per_group, subjects_per_class)
}

fn grouped(
    spec: &SyntheticTeacherSpec,
    names: &[String],
    group_sizes: &[usize],
    classes: usize,
    per_class: usize,
) -> Result<SyntheticStore, StoreError> {
    let d = spec.d;
    let mut rng = seeded(spec.seed);
    let entry_scale = 1.0 / (d as f64).sqrt();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut entities = BTreeMap::new();
    let mut relations = BTreeMap::new();
    let mut ground_truth = BTreeMap::new();
    let mut groups = BTreeMap::new();
    let mut dataset = Vec::new();
    let mut push_entity = |name: String, v: Vec<f64>, rows: &mut Vec<Vec<f64>>| {
        entities.insert(name, Entity { vector: v.clone(), first_token_id: rows.len() as u32 });
        rows.push(v);
    };

    let mut names = names.iter();
    for (g, &size) in group_sizes.iter().enumerate() {
        let a = normal_vec(&mut rng, d * d, entry_scale);
        let c = normal_vec(&mut rng, d, entry_scale);
        let dec = AffineDecoder::new(d, a, c).expect("finite");
        let centre = unit(&mut rng, d);
        let class_centres: Vec<Vec<f64>> = (0..classes).map(|_| normal_vec(&mut rng, d, entry_scale)).collect();
        let singleton = group_sizes.iter().all(|&n| n == 1);
        let mut objects = Vec::with_capacity(classes);
        for (k, z) in class_centres.iter().enumerate() {
            let o = dec.apply_unchecked(z);
            let oname = if singleton { format!("object {g}.{k}") } else { format!("group {g} object {k}") };
            push_entity(oname.clone(), o, &mut rows);
            objects.push(oname);
        }
        for _ in 0..size {
            let name = names.next().expect("one name per relation").clone();
            let rv = if singleton { centre.clone() } else { axpy(0.1, &unit(&mut rng, d), &centre) };
            relations.insert(name.clone(), rv);
            let mut samples = Vec::new();
            for (k, z) in class_centres.iter().enumerate() {
                for j in 0..per_class {
                    let jitter = normal_vec(&mut rng, d, spec.sigma * entry_scale);
                    let s = axpy(1.0, &jitter, z);
                    let sname = format!("{name} subject {}", k * per_class + j);
                    push_entity(sname.clone(), s, &mut rows);
                    samples.push(Sample::new(sname, objects[k].clone()));
                }
            }
            dataset.push(RelationRecord {
                name: name.clone(),
                prompt_templates: vec![format!("{{}} has {name}")],
                zs_prompt_templates: vec![format!("The {name} of {{}} is")],
                relation_type: format!("synthetic group {g}"),
                symmetric: false,
                samples,
            });
            ground_truth.insert(name.clone(), dec.clone());
            groups.insert(name, g);
        }
    }
    let (head, bias) = nearest_neighbour_head(&rows);
    let store = EmbeddingStore::new(d, 0, rows.len(), head, Some(bias), entities, relations)?;
    Ok(SyntheticStore { store, dataset, ground_truth, groups })
}
