use rand::Rng;
use relkit::baselines::{jacobian_lre, majority_baseline, select_subjects, FnTeacher, DEFAULT_STEP};
use relkit::dataset::{RelationRecord, Sample};
use relkit::eval::{faithfulness, mean_score, model_faithfulness};
use relkit::model::{init_model, ArchitectureConfig};
use relkit::rng::seeded;
use relkit::store::{gen_math_store, gen_orthogonal_store, write_store, SyntheticTeacherSpec};
use relkit::train::{dataset_loss, train, train_low_rank_baseline, OptimizerKind, TrainConfig};

fn one_sample(rel: &RelationRecord, k: usize) -> RelationRecord {
    RelationRecord { samples: vec![rel.samples[k].clone()], ..rel.clone() }
}

#[test]
fn identical_seeds_give_identical_loss_curves() {
    let s = gen_orthogonal_store(&SyntheticTeacherSpec::orthogonal(3, 5, 10, 1)).unwrap();
    let cfg = TrainConfig { iterations: 300, log_every: 10, seed: 4, ..Default::default() };
    let run = || {
        let m = init_model(ArchitectureConfig::triangle(10, 4, 3, 4, (3, 2, 3)).with_embedder(), 2).unwrap();
        train(m, &s.store, &s.dataset, &cfg).unwrap()
    };
    let (ma, ra) = run();
    let (mb, rb) = run();
    let bits = |r: &[relkit::train::LossRecord]| r.iter().map(|x| (x.iteration, x.loss.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ma.params(), mb.params());
}

#[test]
fn training_leaves_the_store_untouched() {
    let s = gen_math_store(&SyntheticTeacherSpec::math_ramp(8, 1, 0.1)).unwrap();
    let before = write_store(&s.store).unwrap();
    let m = init_model(ArchitectureConfig::simple(8, 4, 2, 4), 1).unwrap();
    train(m, &s.store, &s.dataset[..3], &TrainConfig { iterations: 50, ..Default::default() }).unwrap();
    assert_eq!(write_store(&s.store).unwrap(), before);
}

#[test]
fn one_small_step_descends() {
    for seed in 0..10 {
        let s = gen_orthogonal_store(&SyntheticTeacherSpec::orthogonal(2, 4, 8, seed)).unwrap();
        let data = vec![one_sample(&s.dataset[(seed % 2) as usize], (seed % 4) as usize)];
        let cfg = if seed % 2 == 0 {
            ArchitectureConfig::simple(8, 3, 2, 3)
        } else {
            ArchitectureConfig::triangle(8, 3, 2, 3, (2, 2, 2)).with_embedder()
        };
        let m = init_model(cfg, seed + 50).unwrap();
        let before = dataset_loss(&m, &s.store, &data).unwrap();
        let step = TrainConfig { learning_rate: 1e-6, batch_size: 1, iterations: 1, seed, plateau_window: 0, ..Default::default() };
        let (m, _) = train(m, &s.store, &data, &step).unwrap();
        let after = dataset_loss(&m, &s.store, &data).unwrap();
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn single_sample_is_memorized() {
    let s = gen_orthogonal_store(&SyntheticTeacherSpec::orthogonal(2, 5, 12, 3)).unwrap();
    let data = vec![one_sample(&s.dataset[1], 2)];
    let m = init_model(ArchitectureConfig::simple(12, 4, 2, 4), 3).unwrap();
    let start = dataset_loss(&m, &s.store, &data).unwrap();
    let cfg = TrainConfig { optimizer: OptimizerKind::Adam, learning_rate: 0.01, iterations: 400, plateau_window: 0, ..Default::default() };
    let (m, _) = train(m, &s.store, &data, &cfg).unwrap();
    assert!(dataset_loss(&m, &s.store, &data).unwrap() < 0.1 * start);
    assert_eq!(mean_score(&model_faithfulness(&m, &data, &s.store).unwrap()), 1.0);
}

#[test]
fn low_rank_decoder_fits_a_small_relation() {
    let s = gen_orthogonal_store(&SyntheticTeacherSpec::orthogonal(1, 4, 16, 6)).unwrap();
    let cfg = TrainConfig { optimizer: OptimizerKind::Adam, learning_rate: 0.01, iterations: 1500, seed: 2, ..Default::default() };
    let dec = train_low_rank_baseline(&s.dataset[0], 4, &s.store, &cfg).unwrap();
    assert_eq!(faithfulness(&dec, &s.dataset[0], &s.store).unwrap().score, 1.0);
}

/// `F(s) = A·s + c + eps·tanh(s)`, whose Jacobian at `s` is `A + eps·diag(1 − tanh²(s))`.
#[test]
fn jacobian_matches_analytic_derivative_of_a_perturbed_teacher() {
    let d = 6;
    let eps = 0.3;
    let mut rng = seeded(11);
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |s: &[f64]| -> Vec<f64> {
        (0..d).map(|o| c[o] + eps * s[o].tanh() + (0..d).map(|j| a[o * d + j] * s[j]).sum::<f64>()).collect()
    };
    let teacher = FnTeacher { d, f };
    let subjects: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    for n in 1..=4 {
        let dec = jacobian_lre(&teacher, &subjects, n, DEFAULT_STEP).unwrap();
        let mut w = a.clone();
        let mut b = vec![0.0; d];
        for s in &subjects[..n] {
            for o in 0..d {
                let sech2 = 1.0 - s[o].tanh().powi(2);
                w[o * d + o] += eps * sech2 / n as f64;
                b[o] += (c[o] + eps * s[o].tanh() - eps * sech2 * s[o]) / n as f64;
            }
        }
        for (x, y) in dec.weight().iter().zip(&w).chain(dec.bias().iter().zip(&b)) {
            assert!((x - y).abs() < 1e-7, "n={n}: {x} vs {y}");
        }
    }
}

#[test]
fn jacobian_ignores_subject_order() {
    let d = 4;
    let teacher = FnTeacher { d, f: |s: &[f64]| s.iter().map(|x| x.sin() + 0.5 * x * x).collect() };
    let subjects = vec![vec![0.1, -0.4, 0.9, 0.3], vec![1.2, 0.0, -0.7, 0.5], vec![-0.3, 0.8, 0.2, -1.1]];
    let mut reversed = subjects.clone();
    reversed.reverse();
    let a = jacobian_lre(&teacher, &subjects, 3, DEFAULT_STEP).unwrap();
    let b = jacobian_lre(&teacher, &reversed, 3, DEFAULT_STEP).unwrap();
    for (x, y) in a.weight().iter().zip(b.weight()).chain(a.bias().iter().zip(b.bias())) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn jacobian_of_the_exact_math_teacher_is_faithful() {
    let m = gen_math_store(&SyntheticTeacherSpec::math_ramp(16, 2, 0.0)).unwrap();
    for rel in m.dataset.iter().step_by(7) {
        let subjects: Vec<Vec<f64>> = select_subjects(rel, 5, 1).iter().map(|n| m.store.entity(n).unwrap().vector.clone()).collect();
        let dec = jacobian_lre(&m.ground_truth[&rel.name], &subjects, 5, DEFAULT_STEP).unwrap();
        assert_eq!(faithfulness(&dec, rel, &m.store).unwrap().score, 1.0, "{}", rel.name);
    }
}

#[test]
fn majority_share_is_in_unit_interval() {
    let m = gen_math_store(&SyntheticTeacherSpec::math_ramp(8, 1, 0.0)).unwrap();
    for rel in &m.dataset {
        let (_, f) = majority_baseline(rel);
        assert!(f > 0.0 && f < 1.0);
    }
    let same = RelationRecord { samples: (0..4).map(|i| Sample::new(format!("s{i}"), "x")).collect(), ..m.dataset[0].clone() };
    assert_eq!(majority_baseline(&same), ("x".to_string(), 1.0));
}
