use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relkit::baselines::{jacobian_lre, majority_baseline, select_subjects};
use relkit::dataset::{generate_math_dataset, load_dataset_json, save_dataset_json, split, RelationRecord, SplitMode};
use relkit::eval::report::{heatmap_svg, matrix_csv, table_csv, write_text};
use relkit::eval::{cross_evaluate, faithfulness, mean_score, model_faithfulness, FaithfulnessReport};
use relkit::model::{init_model, AffineDecoder, ArchitectureConfig, ArchitectureKind, TensorNetworkModel};
use relkit::store::{
    load_model, load_store, randomize_entity_embeddings, randomize_relation_embeddings, save_model,
    save_store, EmbeddingStore, SyntheticTeacherSpec,
};
use relkit::train::{grid_search, low_rank_sweep, train_decoder, GridSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, FileConfig};
use crate::manifest::{default_path, Recorder};
use crate::{
    AblateArgs, ArchFlag, CrossEvalArgs, DataFlags, DataKind, EmbedderChoice, EvalArgs, FitKind, GenDataArgs,
    GenStoreArgs, GridArgs, JacobianArgs, Randomize, SplitKind, StoreKind, SynthFlags, TrainArgs,
};

fn kind_of(a: ArchFlag) -> ArchitectureKind {
    match a {
        ArchFlag::Simple => ArchitectureKind::Simple,
        ArchFlag::Triangle => ArchitectureKind::Triangle,
    }
}

fn no_config_seed(flag: Option<u64>) -> Result<u64> {
    config::resolve_seed(flag, &FileConfig::default())
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut rec = Recorder::new("gen-data");
    let ds = match a.kind {
        DataKind::Math => generate_math_dataset(a.number_max)?,
    };
    save_dataset_json(&ds, &a.out)?;
    rec.output(&a.out);
    println!("wrote {} relations to {}", ds.len(), a.out.display());
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), json!({ "kind": "math", "number_max": a.number_max }), json!({}))
}

fn synth_spec(f: &SynthFlags, seed: u64) -> SyntheticTeacherSpec {
    match f.kind {
        StoreKind::Mathramp => SyntheticTeacherSpec::math_ramp(f.d, seed, f.sigma.unwrap_or(0.0)),
        StoreKind::Orthogonal => {
            let mut s = SyntheticTeacherSpec::orthogonal(f.relations, f.samples, f.d, seed);
            s.sigma = f.sigma.unwrap_or(0.0);
            s
        }
        StoreKind::Shared => {
            SyntheticTeacherSpec::shared_property(f.groups.clone(), f.classes, f.per_class, f.d, seed, f.sigma.unwrap_or(0.1))
        }
    }
}

pub fn gen_store(a: GenStoreArgs) -> Result<()> {
    let mut rec = Recorder::new("gen-store");
    let seed = no_config_seed(a.synth.seed)?;
    let spec = synth_spec(&a.synth, seed);
    let s = relkit::store::gen_store(&spec)?;
    let data_out = a.data_out.clone().unwrap_or_else(|| a.out.with_extension("json"));
    if data_out == a.out {
        bail!("dataset path {} would overwrite the store", data_out.display());
    }
    save_store(&s.store, &a.out)?;
    save_dataset_json(&s.dataset, &data_out)?;
    rec.output(&a.out);
    rec.output(&data_out);
    println!(
        "wrote store (d={}, {} entities, {} relations) to {} and dataset to {}",
        s.store.d(),
        s.store.entities().len(),
        s.dataset.len(),
        a.out.display(),
        data_out.display()
    );
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), &spec, json!({ "seed": seed }))
}

struct Loaded {
    store: EmbeddingStore,
    train: Vec<RelationRecord>,
    heldout: Vec<RelationRecord>,
}

fn load_inputs(f: &DataFlags, seed: u64, rec: &mut Recorder) -> Result<Loaded> {
    let store = load_store(&f.store).with_context(|| format!("loading store {}", f.store.display()))?;
    let data = load_dataset_json(&f.data).with_context(|| format!("loading dataset {}", f.data.display()))?;
    rec.input(&f.store);
    rec.input(&f.data);
    let (train, heldout) = match f.split {
        SplitKind::None => (data, Vec::new()),
        SplitKind::Relation | SplitKind::Sample => {
            let mode = if f.split == SplitKind::Relation { SplitMode::RelationWise } else { SplitMode::SampleWise };
            let sp = split(&data, mode, f.ratio, seed)?;
            (sp.train, sp.test)
        }
    };
    Ok(Loaded { store, train, heldout })
}

fn check_dims(model: &TensorNetworkModel, store: &EmbeddingStore) -> Result<()> {
    if model.config().d != store.d() {
        bail!("model dimension d={} does not match store dimension d={}", model.config().d, store.d());
    }
    Ok(())
}

#[derive(Serialize)]
struct RelationRow {
    relation: String,
    split: &'static str,
    n_samples: usize,
    n_correct: usize,
    faithfulness: f64,
    majority_object: String,
    majority_faithfulness: f64,
}

fn relation_rows(reports: &[FaithfulnessReport], data: &[RelationRecord], split: &'static str) -> Vec<RelationRow> {
    reports
        .iter()
        .zip(data)
        .map(|(r, rel)| {
            let (majority_object, majority_faithfulness) = majority_baseline(rel);
            RelationRow {
                relation: r.relation.clone(),
                split,
                n_samples: r.n_samples,
                n_correct: r.n_correct,
                faithfulness: r.score,
                majority_object,
                majority_faithfulness,
            }
        })
        .collect()
}

fn mean_majority(data: &[RelationRecord]) -> Option<f64> {
    (!data.is_empty()).then(|| data.iter().map(|r| majority_baseline(r).1).sum::<f64>() / data.len() as f64)
}

#[derive(Serialize)]
struct LossRow {
    iteration: usize,
    loss: f64,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut rec = Recorder::new("train");
    let file = config::load(a.config.as_deref())?;
    if let Some(p) = &a.config {
        rec.input(p);
    }
    let seed = config::resolve_seed(a.seed, &file)?;
    let cfg = a.train.resolve(&file.train, seed);
    let loaded = load_inputs(&a.data, seed, &mut rec)?;
    let d = loaded.store.d();

    let m = &file.model;
    let (ds, dr, dobj) = (a.ds.or(m.ds).unwrap_or(32), a.dr.or(m.dr).unwrap_or(4), a.dobj.or(m.dobj).unwrap_or(32));
    let kind = a.arch.map(kind_of).or(m.arch).unwrap_or(ArchitectureKind::Simple);
    let mut arch = match kind {
        ArchitectureKind::Simple => ArchitectureConfig::simple(d, ds, dr, dobj),
        ArchitectureKind::Triangle => ArchitectureConfig::triangle(d, ds, dr, dobj, a.xyz.or(m.xyz).unwrap_or((50, 50, 50))),
    };
    if a.embedder || m.embedder.unwrap_or(false) {
        arch = arch.with_embedder();
    }
    if let Some(g) = m.init_gain {
        arch.init_gain = g;
    }

    let model = init_model(arch.clone(), seed)?;
    let (model, records) = relkit::train::train(model, &loaded.store, &loaded.train, &cfg)?;
    save_model(&model, &a.out)?;
    rec.output(&a.out);

    let train_reports = model_faithfulness(&model, &loaded.train, &loaded.store)?;
    let heldout_reports = model_faithfulness(&model, &loaded.heldout, &loaded.store)?;
    if let Some(p) = &a.loss_csv {
        let rows: Vec<LossRow> = records.iter().map(|r| LossRow { iteration: r.iteration, loss: r.loss }).collect();
        write_text(p, &table_csv(&rows)?)?;
        rec.output(p);
    }
    if let Some(p) = &a.report {
        let mut rows = relation_rows(&train_reports, &loaded.train, "train");
        rows.extend(relation_rows(&heldout_reports, &loaded.heldout, "heldout"));
        write_text(p, &table_csv(&rows)?)?;
        rec.output(p);
    }
    let summary = json!({
        "param_count": model.param_count().total,
        "iterations_run": records.last().map_or(0, |r| r.iteration),
        "final_loss": records.last().map(|r| r.loss),
        "train_relations": loaded.train.len(),
        "heldout_relations": loaded.heldout.len(),
        "train_faithfulness": mean_score(&train_reports),
        "heldout_faithfulness": (!heldout_reports.is_empty()).then(|| mean_score(&heldout_reports)),
        "heldout_majority_baseline": mean_majority(&loaded.heldout),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let config = json!({ "model": arch, "train": cfg, "split": a.data.split, "ratio": a.data.ratio });
    rec.finish(
        &default_path(a.manifest.as_deref(), &a.out),
        config,
        json!({ "seed": seed, "model_init": seed, "minibatch": seed, "split": seed }),
    )
}

pub fn grid(a: GridArgs) -> Result<()> {
    let mut rec = Recorder::new("grid");
    let file = config::load(a.config.as_deref())?;
    if let Some(p) = &a.config {
        rec.input(p);
    }
    let seed = config::resolve_seed(a.seed, &file)?;
    let cfg = a.train.resolve(&file.train, seed);
    let loaded = load_inputs(&a.data, seed, &mut rec)?;
    let kinds = if a.kinds.is_empty() {
        vec![ArchitectureKind::Simple, ArchitectureKind::Triangle]
    } else {
        a.kinds.iter().copied().map(kind_of).collect()
    };
    let embedder = match a.embedder {
        EmbedderChoice::Off => vec![false],
        EmbedderChoice::On => vec![true],
        EmbedderChoice::Both => vec![false, true],
    };
    let spec = GridSpec {
        kinds,
        relation_dims: a.dr.clone(),
        subject_object_dims: a.dso.clone(),
        embedder,
        triangle_dims: a.xyz,
        train: cfg.clone(),
        model_seed: seed,
    };
    let heldout = (!loaded.heldout.is_empty()).then_some(loaded.heldout.as_slice());
    let rows = grid_search(&spec, &loaded.store, &loaded.train, heldout, a.jobs);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    write_text(&a.out, &table_csv(&rows)?)?;
    rec.output(&a.out);
    println!("{} grid rows written to {} ({failed} failed)", rows.len(), a.out.display());
    if let Some(ranks) = &a.low_rank {
        let lr_rows = low_rank_sweep(ranks, &loaded.store, &loaded.train, &cfg, a.jobs);
        let path = a.low_rank_out.clone().unwrap_or_else(|| sibling(&a.out, "low_rank.csv"));
        write_text(&path, &table_csv(&lr_rows)?)?;
        rec.output(&path);
        println!("{} low-rank rows written to {}", lr_rows.len(), path.display());
    }
    let config = json!({ "grid": spec, "split": a.data.split, "ratio": a.data.ratio, "jobs": a.jobs, "low_rank": a.low_rank });
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), config, json!({ "seed": seed }))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut rec = Recorder::new("eval");
    let store = load_store(&a.store).with_context(|| format!("loading store {}", a.store.display()))?;
    let data = load_dataset_json(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    for p in [&a.store, &a.data, &a.model] {
        rec.input(p);
    }
    check_dims(&model, &store)?;
    let reports = model_faithfulness(&model, &data, &store)?;
    write_text(&a.out, &table_csv(&relation_rows(&reports, &data, "all"))?)?;
    rec.output(&a.out);
    println!("mean faithfulness {:.6} over {} relations", mean_score(&reports), reports.len());
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), json!({}), json!({}))
}

pub fn cross_eval(a: CrossEvalArgs) -> Result<()> {
    let mut rec = Recorder::new("cross-eval");
    let file = config::load(a.config.as_deref())?;
    if let Some(p) = &a.config {
        rec.input(p);
    }
    let seed = config::resolve_seed(a.seed, &file)?;
    let store = load_store(&a.store).with_context(|| format!("loading store {}", a.store.display()))?;
    let data = load_dataset_json(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    rec.input(&a.store);
    rec.input(&a.data);
    let cfg = a.train.resolve(&file.train, seed);
    let decoders: Vec<(String, AffineDecoder)> = if let Some(path) = &a.model {
        let model = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
        rec.input(path);
        check_dims(&model, &store)?;
        data.iter()
            .map(|r| Ok((r.name.clone(), model.materialize_decoder(store.relation(&r.name)?)?)))
            .collect::<Result<_>>()?
    } else {
        let rank = match a.fit {
            Some(FitKind::LowRank) => Some(a.rank),
            _ => None,
        };
        data.iter().map(|r| Ok((r.name.clone(), train_decoder(r, &store, rank, &cfg)?.0))).collect::<Result<_>>()?
    };
    let m = cross_evaluate(&decoders, &data, &store)?;
    write_text(&a.csv, &matrix_csv(&m)?)?;
    rec.output(&a.csv);
    if let Some(p) = &a.svg {
        let shown = if a.cluster { m.reordered() } else { m.clone() };
        write_text(p, &heatmap_svg(&shown))?;
        rec.output(p);
    }
    println!("{}x{} matrix: mean diagonal {:.4}, mean off-diagonal {:.4}", m.k(), m.k(), m.mean_diagonal(), m.mean_off_diagonal());
    let source = match (&a.model, a.fit) {
        (Some(_), _) => json!("model"),
        (None, Some(FitKind::LowRank)) => json!({ "fit": "low-rank", "rank": a.rank, "train": cfg }),
        (None, _) => json!({ "fit": "full", "train": cfg }),
    };
    rec.finish(&default_path(a.manifest.as_deref(), &a.csv), json!({ "decoders": source, "cluster": a.cluster }), json!({ "seed": seed }))
}

#[derive(Serialize)]
struct JacobianRow {
    relation: String,
    n_examples: usize,
    subjects: String,
    faithfulness: f64,
    max_abs_error: f64,
}

pub fn jacobian(a: JacobianArgs) -> Result<()> {
    let mut rec = Recorder::new("jacobian");
    let seed = no_config_seed(a.synth.seed)?;
    let spec = synth_spec(&a.synth, seed);
    let s = relkit::store::gen_store(&spec)?;
    let mut rows = Vec::new();
    for rel in &s.dataset {
        let teacher = &s.ground_truth[&rel.name];
        let names = select_subjects(rel, a.n_examples, seed);
        if names.len() < a.n_examples {
            bail!("relation `{}` has {} samples, fewer than n_examples {}", rel.name, names.len(), a.n_examples);
        }
        let subjects: Vec<Vec<f64>> = names.iter().map(|n| Ok(s.store.entity(n)?.vector.clone())).collect::<Result<_>>()?;
        let dec = jacobian_lre(teacher, &subjects, a.n_examples, a.step)?;
        let max_abs_error = dec
            .weight()
            .iter()
            .zip(teacher.weight())
            .chain(dec.bias().iter().zip(teacher.bias()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        rows.push(JacobianRow {
            relation: rel.name.clone(),
            n_examples: a.n_examples,
            subjects: names.join(";"),
            faithfulness: faithfulness(&dec, rel, &s.store)?.score,
            max_abs_error,
        });
    }
    write_text(&a.out, &table_csv(&rows)?)?;
    rec.output(&a.out);
    let mean = rows.iter().map(|r| r.faithfulness).sum::<f64>() / rows.len().max(1) as f64;
    println!("mean Jacobian-decoder faithfulness {mean:.4} over {} relations", rows.len());
    let config = json!({ "teacher": spec, "n_examples": a.n_examples, "step": a.step });
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), config, json!({ "seed": seed }))
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut rec = Recorder::new("ablate");
    let seed = no_config_seed(a.seed)?;
    let store = load_store(&a.store).with_context(|| format!("loading store {}", a.store.display()))?;
    rec.input(&a.store);
    if a.out == a.store {
        bail!("refusing to overwrite the input store {}", a.store.display());
    }
    let out = match a.randomize {
        Randomize::Relations => randomize_relation_embeddings(&store, seed),
        Randomize::Entities => randomize_entity_embeddings(&store, seed),
    };
    save_store(&out, &a.out)?;
    rec.output(&a.out);
    println!("wrote store with randomized {} to {}", serde_json::to_value(a.randomize)?.as_str().unwrap_or(""), a.out.display());
    rec.finish(&default_path(a.manifest.as_deref(), &a.out), json!({ "randomize": a.randomize }), json!({ "seed": seed }))
}
