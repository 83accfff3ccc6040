//! Order-3 tensor networks that turn a relation embedding into an affine decoder.
//!
//! Two wirings are provided. The simple network has one core `T0` over the
//! inner subject, relation and object legs. The triangle network replaces it
//! by three cores `T1`, `T2`, `T3` joined in a cycle through auxiliary legs
//! `x`, `y`, `z`. In both cases projections `P1`, `P2`, `P3` connect the
//! inner legs to the `d`-dimensional embedding space.
//!
//! `P1` takes `d + 1` inputs: subjects are augmented with a trailing 1 so the
//! last row of the read-out matrix is the decoder bias.

pub(crate) mod embedder;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{normal_vec, seeded};
use crate::tensor::{contract_network, Binding, Leg, NetworkSpec, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("decoder has non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    Simple,
    Triangle,
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArchitectureKind::Simple => "simple",
            ArchitectureKind::Triangle => "triangle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub kind: ArchitectureKind,
    /// Embedding dimension of the language model.
    pub d: usize,
    pub subject_dim: usize,
    pub relation_dim: usize,
    pub object_dim: usize,
    /// `(x, y, z)` core dims; triangle only.
    pub triangle_dims: Option<(usize, usize, usize)>,
    pub use_relation_embedder: bool,
    /// Output widths of every embedder layer but the last, which always outputs `d`.
    pub embedder_hidden_dims: Vec<usize>,
    /// Multiplier on the `1/sqrt(fan_in)` initialization scale.
    pub init_gain: f64,
}

impl ArchitectureConfig {
    pub fn simple(d: usize, subject_dim: usize, relation_dim: usize, object_dim: usize) -> Self {
        Self {
            kind: ArchitectureKind::Simple,
            d,
            subject_dim,
            relation_dim,
            object_dim,
            triangle_dims: None,
            use_relation_embedder: false,
            embedder_hidden_dims: vec![d, d],
            init_gain: 1.0,
        }
    }

    pub fn triangle(
        d: usize,
        subject_dim: usize,
        relation_dim: usize,
        object_dim: usize,
        xyz: (usize, usize, usize),
    ) -> Self {
        Self { kind: ArchitectureKind::Triangle, triangle_dims: Some(xyz), ..Self::simple(d, subject_dim, relation_dim, object_dim) }
    }

    /// Enables the relation embedder with the default `(d, d, d)` widths.
    pub fn with_embedder(mut self) -> Self {
        self.use_relation_embedder = true;
        self.embedder_hidden_dims = vec![self.d, self.d];
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [("d", self.d), ("subject_dim", self.subject_dim), ("relation_dim", self.relation_dim), ("object_dim", self.object_dim)];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        match (self.kind, self.triangle_dims) {
            (ArchitectureKind::Triangle, None) => {
                return Err(ModelError::InvalidConfig("triangle network needs x, y, z dims".into()))
            }
            (ArchitectureKind::Triangle, Some((x, y, z))) if x == 0 || y == 0 || z == 0 => {
                return Err(ModelError::InvalidConfig("triangle dims must be at least 1".into()))
            }
            (ArchitectureKind::Simple, Some(_)) => {
                return Err(ModelError::InvalidConfig("simple network takes no triangle dims".into()))
            }
            _ => {}
        }
        if self.use_relation_embedder && self.embedder_hidden_dims.contains(&0) {
            return Err(ModelError::InvalidConfig("embedder widths must be at least 1".into()));
        }
        if !(self.init_gain.is_finite() && self.init_gain >= 0.0) {
            return Err(ModelError::InvalidConfig("init_gain must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Names and legs of every stored tensor, in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<Leg>)> {
        let (d, ds, dr, dob) = (self.d, self.subject_dim, self.relation_dim, self.object_dim);
        let mut out = vec![
            ("P1".to_string(), vec![Leg::new("s", d + 1), Leg::new("s'", ds)]),
            ("P2".to_string(), vec![Leg::new("r", d), Leg::new("r'", dr)]),
            ("P3".to_string(), vec![Leg::new("o", d), Leg::new("o'", dob)]),
        ];
        match (self.kind, self.triangle_dims) {
            (ArchitectureKind::Triangle, Some((x, y, z))) => {
                out.push(("T1".into(), vec![Leg::new("s'", ds), Leg::new("y", y), Leg::new("z", z)]));
                out.push(("T2".into(), vec![Leg::new("x", x), Leg::new("r'", dr), Leg::new("z", z)]));
                out.push(("T3".into(), vec![Leg::new("x", x), Leg::new("y", y), Leg::new("o'", dob)]));
            }
            _ => out.push(("T0".into(), vec![Leg::new("s'", ds), Leg::new("r'", dr), Leg::new("o'", dob)])),
        }
        if self.use_relation_embedder {
            for (i, (fan_in, fan_out)) in embedder::layer_shapes(d, &self.embedder_hidden_dims).into_iter().enumerate() {
                let (wn, bn) = embedder::layer_names(i);
                out.push((wn, vec![Leg::new("out", fan_out), Leg::new("in", fan_in)]));
                out.push((bn, vec![Leg::new("out", fan_out)]));
            }
        }
        out
    }
}

/// Parameter counts, split so the closed-form formula can be compared against
/// what is actually stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    /// `d·d_s' + d·d_r' + d·d_o'`.
    pub projections: usize,
    /// Core term of the closed-form formula: `d_s'·d_r'·d_o'`, times 3 for the triangle.
    pub cores_formula: usize,
    pub formula: usize,
    /// Scalars actually held by the cores.
    pub cores_actual: usize,
    /// Extra row of `P1` carrying the bias.
    pub bias_augmentation: usize,
    pub embedder: usize,
    /// Every stored scalar.
    pub total: usize,
}

pub fn param_count(config: &ArchitectureConfig) -> ParamCount {
    let (d, ds, dr, dob) = (config.d, config.subject_dim, config.relation_dim, config.object_dim);
    let projections = d * ds + d * dr + d * dob;
    let (cores_formula, cores_actual) = match (config.kind, config.triangle_dims) {
        (ArchitectureKind::Triangle, Some((x, y, z))) => (3 * ds * dr * dob, ds * y * z + x * dr * z + x * y * dob),
        (ArchitectureKind::Triangle, None) => (3 * ds * dr * dob, 0),
        (ArchitectureKind::Simple, _) => (ds * dr * dob, ds * dr * dob),
    };
    let bias_augmentation = ds;
    let embedder = if config.use_relation_embedder { embedder::param_count(d, &config.embedder_hidden_dims) } else { 0 };
    ParamCount {
        projections,
        cores_formula,
        formula: projections + cores_formula,
        cores_actual,
        bias_augmentation,
        embedder,
        total: projections + bias_augmentation + cores_actual + embedder,
    }
}

/// Parameters of `n_relations` independent dense `d×d` matrices.
pub fn stacked_dense_param_count(n_relations: usize, d: usize) -> usize {
    n_relations * d * d
}

/// `f(v) = W v + b` with `W` stored row-major (`w[o*d + s]`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDecoder {
    d: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl AffineDecoder {
    pub fn new(d: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self, ModelError> {
        if w.len() != d * d {
            return Err(ModelError::Dimension { what: "decoder matrix", expected: d * d, got: w.len() });
        }
        if b.len() != d {
            return Err(ModelError::Dimension { what: "decoder bias", expected: d, got: b.len() });
        }
        if !w.iter().chain(&b).all(|x| x.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(Self { d, w, b })
    }

    pub fn identity(d: usize) -> Self {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        Self { d, w, b: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weight(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        if v.len() != self.d {
            return Err(ModelError::Dimension { what: "subject vector", expected: self.d, got: v.len() });
        }
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|o| self.b[o] + self.w[o * d..(o + 1) * d].iter().zip(v).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

pub fn apply_decoder(dec: &AffineDecoder, v_s: &[f64]) -> Result<Vec<f64>, ModelError> {
    dec.apply(v_s)
}

/// A tensor-network model; parameters are kept in [`ArchitectureConfig::tensor_layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNetworkModel {
    config: ArchitectureConfig,
    params: Vec<(String, Tensor)>,
}

/// Node names of the subject and relation inputs in [`TensorNetworkModel::network_with_inputs`].
pub const SUBJECT_NODE: &str = "subject";
pub const RELATION_NODE: &str = "relation";

impl TensorNetworkModel {
    /// Draws every tensor i.i.d. from `N(0, (gain / sqrt(fan_in))²)`, `fan_in` being
    /// the dimension of the tensor's first (subject-side) leg. Embedder biases start at zero.
    pub fn init(config: ArchitectureConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = Vec::new();
        for (name, legs) in config.tensor_layout() {
            if name.starts_with('E') {
                continue;
            }
            let scale = config.init_gain / (legs[0].dim as f64).sqrt();
            let n: usize = legs.iter().map(|l| l.dim).product();
            let data = normal_vec(&mut rng, n, scale);
            params.push((name, Tensor::new(legs, data)?));
        }
        if config.use_relation_embedder {
            params.extend(embedder::init_layers(config.d, &config.embedder_hidden_dims, config.init_gain, &mut rng));
        }
        Ok(Self { config, params })
    }

    /// Builds a model from stored tensors, checking them against the config layout.
    pub fn from_params(config: ArchitectureConfig, params: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.tensor_layout();
        if layout.len() != params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, legs), (pname, t)) in layout.iter().zip(&params) {
            if name != pname || legs.as_slice() != t.legs() {
                return Err(ModelError::InvalidConfig(format!("tensor `{pname}` {t} does not match `{name}`")));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn stored_scalars(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.config)
    }

    /// Names of the tensors that take part in the contraction (not the embedder).
    pub fn network_param_names(&self) -> Vec<&str> {
        self.params.iter().map(|(n, _)| n.as_str()).filter(|n| !n.starts_with('E')).collect()
    }

    pub(crate) fn embedder_layers(&self) -> Vec<&Tensor> {
        self.params.iter().filter(|(n, _)| n.starts_with('E')).map(|(_, t)| t).collect()
    }

    /// Relation vector as fed to the relation leg (after the embedder, if any).
    pub fn embed_relation(&self, v_r: &[f64]) -> Result<Vec<f64>, ModelError> {
        if v_r.len() != self.config.d {
            return Err(ModelError::Dimension { what: "relation vector", expected: self.config.d, got: v_r.len() });
        }
        if self.config.use_relation_embedder {
            Ok(embedder::forward(&self.embedder_layers(), v_r).0)
        } else {
            Ok(v_r.to_vec())
        }
    }

    fn wire<'a>(&'a self, mut b: crate::tensor::network::NetworkBuilder<'a>) -> crate::tensor::network::NetworkBuilder<'a> {
        for (name, t) in &self.params {
            if !name.starts_with('E') {
                b = b.node(name.as_str(), t);
            }
        }
        b = b.bond(("P2", "r'"), (self.relation_core(), "r'"));
        match self.config.kind {
            ArchitectureKind::Simple => b
                .bond(("P1", "s'"), ("T0", "s'"))
                .bond(("T0", "o'"), ("P3", "o'")),
            ArchitectureKind::Triangle => b
                .bond(("P1", "s'"), ("T1", "s'"))
                .bond(("T1", "z"), ("T2", "z"))
                .bond(("T1", "y"), ("T3", "y"))
                .bond(("T2", "x"), ("T3", "x"))
                .bond(("T3", "o'"), ("P3", "o'")),
        }
    }

    fn relation_core(&self) -> &'static str {
        match self.config.kind {
            ArchitectureKind::Simple => "T0",
            ArchitectureKind::Triangle => "T2",
        }
    }

    /// The bare network with free legs `P1.s` (`d+1`), `P2.r` (`d`), `P3.o` (`d`).
    pub fn network(&self) -> NetworkSpec<'_> {
        self.wire(NetworkSpec::builder())
            .free("P1", "s")
            .free("P2", "r")
            .free("P3", "o")
            .build()
            .expect("model wiring is valid")
    }

    /// The network closed by an augmented subject node and a relation node; only `P3.o` stays free.
    pub fn network_with_inputs(&self, subject_aug: Vec<f64>, relation: Vec<f64>) -> Result<NetworkSpec<'_>, ModelError> {
        let d = self.config.d;
        if subject_aug.len() != d + 1 {
            return Err(ModelError::Dimension { what: "augmented subject", expected: d + 1, got: subject_aug.len() });
        }
        if relation.len() != d {
            return Err(ModelError::Dimension { what: "relation vector", expected: d, got: relation.len() });
        }
        let b = NetworkSpec::builder()
            .node_owned(SUBJECT_NODE, Tensor::vector("s", subject_aug)?)
            .node_owned(RELATION_NODE, Tensor::vector("r", relation)?)
            .bond((SUBJECT_NODE, "s"), ("P1", "s"))
            .bond((RELATION_NODE, "r"), ("P2", "r"));
        Ok(self.wire(b).free("P3", "o").build()?)
    }

    /// Contracts the relation leg with `v_r` (embedded first when enabled) and
    /// reads the `(d+1)×d` result out as `W` (first `d` rows, transposed) and `b` (last row).
    pub fn materialize_decoder(&self, v_r: &[f64]) -> Result<AffineDecoder, ModelError> {
        let r = self.embed_relation(v_r)?;
        let spec = self.network();
        let m = contract_network(&spec, &[Binding::new("P2", "r", &r)])?;
        let d = self.config.d;
        debug_assert_eq!(m.dims(), vec![d + 1, d]);
        let data = m.data();
        let mut w = vec![0.0; d * d];
        for s in 0..d {
            for o in 0..d {
                w[o * d + s] = data[s * d + o];
            }
        }
        let b = data[d * d..].to_vec();
        AffineDecoder::new(d, w, b)
    }
}

pub fn init_model(config: ArchitectureConfig, seed: u64) -> Result<TensorNetworkModel, ModelError> {
    TensorNetworkModel::init(config, seed)
}

pub fn materialize_decoder(model: &TensorNetworkModel, v_r: &[f64]) -> Result<AffineDecoder, ModelError> {
    model.materialize_decoder(v_r)
}

/// `v` with a trailing 1 appended.
pub fn augment(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(v);
    out.push(1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_shapes() {
        let m = init_model(ArchitectureConfig::simple(8, 2, 2, 2), 0).unwrap();
        let shape = |n: &str| m.param(n).unwrap().dims();
        assert_eq!(shape("T0"), vec![2, 2, 2]);
        assert_eq!(shape("P1"), vec![9, 2]);
        assert_eq!(shape("P2"), vec![8, 2]);
        assert_eq!(shape("P3"), vec![8, 2]);
        assert_eq!(m.stored_scalars(), m.param_count().total);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ArchitectureConfig::triangle(6, 3, 2, 3, (2, 2, 2)).with_embedder();
        let a = init_model(cfg.clone(), 5).unwrap();
        let b = init_model(cfg.clone(), 5).unwrap();
        let c = init_model(cfg, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn closed_form_counts() {
        let simple = param_count(&ArchitectureConfig::simple(4096, 300, 10, 300));
        assert_eq!(simple.formula, 3_398_560);
        let tri = param_count(&ArchitectureConfig::triangle(4096, 300, 10, 300, (50, 50, 50)));
        assert_eq!(tri.formula, 5_198_560);
        assert_eq!(stacked_dense_param_count(47, 4096), 788_529_152);
    }

    #[test]
    fn config_validation() {
        let mut c = ArchitectureConfig::simple(4, 2, 0, 2);
        assert!(c.validate().is_err());
        c.relation_dim = 1;
        assert!(c.validate().is_ok());
        c.kind = ArchitectureKind::Triangle;
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn zero_cores_give_zero_decoder() {
        let mut m = init_model(ArchitectureConfig::simple(3, 2, 2, 2), 1).unwrap();
        for (n, t) in m.params_mut() {
            if n == "T0" {
                t.data_mut().fill(0.0);
            }
        }
        let dec = m.materialize_decoder(&[1.0, 2.0, 3.0]).unwrap();
        assert!(dec.weight().iter().chain(dec.bias()).all(|&x| x == 0.0));
    }

    #[test]
    fn apply_identity_and_constant() {
        let id = AffineDecoder::identity(3);
        assert_eq!(id.apply(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let c = AffineDecoder::new(2, vec![0.0; 4], vec![7.0, 8.0]).unwrap();
        assert_eq!(c.apply(&[3.0, 4.0]).unwrap(), vec![7.0, 8.0]);
        assert!(matches!(c.apply(&[1.0]), Err(ModelError::Dimension { .. })));
        assert!(matches!(AffineDecoder::new(1, vec![f64::NAN], vec![0.0]), Err(ModelError::NonFinite)));
    }

    #[test]
    fn relation_vector_length_checked() {
        let m = init_model(ArchitectureConfig::simple(3, 2, 2, 2), 1).unwrap();
        assert!(matches!(m.materialize_decoder(&[1.0]), Err(ModelError::Dimension { .. })));
    }
}
