//! Little-endian binary container shared by stores and model checkpoints.
//!
//! Every file starts with `"LREC"`, a `u32` version (1) and a `u32` section tag.
//! The store section continues with `d`, `layer_index`, `V` (all `u32`), a `u8`
//! bias flag, the `V·d` head, the optional `V` bias, then entities and relations.
//! The model section continues with the architecture config followed by the
//! named tensors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{EmbeddingStore, Entity, StoreError};
use crate::model::{ArchitectureConfig, ArchitectureKind, TensorNetworkModel};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"LREC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Store = 0,
    Model = 1,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Store => "STORE",
            Section::Model => "MODEL",
        }
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn name(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn header(&mut self, section: Section) {
        self.buf.extend_from_slice(MAGIC);
        self.u32(VERSION);
        self.u32(section as u32);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(StoreError::Truncated(what.to_string())),
        }
    }
    fn u8(&mut self, what: &str) -> Result<u8, StoreError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, StoreError> {
        let len = n.checked_mul(8).ok_or_else(|| StoreError::Truncated(what.to_string()))?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn name(&mut self, what: &str) -> Result<String, StoreError> {
        let n = self.u16(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| StoreError::Invalid(format!("{what} is not valid UTF-8")))
    }
    fn header(&mut self, expected: Section) -> Result<(), StoreError> {
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(StoreError::BadMagic(magic.try_into().unwrap()));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let tag = self.u32("section tag")?;
        if tag != expected as u32 {
            return Err(StoreError::WrongSection { expected: expected.name(), found: tag });
        }
        Ok(())
    }
    fn finish(&self) -> Result<(), StoreError> {
        if self.pos != self.bytes.len() {
            return Err(StoreError::Invalid(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32, StoreError> {
    u32::try_from(v).map_err(|_| StoreError::Invalid(format!("{what} {v} does not fit in u32")))
}

pub fn write_store(store: &EmbeddingStore) -> Result<Vec<u8>, StoreError> {
    store.validate()?;
    let mut w = Writer::default();
    w.header(Section::Store);
    w.u32(to_u32(store.d(), "d")?);
    w.u32(store.layer_index());
    w.u32(to_u32(store.vocab_size(), "vocab size")?);
    w.u8(store.head_bias().is_some() as u8);
    w.f64s(store.head_weights());
    if let Some(b) = store.head_bias() {
        w.f64s(b);
    }
    w.u32(to_u32(store.entities().len(), "entity count")?);
    for (name, e) in store.entities() {
        w.name(name);
        w.u32(e.first_token_id);
        w.f64s(&e.vector);
    }
    w.u32(to_u32(store.relations().len(), "relation count")?);
    for (name, r) in store.relations() {
        w.name(name);
        w.f64s(r);
    }
    Ok(w.buf)
}

pub fn read_store(bytes: &[u8]) -> Result<EmbeddingStore, StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(Section::Store)?;
    let d = r.u32("d")? as usize;
    let layer_index = r.u32("layer_index")?;
    let v = r.u32("vocab size")? as usize;
    let has_bias = match r.u8("head bias flag")? {
        0 => false,
        1 => true,
        other => return Err(StoreError::Invalid(format!("head bias flag is {other}"))),
    };
    let head = r.f64s(v * d, "head weights")?;
    let bias = if has_bias { Some(r.f64s(v, "head bias")?) } else { None };
    let n_ent = r.u32("entity count")?;
    let mut entities = BTreeMap::new();
    for _ in 0..n_ent {
        let name = r.name("entity name")?;
        let first_token_id = r.u32("entity token")?;
        let vector = r.f64s(d, "entity vector")?;
        if entities.insert(name.clone(), Entity { vector, first_token_id }).is_some() {
            return Err(StoreError::Invalid(format!("duplicate entity `{name}`")));
        }
    }
    let n_rel = r.u32("relation count")?;
    let mut relations = BTreeMap::new();
    for _ in 0..n_rel {
        let name = r.name("relation name")?;
        let vector = r.f64s(d, "relation vector")?;
        if relations.insert(name.clone(), vector).is_some() {
            return Err(StoreError::Invalid(format!("duplicate relation `{name}`")));
        }
    }
    r.finish()?;
    EmbeddingStore::new(d, layer_index, v, head, bias, entities, relations)
}

pub fn write_model(model: &TensorNetworkModel) -> Result<Vec<u8>, StoreError> {
    let c = model.config();
    let mut w = Writer::default();
    w.header(Section::Model);
    w.u8(match c.kind {
        ArchitectureKind::Simple => 0,
        ArchitectureKind::Triangle => 1,
    });
    let (x, y, z) = c.triangle_dims.unwrap_or((0, 0, 0));
    for (v, what) in [(c.d, "d"), (c.subject_dim, "d_s'"), (c.relation_dim, "d_r'"), (c.object_dim, "d_o'"), (x, "x"), (y, "y"), (z, "z")] {
        w.u32(to_u32(v, what)?);
    }
    w.u8(c.use_relation_embedder as u8);
    w.u32(to_u32(c.embedder_hidden_dims.len(), "embedder depth")?);
    for &h in &c.embedder_hidden_dims {
        w.u32(to_u32(h, "embedder width")?);
    }
    w.f64s(&[c.init_gain]);
    w.u32(to_u32(model.params().len(), "tensor count")?);
    for (name, t) in model.params() {
        w.name(name);
        w.u32(t.order() as u32);
        for dim in t.dims() {
            w.u32(to_u32(dim, "tensor dim")?);
        }
        w.f64s(t.data());
    }
    Ok(w.buf)
}

pub fn read_model(bytes: &[u8]) -> Result<TensorNetworkModel, StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(Section::Model)?;
    let kind = match r.u8("architecture kind")? {
        0 => ArchitectureKind::Simple,
        1 => ArchitectureKind::Triangle,
        other => return Err(StoreError::Invalid(format!("unknown architecture kind {other}"))),
    };
    let mut dims = [0usize; 7];
    for v in dims.iter_mut() {
        *v = r.u32("architecture dims")? as usize;
    }
    let use_relation_embedder = match r.u8("embedder flag")? {
        0 => false,
        1 => true,
        other => return Err(StoreError::Invalid(format!("embedder flag is {other}"))),
    };
    let n_hidden = r.u32("embedder depth")?;
    let mut embedder_hidden_dims = Vec::new();
    for _ in 0..n_hidden {
        embedder_hidden_dims.push(r.u32("embedder width")? as usize);
    }
    let init_gain = r.f64s(1, "init gain")?[0];
    let config = ArchitectureConfig {
        kind,
        d: dims[0],
        subject_dim: dims[1],
        relation_dim: dims[2],
        object_dim: dims[3],
        triangle_dims: (kind == ArchitectureKind::Triangle).then_some((dims[4], dims[5], dims[6])),
        use_relation_embedder,
        embedder_hidden_dims,
        init_gain,
    };
    config.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
    let layout = config.tensor_layout();
    let n = r.u32("tensor count")? as usize;
    if n != layout.len() {
        return Err(StoreError::Invalid(format!("expected {} tensors, found {n}", layout.len())));
    }
    let mut params = Vec::with_capacity(n);
    for (lname, legs) in layout {
        let name = r.name("tensor name")?;
        if name != lname {
            return Err(StoreError::Invalid(format!("expected tensor `{lname}`, found `{name}`")));
        }
        let order = r.u32("tensor order")? as usize;
        if order != legs.len() {
            return Err(StoreError::Invalid(format!("tensor `{name}` has order {order}, expected {}", legs.len())));
        }
        for leg in &legs {
            let dim = r.u32("tensor dims")? as usize;
            if dim != leg.dim {
                return Err(StoreError::Dimension { what: format!("leg `{}` of `{name}`", leg.label), expected: leg.dim, got: dim });
            }
        }
        let len = legs.iter().map(|l| l.dim).product();
        let data = r.f64s(len, "tensor data")?;
        params.push((name, Tensor::new(legs, data).map_err(|e| StoreError::Invalid(e.to_string()))?));
    }
    r.finish()?;
    TensorNetworkModel::from_params(config, params).map_err(|e| StoreError::Invalid(e.to_string()))
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), source }
}

/// Writes through a sibling temporary file so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = write_store(store)?;
    write_atomic(path, &bytes).map_err(|e| io_err(path, e))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    read_store(&bytes)
}

pub fn save_model(model: &TensorNetworkModel, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = write_model(model)?;
    write_atomic(path, &bytes).map_err(|e| io_err(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TensorNetworkModel, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    read_model(&bytes)
}
