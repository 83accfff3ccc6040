//! Dense tensors with named legs.
//!
//! A [`Tensor`] is a flat row-major `f64` buffer together with an ordered list
//! of [`Leg`]s. Legs are addressed by label rather than position, so two
//! tensors can be contracted by naming the legs to pair up. Networks of
//! tensors and their reverse-mode gradients live in [`network`].

mod contract;
pub mod network;

use std::fmt;

use thiserror::Error;

pub use contract::contract_pair;
pub use network::{contract_network, contract_network_with, network_vjp, Binding, LegRef, NetworkSpec, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("leg `{0}` has dimension zero")]
    ZeroDim(String),
    #[error("duplicate leg label `{0}`")]
    DuplicateLabel(String),
    #[error("data length {got} does not match leg dims product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("unknown leg `{0}`")]
    UnknownLeg(String),
    #[error("dimension mismatch on `{left}` ({left_dim}) vs `{right}` ({right_dim})")]
    DimMismatch { left: String, left_dim: usize, right: String, right_dim: usize },
    #[error("leg `{0}` is paired more than once")]
    DuplicatePairing(String),
    #[error("contraction needs at least one leg pair")]
    EmptyPairing,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("binding for {leg} has length {got}, leg dimension is {expected}")]
    BindingDim { leg: String, expected: usize, got: usize },
    #[error("cotangent does not match network output: {0}")]
    CotangentShape(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// One axis of a tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Leg {
    pub label: String,
    pub dim: usize,
}

impl Leg {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.label, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    legs: Vec<Leg>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from legs and row-major data, checking every invariant.
    pub fn new(legs: Vec<Leg>, data: Vec<f64>) -> Result<Self> {
        check_legs(&legs)?;
        let expected = legs.iter().map(|l| l.dim).product::<usize>();
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, got: data.len() });
        }
        Ok(Self { legs, data })
    }

    pub fn zeros(legs: Vec<Leg>) -> Result<Self> {
        let n = legs.iter().map(|l| l.dim).product::<usize>();
        Self::new(legs, vec![0.0; n])
    }

    pub fn from_fn(legs: Vec<Leg>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_legs(&legs)?;
        let dims: Vec<usize> = legs.iter().map(|l| l.dim).collect();
        let n = dims.iter().product::<usize>();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, &dims);
        }
        Ok(Self { legs, data })
    }

    pub fn vector(label: impl Into<String>, data: Vec<f64>) -> Result<Self> {
        let leg = Leg::new(label, data.len());
        Self::new(vec![leg], data)
    }

    pub fn scalar(value: f64) -> Self {
        Self { legs: Vec::new(), data: vec![value] }
    }

    pub(crate) fn from_parts_unchecked(legs: Vec<Leg>, data: Vec<f64>) -> Self {
        debug_assert_eq!(legs.iter().map(|l| l.dim).product::<usize>(), data.len());
        Self { legs, data }
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.dim).collect()
    }

    pub fn order(&self) -> usize {
        self.legs.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn leg_index(&self, label: &str) -> Option<usize> {
        self.legs.iter().position(|l| l.label == label)
    }

    pub fn leg(&self, label: &str) -> Option<&Leg> {
        self.legs.iter().find(|l| l.label == label)
    }

    /// Row-major strides, one per leg.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.dims())
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.legs.len(), "index order mismatch");
        let mut off = 0;
        for (i, leg) in index.iter().zip(&self.legs) {
            assert!(*i < leg.dim, "index {i} out of range for {leg}");
            off = off * leg.dim + i;
        }
        self.data[off]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        assert_eq!(index.len(), self.legs.len(), "index order mismatch");
        let mut off = 0;
        for (i, leg) in index.iter().zip(&self.legs) {
            assert!(*i < leg.dim, "index {i} out of range for {leg}");
            off = off * leg.dim + i;
        }
        self.data[off] = value;
    }

    pub fn relabel(&mut self, from: &str, to: impl Into<String>) -> Result<()> {
        let to = to.into();
        let pos = self.leg_index(from).ok_or_else(|| TensorError::UnknownLeg(from.to_string()))?;
        if self.legs.iter().enumerate().any(|(i, l)| i != pos && l.label == to) {
            return Err(TensorError::DuplicateLabel(to));
        }
        self.legs[pos].label = to;
        Ok(())
    }

    /// Reorders the legs to match `labels`, moving data accordingly.
    pub fn permuted(&self, labels: &[&str]) -> Result<Tensor> {
        if labels.len() != self.legs.len() {
            return Err(TensorError::InvalidNetwork(format!(
                "permutation names {} legs, tensor has {}",
                labels.len(),
                self.legs.len()
            )));
        }
        let mut perm = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.leg_index(l).ok_or_else(|| TensorError::UnknownLeg(l.to_string()))?;
            if perm.contains(&p) {
                return Err(TensorError::DuplicateLabel(l.to_string()));
            }
            perm.push(p);
        }
        Ok(self.permute_axes(&perm))
    }

    /// `perm[k]` is the old axis that becomes new axis `k`.
    pub(crate) fn permute_axes(&self, perm: &[usize]) -> Tensor {
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let old_strides = self.strides();
        let legs: Vec<Leg> = perm.iter().map(|&p| self.legs[p].clone()).collect();
        let dims: Vec<usize> = legs.iter().map(|l| l.dim).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; dims.len()];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            // odometer over the new layout, tracking the source offset
            for ax in (0..dims.len()).rev() {
                idx[ax] += 1;
                off += src_strides[ax];
                if idx[ax] < dims[ax] {
                    break;
                }
                off -= src_strides[ax] * dims[ax];
                idx[ax] = 0;
            }
        }
        Tensor { legs, data }
    }

    pub fn scaled(&self, alpha: f64) -> Tensor {
        Tensor { legs: self.legs.clone(), data: self.data.iter().map(|x| alpha * x).collect() }
    }

    /// Elementwise sum with legs matched by label; result uses `self`'s leg order.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let other = self.align(other)?;
        let data = self.data.iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor { legs: self.legs.clone(), data })
    }

    /// Frobenius inner product with legs matched by label.
    pub fn inner(&self, other: &Tensor) -> Result<f64> {
        let other = self.align(other)?;
        Ok(self.data.iter().zip(other.data()).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `other` permuted into `self`'s leg order, after checking labels and dims agree.
    pub fn align(&self, other: &Tensor) -> Result<Tensor> {
        if other.order() != self.order() {
            return Err(TensorError::InvalidNetwork(format!(
                "order mismatch: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        for leg in &self.legs {
            let o = other.leg(&leg.label).ok_or_else(|| TensorError::UnknownLeg(leg.label.clone()))?;
            if o.dim != leg.dim {
                return Err(TensorError::DimMismatch {
                    left: leg.label.clone(),
                    left_dim: leg.dim,
                    right: o.label.clone(),
                    right_dim: o.dim,
                });
            }
        }
        let labels: Vec<&str> = self.legs.iter().map(|l| l.label.as_str()).collect();
        other.permuted(&labels)
    }

    /// Largest entrywise relative difference, `|a-b| / max(|a|,|b|,floor)`.
    pub fn max_rel_diff(&self, other: &Tensor, floor: f64) -> Result<f64> {
        let other = self.align(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f64::max))
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(")?;
        for (i, l) in self.legs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

fn check_legs(legs: &[Leg]) -> Result<()> {
    for (i, leg) in legs.iter().enumerate() {
        if leg.dim == 0 {
            return Err(TensorError::ZeroDim(leg.label.clone()));
        }
        if legs[..i].iter().any(|l| l.label == leg.label) {
            return Err(TensorError::DuplicateLabel(leg.label.clone()));
        }
    }
    Ok(())
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn increment(idx: &mut [usize], dims: &[usize]) {
    for ax in (0..dims.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < dims[ax] {
            return;
        }
        idx[ax] = 0;
    }
}
