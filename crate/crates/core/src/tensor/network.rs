//! Tensor networks: named nodes joined by bonds, contracted pairwise.
//!
//! Contraction follows the bond list left to right. When a bond joins two
//! different partial results, the two are multiplied through every bond they
//! share, so a schedule is fully described by an ordering of the bonds.
//! Bound free legs (see [`Binding`]) are absorbed into their node before any
//! bond is processed.
//!
//! [`network_vjp`] uses multilinearity: the gradient of `<G, contract(N)>` with
//! respect to node `X` is the contraction of `G` with every node except `X`,
//! leaving exactly `X`'s legs open.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;

use super::contract::contract_axes;
use super::{Leg, Result, Tensor, TensorError};

/// A leg of a named node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LegRef {
    pub node: String,
    pub leg: String,
}

impl LegRef {
    pub fn new(node: impl Into<String>, leg: impl Into<String>) -> Self {
        Self { node: node.into(), leg: leg.into() }
    }
}

impl fmt::Display for LegRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.leg)
    }
}

/// A vector fed into one free leg of a network.
#[derive(Debug, Clone, Copy)]
pub struct Binding<'b> {
    pub node: &'b str,
    pub leg: &'b str,
    pub values: &'b [f64],
}

impl<'b> Binding<'b> {
    pub fn new(node: &'b str, leg: &'b str, values: &'b [f64]) -> Self {
        Self { node, leg, values }
    }
}

/// Order in which bonds are contracted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Bonds in the order they were declared.
    #[default]
    BondOrder,
    /// A permutation of bond indices.
    Custom(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct NetworkSpec<'a> {
    nodes: Vec<(String, Cow<'a, Tensor>)>,
    bonds: Vec<(LegRef, LegRef)>,
    free_legs: Vec<LegRef>,
    // resolved (node index, leg index) for every bond end and free leg
    bond_idx: Vec<((usize, usize), (usize, usize))>,
    free_idx: Vec<(usize, usize)>,
}

#[derive(Debug, Default)]
pub struct NetworkBuilder<'a> {
    nodes: Vec<(String, Cow<'a, Tensor>)>,
    bonds: Vec<(LegRef, LegRef)>,
    free_legs: Vec<LegRef>,
}

impl<'a> NetworkBuilder<'a> {
    pub fn node(mut self, name: impl Into<String>, tensor: &'a Tensor) -> Self {
        self.nodes.push((name.into(), Cow::Borrowed(tensor)));
        self
    }

    pub fn node_owned(mut self, name: impl Into<String>, tensor: Tensor) -> Self {
        self.nodes.push((name.into(), Cow::Owned(tensor)));
        self
    }

    pub fn bond(mut self, a: (&str, &str), b: (&str, &str)) -> Self {
        self.bonds.push((LegRef::new(a.0, a.1), LegRef::new(b.0, b.1)));
        self
    }

    pub fn free(mut self, node: &str, leg: &str) -> Self {
        self.free_legs.push(LegRef::new(node, leg));
        self
    }

    pub fn build(self) -> Result<NetworkSpec<'a>> {
        NetworkSpec::new(self.nodes, self.bonds, self.free_legs)
    }
}

impl<'a> NetworkSpec<'a> {
    pub fn builder() -> NetworkBuilder<'a> {
        NetworkBuilder::default()
    }

    pub fn new(
        nodes: Vec<(String, Cow<'a, Tensor>)>,
        bonds: Vec<(LegRef, LegRef)>,
        free_legs: Vec<LegRef>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(TensorError::InvalidNetwork("network has no nodes".into()));
        }
        for (i, (name, _)) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|(n, _)| n == name) {
                return Err(TensorError::InvalidNetwork(format!("duplicate node name `{name}`")));
            }
        }
        let resolve = |r: &LegRef| -> Result<(usize, usize)> {
            let n = nodes
                .iter()
                .position(|(name, _)| *name == r.node)
                .ok_or_else(|| TensorError::UnknownNode(r.node.clone()))?;
            let l = nodes[n].1.leg_index(&r.leg).ok_or_else(|| TensorError::UnknownLeg(r.to_string()))?;
            Ok((n, l))
        };

        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut claim = |at: (usize, usize), r: &LegRef| -> Result<()> {
            if !seen.insert(at) {
                return Err(TensorError::InvalidNetwork(format!("leg {r} is used more than once")));
            }
            Ok(())
        };

        let mut bond_idx = Vec::with_capacity(bonds.len());
        for (a, b) in &bonds {
            let ia = resolve(a)?;
            let ib = resolve(b)?;
            if ia.0 == ib.0 {
                return Err(TensorError::InvalidNetwork(format!("bond {a} - {b} joins a node to itself")));
            }
            let da = nodes[ia.0].1.legs()[ia.1].dim;
            let db = nodes[ib.0].1.legs()[ib.1].dim;
            if da != db {
                return Err(TensorError::DimMismatch {
                    left: a.to_string(),
                    left_dim: da,
                    right: b.to_string(),
                    right_dim: db,
                });
            }
            claim(ia, a)?;
            claim(ib, b)?;
            bond_idx.push((ia, ib));
        }

        let mut free_idx = Vec::with_capacity(free_legs.len());
        for (k, r) in free_legs.iter().enumerate() {
            let at = resolve(r)?;
            claim(at, r)?;
            if free_legs[..k].iter().any(|o| o.leg == r.leg) {
                return Err(TensorError::InvalidNetwork(format!(
                    "free leg label `{}` appears on more than one free leg",
                    r.leg
                )));
            }
            free_idx.push(at);
        }

        for (n, (name, t)) in nodes.iter().enumerate() {
            for (l, leg) in t.legs().iter().enumerate() {
                if !seen.contains(&(n, l)) {
                    return Err(TensorError::InvalidNetwork(format!(
                        "leg {name}.{} is neither bonded nor free",
                        leg.label
                    )));
                }
            }
        }

        // connectivity over the bond graph
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &((a, _), (b, _)) in &bond_idx {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        if (1..nodes.len()).any(|n| find(&mut parent, n) != root) {
            return Err(TensorError::InvalidNetwork("bond graph is disconnected".into()));
        }

        Ok(Self { nodes, bonds, free_legs, bond_idx, free_idx })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.nodes.iter().map(|(n, t)| (n.as_str(), t.as_ref()))
    }

    pub fn node(&self, name: &str) -> Option<&Tensor> {
        self.nodes.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_ref())
    }

    pub fn bonds(&self) -> &[(LegRef, LegRef)] {
        &self.bonds
    }

    pub fn free_legs(&self) -> &[LegRef] {
        &self.free_legs
    }

    /// Free legs (label and dim) in declaration order.
    pub fn output_legs(&self) -> Vec<Leg> {
        self.free_idx.iter().map(|&(n, l)| self.nodes[n].1.legs()[l].clone()).collect()
    }

    /// Same wiring with one node's tensor replaced; shapes must be unchanged.
    pub fn with_node(&self, name: &str, tensor: Tensor) -> Result<NetworkSpec<'a>> {
        let pos = self
            .nodes
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| TensorError::UnknownNode(name.to_string()))?;
        if tensor.legs() != self.nodes[pos].1.legs() {
            return Err(TensorError::InvalidNetwork(format!(
                "replacement for `{name}` has legs {tensor}, expected {}",
                self.nodes[pos].1
            )));
        }
        let mut out = self.clone();
        out.nodes[pos].1 = Cow::Owned(tensor);
        Ok(out)
    }

    fn node_pos(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| TensorError::UnknownNode(name.to_string()))
    }

    /// Global edge id of every leg: bonds are `0..nb`, free legs are `nb..nb+nf`.
    fn edge_ids(&self) -> Vec<Vec<usize>> {
        let mut ids: Vec<Vec<usize>> =
            self.nodes.iter().map(|(_, t)| vec![usize::MAX; t.order()]).collect();
        for (e, &((na, la), (nb, lb))) in self.bond_idx.iter().enumerate() {
            ids[na][la] = e;
            ids[nb][lb] = e;
        }
        let nb = self.bond_idx.len();
        for (j, &(n, l)) in self.free_idx.iter().enumerate() {
            ids[n][l] = nb + j;
        }
        ids
    }

    fn bond_order(&self, schedule: &Schedule) -> Result<Vec<usize>> {
        match schedule {
            Schedule::BondOrder => Ok((0..self.bonds.len()).collect()),
            Schedule::Custom(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..self.bonds.len()).collect::<Vec<_>>() {
                    return Err(TensorError::InvalidNetwork(format!(
                        "schedule {order:?} is not a permutation of {} bonds",
                        self.bonds.len()
                    )));
                }
                Ok(order.clone())
            }
        }
    }

    /// Resolves bindings to free-leg positions, checking dims and duplicates.
    fn resolve_bindings(&self, bindings: &[Binding<'_>]) -> Result<Vec<(usize, Tensor)>> {
        let mut out: Vec<(usize, Tensor)> = Vec::with_capacity(bindings.len());
        for b in bindings {
            let j = self
                .free_legs
                .iter()
                .position(|r| r.node == b.node && r.leg == b.leg)
                .ok_or_else(|| TensorError::UnknownLeg(format!("{}.{} (not a free leg)", b.node, b.leg)))?;
            if out.iter().any(|(k, _)| *k == j) {
                return Err(TensorError::DuplicatePairing(format!("{}.{}", b.node, b.leg)));
            }
            let (n, l) = self.free_idx[j];
            let leg = &self.nodes[n].1.legs()[l];
            if b.values.len() != leg.dim {
                return Err(TensorError::BindingDim {
                    leg: format!("{}.{}", b.node, b.leg),
                    expected: leg.dim,
                    got: b.values.len(),
                });
            }
            out.push((j, Tensor::from_parts_unchecked(vec![leg.clone()], b.values.to_vec())));
        }
        Ok(out)
    }
}

/// A partial result: a tensor whose axes carry global edge ids.
struct Item<'t> {
    edges: Vec<usize>,
    tensor: Cow<'t, Tensor>,
}

fn merge<'t>(a: &Item<'_>, b: &Item<'_>) -> Item<'t> {
    let pairs: Vec<(usize, usize)> = a
        .edges
        .iter()
        .enumerate()
        .filter_map(|(ia, e)| b.edges.iter().position(|f| f == e).map(|ib| (ia, ib)))
        .collect();
    let tensor = contract_axes(&a.tensor, &b.tensor, &pairs);
    let mut edges: Vec<usize> =
        a.edges.iter().enumerate().filter(|(i, _)| !pairs.iter().any(|p| p.0 == *i)).map(|(_, e)| *e).collect();
    edges.extend(b.edges.iter().enumerate().filter(|(i, _)| !pairs.iter().any(|p| p.1 == *i)).map(|(_, e)| *e));
    Item { edges, tensor: Cow::Owned(tensor) }
}

/// Contracts every edge in `order`, then takes outer products of what is left
/// and permutes the result to `output` edge order.
fn run(mut items: Vec<Option<Item<'_>>>, order: &[usize], output: &[usize]) -> Tensor {
    for &e in order {
        let holders: Vec<usize> = items
            .iter()
            .enumerate()
            .filter_map(|(i, it)| it.as_ref().filter(|it| it.edges.contains(&e)).map(|_| i))
            .collect();
        if let [i, j] = holders[..] {
            let merged = merge(items[i].as_ref().unwrap(), items[j].as_ref().unwrap());
            items[i] = Some(merged);
            items[j] = None;
        }
    }
    let mut rest = items.into_iter().flatten();
    let mut acc = rest.next().expect("network has at least one item");
    for it in rest {
        acc = merge(&acc, &it);
    }
    let perm: Vec<usize> = output
        .iter()
        .map(|e| acc.edges.iter().position(|f| f == e).expect("output edge present"))
        .collect();
    debug_assert_eq!(perm.len(), acc.edges.len());
    acc.tensor.permute_axes(&perm)
}

/// Contracts the whole network with the default bond-order schedule.
pub fn contract_network(spec: &NetworkSpec<'_>, bindings: &[Binding<'_>]) -> Result<Tensor> {
    contract_network_with(spec, bindings, &Schedule::BondOrder)
}

/// Contracts the network; the result's legs are the unbound free legs in spec order.
pub fn contract_network_with(
    spec: &NetworkSpec<'_>,
    bindings: &[Binding<'_>],
    schedule: &Schedule,
) -> Result<Tensor> {
    let bound = spec.resolve_bindings(bindings)?;
    let bond_order = spec.bond_order(schedule)?;
    let ids = spec.edge_ids();
    let nb = spec.bonds.len();

    let mut items: Vec<Option<Item<'_>>> = spec
        .nodes
        .iter()
        .zip(&ids)
        .map(|((_, t), e)| Some(Item { edges: e.clone(), tensor: Cow::Borrowed(t.as_ref()) }))
        .collect();
    let mut order: Vec<usize> = Vec::with_capacity(bound.len() + nb);
    for (j, v) in bound {
        items.push(Some(Item { edges: vec![nb + j], tensor: Cow::Owned(v) }));
        order.push(nb + j);
    }
    order.extend(bond_order);

    let (legs, output) = unbound_outputs(spec, &order, nb);
    let t = run(items, &order, &output);
    Ok(Tensor::from_parts_unchecked(legs, t.into_data()))
}

fn unbound_outputs(spec: &NetworkSpec<'_>, order: &[usize], nb: usize) -> (Vec<Leg>, Vec<usize>) {
    let mut legs = Vec::new();
    let mut edges = Vec::new();
    for (j, &(n, l)) in spec.free_idx.iter().enumerate() {
        if !order.contains(&(nb + j)) {
            legs.push(spec.nodes[n].1.legs()[l].clone());
            edges.push(nb + j);
        }
    }
    (legs, edges)
}

/// Gradient of `<cotangent, contract_network(spec, bindings)>` with respect to node `wrt`.
///
/// The result has exactly the legs of `wrt`, in the same order.
pub fn network_vjp(
    spec: &NetworkSpec<'_>,
    cotangent: &Tensor,
    wrt: &str,
    bindings: &[Binding<'_>],
) -> Result<Tensor> {
    let target = spec.node_pos(wrt)?;
    let bound = spec.resolve_bindings(bindings)?;
    let ids = spec.edge_ids();
    let nb = spec.bonds.len();

    let mut order: Vec<usize> = bound.iter().map(|(j, _)| nb + j).collect();
    let (out_legs, out_edges) = unbound_outputs(spec, &order, nb);

    // cotangent must carry exactly the unbound output legs
    if cotangent.order() != out_legs.len() {
        return Err(TensorError::CotangentShape(format!(
            "cotangent has {} legs, output has {}",
            cotangent.order(),
            out_legs.len()
        )));
    }
    let mut cot_perm = Vec::with_capacity(out_legs.len());
    for leg in &out_legs {
        let p = cotangent
            .leg_index(&leg.label)
            .ok_or_else(|| TensorError::CotangentShape(format!("missing leg `{}`", leg.label)))?;
        if cotangent.legs()[p].dim != leg.dim {
            return Err(TensorError::CotangentShape(format!(
                "leg `{}` has dim {}, expected {}",
                leg.label,
                cotangent.legs()[p].dim,
                leg.dim
            )));
        }
        cot_perm.push(p);
    }
    let cot = cotangent.permute_axes(&cot_perm);

    let mut items: Vec<Option<Item<'_>>> = spec
        .nodes
        .iter()
        .zip(&ids)
        .enumerate()
        .map(|(n, ((_, t), e))| {
            (n != target).then(|| Item { edges: e.clone(), tensor: Cow::Borrowed(t.as_ref()) })
        })
        .collect();
    for (j, v) in bound {
        items.push(Some(Item { edges: vec![nb + j], tensor: Cow::Owned(v) }));
    }
    items.push(Some(Item { edges: out_edges.clone(), tensor: Cow::Owned(cot) }));

    order.extend(0..nb);
    order.extend(&out_edges);
    // edges touching the removed node stay open
    let open: Vec<usize> = ids[target].clone();
    order.retain(|e| !open.contains(e));

    let t = run(items, &order, &open);
    Ok(Tensor::from_parts_unchecked(spec.nodes[target].1.legs().to_vec(), t.into_data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(l0: &str, d0: usize, l1: &str, d1: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![Leg::new(l0, d0), Leg::new(l1, d1)], data).unwrap()
    }

    #[test]
    fn single_node_is_identity() {
        let a = mat("i", 2, "j", 2, vec![1., 2., 3., 4.]);
        let spec = NetworkSpec::builder().node("A", &a).free("A", "i").free("A", "j").build().unwrap();
        assert_eq!(contract_network(&spec, &[]).unwrap(), a);
    }

    #[test]
    fn free_order_controls_output() {
        let a = mat("i", 2, "j", 3, (0..6).map(f64::from).collect());
        let spec = NetworkSpec::builder().node("A", &a).free("A", "j").free("A", "i").build().unwrap();
        let out = contract_network(&spec, &[]).unwrap();
        assert_eq!(out.dims(), vec![3, 2]);
        assert_eq!(out.get(&[2, 1]), a.get(&[1, 2]));
    }

    #[test]
    fn rejects_disconnected_and_dangling() {
        let a = mat("i", 2, "j", 2, vec![0.0; 4]);
        let b = mat("k", 2, "l", 2, vec![0.0; 4]);
        let err = NetworkSpec::builder()
            .node("A", &a)
            .node("B", &b)
            .free("A", "i")
            .free("A", "j")
            .free("B", "k")
            .free("B", "l")
            .build()
            .unwrap_err();
        assert_eq!(err, TensorError::InvalidNetwork("bond graph is disconnected".into()));

        let err = NetworkSpec::builder().node("A", &a).free("A", "i").build().unwrap_err();
        assert!(matches!(err, TensorError::InvalidNetwork(m) if m.contains("neither bonded nor free")));

        let err = NetworkSpec::builder()
            .node("A", &a)
            .node("B", &b)
            .bond(("A", "j"), ("B", "k"))
            .bond(("A", "j"), ("B", "l"))
            .free("A", "i")
            .build()
            .unwrap_err();
        assert!(matches!(err, TensorError::InvalidNetwork(m) if m.contains("more than once")));
    }

    #[test]
    fn rejects_bond_dim_mismatch() {
        let a = mat("i", 2, "j", 3, vec![0.0; 6]);
        let b = mat("k", 2, "l", 2, vec![0.0; 4]);
        let err = NetworkSpec::builder()
            .node("A", &a)
            .node("B", &b)
            .bond(("A", "j"), ("B", "k"))
            .free("A", "i")
            .free("B", "l")
            .build()
            .unwrap_err();
        assert!(matches!(err, TensorError::DimMismatch { left_dim: 3, right_dim: 2, .. }));
    }

    #[test]
    fn binding_checks_dimension() {
        let a = mat("i", 2, "j", 3, vec![0.0; 6]);
        let spec = NetworkSpec::builder().node("A", &a).free("A", "i").free("A", "j").build().unwrap();
        let v = [1.0, 2.0];
        let err = contract_network(&spec, &[Binding::new("A", "j", &v)]).unwrap_err();
        assert_eq!(err, TensorError::BindingDim { leg: "A.j".into(), expected: 3, got: 2 });
        let ok = contract_network(&spec, &[Binding::new("A", "i", &v)]).unwrap();
        assert_eq!(ok.dims(), vec![3]);
    }

    #[test]
    fn vjp_of_matrix_product() {
        // out = A B, d<G, AB>/dA = G B^T
        let a = mat("n", 2, "k", 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = mat("k", 3, "m", 2, vec![1., -1., 0.5, 2., 3., 0.]);
        let spec = NetworkSpec::builder()
            .node("A", &a)
            .node("B", &b)
            .bond(("A", "k"), ("B", "k"))
            .free("A", "n")
            .free("B", "m")
            .build()
            .unwrap();
        let g = mat("n", 2, "m", 2, vec![1., 2., -1., 0.5]);
        let grad = network_vjp(&spec, &g, "A", &[]).unwrap();
        assert_eq!(grad.legs(), a.legs());
        for n in 0..2 {
            for k in 0..3 {
                let expect: f64 = (0..2).map(|m| g.get(&[n, m]) * b.get(&[k, m])).sum();
                assert!((grad.get(&[n, k]) - expect).abs() < 1e-12);
            }
        }
        let zero = mat("m", 2, "n", 2, vec![0.0; 4]);
        let gz = network_vjp(&spec, &zero, "B", &[]).unwrap();
        assert!(gz.data().iter().all(|&x| x == 0.0));
        assert_eq!(gz.legs(), b.legs());
    }

    #[test]
    fn vjp_errors() {
        let a = mat("n", 2, "k", 3, vec![0.0; 6]);
        let spec = NetworkSpec::builder().node("A", &a).free("A", "n").free("A", "k").build().unwrap();
        let g = mat("n", 2, "q", 3, vec![0.0; 6]);
        assert!(matches!(network_vjp(&spec, &g, "A", &[]), Err(TensorError::CotangentShape(_))));
        let g = mat("n", 2, "k", 3, vec![0.0; 6]);
        assert_eq!(network_vjp(&spec, &g, "Z", &[]), Err(TensorError::UnknownNode("Z".into())));
    }

    #[test]
    fn vjp_with_bound_leg_is_outer_product() {
        // single node fully bound on one leg: grad = cot ⊗ v
        let a = mat("i", 2, "j", 3, vec![0.0; 6]);
        let spec = NetworkSpec::builder().node("A", &a).free("A", "i").free("A", "j").build().unwrap();
        let v = [1.0, 2.0, 3.0];
        let g = Tensor::vector("i", vec![10.0, -1.0]).unwrap();
        let grad = network_vjp(&spec, &g, "A", &[Binding::new("A", "j", &v)]).unwrap();
        assert_eq!(grad.data(), &[10.0, 20.0, 30.0, -1.0, -2.0, -3.0]);
    }
}
