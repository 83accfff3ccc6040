#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use relkit::rng::seeded;
use relkit::tensor::{contract_network_with, network_vjp, Leg, NetworkSpec, Schedule, Tensor};

pub struct RandomNetwork {
    pub nodes: Vec<(String, Tensor)>,
    pub bonds: Vec<((String, String), (String, String))>,
    pub free: Vec<(String, String)>,
}

fn uniform_tensor(rng: &mut impl Rng, legs: Vec<Leg>) -> Tensor {
    let n: usize = legs.iter().map(|l| l.dim).product();
    Tensor::new(legs, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A connected network of 2..=`max_nodes` nodes, every leg dimension in 1..=`max_dim`,
/// node order capped at 4, and at most three free legs.
pub fn random_network(seed: u64, max_nodes: usize, max_dim: usize) -> RandomNetwork {
    let mut rng = seeded(seed);
    let n = rng.random_range(2..=max_nodes);
    let mut legs: Vec<Vec<Leg>> = vec![Vec::new(); n];
    let mut bonds = Vec::new();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..rng.random_range(0..=2) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    for (k, (a, b)) in edges.into_iter().enumerate() {
        if legs[a].len() >= 4 || legs[b].len() >= 4 {
            continue;
        }
        let label = format!("b{k}");
        let dim = rng.random_range(1..=max_dim);
        legs[a].push(Leg::new(label.clone(), dim));
        legs[b].push(Leg::new(label.clone(), dim));
        bonds.push(((format!("n{a}"), label.clone()), (format!("n{b}"), label)));
    }
    let mut free = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for i in order {
        if free.len() < 3 && legs[i].len() < 4 && rng.random_bool(0.5) {
            let label = format!("f{}", free.len());
            legs[i].push(Leg::new(label.clone(), rng.random_range(1..=max_dim)));
            free.push((format!("n{i}"), label));
        }
    }
    let nodes = legs.into_iter().enumerate().map(|(i, l)| (format!("n{i}"), uniform_tensor(&mut rng, l))).collect();
    RandomNetwork { nodes, bonds, free }
}

impl RandomNetwork {
    pub fn spec(&self) -> NetworkSpec<'_> {
        let mut b = NetworkSpec::builder();
        for (name, t) in &self.nodes {
            b = b.node(name.clone(), t);
        }
        for ((na, la), (nb, lb)) in &self.bonds {
            b = b.bond((na, la), (nb, lb));
        }
        for (n, l) in &self.free {
            b = b.free(n, l);
        }
        b.build().unwrap()
    }

    pub fn with_node(&self, name: &str, t: Tensor) -> RandomNetwork {
        let nodes = self.nodes.iter().map(|(n, x)| (n.clone(), if n == name { t.clone() } else { x.clone() })).collect();
        RandomNetwork { nodes, bonds: self.bonds.clone(), free: self.free.clone() }
    }
}

/// Largest relative disagreement between bond-order, reversed and shuffled schedules.
pub fn schedule_disagreement(net: &RandomNetwork, seed: u64) -> f64 {
    let spec = net.spec();
    let nb = net.bonds.len();
    let reference = contract_network_with(&spec, &[], &Schedule::BondOrder).unwrap();
    let mut shuffled: Vec<usize> = (0..nb).collect();
    shuffled.shuffle(&mut seeded(seed ^ 0x5eed));
    let reversed: Vec<usize> = (0..nb).rev().collect();
    [reversed, shuffled]
        .into_iter()
        .map(|order| {
            let t = contract_network_with(&spec, &[], &Schedule::Custom(order)).unwrap();
            reference.max_rel_diff(&t, 1e-300).unwrap()
        })
        .fold(0.0, f64::max)
}

/// Largest relative error of `network_vjp` against central differences, over every node.
///
/// Entries whose gradient is tiny are compared against `floor` instead of themselves.
pub fn vjp_fd_error(net: &RandomNetwork, seed: u64, step: f64, floor: f64) -> f64 {
    let mut rng = seeded(seed ^ 0xfd);
    let spec = net.spec();
    let out = contract_network_with(&spec, &[], &Schedule::BondOrder).unwrap();
    let cot = uniform_tensor(&mut rng, out.legs().to_vec());
    let objective = |n: &RandomNetwork| {
        let y = contract_network_with(&n.spec(), &[], &Schedule::BondOrder).unwrap();
        cot.inner(&y).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (name, t) in &net.nodes {
        let g = network_vjp(&spec, &cot, name, &[]).unwrap();
        for i in 0..t.len() {
            let mut p = t.clone();
            p.data_mut()[i] += step;
            let fp = objective(&net.with_node(name, p));
            let mut m = t.clone();
            m.data_mut()[i] -= step;
            let fm = objective(&net.with_node(name, m));
            let fd = (fp - fm) / (2.0 * step);
            let an = g.data()[i];
            worst = worst.max((fd - an).abs() / an.abs().max(floor));
        }
    }
    worst
}

/// Dimensions `(i, j, k, l, m, n, o)` of the five-tensor example.
pub const FIVE_DIMS: [usize; 7] = [3, 2, 4, 3, 2, 5, 3];

/// `R_ij = Σ A_ik B_lno C_jklm D_mn E_o` as literal nested loops.
pub fn five_tensor_oracle(a: &Tensor, b: &Tensor, c: &Tensor, d: &Tensor, e: &Tensor) -> Vec<f64> {
    let [ni, nj, nk, nl, nm, nn, no] = FIVE_DIMS;
    let mut r = vec![0.0; ni * nj];
    for i in 0..ni {
        for j in 0..nj {
            let mut acc = 0.0;
            for k in 0..nk {
                for l in 0..nl {
                    for m in 0..nm {
                        for n in 0..nn {
                            for o in 0..no {
                                acc += a.get(&[i, k]) * b.get(&[l, n, o]) * c.get(&[j, k, l, m]) * d.get(&[m, n]) * e.get(&[o]);
                            }
                        }
                    }
                }
            }
            r[i * nj + j] = acc;
        }
    }
    r
}

/// The five tensors `A, B, C, D, E` with seeded uniform entries.
pub fn five_tensors(seed: u64) -> [Tensor; 5] {
    let [ni, nj, nk, nl, nm, nn, no] = FIVE_DIMS;
    let mut rng = seeded(seed);
    let l = |s: &str, n: usize| Leg::new(s, n);
    [
        uniform_tensor(&mut rng, vec![l("i", ni), l("k", nk)]),
        uniform_tensor(&mut rng, vec![l("l", nl), l("n", nn), l("o", no)]),
        uniform_tensor(&mut rng, vec![l("j", nj), l("k", nk), l("l", nl), l("m", nm)]),
        uniform_tensor(&mut rng, vec![l("m", nm), l("n", nn)]),
        uniform_tensor(&mut rng, vec![l("o", no)]),
    ]
}

/// Contracts the five tensors through the network engine with free legs `A.i`, `C.j`.
pub fn five_tensor_network(ts: &[Tensor; 5], schedule: &Schedule) -> Tensor {
    let [a, b, c, d, e] = ts;
    let spec = NetworkSpec::builder()
        .node("A", a)
        .node("B", b)
        .node("C", c)
        .node("D", d)
        .node("E", e)
        .bond(("A", "k"), ("C", "k"))
        .bond(("B", "l"), ("C", "l"))
        .bond(("C", "m"), ("D", "m"))
        .bond(("B", "n"), ("D", "n"))
        .bond(("B", "o"), ("E", "o"))
        .free("A", "i")
        .free("C", "j")
        .build()
        .unwrap();
    contract_network_with(&spec, &[], schedule).unwrap()
}
