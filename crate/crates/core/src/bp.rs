//! Belief propagation on the double-layer norm network.
//!
//! Each site carries `Y[i] = T[i]† T[i]`, contracted over the physical index,
//! with every bond's ket and bra indices fused into one index of dimension
//! D² (ket index slower). A message `m(i→j)` is a vector on that fused
//! index, i.e. a vectorized D×D matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge_su::{SymmetricState, VidalState};
use crate::labels;
use crate::models::Operator;
use crate::tensor::{contract_network, contract_pair, find_path, DenseTensor, LogScalar, C64};
use crate::tngraph::{IndexedNetwork, LatticeGraph};

/// `Σ_p ket[p, ...] · conj(bra[p, ...])` with each bond's ket and bra
/// indices fused, ket slower. Labels other than bonds and the physical index
/// pass through from `ket`.
pub fn double_layer(ket: &DenseTensor, bra: &DenseTensor, graph: &LatticeGraph, site: usize) -> Result<DenseTensor> {
    let mut b = bra.conj();
    let bonds: Vec<usize> = graph.neighbors(site)?.iter().map(|&(_, bond)| bond).collect();
    for &bond in &bonds {
        b.relabel(labels::bond(bond), labels::bra(bond))?;
    }
    let mut y = contract_pair(ket, &b)?;
    for &bond in &bonds {
        y = y.fuse(labels::bond(bond), labels::bra(bond), labels::bond(bond))?;
    }
    Ok(y)
}

/// The norm network `⟨Ψ|Ψ⟩` of a symmetric-gauge state.
#[derive(Clone, Debug)]
pub struct DoubledNetwork {
    graph: LatticeGraph,
    phys_dim: usize,
    kets: Vec<DenseTensor>,
    nodes: Vec<DenseTensor>,
}

pub fn build_doubled(state: &SymmetricState) -> Result<DoubledNetwork> {
    let graph = state.graph().clone();
    let nodes = state
        .tensors()
        .par_iter()
        .enumerate()
        .map(|(s, t)| double_layer(t, t, &graph, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(DoubledNetwork {
        graph,
        phys_dim: state.phys_dim(),
        kets: state.tensors().to_vec(),
        nodes,
    })
}

impl DoubledNetwork {
    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn node(&self, site: usize) -> &DenseTensor {
        &self.nodes[site]
    }

    pub fn ket(&self, site: usize) -> &DenseTensor {
        &self.kets[site]
    }

    /// Fused (doubled) dimension of a bond.
    pub fn doubled_dim(&self, bond: usize) -> usize {
        let b = self.graph.bonds()[bond];
        self.nodes[b.a].dim_of(labels::bond(bond)).unwrap()
    }

    /// Doubled tensors of the insertion sites with the operator placed
    /// between the layers.
    pub fn inserted_nodes(&self, ins: &Insertion) -> Result<Vec<(usize, DenseTensor)>> {
        ins.validate(&self.graph, self.phys_dim)?;
        let d = self.phys_dim;
        let scratch = labels::scratch(0);
        match ins.sites[..] {
            [s] => {
                let o = DenseTensor::from_fn(vec![scratch, labels::phys(s)], vec![d, d], |x| ins.op[(x[0], x[1])])?;
                let mut ket = contract_pair(&o, &self.kets[s])?;
                ket.relabel(scratch, labels::phys(s))?;
                Ok(vec![(s, double_layer(&ket, &self.kets[s], &self.graph, s)?)])
            }
            [s0, s1] => {
                let dims = vec![d * d, d, d];
                let e0 = DenseTensor::from_fn(vec![labels::OPERATOR, scratch, labels::phys(s0)], dims.clone(), |x| {
                    let (p, q) = (x[0] / d, x[0] % d);
                    if x[1] == p && x[2] == q {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })?;
                let e1 = DenseTensor::from_fn(vec![labels::OPERATOR, scratch, labels::phys(s1)], dims, |x| {
                    let (p, q) = (x[0] / d, x[0] % d);
                    ins.op[(p * d + x[1], q * d + x[2])]
                })?;
                let mut out = Vec::with_capacity(2);
                for (s, e) in [(s0, e0), (s1, e1)] {
                    let mut ket = contract_pair(&e, &self.kets[s])?;
                    ket.relabel(scratch, labels::phys(s))?;
                    out.push((s, double_layer(&ket, &self.kets[s], &self.graph, s)?));
                }
                Ok(out)
            }
            _ => unreachable!("validated above"),
        }
    }
}

/// A local operator on one site or on the two ends of a bond. For two sites
/// the operator's first tensor factor acts on `sites[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    pub sites: Vec<usize>,
    pub op: Operator,
}

impl Insertion {
    pub fn new(sites: Vec<usize>, op: Operator) -> Self {
        Self { sites, op }
    }

    pub fn validate(&self, graph: &LatticeGraph, phys_dim: usize) -> Result<()> {
        for &s in &self.sites {
            if s >= graph.n_sites() {
                return Err(Error::UnknownSite {
                    site: s,
                    n_sites: graph.n_sites(),
                });
            }
        }
        let dim = match self.sites[..] {
            [_] => phys_dim,
            [a, b] => {
                graph.bond_between(a, b).ok_or(Error::NotBonded(a, b))?;
                phys_dim * phys_dim
            }
            _ => {
                return Err(Error::InvalidOperator(format!(
                    "{}-site insertions are not supported",
                    self.sites.len()
                )))
            }
        };
        if self.op.nrows() != dim || self.op.ncols() != dim {
            return Err(Error::InvalidOperator(format!(
                "operator is {}x{}, expected {dim}x{dim}",
                self.op.nrows(),
                self.op.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Iterations without a new best residual before damping is switched on.
    pub stall_window: usize,
    pub fallback_damping: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            damping: 0.0,
            tol: 1e-12,
            max_iters: 500,
            stall_window: 20,
            fallback_damping: 0.5,
        }
    }
}

/// Directed messages: id `2b` runs from `bond.a` to `bond.b`, id `2b + 1`
/// the other way. Each message is labelled by its bond.
#[derive(Clone, Debug)]
pub struct MessageSet {
    messages: Vec<DenseTensor>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Damping in effect when iteration stopped.
    pub damping: f64,
    pub residual_history: Vec<f64>,
}

/// Id of the message leaving `from` along `bond`.
pub fn directed_id(graph: &LatticeGraph, from: usize, bond: usize) -> usize {
    if graph.bonds()[bond].a == from {
        2 * bond
    } else {
        2 * bond + 1
    }
}

fn identity_message(bond: usize, dim: usize) -> DenseTensor {
    let d = (dim as f64).sqrt().round() as usize;
    DenseTensor::from_fn(vec![labels::bond(bond)], vec![dim], |x| {
        C64::new(if x[0] / d == x[0] % d { 1.0 } else { 0.0 }, 0.0)
    })
    .unwrap()
}

/// Scales to unit 2-norm with a real non-negative trace.
fn normalize_message(m: &mut DenseTensor, bond: usize) -> Result<()> {
    let n = m.norm();
    if !(n > 1e-300) || !n.is_finite() {
        return Err(Error::ZeroMessage(bond));
    }
    let d = (m.len() as f64).sqrt().round() as usize;
    let tr: C64 = (0..d).map(|k| m.data()[k * d + k]).sum();
    let phase = if tr.norm() > 1e-14 * n { tr.conj() / tr.norm() } else { C64::new(1.0, 0.0) };
    m.scale(phase / n);
    Ok(())
}

impl MessageSet {
    pub fn identity(net: &DoubledNetwork) -> Self {
        let messages = (0..2 * net.graph.bonds().len())
            .map(|id| identity_message(id / 2, net.doubled_dim(id / 2)))
            .collect();
        Self {
            messages,
            residual: f64::INFINITY,
            iterations: 0,
            converged: false,
            damping: 0.0,
            residual_history: Vec::new(),
        }
    }

    /// Messages implied by a Vidal state's bond weights: `diag(Λ)` on both
    /// directions of every bond, pairwise normalized.
    pub fn from_vidal(state: &VidalState) -> Result<Self> {
        let g = state.graph();
        let mut messages = Vec::with_capacity(2 * g.bonds().len());
        for b in 0..g.bonds().len() {
            let lam = state.lambda(b);
            let d = lam.len();
            let m = DenseTensor::from_fn(vec![labels::bond(b)], vec![d * d], |x| {
                if x[0] / d == x[0] % d {
                    C64::new(lam[x[0] / d], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })?;
            messages.push(m.clone());
            messages.push(m);
        }
        let mut set = Self {
            messages,
            residual: 0.0,
            iterations: 0,
            converged: true,
            damping: 0.0,
            residual_history: Vec::new(),
        };
        set.pair_normalize()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn message(&self, id: usize) -> &DenseTensor {
        &self.messages[id]
    }

    /// The message arriving at `to` from its neighbour across `bond`.
    pub fn incoming(&self, graph: &LatticeGraph, to: usize, bond: usize) -> &DenseTensor {
        let from = graph.bonds()[bond].other(to);
        &self.messages[directed_id(graph, from, bond)]
    }

    /// `Σ_x m(i→j)[x] m(j→i)[x]` on one bond.
    pub fn pair_product(&self, bond: usize) -> C64 {
        self.messages[2 * bond]
            .data()
            .iter()
            .zip(self.messages[2 * bond + 1].data())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Rescales both messages on every bond so that their product is 1.
    pub fn pair_normalize(&mut self) -> Result<()> {
        for bond in 0..self.messages.len() / 2 {
            let p = self.pair_product(bond);
            if p.norm() < 1e-300 {
                return Err(Error::ZeroMessage(bond));
            }
            let s = C64::new(1.0, 0.0) / p.sqrt();
            self.messages[2 * bond].scale(s);
            self.messages[2 * bond + 1].scale(s);
        }
        Ok(())
    }

    /// Largest 2-norm distance to `other` after both are brought to unit
    /// norm and real trace.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (id, (a, b)) in self.messages.iter().zip(&other.messages).enumerate() {
            let mut a = a.clone();
            let mut b = b.clone();
            normalize_message(&mut a, id / 2)?;
            normalize_message(&mut b, id / 2)?;
            let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum();
            worst = worst.max(d.sqrt());
        }
        Ok(worst)
    }
}

/// Node tensor of `site` contracted with every incoming message except the
/// one arriving across `skip`.
fn absorb_messages(
    net: &DoubledNetwork,
    msgs: &MessageSet,
    site: usize,
    node: &DenseTensor,
    skip: Option<usize>,
) -> Result<DenseTensor> {
    let mut t = node.clone();
    for &(_, b) in net.graph.neighbors(site)? {
        if Some(b) != skip {
            t = contract_pair(&t, msgs.incoming(&net.graph, site, b))?;
        }
    }
    Ok(t)
}

fn update_all(net: &DoubledNetwork, msgs: &MessageSet) -> Result<Vec<DenseTensor>> {
    (0..msgs.messages.len())
        .into_par_iter()
        .map(|id| {
            let bond = id / 2;
            let b = net.graph.bonds()[bond];
            let from = if id % 2 == 0 { b.a } else { b.b };
            let mut m = absorb_messages(net, msgs, from, &net.nodes[from], Some(bond))?;
            normalize_message(&mut m, bond)?;
            Ok(m)
        })
        .collect()
}

/// Residual of one synchronous update applied to `msgs`.
pub fn bp_residual(net: &DoubledNetwork, msgs: &MessageSet) -> Result<f64> {
    let next = MessageSet {
        messages: update_all(net, msgs)?,
        ..msgs.clone()
    };
    next.distance(msgs)
}

/// Synchronous BP iteration from `init` (identity messages when `None`).
///
/// Damping switches to `fallback_damping` when the residual has not reached
/// a new minimum for `stall_window` iterations. Non-convergence is reported
/// through `converged`, with the last messages returned.
pub fn bp_iterate(net: &DoubledNetwork, init: Option<&MessageSet>, opts: &BpOptions) -> Result<MessageSet> {
    if !(0.0..1.0).contains(&opts.damping) || !(0.0..1.0).contains(&opts.fallback_damping) {
        return Err(Error::InvalidArgument("damping must lie in [0, 1)".into()));
    }
    let mut msgs = match init {
        Some(m) => {
            if m.messages.len() != 2 * net.graph.bonds().len() {
                return Err(Error::InvalidArgument("message set does not match the network".into()));
            }
            for (id, t) in m.messages.iter().enumerate() {
                if t.len() != net.doubled_dim(id / 2) {
                    return Err(Error::DimensionMismatch {
                        label: labels::bond(id / 2),
                        left: net.doubled_dim(id / 2),
                        right: t.len(),
                    });
                }
            }
            m.clone()
        }
        None => MessageSet::identity(net),
    };
    for (id, m) in msgs.messages.iter_mut().enumerate() {
        normalize_message(m, id / 2)?;
    }
    msgs.residual_history.clear();
    msgs.converged = false;
    let mut damping = opts.damping;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let mut next = update_all(net, &msgs)?;
        if damping > 0.0 {
            for (id, (n, o)) in next.iter_mut().zip(&msgs.messages).enumerate() {
                let mixed: Vec<C64> = n
                    .data()
                    .iter()
                    .zip(o.data())
                    .map(|(a, b)| a * (1.0 - damping) + b * damping)
                    .collect();
                *n = DenseTensor::new(n.labels().to_vec(), n.dims().to_vec(), mixed)?;
                normalize_message(n, id / 2)?;
            }
        }
        let residual = next
            .iter()
            .zip(&msgs.messages)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        msgs.messages = next;
        iterations += 1;
        msgs.residual_history.push(residual);
        msgs.residual = residual;
        if residual < opts.tol {
            msgs.converged = true;
            break;
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall_window && damping == 0.0 {
                damping = opts.fallback_damping;
                since_best = 0;
            }
        }
    }
    msgs.iterations = iterations;
    msgs.damping = damping;
    msgs.pair_normalize()?;
    Ok(msgs)
}

/// `z_i`: the node contracted with all of its incoming messages.
pub fn site_factor(net: &DoubledNetwork, msgs: &MessageSet, site: usize) -> Result<C64> {
    let t = absorb_messages(net, msgs, site, &net.nodes[site], None)?;
    t.scalar_value()
        .ok_or_else(|| Error::InvalidNetwork(format!("site {site} has open indices")))
}

/// `log Z ≈ Σ_i log z_i` for pairwise-normalized messages.
pub fn bp_log_partition(net: &DoubledNetwork, msgs: &MessageSet) -> Result<f64> {
    let mut total = 0.0;
    for site in 0..net.graph.n_sites() {
        let z = site_factor(net, msgs, site)?;
        if !(z.re > 0.0) {
            return Err(Error::NonPositiveFactor { site, value: z.re });
        }
        total += z.norm().ln();
    }
    Ok(total)
}

/// Sub-network of the sites in `region` with every cut bond terminated by
/// the incoming message, and the operator inserted when given.
pub fn local_network(
    net: &DoubledNetwork,
    msgs: &MessageSet,
    region: &[usize],
    insertion: Option<&Insertion>,
) -> Result<IndexedNetwork> {
    let mut inserted = match insertion {
        Some(ins) => {
            if let Some(&s) = ins.sites.iter().find(|s| !region.contains(s)) {
                return Err(Error::InvalidCluster(format!("insertion site {s} lies outside the region")));
            }
            net.inserted_nodes(ins)?
        }
        None => Vec::new(),
    };
    let mut tensors = Vec::new();
    for &s in region {
        if s >= net.graph.n_sites() {
            return Err(Error::UnknownSite {
                site: s,
                n_sites: net.graph.n_sites(),
            });
        }
        let node = match inserted.iter().position(|x| x.0 == s) {
            Some(k) => inserted.swap_remove(k).1,
            None => net.nodes[s].clone(),
        };
        tensors.push(node);
        for &(nbr, b) in net.graph.neighbors(s)? {
            if !region.contains(&nbr) {
                tensors.push(msgs.incoming(&net.graph, s, b).clone());
            }
        }
    }
    IndexedNetwork::new(tensors)
}

/// Exact contraction of a local network to a scalar.
pub fn contract_local(local: &IndexedNetwork) -> Result<LogScalar> {
    let path = find_path(local, true)?;
    contract_network(local, &path)?
        .scalar()
        .ok_or_else(|| Error::InvalidNetwork("local network has open indices".into()))
}

/// BP estimate `o / z` of a one-site or nearest-neighbour operator.
pub fn bp_expectation(net: &DoubledNetwork, msgs: &MessageSet, ins: &Insertion) -> Result<C64> {
    let num = contract_local(&local_network(net, msgs, &ins.sites, Some(ins))?)?;
    let den = contract_local(&local_network(net, msgs, &ins.sites, None)?)?;
    if den.is_zero() || den.log_abs < -700.0 {
        return Err(Error::ZeroDenominator(format!("BP expectation on sites {:?}", ins.sites)));
    }
    Ok(num.div(&den).to_c64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{identity, kron, pauli_x, pauli_z};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn product_state_nodes_are_unit_scalars() {
        let g = LatticeGraph::build_lattice(&[2, 2], &[false, false]).unwrap();
        let up = vec![c(0.6), C64::new(0.0, 0.8)];
        let s = VidalState::product_state(&g, &vec![up; 4]).unwrap().to_symmetric();
        let net = build_doubled(&s).unwrap();
        for i in 0..4 {
            assert!((net.node(i).data()[0] - c(1.0)).norm() < 1e-15);
        }
        let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
        assert!(msgs.converged);
        assert!(bp_log_partition(&net, &msgs).unwrap().abs() < 1e-14);
        let z = bp_expectation(&net, &msgs, &Insertion::new(vec![1], pauli_z())).unwrap();
        assert!((z - c(0.36 - 0.64)).norm() < 1e-14);
    }

    #[test]
    fn real_tensors_give_real_nodes() {
        let g = LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SymmetricState::random(&g, 2, 2, 0.3, &mut rng).unwrap();
        let real: Vec<DenseTensor> = s
            .tensors()
            .iter()
            .map(|t| DenseTensor::new(t.labels().to_vec(), t.dims().to_vec(), t.data().iter().map(|z| c(z.re)).collect()).unwrap())
            .collect();
        let s = SymmetricState::new(g, 2, real).unwrap();
        let net = build_doubled(&s).unwrap();
        for i in 0..3 {
            assert!(net.node(i).data().iter().all(|z| z.im == 0.0));
        }
    }

    #[test]
    fn single_bond_converges_immediately() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = SymmetricState::random(&g, 2, 3, 0.2, &mut rng).unwrap();
        let net = build_doubled(&s).unwrap();
        let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
        assert!(msgs.converged);
        assert!(msgs.iterations <= 2);
        assert!((msgs.pair_product(0) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn identity_and_operator_validation() {
        let g = LatticeGraph::build_lattice(&[2, 2], &[false, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SymmetricState::random(&g, 2, 2, 0.5, &mut rng).unwrap();
        let net = build_doubled(&s).unwrap();
        let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
        let one = bp_expectation(&net, &msgs, &Insertion::new(vec![0, 1], identity(4))).unwrap();
        assert!((one - c(1.0)).norm() < 1e-12);
        let bad = Insertion::new(vec![0, 3], kron(&pauli_x(), &pauli_x()));
        assert!(bp_expectation(&net, &msgs, &bad).is_err());
        let bad = Insertion::new(vec![0], identity(4));
        assert!(bp_expectation(&net, &msgs, &bad).is_err());
    }

    #[test]
    fn messages_are_hermitian_psd() {
        let g = LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = SymmetricState::random(&g, 2, 2, 0.4, &mut rng).unwrap();
        let net = build_doubled(&s).unwrap();
        let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
        for id in 0..msgs.len() {
            let m = msgs.message(id);
            let mat = nalgebra::DMatrix::from_row_slice(2, 2, m.data());
            assert!((&mat - mat.adjoint()).norm() < 1e-10);
            let eig = mat.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e > -1e-10));
        }
    }
}
