//! Cluster contractions with BP boundary messages and their combination
//! into local observables.
//!
//! For a region `r`, `Z_r` contracts the doubled tensors of `r` with the
//! incoming messages on every cut bond, and `O_r = ⟨Ψ|Ô|Ψ⟩_r / Z_r`. Given
//! counting numbers `c(r)`:
//!
//! ```text
//!   product formula:  ⟨Ô⟩ ≈ Π_r O_r^{c(r)}
//!   sum formula:      ⟨Ô⟩ ≈ Σ_r c(r) O_r
//! ```

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::bp::{bp_log_partition, contract_local, local_network, site_factor, DoubledNetwork, Insertion, MessageSet};
use crate::clusters::{
    close_under_intersection, enumerate_loop_clusters, loop_poset, reduce_region, translation_class, Region, RegionPoset,
};
use crate::error::{Error, Result};
use crate::models::{Model, Operator};
use crate::tensor::{contract_pair, DenseTensor, LogScalar, C64};
use crate::tngraph::IndexedNetwork;

/// Ratios below this magnitude switch the product formula to the sum formula.
pub const PRODUCT_ZERO_TOL: f64 = 1e-14;

/// Exact value of the region's network with boundary messages, optionally
/// with an operator inserted.
pub fn cluster_contract(
    net: &DoubledNetwork,
    msgs: &MessageSet,
    sites: &[usize],
    insertion: Option<&Insertion>,
) -> Result<LogScalar> {
    contract_local(&local_network(net, msgs, sites, insertion)?)
}

fn ratio(num: LogScalar, den: LogScalar, sites: &[usize]) -> Result<C64> {
    if den.is_zero() {
        return Err(Error::ZeroDenominator(format!("cluster {sites:?}")));
    }
    Ok(num.div(&den).to_c64())
}

/// `O_r` for a single region containing the operator sites.
pub fn single_cluster_expectation(
    net: &DoubledNetwork,
    msgs: &MessageSet,
    ins: &Insertion,
    sites: &[usize],
) -> Result<C64> {
    let num = cluster_contract(net, msgs, sites, Some(ins))?;
    let den = cluster_contract(net, msgs, sites, None)?;
    ratio(num, den, sites)
}

/// Union of all generalized loops of at most `loop_size` sites around
/// `anchors`: the cluster used by the single-cluster method.
pub fn single_cluster_region(
    net: &DoubledNetwork,
    anchors: &[usize],
    loop_size: usize,
) -> Result<Region> {
    let loops = enumerate_loop_clusters(net.graph(), anchors, loop_size)?;
    let sites: Vec<usize> = loops.iter().flat_map(|r| r.sites.iter().copied()).collect();
    Ok(Region::new(sites, anchors.to_vec()))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionContribution {
    pub sites: Vec<usize>,
    pub counting: i64,
    pub ratio: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionEstimate {
    pub anchors: Vec<usize>,
    pub max_size: usize,
    pub product: C64,
    pub sum: C64,
    /// The product formula met a vanishing ratio and reports the sum formula.
    pub product_fallback: bool,
    pub regions: usize,
    pub contributions: Vec<RegionContribution>,
}

type PosetKey = (Vec<usize>, usize);

type RatioKey = (Vec<usize>, Vec<usize>, usize);

/// Site, cut-leg mask over its neighbour list, and the insertion (sites and
/// operator id) when the site carries part of the operator.
type NodeKey = (usize, u64, Option<(Vec<usize>, usize)>);

type InsertedNodes = Arc<Vec<(usize, DenseTensor)>>;

/// Memoized cluster evaluator for one state and message set.
///
/// Ratios are keyed by the reduced region, the insertion sites and the
/// operator, so regions differing only by dangling sites share one
/// contraction.
pub struct ClusterEstimator<'a> {
    net: &'a DoubledNetwork,
    msgs: &'a MessageSet,
    operators: Mutex<Vec<Operator>>,
    ratios: Mutex<HashMap<RatioKey, C64>>,
    norms: Mutex<HashMap<Vec<usize>, LogScalar>>,
    posets: Mutex<HashMap<PosetKey, Arc<RegionPoset>>>,
    inserted: Mutex<HashMap<(Vec<usize>, usize), InsertedNodes>>,
    nodes: Mutex<HashMap<NodeKey, Arc<DenseTensor>>>,
}

impl<'a> ClusterEstimator<'a> {
    pub fn new(net: &'a DoubledNetwork, msgs: &'a MessageSet) -> Self {
        Self {
            net,
            msgs,
            operators: Mutex::new(Vec::new()),
            ratios: Mutex::new(HashMap::new()),
            norms: Mutex::new(HashMap::new()),
            posets: Mutex::new(HashMap::new()),
            inserted: Mutex::new(HashMap::new()),
            nodes: Mutex::new(HashMap::new()),
        }
    }

    pub fn network(&self) -> &DoubledNetwork {
        self.net
    }

    pub fn messages(&self) -> &MessageSet {
        self.msgs
    }

    /// Number of distinct region ratios evaluated so far.
    pub fn cached_ratios(&self) -> usize {
        self.ratios.lock().unwrap().len()
    }

    fn op_id(&self, op: &Operator) -> usize {
        let mut ops = self.operators.lock().unwrap();
        match ops.iter().position(|o| o == op) {
            Some(k) => k,
            None => {
                ops.push(op.clone());
                ops.len() - 1
            }
        }
    }

    fn inserted_nodes(&self, ins: &Insertion, id: usize) -> Result<InsertedNodes> {
        let key = (ins.sites.clone(), id);
        if let Some(v) = self.inserted.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.net.inserted_nodes(ins)?);
        self.inserted.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }

    /// Node of `site` with the messages on every bond leaving `region`
    /// already absorbed.
    fn boundary_node(&self, site: usize, region: &[usize], ins: Option<(&Insertion, usize)>) -> Result<Arc<DenseTensor>> {
        let g = self.net.graph();
        let nbrs = g.neighbors(site)?;
        let mask = nbrs
            .iter()
            .enumerate()
            .filter(|(_, (t, _))| region.binary_search(t).is_err())
            .fold(0u64, |m, (k, _)| m | 1 << k);
        let ins = ins.filter(|(i, _)| i.sites.contains(&site));
        let key = (site, mask, ins.map(|(i, id)| (i.sites.clone(), id)));
        if let Some(t) = self.nodes.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let inserted;
        let mut node = match ins {
            Some((i, id)) => {
                inserted = self.inserted_nodes(i, id)?;
                &inserted.iter().find(|(s, _)| *s == site).unwrap().1
            }
            None => self.net.node(site),
        }
        .clone();
        for (k, &(_, b)) in nbrs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                node = contract_pair(&node, self.msgs.incoming(g, site, b))?;
            }
        }
        let node = Arc::new(node);
        self.nodes.lock().unwrap().insert(key, node.clone());
        Ok(node)
    }

    /// [`cluster_contract`] on a sorted region through cached boundary nodes.
    fn contract(&self, region: &[usize], ins: Option<(&Insertion, usize)>) -> Result<LogScalar> {
        if let Some((i, _)) = ins {
            if let Some(&s) = i.sites.iter().find(|s| region.binary_search(s).is_err()) {
                return Err(Error::InvalidCluster(format!("insertion site {s} lies outside the region")));
            }
        }
        let tensors = region
            .iter()
            .map(|&s| Ok((*self.boundary_node(s, region, ins)?).clone()))
            .collect::<Result<Vec<_>>>()?;
        contract_local(&IndexedNetwork::new(tensors)?)
    }

    fn norm(&self, sites: &[usize]) -> Result<LogScalar> {
        if let Some(z) = self.norms.lock().unwrap().get(sites) {
            return Ok(*z);
        }
        let z = self.contract(sites, None)?;
        self.norms.lock().unwrap().insert(sites.to_vec(), z);
        Ok(z)
    }

    /// `O_r` of a region holding every insertion site.
    pub fn region_ratio(&self, region: &Region, ins: &Insertion) -> Result<C64> {
        let id = self.op_id(&ins.op);
        self.ratio_with_id(region, ins, id)
    }

    fn ratio_with_id(&self, region: &Region, ins: &Insertion, id: usize) -> Result<C64> {
        let anchored = Region::new(region.sites.clone(), ins.sites.clone());
        let reduced = reduce_region(self.net.graph(), &anchored);
        let key = (reduced.sites.clone(), ins.sites.clone(), id);
        if let Some(v) = self.ratios.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let num = self.contract(&reduced.sites, Some((ins, id)))?;
        let v = ratio(num, self.norm(&reduced.sites)?, &reduced.sites)?;
        self.ratios.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Product and sum formulas over an arbitrary region family. Regions
    /// missing an insertion site contribute `O_r = 1` to the product and
    /// nothing to the sum.
    pub fn estimate_on_poset(&self, ins: &Insertion, poset: &RegionPoset) -> Result<ExpansionEstimate> {
        ins.validate(self.net.graph(), self.net.phys_dim())?;
        let id = self.op_id(&ins.op);
        let terms: Vec<(&Region, i64)> = poset.contributing().collect();
        let values = terms
            .par_iter()
            .map(|(r, _)| {
                if ins.sites.iter().all(|&s| r.contains(s)) {
                    self.ratio_with_id(r, ins, id).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut log_sum = C64::new(0.0, 0.0);
        let mut sum = C64::new(0.0, 0.0);
        let mut vanishing = false;
        let mut contributions = Vec::with_capacity(terms.len());
        for ((r, c), v) in terms.iter().zip(&values) {
            let o = v.unwrap_or(C64::new(1.0, 0.0));
            if let Some(o) = v {
                sum += *o * *c as f64;
                if o.norm() < PRODUCT_ZERO_TOL {
                    vanishing = true;
                } else {
                    log_sum += o.ln() * *c as f64;
                }
            }
            contributions.push(RegionContribution {
                sites: r.sites.clone(),
                counting: *c,
                ratio: [o.re, o.im],
            });
        }
        Ok(ExpansionEstimate {
            anchors: ins.sites.clone(),
            max_size: poset.regions.iter().map(Region::len).max().unwrap_or(0),
            product: if vanishing { sum } else { log_sum.exp() },
            sum,
            product_fallback: vanishing,
            regions: terms.len(),
            contributions,
        })
    }

    /// Region poset of all generalized loops of at most `max_size` sites
    /// around `anchors`. On fully periodic lattices it is built once per
    /// translation class.
    fn poset(&self, anchors: &[usize], max_size: usize) -> Result<RegionPoset> {
        let g = self.net.graph();
        let Some((key, back)) = translation_class(g, anchors) else {
            return loop_poset(g, anchors, max_size);
        };
        let cache_key = (key, max_size);
        let cached = self.posets.lock().unwrap().get(&cache_key).cloned();
        let base = match cached {
            Some(p) => p,
            None => {
                let p = Arc::new(loop_poset(g, &cache_key.0, max_size)?);
                self.posets.lock().unwrap().insert(cache_key, p.clone());
                p
            }
        };
        Ok(base.permuted(&back))
    }

    /// Both formulas with all generalized loops of at most `max_size` sites
    /// around the operator sites.
    pub fn loop_cluster(&self, ins: &Insertion, max_size: usize) -> Result<ExpansionEstimate> {
        let poset = self.poset(&ins.sites, max_size)?;
        let mut e = self.estimate_on_poset(ins, &poset)?;
        e.max_size = max_size;
        Ok(e)
    }
}

/// Product and sum formulas for one operator with loops of at most
/// `max_size` sites.
pub fn loop_cluster_estimate(
    net: &DoubledNetwork,
    msgs: &MessageSet,
    ins: &Insertion,
    max_size: usize,
) -> Result<ExpansionEstimate> {
    ClusterEstimator::new(net, msgs).loop_cluster(ins, max_size)
}

/// Per-site energy at one cluster size.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyEstimate {
    pub size: usize,
    pub product: f64,
    pub sum: f64,
    /// Contributing regions summed over all Hamiltonian terms.
    pub regions: usize,
    /// Whether any term fell back from the product to the sum formula.
    pub product_fallback: bool,
}

/// Per-site energies `E_C` for `C = min_size..=max_size`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergySequence {
    pub sizes: Vec<usize>,
    pub product: Vec<f64>,
    pub sum: Vec<f64>,
    pub regions: Vec<usize>,
    pub product_fallback: Vec<bool>,
}

impl FromIterator<EnergyEstimate> for EnergySequence {
    fn from_iter<I: IntoIterator<Item = EnergyEstimate>>(iter: I) -> Self {
        let mut seq = EnergySequence {
            sizes: Vec::new(),
            product: Vec::new(),
            sum: Vec::new(),
            regions: Vec::new(),
            product_fallback: Vec::new(),
        };
        for e in iter {
            seq.sizes.push(e.size);
            seq.product.push(e.product);
            seq.sum.push(e.sum);
            seq.regions.push(e.regions);
            seq.product_fallback.push(e.product_fallback);
        }
        seq
    }
}

fn term_insertions(model: &Model) -> Vec<(Insertion, f64)> {
    model
        .terms
        .iter()
        .map(|t| (Insertion::new(t.sites.clone(), t.op.clone()), t.coeff))
        .collect()
}

/// Smallest cluster size at which every Hamiltonian term fits.
pub fn min_cluster_size(model: &Model) -> usize {
    model.terms.iter().map(|t| t.sites.len()).max().unwrap_or(1)
}

impl ClusterEstimator<'_> {
    fn check_model(&self, model: &Model, size: usize) -> Result<()> {
        if model.graph != *self.net.graph() {
            return Err(Error::InvalidArgument("model and state lattices differ".into()));
        }
        let min_size = min_cluster_size(model);
        if size < min_size {
            return Err(Error::InvalidCluster(format!(
                "cluster size {size} is below the term support {min_size}"
            )));
        }
        Ok(())
    }

    /// Loop-cluster per-site energy with clusters of at most `size` sites.
    pub fn energy_at(&self, model: &Model, size: usize) -> Result<EnergyEstimate> {
        self.check_model(model, size)?;
        let n = model.graph.n_sites() as f64;
        let per_term = term_insertions(model)
            .into_par_iter()
            .map(|(ins, coeff)| Ok((self.loop_cluster(&ins, size)?, coeff)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = EnergyEstimate {
            size,
            product: 0.0,
            sum: 0.0,
            regions: 0,
            product_fallback: false,
        };
        for (e, coeff) in per_term {
            out.product += coeff * e.product.re / n;
            out.sum += coeff * e.sum.re / n;
            out.regions += e.regions;
            out.product_fallback |= e.product_fallback;
        }
        Ok(out)
    }

    /// Loop-cluster per-site energy at every `C` from the largest term
    /// support up to `max_size`, flat stretches included.
    pub fn energy_per_site(&self, model: &Model, max_size: usize) -> Result<EnergySequence> {
        self.check_model(model, max_size)?;
        (min_cluster_size(model)..=max_size).map(|c| self.energy_at(model, c)).collect()
    }

    /// Single-cluster per-site energy, each term evaluated on the union of
    /// its generalized loops of at most `loop_size` sites.
    pub fn single_cluster_energy(&self, model: &Model, loop_size: usize) -> Result<f64> {
        let n = model.graph.n_sites() as f64;
        let parts = term_insertions(model)
            .into_par_iter()
            .map(|(ins, coeff)| {
                let region = single_cluster_region(self.net, &ins.sites, loop_size.max(ins.sites.len()))?;
                Ok(coeff * single_cluster_expectation(self.net, self.msgs, &ins, &region.sites)?.re / n)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum())
    }

    /// BP per-site energy.
    pub fn bp_energy(&self, model: &Model) -> Result<f64> {
        let n = model.graph.n_sites() as f64;
        let mut e = 0.0;
        for (ins, coeff) in term_insertions(model) {
            e += coeff * self.region_ratio(&Region::new(ins.sites.clone(), ins.sites.clone()), &ins)?.re / n;
        }
        Ok(e)
    }
}

/// Loop-corrected `log Z`: the BP value plus `Σ_r c(r) log(Z_r / Π_{i∈r} z_i)`
/// over the anchor-free poset of loops up to `max_size` sites.
pub fn loop_log_partition(net: &DoubledNetwork, msgs: &MessageSet, max_size: usize) -> Result<f64> {
    let bp = bp_log_partition(net, msgs)?;
    let loops = enumerate_loop_clusters(net.graph(), &[], max_size)?;
    let poset = close_under_intersection(net.graph(), &[], &loops);
    let log_z: Vec<f64> = (0..net.graph().n_sites())
        .map(|s| site_factor(net, msgs, s).map(|z| z.norm().ln()))
        .collect::<Result<_>>()?;
    let terms: Vec<(&Region, i64)> = poset.contributing().collect();
    let corrections = terms
        .par_iter()
        .map(|(r, c)| {
            let zr = cluster_contract(net, msgs, &r.sites, None)?;
            if zr.is_zero() {
                return Err(Error::ZeroDenominator(format!("cluster {:?}", r.sites)));
            }
            let bp_part: f64 = r.sites.iter().map(|&s| log_z[s]).sum();
            Ok(*c as f64 * (zr.log_abs - bp_part))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(bp + corrections.iter().sum::<f64>())
}
