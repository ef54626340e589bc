//! Vidal-gauge PEPS, simple-update evolution and gauge equilibration.
//!
//! A [`VidalState`] stores one Γ tensor per site and a diagonal weight
//! vector Λ per bond:
//!
//! ```text
//!   |Ψ⟩ = C( Π_i Γ[i] Π_<ij> Λ[ij] )
//! ```
//!
//! Γ[i] has labels `[phys(i), bond(b_1), bond(b_2), ...]` with bonds in the
//! graph's neighbour order. Absorbing `√Λ` into both ends of every bond gives
//! the [`SymmetricState`] consumed by belief propagation.

mod schedule;
mod update;

pub use schedule::{initial_product_state, su_evolve, su_ground_state, tau_for, StageReport, SuReport, SuSchedule};
pub use update::EquilibrationReport;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels;
use crate::tensor::{DenseTensor, Label, C64};
use crate::tngraph::LatticeGraph;

/// Λ entries below this fraction of the bond's largest weight are dropped.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRecord", into = "StateRecord")]
pub struct VidalState {
    graph: LatticeGraph,
    phys_dim: usize,
    gammas: Vec<DenseTensor>,
    lambdas: Vec<Vec<f64>>,
}

fn site_labels(graph: &LatticeGraph, site: usize) -> Vec<Label> {
    let mut l = vec![labels::phys(site)];
    l.extend(graph.neighbors(site).unwrap().iter().map(|&(_, b)| labels::bond(b)));
    l
}

/// Checks per-site tensors against the graph and returns per-bond dimensions.
fn check_site_tensors(graph: &LatticeGraph, phys_dim: usize, tensors: &[DenseTensor]) -> Result<Vec<usize>> {
    if tensors.len() != graph.n_sites() {
        return Err(Error::Shape(format!(
            "{} site tensors for {} sites",
            tensors.len(),
            graph.n_sites()
        )));
    }
    let mut bond_dims = vec![0usize; graph.bonds().len()];
    for (s, t) in tensors.iter().enumerate() {
        if t.labels() != site_labels(graph, s).as_slice() {
            return Err(Error::Shape(format!("site {s} tensor has labels {:?}", t.labels())));
        }
        if t.dims()[0] != phys_dim {
            return Err(Error::Shape(format!("site {s} physical dimension {}", t.dims()[0])));
        }
        for (&(_, b), &d) in graph.neighbors(s)?.iter().zip(&t.dims()[1..]) {
            if bond_dims[b] != 0 && bond_dims[b] != d {
                return Err(Error::DimensionMismatch {
                    label: labels::bond(b),
                    left: bond_dims[b],
                    right: d,
                });
            }
            bond_dims[b] = d;
        }
    }
    Ok(bond_dims)
}

impl VidalState {
    pub fn from_parts(
        graph: LatticeGraph,
        phys_dim: usize,
        gammas: Vec<DenseTensor>,
        lambdas: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let bond_dims = check_site_tensors(&graph, phys_dim, &gammas)?;
        if lambdas.len() != graph.bonds().len() {
            return Err(Error::Shape("one weight vector per bond required".into()));
        }
        for (b, (l, &d)) in lambdas.iter().zip(&bond_dims).enumerate() {
            if l.len() != d {
                return Err(Error::DimensionMismatch {
                    label: labels::bond(b),
                    left: d,
                    right: l.len(),
                });
            }
            if l.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::LambdaBelowFloor {
                    bond: b,
                    value: l.iter().copied().fold(f64::INFINITY, f64::min),
                    floor: 0.0,
                });
            }
        }
        Ok(Self {
            graph,
            phys_dim,
            gammas,
            lambdas,
        })
    }

    /// Bond dimension 1 state with the given normalized local vectors.
    pub fn product_state(graph: &LatticeGraph, local: &[Vec<C64>]) -> Result<Self> {
        if local.len() != graph.n_sites() {
            return Err(Error::Shape(format!(
                "{} local vectors for {} sites",
                local.len(),
                graph.n_sites()
            )));
        }
        let phys_dim = local.first().map_or(0, Vec::len);
        let mut gammas = Vec::with_capacity(local.len());
        for (s, v) in local.iter().enumerate() {
            if v.len() != phys_dim || phys_dim == 0 {
                return Err(Error::Shape(format!("local vector on site {s} has wrong length")));
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::NotNormalized(s));
            }
            let labels = site_labels(graph, s);
            let mut dims = vec![1; labels.len()];
            dims[0] = phys_dim;
            gammas.push(DenseTensor::new(labels, dims, v.clone())?);
        }
        Self::from_parts(graph.clone(), phys_dim, gammas, vec![vec![1.0]; graph.bonds().len()])
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn gamma(&self, site: usize) -> &DenseTensor {
        &self.gammas[site]
    }

    pub fn lambda(&self, bond: usize) -> &[f64] {
        &self.lambdas[bond]
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn bond_dim(&self, bond: usize) -> usize {
        self.lambdas[bond].len()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.lambdas.iter().map(Vec::len).max().unwrap_or(1)
    }

    /// `T[i] = Γ[i] Π_j (Λ[ij])^{1/2}`.
    pub fn to_symmetric(&self) -> SymmetricState {
        let tensors = self
            .gammas
            .iter()
            .enumerate()
            .map(|(s, g)| {
                let mut t = g.clone();
                for &(_, b) in self.graph.neighbors(s).unwrap() {
                    let root: Vec<f64> = self.lambdas[b].iter().map(|x| x.sqrt()).collect();
                    t.scale_along(labels::bond(b), &root).unwrap();
                }
                t
            })
            .collect();
        SymmetricState {
            graph: self.graph.clone(),
            phys_dim: self.phys_dim,
            tensors,
        }
    }
}

/// Plain PEPS: one tensor per site with all bond weights absorbed.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricState {
    graph: LatticeGraph,
    phys_dim: usize,
    tensors: Vec<DenseTensor>,
}

impl SymmetricState {
    pub fn new(graph: LatticeGraph, phys_dim: usize, tensors: Vec<DenseTensor>) -> Result<Self> {
        check_site_tensors(&graph, phys_dim, &tensors)?;
        Ok(Self {
            graph,
            phys_dim,
            tensors,
        })
    }

    /// Random complex PEPS with uniform bond dimension, entries uniform in
    /// the unit square centred on `bias`.
    pub fn random(
        graph: &LatticeGraph,
        phys_dim: usize,
        bond_dim: usize,
        bias: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let tensors = (0..graph.n_sites())
            .map(|s| {
                let labels = site_labels(graph, s);
                let mut dims = vec![bond_dim; labels.len()];
                dims[0] = phys_dim;
                DenseTensor::from_fn(labels, dims, |_| {
                    C64::new(bias + rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph.clone(), phys_dim, tensors)
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn tensor(&self, site: usize) -> &DenseTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn bond_dim(&self, bond: usize) -> usize {
        let b = self.graph.bonds()[bond];
        self.tensors[b.a].dim_of(labels::bond(bond)).unwrap()
    }

    /// Replaces one site tensor; labels and dimensions must be unchanged.
    pub fn replace_tensor(&mut self, site: usize, t: DenseTensor) -> Result<()> {
        let old = &self.tensors[site];
        if old.labels() != t.labels() || old.dims() != t.dims() {
            return Err(Error::Shape(format!("replacement for site {site} changes shape")));
        }
        self.tensors[site] = t;
        Ok(())
    }
}

/// Versioned on-disk layout of a [`VidalState`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRecord {
    pub format: String,
    pub version: u32,
    pub graph: LatticeGraph,
    pub phys_dim: usize,
    /// Per-site Γ: dimensions in label order and row-major `[re, im]` data.
    pub gammas: Vec<TensorRecord>,
    pub lambdas: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRecord {
    pub dims: Vec<usize>,
    pub data: Vec<[f64; 2]>,
}

pub const STATE_FORMAT: &str = "tnloop-vidal-state";
pub const STATE_VERSION: u32 = 1;

impl From<VidalState> for StateRecord {
    fn from(s: VidalState) -> Self {
        Self {
            format: STATE_FORMAT.to_string(),
            version: STATE_VERSION,
            phys_dim: s.phys_dim,
            gammas: s
                .gammas
                .iter()
                .map(|g| TensorRecord {
                    dims: g.dims().to_vec(),
                    data: g.data().iter().map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
            lambdas: s.lambdas,
            graph: s.graph,
        }
    }
}

impl TryFrom<StateRecord> for VidalState {
    type Error = Error;

    fn try_from(r: StateRecord) -> Result<Self> {
        if r.format != STATE_FORMAT || r.version != STATE_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported state format {} v{}",
                r.format, r.version
            )));
        }
        let gammas = r
            .gammas
            .into_iter()
            .enumerate()
            .map(|(s, t)| {
                DenseTensor::new(
                    site_labels(&r.graph, s),
                    t.dims,
                    t.data.into_iter().map(|[re, im]| C64::new(re, im)).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        VidalState::from_parts(r.graph, r.phys_dim, gammas, r.lambdas)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_state_requires_normalized_vectors() {
        let g = LatticeGraph::build_lattice(&[2, 2], &[false, false]).unwrap();
        let v = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(
            VidalState::product_state(&g, &vec![v; 4]),
            Err(Error::NotNormalized(0))
        ));
    }

    #[test]
    fn product_state_symmetric_form_is_gamma() {
        let g = LatticeGraph::build_lattice(&[2, 2], &[false, false]).unwrap();
        let up = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let s = VidalState::product_state(&g, &vec![up; 4]).unwrap();
        let t = s.to_symmetric();
        for i in 0..4 {
            assert_eq!(t.tensor(i), s.gamma(i));
        }
        assert_eq!(s.max_bond_dim(), 1);
    }

    #[test]
    fn from_parts_rejects_mismatched_weights() {
        let g = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
        let up = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let s = VidalState::product_state(&g, &vec![up; 2]).unwrap();
        let gammas = vec![s.gamma(0).clone(), s.gamma(1).clone()];
        assert!(VidalState::from_parts(g.clone(), 2, gammas.clone(), vec![vec![1.0, 0.5]]).is_err());
        assert!(VidalState::from_parts(g, 2, gammas, vec![vec![0.0]]).is_err());
    }
}
