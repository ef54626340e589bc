//! Spin Hamiltonians as sums of local terms, and their imaginary-time gates.
//!
//! The transverse-field Ising model uses Pauli matrices,
//! `H = -Σ_<ij> Z_i Z_j + B_X Σ_i X_i`, so negative `B_X` favours `|+⟩`.
//! The Heisenberg model uses spin-1/2 operators, `H = Σ_<ij> S_i · S_j`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::C64;
use crate::tngraph::LatticeGraph;

pub type Operator = DMatrix<C64>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> Operator {
    Operator::identity(d, d)
}

pub fn pauli_x() -> Operator {
    Operator::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> Operator {
    Operator::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> Operator {
    Operator::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Kronecker product; the left factor acts on the first site.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

/// Exchanges the two sites of an operator on `d ⊗ d`.
pub fn swap_sites(op: &Operator, d: usize) -> Operator {
    Operator::from_fn(d * d, d * d, |r, col| {
        let (r0, r1) = (r / d, r % d);
        let (c0, c1) = (col / d, col % d);
        op[(r1 * d + r0, c1 * d + c0)]
    })
}

/// `exp(t · h)` for Hermitian `h`.
pub fn expm_hermitian(h: &Operator, t: f64) -> Operator {
    let eig = h.clone().symmetric_eigen();
    let diag = Operator::from_diagonal(&eig.eigenvalues.map(|e| c((t * e).exp(), 0.0)));
    &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
}

pub fn is_hermitian(op: &Operator, tol: f64) -> bool {
    op.is_square() && (op - op.adjoint()).iter().all(|z| z.norm() <= tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelTerm {
    /// One site or the two ends of a bond; the operator's first tensor
    /// factor acts on `sites[0]`.
    pub sites: Vec<usize>,
    pub op: Operator,
    pub coeff: f64,
}

impl ModelTerm {
    pub fn matrix(&self) -> Operator {
        &self.op * c(self.coeff, 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub graph: LatticeGraph,
    pub phys_dim: usize,
    pub terms: Vec<ModelTerm>,
}

impl Model {
    pub fn new(name: &str, graph: LatticeGraph, phys_dim: usize, terms: Vec<ModelTerm>) -> Result<Self> {
        for t in &terms {
            for &s in &t.sites {
                if s >= graph.n_sites() {
                    return Err(Error::UnknownSite {
                        site: s,
                        n_sites: graph.n_sites(),
                    });
                }
            }
            let dim = phys_dim.pow(t.sites.len() as u32);
            match t.sites.len() {
                1 => {}
                2 => {
                    if graph.bond_between(t.sites[0], t.sites[1]).is_none() {
                        return Err(Error::NotBonded(t.sites[0], t.sites[1]));
                    }
                }
                n => return Err(Error::InvalidOperator(format!("{n}-site terms are not supported"))),
            }
            if t.op.nrows() != dim || t.op.ncols() != dim {
                return Err(Error::InvalidOperator(format!(
                    "operator is {}x{}, expected {dim}x{dim}",
                    t.op.nrows(),
                    t.op.ncols()
                )));
            }
            if !is_hermitian(&t.op, 1e-12) {
                return Err(Error::InvalidOperator("operator is not Hermitian".into()));
            }
        }
        Ok(Self {
            name: name.to_string(),
            graph,
            phys_dim,
            terms,
        })
    }

    /// Bond Hamiltonian `h_b` on `(bond.a, bond.b)`: two-site terms of the
    /// bond plus each endpoint's one-site terms weighted by `1/degree`.
    pub fn bond_hamiltonian(&self, bond: usize) -> Result<Operator> {
        let b = *self.graph.bond(bond)?;
        let d = self.phys_dim;
        let mut h = Operator::zeros(d * d, d * d);
        for t in &self.terms {
            match *t.sites.as_slice() {
                [i, j] if (i, j) == (b.a, b.b) => h += t.matrix(),
                [i, j] if (i, j) == (b.b, b.a) => h += swap_sites(&t.matrix(), d),
                [i] if i == b.a || i == b.b => {
                    let share = t.matrix() * c(1.0 / self.graph.degree(i) as f64, 0.0);
                    h += if i == b.a {
                        kron(&share, &identity(d))
                    } else {
                        kron(&identity(d), &share)
                    };
                }
                _ => {}
            }
        }
        Ok(h)
    }
}

/// `exp(-τ h_b)` for one bond, acting on `(bond.a, bond.b)`.
#[derive(Clone, Debug)]
pub struct BondGate {
    pub bond: usize,
    pub gate: Operator,
}

pub fn tfim(graph: &LatticeGraph, bx: f64) -> Result<Model> {
    let zz = kron(&pauli_z(), &pauli_z());
    let mut terms: Vec<ModelTerm> = graph
        .bonds()
        .iter()
        .map(|b| ModelTerm {
            sites: vec![b.a, b.b],
            op: zz.clone(),
            coeff: -1.0,
        })
        .collect();
    terms.extend((0..graph.n_sites()).map(|s| ModelTerm {
        sites: vec![s],
        op: pauli_x(),
        coeff: bx,
    }));
    Model::new("tfim", graph.clone(), 2, terms)
}

pub fn heisenberg(graph: &LatticeGraph) -> Result<Model> {
    let sdots = (kron(&pauli_x(), &pauli_x()) + kron(&pauli_y(), &pauli_y()) + kron(&pauli_z(), &pauli_z()))
        * c(0.25, 0.0);
    let terms = graph
        .bonds()
        .iter()
        .map(|b| ModelTerm {
            sites: vec![b.a, b.b],
            op: sdots.clone(),
            coeff: 1.0,
        })
        .collect();
    Model::new("heisenberg", graph.clone(), 2, terms)
}

pub fn trotter_gates(model: &Model, tau: f64) -> Result<Vec<BondGate>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {tau} must be positive")));
    }
    (0..model.graph.bonds().len())
        .map(|bond| {
            Ok(BondGate {
                bond,
                gate: expm_hermitian(&model.bond_hamiltonian(bond)?, -tau),
            })
        })
        .collect()
}
