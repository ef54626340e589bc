use super::{site_labels, VidalState, LAMBDA_FLOOR};
use crate::error::{Error, Result};
use crate::labels;
use crate::models::Operator;
use crate::tensor::{contract_pair, truncated_svd, DenseTensor, Label};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibrationReport {
    pub sweeps: usize,
    /// Largest Λ change in the final sweep.
    pub residual: f64,
}

/// Largest entrywise change between two max-normalized weight vectors,
/// padding the shorter with zeros.
pub(crate) fn lambda_change(old: &[f64], new: &[f64]) -> f64 {
    (0..old.len().max(new.len()))
        .map(|k| (old.get(k).copied().unwrap_or(0.0) - new.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

impl VidalState {
    /// Γ[site] with the weights of every bond except `skip` absorbed.
    fn with_environment(&self, site: usize, skip: usize, invert: bool, t: &mut DenseTensor) -> Result<()> {
        for &(_, b) in self.graph.neighbors(site)? {
            if b == skip {
                continue;
            }
            let lam = &self.lambdas[b];
            let floor = LAMBDA_FLOOR * lam.iter().copied().fold(0.0, f64::max);
            if let Some(&v) = lam.iter().find(|&&x| x < floor) {
                return Err(Error::LambdaBelowFloor { bond: b, value: v, floor });
            }
            let w: Vec<f64> = if invert {
                lam.iter().map(|x| 1.0 / x).collect()
            } else {
                lam.clone()
            };
            t.scale_along(labels::bond(b), &w)?;
        }
        Ok(())
    }

    /// One simple-update step on `bond`: absorb the environment weights,
    /// apply `gate` (identity when `None`), split by truncated SVD, store the
    /// max-normalized singular values as the new Λ and divide the
    /// environment weights back out.
    ///
    /// Returns the discarded weight relative to the largest singular value.
    pub fn apply_gate(&mut self, gate: Option<&Operator>, bond: usize, dmax: usize, cutoff: f64) -> Result<f64> {
        let b = *self.graph.bond(bond)?;
        let (i, j) = (b.a, b.b);
        let d = self.phys_dim;
        let (pi, pj) = (labels::phys(i), labels::phys(j));

        let mut left = self.gammas[i].clone();
        self.with_environment(i, bond, false, &mut left)?;
        left.scale_along(labels::bond(bond), &self.lambdas[bond])?;
        let mut right = self.gammas[j].clone();
        self.with_environment(j, bond, false, &mut right)?;
        let mut theta = contract_pair(&left, &right)?;

        if let Some(g) = gate {
            if g.nrows() != d * d || g.ncols() != d * d {
                return Err(Error::InvalidOperator(format!(
                    "gate is {}x{}, expected {}x{}",
                    g.nrows(),
                    g.ncols(),
                    d * d,
                    d * d
                )));
            }
            let (ti, tj) = (labels::scratch(0), labels::scratch(1));
            let gt = DenseTensor::from_fn(vec![ti, tj, pi, pj], vec![d; 4], |x| {
                g[(x[0] * d + x[1], x[2] * d + x[3])]
            })?;
            theta = contract_pair(&gt, &theta)?;
            theta.relabel(ti, pi)?;
            theta.relabel(tj, pj)?;
        }

        let left_labels: Vec<Label> = left.labels().iter().copied().filter(|&l| l != labels::bond(bond)).collect();
        let right_labels: Vec<Label> = right.labels().iter().copied().filter(|&l| l != labels::bond(bond)).collect();
        let svd = truncated_svd(
            &theta,
            &left_labels,
            &right_labels,
            labels::bond(bond),
            dmax,
            cutoff.max(LAMBDA_FLOOR),
        )?;
        let smax = svd.s[0];
        if !(smax > 0.0) {
            return Err(Error::Decomposition(format!("bond {bond} update produced a zero tensor")));
        }
        let lambda: Vec<f64> = svd.s.iter().map(|s| s / smax).collect();

        let mut gi = svd.u;
        self.with_environment(i, bond, true, &mut gi)?;
        let mut gj = svd.vh;
        self.with_environment(j, bond, true, &mut gj)?;
        self.gammas[i] = gi.permuted(&site_labels(&self.graph, i))?;
        self.gammas[j] = gj.permuted(&site_labels(&self.graph, j))?;
        self.lambdas[bond] = lambda;
        Ok(svd.discarded / smax)
    }

    /// Gate-free simple-update sweeps until the largest Λ change in a sweep
    /// drops below `tol`. On failure the state holds the last iterate.
    pub fn equilibrate_gauge(&mut self, tol: f64, max_sweeps: usize) -> Result<EquilibrationReport> {
        let mut residual = f64::INFINITY;
        for sweep in 1..=max_sweeps {
            residual = 0.0;
            for bond in 0..self.graph.bonds().len() {
                let old = self.lambdas[bond].clone();
                self.apply_gate(None, bond, old.len(), 0.0)?;
                residual = residual.max(lambda_change(&old, &self.lambdas[bond]));
            }
            if residual < tol {
                return Ok(EquilibrationReport {
                    sweeps: sweep,
                    residual,
                });
            }
        }
        Err(Error::EquilibrationFailed {
            sweeps: max_sweeps,
            residual,
        })
    }
}
