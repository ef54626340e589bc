use serde::{Deserialize, Serialize};

use super::update::lambda_change;
use super::VidalState;
use crate::error::{Error, Result};
use crate::models::{trotter_gates, Model};
use crate::tensor::C64;

/// Parameters of the bond-dimension ramp used to prepare ground states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuSchedule {
    /// τ(D) = tau_prefactor · D^tau_exponent.
    pub tau_prefactor: f64,
    pub tau_exponent: f64,
    /// Evolution at one D stops once a full sweep changes no Λ entry by more
    /// than this.
    pub lambda_tol: f64,
    /// Sweeps run at every D before the Λ criterion is consulted. At D = 1
    /// all Λ are identically 1, so this alone ends that stage.
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    pub equilibrate_tol: f64,
    pub equilibrate_max_sweeps: usize,
    pub cutoff: f64,
}

impl Default for SuSchedule {
    fn default() -> Self {
        Self {
            tau_prefactor: 0.5,
            tau_exponent: -1.5,
            lambda_tol: 1e-8,
            min_sweeps: 20,
            max_sweeps: 5000,
            equilibrate_tol: 1e-10,
            equilibrate_max_sweeps: 1000,
            cutoff: 1e-12,
        }
    }
}

impl SuSchedule {
    pub fn tau(&self, bond_dim: usize) -> f64 {
        self.tau_prefactor * (bond_dim as f64).powf(self.tau_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.tau_prefactor, self.lambda_tol, self.equilibrate_tol];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) || !self.tau_exponent.is_finite() {
            return Err(Error::InvalidArgument("schedule step and tolerances must be positive".into()));
        }
        if self.max_sweeps == 0 || self.equilibrate_max_sweeps == 0 || self.min_sweeps > self.max_sweeps {
            return Err(Error::InvalidArgument("schedule sweep limits are inconsistent".into()));
        }
        if !(self.cutoff >= 0.0) {
            return Err(Error::InvalidArgument("cutoff must be non-negative".into()));
        }
        Ok(())
    }
}

/// Default imaginary time step `0.5 · D^{-3/2}`.
pub fn tau_for(bond_dim: usize) -> f64 {
    SuSchedule::default().tau(bond_dim)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub bond_dim: usize,
    pub tau: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub final_change: f64,
    pub max_discarded: f64,
    pub equilibration_sweeps: usize,
    pub equilibration_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuReport {
    pub stages: Vec<StageReport>,
}

/// Deterministic starting point: TFIM starts from a tilted `|+⟩` on every
/// site, Heisenberg (and any other model) from a Néel pattern.
pub fn initial_product_state(model: &Model) -> Result<VidalState> {
    if model.phys_dim != 2 {
        return Err(Error::InvalidArgument(format!(
            "no default initial state for physical dimension {}",
            model.phys_dim
        )));
    }
    let g = &model.graph;
    let local: Vec<Vec<C64>> = (0..g.n_sites())
        .map(|s| {
            if model.name == "tfim" {
                let theta = std::f64::consts::FRAC_PI_2 - 0.3;
                vec![C64::new((theta / 2.0).cos(), 0.0), C64::new((theta / 2.0).sin(), 0.0)]
            } else if g.sublattice(s) == 0 {
                vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
            } else {
                vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
            }
        })
        .collect();
    VidalState::product_state(g, &local)
}

fn run_stage(model: &Model, state: &mut VidalState, bond_dim: usize, schedule: &SuSchedule) -> Result<StageReport> {
    let tau = schedule.tau(bond_dim);
    let half = trotter_gates(model, tau / 2.0)?;
    let mut report = StageReport {
        bond_dim,
        tau,
        sweeps: 0,
        converged: false,
        final_change: f64::INFINITY,
        max_discarded: 0.0,
        equilibration_sweeps: 0,
        equilibration_residual: 0.0,
    };
    while report.sweeps < schedule.max_sweeps {
        let before = state.lambdas().to_vec();
        for g in half.iter().chain(half.iter().rev()) {
            let d = state.apply_gate(Some(&g.gate), g.bond, bond_dim, schedule.cutoff)?;
            report.max_discarded = report.max_discarded.max(d);
        }
        report.sweeps += 1;
        report.final_change = before
            .iter()
            .zip(state.lambdas())
            .map(|(a, b)| lambda_change(a, b))
            .fold(0.0, f64::max);
        if report.sweeps >= schedule.min_sweeps && report.final_change < schedule.lambda_tol {
            report.converged = true;
            break;
        }
    }
    let eq = state.equilibrate_gauge(schedule.equilibrate_tol, schedule.equilibrate_max_sweeps)?;
    report.equilibration_sweeps = eq.sweeps;
    report.equilibration_residual = eq.residual;
    Ok(report)
}

/// Continues the ramp from `state` through bond dimensions
/// `first_dim..=target_dim`, evolving each stage from the previous result.
pub fn su_evolve(
    model: &Model,
    mut state: VidalState,
    first_dim: usize,
    target_dim: usize,
    schedule: &SuSchedule,
) -> Result<(VidalState, SuReport)> {
    schedule.validate()?;
    if first_dim == 0 || first_dim > target_dim {
        return Err(Error::InvalidArgument(format!(
            "bond dimension range {first_dim}..={target_dim} is empty"
        )));
    }
    if state.graph() != &model.graph || state.phys_dim() != model.phys_dim {
        return Err(Error::InvalidArgument("state does not match the model lattice".into()));
    }
    let mut report = SuReport::default();
    for d in first_dim..=target_dim {
        report.stages.push(run_stage(model, &mut state, d, schedule)?);
    }
    Ok((state, report))
}

/// Prepares an approximate ground state at `target_dim` from the model's
/// default product state, ramping D = 1, 2, ..., target_dim.
pub fn su_ground_state(model: &Model, target_dim: usize, schedule: &SuSchedule) -> Result<(VidalState, SuReport)> {
    su_evolve(model, initial_product_state(model)?, 1, target_dim, schedule)
}
