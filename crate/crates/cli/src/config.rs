//! Run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [lattice]
//! dims = [4, 4]
//! periodic = false          # or one flag per axis
//!
//! [model]
//! name = "tfim"             # "tfim" or "heisenberg"
//! bx = -3.0                 # tfim only
//!
//! [state]
//! bond_dim = 3
//! init = "product"          # or "random" (seeded product state)
//!
//! [schedule]                # simple-update ramp, every field optional
//! tau_prefactor = 0.5
//!
//! [bp]                      # every field optional
//! tol = 1e-12
//!
//! [estimate]
//! c_min = 4                 # defaults to the largest term support
//! c_max = 8
//! formula = "both"          # "product", "sum" or "both"
//! observables = ["energy"]  # energy, mx, my, mz
//!
//! [bench]
//! bond_dims = [2, 3]
//!
//! [output]
//! dir = "results"
//! oracle = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tnloop::bp::BpOptions;
use tnloop::gauge_su::SuSchedule;
use tnloop::models::{heisenberg, pauli_x, pauli_y, pauli_z, tfim, Model, ModelTerm};
use tnloop::tngraph::LatticeGraph;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub lattice: LatticeConfig,
    pub model: ModelConfig,
    pub state: StateConfig,
    #[serde(default)]
    pub schedule: SuSchedule,
    #[serde(default)]
    pub bp: BpOptions,
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub dims: Vec<usize>,
    #[serde(default = "Periodic::open")]
    pub periodic: Periodic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Periodic {
    All(bool),
    Axes(Vec<bool>),
}

impl Periodic {
    fn open() -> Self {
        Periodic::All(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tfim,
    Heisenberg,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelKind,
    pub bx: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Product,
    Random,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub bond_dim: usize,
    #[serde(default)]
    pub init: Init,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    Product,
    Sum,
    #[default]
    Both,
}

impl Formula {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            Formula::Product => &["product"],
            Formula::Sum => &["sum"],
            Formula::Both => &["product", "sum"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Energy,
    Mx,
    My,
    Mz,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::Energy => "energy",
            Observable::Mx => "mx",
            Observable::My => "my",
            Observable::Mz => "mz",
        }
    }
}

fn energy_only() -> Vec<Observable> {
    vec![Observable::Energy]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub c_min: Option<usize>,
    pub c_max: usize,
    #[serde(default)]
    pub formula: Formula,
    #[serde(default = "energy_only")]
    pub observables: Vec<Observable>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub bond_dims: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub oracle: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            oracle: true,
        }
    }
}

/// Line of `key` inside `[section]` (top level for an empty section), 1-based.
fn locate(raw: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == section && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            let name = t.split('=').next().unwrap_or("").trim();
            if name == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn invalid(raw: &str, section: &str, key: &str, msg: impl Into<String>) -> CliError {
    let msg = msg.into();
    let place = if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    };
    match locate(raw, section, key).or_else(|| locate(raw, section, "")) {
        Some(line) => CliError::Config(format!("line {line}: {place}: {msg}")),
        None => CliError::Config(format!("{place}: {msg}")),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(raw: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(raw).map_err(|e| {
            let line = e.span().map(|s| raw[..s.start].matches('\n').count() + 1);
            match line {
                Some(l) => CliError::Config(format!("line {l}: {}", e.message())),
                None => CliError::Config(e.message().to_string()),
            }
        })?;
        cfg.validate(raw)?;
        Ok(cfg)
    }

    fn validate(&self, raw: &str) -> Result<(), CliError> {
        let dims = &self.lattice.dims;
        if dims.is_empty() || dims.contains(&0) {
            return Err(invalid(raw, "lattice", "dims", "dimensions must be non-empty and positive"));
        }
        if let Periodic::Axes(p) = &self.lattice.periodic {
            if p.len() != dims.len() {
                return Err(invalid(raw, "lattice", "periodic", "need one flag per axis"));
            }
        }
        if let Err(e) = self.graph() {
            return Err(invalid(raw, "lattice", "dims", e.to_string()));
        }
        match (self.model.name, self.model.bx) {
            (ModelKind::Tfim, None) => return Err(invalid(raw, "model", "name", "tfim needs a field bx")),
            (ModelKind::Tfim, Some(b)) if !b.is_finite() => {
                return Err(invalid(raw, "model", "bx", "field must be finite"))
            }
            (ModelKind::Heisenberg, Some(_)) => {
                return Err(invalid(raw, "model", "bx", "heisenberg takes no field"))
            }
            _ => {}
        }
        if self.state.bond_dim == 0 {
            return Err(invalid(raw, "state", "bond_dim", "bond dimension must be positive"));
        }
        if let Err(e) = self.schedule.validate() {
            return Err(invalid(raw, "schedule", "", e.to_string()));
        }
        let bp = &self.bp;
        if !(0.0..1.0).contains(&bp.damping) || !(0.0..1.0).contains(&bp.fallback_damping) {
            return Err(invalid(raw, "bp", "damping", "damping must lie in [0, 1)"));
        }
        if !(bp.tol > 0.0) || bp.max_iters == 0 {
            return Err(invalid(raw, "bp", "tol", "tolerance and iteration limit must be positive"));
        }
        let support = self.support();
        let c_min = self.c_min();
        if c_min < support {
            return Err(invalid(raw, "estimate", "c_min", format!("below the term support {support}")));
        }
        if self.estimate.c_max < c_min {
            return Err(invalid(raw, "estimate", "c_max", format!("below c_min = {c_min}")));
        }
        if self.estimate.observables.is_empty() {
            return Err(invalid(raw, "estimate", "observables", "no observables requested"));
        }
        if self.bench.bond_dims.contains(&0) {
            return Err(invalid(raw, "bench", "bond_dims", "bond dimensions must be positive"));
        }
        Ok(())
    }

    pub fn graph(&self) -> tnloop::Result<LatticeGraph> {
        let periodic = match &self.lattice.periodic {
            Periodic::All(p) => vec![*p; self.lattice.dims.len()],
            Periodic::Axes(p) => p.clone(),
        };
        LatticeGraph::build_lattice(&self.lattice.dims, &periodic)
    }

    pub fn model(&self) -> tnloop::Result<Model> {
        let g = self.graph()?;
        match self.model.name {
            ModelKind::Tfim => tfim(&g, self.model.bx.unwrap_or(0.0)),
            ModelKind::Heisenberg => heisenberg(&g),
        }
    }

    /// Per-site average of `obs` as a sum of local terms.
    pub fn observable(&self, obs: Observable) -> tnloop::Result<Model> {
        let op = match obs {
            Observable::Energy => return self.model(),
            Observable::Mx => pauli_x(),
            Observable::My => pauli_y(),
            Observable::Mz => pauli_z(),
        };
        let g = self.graph()?;
        let terms = (0..g.n_sites())
            .map(|s| ModelTerm {
                sites: vec![s],
                op: op.clone(),
                coeff: 1.0,
            })
            .collect();
        Model::new(obs.name(), g, 2, terms)
    }

    /// Largest term support over all requested observables.
    pub fn support(&self) -> usize {
        if self.estimate.observables.contains(&Observable::Energy) {
            2
        } else {
            1
        }
    }

    pub fn c_min(&self) -> usize {
        self.estimate.c_min.unwrap_or_else(|| self.support())
    }

    /// SHA-256 of the effective configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}
