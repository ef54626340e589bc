//! Experiment driver: prepares states, runs loop-cluster estimates over a
//! range of cluster sizes, extrapolates them and sweeps bond dimensions.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tnloop::bp::{bp_iterate, build_doubled, MessageSet};
use tnloop::estimator::ClusterEstimator;
use tnloop::extrapolate::extrapolate;
use tnloop::gauge_su::{initial_product_state, su_evolve, SuReport, VidalState};
use tnloop::models::Model;
use tnloop::oracle::exact_energy_per_site;
use tnloop::tensor::C64;

use config::{Config, Init};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] tnloop::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Command-line overrides shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub seed: Option<u64>,
    pub oracle: Option<bool>,
}

impl Options {
    fn load(&self) -> Result<Config> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required".into()))?;
        let mut cfg = Config::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(oracle) = self.oracle {
            cfg.output.oracle = oracle;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

/// One estimate at one cluster size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub observable: String,
    pub bond_dim: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub formula: String,
    pub value: f64,
    pub regions: usize,
    pub seconds: f64,
    pub oracle: Option<f64>,
    pub rel_error: Option<f64>,
    pub flags: String,
    pub config_hash: String,
    pub version: String,
}

fn io<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("metadata serializes");
    fs::write(path, text + "\n").map_err(io(path))
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    for r in rows {
        w.serialize(r).map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(io(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<Row>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_state(path: &Path) -> Result<VidalState> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: invalid state file: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn initial_state(cfg: &Config, model: &Model) -> Result<VidalState> {
    match cfg.state.init {
        Init::Product => Ok(initial_product_state(model)?),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let local: Vec<Vec<C64>> = (0..model.graph.n_sites())
                .map(|_| {
                    let v: Vec<C64> = (0..model.phys_dim)
                        .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                        .collect();
                    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    v.into_iter().map(|z| z / norm).collect()
                })
                .collect();
            Ok(VidalState::product_state(&model.graph, &local)?)
        }
    }
}

/// Runs `command`, recording a failure in `<command>.json` before returning
/// numerical errors.
pub fn run(command: &str, opts: &Options) -> Result<()> {
    let result = match command {
        "prepare" => prepare(opts),
        "estimate" => estimate(opts),
        "extrapolate" => extrapolate_table(opts),
        "bench" => bench(opts),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    };
    if let Err(CliError::Numerical(e)) = &result {
        if let Ok(dir) = output_dir(opts) {
            let meta = json!({
                "command": command,
                "status": "numerical_failure",
                "error": e.to_string(),
                "version": VERSION,
            });
            let _ = create_dir(&dir).and_then(|_| write_json(&dir.join(format!("{command}.json")), &meta));
        }
    }
    result
}

fn output_dir(opts: &Options) -> Result<PathBuf> {
    match (&opts.out, &opts.config) {
        (Some(out), _) => Ok(out.clone()),
        (None, Some(_)) => Ok(opts.load()?.output.dir),
        (None, None) => Ok(config::OutputConfig::default().dir),
    }
}

/// Simple update to the configured bond dimension, or onwards from
/// `--state` when given.
pub fn prepare(opts: &Options) -> Result<()> {
    let cfg = opts.load()?;
    let model = cfg.model()?;
    let target = cfg.state.bond_dim;
    let (start, first_dim) = match &opts.state {
        Some(path) => {
            let s = load_state(path)?;
            if s.graph() != &model.graph {
                return Err(CliError::Config("state lattice does not match the config".into()));
            }
            if s.max_bond_dim() > target {
                return Err(CliError::Config(format!(
                    "state has bond dimension {} above the target {target}",
                    s.max_bond_dim()
                )));
            }
            let d = s.max_bond_dim();
            (s, d + 1)
        }
        None => (initial_state(&cfg, &model)?, 1),
    };
    let t0 = Instant::now();
    let (state, report) = if first_dim <= target {
        su_evolve(&model, start, first_dim, target, &cfg.schedule)?
    } else {
        (start, SuReport::default())
    };
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let state_path = dir.join("state.json");
    fs::write(&state_path, serde_json::to_string(&state).expect("state serializes")).map_err(io(&state_path))?;
    write_json(
        &dir.join("prepare.json"),
        &json!({
            "command": "prepare",
            "status": "ok",
            "config_hash": cfg.hash(),
            "version": VERSION,
            "seed": cfg.seed,
            "model": model.name,
            "bond_dim": target,
            "resumed_from": opts.state,
            "schedule": cfg.schedule,
            "report": report,
            "seconds": t0.elapsed().as_secs_f64(),
        }),
    )
}

struct Cell {
    rows: Vec<Row>,
    meta: Value,
}

/// BP plus loop-cluster estimates of every observable at every cluster size.
fn estimate_state(cfg: &Config, state: &VidalState, hash: &str) -> Result<Cell> {
    let sym = state.to_symmetric();
    let net = build_doubled(&sym)?;
    let msgs: MessageSet = bp_iterate(&net, None, &cfg.bp)?;
    let est = ClusterEstimator::new(&net, &msgs);
    let bond_dim = state.max_bond_dim();
    let mut rows = Vec::new();
    let mut observables = Vec::new();
    for &obs in &cfg.estimate.observables {
        let model = cfg.observable(obs)?;
        let bp = est.bp_energy(&model)?;
        let (oracle, oracle_note) = if cfg.output.oracle {
            match exact_energy_per_site(&sym, &model) {
                Ok(v) => (Some(v), None),
                Err(e @ tnloop::Error::TooLarge { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            }
        } else {
            (None, None)
        };
        for c in cfg.c_min()..=cfg.estimate.c_max {
            let t0 = Instant::now();
            let e = est.energy_at(&model, c)?;
            let seconds = t0.elapsed().as_secs_f64();
            for &formula in cfg.estimate.formula.names() {
                let value = if formula == "product" { e.product } else { e.sum };
                let mut flags = Vec::new();
                if !msgs.converged {
                    flags.push("bp_unconverged");
                }
                if formula == "product" && e.product_fallback {
                    flags.push("product_fallback");
                }
                rows.push(Row {
                    observable: obs.name().to_string(),
                    bond_dim,
                    c,
                    formula: formula.to_string(),
                    value,
                    regions: e.regions,
                    seconds,
                    oracle,
                    rel_error: oracle.map(|o| ((value - o) / o).abs()),
                    flags: flags.join(";"),
                    config_hash: hash.to_string(),
                    version: VERSION.to_string(),
                });
            }
        }
        observables.push(json!({
            "observable": obs.name(),
            "bp": bp,
            "oracle": oracle,
            "oracle_skipped": oracle_note,
        }));
    }
    let meta = json!({
        "bond_dim": bond_dim,
        "bp": {
            "converged": msgs.converged,
            "iterations": msgs.iterations,
            "residual": msgs.residual,
            "damping": msgs.damping,
        },
        "observables": observables,
    });
    Ok(Cell { rows, meta })
}

pub fn estimate(opts: &Options) -> Result<()> {
    let cfg = opts.load()?;
    let dir = cfg.output.dir.clone();
    let state_path = opts.state.clone().unwrap_or_else(|| dir.join("state.json"));
    let state = load_state(&state_path)?;
    if state.graph() != &cfg.graph()? {
        return Err(CliError::Config("state lattice does not match the config".into()));
    }
    let hash = cfg.hash();
    let t0 = Instant::now();
    let cell = estimate_state(&cfg, &state, &hash)?;
    create_dir(&dir)?;
    write_rows(&dir.join("estimates.csv"), &cell.rows)?;
    let mut meta = json!({
        "command": "estimate",
        "status": "ok",
        "config_hash": hash,
        "version": VERSION,
        "state": state_path,
        "formula": cfg.estimate.formula,
        "c_min": cfg.c_min(),
        "c_max": cfg.estimate.c_max,
        "seconds": t0.elapsed().as_secs_f64(),
    });
    merge(&mut meta, cell.meta);
    write_json(&dir.join("estimate.json"), &meta)
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

/// Wynn extrapolation of every (observable, bond dimension, formula)
/// sequence in an estimates table.
pub fn extrapolate_table(opts: &Options) -> Result<()> {
    let dir = output_dir(opts)?;
    let input = opts.input.clone().unwrap_or_else(|| dir.join("estimates.csv"));
    let rows = read_rows(&input)?;
    let mut groups: BTreeMap<(String, usize, String), Vec<&Row>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.observable.clone(), r.bond_dim, r.formula.clone())).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(CliError::Config(format!("{}: no estimates", input.display())));
    }
    let mut records = Vec::new();
    for ((observable, bond_dim, formula), mut seq) in groups {
        seq.sort_by_key(|r| r.c);
        let first = seq[0].c;
        if seq.iter().enumerate().any(|(i, r)| r.c != first + i) {
            return Err(CliError::Config(format!(
                "{observable}/{formula}: cluster sizes must be consecutive"
            )));
        }
        if seq.len() < 3 {
            return Err(CliError::Config(format!(
                "{observable}/{formula}: {} cluster sizes, need at least 3",
                seq.len()
            )));
        }
        let values: Vec<f64> = seq.iter().map(|r| r.value).collect();
        let result = extrapolate(&values, first)?;
        let oracle = seq[0].oracle;
        let last = *values.last().unwrap();
        records.push(json!({
            "observable": observable,
            "bond_dim": bond_dim,
            "formula": formula,
            "value": result.value,
            "error": result.error,
            "oracle": oracle,
            "abs_error": oracle.map(|o| (result.value - o).abs()),
            "raw_abs_error": oracle.map(|o| (last - o).abs()),
            "config_hash": seq[0].config_hash,
            "version": seq[0].version,
            "result": result,
        }));
    }
    create_dir(&dir)?;
    write_json(
        &dir.join("extrapolation.json"),
        &json!({
            "command": "extrapolate",
            "status": "ok",
            "version": VERSION,
            "input": input,
            "records": records,
        }),
    )
}

/// Estimates over a grid of bond dimensions and cluster sizes. States are
/// ramped through the sorted bond dimensions, each grown from the last.
pub fn bench(opts: &Options) -> Result<()> {
    let cfg = opts.load()?;
    let model = cfg.model()?;
    let hash = cfg.hash();
    let mut dims = cfg.bench.bond_dims.clone();
    if dims.is_empty() {
        dims.push(cfg.state.bond_dim);
    }
    dims.sort_unstable();
    dims.dedup();

    let t0 = Instant::now();
    let mut states = Vec::with_capacity(dims.len());
    let mut reports = Vec::with_capacity(dims.len());
    let mut state = initial_state(&cfg, &model)?;
    let mut reached = 0;
    for &d in &dims {
        let (next, report) = su_evolve(&model, state, reached + 1, d, &cfg.schedule)?;
        reached = d;
        state = next;
        states.push(state.clone());
        reports.push(report);
    }
    let cells = states
        .par_iter()
        .map(|s| estimate_state(&cfg, s, &hash))
        .collect::<Result<Vec<_>>>()?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let rows: Vec<Row> = cells.iter().flat_map(|c| c.rows.iter().cloned()).collect();
    write_rows(&dir.join("bench.csv"), &rows)?;
    let grid: Vec<Value> = cells
        .into_iter()
        .zip(reports)
        .map(|(c, r)| {
            let mut m = c.meta;
            merge(&mut m, json!({ "su": r }));
            m
        })
        .collect();
    write_json(
        &dir.join("bench.json"),
        &json!({
            "command": "bench",
            "status": "ok",
            "config_hash": hash,
            "version": VERSION,
            "bond_dims": dims,
            "c_min": cfg.c_min(),
            "c_max": cfg.estimate.c_max,
            "grid": grid,
            "seconds": t0.elapsed().as_secs_f64(),
        }),
    )
}
