//! Brute-force references for small systems.
//!
//! Two routes are kept independent of each other: the statevector route
//! rebuilds amplitudes with its own index loops, while [`exact_norm`] and
//! [`exact_expectation`] contract the full doubled network. Exact
//! diagonalization uses a dense eigensolver up to [`DENSE_ED_SITES`] sites
//! and Lanczos beyond.
//!
//! Amplitude index convention: `Σ_s p_s d^{N−1−s}`, site 0 most significant.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bp::{build_doubled, Insertion};
use crate::error::{Error, Result};
use crate::gauge_su::SymmetricState;
use crate::models::{Model, Operator};
use crate::tensor::{contract_network, find_path, DenseTensor, Label, LogScalar, C64};
use crate::tngraph::IndexedNetwork;

/// Largest tensor, in entries, any oracle is allowed to build.
pub const SIZE_GUARD: usize = 1 << 26;

pub const DENSE_ED_SITES: usize = 10;
pub const MAX_ED_SITES: usize = 16;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Full amplitude vector of a PEPS, built by absorbing sites in id order.
pub fn statevector(state: &SymmetricState) -> Result<Vec<C64>> {
    let g = state.graph();
    let d = state.phys_dim();
    // (bond id, dimension) of each open virtual index, in storage order
    let mut open: Vec<(usize, usize)> = Vec::new();
    let mut data = vec![C64::new(1.0, 0.0)];
    let mut phys_combos = 1usize;
    for s in 0..g.n_sites() {
        let t = state.tensor(s);
        let t_bonds: Vec<(usize, usize)> = g
            .neighbors(s)?
            .iter()
            .zip(&t.dims()[1..])
            .map(|(&(_, b), &dim)| (b, dim))
            .collect();
        let shared: Vec<(usize, usize)> = open.iter().copied().filter(|x| t_bonds.contains(x)).collect();
        let keep: Vec<(usize, usize)> = open.iter().copied().filter(|x| !t_bonds.contains(x)).collect();
        let fresh: Vec<(usize, usize)> = t_bonds.iter().copied().filter(|x| !open.contains(x)).collect();
        let new_open: Vec<(usize, usize)> = keep.iter().chain(&fresh).copied().collect();

        let size = |v: &[(usize, usize)]| v.iter().map(|x| x.1).product::<usize>();
        let (old_size, t_size, new_size) = (size(&open), size(&t_bonds), size(&new_open));
        if phys_combos * d * new_size > SIZE_GUARD {
            return Err(Error::TooLarge {
                size: phys_combos * d * new_size,
                limit: SIZE_GUARD,
            });
        }
        let (so, st, sn) = (
            |b| stride_of(&open, b),
            |b| stride_of(&t_bonds, b),
            |b| stride_of(&new_open, b),
        );
        let vars: Vec<(usize, usize)> = keep.iter().chain(&shared).chain(&fresh).copied().collect();
        let offsets: Vec<(usize, usize, usize)> = vars.iter().map(|&(b, _)| (so(b), st(b), sn(b))).collect();

        let mut next = vec![zero(); phys_combos * d * new_size];
        let mut idx = vec![0usize; vars.len()];
        'assignments: loop {
            let (mut io, mut it, mut inew) = (0, 0, 0);
            for (k, &i) in idx.iter().enumerate() {
                io += i * offsets[k].0;
                it += i * offsets[k].1;
                inew += i * offsets[k].2;
            }
            for pc in 0..phys_combos {
                let a = data[pc * old_size + io];
                if a == zero() {
                    continue;
                }
                for p in 0..d {
                    next[(pc * d + p) * new_size + inew] += a * t.data()[p * t_size + it];
                }
            }
            let mut k = vars.len();
            loop {
                if k == 0 {
                    break 'assignments;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < vars[k].1 {
                    break;
                }
                idx[k] = 0;
            }
        }
        data = next;
        open = new_open;
        phys_combos *= d;
    }
    if !open.is_empty() {
        return Err(Error::InvalidNetwork("virtual indices left open".into()));
    }
    Ok(data)
}

/// Row-major stride of `bond` within `order`, 0 when absent.
fn stride_of(order: &[(usize, usize)], bond: usize) -> usize {
    match order.iter().position(|x| x.0 == bond) {
        Some(k) => order[k + 1..].iter().map(|x| x.1).product(),
        None => 0,
    }
}

/// `O|ψ⟩` for an operator on one or two sites; the operator's first factor
/// acts on `sites[0]`.
pub fn apply_local(psi: &[C64], n_sites: usize, d: usize, sites: &[usize], op: &Operator) -> Result<Vec<C64>> {
    let k = sites.len();
    if op.nrows() != d.pow(k as u32) || op.ncols() != op.nrows() {
        return Err(Error::InvalidOperator("operator size does not match its sites".into()));
    }
    if sites.iter().any(|&s| s >= n_sites) {
        return Err(Error::InvalidOperator("operator site outside the system".into()));
    }
    let weights: Vec<usize> = sites.iter().map(|&s| d.pow((n_sites - 1 - s) as u32)).collect();
    let digit = |i: usize, w: usize| (i / w) % d;
    let mut out = vec![zero(); psi.len()];
    for (i, &amp) in psi.iter().enumerate() {
        if amp == zero() {
            continue;
        }
        let col = weights.iter().fold(0, |acc, &w| acc * d + digit(i, w));
        let base = i - weights.iter().map(|&w| digit(i, w) * w).sum::<usize>();
        for row in 0..op.nrows() {
            let v = op[(row, col)];
            if v == zero() {
                continue;
            }
            let mut j = base;
            let mut r = row;
            for &w in weights.iter().rev() {
                j += (r % d) * w;
                r /= d;
            }
            out[j] += v * amp;
        }
    }
    Ok(out)
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn statevector_expectation(psi: &[C64], n_sites: usize, d: usize, sites: &[usize], op: &Operator) -> Result<C64> {
    let norm = inner(psi, psi);
    if norm.norm() == 0.0 {
        return Err(Error::ZeroDenominator("zero statevector".into()));
    }
    Ok(inner(psi, &apply_local(psi, n_sites, d, sites, op)?) / norm)
}

/// `H|ψ⟩`.
pub fn hamiltonian_apply(model: &Model, psi: &[C64]) -> Result<Vec<C64>> {
    let n = model.graph.n_sites();
    let mut out = vec![zero(); psi.len()];
    for t in &model.terms {
        let v = apply_local(psi, n, model.phys_dim, &t.sites, &t.op)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x * t.coeff;
        }
    }
    Ok(out)
}

/// Exact per-site energy of a PEPS through its statevector.
pub fn exact_energy_per_site(state: &SymmetricState, model: &Model) -> Result<f64> {
    let psi = statevector(state)?;
    let norm = inner(&psi, &psi).re;
    if !(norm > 0.0) {
        return Err(Error::ZeroDenominator("zero statevector".into()));
    }
    Ok(inner(&psi, &hamiltonian_apply(model, &psi)?).re / norm / model.graph.n_sites() as f64)
}

fn contract_full(net: &IndexedNetwork) -> Result<LogScalar> {
    let path = find_path(net, false)?;
    let size = path.max_intermediate_size(net)?;
    if size > SIZE_GUARD {
        return Err(Error::TooLarge { size, limit: SIZE_GUARD });
    }
    contract_network(net, &path)?
        .scalar()
        .ok_or_else(|| Error::InvalidNetwork("network has open indices".into()))
}

/// `⟨Ψ|Ψ⟩` by contracting the whole doubled network.
pub fn exact_norm(state: &SymmetricState) -> Result<LogScalar> {
    let net = build_doubled(state)?;
    let nodes = (0..state.graph().n_sites()).map(|s| net.node(s).clone()).collect();
    contract_full(&IndexedNetwork::new(nodes)?)
}

/// `⟨Ψ|O|Ψ⟩ / ⟨Ψ|Ψ⟩` by contracting the whole doubled network.
pub fn exact_expectation(state: &SymmetricState, ins: &Insertion) -> Result<C64> {
    let net = build_doubled(state)?;
    let mut nodes: Vec<DenseTensor> = (0..state.graph().n_sites()).map(|s| net.node(s).clone()).collect();
    for (s, t) in net.inserted_nodes(ins)? {
        nodes[s] = t;
    }
    let num = contract_full(&IndexedNetwork::new(nodes)?)?;
    let den = exact_norm(state)?;
    if den.is_zero() {
        return Err(Error::ZeroDenominator("zero norm".into()));
    }
    Ok(num.div(&den).to_c64())
}

/// Nested-loop evaluation of a network: every label configuration is
/// visited once. Open labels are returned in ascending order.
pub fn brute_force_contract(net: &IndexedNetwork) -> Result<DenseTensor> {
    let mut labels: Vec<(Label, usize)> = Vec::new();
    for t in net.tensors() {
        for (&l, &d) in t.labels().iter().zip(t.dims()) {
            if !labels.iter().any(|x| x.0 == l) {
                labels.push((l, d));
            }
        }
    }
    labels.sort();
    let total: usize = labels.iter().map(|x| x.1).product();
    if total > SIZE_GUARD {
        return Err(Error::TooLarge { size: total, limit: SIZE_GUARD });
    }
    let open = net.open_labels();
    let open_dims: Vec<usize> = open
        .iter()
        .map(|l| labels.iter().find(|x| x.0 == *l).unwrap().1)
        .collect();
    let mut out = vec![zero(); open_dims.iter().product()];
    let positions: Vec<Vec<usize>> = net
        .tensors()
        .iter()
        .map(|t| t.labels().iter().map(|l| labels.iter().position(|x| x.0 == *l).unwrap()).collect())
        .collect();
    let open_pos: Vec<usize> = open.iter().map(|l| labels.iter().position(|x| x.0 == *l).unwrap()).collect();
    let mut idx = vec![0usize; labels.len()];
    for _ in 0..total {
        let mut v = C64::new(1.0, 0.0);
        for (t, pos) in net.tensors().iter().zip(&positions) {
            let mut flat = 0;
            for (&p, &dim) in pos.iter().zip(t.dims()) {
                flat = flat * dim + idx[p];
            }
            v *= t.data()[flat];
        }
        let mut o = 0;
        for (&p, &dim) in open_pos.iter().zip(&open_dims) {
            o = o * dim + idx[p];
        }
        out[o] += v;
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < labels[k].1 {
                break;
            }
            idx[k] = 0;
        }
    }
    DenseTensor::new(open, open_dims, out)
}

/// Dense Hamiltonian matrix.
pub fn hamiltonian_dense(model: &Model) -> Result<DMatrix<C64>> {
    let n = model.graph.n_sites();
    if n > DENSE_ED_SITES {
        return Err(Error::TooLarge {
            size: model.phys_dim.pow(n as u32),
            limit: model.phys_dim.pow(DENSE_ED_SITES as u32),
        });
    }
    let dim = model.phys_dim.pow(n as u32);
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = vec![zero(); dim];
        e[j] = C64::new(1.0, 0.0);
        for (i, v) in hamiltonian_apply(model, &e)?.into_iter().enumerate() {
            h[(i, j)] = v;
        }
    }
    Ok(h)
}

/// Lowest eigenvalue (total energy) and a normalized eigenvector.
pub fn exact_ground_state(model: &Model) -> Result<(f64, Vec<C64>)> {
    let n = model.graph.n_sites();
    if n > MAX_ED_SITES {
        return Err(Error::TooLarge {
            size: model.phys_dim.pow(n as u32),
            limit: model.phys_dim.pow(MAX_ED_SITES as u32),
        });
    }
    if n <= DENSE_ED_SITES {
        let eig = hamiltonian_dense(model)?.symmetric_eigen();
        let k = eig.eigenvalues.imin();
        return Ok((eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()));
    }
    lanczos_ground_state(model, 1e-10, 60)
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = inner(v, v).re.sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Restarted Lanczos with full reorthogonalization; stops when the Ritz
/// residual `‖Hx − θx‖` falls below `tol`.
pub fn lanczos_ground_state(model: &Model, tol: f64, max_restarts: usize) -> Result<(f64, Vec<C64>)> {
    let dim = model.phys_dim.pow(model.graph.n_sites() as u32);
    let krylov = dim.min(80);
    let mut rng = StdRng::seed_from_u64(7);
    let mut x: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen::<f64>() - 0.5, 0.0)).collect();
    normalize(&mut x);
    let mut theta = f64::NAN;
    for _ in 0..max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for j in 0..krylov {
            let mut w = hamiltonian_apply(model, &basis[j])?;
            alpha.push(inner(&basis[j], &w).re);
            for _ in 0..2 {
                for b in &basis {
                    let c = inner(b, &w);
                    w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
                }
            }
            let nb = inner(&w, &w).re.sqrt();
            if j + 1 == krylov || nb < 1e-12 {
                break;
            }
            w.iter_mut().for_each(|wi| *wi /= nb);
            beta.push(nb);
            basis.push(w);
        }
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let k = eig.eigenvalues.imin();
        theta = eig.eigenvalues[k];
        let y: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        x = vec![zero(); dim];
        for (b, &c) in basis.iter().zip(y.iter()) {
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += bi * c);
        }
        normalize(&mut x);
        let hx = hamiltonian_apply(model, &x)?;
        let res: f64 = hx.iter().zip(&x).map(|(a, b)| (a - b * theta).norm_sqr()).sum::<f64>().sqrt();
        if res < tol {
            return Ok((theta, x));
        }
    }
    Err(Error::Decomposition(format!("Lanczos did not converge (estimate {theta})")))
}
