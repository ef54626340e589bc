use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnloop::bp::Insertion;
use tnloop::gauge_su::{su_ground_state, SuSchedule, SymmetricState};
use tnloop::models::{heisenberg, kron, pauli_x, pauli_y, pauli_z, tfim};
use tnloop::oracle::{
    exact_energy_per_site, exact_expectation, exact_ground_state, exact_norm, hamiltonian_apply, hamiltonian_dense,
    lanczos_ground_state, statevector, statevector_expectation,
};
use tnloop::tensor::C64;
use tnloop::tngraph::LatticeGraph;

const TFIM_4X4_BX3_GROUND: f64 = -50.18662388277751;

fn lattices() -> Vec<LatticeGraph> {
    vec![
        LatticeGraph::build_lattice(&[2, 2], &[false, false]).unwrap(),
        LatticeGraph::build_lattice(&[2, 3], &[false, false]).unwrap(),
        LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap(),
        LatticeGraph::build_lattice(&[5], &[true]).unwrap(),
        LatticeGraph::from_edges(6, &[(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]).unwrap(),
    ]
}

#[test]
fn statevector_and_network_contraction_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for g in lattices() {
        let n = g.n_sites();
        let state = SymmetricState::random(&g, 2, 2, 0.2, &mut rng).unwrap();
        let psi = statevector(&state).unwrap();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let net = exact_norm(&state).unwrap();
        assert!((net.log_abs - norm.ln()).abs() < 1e-10);
        assert!((net.phase - C64::new(1.0, 0.0)).norm() < 1e-10);

        let b = g.bonds()[rng.gen_range(0..g.bonds().len())];
        let site = rng.gen_range(0..n);
        for (sites, op) in [
            (vec![site], pauli_y()),
            (vec![b.a, b.b], kron(&pauli_x(), &pauli_z())),
            (vec![b.b, b.a], kron(&pauli_y(), &pauli_z())),
        ] {
            let sv = statevector_expectation(&psi, n, 2, &sites, &op).unwrap();
            let tn = exact_expectation(&state, &Insertion::new(sites.clone(), op)).unwrap();
            assert!((sv - tn).norm() < 1e-10 * sv.norm().max(1.0), "{:?} {sites:?}: {sv} vs {tn}", g.dims());
        }
    }
}

#[test]
fn dense_and_matrix_free_hamiltonians_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = LatticeGraph::build_lattice(&[2, 3], &[false, false]).unwrap();
    for model in [tfim(&g, -1.3).unwrap(), heisenberg(&g).unwrap()] {
        let h = hamiltonian_dense(&model).unwrap();
        assert!((&h - h.adjoint()).norm() < 1e-12);
        let v: Vec<C64> = (0..64).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let hv = hamiltonian_apply(&model, &v).unwrap();
        for (i, x) in hv.iter().enumerate() {
            let row: C64 = (0..64).map(|j| h[(i, j)] * v[j]).sum();
            assert!((row - x).norm() < 1e-12);
        }
    }
}

#[test]
fn closed_form_ground_energies() {
    let chain = LatticeGraph::build_lattice(&[4], &[false]).unwrap();
    let (e, _) = exact_ground_state(&heisenberg(&chain).unwrap()).unwrap();
    assert!((e + (3.0 + 2.0 * 3f64.sqrt()) / 4.0).abs() < 1e-12);
    let ring = LatticeGraph::build_lattice(&[4], &[true]).unwrap();
    let (e, _) = exact_ground_state(&heisenberg(&ring).unwrap()).unwrap();
    assert!((e + 2.0).abs() < 1e-12);
    let pair = LatticeGraph::from_edges(2, &[(0, 1)]).unwrap();
    for bx in [-3.0, -0.4, 2.0] {
        let (e, _) = exact_ground_state(&tfim(&pair, bx).unwrap()).unwrap();
        assert!((e + (1.0 + 4.0 * bx * bx).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn ground_energy_is_the_sum_of_term_expectations() {
    for g in [
        LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap(),
        LatticeGraph::build_lattice(&[3, 4], &[false, false]).unwrap(),
    ] {
        for model in [tfim(&g, -3.0).unwrap(), heisenberg(&g).unwrap()] {
            let (e, psi) = exact_ground_state(&model).unwrap();
            let n = g.n_sites();
            let total: f64 = model
                .terms
                .iter()
                .map(|t| t.coeff * statevector_expectation(&psi, n, 2, &t.sites, &t.op).unwrap().re)
                .sum();
            assert!((total - e).abs() < 1e-8 * e.abs());
        }
    }
}

#[test]
fn lanczos_regression_on_four_by_four() {
    let g = LatticeGraph::build_lattice(&[4, 4], &[false, false]).unwrap();
    let (e, psi) = lanczos_ground_state(&tfim(&g, -3.0).unwrap(), 1e-9, 60).unwrap();
    assert!((e - TFIM_4X4_BX3_GROUND).abs() < 1e-8);
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn simple_update_lowers_energy_with_bond_dimension() {
    let chain = LatticeGraph::build_lattice(&[6], &[false]).unwrap();
    let model = heisenberg(&chain).unwrap();
    let (ground, _) = exact_ground_state(&model).unwrap();
    let mut last = f64::INFINITY;
    for d in [1, 2, 4] {
        let (state, _) = su_ground_state(&model, d, &SuSchedule::default()).unwrap();
        let e = exact_energy_per_site(&state.to_symmetric(), &model).unwrap();
        assert!(e <= last + 1e-9, "D={d}: {e} after {last}");
        assert!(e >= ground / 6.0 - 1e-9);
        last = e;
    }
    assert!(last - ground / 6.0 < 1e-2);
}
