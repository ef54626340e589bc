use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnloop::bp::{bp_expectation, bp_iterate, bp_log_partition, bp_residual, build_doubled, BpOptions, Insertion, MessageSet};
use tnloop::gauge_su::{su_ground_state, SuSchedule, SymmetricState};
use tnloop::labels;
use tnloop::models::{heisenberg, kron, pauli_x, pauli_z};
use tnloop::oracle::{exact_expectation, exact_norm};
use tnloop::tensor::{contract_pair, DenseTensor, C64};
use tnloop::tngraph::LatticeGraph;

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> LatticeGraph {
    let edges: Vec<(usize, usize)> = (1..n).map(|t| (rng.gen_range(0..t), t)).collect();
    LatticeGraph::from_edges(n, &edges).unwrap()
}

fn converged(state: &SymmetricState) -> (tnloop::bp::DoubledNetwork, MessageSet) {
    let net = build_doubled(state).unwrap();
    let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
    assert!(msgs.converged, "BP residual {}", msgs.residual);
    (net, msgs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bp_is_exact_on_trees(n in 2usize..=9, bond_dim in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tree(n, &mut rng);
        let state = SymmetricState::random(&g, 2, bond_dim, 0.3, &mut rng).unwrap();
        let (net, msgs) = converged(&state);
        let exact = exact_norm(&state).unwrap();
        prop_assert!((bp_log_partition(&net, &msgs).unwrap() - exact.log_abs).abs() < 1e-9);

        let site = rng.gen_range(0..n);
        let one = Insertion::new(vec![site], pauli_x());
        let err = (bp_expectation(&net, &msgs, &one).unwrap() - exact_expectation(&state, &one).unwrap()).norm();
        prop_assert!(err < 1e-9);

        let b = g.bonds()[rng.gen_range(0..g.bonds().len())];
        let two = Insertion::new(vec![b.a, b.b], kron(&pauli_z(), &pauli_x()));
        let err = (bp_expectation(&net, &msgs, &two).unwrap() - exact_expectation(&state, &two).unwrap()).norm();
        prop_assert!(err < 1e-9);
    }
}

/// Inserts `G G⁻¹` on `bond`, with `G` acting on the end at `bond.a`.
fn gauge_bond(state: &SymmetricState, bond: usize, rng: &mut ChaCha8Rng) -> SymmetricState {
    let g = state.graph();
    let b = g.bonds()[bond];
    let d = state.bond_dim(bond);
    let m = DMatrix::<C64>::from_fn(d, d, |i, j| {
        C64::new(if i == j { 2.0 } else { 0.0 } + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
    });
    let inv = m.clone().try_inverse().unwrap();
    let mut out = state.clone();
    for (site, mat, legs) in [
        (b.a, &m, [labels::bond(bond), labels::scratch(0)]),
        (b.b, &inv, [labels::scratch(0), labels::bond(bond)]),
    ] {
        let gt = DenseTensor::from_fn(legs.to_vec(), vec![d, d], |x| mat[(x[0], x[1])]).unwrap();
        let t = state.tensor(site);
        let mut moved = contract_pair(t, &gt).unwrap();
        moved.relabel(labels::scratch(0), labels::bond(bond)).unwrap();
        out.replace_tensor(site, moved.permuted(t.labels()).unwrap()).unwrap();
    }
    out
}

#[test]
fn gauge_transformations_leave_bp_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap();
    let state = SymmetricState::random(&g, 2, 2, 0.6, &mut rng).unwrap();
    let mut gauged = state.clone();
    for bond in [0, 4, 7] {
        gauged = gauge_bond(&gauged, bond, &mut rng);
    }
    let exact = exact_norm(&state).unwrap().log_abs;
    assert!((exact_norm(&gauged).unwrap().log_abs - exact).abs() < 1e-10);

    let (net, msgs) = converged(&state);
    let (gnet, gmsgs) = converged(&gauged);
    let z = bp_log_partition(&net, &msgs).unwrap();
    assert!((bp_log_partition(&gnet, &gmsgs).unwrap() - z).abs() < 1e-9);
    let ins = Insertion::new(vec![3, 4], kron(&pauli_z(), &pauli_z()));
    let a = bp_expectation(&net, &msgs, &ins).unwrap();
    let b = bp_expectation(&gnet, &gmsgs, &ins).unwrap();
    assert!((a - b).norm() < 1e-9);
}

#[test]
fn simple_update_weights_are_a_bp_fixed_point() {
    let g = LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap();
    let model = heisenberg(&g).unwrap();
    let (state, _) = su_ground_state(&model, 2, &SuSchedule::default()).unwrap();
    let net = build_doubled(&state.to_symmetric()).unwrap();
    let from_weights = MessageSet::from_vidal(&state).unwrap();
    assert!(bp_residual(&net, &from_weights).unwrap() < 1e-7);
    let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
    assert!(msgs.converged);
    assert!(msgs.distance(&from_weights).unwrap() < 1e-6);
}

#[test]
fn warm_start_from_fixed_point_stops_at_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = LatticeGraph::build_lattice(&[2, 3], &[false, false]).unwrap();
    let state = SymmetricState::random(&g, 2, 2, 0.5, &mut rng).unwrap();
    let (net, msgs) = converged(&state);
    let again = bp_iterate(&net, Some(&msgs), &BpOptions::default()).unwrap();
    assert!(again.converged);
    assert!(again.iterations <= 2);
    assert!(again.distance(&msgs).unwrap() < 1e-10);
}

#[test]
fn damping_reaches_the_same_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = LatticeGraph::build_lattice(&[3, 3], &[false, false]).unwrap();
    let state = SymmetricState::random(&g, 2, 2, 0.6, &mut rng).unwrap();
    let (net, plain) = converged(&state);
    let damped = bp_iterate(&net, None, &BpOptions { damping: 0.3, ..BpOptions::default() }).unwrap();
    assert!(damped.converged);
    assert!(damped.distance(&plain).unwrap() < 1e-9);
}
