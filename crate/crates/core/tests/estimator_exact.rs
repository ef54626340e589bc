use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnloop::bp::{bp_expectation, bp_iterate, bp_log_partition, build_doubled, BpOptions, DoubledNetwork, Insertion, MessageSet};
use tnloop::clusters::{reduce_region, Region};
use tnloop::estimator::{loop_log_partition, single_cluster_expectation, ClusterEstimator};
use tnloop::gauge_su::{SymmetricState, VidalState};
use tnloop::models::{heisenberg, kron, pauli_x, pauli_y, pauli_z, Operator};
use tnloop::oracle::{exact_expectation, exact_norm};
use tnloop::tensor::C64;
use tnloop::tngraph::LatticeGraph;

fn square(l: usize) -> LatticeGraph {
    LatticeGraph::build_lattice(&[l, l], &[false, false]).unwrap()
}

fn bp_state(g: &LatticeGraph, bond_dim: usize, seed: u64) -> (SymmetricState, DoubledNetwork, MessageSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = SymmetricState::random(g, 2, bond_dim, 0.8, &mut rng).unwrap();
    let net = build_doubled(&state).unwrap();
    let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
    assert!(msgs.converged, "BP residual {}", msgs.residual);
    (state, net, msgs)
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn observables(g: &LatticeGraph) -> Vec<Insertion> {
    let b = g.bonds()[g.bonds().len() / 2];
    vec![
        Insertion::new(vec![g.n_sites() / 2], pauli_z()),
        Insertion::new(vec![0], pauli_x()),
        Insertion::new(vec![b.a, b.b], kron(&pauli_z(), &pauli_z())),
        Insertion::new(vec![b.a, b.b], kron(&pauli_x(), &pauli_y())),
    ]
}

#[test]
fn plaquette_cover_is_exact() {
    let g = square(2);
    for seed in 0..4 {
        let (state, net, msgs) = bp_state(&g, 2, seed);
        let est = ClusterEstimator::new(&net, &msgs);
        for ins in observables(&g) {
            let exact = exact_expectation(&state, &ins).unwrap();
            let e = est.loop_cluster(&ins, 4).unwrap();
            assert!(rel(e.product, exact) < 1e-10);
            assert!(rel(e.sum, exact) < 1e-10);
        }
    }
}

#[test]
fn whole_lattice_region_is_exact() {
    let g = square(3);
    let (state, net, msgs) = bp_state(&g, 2, 21);
    let all: Vec<usize> = (0..g.n_sites()).collect();
    let est = ClusterEstimator::new(&net, &msgs);
    for ins in observables(&g) {
        let exact = exact_expectation(&state, &ins).unwrap();
        assert!(rel(single_cluster_expectation(&net, &msgs, &ins, &all).unwrap(), exact) < 1e-10);
        let e = est.loop_cluster(&ins, 9).unwrap();
        assert!(rel(e.product, exact) < 1e-10);
        assert!(rel(e.sum, exact) < 1e-10);
    }
}

#[test]
fn below_girth_every_estimate_is_bp() {
    for l in [4, 6] {
        let (_, net, msgs) = bp_state(&square(l), 2, l as u64);
        let est = ClusterEstimator::new(&net, &msgs);
        for ins in observables(net.graph()) {
            let bp = bp_expectation(&net, &msgs, &ins).unwrap();
            for c in ins.sites.len()..4 {
                let e = est.loop_cluster(&ins, c).unwrap();
                assert!(rel(e.product, bp) < 1e-12);
                assert!(rel(e.sum, bp) < 1e-12);
            }
        }
    }
}

#[test]
fn trees_never_leave_bp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let edges: Vec<(usize, usize)> = (1..10).map(|t| (rng.gen_range(0..t), t)).collect();
    let g = LatticeGraph::from_edges(10, &edges).unwrap();
    let (state, net, msgs) = bp_state(&g, 2, 9);
    let est = ClusterEstimator::new(&net, &msgs);
    for ins in observables(&g) {
        let exact = exact_expectation(&state, &ins).unwrap();
        for c in [ins.sites.len(), 6, 10] {
            let e = est.loop_cluster(&ins, c).unwrap();
            assert_eq!(e.regions, 1);
            assert!(rel(e.product, exact) < 1e-9);
        }
    }
}

#[test]
fn dangling_sites_do_not_change_cluster_values() {
    let g = square(4);
    let (_, net, msgs) = bp_state(&g, 2, 17);
    let ins = Insertion::new(vec![5, 6], kron(&pauli_z(), &pauli_x()));
    for sites in [
        vec![1, 2, 5, 6, 7, 11],
        vec![5, 6, 9, 10, 14, 15],
        vec![4, 5, 6, 7, 3],
        vec![1, 5, 6, 2, 3, 7, 11, 10, 14],
    ] {
        let r = Region::new(sites.clone(), ins.sites.clone());
        let reduced = reduce_region(&g, &r);
        assert!(reduced.len() < r.len());
        let full = single_cluster_expectation(&net, &msgs, &ins, &r.sites).unwrap();
        let small = single_cluster_expectation(&net, &msgs, &ins, &reduced.sites).unwrap();
        assert!(rel(full, small) < 1e-9, "{sites:?}");
    }
}

#[test]
fn expansion_is_unchanged_by_distant_lattice() {
    // A product state far from the anchors: the same local estimate on a
    // 4x4 lattice and on the same state embedded in a 4x6 lattice.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let small = LatticeGraph::build_lattice(&[4, 4], &[false, false]).unwrap();
    let big = LatticeGraph::build_lattice(&[4, 6], &[false, false]).unwrap();
    let local: Vec<Vec<C64>> = (0..big.n_sites())
        .map(|_| {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            vec![C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]
        })
        .collect();
    let small_local: Vec<Vec<C64>> = (0..small.n_sites())
        .map(|s| {
            let c = small.coord_of(s).unwrap();
            local[big.site_of(&c).unwrap()].clone()
        })
        .collect();
    let value = |g: &LatticeGraph, local: &[Vec<C64>], ins: &Insertion| {
        let state = VidalState::product_state(g, local).unwrap().to_symmetric();
        let net = build_doubled(&state).unwrap();
        let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
        ClusterEstimator::new(&net, &msgs).loop_cluster(ins, 6).unwrap().product
    };
    let site = |g: &LatticeGraph, x, y| g.site_of(&[x, y]).unwrap();
    let a = value(&small, &small_local, &Insertion::new(vec![site(&small, 1, 1)], pauli_z()));
    let b = value(&big, &local, &Insertion::new(vec![site(&big, 1, 1)], pauli_z()));
    assert!(rel(a, b) < 1e-12);
}

#[test]
fn product_state_energy_is_flat() {
    let g = square(3);
    let local: Vec<Vec<C64>> = (0..9)
        .map(|s| {
            if g.sublattice(s) == 0 {
                vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
            } else {
                vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
            }
        })
        .collect();
    let state = VidalState::product_state(&g, &local).unwrap().to_symmetric();
    let net = build_doubled(&state).unwrap();
    let msgs = bp_iterate(&net, None, &BpOptions::default()).unwrap();
    let model = heisenberg(&g).unwrap();
    let seq = ClusterEstimator::new(&net, &msgs).energy_per_site(&model, 8).unwrap();
    let expect = -(g.bonds().len() as f64) / (4.0 * 9.0);
    for (p, s) in seq.product.iter().zip(&seq.sum) {
        assert!((p - expect).abs() < 1e-12);
        assert!((s - expect).abs() < 1e-12);
    }
}

#[test]
fn loop_corrected_partition_function() {
    let g = square(2);
    let (state, net, msgs) = bp_state(&g, 2, 6);
    let exact = exact_norm(&state).unwrap().log_abs;
    let bp = bp_log_partition(&net, &msgs).unwrap();
    assert!((loop_log_partition(&net, &msgs, 3).unwrap() - bp).abs() < 1e-12);
    assert!((loop_log_partition(&net, &msgs, 4).unwrap() - exact).abs() < 1e-10);

    let g = square(3);
    let (state, net, msgs) = bp_state(&g, 2, 7);
    let exact = exact_norm(&state).unwrap().log_abs;
    assert!((loop_log_partition(&net, &msgs, 9).unwrap() - exact).abs() < 1e-9);
}

#[test]
fn formulas_agree_when_corrections_are_small() {
    let g = square(4);
    let (state, net, msgs) = bp_state(&g, 2, 33);
    let est = ClusterEstimator::new(&net, &msgs);
    let op: Operator = kron(&pauli_z(), &pauli_z());
    let ins = Insertion::new(vec![5, 6], op);
    let exact = exact_expectation(&state, &ins).unwrap();
    let bp_err = rel(bp_expectation(&net, &msgs, &ins).unwrap(), exact);
    let e = est.loop_cluster(&ins, 8).unwrap();
    assert!(rel(e.product, exact) <= bp_err);
    assert!(rel(e.sum, exact) <= bp_err);
    assert!((e.product - e.sum).norm() < 1e-2 * exact.norm().max(1e-3));
}
