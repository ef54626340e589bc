use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnloop::oracle::brute_force_contract;
use tnloop::tensor::{contract_network, find_path, truncated_svd, ContractionPath, DenseTensor, Label, C64};
use tnloop::tngraph::IndexedNetwork;

fn random_tensor(labels: Vec<Label>, dims: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::from_fn(labels, dims, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap()
}

/// Connected network of `n` tensors: a random spanning tree plus extra
/// edges, and up to two open legs.
fn random_network(n: usize, extra: usize, open: usize, seed: u64) -> IndexedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut legs: Vec<Vec<(Label, usize)>> = vec![Vec::new(); n];
    let mut next: Label = 0;
    let mut edge = |a: usize, b: usize, legs: &mut Vec<Vec<(Label, usize)>>, rng: &mut ChaCha8Rng| {
        let d = rng.gen_range(1..=3);
        legs[a].push((next, d));
        legs[b].push((next, d));
        next += 1;
    };
    for t in 1..n {
        let p = rng.gen_range(0..t);
        edge(p, t, &mut legs, &mut rng);
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edge(a, b, &mut legs, &mut rng);
        }
    }
    for k in 0..open {
        let t = rng.gen_range(0..n);
        legs[t].push((1000 + k as Label, rng.gen_range(1..=3)));
    }
    let tensors = legs
        .into_iter()
        .map(|l| {
            let (labels, dims): (Vec<Label>, Vec<usize>) = l.into_iter().unzip();
            random_tensor(labels, dims, &mut rng)
        })
        .collect();
    IndexedNetwork::new(tensors).unwrap()
}

fn sorted_dense(t: &DenseTensor) -> DenseTensor {
    let mut order = t.labels().to_vec();
    order.sort_unstable();
    t.permuted(&order).unwrap()
}

/// Left-to-right chain `((0,1),2),...` in SSA ids.
fn sequential_path(n: usize) -> ContractionPath {
    let mut steps = vec![(0, 1)];
    for k in 2..n {
        steps.push((n + k - 2, k));
    }
    ContractionPath { steps }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_matches_brute_force(n in 2usize..6, extra in 0usize..4, open in 0usize..3, seed in any::<u64>()) {
        let net = random_network(n, extra, open, seed);
        let oracle = brute_force_contract(&net).unwrap();
        let path = find_path(&net, false).unwrap();
        let got = sorted_dense(&contract_network(&net, &path).unwrap().to_tensor());
        prop_assert_eq!(got.labels(), oracle.labels());
        let scale = oracle.max_abs().max(1e-300);
        prop_assert!(got.max_abs_diff(&oracle).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn contraction_order_is_irrelevant(n in 2usize..6, extra in 0usize..4, seed in any::<u64>()) {
        let net = random_network(n, extra, 1, seed);
        let greedy = contract_network(&net, &find_path(&net, false).unwrap()).unwrap().to_tensor();
        let chain = contract_network(&net, &sequential_path(n)).unwrap().to_tensor();
        let (a, b) = (sorted_dense(&greedy), sorted_dense(&chain));
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-10 * a.max_abs().max(1e-300));
    }

    #[test]
    fn svd_factors_are_isometries(m in 1usize..6, n in 1usize..6, k in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(vec![1, 2], vec![m, n], &mut rng);
        let svd = truncated_svd(&t, &[1], &[2], 9, k, 0.0).unwrap();
        let r = svd.s.len();
        prop_assert!(r <= k.min(m).min(n));
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        for a in 0..r {
            for b in 0..r {
                let uu: C64 = (0..m).map(|i| svd.u.get(&[i, a]).conj() * svd.u.get(&[i, b])).sum();
                let vv: C64 = (0..n).map(|j| svd.vh.get(&[a, j]) * svd.vh.get(&[b, j]).conj()).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                prop_assert!((uu - expect).norm() < 1e-10);
                prop_assert!((vv - expect).norm() < 1e-10);
            }
        }
        let rebuilt = svd.reconstruct(9).unwrap();
        let err = rebuilt.permuted(&[1, 2]).unwrap().max_abs_diff(&t).unwrap();
        let residual = t.norm().powi(2) - svd.s.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((residual - svd.discarded.powi(2)).abs() < 1e-10 * t.norm().powi(2).max(1.0));
        prop_assert!(err <= svd.discarded + 1e-10 * t.norm().max(1.0));
    }
}

#[test]
fn disconnected_pieces_multiply() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(vec![0], vec![3], &mut rng);
    let b = random_tensor(vec![0], vec![3], &mut rng);
    let c = random_tensor(vec![1], vec![2], &mut rng);
    let d = random_tensor(vec![1], vec![2], &mut rng);
    let net = IndexedNetwork::new(vec![a.clone(), b.clone(), c.clone(), d.clone()]).unwrap();
    let whole = contract_network(&net, &find_path(&net, true).unwrap()).unwrap().scalar().unwrap().to_c64();
    let ab: C64 = (0..3).map(|i| a.get(&[i]) * b.get(&[i])).sum();
    let cd: C64 = (0..2).map(|i| c.get(&[i]) * d.get(&[i])).sum();
    assert!((whole - ab * cd).norm() < 1e-12 * (ab * cd).norm());
}
