use std::collections::HashMap;

use super::{contract_pair, DenseTensor, Label, LogScalar, C64};
use crate::error::{Error, Result};
use crate::tngraph::IndexedNetwork;

/// Pairwise contraction order in single-static-assignment form.
///
/// Input tensors have ids `0..n`; step `k` consumes two live ids and creates
/// id `n + k`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContractionPath {
    pub steps: Vec<(usize, usize)>,
}

impl ContractionPath {
    /// Largest tensor (in entries) created along the path.
    pub fn max_intermediate_size(&self, net: &IndexedNetwork) -> Result<usize> {
        let mut shapes: Vec<Option<Vec<(Label, usize)>>> = net
            .tensors()
            .iter()
            .map(|t| Some(t.labels().iter().copied().zip(t.dims().iter().copied()).collect()))
            .collect();
        let mut largest = 0;
        for &(a, b) in &self.steps {
            let sa = take(&mut shapes, a)?;
            let sb = take(&mut shapes, b)?;
            let merged = merge_shapes(&sa, &sb);
            largest = largest.max(merged.iter().map(|x| x.1).product());
            shapes.push(Some(merged));
        }
        Ok(largest)
    }
}

fn take<T>(slots: &mut [Option<T>], id: usize) -> Result<T> {
    slots
        .get_mut(id)
        .and_then(Option::take)
        .ok_or_else(|| Error::InvalidPath(format!("tensor id {id} unavailable")))
}

fn merge_shapes(a: &[(Label, usize)], b: &[(Label, usize)]) -> Vec<(Label, usize)> {
    let mut out: Vec<(Label, usize)> = a
        .iter()
        .filter(|x| !b.iter().any(|y| y.0 == x.0))
        .copied()
        .collect();
    out.extend(b.iter().filter(|y| !a.iter().any(|x| x.0 == y.0)));
    out
}

/// Greedy contraction order: repeatedly contract the connected pair whose
/// result is smallest relative to its inputs.
///
/// Disconnected components are joined by outer products only when
/// `allow_outer` is set.
pub fn find_path(net: &IndexedNetwork, allow_outer: bool) -> Result<ContractionPath> {
    let n = net.tensors().len();
    let mut live: Vec<(usize, Vec<(Label, usize)>)> = net
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.labels().iter().copied().zip(t.dims().iter().copied()).collect()))
        .collect();
    let mut steps = Vec::new();
    let mut next_id = n;
    let size = |s: &[(Label, usize)]| s.iter().map(|x| x.1 as f64).product::<f64>();

    while live.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let (a, b) = (&live[i].1, &live[j].1);
                if !a.iter().any(|x| b.iter().any(|y| y.0 == x.0)) {
                    continue;
                }
                let cost = size(&merge_shapes(a, b)) - size(a) - size(b);
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, i, j));
                }
            }
        }
        let (i, j) = match best {
            Some((_, i, j)) => (i, j),
            None if allow_outer => {
                let mut order: Vec<usize> = (0..live.len()).collect();
                order.sort_by(|&x, &y| size(&live[x].1).total_cmp(&size(&live[y].1)));
                (order[0].min(order[1]), order[0].max(order[1]))
            }
            None => {
                return Err(Error::InvalidNetwork(
                    "network is disconnected and outer products are not permitted".into(),
                ))
            }
        };
        let (idb, sb) = live.remove(j);
        let (ida, sa) = live.remove(i);
        steps.push((ida, idb));
        live.push((next_id, merge_shapes(&sa, &sb)));
        next_id += 1;
    }
    Ok(ContractionPath { steps })
}

/// Result of contracting a network: `exp(log_scale) · tensor`, with the
/// tensor rescaled to unit max-abs entry.
#[derive(Clone, Debug)]
pub struct NetworkValue {
    pub log_scale: f64,
    pub tensor: DenseTensor,
}

impl NetworkValue {
    /// The value of a fully contracted (rank-0) network.
    pub fn scalar(&self) -> Option<LogScalar> {
        let z = self.tensor.scalar_value()?;
        let mut s = LogScalar::from_c64(z);
        s.log_abs += self.log_scale;
        Some(s)
    }

    /// The unnormalized tensor. May overflow for large networks.
    pub fn to_tensor(&self) -> DenseTensor {
        self.tensor
            .clone()
            .scaled(C64::new(self.log_scale.exp(), 0.0))
    }
}

fn normalize(t: &mut DenseTensor) -> f64 {
    let m = t.max_abs();
    if m > 0.0 {
        t.scale(C64::new(1.0 / m, 0.0));
        m.ln()
    } else {
        0.0
    }
}

pub fn contract_network(net: &IndexedNetwork, path: &ContractionPath) -> Result<NetworkValue> {
    let n = net.tensors().len();
    if n == 0 {
        return Err(Error::InvalidNetwork("empty network".into()));
    }
    if path.steps.len() + 1 != n {
        return Err(Error::InvalidPath(format!(
            "{} steps cannot reduce {} tensors to one",
            path.steps.len(),
            n
        )));
    }
    let mut log_scale = 0.0;
    let mut slots: Vec<Option<DenseTensor>> = net.tensors().iter().cloned().map(Some).collect();
    for &(a, b) in &path.steps {
        if a == b {
            return Err(Error::InvalidPath(format!("step contracts tensor {a} with itself")));
        }
        let ta = take(&mut slots, a)?;
        let tb = take(&mut slots, b)?;
        let mut t = contract_pair(&ta, &tb)?;
        log_scale += normalize(&mut t);
        slots.push(Some(t));
    }
    let mut remaining = slots.into_iter().flatten();
    let mut tensor = remaining
        .next()
        .ok_or_else(|| Error::InvalidPath("no tensor left".into()))?;
    if remaining.next().is_some() {
        return Err(Error::InvalidPath("path leaves several tensors".into()));
    }
    log_scale += normalize(&mut tensor);

    let mut open: HashMap<Label, usize> = HashMap::new();
    for t in net.tensors() {
        for &l in t.labels() {
            *open.entry(l).or_default() += 1;
        }
    }
    let n_open = open.values().filter(|&&c| c == 1).count();
    if n_open != tensor.rank() {
        return Err(Error::InvalidPath("result labels differ from open labels".into()));
    }
    Ok(NetworkValue { log_scale, tensor })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(labels: Vec<Label>, dims: Vec<usize>, seed: u64) -> DenseTensor {
        let mut x = seed;
        DenseTensor::from_fn(labels, dims, |_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            C64::new(((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5, 0.0)
        })
        .unwrap()
    }

    #[test]
    fn matrix_chain_keeps_intermediates_small() {
        let net = IndexedNetwork::new(vec![
            real(vec![0, 1], vec![2, 8], 1),
            real(vec![1, 2], vec![8, 8], 2),
            real(vec![2, 3], vec![8, 2], 3),
        ])
        .unwrap();
        let path = find_path(&net, false).unwrap();
        assert_eq!(path.steps.len(), 2);
        // either end first; never the 8x8 by anything wider
        assert_eq!(path.max_intermediate_size(&net).unwrap(), 16);
        let v = contract_network(&net, &path).unwrap();
        assert_eq!(v.tensor.dims(), &[2, 2]);
    }

    #[test]
    fn single_tensor_has_empty_path() {
        let net = IndexedNetwork::new(vec![real(vec![0], vec![3], 4)]).unwrap();
        let path = find_path(&net, false).unwrap();
        assert!(path.steps.is_empty());
        let v = contract_network(&net, &path).unwrap();
        assert!(v.to_tensor().max_abs_diff(&net.tensors()[0]).unwrap() < 1e-15);
    }

    #[test]
    fn disconnected_requires_permission() {
        let net = IndexedNetwork::new(vec![real(vec![0], vec![2], 1), real(vec![1], vec![2], 2)])
            .unwrap();
        assert!(find_path(&net, false).is_err());
        let path = find_path(&net, true).unwrap();
        assert_eq!(contract_network(&net, &path).unwrap().tensor.rank(), 2);
    }

    #[test]
    fn unit_vectors_contract_to_one() {
        let e = DenseTensor::new(vec![0], vec![2], vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
            .unwrap();
        let net = IndexedNetwork::new(vec![e.clone(), e]).unwrap();
        let v = contract_network(&net, &find_path(&net, false).unwrap()).unwrap();
        assert!((v.scalar().unwrap().to_c64() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn invalid_paths_are_rejected() {
        let net = IndexedNetwork::new(vec![
            real(vec![0, 1], vec![2, 2], 1),
            real(vec![1, 2], vec![2, 2], 2),
            real(vec![2, 0], vec![2, 2], 3),
        ])
        .unwrap();
        let reuse = ContractionPath {
            steps: vec![(0, 1), (0, 2)],
        };
        assert!(matches!(contract_network(&net, &reuse), Err(Error::InvalidPath(_))));
        let short = ContractionPath { steps: vec![(0, 1)] };
        assert!(contract_network(&net, &short).is_err());
    }
}
