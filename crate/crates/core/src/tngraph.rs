//! Lattice graphs and labelled tensor networks.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub axis: usize,
}

impl Bond {
    pub fn other(&self, site: usize) -> usize {
        if site == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Sites and nearest-neighbour bonds of a hypercubic lattice, or of an
/// arbitrary connected graph built with [`LatticeGraph::from_edges`].
///
/// Site ids are row-major over coordinates (first axis slowest). Bonds are
/// sorted by `(a, b, axis)` with `a < b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct LatticeGraph {
    dims: Vec<usize>,
    periodic: Vec<bool>,
    n_sites: usize,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Serialized form of a graph; adjacency is derived on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphRecord {
    dims: Vec<usize>,
    periodic: Vec<bool>,
    n_sites: usize,
    bonds: Vec<(usize, usize)>,
}

impl From<LatticeGraph> for GraphRecord {
    fn from(g: LatticeGraph) -> Self {
        Self {
            dims: g.dims,
            periodic: g.periodic,
            n_sites: g.n_sites,
            bonds: g.bonds.iter().map(|b| (b.a, b.b)).collect(),
        }
    }
}

impl TryFrom<GraphRecord> for LatticeGraph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        let g = if r.dims.is_empty() {
            LatticeGraph::from_edges(r.n_sites, &r.bonds)?
        } else {
            LatticeGraph::build_lattice(&r.dims, &r.periodic)?
        };
        let same = g.n_sites == r.n_sites
            && g.bonds.len() == r.bonds.len()
            && g.bonds.iter().zip(&r.bonds).all(|(b, &(x, y))| (b.a, b.b) == (x, y));
        if !same {
            return Err(Error::InvalidLattice("stored bonds do not match the lattice".into()));
        }
        Ok(g)
    }
}

impl LatticeGraph {
    /// Square (2D), cubic (3D) or any hypercubic lattice.
    pub fn build_lattice(dims: &[usize], periodic: &[bool]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLattice("no dimensions given".into()));
        }
        if dims.len() != periodic.len() {
            return Err(Error::InvalidLattice(format!(
                "{} extents but {} boundary flags",
                dims.len(),
                periodic.len()
            )));
        }
        for (axis, (&l, &p)) in dims.iter().zip(periodic).enumerate() {
            if l < 2 {
                return Err(Error::InvalidLattice(format!("extent {l} on axis {axis} is below 2")));
            }
            if p && l < 3 {
                return Err(Error::InvalidLattice(format!(
                    "periodic axis {axis} with extent {l} would double bonds"
                )));
            }
        }
        let n_sites: usize = dims.iter().product();
        let mut bonds = Vec::new();
        let mut coord = vec![0usize; dims.len()];
        for site in 0..n_sites {
            for axis in 0..dims.len() {
                let mut next = coord.clone();
                if coord[axis] + 1 < dims[axis] {
                    next[axis] += 1;
                } else if periodic[axis] {
                    next[axis] = 0;
                } else {
                    continue;
                }
                let other = ravel(&next, dims);
                bonds.push(Bond {
                    a: site.min(other),
                    b: site.max(other),
                    axis,
                });
            }
            crate::tensor::increment(&mut coord, dims);
        }
        bonds.sort();
        let mut g = Self {
            dims: dims.to_vec(),
            periodic: periodic.to_vec(),
            n_sites,
            bonds,
            adjacency: vec![],
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    /// Arbitrary connected simple graph; used for trees and small test graphs.
    pub fn from_edges(n_sites: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidLattice("graph has no sites".into()));
        }
        let mut bonds = Vec::with_capacity(edges.len());
        for &(x, y) in edges {
            if x >= n_sites || y >= n_sites {
                return Err(Error::UnknownSite {
                    site: x.max(y),
                    n_sites,
                });
            }
            if x == y {
                return Err(Error::InvalidLattice(format!("self-loop on site {x}")));
            }
            bonds.push(Bond {
                a: x.min(y),
                b: x.max(y),
                axis: 0,
            });
        }
        bonds.sort();
        if bonds.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::InvalidLattice("duplicate bond".into()));
        }
        let mut g = Self {
            dims: vec![],
            periodic: vec![],
            n_sites,
            bonds,
            adjacency: vec![],
        };
        g.rebuild_adjacency();
        if !g.is_connected() {
            return Err(Error::InvalidLattice("graph is not connected".into()));
        }
        Ok(g)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adjacency = vec![Vec::new(); self.n_sites];
        for (id, b) in self.bonds.iter().enumerate() {
            adjacency[b.a].push((b.b, id));
            adjacency[b.b].push((b.a, id));
        }
        for list in &mut adjacency {
            list.sort();
        }
        self.adjacency = adjacency;
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_sites];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for &(t, _) in &self.adjacency[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, id: usize) -> Result<&Bond> {
        self.bonds.get(id).ok_or(Error::UnknownBond(id))
    }

    /// `(neighbour, bond id)` pairs sorted by neighbour id.
    pub fn neighbors(&self, site: usize) -> Result<&[(usize, usize)]> {
        self.adjacency
            .get(site)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSite {
                site,
                n_sites: self.n_sites,
            })
    }

    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<usize> {
        self.adjacency
            .get(i)?
            .iter()
            .find(|&&(n, _)| n == j)
            .map(|&(_, b)| b)
    }

    pub fn coord_of(&self, site: usize) -> Option<Vec<usize>> {
        if self.dims.is_empty() || site >= self.n_sites {
            return None;
        }
        let mut coord = vec![0; self.dims.len()];
        let mut rest = site;
        for axis in (0..self.dims.len()).rev() {
            coord[axis] = rest % self.dims[axis];
            rest /= self.dims[axis];
        }
        Some(coord)
    }

    pub fn site_of(&self, coord: &[usize]) -> Option<usize> {
        if self.dims.is_empty()
            || coord.len() != self.dims.len()
            || coord.iter().zip(&self.dims).any(|(c, d)| c >= d)
        {
            return None;
        }
        Some(ravel(coord, &self.dims))
    }

    /// Site map shifting every coordinate by `shift`. Defined only for
    /// lattices periodic along every axis, where it is an automorphism.
    pub fn translation(&self, shift: &[usize]) -> Option<Vec<usize>> {
        if self.dims.is_empty() || shift.len() != self.dims.len() || !self.periodic.iter().all(|&p| p) {
            return None;
        }
        Some(
            (0..self.n_sites)
                .map(|s| {
                    let c: Vec<usize> = self
                        .coord_of(s)
                        .unwrap()
                        .iter()
                        .zip(shift)
                        .zip(&self.dims)
                        .map(|((c, t), d)| (c + t % d) % d)
                        .collect();
                    ravel(&c, &self.dims)
                })
                .collect(),
        )
    }

    /// Two-colouring by coordinate parity; falls back to BFS depth parity
    /// for generic graphs.
    pub fn sublattice(&self, site: usize) -> usize {
        if let Some(c) = self.coord_of(site) {
            return c.iter().sum::<usize>() % 2;
        }
        let mut depth = vec![usize::MAX; self.n_sites];
        depth[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(s) = queue.pop_front() {
            for &(t, _) in &self.adjacency[s] {
                if depth[t] == usize::MAX {
                    depth[t] = depth[s] + 1;
                    queue.push_back(t);
                }
            }
        }
        depth[site] % 2
    }
}

fn ravel(coord: &[usize], dims: &[usize]) -> usize {
    coord.iter().zip(dims).fold(0, |acc, (c, d)| acc * d + c)
}

/// A collection of tensors where shared labels are contracted bonds and
/// labels appearing once are open indices.
#[derive(Clone, Debug, Default)]
pub struct IndexedNetwork {
    tensors: Vec<DenseTensor>,
}

impl IndexedNetwork {
    pub fn new(tensors: Vec<DenseTensor>) -> Result<Self> {
        let mut seen: HashMap<Label, (usize, usize)> = HashMap::new();
        for t in &tensors {
            for (&l, &d) in t.labels().iter().zip(t.dims()) {
                let e = seen.entry(l).or_insert((0, d));
                e.0 += 1;
                if e.0 > 2 {
                    return Err(Error::InvalidNetwork(format!("label {l} appears more than twice")));
                }
                if e.1 != d {
                    return Err(Error::DimensionMismatch {
                        label: l,
                        left: e.1,
                        right: d,
                    });
                }
            }
        }
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn open_labels(&self) -> Vec<Label> {
        let mut count: HashMap<Label, usize> = HashMap::new();
        for t in &self.tensors {
            for &l in t.labels() {
                *count.entry(l).or_default() += 1;
            }
        }
        let mut open: Vec<Label> = count.into_iter().filter(|x| x.1 == 1).map(|x| x.0).collect();
        open.sort();
        open
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(dims: &[usize], pbc: bool) -> LatticeGraph {
        LatticeGraph::build_lattice(dims, &vec![pbc; dims.len()]).unwrap()
    }

    #[test]
    fn site_and_bond_counts() {
        let g = lattice(&[2, 2], false);
        assert_eq!((g.n_sites(), g.bonds().len()), (4, 4));
        let g = lattice(&[10, 10], false);
        assert_eq!((g.n_sites(), g.bonds().len()), (100, 180));
        let g = lattice(&[3, 3, 3], true);
        assert_eq!((g.n_sites(), g.bonds().len()), (27, 81));
    }

    #[test]
    fn neighbour_counts() {
        let g = lattice(&[3, 3], false);
        assert_eq!(g.neighbors(4).unwrap().len(), 4);
        assert_eq!(g.neighbors(0).unwrap().len(), 2);
        let g = lattice(&[3, 3, 3], true);
        assert!((0..27).all(|s| g.neighbors(s).unwrap().len() == 6));
        assert!(matches!(g.neighbors(27), Err(Error::UnknownSite { .. })));
    }

    #[test]
    fn rejects_bad_extents() {
        assert!(LatticeGraph::build_lattice(&[1, 3], &[false, false]).is_err());
        assert!(LatticeGraph::build_lattice(&[2, 3], &[true, false]).is_err());
        assert!(LatticeGraph::build_lattice(&[3, 3], &[true, false]).is_ok());
    }

    #[test]
    fn row_major_coordinates() {
        let g = lattice(&[2, 3], false);
        assert_eq!(g.coord_of(4), Some(vec![1, 1]));
        assert_eq!(g.site_of(&[1, 2]), Some(5));
        assert_eq!(g.bonds()[0], Bond { a: 0, b: 1, axis: 1 });
    }

    #[test]
    fn generic_graph_validation() {
        assert!(LatticeGraph::from_edges(3, &[(0, 1), (1, 2)]).is_ok());
        assert!(LatticeGraph::from_edges(3, &[(0, 1)]).is_err());
        assert!(LatticeGraph::from_edges(2, &[(0, 0)]).is_err());
        assert!(LatticeGraph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn network_label_rules() {
        let t = |l: Vec<Label>, d: Vec<usize>| DenseTensor::zeros(l, d).unwrap();
        assert!(IndexedNetwork::new(vec![t(vec![0], vec![2]), t(vec![0], vec![3])]).is_err());
        assert!(IndexedNetwork::new(vec![t(vec![0], vec![2]); 3]).is_err());
        let net = IndexedNetwork::new(vec![t(vec![0, 1], vec![2, 2]), t(vec![1, 2], vec![2, 2])])
            .unwrap();
        assert_eq!(net.open_labels(), vec![0, 2]);
    }
}
