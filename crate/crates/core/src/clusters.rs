//! Generalized-loop regions around anchor sites, their intersection closure
//! and inclusion–exclusion counting numbers.
//!
//! A region is a connected site set whose bonds are all lattice bonds among
//! its sites. It is a generalized loop when every non-anchor site has at
//! least two neighbours inside the region.

use std::collections::{HashSet, VecDeque};

use rustc_hash::FxHashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tngraph::LatticeGraph;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Region {
    /// Sorted site ids.
    pub sites: Vec<usize>,
    /// Sorted anchor ids, a subset of `sites`.
    pub anchors: Vec<usize>,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, mut anchors: Vec<usize>) -> Self {
        sites.sort_unstable();
        sites.dedup();
        anchors.sort_unstable();
        anchors.dedup();
        Self { sites, anchors }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    /// Whether every site of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &Region) -> bool {
        is_sorted_subset(&self.sites, &other.sites)
    }

    /// Ids of all lattice bonds with both ends in the region.
    pub fn induced_bonds(&self, g: &LatticeGraph) -> Vec<usize> {
        g.bonds()
            .iter()
            .enumerate()
            .filter(|(_, b)| self.contains(b.a) && self.contains(b.b))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn is_connected(&self, g: &LatticeGraph) -> bool {
        components(g, &self.sites).len() <= 1
    }

    /// Whether every non-anchor site has induced degree at least two.
    pub fn is_generalized_loop(&self, g: &LatticeGraph) -> bool {
        self.sites
            .iter()
            .filter(|s| self.anchors.binary_search(s).is_err())
            .all(|&s| induced_degree(g, &self.sites, s) >= 2)
    }
}

fn is_sorted_subset(a: &[usize], b: &[usize]) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

fn induced_degree(g: &LatticeGraph, sorted_sites: &[usize], s: usize) -> usize {
    g.neighbors(s)
        .map(|n| n.iter().filter(|(t, _)| sorted_sites.binary_search(t).is_ok()).count())
        .unwrap_or(0)
}

/// Connected components of the induced subgraph on `sorted_sites`, each
/// sorted, ordered by smallest site.
pub fn components(g: &LatticeGraph, sorted_sites: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &root in sorted_sites {
        if !seen.insert(root) {
            continue;
        }
        let mut comp = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(s) = queue.pop_front() {
            for &(t, _) in g.neighbors(s).unwrap_or(&[]) {
                if sorted_sites.binary_search(&t).is_ok() && seen.insert(t) {
                    comp.push(t);
                    queue.push_back(t);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

struct Search<'a> {
    g: &'a LatticeGraph,
    anchors: &'a [usize],
    max_size: usize,
    max_degree: usize,
    in_set: Vec<bool>,
    excluded: Vec<bool>,
    found: Vec<Region>,
}

impl Search<'_> {
    fn is_anchor(&self, s: usize) -> bool {
        self.anchors.contains(&s)
    }

    fn degree_in(&self, s: usize) -> usize {
        self.g.neighbors(s).unwrap().iter().filter(|(t, _)| self.in_set[*t]).count()
    }

    /// Whether the current set can no longer grow into a generalized loop.
    fn hopeless(&self, set: &[usize]) -> bool {
        let mut total_need = 0;
        for &s in set {
            if self.is_anchor(s) {
                continue;
            }
            let deg = self.degree_in(s);
            if deg >= 2 {
                continue;
            }
            let need = 2 - deg;
            let avail = self
                .g
                .neighbors(s)
                .unwrap()
                .iter()
                .filter(|(t, _)| !self.in_set[*t] && !self.excluded[*t])
                .count();
            if avail < need {
                return true;
            }
            total_need += need;
        }
        total_need.div_ceil(self.max_degree.max(1)) > self.max_size - set.len()
    }

    /// Include/exclude branching over the candidate frontier: every connected
    /// superset of the start set is reached by exactly one leaf.
    fn branch(&mut self, set: &mut Vec<usize>, cand: Vec<usize>) {
        if self.hopeless(set) {
            return;
        }
        if set.len() == self.max_size || cand.is_empty() {
            if set.iter().all(|&s| self.is_anchor(s) || self.degree_in(s) >= 2) {
                self.found.push(Region::new(set.clone(), self.anchors.to_vec()));
            }
            return;
        }
        let v = cand[0];
        let rest = cand[1..].to_vec();

        let mut grown = rest.clone();
        for &(w, _) in self.g.neighbors(v).unwrap() {
            if w != v && !self.in_set[w] && !self.excluded[w] && !grown.contains(&w) {
                grown.push(w);
            }
        }
        self.in_set[v] = true;
        set.push(v);
        self.branch(set, grown);
        set.pop();
        self.in_set[v] = false;

        self.excluded[v] = true;
        self.branch(set, rest);
        self.excluded[v] = false;
    }
}

/// All generalized loops with at most `max_size` sites containing `anchors`.
///
/// With empty `anchors`, loops anywhere on the lattice are returned
/// (anchor-free mode); otherwise the anchors must form a connected set and
/// the anchor-only region is always part of the result. Output is sorted by
/// size, then lexicographically.
pub fn enumerate_loop_clusters(g: &LatticeGraph, anchors: &[usize], max_size: usize) -> Result<Vec<Region>> {
    let mut anchors = anchors.to_vec();
    anchors.sort_unstable();
    anchors.dedup();
    for &a in &anchors {
        if a >= g.n_sites() {
            return Err(Error::UnknownSite {
                site: a,
                n_sites: g.n_sites(),
            });
        }
    }
    if max_size < anchors.len() {
        return Err(Error::InvalidCluster(format!(
            "cluster size {max_size} is smaller than the {} anchor sites",
            anchors.len()
        )));
    }
    if components(g, &anchors).len() > 1 {
        return Err(Error::InvalidCluster(format!("anchors {anchors:?} are not connected")));
    }
    let n = g.n_sites();
    let mut search = Search {
        g,
        anchors: &anchors,
        max_size,
        max_degree: (0..n).map(|s| g.degree(s)).max().unwrap_or(0),
        in_set: vec![false; n],
        excluded: vec![false; n],
        found: Vec::new(),
    };
    let frontier = |search: &Search, set: &[usize]| {
        let mut cand = Vec::new();
        for &s in set {
            for &(t, _) in g.neighbors(s).unwrap() {
                if !search.in_set[t] && !search.excluded[t] && !cand.contains(&t) {
                    cand.push(t);
                }
            }
        }
        cand
    };
    if anchors.is_empty() {
        for root in 0..n {
            if max_size == 0 {
                break;
            }
            search.in_set[root] = true;
            let cand = frontier(&search, &[root]);
            let mut set = vec![root];
            search.branch(&mut set, cand);
            search.in_set[root] = false;
            search.excluded[root] = true;
        }
    } else {
        for &a in &anchors {
            search.in_set[a] = true;
        }
        let cand = frontier(&search, &anchors);
        let mut set = anchors.clone();
        search.branch(&mut set, cand);
    }
    let mut found = search.found;
    found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.sites.cmp(&b.sites)));
    Ok(found)
}

/// Strips non-anchor sites with at most one neighbour in the region until
/// none remain. Fully tree-like regions collapse onto their anchors.
pub fn reduce_region(g: &LatticeGraph, r: &Region) -> Region {
    let mut sites = r.sites.clone();
    loop {
        let keep: Vec<usize> = sites
            .iter()
            .copied()
            .filter(|s| r.anchors.binary_search(s).is_ok() || induced_degree(g, &sites, *s) >= 2)
            .collect();
        if keep.len() == sites.len() {
            break;
        }
        sites = keep;
    }
    Region::new(sites, r.anchors.clone())
}

/// Regions closed under intersection, with strict containment and counting
/// numbers `c(r) = 1 − Σ_{a ⊋ r} c(a)`.
#[derive(Clone, Debug, Serialize)]
pub struct RegionPoset {
    pub anchors: Vec<usize>,
    /// Sorted by decreasing size, then lexicographically.
    pub regions: Vec<Region>,
    /// Indices of the strict supersets of each region.
    #[serde(skip)]
    pub supersets: Vec<Vec<usize>>,
    pub counting: Vec<i64>,
}

impl RegionPoset {
    /// Builds containment and counting numbers for an already closed family.
    pub fn from_regions(anchors: &[usize], regions: impl IntoIterator<Item = Region>) -> Self {
        let mut regions: Vec<Region> = regions.into_iter().collect::<HashSet<_>>().into_iter().collect();
        regions.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.sites.cmp(&b.sites)));
        let n_sites = regions.iter().filter_map(|r| r.sites.last()).max().map_or(0, |m| m + 1);
        let words = n_sites.div_ceil(64).max(1);
        let bits: Vec<Vec<u64>> = regions
            .iter()
            .map(|r| {
                let mut b = vec![0u64; words];
                for &s in &r.sites {
                    b[s / 64] |= 1 << (s % 64);
                }
                b
            })
            .collect();
        let supersets: Vec<Vec<usize>> = (0..regions.len())
            .map(|i| {
                (0..i)
                    .filter(|&j| {
                        regions[j].len() > regions[i].len()
                            && bits[i].iter().zip(&bits[j]).all(|(a, b)| a & !b == 0)
                    })
                    .collect()
            })
            .collect();
        let mut poset = Self {
            anchors: anchors.to_vec(),
            regions,
            supersets,
            counting: Vec::new(),
        };
        counting_numbers(&mut poset);
        poset
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Regions with a nonzero counting number, paired with it.
    pub fn contributing(&self) -> impl Iterator<Item = (&Region, i64)> {
        self.regions.iter().zip(&self.counting).filter(|x| *x.1 != 0).map(|(r, &c)| (r, c))
    }

    /// Largest deviation from `Σ_{a ⊇ r} c(a) = 1` over all regions.
    pub fn counting_identity_defect(&self) -> i64 {
        (0..self.len())
            .map(|i| {
                let total: i64 = self.counting[i] + self.supersets[i].iter().map(|&j| self.counting[j]).sum::<i64>();
                (total - 1).abs()
            })
            .max()
            .unwrap_or(0)
    }
}

impl RegionPoset {
    /// The image of the poset under a site permutation that is a lattice
    /// automorphism, `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let map = |v: &[usize]| v.iter().map(|&s| perm[s]).collect::<Vec<_>>();
        let mapped: Vec<Region> = self.regions.iter().map(|r| Region::new(map(&r.sites), map(&r.anchors))).collect();
        let mut order: Vec<usize> = (0..mapped.len()).collect();
        order.sort_by(|&a, &b| mapped[b].len().cmp(&mapped[a].len()).then_with(|| mapped[a].sites.cmp(&mapped[b].sites)));
        let mut position = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let mut anchors = map(&self.anchors);
        anchors.sort_unstable();
        Self {
            anchors,
            regions: order.iter().map(|&i| mapped[i].clone()).collect(),
            supersets: order
                .iter()
                .map(|&i| {
                    let mut s: Vec<usize> = self.supersets[i].iter().map(|&j| position[j]).collect();
                    s.sort_unstable();
                    s
                })
                .collect(),
            counting: order.iter().map(|&i| self.counting[i]).collect(),
        }
    }
}

/// Translation-class representative of `anchors` on a fully periodic
/// lattice: the lexicographically smallest translate with some anchor at the
/// origin, and the site map carrying the representative back to `anchors`.
pub fn translation_class(g: &LatticeGraph, anchors: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    let dims = g.dims().to_vec();
    anchors
        .iter()
        .filter_map(|&a| {
            let c = g.coord_of(a)?;
            let back: Vec<usize> = c.clone();
            let to_origin: Vec<usize> = c.iter().zip(&dims).map(|(x, d)| (d - x) % d).collect();
            let fwd = g.translation(&to_origin)?;
            let mut key: Vec<usize> = anchors.iter().map(|&s| fwd[s]).collect();
            key.sort_unstable();
            Some((key, g.translation(&back)?))
        })
        .min_by(|a, b| a.0.cmp(&b.0))
}

/// Fills `c(r)` top-down from the maximal regions.
pub fn counting_numbers(p: &mut RegionPoset) {
    let mut c = vec![0i64; p.regions.len()];
    for i in 0..p.regions.len() {
        c[i] = 1 - p.supersets[i].iter().map(|&j| c[j]).sum::<i64>();
    }
    p.counting = c;
}

/// Closes `regions` under pairwise intersection. Each intersection is split
/// into connected components; with anchors only the component holding them
/// is kept, in anchor-free mode every component is.
pub fn close_under_intersection(g: &LatticeGraph, anchors: &[usize], regions: &[Region]) -> RegionPoset {
    let mut anchors = anchors.to_vec();
    anchors.sort_unstable();
    let words = g.n_sites().div_ceil(64).max(1);
    let to_bits = |sites: &[usize]| {
        let mut b = vec![0u64; words];
        for &s in sites {
            b[s / 64] |= 1 << (s % 64);
        }
        b
    };
    let from_bits = |b: &[u64]| -> Vec<usize> {
        (0..g.n_sites()).filter(|&s| b[s / 64] >> (s % 64) & 1 == 1).collect()
    };
    let generators: Vec<Vec<u64>> = regions
        .iter()
        .map(|r| to_bits(&r.sites))
        .collect::<FxHashSet<_>>()
        .into_iter()
        .collect();
    let mut family: FxHashSet<Vec<u64>> = generators.iter().cloned().collect();
    let mut tried: FxHashSet<Vec<u64>> = FxHashSet::default();
    let mut queue: VecDeque<Vec<u64>> = generators.iter().cloned().collect();
    let mut inter = vec![0u64; words];
    while let Some(r) = queue.pop_front() {
        for x in &generators {
            let mut proper = false;
            let mut empty = true;
            for ((w, a), b) in inter.iter_mut().zip(&r).zip(x) {
                *w = a & b;
                proper |= *w != *a;
                empty &= *w == 0;
            }
            if !proper || empty || tried.contains(&inter) {
                continue;
            }
            tried.insert(inter.clone());
            for comp in components(g, &from_bits(&inter)) {
                if !anchors.iter().all(|a| comp.binary_search(a).is_ok()) {
                    continue;
                }
                let bits = to_bits(&comp);
                if !family.contains(&bits) {
                    family.insert(bits.clone());
                    queue.push_back(bits);
                }
            }
        }
    }
    let closed = family.iter().map(|b| Region::new(from_bits(b), anchors.clone()));
    RegionPoset::from_regions(&anchors, closed)
}

/// Intersection-closed family of all generalized loops of at most
/// `max_size` sites around `anchors`.
pub fn loop_poset(g: &LatticeGraph, anchors: &[usize], max_size: usize) -> Result<RegionPoset> {
    let loops = enumerate_loop_clusters(g, anchors, max_size)?;
    Ok(close_under_intersection(g, anchors, &loops))
}
