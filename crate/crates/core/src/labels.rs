//! Index label conventions shared by state, doubled and cluster networks.
//!
//! Virtual (and doubled) bond `b` carries label `b`. The other families live
//! in disjoint high ranges, which caps lattices at 2^20 bonds.

use crate::tensor::Label;

const PHYS: Label = 1 << 20;
const BRA: Label = 1 << 21;
const SCRATCH: Label = 1 << 22;

/// Label of operator-channel index `k` joining the two halves of a two-site
/// insertion.
pub const OPERATOR: Label = 1 << 23;

pub fn bond(b: usize) -> Label {
    b as Label
}

pub fn phys(site: usize) -> Label {
    PHYS + site as Label
}

pub fn bra(b: usize) -> Label {
    BRA + b as Label
}

pub fn scratch(k: usize) -> Label {
    SCRATCH + k as Label
}
