//! Wynn ε-algorithm acceleration of the cluster-size sequence `E_C`.
//!
//! ```text
//!   ε_{-1}(E_C) = 0,   ε_0(E_C) = E_C
//!   ε_{k+1}(E_C) = ε_{k-1}(E_{C+1}) + 1 / (ε_k(E_{C+1}) − ε_k(E_C))
//! ```
//!
//! Even columns are the estimates. The final value is the last entry of
//! `ε_4`, with error bar `(|Δε_0| + |Δε_2| + |Δε_4|) / 3` taken from the last
//! two entries of each column.

use serde::Serialize;

use crate::error::{Error, Result};

/// Differences below this (relative to `max(1, |ε|)`) are treated as zero.
pub const DIFFERENCE_TOL: f64 = 1e-14;

/// Column `k` of the table used for the final value.
pub const TARGET_COLUMN: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonTable {
    /// `columns[k + 1]` holds `ε_k`; column `k` has `n − k` entries for
    /// `k ≥ 0`.
    pub columns: Vec<Vec<f64>>,
    /// `(k, j)` of every regularized entry `ε_k[j]`.
    pub regularized: Vec<(usize, usize)>,
}

impl EpsilonTable {
    /// `ε_k`, for `k ≥ 0`.
    pub fn column(&self, k: usize) -> Option<&[f64]> {
        self.columns.get(k + 1).map(Vec::as_slice)
    }

    pub fn input(&self) -> &[f64] {
        &self.columns[1]
    }
}

/// A vanishing difference in column `k` stores `ε_{k-1}(E_{C+1})` in place of
/// the divergent `ε_{k+1}(E_C)` and flags it. The flagged entry counts as
/// infinite one level up, so its reciprocal drops out of `ε_{k+2}`.
pub fn wynn_table(seq: &[f64]) -> Result<EpsilonTable> {
    if seq.len() < 2 {
        return Err(Error::SequenceTooShort { len: seq.len(), need: 2 });
    }
    if seq.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut columns = vec![vec![0.0; seq.len()], seq.to_vec()];
    // entries standing in for an infinite value
    let mut singular: Vec<Vec<bool>> = vec![vec![false; seq.len()]; 2];
    let mut regularized = Vec::new();
    for k in 0..seq.len() - 1 {
        let prev = &columns[k];
        let cur = &columns[k + 1];
        let cur_singular = &singular[k + 1];
        let mut next = Vec::with_capacity(cur.len() - 1);
        let mut next_singular = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let diff = cur[j + 1] - cur[j];
            let scale = cur[j].abs().max(cur[j + 1].abs()).max(1.0);
            if cur_singular[j] || cur_singular[j + 1] {
                next.push(prev[j + 1]);
                next_singular.push(false);
            } else if diff.abs() < DIFFERENCE_TOL * scale {
                regularized.push((k + 1, j));
                next.push(prev[j + 1]);
                next_singular.push(true);
            } else {
                next.push(prev[j + 1] + 1.0 / diff);
                next_singular.push(false);
            }
        }
        columns.push(next);
        singular.push(next_singular);
    }
    Ok(EpsilonTable { columns, regularized })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtrapolationResult {
    pub value: f64,
    pub error: f64,
    pub k_used: usize,
    pub c_max: usize,
    pub flags: Vec<String>,
    pub table: EpsilonTable,
}

/// Extrapolates `values[i] = E_{first_size + i}`.
///
/// Sequences too short for `ε_4` use the highest even column available. The
/// error bar averages the final gradients of the even columns up to the one
/// used that hold at least two entries.
pub fn extrapolate(values: &[f64], first_size: usize) -> Result<ExtrapolationResult> {
    let table = wynn_table(values)?;
    let n = values.len();
    let mut flags = Vec::new();
    let k_used = if n > TARGET_COLUMN {
        TARGET_COLUMN
    } else {
        flags.push("short_sequence".to_string());
        (n - 1) & !1
    };
    let col = table.column(k_used).unwrap();
    let value = *col.last().unwrap();

    let gradients: Vec<f64> = (0..=k_used)
        .step_by(2)
        .filter_map(|k| {
            let c = table.column(k)?;
            (c.len() >= 2).then(|| (c[c.len() - 1] - c[c.len() - 2]).abs())
        })
        .collect();
    if gradients.len() < k_used / 2 + 1 {
        flags.push("partial_gradient".to_string());
    }
    let error = if gradients.is_empty() {
        0.0
    } else {
        gradients.iter().sum::<f64>() / gradients.len() as f64
    };
    if table.regularized.iter().any(|&(k, _)| k <= k_used) {
        flags.push("regularized".to_string());
    }
    if !value.is_finite() || !error.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(ExtrapolationResult {
        value,
        error,
        k_used,
        c_max: first_size + n - 1,
        flags,
        table,
    })
}
