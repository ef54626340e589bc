use nalgebra::DMatrix;

use super::{DenseTensor, Label};
use crate::error::{Error, Result};

/// `t ≈ u · diag(s) · vh`, contracted over `bond`.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Left factor, labels `left ++ [bond]`, orthonormal columns.
    pub u: DenseTensor,
    /// Kept singular values, descending.
    pub s: Vec<f64>,
    /// Right factor, labels `[bond] ++ right`, orthonormal rows.
    pub vh: DenseTensor,
    /// Root-sum-square of the discarded singular values.
    pub discarded: f64,
}

/// Splits `t` across the bipartition `left | right`, keeping at most `dmax`
/// singular values and dropping those below `cutoff · s_max`.
pub fn truncated_svd(
    t: &DenseTensor,
    left: &[Label],
    right: &[Label],
    bond: Label,
    dmax: usize,
    cutoff: f64,
) -> Result<TruncatedSvd> {
    if left.len() + right.len() != t.rank() {
        return Err(Error::Shape("labels do not partition the tensor".into()));
    }
    if left.contains(&bond) || right.contains(&bond) {
        return Err(Error::Shape(format!("bond label {bond} already in use")));
    }
    if dmax == 0 {
        return Err(Error::InvalidArgument("dmax must be positive".into()));
    }
    if t.data().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let order: Vec<Label> = left.iter().chain(right).copied().collect();
    let p = t.permuted(&order)?;
    let ldims: Vec<usize> = left.iter().map(|&l| t.dim_of(l).unwrap()).collect();
    let rdims: Vec<usize> = right.iter().map(|&l| t.dim_of(l).unwrap()).collect();
    let m: usize = ldims.iter().product();
    let n: usize = rdims.iter().product();

    let mat = DMatrix::from_row_slice(m, n, p.data());
    let svd = mat.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Decomposition("missing left singular vectors".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Decomposition("missing right singular vectors".into()))?;
    let sv = svd.singular_values;
    if sv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decomposition("non-finite singular values".into()));
    }

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let smax = order.first().map_or(0.0, |&i| sv[i]);
    let mut keep = Vec::new();
    let mut discarded = 0.0;
    for &i in &order {
        let s = sv[i];
        if keep.len() < dmax && s > cutoff * smax && s > 0.0 {
            keep.push(i);
        } else {
            discarded += s * s;
        }
    }
    if keep.is_empty() {
        // zero tensor: keep one direction so shapes stay valid
        keep.push(order[0]);
    }
    let k = keep.len();

    let mut udata = Vec::with_capacity(m * k);
    for r in 0..m {
        for &c in &keep {
            udata.push(u[(r, c)]);
        }
    }
    let mut vdata = Vec::with_capacity(k * n);
    for &r in &keep {
        for c in 0..n {
            vdata.push(vt[(r, c)]);
        }
    }
    let mut ulabels = left.to_vec();
    ulabels.push(bond);
    let mut udims = ldims;
    udims.push(k);
    let mut vlabels = vec![bond];
    vlabels.extend_from_slice(right);
    let mut vdims = vec![k];
    vdims.extend(rdims);

    Ok(TruncatedSvd {
        u: DenseTensor::new(ulabels, udims, udata)?,
        s: keep.iter().map(|&i| sv[i]).collect(),
        vh: DenseTensor::new(vlabels, vdims, vdata)?,
        discarded: discarded.sqrt(),
    })
}

impl TruncatedSvd {
    /// `u · diag(s) · vh`, labels `left ++ right`.
    pub fn reconstruct(&self, bond: Label) -> Result<DenseTensor> {
        let mut us = self.u.clone();
        us.scale_along(bond, &self.s)?;
        super::contract_pair(&us, &self.vh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::C64;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, 2.0, 2.0];
        let v = [3.0, 4.0];
        let t = DenseTensor::from_fn(vec![0, 1], vec![3, 2], |i| c(u[i[0]] * v[i[1]])).unwrap();
        let svd = truncated_svd(&t, &[0], &[1], 7, 4, 1e-12).unwrap();
        assert_eq!(svd.s.len(), 1);
        assert!((svd.s[0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn identity_truncated_to_two() {
        let t = DenseTensor::from_fn(vec![0, 1], vec![3, 3], |i| c((i[0] == i[1]) as u8 as f64))
            .unwrap();
        let svd = truncated_svd(&t, &[0], &[1], 7, 2, 0.0).unwrap();
        assert_eq!(svd.s.len(), 2);
        assert!(svd.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((svd.discarded - 1.0).abs() < 1e-12);
        let r = svd.reconstruct(7).unwrap();
        let err = (t.data().iter().zip(r.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()).sqrt();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        // bypass the constructor check by building a valid tensor then scaling
        let t = DenseTensor::from_fn(vec![0, 1], vec![2, 2], |_| c(1.0))
            .unwrap()
            .scaled(c(f64::INFINITY));
        assert!(matches!(
            truncated_svd(&t, &[0], &[1], 9, 2, 0.0),
            Err(Error::NonFinite)
        ));
    }
}
