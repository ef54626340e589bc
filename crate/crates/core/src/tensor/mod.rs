//! Dense complex tensors with labelled indices.
//!
//! Data is stored row-major over the label order. Two tensors contract over
//! every label they share; the result carries the left tensor's free labels
//! followed by the right tensor's free labels.

mod path;
mod svd;

pub use path::{contract_network, find_path, ContractionPath, NetworkValue};
pub use svd::{truncated_svd, TruncatedSvd};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Index label. Labels shared by two tensors are summed over.
pub type Label = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    labels: Vec<Label>,
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(labels: Vec<Label>, dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} dimensions",
                labels.len(),
                dims.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Shape(format!("repeated label {l}")));
            }
        }
        if dims.contains(&0) {
            return Err(Error::Shape("zero-sized dimension".into()));
        }
        let size: usize = dims.iter().product();
        if size != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                dims
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { labels, dims, data })
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            labels: vec![],
            dims: vec![],
            data: vec![value],
        }
    }

    pub fn zeros(labels: Vec<Label>, dims: Vec<usize>) -> Result<Self> {
        let size = dims.iter().product();
        Self::new(labels, dims, vec![C64::new(0.0, 0.0); size])
    }

    /// Builds a tensor by evaluating `f` at every multi-index, row-major.
    pub fn from_fn(
        labels: Vec<Label>,
        dims: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> C64,
    ) -> Result<Self> {
        let size: usize = dims.iter().product();
        let mut data = Vec::with_capacity(size);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..size {
            data.push(f(&idx));
            increment(&mut idx, &dims);
        }
        Self::new(labels, dims, data)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn position(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn dim_of(&self, label: Label) -> Option<usize> {
        self.position(label).map(|p| self.dims[p])
    }

    pub fn has_label(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }

    /// Value of a rank-0 tensor.
    pub fn scalar_value(&self) -> Option<C64> {
        (self.labels.is_empty()).then(|| self.data[0])
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        let mut flat = 0;
        for (i, &d) in idx.iter().zip(&self.dims) {
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn relabel(&mut self, from: Label, to: Label) -> Result<()> {
        if from == to {
            return Ok(());
        }
        if self.has_label(to) {
            return Err(Error::Shape(format!("label {to} already present")));
        }
        let p = self
            .position(from)
            .ok_or_else(|| Error::Shape(format!("label {from} not present")))?;
        self.labels[p] = to;
        Ok(())
    }

    /// Returns the tensor with its indices reordered to `order`.
    pub fn permuted(&self, order: &[Label]) -> Result<Self> {
        if order.len() != self.rank() {
            return Err(Error::Shape(format!(
                "permutation {:?} does not match labels {:?}",
                order, self.labels
            )));
        }
        let mut perm = Vec::with_capacity(order.len());
        for l in order {
            let p = self
                .position(*l)
                .ok_or_else(|| Error::Shape(format!("label {l} not present")))?;
            if perm.contains(&p) {
                return Err(Error::Shape(format!("repeated label {l} in permutation")));
            }
            perm.push(p);
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let data = permute_data(&self.data, &self.dims, &perm);
        Ok(Self {
            labels: order.to_vec(),
            dims,
            data,
        })
    }

    /// Merges two indices into one of dimension `dim(a)·dim(b)`, with `a`
    /// the slower-varying part.
    pub fn fuse(&self, a: Label, b: Label, fused: Label) -> Result<Self> {
        let pa = self
            .position(a)
            .ok_or_else(|| Error::Shape(format!("label {a} not present")))?;
        let pb = self
            .position(b)
            .ok_or_else(|| Error::Shape(format!("label {b} not present")))?;
        if pa == pb {
            return Err(Error::Shape("cannot fuse an index with itself".into()));
        }
        let mut order: Vec<Label> = self
            .labels
            .iter()
            .copied()
            .filter(|&l| l != a && l != b)
            .collect();
        let at = pa.min(pb).min(order.len());
        order.insert(at, b);
        order.insert(at, a);
        let mut t = self.permuted(&order)?;
        let da = t.dims[at];
        let db = t.dims[at + 1];
        t.labels.splice(at..at + 2, [fused]);
        t.dims.splice(at..at + 2, [da * db]);
        if t.labels[..at].contains(&fused) || t.labels[at + 1..].contains(&fused) {
            return Err(Error::Shape(format!("label {fused} already present")));
        }
        Ok(t)
    }

    /// Splits one index into two, inverse of [`DenseTensor::fuse`].
    pub fn split(&self, label: Label, a: (Label, usize), b: (Label, usize)) -> Result<Self> {
        let p = self
            .position(label)
            .ok_or_else(|| Error::Shape(format!("label {label} not present")))?;
        if a.1 * b.1 != self.dims[p] {
            return Err(Error::Shape(format!(
                "cannot split dimension {} into {}x{}",
                self.dims[p], a.1, b.1
            )));
        }
        let mut labels = self.labels.clone();
        let mut dims = self.dims.clone();
        labels.splice(p..p + 1, [a.0, b.0]);
        dims.splice(p..p + 1, [a.1, b.1]);
        Self::new(labels, dims, self.data.clone())
    }

    pub fn scale(&mut self, s: C64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.scale(s);
        self
    }

    /// Multiplies the tensor by `weights[k]` wherever index `label` equals `k`.
    pub fn scale_along(&mut self, label: Label, weights: &[f64]) -> Result<()> {
        let p = self
            .position(label)
            .ok_or_else(|| Error::Shape(format!("label {label} not present")))?;
        if weights.len() != self.dims[p] {
            return Err(Error::DimensionMismatch {
                label,
                left: self.dims[p],
                right: weights.len(),
            });
        }
        let inner: usize = self.dims[p + 1..].iter().product();
        let d = self.dims[p];
        for (chunk_idx, chunk) in self.data.chunks_mut(inner).enumerate() {
            let w = weights[chunk_idx % d];
            chunk.iter_mut().for_each(|z| *z *= w);
        }
        Ok(())
    }

    pub fn conj(&self) -> Self {
        Self {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise absolute difference; labels must agree up to order.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let other = other.permuted(&self.labels)?;
        if other.dims != self.dims {
            return Err(Error::Shape("shape mismatch".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Advances a row-major multi-index.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn permute_data(data: &[C64], dims: &[usize], perm: &[usize]) -> Vec<C64> {
    let rank = dims.len();
    let mut strides = vec![1usize; rank];
    for k in (0..rank.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let new_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for k in (0..rank).rev() {
            idx[k] += 1;
            offset += new_strides[k];
            if idx[k] < new_dims[k] {
                break;
            }
            offset -= new_strides[k] * new_dims[k];
            idx[k] = 0;
        }
    }
    out
}

/// Contracts two tensors over all shared labels.
pub fn contract_pair(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let mut shared = Vec::new();
    for (pa, &l) in a.labels.iter().enumerate() {
        if let Some(pb) = b.position(l) {
            if a.dims[pa] != b.dims[pb] {
                return Err(Error::DimensionMismatch {
                    label: l,
                    left: a.dims[pa],
                    right: b.dims[pb],
                });
            }
            shared.push(l);
        }
    }
    let free_a: Vec<Label> = a.labels.iter().copied().filter(|l| !shared.contains(l)).collect();
    let free_b: Vec<Label> = b.labels.iter().copied().filter(|l| !shared.contains(l)).collect();

    let a_order: Vec<Label> = free_a.iter().chain(&shared).copied().collect();
    let b_order: Vec<Label> = shared.iter().chain(&free_b).copied().collect();
    let ap = a.permuted(&a_order)?;
    let bp = b.permuted(&b_order)?;

    let m: usize = free_a.iter().map(|&l| a.dim_of(l).unwrap()).product();
    let k: usize = shared.iter().map(|&l| a.dim_of(l).unwrap()).product();
    let n: usize = free_b.iter().map(|&l| b.dim_of(l).unwrap()).product();
    let data = matmul(&ap.data, &bp.data, m, k, n);

    let mut dims: Vec<usize> = free_a.iter().map(|&l| a.dim_of(l).unwrap()).collect();
    dims.extend(free_b.iter().map(|&l| b.dim_of(l).unwrap()));
    let mut labels = free_a;
    labels.extend(free_b);
    Ok(DenseTensor { labels, dims, data })
}

fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// A complex scalar held as unit phase times `exp(log_abs)`.
///
/// Products of many cluster values over- or underflow as plain floats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogScalar {
    pub phase: C64,
    pub log_abs: f64,
}

impl LogScalar {
    pub fn one() -> Self {
        Self {
            phase: C64::new(1.0, 0.0),
            log_abs: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            phase: C64::new(0.0, 0.0),
            log_abs: f64::NEG_INFINITY,
        }
    }

    pub fn from_c64(z: C64) -> Self {
        let r = z.norm();
        if r == 0.0 {
            Self::zero()
        } else {
            Self {
                phase: z / r,
                log_abs: r.ln(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_abs == f64::NEG_INFINITY || self.phase.norm() == 0.0
    }

    pub fn to_c64(&self) -> C64 {
        if self.is_zero() {
            C64::new(0.0, 0.0)
        } else {
            self.phase * self.log_abs.exp()
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            phase: self.phase * other.phase,
            log_abs: self.log_abs + other.log_abs,
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        Self {
            phase: self.phase / other.phase,
            log_abs: self.log_abs - other.log_abs,
        }
    }

    /// Complex logarithm, principal branch.
    pub fn ln(&self) -> C64 {
        C64::new(self.log_abs, self.phase.arg())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_times_vector() {
        let id = DenseTensor::new(vec![0, 1], vec![2, 2], vec![c(1.0), c(0.0), c(0.0), c(1.0)])
            .unwrap();
        let v = DenseTensor::new(vec![1], vec![2], vec![c(1.0), c(2.0)]).unwrap();
        let r = contract_pair(&id, &v).unwrap();
        assert_eq!(r.labels(), &[0]);
        assert_eq!(r.data(), &[c(1.0), c(2.0)]);
    }

    #[test]
    fn scalars_multiply() {
        let r = contract_pair(&DenseTensor::scalar(c(3.0)), &DenseTensor::scalar(c(4.0))).unwrap();
        assert_eq!(r.scalar_value(), Some(c(12.0)));
    }

    #[test]
    fn mismatched_shared_dimension_is_rejected() {
        let a = DenseTensor::zeros(vec![0, 1], vec![2, 3]).unwrap();
        let b = DenseTensor::zeros(vec![1], vec![2]).unwrap();
        assert!(matches!(
            contract_pair(&a, &b),
            Err(Error::DimensionMismatch { label: 1, .. })
        ));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(DenseTensor::new(vec![0], vec![2], vec![c(1.0)]).is_err());
        assert!(DenseTensor::new(vec![0, 0], vec![1, 1], vec![c(1.0)]).is_err());
        assert!(matches!(
            DenseTensor::new(vec![0], vec![1], vec![c(f64::NAN)]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn permute_then_fuse_and_split() {
        let t = DenseTensor::from_fn(vec![0, 1, 2], vec![2, 3, 4], |i| {
            c((i[0] * 100 + i[1] * 10 + i[2]) as f64)
        })
        .unwrap();
        let p = t.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(&[3, 1, 2]), c(123.0));
        let f = t.fuse(0, 2, 9).unwrap();
        assert_eq!(f.labels(), &[9, 1]);
        assert_eq!(f.get(&[1 * 4 + 3, 2]), c(123.0));
        let s = f.split(9, (0, 2), (2, 4)).unwrap();
        assert_eq!(s.get(&[1, 3, 2]), c(123.0));
    }

    #[test]
    fn scale_along_weights_one_index() {
        let mut t = DenseTensor::from_fn(vec![0, 1], vec![2, 2], |_| c(1.0)).unwrap();
        t.scale_along(1, &[2.0, 3.0]).unwrap();
        assert_eq!(t.data(), &[c(2.0), c(3.0), c(2.0), c(3.0)]);
        t.scale_along(0, &[1.0, 0.5]).unwrap();
        assert_eq!(t.data(), &[c(2.0), c(3.0), c(1.0), c(1.5)]);
    }

    #[test]
    fn log_scalar_round_trip() {
        let z = C64::new(-2.0, 1.5);
        let l = LogScalar::from_c64(z);
        assert!((l.to_c64() - z).norm() < 1e-14);
        let p = l.mul(&l).div(&l);
        assert!((p.to_c64() - z).norm() < 1e-14);
        assert!(LogScalar::from_c64(c(0.0)).is_zero());
    }
}
