//! Dense log-domain tensors whose axes are identified by [`AxisId`].
//!
//! Every binary operation aligns operands by axis identity, never by position,
//! so a factor over `(k2, k1)` multiplies correctly against one over `(k1, k3)`.
//! Storage is row-major with the last axis varying fastest.

use std::fmt;

use thiserror::Error;

/// Identifies one sample-index variable `k_i` (or one enumerated discrete latent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AxisId(pub u32);

impl fmt::Display for AxisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("axis {axis} has cardinality {left} in one operand and {right} in the other")]
    CardinalityMismatch {
        axis: AxisId,
        left: usize,
        right: usize,
    },
    #[error("axis {0} is not present")]
    MissingAxis(AxisId),
    #[error("axis {0} appears more than once")]
    DuplicateAxis(AxisId),
    #[error("axis {0} has zero cardinality")]
    EmptyAxis(AxisId),
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("entry {index} is {value}; log-domain entries must be finite or -inf")]
    InvalidEntry { index: usize, value: f64 },
    #[error("factor {index} does not mention axis {axis}")]
    FactorMissingAxis { index: usize, axis: AxisId },
    #[error("cannot contract an empty list of factors")]
    EmptyContraction,
    #[error("logmmexp operands must have at most two axes and distinct free axes")]
    NotAMatrixProduct,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[inline]
pub(crate) fn is_log_valid(v: f64) -> bool {
    v.is_finite() || v == f64::NEG_INFINITY
}

/// A dense tensor of log-domain values over a set of labelled axes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTensor {
    axes: Vec<(AxisId, usize)>,
    data: Vec<f64>,
}

impl LogTensor {
    /// Builds a tensor, checking shape and that every entry is finite or `-inf`.
    pub fn new(axes: Vec<(AxisId, usize)>, data: Vec<f64>) -> Result<Self> {
        check_axes(&axes)?;
        let expected = axes.iter().map(|&(_, n)| n).product::<usize>();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !is_log_valid(**v)) {
            return Err(TensorError::InvalidEntry { index, value });
        }
        Ok(Self { axes, data })
    }

    /// A rank-zero tensor.
    ///
    /// Panics if `value` is NaN or `+inf`.
    pub fn scalar(value: f64) -> Self {
        assert!(is_log_valid(value), "invalid log-domain scalar {value}");
        Self {
            axes: Vec::new(),
            data: vec![value],
        }
    }

    /// All entries zero, i.e. the constant function one.
    pub fn zeros(axes: Vec<(AxisId, usize)>) -> Result<Self> {
        check_axes(&axes)?;
        let len = axes.iter().map(|&(_, n)| n).product();
        Ok(Self {
            axes,
            data: vec![0.0; len],
        })
    }

    /// Fills a tensor by evaluating `f` at every multi-index (in axis order).
    pub fn from_fn(axes: Vec<(AxisId, usize)>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_axes(&axes)?;
        let dims: Vec<usize> = axes.iter().map(|&(_, n)| n).collect();
        let len = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Self::new(axes, data)
    }

    /// Internal constructor for results of operations that preserve the invariants.
    pub(crate) fn from_parts(axes: Vec<(AxisId, usize)>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), axes.iter().map(|&(_, n)| n).product::<usize>());
        Self { axes, data }
    }

    pub fn axes(&self) -> &[(AxisId, usize)] {
        &self.axes
    }

    pub fn axis_ids(&self) -> impl Iterator<Item = AxisId> + '_ {
        self.axes.iter().map(|&(a, _)| a)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|&(_, n)| n).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn position(&self, axis: AxisId) -> Option<usize> {
        self.axes.iter().position(|&(a, _)| a == axis)
    }

    pub fn has_axis(&self, axis: AxisId) -> bool {
        self.position(axis).is_some()
    }

    pub fn cardinality(&self, axis: AxisId) -> Option<usize> {
        self.position(axis).map(|p| self.axes[p].1)
    }

    /// The single entry of a rank-zero tensor.
    pub fn value(&self) -> Option<f64> {
        self.is_scalar().then(|| self.data[0])
    }

    /// Entry at a multi-index given in this tensor's axis order.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.axes.len());
        let mut off = 0;
        for (&i, &(_, n)) in index.iter().zip(&self.axes) {
            assert!(i < n);
            off = off * n + i;
        }
        self.data[off]
    }

    pub(crate) fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.shape())
    }

    /// Stride of each of `axes` in this tensor's storage (zero where absent).
    pub(crate) fn strides_along(&self, axes: &[(AxisId, usize)]) -> Vec<usize> {
        let own = self.strides();
        axes.iter()
            .map(|&(a, _)| self.position(a).map_or(0, |p| own[p]))
            .collect()
    }

    /// Applies `f` to every entry; the result must stay finite or `-inf`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.axes.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Multiplies every log entry by `c > 0`; in the linear domain this raises
    /// the tensor to the power `c`.
    pub fn powf(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite());
        Self::from_parts(self.axes.clone(), self.data.iter().map(|v| v * c).collect())
    }

    /// Renames axis `from` to `to`, keeping the storage order.
    pub fn relabel(&self, from: AxisId, to: AxisId) -> Result<Self> {
        let pos = self.position(from).ok_or(TensorError::MissingAxis(from))?;
        let mut axes = self.axes.clone();
        axes[pos].0 = to;
        check_axes(&axes)?;
        Ok(Self::from_parts(axes, self.data.clone()))
    }

    /// Reorders storage so axes appear in `order` (which must be a permutation).
    pub fn permuted(&self, order: &[AxisId]) -> Result<Self> {
        if order.len() != self.axes.len() {
            return Err(TensorError::LengthMismatch {
                expected: self.axes.len(),
                actual: order.len(),
            });
        }
        let mut axes = Vec::with_capacity(order.len());
        for &a in order {
            let n = self.cardinality(a).ok_or(TensorError::MissingAxis(a))?;
            axes.push((a, n));
        }
        check_axes(&axes)?;
        let strides = self.strides_along(&axes);
        let mut data = Vec::with_capacity(self.data.len());
        for_each_offset(&axes, &[strides], |offs| data.push(self.data[offs[0]]));
        Ok(Self::from_parts(axes, data))
    }

    pub fn log_mul(&self, other: &LogTensor) -> Result<LogTensor> {
        log_mul(self, other)
    }

    pub fn logsumexp_reduce(&self, axis: AxisId, normalize: bool) -> Result<LogTensor> {
        logsumexp_reduce(self, axis, normalize)
    }
}

fn check_axes(axes: &[(AxisId, usize)]) -> Result<()> {
    for (i, &(a, n)) in axes.iter().enumerate() {
        if n == 0 {
            return Err(TensorError::EmptyAxis(a));
        }
        if axes[..i].iter().any(|&(b, _)| b == a) {
            return Err(TensorError::DuplicateAxis(a));
        }
    }
    Ok(())
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for d in (0..dims.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * dims[d + 1];
    }
    strides
}

/// Union of axes across operands, first-seen order, checking shared cardinalities.
pub(crate) fn union_axes<'a>(
    tensors: impl IntoIterator<Item = &'a LogTensor>,
) -> Result<Vec<(AxisId, usize)>> {
    let mut out: Vec<(AxisId, usize)> = Vec::new();
    for t in tensors {
        for &(a, n) in &t.axes {
            match out.iter().find(|&&(b, _)| b == a) {
                Some(&(_, m)) if m != n => {
                    return Err(TensorError::CardinalityMismatch {
                        axis: a,
                        left: m,
                        right: n,
                    })
                }
                Some(_) => {}
                None => out.push((a, n)),
            }
        }
    }
    Ok(out)
}

/// Walks `axes` in row-major order, handing `f` the storage offset of each
/// operand (one stride vector per operand, aligned with `axes`).
pub(crate) fn for_each_offset(
    axes: &[(AxisId, usize)],
    strides: &[Vec<usize>],
    mut f: impl FnMut(&[usize]),
) {
    let dims: Vec<usize> = axes.iter().map(|&(_, n)| n).collect();
    let total: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    let mut offs = vec![0usize; strides.len()];
    for _ in 0..total {
        f(&offs);
        for d in (0..dims.len()).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                for (o, s) in offs.iter_mut().zip(strides) {
                    *o += s[d];
                }
                break;
            }
            for (o, s) in offs.iter_mut().zip(strides) {
                *o -= s[d] * (dims[d] - 1);
            }
            idx[d] = 0;
        }
    }
}

/// Log-domain product: entries add after aligning axes by id. The result has
/// `a`'s axes followed by the axes only `b` carries.
pub fn log_mul(a: &LogTensor, b: &LogTensor) -> Result<LogTensor> {
    let axes = union_axes([a, b])?;
    let strides = [a.strides_along(&axes), b.strides_along(&axes)];
    let mut data = Vec::with_capacity(axes.iter().map(|&(_, n)| n).product());
    for_each_offset(&axes, &strides, |o| data.push(a.data[o[0]] + b.data[o[1]]));
    Ok(LogTensor::from_parts(axes, data))
}

/// Removes `axis` by `log Σ_k exp(t_k)`, subtracting the slice maximum first.
/// With `normalize` the result is the log of the mean instead of the sum.
pub fn logsumexp_reduce(t: &LogTensor, axis: AxisId, normalize: bool) -> Result<LogTensor> {
    let pos = t.position(axis).ok_or(TensorError::MissingAxis(axis))?;
    let n = t.axes[pos].1;
    let stride = t.strides()[pos];
    let out_axes: Vec<_> = t.axes.iter().copied().filter(|&(a, _)| a != axis).collect();
    let in_strides = t.strides_along(&out_axes);
    let shift = if normalize { (n as f64).ln() } else { 0.0 };
    let mut data = Vec::with_capacity(t.len() / n);
    for_each_offset(&out_axes, &[in_strides], |o| {
        let base = o[0];
        let v = lse_strided(&t.data, base, stride, n);
        data.push(if v == f64::NEG_INFINITY { v } else { v - shift });
    });
    Ok(LogTensor::from_parts(out_axes, data))
}

#[inline]
pub(crate) fn lse_strided(data: &[f64], base: usize, stride: usize, n: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for j in 0..n {
        max = max.max(data[base + j * stride]);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for j in 0..n {
        sum += (data[base + j * stride] - max).exp();
    }
    max + sum.ln()
}

/// `log Σ_i exp(v_i)` over a slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    lse_strided(values, 0, 1, values.len())
}

/// Matrix layout of a logmmexp operand: the contracted axis and at most one free axis.
pub(crate) struct MatView {
    pub free: Option<(AxisId, usize)>,
    pub free_stride: usize,
    pub shared_stride: usize,
}

pub(crate) fn mat_view(t: &LogTensor, shared: AxisId) -> Result<MatView> {
    if t.rank() > 2 {
        return Err(TensorError::NotAMatrixProduct);
    }
    let strides = t.strides();
    let sp = t.position(shared).ok_or(TensorError::MissingAxis(shared))?;
    let free = (0..t.rank()).find(|&p| p != sp);
    Ok(MatView {
        free: free.map(|p| t.axes[p]),
        free_stride: free.map_or(0, |p| strides[p]),
        shared_stride: strides[sp],
    })
}

/// Log-domain matrix product `Z_ik = log Σ_j exp(X_ij) exp(Y_jk)` over the
/// shared axis, stabilised by subtracting the row maxima of `X` and the
/// column maxima of `Y` before exponentiating.
///
/// `x` and `y` each carry the shared axis plus at most one free axis; the
/// output carries `x`'s free axis then `y`'s.
pub fn logmmexp(x: &LogTensor, y: &LogTensor, shared: AxisId) -> Result<LogTensor> {
    let xv = mat_view(x, shared)?;
    let yv = mat_view(y, shared)?;
    let nj = x.cardinality(shared).unwrap();
    let nj_y = y.cardinality(shared).unwrap();
    if nj != nj_y {
        return Err(TensorError::CardinalityMismatch {
            axis: shared,
            left: nj,
            right: nj_y,
        });
    }
    if let (Some((a, _)), Some((b, _))) = (xv.free, yv.free) {
        if a == b {
            return Err(TensorError::NotAMatrixProduct);
        }
    }
    let ni = xv.free.map_or(1, |(_, n)| n);
    let nk = yv.free.map_or(1, |(_, n)| n);

    let row_max: Vec<f64> = (0..ni)
        .map(|i| {
            (0..nj)
                .map(|j| x.data[i * xv.free_stride + j * xv.shared_stride])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let col_max: Vec<f64> = (0..nk)
        .map(|k| {
            (0..nj)
                .map(|j| y.data[j * yv.shared_stride + k * yv.free_stride])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    // Shifted exponentials, laid out (i, j) and (j, k) contiguously.
    let mut ex = vec![0.0; ni * nj];
    for i in 0..ni {
        if row_max[i] == f64::NEG_INFINITY {
            continue;
        }
        for j in 0..nj {
            ex[i * nj + j] = (x.data[i * xv.free_stride + j * xv.shared_stride] - row_max[i]).exp();
        }
    }
    let mut ey = vec![0.0; nj * nk];
    for j in 0..nj {
        for k in 0..nk {
            if col_max[k] != f64::NEG_INFINITY {
                ey[j * nk + k] = (y.data[j * yv.shared_stride + k * yv.free_stride] - col_max[k]).exp();
            }
        }
    }

    let mut data = vec![0.0; ni * nk];
    for i in 0..ni {
        let row = &ex[i * nj..(i + 1) * nj];
        let out = &mut data[i * nk..(i + 1) * nk];
        for (j, &e) in row.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            let col = &ey[j * nk..(j + 1) * nk];
            for (o, &c) in out.iter_mut().zip(col) {
                *o += e * c;
            }
        }
    }
    for i in 0..ni {
        for k in 0..nk {
            let s = data[i * nk + k];
            data[i * nk + k] = if row_max[i] == f64::NEG_INFINITY || col_max[k] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else if s >= f64::MIN_POSITIVE {
                s.ln() + row_max[i] + col_max[k]
            } else {
                // The row and column maxima sit at different j, so every shifted
                // product underflowed; fall back to an exact per-entry reduction.
                let mut max = f64::NEG_INFINITY;
                for j in 0..nj {
                    max = max.max(
                        x.data[i * xv.free_stride + j * xv.shared_stride]
                            + y.data[j * yv.shared_stride + k * yv.free_stride],
                    );
                }
                if max == f64::NEG_INFINITY {
                    max
                } else {
                    let sum: f64 = (0..nj)
                        .map(|j| {
                            (x.data[i * xv.free_stride + j * xv.shared_stride]
                                + y.data[j * yv.shared_stride + k * yv.free_stride]
                                - max)
                                .exp()
                        })
                        .sum();
                    max + sum.ln()
                }
            };
        }
    }
    let axes = xv.free.into_iter().chain(yv.free).collect();
    Ok(LogTensor::from_parts(axes, data))
}

/// Sums `axis` out of the log-product of `factors`, optionally dividing by its
/// cardinality. Every factor must mention `axis`.
pub fn contract(factors: &[&LogTensor], axis: AxisId, normalize: bool) -> Result<LogTensor> {
    if factors.is_empty() {
        return Err(TensorError::EmptyContraction);
    }
    for (index, f) in factors.iter().enumerate() {
        if !f.has_axis(axis) {
            return Err(TensorError::FactorMissingAxis { index, axis });
        }
    }
    union_axes(factors.iter().copied())?;
    if let [x, y] = factors {
        if is_matrix_pair(x, y, axis) {
            let z = logmmexp(x, y, axis)?;
            if !normalize {
                return Ok(z);
            }
            let shift = (x.cardinality(axis).unwrap() as f64).ln();
            return Ok(LogTensor::from_parts(
                z.axes,
                z.data.into_iter().map(|v| v - shift).collect(),
            ));
        }
    }
    let mut product = factors[0].clone();
    for f in &factors[1..] {
        product = log_mul(&product, f)?;
    }
    logsumexp_reduce(&product, axis, normalize)
}

/// True when `x` and `y` form a matrix product over `axis`: each has at most
/// two axes and their free axes differ.
pub(crate) fn is_matrix_pair(x: &LogTensor, y: &LogTensor, axis: AxisId) -> bool {
    if x.rank() > 2 || y.rank() > 2 {
        return false;
    }
    let free_x = x.axis_ids().find(|&a| a != axis);
    let free_y = y.axis_ids().find(|&a| a != axis);
    !matches!((free_x, free_y), (Some(a), Some(b)) if a == b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    const A: AxisId = AxisId(0);
    const B: AxisId = AxisId(1);
    const C: AxisId = AxisId(2);

    fn t(axes: &[(AxisId, usize)], data: &[f64]) -> LogTensor {
        LogTensor::new(axes.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn scalar_times_scalar() {
        let r = log_mul(&LogTensor::scalar(0.0), &LogTensor::scalar(0.0)).unwrap();
        assert_eq!(r.value(), Some(0.0));
    }

    #[test]
    fn vector_times_scalar_broadcasts() {
        let v = t(&[(A, 2)], &[0.0, LN_2]);
        let r = log_mul(&v, &LogTensor::scalar(3f64.ln())).unwrap();
        assert!((r.data()[0] - 3f64.ln()).abs() < 1e-15);
        assert!((r.data()[1] - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn outer_product_of_ones() {
        let r = log_mul(&t(&[(A, 2)], &[0.0, 0.0]), &t(&[(B, 2)], &[0.0, 0.0])).unwrap();
        assert_eq!(r.axes(), &[(A, 2), (B, 2)]);
        assert_eq!(r.data(), &[0.0; 4]);
    }

    #[test]
    fn log_mul_aligns_by_axis_id() {
        // f over (B, A), g over (A): result entry (b, a) = f[b, a] + g[a].
        let f = t(&[(B, 2), (A, 3)], &[0., 1., 2., 3., 4., 5.]);
        let g = t(&[(A, 3)], &[10., 20., 30.]);
        let r = log_mul(&f, &g).unwrap();
        assert_eq!(r.data(), &[10., 21., 32., 13., 24., 35.]);
    }

    #[test]
    fn log_mul_rejects_cardinality_mismatch() {
        let err = log_mul(&t(&[(A, 2)], &[0.0; 2]), &t(&[(A, 3)], &[0.0; 3])).unwrap_err();
        assert!(matches!(err, TensorError::CardinalityMismatch { axis: A, .. }));
    }

    #[test]
    fn neg_infinity_propagates_through_products() {
        let r = log_mul(
            &t(&[(A, 2)], &[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            &t(&[(A, 2)], &[1.0, f64::NEG_INFINITY]),
        )
        .unwrap();
        assert!(r.data().iter().all(|&v| v == f64::NEG_INFINITY));
    }

    #[test]
    fn construction_rejects_nan_and_pos_inf() {
        assert!(LogTensor::new(vec![(A, 1)], vec![f64::NAN]).is_err());
        assert!(LogTensor::new(vec![(A, 1)], vec![f64::INFINITY]).is_err());
        assert!(LogTensor::new(vec![(A, 2), (A, 2)], vec![0.0; 4]).is_err());
        assert!(LogTensor::new(vec![(A, 2)], vec![0.0; 3]).is_err());
    }

    #[test]
    fn reduce_sum_and_mean() {
        let v = t(&[(A, 2)], &[0.0, 0.0]);
        assert!((logsumexp_reduce(&v, A, false).unwrap().value().unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(logsumexp_reduce(&v, A, true).unwrap().value(), Some(0.0));
    }

    #[test]
    fn reduce_large_values_without_overflow() {
        let v = t(&[(A, 2)], &[1000.0, 1000.0]);
        let r = logsumexp_reduce(&v, A, false).unwrap().value().unwrap();
        assert!(r.is_finite());
        assert!((r - (1000.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn reduce_all_neg_infinity_slice() {
        let v = t(&[(A, 2), (B, 2)], &[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0]);
        let r = logsumexp_reduce(&v, A, true).unwrap();
        assert_eq!(r.data()[0], f64::NEG_INFINITY);
        assert_eq!(r.data()[1], 0.0);
    }

    #[test]
    fn reduce_missing_axis() {
        assert_eq!(
            logsumexp_reduce(&LogTensor::scalar(0.0), A, false).unwrap_err(),
            TensorError::MissingAxis(A)
        );
    }

    #[test]
    fn logmmexp_small_cases() {
        let z = logmmexp(&t(&[(A, 1), (B, 1)], &[0.0]), &t(&[(B, 1), (C, 1)], &[0.0]), B).unwrap();
        assert_eq!(z.data(), &[0.0]);
        let z = logmmexp(&t(&[(A, 1), (B, 2)], &[0.0, 0.0]), &t(&[(B, 2), (C, 1)], &[0.0, 0.0]), B).unwrap();
        assert!((z.data()[0] - LN_2).abs() < 1e-15);
        assert_eq!(z.axes(), &[(A, 1), (C, 1)]);
    }

    #[test]
    fn logmmexp_large_entries() {
        let z = logmmexp(
            &t(&[(A, 1), (B, 2)], &[700.0, 700.0]),
            &t(&[(B, 2), (C, 1)], &[700.0, 700.0]),
            B,
        )
        .unwrap();
        assert!((z.data()[0] - (1400.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn logmmexp_recovers_when_maxima_are_misaligned() {
        // Row max at j=0, column max at j=1: both shifted products underflow.
        let z = logmmexp(
            &t(&[(A, 1), (B, 2)], &[0.0, -800.0]),
            &t(&[(B, 2), (C, 1)], &[-800.0, 0.0]),
            B,
        )
        .unwrap();
        assert!((z.data()[0] - (-800.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn logmmexp_accepts_transposed_operands() {
        // x stored as (J, I), y stored as (K, J).
        let x = t(&[(B, 2), (A, 3)], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let y = t(&[(C, 2), (B, 2)], &[1.0, 2.0, 3.0, 4.0]);
        let z = logmmexp(&x, &y, B).unwrap();
        assert_eq!(z.axes(), &[(A, 3), (C, 2)]);
        for i in 0..3 {
            for k in 0..2 {
                let direct: f64 = (0..2).map(|j| (x.get(&[j, i]) + y.get(&[k, j])).exp()).sum();
                assert!((z.get(&[i, k]) - direct.ln()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn logmmexp_vector_cases() {
        let x = t(&[(B, 3)], &[0.0, 1.0, 2.0]);
        let y = t(&[(B, 3)], &[2.0, 1.0, 0.0]);
        let z = logmmexp(&x, &y, B).unwrap();
        assert!(z.is_scalar());
        assert!((z.value().unwrap() - (3.0 * 2f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn contract_single_factor_normalised() {
        let r = contract(&[&t(&[(A, 2)], &[0.0, 0.0])], A, true).unwrap();
        assert_eq!(r.value(), Some(0.0));
    }

    #[test]
    fn contract_three_unit_factors() {
        let f = t(&[(A, 4)], &[0.0; 4]);
        let r = contract(&[&f, &f, &f], A, false).unwrap();
        assert!((r.value().unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn contract_rejects_factor_without_axis() {
        let err = contract(&[&t(&[(A, 2)], &[0.0; 2]), &t(&[(B, 2)], &[0.0; 2])], A, true).unwrap_err();
        assert_eq!(err, TensorError::FactorMissingAxis { index: 1, axis: A });
        assert_eq!(contract(&[], A, true).unwrap_err(), TensorError::EmptyContraction);
    }

    #[test]
    fn contract_pair_sharing_free_axis_uses_general_path() {
        let f = t(&[(A, 2), (B, 2)], &[0.0, 1.0, 2.0, 3.0]);
        let g = t(&[(B, 2), (A, 2)], &[0.5, -1.0, 0.25, 4.0]);
        let r = contract(&[&f, &g], A, false).unwrap();
        assert_eq!(r.axes(), &[(B, 2)]);
        for b in 0..2 {
            let direct: f64 = (0..2).map(|a| (f.get(&[a, b]) + g.get(&[b, a])).exp()).sum();
            assert!((r.get(&[b]) - direct.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn permute_and_relabel() {
        let f = t(&[(A, 2), (B, 3)], &[0., 1., 2., 3., 4., 5.]);
        let p = f.permuted(&[B, A]).unwrap();
        assert_eq!(p.data(), &[0., 3., 1., 4., 2., 5.]);
        let r = f.relabel(A, C).unwrap();
        assert_eq!(r.axes(), &[(C, 2), (B, 3)]);
        assert!(f.relabel(A, B).is_err());
    }
}
