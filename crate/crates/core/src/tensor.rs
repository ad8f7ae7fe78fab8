//! Dense row-major `f64` tensor with the small op set the model needs:
//! elementwise arithmetic, axis reductions, reshape/permute, and a central
//! finite-difference gradient checker that every backward-pass test uses as
//! its oracle.
//!
//! Tensors are immutable after construction in the public API (ops return new
//! tensors), so they can be shared freely across threads. All values must be
//! finite: construction rejects NaN/Inf outright, and in debug builds every
//! op re-checks its output.

use crate::error::Error;
use crate::Result;

/// Dense tensor: `shape` lists dimension sizes, `data` holds
/// `product(shape)` values in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build from explicit shape and data. Rejects size mismatch and
    /// non-finite values.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!("zero-sized dimension in {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// All-zero tensor.
    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        assert!(
            shape.iter().all(|&d| d > 0),
            "zero-sized dimension in {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    /// Tensor filled with a constant.
    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite(), "non-finite fill value");
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    /// 1-element scalar tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor::full(&[1], value)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for in-place construction (crate-internal; callers
    /// must keep values finite).
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Flat offset of a multi-index (row-major).
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < dim, "index {ix} out of range for axis {i} ({dim})");
            off = off * dim + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn debug_check_finite(&self, op: &str) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "non-finite value produced by {op}"
        );
    }

    /// Elementwise binary op. Shapes must match exactly, or `b` may be a
    /// 1-element scalar tensor which is applied to every element of `a`.
    fn binary(&self, b: &Tensor, name: &str, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Result<Tensor> {
        let data = if b.numel() == 1 {
            let s = b.data[0];
            crate::par::map_slice(&self.data, move |a| f(a, s))
        } else if self.shape == b.shape {
            crate::par::zip_slices(&self.data, &b.data, f)
        } else {
            return Err(Error::dim(format!(
                "elementwise {name}: shape {:?} vs {:?}",
                self.shape, b.shape
            )));
        };
        let out = Tensor {
            shape: self.shape.clone(),
            data,
        };
        out.debug_check_finite(name);
        Ok(out)
    }

    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        self.binary(b, "add", |a, b| a + b)
    }

    pub fn sub(&self, b: &Tensor) -> Result<Tensor> {
        self.binary(b, "sub", |a, b| a - b)
    }

    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        self.binary(b, "mul", |a, b| a * b)
    }

    /// Elementwise map with a scalar function (crate-internal building block).
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Tensor {
        let out = Tensor {
            shape: self.shape.clone(),
            data: crate::par::map_slice(&self.data, f),
        };
        out.debug_check_finite("map");
        out
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean over the listed axes. Reduced axes become size 1 when
    /// `keep_dims`, otherwise they are removed (a full reduction without
    /// `keep_dims` yields shape `[1]`).
    pub fn reduce_mean(&self, axes: &[usize], keep_dims: bool) -> Result<Tensor> {
        for &ax in axes {
            if ax >= self.shape.len() {
                return Err(Error::dim(format!(
                    "reduce_mean axis {ax} out of range for shape {:?}",
                    self.shape
                )));
            }
        }
        let mut reduce = vec![false; self.shape.len()];
        for &ax in axes {
            reduce[ax] = true;
        }
        let out_full: Vec<usize> = self
            .shape
            .iter()
            .zip(&reduce)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let count: usize = self
            .shape
            .iter()
            .zip(&reduce)
            .filter(|(_, &r)| r)
            .map(|(&d, _)| d)
            .product();
        let mut acc = Tensor::zeros(&out_full);
        let mut index = vec![0usize; self.shape.len()];
        for (flat, &v) in self.data.iter().enumerate() {
            // Decode flat -> multi-index incrementally instead of divmod per
            // element: index vector is advanced like an odometer.
            let mut out_off = 0;
            for (d, &ix) in index.iter().enumerate() {
                let od = out_full[d];
                out_off = out_off * od + if reduce[d] { 0 } else { ix };
            }
            acc.data[out_off] += v;
            let _ = flat;
            for d in (0..index.len()).rev() {
                index[d] += 1;
                if index[d] < self.shape[d] {
                    break;
                }
                index[d] = 0;
            }
        }
        let inv = 1.0 / count as f64;
        for v in &mut acc.data {
            *v *= inv;
        }
        if !keep_dims {
            let kept: Vec<usize> = self
                .shape
                .iter()
                .zip(&reduce)
                .filter(|(_, &r)| !r)
                .map(|(&d, _)| d)
                .collect();
            acc.shape = if kept.is_empty() { vec![1] } else { kept };
        }
        acc.debug_check_finite("reduce_mean");
        Ok(acc)
    }

    /// Reinterpret the same row-major data under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        let numel: usize = new_shape.iter().product();
        if new_shape.iter().any(|&d| d == 0) || numel != self.data.len() {
            return Err(Error::dim(format!(
                "reshape {:?} -> {:?}: element count mismatch",
                self.shape, new_shape
            )));
        }
        Ok(Tensor {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let n = self.shape.len();
        if perm.len() != n {
            return Err(Error::dim(format!(
                "permutation {:?} has wrong length for shape {:?}",
                perm, self.shape
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::dim(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut out = Tensor::zeros(&out_shape);
        // in_strides[d] = row-major stride of input axis d
        let mut in_strides = vec![1usize; n];
        for d in (0..n.saturating_sub(1)).rev() {
            in_strides[d] = in_strides[d + 1] * self.shape[d + 1];
        }
        let mut out_index = vec![0usize; n];
        for out_flat in 0..out.data.len() {
            let mut in_off = 0;
            for (d, &ix) in out_index.iter().enumerate() {
                in_off += ix * in_strides[perm[d]];
            }
            out.data[out_flat] = self.data[in_off];
            for d in (0..n).rev() {
                out_index[d] += 1;
                if out_index[d] < out_shape[d] {
                    break;
                }
                out_index[d] = 0;
            }
        }
        Ok(out)
    }

    /// Concatenate along axis 0. All trailing dimensions must agree.
    pub fn concat0(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::dim("concat0 of zero tensors"));
        }
        let tail = &parts[0].shape[1..];
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::dim(format!(
                    "concat0: trailing dims {:?} vs {:?}",
                    &p.shape[1..],
                    tail
                )));
            }
        }
        let dim0: usize = parts.iter().map(|p| p.shape[0]).sum();
        let mut shape = vec![dim0];
        shape.extend_from_slice(tail);
        let mut data = Vec::with_capacity(shape.iter().product());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }

    /// Slice `[start, start+len)` along axis 0.
    pub fn slice0(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.shape[0] {
            return Err(Error::dim(format!(
                "slice0 [{start}, {}) out of range for axis 0 of {:?}",
                start + len,
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Tensor {
            shape,
            data: self.data[start * inner..(start + len) * inner].to_vec(),
        })
    }
}

/// Central finite difference (f(x+h·e_i) − f(x−h·e_i)) / (2h) per coordinate.
///
/// The oracle against which every hand-written backward pass is checked.
/// Returns a tensor of the same shape as `x`; errors if `f` produces a
/// non-finite value at any probe point.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let fp = f(&probe)?;
        probe.data[i] = orig - h;
        let fm = f(&probe)?;
        probe.data[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite objective during finite difference at coordinate {i}"
            )));
        }
        grad.data[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Largest elementwise absolute difference between two same-shape tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative error |a−b| / max(|a|, |b|, floor): symmetric, with a floor so
/// comparisons between near-zero values do not blow up.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
