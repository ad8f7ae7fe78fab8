//! Max pooling (2D and 1D) and axis-mean pooling with keep-dim.
//!
//! Floor semantics: trailing positions that do not fill a complete window
//! are dropped. Max pooling caches the flat argmax per window (first maximum
//! wins on exact ties) so backward can route gradients.

use crate::error::Error;
use crate::param::Grads;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug)]
pub struct MaxPoolCache {
    pub in_shape: Vec<usize>,
    /// Flat input index of the maximum for each output element.
    pub argmax: Vec<usize>,
}

/// 2D max pool over `[C, H, W]`.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl MaxPool2d {
    pub fn new(window: (usize, usize), stride: (usize, usize)) -> Self {
        assert!(window.0 > 0 && window.1 > 0 && stride.0 > 0 && stride.1 > 0);
        MaxPool2d { window, stride }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window.0 > h || self.window.1 > w {
            return Err(Error::dim(format!(
                "max-pool window {:?} larger than {h}x{w} input",
                self.window
            )));
        }
        Ok((
            (h - self.window.0) / self.stride.0 + 1,
            (w - self.window.1) / self.stride.1 + 1,
        ))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        if x.ndim() != 3 {
            return Err(Error::dim(format!(
                "max-pool expects [C, H, W], got {:?}",
                x.shape()
            )));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (oh, ow) = self.out_dims(h, w)?;
        let mut y = Tensor::zeros(&[c, oh, ow]);
        let mut argmax = vec![0usize; c * oh * ow];
        let data = x.data();
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let (h0, w0) = (i * self.stride.0, j * self.stride.1);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for di in 0..self.window.0 {
                        for dj in 0..self.window.1 {
                            let idx = ci * h * w + (h0 + di) * w + (w0 + dj);
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let out_idx = ci * oh * ow + i * ow + j;
                    y.data_mut()[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }
            }
        }
        Ok((
            y,
            MaxPoolCache {
                in_shape: x.shape().to_vec(),
                argmax,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &MaxPoolCache, dy: &Tensor) -> Result<Tensor> {
        if dy.numel() != cache.argmax.len() {
            return Err(Error::dim("max-pool backward size mismatch"));
        }
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (out_idx, &in_idx) in cache.argmax.iter().enumerate() {
            dx.data_mut()[in_idx] += dy.data()[out_idx];
        }
        Ok(dx)
    }
}

/// 1D max pool over `[C, L]` (used after the sinc frontend).
#[derive(Debug, Clone, Copy)]
pub struct MaxPool1d {
    pub window: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn new(window: usize, stride: usize) -> Self {
        assert!(window > 0 && stride > 0);
        MaxPool1d { window, stride }
    }

    pub fn out_len(&self, l: usize) -> Result<usize> {
        if self.window > l {
            return Err(Error::dim(format!(
                "max-pool window {} larger than input length {l}",
                self.window
            )));
        }
        Ok((l - self.window) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        if x.ndim() != 2 {
            return Err(Error::dim(format!(
                "1d max-pool expects [C, L], got {:?}",
                x.shape()
            )));
        }
        let (c, l) = (x.shape()[0], x.shape()[1]);
        let ol = self.out_len(l)?;
        let mut y = Tensor::zeros(&[c, ol]);
        let mut argmax = vec![0usize; c * ol];
        let data = x.data();
        for ci in 0..c {
            for i in 0..ol {
                let start = ci * l + i * self.stride;
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for d in 0..self.window {
                    if data[start + d] > best {
                        best = data[start + d];
                        best_idx = start + d;
                    }
                }
                y.data_mut()[ci * ol + i] = best;
                argmax[ci * ol + i] = best_idx;
            }
        }
        Ok((
            y,
            MaxPoolCache {
                in_shape: x.shape().to_vec(),
                argmax,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &MaxPoolCache, dy: &Tensor) -> Result<Tensor> {
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (out_idx, &in_idx) in cache.argmax.iter().enumerate() {
            dx.data_mut()[in_idx] += dy.data()[out_idx];
        }
        Ok(dx)
    }
}

/// Mean over one axis of `[C, F, T]`, keeping the axis as size 1.
pub fn mean_axis_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    x.reduce_mean(&[axis], true)
}

/// Backward of [`mean_axis_forward`]: spread `dy` uniformly over the reduced
/// axis (scaled by 1/axis_len). `grads` is unused (no parameters) but kept in
/// the signature shape used by layers for symmetry at call sites.
pub fn mean_axis_backward(dy: &Tensor, in_shape: &[usize], axis: usize, _grads: &mut Grads) -> Tensor {
    let n = in_shape[axis] as f64;
    let mut dx = Tensor::zeros(in_shape);
    // dy has size 1 on `axis`; iterate input coords, read collapsed dy coord.
    let ndim = in_shape.len();
    let mut index = vec![0usize; ndim];
    for flat in 0..dx.numel() {
        let mut dy_index = index.clone();
        dy_index[axis] = 0;
        let g = dy.at(&dy_index) / n;
        dx.data_mut()[flat] = g;
        for d in (0..ndim).rev() {
            index[d] += 1;
            if index[d] < in_shape[d] {
                break;
            }
            index[d] = 0;
        }
    }
    dx
}
