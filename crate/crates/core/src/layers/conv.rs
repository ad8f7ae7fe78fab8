//! Grouped/dilated 2D convolution and its 1D specialization.
//!
//! One kernel implements every convolution in the model: full, grouped,
//! depthwise (groups == Cin), dilated, and 1D (Kh == 1). Semantics are
//! cross-correlation with implicit zero padding; out-of-range taps
//! contribute zero (numerically identical to materializing a padded input).

use crate::error::Error;
use crate::layers::conv_out_len;
use crate::par::{self, ExecMode};
use crate::param::{Grads, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

/// Hyperparameters of a 2D convolution, shared by forward/backward kernels
/// and the complexity analyzer.
#[derive(Debug, Clone, Copy)]
pub struct Conv2dSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cin == 0 || self.cout == 0 || self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::config("conv: zero-sized channel or kernel"));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 || self.dilation.0 == 0 || self.dilation.1 == 0
        {
            return Err(Error::config("conv: stride and dilation must be >= 1"));
        }
        if self.cin % self.groups != 0 {
            return Err(Error::config(format!(
                "conv: cin {} not divisible by groups {}",
                self.cin, self.groups
            )));
        }
        if self.cout % self.groups != 0 {
            return Err(Error::config(format!(
                "conv: cout {} not divisible by groups {}",
                self.cout, self.groups
            )));
        }
        Ok(())
    }

    /// Channels per group on the input side.
    pub fn cpg(&self) -> usize {
        self.cin / self.groups
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = conv_out_len(h, self.kernel.0, self.stride.0, self.pad.0, self.dilation.0);
        let ow = conv_out_len(w, self.kernel.1, self.stride.1, self.pad.1, self.dilation.1);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::dim(format!(
                "conv kernel {:?} (dilation {:?}, pad {:?}) does not fit {}x{} input",
                self.kernel, self.dilation, self.pad, h, w
            ))),
        }
    }

    /// Multiply-accumulate count for the given input spatial size:
    /// `Cout·(Cin/groups)·Kh·Kw·Hout·Wout` (bias adds are not counted).
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (oh, ow) = self.out_dims(h, w)?;
        Ok(self.cout as u64
            * self.cpg() as u64
            * self.kernel.0 as u64
            * self.kernel.1 as u64
            * oh as u64
            * ow as u64)
    }
}

/// Valid tap interval `[lo, hi)` along one axis: taps `t < k` whose input
/// position `base + t·d` lands inside `[0, n)`. Empty when `lo >= hi`.
#[inline]
fn tap_range(base: isize, d: usize, k: usize, n: usize) -> (usize, usize) {
    let d = d as isize;
    let lo = if base >= 0 { 0 } else { ((-base + d - 1) / d) as usize };
    let hi = if base >= n as isize {
        0
    } else {
        (((n as isize - 1 - base) / d) as usize + 1).min(k)
    };
    (lo.min(k), hi)
}

/// Dot product of `k` taps: `x` strided by `d`, `weight` contiguous.
/// Accumulates left to right (tap order), matching the naive definition.
#[inline]
fn dot_taps(x: &[f64], d: usize, weight: &[f64], acc: &mut f64) {
    if d == 1 {
        // equal-length slices: the bounds checks vanish
        for (xv, wv) in x[..weight.len()].iter().zip(weight) {
            *acc += xv * wv;
        }
    } else {
        for (t, wv) in weight.iter().enumerate() {
            *acc += x[t * d] * wv;
        }
    }
}

/// Forward kernel on raw slices. `x` is `[cin, h, w]` row-major, `weight` is
/// `[cout, cpg, kh, kw]`, output is `[cout, oh, ow]`. Execution mode splits
/// work over output channels (disjoint output regions — bit-deterministic).
pub fn conv2d_forward_with(
    mode: ExecMode,
    spec: &Conv2dSpec,
    x: &[f64],
    (h, w): (usize, usize),
    weight: &[f64],
    bias: Option<&[f64]>,
    out: &mut [f64],
    (oh, ow): (usize, usize),
) {
    let cpg = spec.cpg();
    let opg = spec.cout / spec.groups;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw_) = spec.pad;
    let (dh, dw) = spec.dilation;
    let kvol = cpg * kh * kw;

    // Pointwise (1x1, unit stride, no padding): each output position reads
    // exactly one input position, so sweep whole channel planes contiguously
    // instead of dispatching per-position taps. Same accumulation order per
    // element (bias, then input channels ascending) as the general path.
    if kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw_ == 0 {
        let hw = h * w;
        par::fill_chunks(out, oh * ow, mode, |co, chunk| {
            let g = co / opg;
            let cin_base = g * cpg;
            let wbase = co * kvol;
            chunk.fill(bias.map_or(0.0, |b| b[co]));
            for cl in 0..cpg {
                let wv = weight[wbase + cl];
                let xoff = (cin_base + cl) * hw;
                for (o, xv) in chunk.iter_mut().zip(&x[xoff..xoff + hw]) {
                    *o += xv * wv;
                }
            }
        });
        return;
    }

    par::fill_chunks(out, oh * ow, mode, |co, chunk| {
        let g = co / opg;
        let cin_base = g * cpg;
        let wbase = co * kvol;
        let b = bias.map_or(0.0, |b| b[co]);
        for ohh in 0..oh {
            let hbase = (ohh * sh) as isize - ph as isize;
            let (ki_lo, ki_hi) = tap_range(hbase, dh, kh, h);
            for oww in 0..ow {
                let vbase = (oww * sw) as isize - pw_ as isize;
                let (kj_lo, kj_hi) = tap_range(vbase, dw, kw, w);
                let mut acc = b;
                if kj_lo < kj_hi {
                    let xcol = (vbase + (kj_lo * dw) as isize) as usize;
                    for cl in 0..cpg {
                        let xc = (cin_base + cl) * h * w;
                        let wc = wbase + cl * kh * kw;
                        for ki in ki_lo..ki_hi {
                            let ih = (hbase + (ki * dh) as isize) as usize;
                            let xstart = xc + ih * w + xcol;
                            let wstart = wc + ki * kw + kj_lo;
                            dot_taps(
                                &x[xstart..],
                                dw,
                                &weight[wstart..wstart + (kj_hi - kj_lo)],
                                &mut acc,
                            );
                        }
                    }
                }
                chunk[ohh * ow + oww] = acc;
            }
        }
    });
}

/// Backward kernel: accumulates `dweight`/`dbias` and fills `dx`.
/// Sequential: backward only runs on training-sized (small) maps.
#[allow(clippy::too_many_arguments)]
fn conv2d_backward_kernel(
    spec: &Conv2dSpec,
    x: &[f64],
    (h, w): (usize, usize),
    weight: &[f64],
    dy: &[f64],
    (oh, ow): (usize, usize),
    dweight: &mut [f64],
    dbias: Option<&mut [f64]>,
    dx: &mut [f64],
) {
    let cpg = spec.cpg();
    let opg = spec.cout / spec.groups;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw_) = spec.pad;
    let (dh, dw) = spec.dilation;
    let kvol = cpg * kh * kw;

    // Pointwise fast path, mirroring the forward kernel: per weight the terms
    // still accumulate in position order, per dx element in co order, and
    // zero upstream gradients are skipped exactly as in the general path.
    if kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw_ == 0 {
        let hw = h * w;
        for co in 0..spec.cout {
            let g = co / opg;
            let cin_base = g * cpg;
            let wbase = co * kvol;
            let gys = &dy[co * hw..(co + 1) * hw];
            for cl in 0..cpg {
                let xoff = (cin_base + cl) * hw;
                let xs = &x[xoff..xoff + hw];
                let dxs = &mut dx[xoff..xoff + hw];
                let wv = weight[wbase + cl];
                let dwslot = &mut dweight[wbase + cl];
                for (p, &gy) in gys.iter().enumerate() {
                    if gy == 0.0 {
                        continue;
                    }
                    *dwslot += gy * xs[p];
                    dxs[p] += gy * wv;
                }
            }
        }
        if let Some(db) = dbias {
            for co in 0..spec.cout {
                let base = co * hw;
                db[co] += dy[base..base + hw].iter().sum::<f64>();
            }
        }
        return;
    }

    for co in 0..spec.cout {
        let g = co / opg;
        let cin_base = g * cpg;
        let wbase = co * kvol;
        for ohh in 0..oh {
            let hbase = (ohh * sh) as isize - ph as isize;
            let (ki_lo, ki_hi) = tap_range(hbase, dh, kh, h);
            for oww in 0..ow {
                let gy = dy[co * oh * ow + ohh * ow + oww];
                if gy == 0.0 {
                    continue;
                }
                let vbase = (oww * sw) as isize - pw_ as isize;
                let (kj_lo, kj_hi) = tap_range(vbase, dw, kw, w);
                if kj_lo >= kj_hi {
                    continue;
                }
                let nk = kj_hi - kj_lo;
                let xcol = (vbase + (kj_lo * dw) as isize) as usize;
                for cl in 0..cpg {
                    let xc = (cin_base + cl) * h * w;
                    let wc = wbase + cl * kh * kw;
                    for ki in ki_lo..ki_hi {
                        let ih = (hbase + (ki * dh) as isize) as usize;
                        let xstart = xc + ih * w + xcol;
                        let wstart = wc + ki * kw + kj_lo;
                        if dw == 1 {
                            let xs = &x[xstart..xstart + nk];
                            let dxs = &mut dx[xstart..xstart + nk];
                            let ws = &weight[wstart..wstart + nk];
                            let dws = &mut dweight[wstart..wstart + nk];
                            for t in 0..nk {
                                dws[t] += gy * xs[t];
                                dxs[t] += gy * ws[t];
                            }
                        } else {
                            for t in 0..nk {
                                dweight[wstart + t] += gy * x[xstart + t * dw];
                                dx[xstart + t * dw] += gy * weight[wstart + t];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(db) = dbias {
        for co in 0..spec.cout {
            let base = co * oh * ow;
            db[co] += dy[base..base + oh * ow].iter().sum::<f64>();
        }
    }
}

#[derive(Debug)]
pub struct Conv2dCache {
    pub x: Tensor,
    pub out_dims: (usize, usize),
}

/// 2D convolution layer with weights in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub spec: Conv2dSpec,
    pub w: ParamId,
    pub b: Option<ParamId>,
    name: String,
}

impl Conv2d {
    /// Register a new layer. Weights are He-uniform over the kernel fan-in;
    /// biases (when present) start at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        spec: Conv2dSpec,
        with_bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let fan_in = (spec.cpg() * spec.kernel.0 * spec.kernel.1) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let wshape = [spec.cout, spec.cpg(), spec.kernel.0, spec.kernel.1];
        let w = ps.register(
            format!("{name}.weight"),
            rng.uniform_tensor(&wshape, -bound, bound),
            true,
        );
        let b = if with_bias {
            Some(ps.register(format!("{name}.bias"), Tensor::zeros(&[spec.cout]), true))
        } else {
            None
        };
        Ok(Conv2d { spec, w, b, name })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.ndim() != 3 || x.shape()[0] != self.spec.cin {
            return Err(Error::dim(format!(
                "{}: expected [{}, H, W] input, got {:?}",
                self.name,
                self.spec.cin,
                x.shape()
            )));
        }
        Ok((x.shape()[1], x.shape()[2]))
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let y = self.infer(ps, x)?;
        let out_dims = (y.shape()[1], y.shape()[2]);
        Ok((
            y,
            Conv2dCache {
                x: x.clone(),
                out_dims,
            },
        ))
    }

    /// Forward without cache retention.
    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let (oh, ow) = self.spec.out_dims(h, w)?;
        let mut out = Tensor::zeros(&[self.spec.cout, oh, ow]);
        let mode = ExecMode::auto(self.spec.cout * oh * ow);
        conv2d_forward_with(
            mode,
            &self.spec,
            x.data(),
            (h, w),
            ps.get(self.w).data(),
            self.b.map(|b| ps.get(b).data()),
            out.data_mut(),
            (oh, ow),
        );
        Ok(out)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &Conv2dCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let (h, w) = self.check_input(&cache.x)?;
        let (oh, ow) = cache.out_dims;
        if dy.shape() != [self.spec.cout, oh, ow] {
            return Err(Error::dim(format!(
                "{}: upstream grad shape {:?}, expected [{}, {oh}, {ow}]",
                self.name,
                dy.shape(),
                self.spec.cout
            )));
        }
        let mut dwt = Tensor::zeros(ps.get(self.w).shape());
        let mut dbt = self.b.map(|_| vec![0.0; self.spec.cout]);
        let mut dx = Tensor::zeros(cache.x.shape());
        conv2d_backward_kernel(
            &self.spec,
            cache.x.data(),
            (h, w),
            ps.get(self.w).data(),
            dy.data(),
            (oh, ow),
            dwt.data_mut(),
            dbt.as_deref_mut(),
            dx.data_mut(),
        );
        grads.accumulate(self.w, &dwt);
        if let (Some(bid), Some(db)) = (self.b, dbt) {
            grads.accumulate(bid, &Tensor::from_vec(&[self.spec.cout], db)?);
        }
        Ok(dx)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        let mut n = ps.get(self.w).numel() as u64;
        if let Some(b) = self.b {
            n += ps.get(b).numel() as u64;
        }
        n
    }
}

#[derive(Debug)]
pub struct Conv1dCache(Conv2dCache);

/// 1D convolution over `[Cin, L]`, realized as a height-1 2D convolution.
#[derive(Debug, Clone)]
pub struct Conv1d {
    inner: Conv2d,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        with_bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let spec = Conv2dSpec {
            cin,
            cout,
            kernel: (1, kernel),
            stride: (1, stride),
            pad: (0, pad),
            dilation: (1, 1),
            groups: 1,
        };
        Ok(Conv1d {
            inner: Conv2d::new(ps, name, spec, with_bias, rng)?,
        })
    }

    pub fn spec(&self) -> &Conv2dSpec {
        &self.inner.spec
    }

    pub fn weight_id(&self) -> ParamId {
        self.inner.w
    }

    pub fn bias_id(&self) -> Option<ParamId> {
        self.inner.b
    }

    fn lift(&self, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 2 {
            return Err(Error::dim(format!(
                "conv1d expects [Cin, L], got {:?}",
                x.shape()
            )));
        }
        x.reshape(&[x.shape()[0], 1, x.shape()[1]])
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let (y3, cache) = self.inner.forward(ps, &self.lift(x)?)?;
        Ok((
            y3.reshape(&[y3.shape()[0], y3.shape()[2]])?,
            Conv1dCache(cache),
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y3 = self.inner.infer(ps, &self.lift(x)?)?;
        y3.reshape(&[y3.shape()[0], y3.shape()[2]])
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &Conv1dCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let dy3 = dy.reshape(&[dy.shape()[0], 1, dy.shape()[1]])?;
        let dx3 = self.inner.backward(ps, &cache.0, &dy3, grads)?;
        dx3.reshape(&[dx3.shape()[0], dx3.shape()[2]])
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        self.inner.param_count(ps)
    }
}
