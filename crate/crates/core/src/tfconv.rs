//! Time-frequency convolution block.
//!
//! The block adjusts channel width with a 1×1 transition conv, optionally
//! shuffles channels, splits them evenly into a frequency half and a time
//! half, summarizes each half along its own axis (depthwise conv → BN+ReLU →
//! axis mean → pointwise conv → BN), adds the summary back with an axis
//! broadcast, and concatenates the halves again.
//!
//! Layout convention: feature maps are `[C, F, T]` (channels × frequency ×
//! time). The frequency branch reduces over F and yields a per-time vector
//! `[c, 1, T]`; the time branch reduces over T and yields `[c, F, 1]`.
//!
//! Ablations: a disabled branch is simply absent (no parameters); its half
//! of the split passes through unchanged, so switching a branch off changes
//! the parameter count by exactly that branch's parameter sum. Disabling the
//! shuffle skips the permutation only. At least one branch must be enabled.

use crate::error::Error;
use crate::layers::activation::{relu_backward, relu_forward};
use crate::layers::batchnorm::{BatchNorm, BnCache, BnUpdate};
use crate::layers::conv::{Conv2d, Conv2dCache, Conv2dSpec};
use crate::layers::pooling::{mean_axis_backward, mean_axis_forward};
use crate::layers::Mode;
use crate::param::{Grads, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

/// Reorder channels by viewing them as a `(groups, C/groups)` grid,
/// transposing it, and flattening back. Spatial content is untouched.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let c = x.shape()[0];
    if groups == 0 || c % groups != 0 {
        return Err(Error::config(format!(
            "channel shuffle: {c} channels not divisible into {groups} groups"
        )));
    }
    let per = c / groups;
    let inner: usize = x.shape()[1..].iter().product();
    let mut out = Tensor::zeros(x.shape());
    let src = x.data();
    let dst = out.data_mut();
    // output channel j*groups + i takes input channel i*per + j
    for i in 0..groups {
        for j in 0..per {
            let from = (i * per + j) * inner;
            let to = (j * groups + i) * inner;
            dst[to..to + inner].copy_from_slice(&src[from..from + inner]);
        }
    }
    Ok(out)
}

/// Gradient of [`channel_shuffle`]: the inverse permutation, which is the
/// same shuffle with `C/groups` groups.
pub fn channel_shuffle_backward(dy: &Tensor, groups: usize) -> Result<Tensor> {
    let c = dy.shape()[0];
    if groups == 0 || c % groups != 0 {
        return Err(Error::config(format!(
            "channel shuffle: {c} channels not divisible into {groups} groups"
        )));
    }
    channel_shuffle(dy, c / groups)
}

/// Split a `[C, F, T]` map evenly along channels into (frequency half,
/// time half).
pub fn split_channels(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let c = x.shape()[0];
    if c % 2 != 0 {
        return Err(Error::config(format!(
            "channel split: odd channel count {c}"
        )));
    }
    Ok((x.slice0(0, c / 2)?, x.slice0(c / 2, c / 2)?))
}

/// `y[c,i,j] = x[c,i,j] + v[c,0,j]`: add a per-time vector across every
/// frequency bin.
pub fn broadcast_add_freq(x: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (c, f, t) = dims3(x)?;
    if v.shape() != [c, 1, t] {
        return Err(Error::dim(format!(
            "broadcast add (freq): map {:?} incompatible with vector {:?}",
            x.shape(),
            v.shape()
        )));
    }
    let mut out = x.clone();
    let vd = v.data();
    let od = out.data_mut();
    for ci in 0..c {
        for i in 0..f {
            let row = (ci * f + i) * t;
            for j in 0..t {
                od[row + j] += vd[ci * t + j];
            }
        }
    }
    Ok(out)
}

/// Gradient of [`broadcast_add_freq`]: pass-through to the map, sum over the
/// frequency axis for the vector.
pub fn broadcast_add_freq_backward(dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let (c, f, t) = dims3(dy)?;
    let mut dv = Tensor::zeros(&[c, 1, t]);
    let dyd = dy.data();
    let dvd = dv.data_mut();
    for ci in 0..c {
        for i in 0..f {
            let row = (ci * f + i) * t;
            for j in 0..t {
                dvd[ci * t + j] += dyd[row + j];
            }
        }
    }
    Ok((dy.clone(), dv))
}

/// `y[c,i,j] = x[c,i,j] + v[c,i,0]`: add a per-frequency vector across every
/// time step.
pub fn broadcast_add_time(x: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (c, f, t) = dims3(x)?;
    if v.shape() != [c, f, 1] {
        return Err(Error::dim(format!(
            "broadcast add (time): map {:?} incompatible with vector {:?}",
            x.shape(),
            v.shape()
        )));
    }
    let mut out = x.clone();
    let vd = v.data();
    let od = out.data_mut();
    for ci in 0..c {
        for i in 0..f {
            let row = (ci * f + i) * t;
            let add = vd[ci * f + i];
            for j in 0..t {
                od[row + j] += add;
            }
        }
    }
    Ok(out)
}

/// Gradient of [`broadcast_add_time`].
pub fn broadcast_add_time_backward(dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let (c, f, t) = dims3(dy)?;
    let mut dv = Tensor::zeros(&[c, f, 1]);
    let dyd = dy.data();
    let dvd = dv.data_mut();
    for ci in 0..c {
        for i in 0..f {
            let row = (ci * f + i) * t;
            for j in 0..t {
                dvd[ci * f + i] += dyd[row + j];
            }
        }
    }
    Ok((dy.clone(), dv))
}

fn dims3(x: &Tensor) -> Result<(usize, usize, usize)> {
    if x.ndim() != 3 {
        return Err(Error::dim(format!(
            "expected a [C, F, T] tensor, got shape {:?}",
            x.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
}

/// Which axis a branch summarizes (and therefore reduces over).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchAxis {
    /// 3×1 depthwise conv along frequency, mean over frequency → `[c,1,T]`.
    Freq,
    /// 1×3 depthwise conv along time, mean over time → `[c,F,1]`.
    Time,
}

impl BranchAxis {
    fn reduce_axis(self) -> usize {
        match self {
            BranchAxis::Freq => 1,
            BranchAxis::Time => 2,
        }
    }

    fn dw_kernel(self) -> (usize, usize) {
        match self {
            BranchAxis::Freq => (3, 1),
            BranchAxis::Time => (1, 3),
        }
    }
}

/// One summarizing branch: depthwise conv → BN → ReLU → axis mean →
/// pointwise conv → BN (no trailing ReLU: the output is a residual update).
#[derive(Debug, Clone)]
pub struct TfBranch {
    pub axis: BranchAxis,
    pub dw: Conv2d,
    pub bn_dw: BatchNorm,
    pub pw: Conv2d,
    pub bn_pw: BatchNorm,
    pub channels: usize,
}

#[derive(Debug)]
pub struct TfBranchCache {
    dw: Conv2dCache,
    bn_dw: BnCache,
    relu: Tensor,
    mean_in_shape: Vec<usize>,
    pw: Conv2dCache,
    bn_pw: BnCache,
}

impl TfBranch {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        axis: BranchAxis,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let name = name.into();
        let (kh, kw) = axis.dw_kernel();
        let dw_spec = Conv2dSpec {
            cin: channels,
            cout: channels,
            kernel: (kh, kw),
            stride: (1, 1),
            pad: ((kh - 1) / 2, (kw - 1) / 2),
            dilation: (1, 1),
            groups: channels,
        };
        let pw_spec = Conv2dSpec {
            cin: channels,
            cout: channels,
            kernel: (1, 1),
            stride: (1, 1),
            pad: (0, 0),
            dilation: (1, 1),
            groups: 1,
        };
        Ok(TfBranch {
            axis,
            dw: Conv2d::new(ps, format!("{name}.dw"), dw_spec, false, rng)?,
            bn_dw: BatchNorm::new(ps, format!("{name}.bn_dw"), channels),
            pw: Conv2d::new(ps, format!("{name}.pw"), pw_spec, false, rng)?,
            bn_pw: BatchNorm::new(ps, format!("{name}.bn_pw"), channels),
            channels,
        })
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<(Tensor, TfBranchCache)> {
        let (t1, dw_c) = self.dw.forward(ps, x)?;
        let (t2, bn_dw_c, u1) = self.bn_dw.forward(ps, &t1, mode)?;
        let (t3, relu) = relu_forward(&t2);
        let pooled = mean_axis_forward(&t3, self.axis.reduce_axis())?;
        let (t4, pw_c) = self.pw.forward(ps, &pooled)?;
        let (v, bn_pw_c, u2) = self.bn_pw.forward(ps, &t4, mode)?;
        updates.extend([u1, u2].into_iter().flatten());
        Ok((
            v,
            TfBranchCache {
                dw: dw_c,
                bn_dw: bn_dw_c,
                relu,
                mean_in_shape: t3.shape().to_vec(),
                pw: pw_c,
                bn_pw: bn_pw_c,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let t = self.bn_dw.infer(ps, &self.dw.infer(ps, x)?)?;
        let pooled = mean_axis_forward(&t.map(|v| v.max(0.0)), self.axis.reduce_axis())?;
        self.bn_pw.infer(ps, &self.pw.infer(ps, &pooled)?)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &TfBranchCache,
        dv: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let d_t4 = self.bn_pw.backward(ps, &cache.bn_pw, dv, grads)?;
        let d_pooled = self.pw.backward(ps, &cache.pw, &d_t4, grads)?;
        let d_t3 = mean_axis_backward(
            &d_pooled,
            &cache.mean_in_shape,
            self.axis.reduce_axis(),
            grads,
        );
        let d_t2 = relu_backward(&d_t3, &cache.relu);
        let d_t1 = self.bn_dw.backward(ps, &cache.bn_dw, &d_t2, grads)?;
        self.dw.backward(ps, &cache.dw, &d_t1, grads)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        self.dw.param_count(ps)
            + self.bn_dw.param_count(ps)
            + self.pw.param_count(ps)
            + self.bn_pw.param_count(ps)
    }

    /// MACs for one application on an `F×T` input map.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let dw = self.dw.spec.macs(h, w)?;
        let pw = match self.axis {
            BranchAxis::Freq => self.pw.spec.macs(1, w)?,
            BranchAxis::Time => self.pw.spec.macs(h, 1)?,
        };
        Ok(dw + pw)
    }
}

/// Configuration of one time-frequency block.
#[derive(Debug, Clone, Copy)]
pub struct TfConvConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub enable_freq_branch: bool,
    pub enable_time_branch: bool,
    pub enable_shuffle: bool,
    pub shuffle_groups: usize,
}

impl TfConvConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.enable_freq_branch && !self.enable_time_branch {
            return Err(Error::config(
                "tf-conv block: at least one of the frequency/time branches must be enabled",
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("tf-conv block: zero channel count"));
        }
        if self.out_channels % 2 != 0 {
            return Err(Error::config(format!(
                "tf-conv block: channel width {} must be even to split",
                self.out_channels
            )));
        }
        if self.enable_shuffle
            && (self.shuffle_groups == 0 || self.out_channels % self.shuffle_groups != 0)
        {
            return Err(Error::config(format!(
                "tf-conv block: width {} not divisible into {} shuffle groups",
                self.out_channels, self.shuffle_groups
            )));
        }
        Ok(())
    }
}

/// The full block: transition conv + BN + ReLU → optional shuffle → split →
/// branches → broadcast adds → concat.
#[derive(Debug, Clone)]
pub struct TfConvBlock {
    pub cfg: TfConvConfig,
    pub trans: Conv2d,
    pub bn_trans: BatchNorm,
    pub freq: Option<TfBranch>,
    pub time: Option<TfBranch>,
}

#[derive(Debug)]
pub struct TfConvBlockCache {
    trans: Conv2dCache,
    bn_trans: BnCache,
    relu: Tensor,
    freq: Option<TfBranchCache>,
    time: Option<TfBranchCache>,
}

impl TfConvBlock {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        cfg: TfConvConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let name = name.into();
        let trans_spec = Conv2dSpec {
            cin: cfg.in_channels,
            cout: cfg.out_channels,
            kernel: (1, 1),
            stride: (1, 1),
            pad: (0, 0),
            dilation: (1, 1),
            groups: 1,
        };
        let half = cfg.out_channels / 2;
        Ok(TfConvBlock {
            trans: Conv2d::new(ps, format!("{name}.trans"), trans_spec, false, rng)?,
            bn_trans: BatchNorm::new(ps, format!("{name}.bn_trans"), cfg.out_channels),
            freq: if cfg.enable_freq_branch {
                Some(TfBranch::new(
                    ps,
                    format!("{name}.freq"),
                    BranchAxis::Freq,
                    half,
                    rng,
                )?)
            } else {
                None
            },
            time: if cfg.enable_time_branch {
                Some(TfBranch::new(
                    ps,
                    format!("{name}.time"),
                    BranchAxis::Time,
                    half,
                    rng,
                )?)
            } else {
                None
            },
            cfg,
        })
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<(Tensor, TfConvBlockCache)> {
        let (t1, trans_c) = self.trans.forward(ps, x)?;
        let (t2, bn_c, u) = self.bn_trans.forward(ps, &t1, mode)?;
        updates.extend(u);
        let (t3, relu) = relu_forward(&t2);
        let s = if self.cfg.enable_shuffle {
            channel_shuffle(&t3, self.cfg.shuffle_groups)?
        } else {
            t3
        };
        let (xf, xt) = split_channels(&s)?;

        let (xf_hat, freq_c) = match &self.freq {
            Some(branch) => {
                let (vf, c) = branch.forward(ps, &xf, mode, updates)?;
                (broadcast_add_freq(&xf, &vf)?, Some(c))
            }
            None => (xf, None),
        };
        let (xt_hat, time_c) = match &self.time {
            Some(branch) => {
                let (vt, c) = branch.forward(ps, &xt, mode, updates)?;
                (broadcast_add_time(&xt, &vt)?, Some(c))
            }
            None => (xt, None),
        };
        let y = Tensor::concat0(&[&xf_hat, &xt_hat])?;
        Ok((
            y,
            TfConvBlockCache {
                trans: trans_c,
                bn_trans: bn_c,
                relu,
                freq: freq_c,
                time: time_c,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let t = self.bn_trans.infer(ps, &self.trans.infer(ps, x)?)?;
        let t3 = t.map(|v| v.max(0.0));
        let s = if self.cfg.enable_shuffle {
            channel_shuffle(&t3, self.cfg.shuffle_groups)?
        } else {
            t3
        };
        let (xf, xt) = split_channels(&s)?;
        let xf_hat = match &self.freq {
            Some(branch) => broadcast_add_freq(&xf, &branch.infer(ps, &xf)?)?,
            None => xf,
        };
        let xt_hat = match &self.time {
            Some(branch) => broadcast_add_time(&xt, &branch.infer(ps, &xt)?)?,
            None => xt,
        };
        Tensor::concat0(&[&xf_hat, &xt_hat])
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &TfConvBlockCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let half = self.cfg.out_channels / 2;
        let d_xf_hat = dy.slice0(0, half)?;
        let d_xt_hat = dy.slice0(half, half)?;

        let d_xf = match (&self.freq, &cache.freq) {
            (Some(branch), Some(c)) => {
                let (d_map, d_vf) = broadcast_add_freq_backward(&d_xf_hat)?;
                let d_from_branch = branch.backward(ps, c, &d_vf, grads)?;
                d_map.add(&d_from_branch)?
            }
            (None, None) => d_xf_hat,
            _ => return Err(Error::dim("tf-conv block: cache/branch mismatch")),
        };
        let d_xt = match (&self.time, &cache.time) {
            (Some(branch), Some(c)) => {
                let (d_map, d_vt) = broadcast_add_time_backward(&d_xt_hat)?;
                let d_from_branch = branch.backward(ps, c, &d_vt, grads)?;
                d_map.add(&d_from_branch)?
            }
            (None, None) => d_xt_hat,
            _ => return Err(Error::dim("tf-conv block: cache/branch mismatch")),
        };

        let d_s = Tensor::concat0(&[&d_xf, &d_xt])?;
        let d_t3 = if self.cfg.enable_shuffle {
            channel_shuffle_backward(&d_s, self.cfg.shuffle_groups)?
        } else {
            d_s
        };
        let d_t2 = relu_backward(&d_t3, &cache.relu);
        let d_t1 = self.bn_trans.backward(ps, &cache.bn_trans, &d_t2, grads)?;
        self.trans.backward(ps, &cache.trans, &d_t1, grads)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        let mut n = self.trans.param_count(ps) + self.bn_trans.param_count(ps);
        if let Some(b) = &self.freq {
            n += b.param_count(ps);
        }
        if let Some(b) = &self.time {
            n += b.param_count(ps);
        }
        n
    }

    /// MACs for one application on an `F×T` input map.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let mut n = self.trans.spec.macs(h, w)?;
        if let Some(b) = &self.freq {
            n += b.macs(h, w)?;
        }
        if let Some(b) = &self.time {
            n += b.macs(h, w)?;
        }
        Ok(n)
    }
}
