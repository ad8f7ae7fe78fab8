//! Frontend residual blocks.
//!
//! [`ResNetStem`] is the first 2D block after the sinc frontend: a
//! depthwise-separable body (depthwise 3×3 → BN → ReLU → pointwise 1×1 → BN)
//! plus a 1×1 projection shortcut, ReLU on the sum, then a time max-pool.
//!
//! [`DwsSeRes2Block`] is the main frontend block: pointwise expansion, a
//! hierarchical multi-scale stage (channels split into `scale` groups; group
//! 1 passes through, each later group is depthwise-convolved together with
//! its predecessor's output), pointwise fusion, a squeeze-and-excitation
//! gate, a residual shortcut (1×1 projection when widths differ), ReLU, and
//! a time max-pool.

use crate::error::Error;
use crate::layers::activation::{relu_backward, relu_forward};
use crate::layers::batchnorm::{BatchNorm, BnCache, BnUpdate};
use crate::layers::conv::{Conv2d, Conv2dCache, Conv2dSpec};
use crate::layers::pooling::{MaxPool2d, MaxPoolCache};
use crate::layers::se::{SeBlock, SeCache};
use crate::layers::Mode;
use crate::param::{Grads, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

fn pw_spec(cin: usize, cout: usize) -> Conv2dSpec {
    Conv2dSpec {
        cin,
        cout,
        kernel: (1, 1),
        stride: (1, 1),
        pad: (0, 0),
        dilation: (1, 1),
        groups: 1,
    }
}

fn dw_spec(channels: usize, kernel: (usize, usize), dilation: (usize, usize)) -> Conv2dSpec {
    Conv2dSpec {
        cin: channels,
        cout: channels,
        kernel,
        stride: (1, 1),
        pad: (dilation.0 * (kernel.0 - 1) / 2, dilation.1 * (kernel.1 - 1) / 2),
        dilation,
        groups: channels,
    }
}

/// First 2D block: 1 input channel → `filters`, DWS body + projection
/// shortcut, trailing time pool.
#[derive(Debug, Clone)]
pub struct ResNetStem {
    pub dw: Conv2d,
    pub bn_dw: BatchNorm,
    pub pw: Conv2d,
    pub bn_pw: BatchNorm,
    pub proj: Conv2d,
    pub bn_proj: BatchNorm,
    pub pool: MaxPool2d,
    pub filters: usize,
}

#[derive(Debug)]
pub struct ResNetStemCache {
    dw: Conv2dCache,
    bn_dw: BnCache,
    relu_dw: Tensor,
    pw: Conv2dCache,
    bn_pw: BnCache,
    proj: Conv2dCache,
    bn_proj: BnCache,
    relu_sum: Tensor,
    pool: MaxPoolCache,
}

impl ResNetStem {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        filters: usize,
        pool: (usize, usize),
        rng: &mut Rng,
    ) -> Result<Self> {
        let name = name.into();
        Ok(ResNetStem {
            dw: Conv2d::new(ps, format!("{name}.dw"), dw_spec(1, (3, 3), (1, 1)), false, rng)?,
            bn_dw: BatchNorm::new(ps, format!("{name}.bn_dw"), 1),
            pw: Conv2d::new(ps, format!("{name}.pw"), pw_spec(1, filters), false, rng)?,
            bn_pw: BatchNorm::new(ps, format!("{name}.bn_pw"), filters),
            proj: Conv2d::new(ps, format!("{name}.proj"), pw_spec(1, filters), false, rng)?,
            bn_proj: BatchNorm::new(ps, format!("{name}.bn_proj"), filters),
            pool: MaxPool2d::new(pool, pool),
            filters,
        })
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<(Tensor, ResNetStemCache)> {
        let (t1, dw_c) = self.dw.forward(ps, x)?;
        let (t2, bn_dw_c, u1) = self.bn_dw.forward(ps, &t1, mode)?;
        let (t3, relu_dw) = relu_forward(&t2);
        let (t4, pw_c) = self.pw.forward(ps, &t3)?;
        let (body, bn_pw_c, u2) = self.bn_pw.forward(ps, &t4, mode)?;
        let (p1, proj_c) = self.proj.forward(ps, x)?;
        let (shortcut, bn_proj_c, u3) = self.bn_proj.forward(ps, &p1, mode)?;
        let (summed, relu_sum) = relu_forward(&body.add(&shortcut)?);
        let (y, pool_c) = self.pool.forward(&summed)?;
        updates.extend([u1, u2, u3].into_iter().flatten());
        Ok((
            y,
            ResNetStemCache {
                dw: dw_c,
                bn_dw: bn_dw_c,
                relu_dw,
                pw: pw_c,
                bn_pw: bn_pw_c,
                proj: proj_c,
                bn_proj: bn_proj_c,
                relu_sum,
                pool: pool_c,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let t = self.dw.infer(ps, x)?;
        let t = self.bn_dw.infer(ps, &t)?;
        let t = t.map(|v| v.max(0.0));
        let t = self.pw.infer(ps, &t)?;
        let body = self.bn_pw.infer(ps, &t)?;
        let shortcut = self.bn_proj.infer(ps, &self.proj.infer(ps, x)?)?;
        let summed = body.add(&shortcut)?.map(|v| v.max(0.0));
        self.pool.infer(&summed)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &ResNetStemCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let d_summed = self.pool.backward(&cache.pool, dy)?;
        let d_sum = relu_backward(&d_summed, &cache.relu_sum);
        // shortcut path
        let d_p1 = self.bn_proj.backward(ps, &cache.bn_proj, &d_sum, grads)?;
        let dx_short = self.proj.backward(ps, &cache.proj, &d_p1, grads)?;
        // body path
        let d_t4 = self.bn_pw.backward(ps, &cache.bn_pw, &d_sum, grads)?;
        let d_t3 = self.pw.backward(ps, &cache.pw, &d_t4, grads)?;
        let d_t2 = relu_backward(&d_t3, &cache.relu_dw);
        let d_t1 = self.bn_dw.backward(ps, &cache.bn_dw, &d_t2, grads)?;
        let dx_body = self.dw.backward(ps, &cache.dw, &d_t1, grads)?;
        dx_body.add(&dx_short)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        self.dw.param_count(ps)
            + self.bn_dw.param_count(ps)
            + self.pw.param_count(ps)
            + self.bn_pw.param_count(ps)
            + self.proj.param_count(ps)
            + self.bn_proj.param_count(ps)
    }

    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        Ok(self.dw.spec.macs(h, w)? + self.pw.spec.macs(h, w)? + self.proj.spec.macs(h, w)?)
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.pool.out_dims(h, w)
    }
}

/// Main frontend block configuration.
#[derive(Debug, Clone, Copy)]
pub struct Res2Config {
    pub in_channels: usize,
    pub filters: usize,
    pub scale: usize,
    pub dilation: usize,
    pub se_reduction: usize,
    pub pool: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct DwsSeRes2Block {
    pub cfg: Res2Config,
    pub pw1: Conv2d,
    pub bn1: BatchNorm,
    /// One depthwise conv + BN per hierarchical group 2..scale.
    pub hier: Vec<(Conv2d, BatchNorm)>,
    pub pw2: Conv2d,
    pub bn2: BatchNorm,
    pub se: SeBlock,
    pub proj: Option<(Conv2d, BatchNorm)>,
    pub pool: MaxPool2d,
}

#[derive(Debug)]
pub struct Res2BlockCache {
    pw1: Conv2dCache,
    bn1: BnCache,
    relu1: Tensor,
    /// Per hierarchical group: (conv cache, bn cache, relu cache).
    hier: Vec<(Conv2dCache, BnCache, Tensor)>,
    pw2: Conv2dCache,
    bn2: BnCache,
    se: SeCache,
    proj: Option<(Conv2dCache, BnCache)>,
    relu_sum: Tensor,
    pool: MaxPoolCache,
}

impl DwsSeRes2Block {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        cfg: Res2Config,
        rng: &mut Rng,
    ) -> Result<Self> {
        if cfg.scale == 0 || cfg.filters % cfg.scale != 0 {
            return Err(Error::config(format!(
                "res2 block: filters {} not divisible by scale {}",
                cfg.filters, cfg.scale
            )));
        }
        let name = name.into();
        let gch = cfg.filters / cfg.scale;
        let mut hier = Vec::new();
        for i in 1..cfg.scale {
            hier.push((
                Conv2d::new(
                    ps,
                    format!("{name}.hier{}.dw", i + 1),
                    dw_spec(gch, (3, 3), (cfg.dilation, cfg.dilation)),
                    false,
                    rng,
                )?,
                BatchNorm::new(ps, format!("{name}.hier{}.bn", i + 1), gch),
            ));
        }
        let proj = if cfg.in_channels != cfg.filters {
            Some((
                Conv2d::new(
                    ps,
                    format!("{name}.proj"),
                    pw_spec(cfg.in_channels, cfg.filters),
                    false,
                    rng,
                )?,
                BatchNorm::new(ps, format!("{name}.bn_proj"), cfg.filters),
            ))
        } else {
            None
        };
        Ok(DwsSeRes2Block {
            pw1: Conv2d::new(
                ps,
                format!("{name}.pw1"),
                pw_spec(cfg.in_channels, cfg.filters),
                false,
                rng,
            )?,
            bn1: BatchNorm::new(ps, format!("{name}.bn1"), cfg.filters),
            hier,
            pw2: Conv2d::new(
                ps,
                format!("{name}.pw2"),
                pw_spec(cfg.filters, cfg.filters),
                false,
                rng,
            )?,
            bn2: BatchNorm::new(ps, format!("{name}.bn2"), cfg.filters),
            se: SeBlock::new(ps, format!("{name}.se"), cfg.filters, cfg.se_reduction, rng),
            proj,
            pool: MaxPool2d::new(cfg.pool, cfg.pool),
            cfg,
        })
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<(Tensor, Res2BlockCache)> {
        let s = self.cfg.scale;
        let gch = self.cfg.filters / s;

        let (t1, pw1_c) = self.pw1.forward(ps, x)?;
        let (t2, bn1_c, u) = self.bn1.forward(ps, &t1, mode)?;
        updates.extend(u);
        let (t3, relu1) = relu_forward(&t2);

        // hierarchical stage: group 1 passes through; group i (i>=2) is
        // depthwise-convolved on (its slice + previous group's output)
        let mut outs: Vec<Tensor> = vec![t3.slice0(0, gch)?];
        let mut hier_caches = Vec::new();
        for (i, (conv, bn)) in self.hier.iter().enumerate() {
            let slice = t3.slice0((i + 1) * gch, gch)?;
            let fed = slice.add(outs.last().expect("nonempty"))?;
            let (c1, conv_c) = conv.forward(ps, &fed)?;
            let (c2, bn_c, u) = bn.forward(ps, &c1, mode)?;
            updates.extend(u);
            let (c3, relu_c) = relu_forward(&c2);
            outs.push(c3);
            hier_caches.push((conv_c, bn_c, relu_c));
        }
        let cat = Tensor::concat0(&outs.iter().collect::<Vec<_>>())?;

        let (t4, pw2_c) = self.pw2.forward(ps, &cat)?;
        let (t5, bn2_c, u) = self.bn2.forward(ps, &t4, mode)?;
        updates.extend(u);
        let (t6, se_c) = self.se.forward(ps, &t5)?;

        let (shortcut, proj_c) = match &self.proj {
            Some((conv, bn)) => {
                let (p1, conv_c) = conv.forward(ps, x)?;
                let (p2, bn_c, u) = bn.forward(ps, &p1, mode)?;
                updates.extend(u);
                (p2, Some((conv_c, bn_c)))
            }
            None => (x.clone(), None),
        };
        let (summed, relu_sum) = relu_forward(&t6.add(&shortcut)?);
        let (y, pool_c) = self.pool.forward(&summed)?;
        Ok((
            y,
            Res2BlockCache {
                pw1: pw1_c,
                bn1: bn1_c,
                relu1,
                hier: hier_caches,
                pw2: pw2_c,
                bn2: bn2_c,
                se: se_c,
                proj: proj_c,
                relu_sum,
                pool: pool_c,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let s = self.cfg.scale;
        let gch = self.cfg.filters / s;
        let t = self.pw1.infer(ps, x)?;
        let t = self.bn1.infer(ps, &t)?;
        let t3 = t.map(|v| v.max(0.0));
        let mut outs: Vec<Tensor> = vec![t3.slice0(0, gch)?];
        for (i, (conv, bn)) in self.hier.iter().enumerate() {
            let fed = t3
                .slice0((i + 1) * gch, gch)?
                .add(outs.last().expect("nonempty"))?;
            let c = bn.infer(ps, &conv.infer(ps, &fed)?)?;
            outs.push(c.map(|v| v.max(0.0)));
        }
        let cat = Tensor::concat0(&outs.iter().collect::<Vec<_>>())?;
        let t = self.bn2.infer(ps, &self.pw2.infer(ps, &cat)?)?;
        let t = self.se.infer(ps, &t)?;
        let shortcut = match &self.proj {
            Some((conv, bn)) => bn.infer(ps, &conv.infer(ps, x)?)?,
            None => x.clone(),
        };
        let summed = t.add(&shortcut)?.map(|v| v.max(0.0));
        self.pool.infer(&summed)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &Res2BlockCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let s = self.cfg.scale;
        let gch = self.cfg.filters / s;

        let d_summed = self.pool.backward(&cache.pool, dy)?;
        let d_sum = relu_backward(&d_summed, &cache.relu_sum);

        // shortcut path
        let dx_short = match (&self.proj, &cache.proj) {
            (Some((conv, bn)), Some((conv_c, bn_c))) => {
                let d_p1 = bn.backward(ps, bn_c, &d_sum, grads)?;
                conv.backward(ps, conv_c, &d_p1, grads)?
            }
            (None, None) => d_sum.clone(),
            _ => return Err(Error::dim("res2 block: cache/projection mismatch")),
        };

        // body path
        let d_t5 = self.se.backward(ps, &cache.se, &d_sum, grads)?;
        let d_t4 = self.bn2.backward(ps, &cache.bn2, &d_t5, grads)?;
        let d_cat = self.pw2.backward(ps, &cache.pw2, &d_t4, grads)?;

        // hierarchy backward: walk groups from last to first, carrying the
        // gradient that flows into "previous group's output"
        let mut d_t3 = Tensor::zeros(cache.relu1.shape());
        let mut d_carry = Tensor::zeros(&[gch, d_cat.shape()[1], d_cat.shape()[2]]);
        for i in (1..s).rev() {
            let d_out_i = d_cat.slice0(i * gch, gch)?.add(&d_carry)?;
            let (conv, bn) = &self.hier[i - 1];
            let (conv_c, bn_c, relu_c) = &cache.hier[i - 1];
            let d_c2 = relu_backward(&d_out_i, relu_c);
            let d_c1 = bn.backward(ps, bn_c, &d_c2, grads)?;
            let d_fed = conv.backward(ps, conv_c, &d_c1, grads)?;
            // fed = slice_i + out_{i-1}
            copy_into_slice0(&mut d_t3, i * gch, &d_fed);
            d_carry = d_fed;
        }
        // group 1 receives its slice of d_cat plus the carry from group 2
        let d_out_1 = d_cat.slice0(0, gch)?.add(&d_carry)?;
        copy_into_slice0(&mut d_t3, 0, &d_out_1);

        let d_t2 = relu_backward(&d_t3, &cache.relu1);
        let d_t1 = self.bn1.backward(ps, &cache.bn1, &d_t2, grads)?;
        let dx_body = self.pw1.backward(ps, &cache.pw1, &d_t1, grads)?;
        dx_body.add(&dx_short)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        let mut n = self.pw1.param_count(ps)
            + self.bn1.param_count(ps)
            + self.pw2.param_count(ps)
            + self.bn2.param_count(ps)
            + self.se.param_count(ps);
        for (conv, bn) in &self.hier {
            n += conv.param_count(ps) + bn.param_count(ps);
        }
        if let Some((conv, bn)) = &self.proj {
            n += conv.param_count(ps) + bn.param_count(ps);
        }
        n
    }

    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let mut n = self.pw1.spec.macs(h, w)? + self.pw2.spec.macs(h, w)? + self.se.macs();
        for (conv, _) in &self.hier {
            n += conv.spec.macs(h, w)?;
        }
        if let Some((conv, _)) = &self.proj {
            n += conv.spec.macs(h, w)?;
        }
        Ok(n)
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.pool.out_dims(h, w)
    }
}

/// Add `src` into the `[start, start+len)` channel range of `dst`.
fn copy_into_slice0(dst: &mut Tensor, start: usize, src: &Tensor) {
    let inner: usize = dst.shape()[1..].iter().product();
    let off = start * inner;
    let dstd = dst.data_mut();
    for (i, &v) in src.data().iter().enumerate() {
        dstd[off + i] += v;
    }
}
