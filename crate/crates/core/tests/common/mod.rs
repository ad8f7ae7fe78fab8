//! Shared helpers for the integration suites: central finite-difference
//! scaffolding driven through the public API only, a from-scratch
//! convolution reference with an instrumented multiply counter, and the
//! gradient/forward-oracle check functions reused by several test targets.
#![allow(dead_code)]

use rawtfnet::layers::conv::{Conv1d, Conv2d, Conv2dSpec};
use rawtfnet::layers::res2::{DwsSeRes2Block, Res2Config, ResNetStem};
use rawtfnet::layers::{BatchNorm, Mode, SeBlock, SincBank};
use rawtfnet::model::{Model, ModelConfig};
use rawtfnet::param::{Grads, ParamStore};
use rawtfnet::rng::Rng;
use rawtfnet::tensor::Tensor;
use rawtfnet::tfconv::{TfConvBlock, TfConvConfig};
use rawtfnet::train::{weighted_cross_entropy, DEFAULT_CLASS_WEIGHTS};
use rawtfnet::Result;

/// Step used by every central finite-difference probe.
pub const FD_H: f64 = 1e-5;
/// Relative-error bound a single layer's gradients must meet.
pub const TOL_GRAD_LAYER: f64 = 1e-5;
/// Relative-error bound for the end-to-end (model through loss) check.
pub const TOL_GRAD_E2E: f64 = 1e-4;
/// Number of independent seeds every gradient check runs under.
pub const GRAD_SEEDS: u64 = 5;
/// Agreement bound between production forward ops and naive references.
pub const TOL_FORWARD_ORACLE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

/// Relative disagreement between an analytic gradient and its
/// finite-difference probe: max |a − f| normalized by the larger infinity
/// norm. The floor absorbs central-difference roundoff (≈ eps·|f|/2h) when
/// the true gradient is exactly zero — e.g. the scale-invariant direction of
/// a weight vector feeding a normalization layer.
pub fn grad_rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len(), "gradient length mismatch");
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let denom = inf(analytic).max(inf(fd)).max(1e-4);
    analytic
        .iter()
        .zip(fd)
        .fold(0.0_f64, |m, (a, f)| m.max((a - f).abs()))
        / denom
}

/// Central finite difference of `objective` along every scalar of the
/// parameter tensor named `param`, via the public store API (set + restore).
pub fn fd_param_gradient(
    ps: &mut ParamStore,
    param: rawtfnet::param::ParamId,
    h: f64,
    objective: &mut dyn FnMut(&ParamStore) -> Result<f64>,
) -> Vec<f64> {
    let base = ps.get(param).clone();
    let shape = base.shape().to_vec();
    let mut out = Vec::with_capacity(base.numel());
    for i in 0..base.numel() {
        let mut plus = base.data().to_vec();
        plus[i] += h;
        ps.set(param, Tensor::from_vec(&shape, plus).unwrap());
        let fp = objective(ps).expect("objective at +h");
        let mut minus = base.data().to_vec();
        minus[i] -= h;
        ps.set(param, Tensor::from_vec(&shape, minus).unwrap());
        let fm = objective(ps).expect("objective at -h");
        out.push((fp - fm) / (2.0 * h));
    }
    ps.set(param, base);
    out
}

/// Central finite difference of `objective` along every coordinate of `x`.
pub fn fd_input_gradient(
    x: &Tensor,
    h: f64,
    objective: &mut dyn FnMut(&Tensor) -> Result<f64>,
) -> Vec<f64> {
    let shape = x.shape().to_vec();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let mut plus = x.data().to_vec();
        plus[i] += h;
        let fp = objective(&Tensor::from_vec(&shape, plus).unwrap()).expect("objective at +h");
        let mut minus = x.data().to_vec();
        minus[i] -= h;
        let fm = objective(&Tensor::from_vec(&shape, minus).unwrap()).expect("objective at -h");
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// `sum(r ⊙ y)` — the scalar projection used as a differentiable objective.
pub fn project(r: &Tensor, y: &Tensor) -> f64 {
    assert_eq!(r.shape(), y.shape(), "projection shape mismatch");
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Move every trainable parameter off its initialization point. Freshly
/// built layers sit at degenerate spots for a finite-difference probe: BN
/// shift and bias parameters are exactly zero, which can park downstream
/// ReLUs exactly at their kink (a squeeze-excitation block after BN sees an
/// all-zero input, for example). A small random offset lands the check at a
/// generic interior point.
pub fn jitter_trainable(ps: &mut ParamStore, rng: &mut Rng) {
    for id in ps.ids() {
        if !ps.entry(id).trainable {
            continue;
        }
        let jitter = rng.uniform_tensor(ps.get(id).shape(), -0.25, 0.25);
        let bumped = ps.get(id).add(&jitter).unwrap();
        ps.set(id, bumped);
    }
}

/// Pull the band-pass edges strictly inside the open interval (0, Nyquist).
/// The default initialization tiles the full band, which puts the top
/// filter's upper edge exactly on the Nyquist clamp — a kink where central
/// differences straddle the boundary while the analytic gradient correctly
/// reports the clamped (zero) side.
pub fn shrink_sinc_bands(ps: &mut ParamStore) {
    for id in ps.ids() {
        let name = ps.entry(id).name.clone();
        if name.ends_with(".f_low") {
            let scaled = ps.get(id).scale(0.9);
            ps.set(id, scaled);
        } else if name.ends_with(".f_band") {
            let scaled = ps.get(id).scale(0.6);
            ps.set(id, scaled);
        }
    }
}

// ---------------------------------------------------------------------------
// naive convolution reference
// ---------------------------------------------------------------------------

pub struct NaiveConvOut {
    pub y: Tensor,
    /// Exactly one count per scalar multiply executed by the reference.
    pub muls: u64,
}

/// From-scratch grouped/strided/dilated 2D convolution over a materialized
/// zero-padded input. Every kernel tap multiplies unconditionally — taps
/// that land on padding multiply an explicit zero — so `muls` is the full
/// `Cout·(Cin/g)·Kh·Kw·Hout·Wout` product the complexity accounting claims.
pub fn naive_conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&[f64]>,
    spec: &Conv2dSpec,
) -> NaiveConvOut {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert_eq!(cin, spec.cin, "input channels disagree with the spec");
    let (ph, pw) = spec.pad;
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut padded = vec![0.0_f64; cin * hp * wp];
    for c in 0..cin {
        for i in 0..h {
            for j in 0..w {
                padded[(c * hp + i + ph) * wp + (j + pw)] = x.data()[(c * h + i) * w + j];
            }
        }
    }
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let ho = (hp - (dh * (kh - 1) + 1)) / sh + 1;
    let wo = (wp - (dw * (kw - 1) + 1)) / sw + 1;
    let cpg = spec.cin / spec.groups;
    let out_per_group = spec.cout / spec.groups;
    let mut y = vec![0.0_f64; spec.cout * ho * wo];
    let mut muls = 0u64;
    for co in 0..spec.cout {
        let g = co / out_per_group;
        for oi in 0..ho {
            for oj in 0..wo {
                let mut acc = bias.map_or(0.0, |b| b[co]);
                for ci in 0..cpg {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let ii = oi * sh + ki * dh;
                            let jj = oj * sw + kj * dw;
                            let xv = padded[((g * cpg + ci) * hp + ii) * wp + jj];
                            let wv = weight.data()[((co * cpg + ci) * kh + ki) * kw + kj];
                            acc += xv * wv;
                            muls += 1;
                        }
                    }
                }
                y[(co * ho + oi) * wo + oj] = acc;
            }
        }
    }
    NaiveConvOut {
        y: Tensor::from_vec(&[spec.cout, ho, wo], y).unwrap(),
        muls,
    }
}

/// A randomly drawn convolution configuration whose every kernel tap is
/// guaranteed to touch real input for at least one output position (so each
/// weight has nonzero sensitivity), together with an input size giving at
/// least two output rows and columns.
pub struct ConvCase {
    pub spec: Conv2dSpec,
    pub bias: bool,
    pub h: usize,
    pub w: usize,
}

pub fn random_conv_case(rng: &mut Rng) -> ConvCase {
    let groups = [1, 1, 2, 3][rng.index(4)];
    let cin = groups * (1 + rng.index(2));
    let cout = groups * (1 + rng.index(2));
    let kernel = (1 + rng.index(3), 1 + rng.index(3));
    let stride = (1 + rng.index(2), 1 + rng.index(2));
    let dilation = (1 + rng.index(2), 1 + rng.index(2));
    let pad = (rng.index(2), rng.index(2));
    let ext_h = dilation.0 * (kernel.0 - 1) + 1;
    let ext_w = dilation.1 * (kernel.1 - 1) + 1;
    ConvCase {
        spec: Conv2dSpec {
            cin,
            cout,
            kernel,
            stride,
            pad,
            dilation,
            groups,
        },
        bias: rng.index(2) == 1,
        h: ext_h + stride.0 + rng.index(3),
        w: ext_w + stride.1 + rng.index(3),
    }
}

/// A depthwise variant of the same construction (groups == cin == cout).
pub fn random_depthwise_case(rng: &mut Rng) -> ConvCase {
    let c = 1 + rng.index(4);
    let kernel = (1 + rng.index(3), 1 + rng.index(3));
    let dilation = (1 + rng.index(2), 1 + rng.index(2));
    let ext_h = dilation.0 * (kernel.0 - 1) + 1;
    let ext_w = dilation.1 * (kernel.1 - 1) + 1;
    ConvCase {
        spec: Conv2dSpec {
            cin: c,
            cout: c,
            kernel,
            stride: (1, 1),
            pad: (rng.index(2), rng.index(2)),
            dilation,
            groups: c,
        },
        bias: false,
        h: ext_h + 1 + rng.index(3),
        w: ext_w + 1 + rng.index(3),
    }
}

// ---------------------------------------------------------------------------
// per-layer gradient checks (analytic backward vs central differences)
// ---------------------------------------------------------------------------
//
// Every check builds one layer in a fresh parameter store, draws a random
// input and a random projection tensor r, and compares:
//   analytic   d(sum r ⊙ y)/dθ  from the layer's backward pass
//   numeric    central differences of the same objective
// over every trainable parameter scalar and every input coordinate. The
// returned value is the worst relative error seen.

/// Compare analytic grads against finite differences for every trainable
/// parameter, given the already-populated `grads` and a recompute objective.
fn worst_param_error(
    ps: &mut ParamStore,
    grads: &Grads,
    objective: &mut dyn FnMut(&ParamStore) -> Result<f64>,
) -> f64 {
    let mut worst = 0.0_f64;
    for id in ps.ids() {
        if !ps.entry(id).trainable {
            continue;
        }
        let analytic = grads.get(id).data().to_vec();
        let fd = fd_param_gradient(ps, id, FD_H, objective);
        worst = worst.max(grad_rel_error(&analytic, &fd));
    }
    worst
}

pub fn check_sinc_gradients(seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let bank = SincBank::new(&mut ps, "sinc", 2, 17, 16000.0, &mut rng).unwrap();
    shrink_sinc_bands(&mut ps);
    let x = rng.uniform_tensor(&[48], -1.0, 1.0);
    let (y0, cache) = bank.forward(&ps, &x).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = bank.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| bank.forward(store, &x).map(|(y, _)| project(&r, &y));
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| bank.forward(&ps, xi).map(|(y, _)| project(&r, &y));
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

/// The five convolution shapes exercised: plain dense, strided, dilated,
/// grouped, and depthwise — alternating bias on and off.
pub fn conv2d_gradient_variants() -> Vec<(&'static str, Conv2dSpec, bool, usize, usize)> {
    let dense = Conv2dSpec {
        cin: 3,
        cout: 4,
        kernel: (3, 3),
        stride: (1, 1),
        pad: (1, 1),
        dilation: (1, 1),
        groups: 1,
    };
    let strided = Conv2dSpec {
        cin: 2,
        cout: 3,
        kernel: (3, 2),
        stride: (2, 1),
        pad: (1, 0),
        dilation: (1, 1),
        groups: 1,
    };
    let dilated = Conv2dSpec {
        cin: 2,
        cout: 2,
        kernel: (3, 3),
        stride: (1, 1),
        pad: (2, 2),
        dilation: (2, 2),
        groups: 1,
    };
    let grouped = Conv2dSpec {
        cin: 4,
        cout: 6,
        kernel: (2, 3),
        stride: (1, 1),
        pad: (0, 1),
        dilation: (1, 1),
        groups: 2,
    };
    let depthwise = Conv2dSpec {
        cin: 4,
        cout: 4,
        kernel: (3, 1),
        stride: (1, 1),
        pad: (1, 0),
        dilation: (1, 1),
        groups: 4,
    };
    vec![
        ("dense", dense, true, 6, 7),
        ("strided", strided, false, 7, 6),
        ("dilated", dilated, true, 7, 7),
        ("grouped", grouped, false, 6, 6),
        ("depthwise", depthwise, true, 6, 5),
    ]
}

pub fn check_conv2d_gradients(spec: Conv2dSpec, bias: bool, h: usize, w: usize, seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let conv = Conv2d::new(&mut ps, "conv", spec, bias, &mut rng).unwrap();
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[spec.cin, h, w], -1.0, 1.0);
    let (y0, cache) = conv.forward(&ps, &x).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = conv.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| conv.forward(store, &x).map(|(y, _)| project(&r, &y));
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| conv.forward(&ps, xi).map(|(y, _)| project(&r, &y));
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_conv1d_gradients(seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let conv = Conv1d::new(&mut ps, "conv1", 3, 4, 3, 1, 1, true, &mut rng).unwrap();
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[3, 9], -1.0, 1.0);
    let (y0, cache) = conv.forward(&ps, &x).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = conv.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| conv.forward(store, &x).map(|(y, _)| project(&r, &y));
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| conv.forward(&ps, xi).map(|(y, _)| project(&r, &y));
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_batchnorm_gradients(seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let bn = BatchNorm::new(&mut ps, "bn", 3);
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[3, 4, 5], -1.0, 1.0);
    let (y0, cache, _) = bn.forward(&ps, &x, Mode::Train).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = bn.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| {
        bn.forward(store, &x, Mode::Train)
            .map(|(y, _, _)| project(&r, &y))
    };
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| {
        bn.forward(&ps, xi, Mode::Train)
            .map(|(y, _, _)| project(&r, &y))
    };
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_se_gradients(seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let se = SeBlock::new(&mut ps, "se", 4, 2, &mut rng);
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[4, 3, 5], -1.0, 1.0);
    let (y0, cache) = se.forward(&ps, &x).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = se.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| se.forward(store, &x).map(|(y, _)| project(&r, &y));
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| se.forward(&ps, xi).map(|(y, _)| project(&r, &y));
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_stem_gradients(seed: u64) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let stem = ResNetStem::new(&mut ps, "stem", 4, (2, 2), &mut rng).unwrap();
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[1, 6, 8], -1.0, 1.0);
    let mut updates = Vec::new();
    let (y0, cache) = stem.forward(&ps, &x, Mode::Train, &mut updates).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = stem.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| {
        let mut u = Vec::new();
        stem.forward(store, &x, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| {
        let mut u = Vec::new();
        stem.forward(&ps, xi, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_res2_gradients(seed: u64, with_projection: bool) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let cfg = Res2Config {
        in_channels: if with_projection { 4 } else { 8 },
        filters: 8,
        scale: 4,
        dilation: 2,
        se_reduction: 2,
        pool: (1, 2),
    };
    let block = DwsSeRes2Block::new(&mut ps, "res2", cfg, &mut rng).unwrap();
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[cfg.in_channels, 5, 6], -1.0, 1.0);
    let mut updates = Vec::new();
    let (y0, cache) = block.forward(&ps, &x, Mode::Train, &mut updates).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = block.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| {
        let mut u = Vec::new();
        block
            .forward(store, &x, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| {
        let mut u = Vec::new();
        block
            .forward(&ps, xi, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn check_tfconv_gradients(seed: u64, cfg: TfConvConfig) -> f64 {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let block = TfConvBlock::new(&mut ps, "tf", cfg, &mut rng).unwrap();
    jitter_trainable(&mut ps, &mut rng);
    let x = rng.uniform_tensor(&[cfg.in_channels, 4, 6], -1.0, 1.0);
    let mut updates = Vec::new();
    let (y0, cache) = block.forward(&ps, &x, Mode::Train, &mut updates).unwrap();
    let r = rng.uniform_tensor(y0.shape(), -1.0, 1.0);

    let mut grads = Grads::zeros_like(&ps);
    let dx = block.backward(&ps, &cache, &r, &mut grads).unwrap();

    let mut obj_p = |store: &ParamStore| {
        let mut u = Vec::new();
        block
            .forward(store, &x, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let worst = worst_param_error(&mut ps, &grads, &mut obj_p);
    let mut obj_x = |xi: &Tensor| {
        let mut u = Vec::new();
        block
            .forward(&ps, xi, Mode::Train, &mut u)
            .map(|(y, _)| project(&r, &y))
    };
    let fd_x = fd_input_gradient(&x, FD_H, &mut obj_x);
    worst.max(grad_rel_error(dx.data(), &fd_x))
}

pub fn full_tfconv_config() -> TfConvConfig {
    TfConvConfig {
        in_channels: 4,
        out_channels: 8,
        enable_freq_branch: true,
        enable_time_branch: true,
        enable_shuffle: true,
        shuffle_groups: 2,
    }
}

/// Gradient of the batch loss with respect to every logit coordinate.
pub fn check_loss_gradients(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let n = 4;
    let logits: Vec<Tensor> = (0..n)
        .map(|_| rng.uniform_tensor(&[2], -2.0, 2.0))
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let w = DEFAULT_CLASS_WEIGHTS;

    let (_, dlogits) = weighted_cross_entropy(&logits, &labels, w).unwrap();

    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut obj = |zi: &Tensor| {
            let mut zs: Vec<Tensor> = logits.clone();
            zs[i] = zi.clone();
            weighted_cross_entropy(&zs, &labels, w).map(|(l, _)| l)
        };
        let fd = fd_input_gradient(&logits[i], FD_H, &mut obj);
        worst = worst.max(grad_rel_error(dlogits[i].data(), &fd));
    }
    worst
}

/// End-to-end check: the smallest full model, one waveform, through the
/// weighted cross-entropy. Compares analytic gradients for every trainable
/// parameter and a sample of waveform coordinates against central
/// differences of the scalar loss.
pub fn check_e2e_micro_gradients(seed: u64) -> f64 {
    let cfg = ModelConfig::micro();
    let mut model = Model::build(&cfg, seed).unwrap();
    shrink_sinc_bands(&mut model.ps);
    let mut rng = Rng::new(seed ^ 0x00e2_e5ee_d5).derive(&[7]);
    let wave = rng.uniform_tensor(&[cfg.segment_len], -0.9, 0.9);
    let label = (seed % 2) as usize;
    let w = DEFAULT_CLASS_WEIGHTS;

    let loss_at = |m: &Model, x: &Tensor| -> Result<f64> {
        let (z, _, _) = m.forward_utterance(x, Mode::Train)?;
        weighted_cross_entropy(&[z], &[label], w).map(|(l, _)| l)
    };

    let (z, cache, _) = model.forward_utterance(&wave, Mode::Train).unwrap();
    let (_, dlogits) = weighted_cross_entropy(&[z], &[label], w).unwrap();
    let mut grads = Grads::zeros_like(&model.ps);
    let dwave = model.backward(&cache, &dlogits[0], &mut grads).unwrap();

    let mut worst = 0.0_f64;
    for id in model.ps.ids() {
        if !model.ps.entry(id).trainable {
            continue;
        }
        let analytic = grads.get(id).data().to_vec();
        let base = model.ps.get(id).clone();
        let shape = base.shape().to_vec();
        let mut fd = Vec::with_capacity(base.numel());
        for i in 0..base.numel() {
            let mut plus = base.data().to_vec();
            plus[i] += FD_H;
            model.ps.set(id, Tensor::from_vec(&shape, plus).unwrap());
            let fp = loss_at(&model, &wave).unwrap();
            let mut minus = base.data().to_vec();
            minus[i] -= FD_H;
            model.ps.set(id, Tensor::from_vec(&shape, minus).unwrap());
            let fm = loss_at(&model, &wave).unwrap();
            fd.push((fp - fm) / (2.0 * FD_H));
        }
        model.ps.set(id, base);
        worst = worst.max(grad_rel_error(&analytic, &fd));
    }

    // waveform gradient on a deterministic sample of coordinates
    let n_probe = 20;
    let mut idx: Vec<usize> = (0..n_probe).map(|_| rng.index(cfg.segment_len)).collect();
    idx.sort_unstable();
    idx.dedup();
    let mut analytic_w = Vec::with_capacity(idx.len());
    let mut fd_w = Vec::with_capacity(idx.len());
    for &i in &idx {
        analytic_w.push(dwave.data()[i]);
        let mut plus = wave.data().to_vec();
        plus[i] += FD_H;
        let fp = loss_at(&model, &Tensor::from_vec(&[cfg.segment_len], plus).unwrap()).unwrap();
        let mut minus = wave.data().to_vec();
        minus[i] -= FD_H;
        let fm = loss_at(&model, &Tensor::from_vec(&[cfg.segment_len], minus).unwrap()).unwrap();
        fd_w.push((fp - fm) / (2.0 * FD_H));
    }
    worst.max(grad_rel_error(&analytic_w, &fd_w))
}

// ---------------------------------------------------------------------------
// forward-oracle checks (production ops vs naive loops)
// ---------------------------------------------------------------------------

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Production convolution vs the naive reference on one random case.
/// Returns (max abs diff, production MAC formula, instrumented multiplies).
pub fn conv_vs_naive(case: &ConvCase, seed: u64) -> (f64, u64, u64) {
    let mut ps = ParamStore::new();
    let mut rng = Rng::new(seed);
    let conv = Conv2d::new(&mut ps, "c", case.spec, case.bias, &mut rng).unwrap();
    let x = rng.uniform_tensor(&[case.spec.cin, case.h, case.w], -1.0, 1.0);
    let (y, _) = conv.forward(&ps, &x).unwrap();
    let weight = ps.get(conv.w).clone();
    let bias_data = conv.b.map(|b| ps.get(b).data().to_vec());
    let naive = naive_conv2d(&x, &weight, bias_data.as_deref(), &case.spec);
    assert_eq!(y.shape(), naive.y.shape(), "output shapes disagree");
    (
        max_abs_diff(y.data(), naive.y.data()),
        case.spec.macs(case.h, case.w).unwrap(),
        naive.muls,
    )
}

/// The permutation a [groups × per-group] reshape-transpose induces on
/// channel indices, built by literally materializing the index matrix.
pub fn enumerated_shuffle_permutation(c: usize, groups: usize) -> Vec<usize> {
    assert_eq!(c % groups, 0);
    let per = c / groups;
    let matrix: Vec<Vec<usize>> = (0..groups)
        .map(|i| (0..per).map(|j| i * per + j).collect())
        .collect();
    let mut out = Vec::with_capacity(c);
    for j in 0..per {
        for row in matrix.iter().take(groups) {
            out.push(row[j]);
        }
    }
    out
}
