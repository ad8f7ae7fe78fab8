//! Layer primitives: forward passes with cached intermediates and exact
//! hand-written reverse-mode backward passes.
//!
//! Conventions shared by every layer:
//! - Feature maps are single-sample `[C, F, T]` (or `[C, L]` for 1D);
//!   batching happens one level up, in the trainer.
//! - `forward` returns `(output, cache)`; `backward` consumes the cache, the
//!   upstream gradient, and accumulates parameter gradients into a
//!   [`crate::param::Grads`], returning the input gradient. Because a cache
//!   can only come from a forward call, "backward before forward" is ruled
//!   out by construction rather than checked at runtime.
//! - `infer` computes eval-mode output without retaining any cache (used for
//!   scoring, where activations at full input length would be large).
//! - Convolution is cross-correlation (no kernel flip). Output length along
//!   an axis is `floor((n + 2p − d(k−1) − 1) / s) + 1`.
//! - Batch normalization in train mode uses statistics of the current sample
//!   over its spatial extent (see `batchnorm` module docs).

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod linear;
pub mod pooling;
pub mod res2;
pub mod se;
pub mod sinc;

pub use activation::{abs_backward, abs_forward, relu_backward, relu_forward, sigmoid};
pub use batchnorm::{BatchNorm, BnCache, BnUpdate};
pub use conv::{Conv1d, Conv2d};
pub use linear::Linear;
pub use pooling::{mean_axis_backward, mean_axis_forward, MaxPool1d, MaxPool2d};
pub use res2::{DwsSeRes2Block, ResNetStem};
pub use se::SeBlock;
pub use sinc::SincBank;

/// Forward-pass mode: train mode uses (and records) batch statistics in
/// normalization layers; eval mode uses running statistics and is fully
/// deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Output length of a convolution/pooling axis, or `None` when the kernel
/// does not fit: `floor((n + 2p − d(k−1) − 1)/s) + 1`.
pub fn conv_out_len(n: usize, k: usize, stride: usize, pad: usize, dilation: usize) -> Option<usize> {
    let eff = dilation * (k - 1) + 1;
    let padded = n + 2 * pad;
    if eff > padded {
        return None;
    }
    Some((padded - eff) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_len_formula() {
        // 5 input, k=3, stride 1, pad 1 (same) -> 5
        assert_eq!(conv_out_len(5, 3, 1, 1, 1), Some(5));
        // valid conv: 64000 input, k=129 -> 63872
        assert_eq!(conv_out_len(64000, 129, 1, 0, 1), Some(63872));
        // dilated: k=3, d=2 covers 5 taps
        assert_eq!(conv_out_len(6, 3, 1, 2, 2), Some(6));
        // kernel larger than padded input
        assert_eq!(conv_out_len(2, 5, 1, 0, 1), None);
    }
}
