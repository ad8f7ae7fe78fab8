//! Parameter-free pointwise ops: ReLU, absolute value, sigmoid.

use crate::tensor::Tensor;

/// ReLU. The returned cache is the input itself; backward gates on it.
pub fn relu_forward(x: &Tensor) -> (Tensor, Tensor) {
    let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
    (y, x.clone())
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(dy: &Tensor, cache_x: &Tensor) -> Tensor {
    debug_assert_eq!(dy.shape(), cache_x.shape());
    let data: Vec<f64> = dy
        .data()
        .iter()
        .zip(cache_x.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(dy.shape(), data).expect("relu backward preserves finiteness")
}

/// |x|. Cache is the input (for the sign in backward).
pub fn abs_forward(x: &Tensor) -> (Tensor, Tensor) {
    (x.map(f64::abs), x.clone())
}

/// d|x|/dx = sign(x), with the subgradient 0 at exactly 0.
pub fn abs_backward(dy: &Tensor, cache_x: &Tensor) -> Tensor {
    debug_assert_eq!(dy.shape(), cache_x.shape());
    let data: Vec<f64> = dy
        .data()
        .iter()
        .zip(cache_x.data())
        .map(|(&g, &x)| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(dy.shape(), data).expect("abs backward preserves finiteness")
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
