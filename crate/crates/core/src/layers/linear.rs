//! Dense layer on vectors (used inside the squeeze-and-excitation gate).

use crate::error::Error;
use crate::param::{Grads, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug)]
pub struct LinearCache {
    pub x: Tensor,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        in_features: usize,
        out_features: usize,
        rng: &mut Rng,
    ) -> Self {
        let name = name.into();
        let bound = (6.0 / in_features as f64).sqrt();
        Linear {
            w: ps.register(
                format!("{name}.weight"),
                rng.uniform_tensor(&[out_features, in_features], -bound, bound),
                true,
            ),
            b: ps.register(format!("{name}.bias"), Tensor::zeros(&[out_features]), true),
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, LinearCache)> {
        let y = self.infer(ps, x)?;
        Ok((y, LinearCache { x: x.clone() }))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.numel() != self.in_features {
            return Err(Error::dim(format!(
                "linear: expected {} inputs, got {:?}",
                self.in_features,
                x.shape()
            )));
        }
        let w = ps.get(self.w).data();
        let b = ps.get(self.b).data();
        let xv = x.data();
        let mut y = vec![0.0; self.out_features];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.in_features..(o + 1) * self.in_features];
            *yo = b[o] + row.iter().zip(xv).map(|(&wi, &xi)| wi * xi).sum::<f64>();
        }
        Tensor::from_vec(&[self.out_features], y)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &LinearCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let w = ps.get(self.w).data();
        let xv = cache.x.data();
        let gy = dy.data();
        let mut dw = Tensor::zeros(&[self.out_features, self.in_features]);
        let mut dx = vec![0.0; self.in_features];
        for o in 0..self.out_features {
            let g = gy[o];
            let wrow = &w[o * self.in_features..(o + 1) * self.in_features];
            let drow = &mut dw.data_mut()[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                drow[i] += g * xv[i];
                dx[i] += g * wrow[i];
            }
        }
        grads.accumulate(self.w, &dw);
        grads.accumulate(self.b, dy);
        Tensor::from_vec(&[self.in_features], dx)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        (ps.get(self.w).numel() + ps.get(self.b).numel()) as u64
    }

    /// MACs of one application: out·in multiplies.
    pub fn macs(&self) -> u64 {
        (self.out_features * self.in_features) as u64
    }
}
