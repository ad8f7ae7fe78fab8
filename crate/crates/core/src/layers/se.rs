//! Squeeze-and-excitation channel gate.
//!
//! Squeeze: global mean over the spatial extent per channel. Excitation:
//! linear(C → max(1, C/r)) → ReLU → linear(→ C) → sigmoid. The input map is
//! scaled per channel by the resulting gate.

use crate::error::Error;
use crate::layers::activation::sigmoid;
use crate::layers::linear::{Linear, LinearCache};
use crate::param::{Grads, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc1: Linear,
    pub fc2: Linear,
    pub channels: usize,
    pub reduction: usize,
}

#[derive(Debug)]
pub struct SeCache {
    pub x: Tensor,
    pub squeeze: Tensor,
    pub z1: Tensor,
    pub a1: Tensor,
    pub gate: Vec<f64>,
    fc1: LinearCache,
    fc2: LinearCache,
}

impl SeBlock {
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        channels: usize,
        reduction: usize,
        rng: &mut Rng,
    ) -> Self {
        let name = name.into();
        let bottleneck = (channels / reduction).max(1);
        SeBlock {
            fc1: Linear::new(ps, format!("{name}.fc1"), channels, bottleneck, rng),
            fc2: Linear::new(ps, format!("{name}.fc2"), bottleneck, channels, rng),
            channels,
            reduction,
        }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        if x.ndim() != 3 || x.shape()[0] != self.channels {
            return Err(Error::dim(format!(
                "se block: expected [{}, F, T], got {:?}",
                self.channels,
                x.shape()
            )));
        }
        Ok(x.shape()[1] * x.shape()[2])
    }

    fn gate(&self, ps: &ParamStore, x: &Tensor, spatial: usize) -> Result<(Tensor, Tensor, Tensor, Vec<f64>, LinearCache, LinearCache)> {
        let mut s = vec![0.0; self.channels];
        for (c, sc) in s.iter_mut().enumerate() {
            *sc = x.data()[c * spatial..(c + 1) * spatial].iter().sum::<f64>() / spatial as f64;
        }
        let squeeze = Tensor::from_vec(&[self.channels], s)?;
        let (z1, fc1_cache) = self.fc1.forward(ps, &squeeze)?;
        let a1 = z1.map(|v| if v > 0.0 { v } else { 0.0 });
        let (z2, fc2_cache) = self.fc2.forward(ps, &a1)?;
        let gate: Vec<f64> = z2.data().iter().map(|&v| sigmoid(v)).collect();
        Ok((squeeze, z1, a1, gate, fc1_cache, fc2_cache))
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<(Tensor, SeCache)> {
        let spatial = self.check(x)?;
        let (squeeze, z1, a1, gate, fc1, fc2) = self.gate(ps, x, spatial)?;
        let mut y = Tensor::zeros(x.shape());
        for c in 0..self.channels {
            let g = gate[c];
            let src = &x.data()[c * spatial..(c + 1) * spatial];
            let dst = &mut y.data_mut()[c * spatial..(c + 1) * spatial];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s * g;
            }
        }
        Ok((
            y,
            SeCache {
                x: x.clone(),
                squeeze,
                z1,
                a1,
                gate,
                fc1,
                fc2,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(ps, x)?.0)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &SeCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let spatial = self.check(&cache.x)?;
        // dx (direct path) and d gate
        let mut dx = Tensor::zeros(cache.x.shape());
        let mut dgate = vec![0.0; self.channels];
        for c in 0..self.channels {
            let g = cache.gate[c];
            let xs = &cache.x.data()[c * spatial..(c + 1) * spatial];
            let gys = &dy.data()[c * spatial..(c + 1) * spatial];
            let dxs = &mut dx.data_mut()[c * spatial..(c + 1) * spatial];
            let mut acc = 0.0;
            for ((d, &x), &gy) in dxs.iter_mut().zip(xs).zip(gys) {
                *d = gy * g;
                acc += gy * x;
            }
            dgate[c] = acc;
        }
        // through sigmoid
        let dz2: Vec<f64> = dgate
            .iter()
            .zip(&cache.gate)
            .map(|(&dg, &g)| dg * g * (1.0 - g))
            .collect();
        let dz2 = Tensor::from_vec(&[self.channels], dz2)?;
        let da1 = self.fc2.backward(ps, &cache.fc2, &dz2, grads)?;
        // through ReLU
        let dz1: Vec<f64> = da1
            .data()
            .iter()
            .zip(cache.z1.data())
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let dz1 = Tensor::from_vec(&[da1.numel()], dz1)?;
        let dsqueeze = self.fc1.backward(ps, &cache.fc1, &dz1, grads)?;
        // squeeze backward: spread over spatial extent
        for c in 0..self.channels {
            let g = dsqueeze.data()[c] / spatial as f64;
            let dxs = &mut dx.data_mut()[c * spatial..(c + 1) * spatial];
            for d in dxs.iter_mut() {
                *d += g;
            }
        }
        Ok(dx)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        self.fc1.param_count(ps) + self.fc2.param_count(ps)
    }

    /// MACs of one application: the two dense maps. The squeeze mean and the
    /// per-element scale count as zero, like other elementwise/pooling ops.
    pub fn macs(&self) -> u64 {
        self.fc1.macs() + self.fc2.macs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(c: usize, r: usize, seed: u64) -> (ParamStore, SeBlock) {
        let mut ps = ParamStore::new();
        let mut rng = Rng::new(seed);
        let se = SeBlock::new(&mut ps, "se", c, r, &mut rng);
        (ps, se)
    }

    #[test]
    fn zero_weights_halve_input() {
        let (mut ps, se) = block(4, 2, 0);
        ps.set(se.fc1.w, Tensor::zeros(&[2, 4]));
        ps.set(se.fc1.b, Tensor::zeros(&[2]));
        ps.set(se.fc2.w, Tensor::zeros(&[4, 2]));
        ps.set(se.fc2.b, Tensor::zeros(&[4]));
        let mut rng = Rng::new(1);
        let x = rng.uniform_tensor(&[4, 3, 5], -1.0, 1.0);
        let y = se.infer(&ps, &x).unwrap();
        let half = x.scale(0.5);
        assert!(crate::tensor::max_abs_diff(&y, &half) < 1e-15);
    }

    #[test]
    fn gate_invariant_to_spatial_permutation() {
        let (ps, se) = block(3, 2, 5);
        let mut rng = Rng::new(6);
        let x = rng.uniform_tensor(&[3, 4, 2], -1.0, 1.0);
        let xp = x.permute(&[0, 2, 1]).unwrap(); // swap F and T
        let (_, cache_a) = se.forward(&ps, &x).unwrap();
        let (_, cache_b) = se.forward(&ps, &xp).unwrap();
        for c in 0..3 {
            assert!((cache_a.gate[c] - cache_b.gate[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_staged_hand_pipeline() {
        let (ps, se) = block(4, 2, 9);
        let mut rng = Rng::new(10);
        let x = rng.uniform_tensor(&[4, 2, 3], -1.0, 1.0);
        let y = se.infer(&ps, &x).unwrap();

        // independent staged recomputation
        let spatial = 6;
        let mut s = [0.0; 4];
        for c in 0..4 {
            s[c] = x.data()[c * spatial..(c + 1) * spatial].iter().sum::<f64>() / 6.0;
        }
        let w1 = ps.get(se.fc1.w).data();
        let b1 = ps.get(se.fc1.b).data();
        let mut z1 = [0.0; 2];
        for o in 0..2 {
            z1[o] = b1[o] + (0..4).map(|i| w1[o * 4 + i] * s[i]).sum::<f64>();
            z1[o] = z1[o].max(0.0);
        }
        let w2 = ps.get(se.fc2.w).data();
        let b2 = ps.get(se.fc2.b).data();
        for c in 0..4 {
            let z2 = b2[c] + (0..2).map(|i| w2[c * 2 + i] * z1[i]).sum::<f64>();
            let g = 1.0 / (1.0 + (-z2).exp());
            for i in 0..spatial {
                let expect = x.data()[c * spatial + i] * g;
                assert!((y.data()[c * spatial + i] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn channel_permutation_equivariance() {
        let (ps, se) = block(4, 2, 11);
        let mut rng = Rng::new(12);
        let x = rng.uniform_tensor(&[4, 3, 3], -1.0, 1.0);
        let perm = [2usize, 0, 3, 1];

        // permute input channels AND parameters consistently
        let (mut ps2, se2) = block(4, 2, 11);
        let w1 = ps.get(se.fc1.w).clone();
        let mut w1p = Tensor::zeros(&[2, 4]);
        for o in 0..2 {
            for i in 0..4 {
                w1p.set(&[o, i], w1.at(&[o, perm[i]]));
            }
        }
        ps2.set(se2.fc1.w, w1p);
        ps2.set(se2.fc1.b, ps.get(se.fc1.b).clone());
        let w2 = ps.get(se.fc2.w).clone();
        let b2 = ps.get(se.fc2.b).clone();
        let mut w2p = Tensor::zeros(&[4, 2]);
        let mut b2p = Tensor::zeros(&[4]);
        for o in 0..4 {
            for i in 0..2 {
                w2p.set(&[o, i], w2.at(&[perm[o], i]));
            }
            b2p.set(&[o], b2.at(&[perm[o]]));
        }
        ps2.set(se2.fc2.w, w2p);
        ps2.set(se2.fc2.b, b2p);

        let mut xp = Tensor::zeros(&[4, 3, 3]);
        for c in 0..4 {
            for f in 0..3 {
                for t in 0..3 {
                    xp.set(&[c, f, t], x.at(&[perm[c], f, t]));
                }
            }
        }
        let y = se.infer(&ps, &x).unwrap();
        let yp = se2.infer(&ps2, &xp).unwrap();
        for c in 0..4 {
            for f in 0..3 {
                for t in 0..3 {
                    assert!((yp.at(&[c, f, t]) - y.at(&[perm[c], f, t])).abs() < 1e-13);
                }
            }
        }
    }
}
