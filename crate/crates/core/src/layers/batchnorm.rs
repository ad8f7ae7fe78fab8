//! Batch normalization over the channel axis.
//!
//! Maps are single-sample `[C, ...spatial]`, so train-mode "batch"
//! statistics are per-channel statistics over the sample's own spatial
//! extent. This keeps per-sample forward/backward passes independent (they
//! can run in parallel), at the cost of deviating from cross-batch
//! statistics; running statistics are then updated once per sample, in batch
//! order, so results do not depend on thread count.
//!
//! Variance is the biased (1/N) estimator for both normalization and the
//! running update. Running stats initialize to mean 0 / var 1, so eval mode
//! before any update is well-defined rather than an error.

use crate::error::Error;
use crate::layers::Mode;
use crate::param::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::Result;

/// Deferred running-statistics update produced by a train-mode forward.
/// Applied by the trainer after the batch, in sample order:
/// `running ← (1 − momentum)·running + momentum·batch_stat`.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl BnUpdate {
    pub fn apply(&self, ps: &mut ParamStore) {
        let m = self.momentum;
        let rm = ps.get_mut(self.mean_id).data_mut();
        for (r, &b) in rm.iter_mut().zip(&self.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        let rv = ps.get_mut(self.var_id).data_mut();
        for (r, &b) in rv.iter_mut().zip(&self.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

#[derive(Debug)]
pub struct BnCache {
    pub x: Tensor,
    /// Statistics used for normalization (batch stats in train mode,
    /// running stats in eval mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    name: String,
}

impl BatchNorm {
    pub fn new(ps: &mut ParamStore, name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        BatchNorm {
            gamma: ps.register(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: ps.register(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: ps.register(
                format!("{name}.running_mean"),
                Tensor::zeros(&[channels]),
                false,
            ),
            running_var: ps.register(
                format!("{name}.running_var"),
                Tensor::full(&[channels], 1.0),
                false,
            ),
            channels,
            momentum: 0.1,
            eps: 1e-5,
            name,
        }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        if x.ndim() < 1 || x.shape()[0] != self.channels {
            return Err(Error::dim(format!(
                "{}: expected channel axis of {}, got shape {:?}",
                self.name,
                self.channels,
                x.shape()
            )));
        }
        Ok(x.numel() / self.channels)
    }

    /// Per-channel mean and biased variance over the spatial extent.
    fn batch_stats(&self, x: &Tensor, spatial: usize) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; self.channels];
        let mut var = vec![0.0; self.channels];
        for c in 0..self.channels {
            let slice = &x.data()[c * spatial..(c + 1) * spatial];
            let m = slice.iter().sum::<f64>() / spatial as f64;
            let v = slice.iter().map(|&s| (s - m) * (s - m)).sum::<f64>() / spatial as f64;
            mean[c] = m;
            var[c] = v;
        }
        (mean, var)
    }

    fn normalize(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        spatial: usize,
        mean: &[f64],
        var: &[f64],
    ) -> Tensor {
        let gamma = ps.get(self.gamma).data();
        let beta = ps.get(self.beta).data();
        let mut y = Tensor::zeros(x.shape());
        for c in 0..self.channels {
            let inv = 1.0 / (var[c] + self.eps).sqrt();
            let (g, b, m) = (gamma[c], beta[c], mean[c]);
            let src = &x.data()[c * spatial..(c + 1) * spatial];
            let dst = &mut y.data_mut()[c * spatial..(c + 1) * spatial];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = g * (s - m) * inv + b;
            }
        }
        y
    }

    /// Returns the normalized output, the backward cache, and (train mode
    /// only) the pending running-statistics update.
    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, BnCache, Option<BnUpdate>)> {
        let spatial = self.check(x)?;
        let (mean, var, update) = match mode {
            Mode::Train => {
                let (m, v) = self.batch_stats(x, spatial);
                let update = BnUpdate {
                    mean_id: self.running_mean,
                    var_id: self.running_var,
                    mean: m.clone(),
                    var: v.clone(),
                    momentum: self.momentum,
                };
                (m, v, Some(update))
            }
            Mode::Eval => (
                ps.get(self.running_mean).data().to_vec(),
                ps.get(self.running_var).data().to_vec(),
                None,
            ),
        };
        let y = self.normalize(ps, x, spatial, &mean, &var);
        Ok((
            y,
            BnCache {
                x: x.clone(),
                mean,
                var,
                mode,
            },
            update,
        ))
    }

    pub fn infer(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let spatial = self.check(x)?;
        let mean = ps.get(self.running_mean).data();
        let var = ps.get(self.running_var).data();
        Ok(self.normalize(ps, x, spatial, mean, var))
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &BnCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        let spatial = self.check(&cache.x)?;
        if dy.shape() != cache.x.shape() {
            return Err(Error::dim(format!(
                "{}: upstream grad shape {:?} vs input {:?}",
                self.name,
                dy.shape(),
                cache.x.shape()
            )));
        }
        let gamma = ps.get(self.gamma).data();
        let n = spatial as f64;
        let mut dgamma = vec![0.0; self.channels];
        let mut dbeta = vec![0.0; self.channels];
        let mut dx = Tensor::zeros(cache.x.shape());

        for c in 0..self.channels {
            let xs = &cache.x.data()[c * spatial..(c + 1) * spatial];
            let gys = &dy.data()[c * spatial..(c + 1) * spatial];
            let m = cache.mean[c];
            let inv = 1.0 / (cache.var[c] + self.eps).sqrt();

            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for (&x, &gy) in xs.iter().zip(gys) {
                sum_gy += gy;
                sum_gy_xhat += gy * (x - m) * inv;
            }
            dbeta[c] = sum_gy;
            dgamma[c] = sum_gy_xhat;

            let dxs = &mut dx.data_mut()[c * spatial..(c + 1) * spatial];
            match cache.mode {
                Mode::Train => {
                    // Gradient through the per-sample statistics:
                    // dx = (gamma·inv/N)·(N·gy − sum(gy) − x̂·sum(gy·x̂))
                    let g = gamma[c];
                    for ((d, &x), &gy) in dxs.iter_mut().zip(xs).zip(gys) {
                        let xhat = (x - m) * inv;
                        *d = g * inv / n * (n * gy - sum_gy - xhat * sum_gy_xhat);
                    }
                }
                Mode::Eval => {
                    // Running stats are constants in eval mode.
                    let scale = gamma[c] * inv;
                    for (d, &gy) in dxs.iter_mut().zip(gys) {
                        *d = scale * gy;
                    }
                }
            }
        }
        grads.accumulate(self.gamma, &Tensor::from_vec(&[self.channels], dgamma)?);
        grads.accumulate(self.beta, &Tensor::from_vec(&[self.channels], dbeta)?);
        Ok(dx)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        (ps.get(self.gamma).numel() + ps.get(self.beta).numel()) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn bn_with_store(c: usize) -> (ParamStore, BatchNorm) {
        let mut ps = ParamStore::new();
        let bn = BatchNorm::new(&mut ps, "bn", c);
        (ps, bn)
    }

    #[test]
    fn constant_input_train_mode_gives_beta() {
        let (mut ps, bn) = bn_with_store(2);
        ps.set(bn.beta, Tensor::from_vec(&[2], vec![0.7, -0.3]).unwrap());
        let x = Tensor::full(&[2, 3, 4], 5.0);
        let (y, _, _) = bn.forward(&ps, &x, Mode::Train).unwrap();
        for c in 0..2 {
            let expect = ps.get(bn.beta).data()[c];
            for f in 0..3 {
                for t in 0..4 {
                    assert!((y.at(&[c, f, t]) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn train_mode_normalizes() {
        let (ps, bn) = bn_with_store(3);
        let mut rng = Rng::new(2);
        let x = rng.uniform_tensor(&[3, 5, 7], -2.0, 3.0);
        let (y, _, _) = bn.forward(&ps, &x, Mode::Train).unwrap();
        let spatial = 35;
        for c in 0..3 {
            let s = &y.data()[c * spatial..(c + 1) * spatial];
            let mean = s.iter().sum::<f64>() / spatial as f64;
            let var = s.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / spatial as f64;
            assert!(mean.abs() < 1e-10, "channel {c} mean {mean}");
            // variance is 1 up to the eps effect
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn eval_mode_matches_hand_formula() {
        let (mut ps, bn) = bn_with_store(2);
        let mut rng = Rng::new(4);
        ps.set(bn.running_mean, Tensor::from_vec(&[2], vec![0.4, -1.2]).unwrap());
        ps.set(bn.running_var, Tensor::from_vec(&[2], vec![2.0, 0.5]).unwrap());
        ps.set(bn.gamma, Tensor::from_vec(&[2], vec![1.5, 0.8]).unwrap());
        ps.set(bn.beta, Tensor::from_vec(&[2], vec![-0.1, 0.6]).unwrap());
        let x = rng.uniform_tensor(&[2, 3, 3], -1.0, 1.0);
        let y = bn.infer(&ps, &x).unwrap();
        for c in 0..2 {
            let rm = ps.get(bn.running_mean).data()[c];
            let rv = ps.get(bn.running_var).data()[c];
            let g = ps.get(bn.gamma).data()[c];
            let b = ps.get(bn.beta).data()[c];
            for f in 0..3 {
                for t in 0..3 {
                    let expect = g * (x.at(&[c, f, t]) - rm) / (rv + bn.eps).sqrt() + b;
                    assert!((y.at(&[c, f, t]) - expect).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn running_update_rule() {
        let (mut ps, bn) = bn_with_store(1);
        let x = Tensor::from_vec(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, _, update) = bn.forward(&ps, &x, Mode::Train).unwrap();
        update.unwrap().apply(&mut ps);
        // batch mean 2.5, biased var 1.25; momentum 0.1 from (0, 1)
        assert!((ps.get(bn.running_mean).data()[0] - 0.25).abs() < 1e-12);
        assert!((ps.get(bn.running_var).data()[0] - (0.9 + 0.125)).abs() < 1e-12);
        assert!(ps.get(bn.running_var).data()[0] > 0.0);
    }
}
