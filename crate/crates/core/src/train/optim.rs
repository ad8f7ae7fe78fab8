//! Adam with coupled L2 weight decay.
//!
//! Weight decay enters the raw gradient (`g' = g + wd·θ`) before the moment
//! updates — the classic coupled formulation, not the decoupled variant.
//! Moments live in registration order next to the parameter store, so a
//! given (gradient, parameter, state) triple always produces the same
//! update regardless of how the gradient was assembled.

use crate::error::Error;
use crate::param::{Grads, ParamStore};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: f64| {
            Err(Error::config(format!("adam {field} = {v} out of range")))
        };
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr", self.lr);
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", self.beta1);
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", self.beta2);
        }
        if !(self.eps > 0.0) {
            return bad("eps", self.eps);
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", self.weight_decay);
        }
        Ok(())
    }
}

/// First/second moment estimates for every trainable parameter, in
/// parameter-store registration order.
#[derive(Debug, Clone)]
pub struct OptimState {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl OptimState {
    pub fn new(ps: &ParamStore, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        let m: Vec<Tensor> = ps
            .iter()
            .map(|(_, e)| Tensor::zeros(e.value.shape()))
            .collect();
        let v = m.clone();
        Ok(OptimState { cfg, m, v, t: 0 })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Number of completed steps.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One Adam update over every trainable parameter. If any gradient
    /// contains a non-finite value the step is aborted before touching any
    /// parameter or moment.
    pub fn step(&mut self, ps: &mut ParamStore, grads: &Grads) -> Result<()> {
        let ids = ps.ids();
        // validate first: an aborted step must leave everything untouched
        for &id in &ids {
            if !ps.entry(id).trainable {
                continue;
            }
            let g = grads.get(id);
            if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite gradient {bad} for parameter {:?}; step aborted",
                    ps.entry(id).name
                )));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c = &self.cfg;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (i, &id) in ids.iter().enumerate() {
            if !ps.entry(id).trainable {
                continue;
            }
            let g = grads.get(id).data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let theta = ps.get_mut(id).data_mut();
            for k in 0..theta.len() {
                let gp = g[k] + c.weight_decay * theta[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gp;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gp * gp;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                theta[k] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param_store(theta: f64) -> (ParamStore, crate::param::ParamId) {
        let mut ps = ParamStore::new();
        let id = ps.register("theta", Tensor::from_vec(&[1], vec![theta]).unwrap(), true);
        (ps, id)
    }

    fn grads_for(ps: &ParamStore, id: crate::param::ParamId, g: f64) -> Grads {
        let mut grads = Grads::zeros_like(ps);
        grads.accumulate(id, &Tensor::from_vec(&[1], vec![g]).unwrap());
        grads
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_params_unchanged() {
        let (mut ps, id) = single_param_store(0.37);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = OptimState::new(&ps, cfg).unwrap();
        let grads = Grads::zeros_like(&ps);
        for _ in 0..3 {
            st.step(&mut ps, &grads).unwrap();
        }
        assert_eq!(ps.get(id).data()[0].to_bits(), (0.37f64).to_bits());
    }

    #[test]
    fn first_step_moves_by_almost_exactly_lr() {
        // θ=0, g=1, lr=0.1, t=1: m̂ = v̂ = 1 → θ ← −lr·1/(1+eps) ≈ −0.1
        let (mut ps, id) = single_param_store(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = OptimState::new(&ps, cfg).unwrap();
        let grads = grads_for(&ps, id, 1.0);
        st.step(&mut ps, &grads).unwrap();
        let theta = ps.get(id).data()[0];
        assert!((theta + 0.1).abs() < 1e-8, "{theta}");
        assert_eq!(st.t(), 1);
    }

    #[test]
    fn weight_decay_alone_acts_like_unit_gradient() {
        // g=0, wd=0.1, θ=1: g'=0.1 → m̂=0.1, v̂=0.01 → Δθ = −lr·0.1/(0.1+eps) ≈ −lr
        let (mut ps, id) = single_param_store(1.0);
        let lr = 0.01;
        let cfg = AdamConfig {
            lr,
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut st = OptimState::new(&ps, cfg).unwrap();
        let grads = Grads::zeros_like(&ps);
        st.step(&mut ps, &grads).unwrap();
        let delta = ps.get(id).data()[0] - 1.0;
        assert!((delta + lr).abs() < 1e-6 * lr, "Δθ = {delta}");
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let (mut ps, id) = single_param_store(0.5);
        let mut st = OptimState::new(&ps, AdamConfig::default()).unwrap();
        // run one good step so the moments are nonzero
        let warm = grads_for(&ps, id, 0.3);
        st.step(&mut ps, &warm).unwrap();
        let theta_before = ps.get(id).data()[0];
        let m_before = st.m.clone();
        let t_before = st.t();
        let mut bad = Grads::zeros_like(&ps);
        bad.accumulate_at(id, 0, f64::NAN);
        let err = st.step(&mut ps, &bad).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(ps.get(id).data()[0].to_bits(), theta_before.to_bits());
        assert_eq!(st.t(), t_before);
        for (a, b) in st.m.iter().zip(&m_before) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn update_depends_only_on_gradient_parameter_and_state() {
        let (mut ps_a, id_a) = single_param_store(0.2);
        let (mut ps_b, id_b) = single_param_store(0.2);
        let mut st_a = OptimState::new(&ps_a, AdamConfig::default()).unwrap();
        let mut st_b = OptimState::new(&ps_b, AdamConfig::default()).unwrap();
        // same totals assembled differently: one shot vs two merges
        let grads_a = grads_for(&ps_a, id_a, 0.6);
        let mut grads_b = Grads::zeros_like(&ps_b);
        grads_b.accumulate(id_b, &Tensor::from_vec(&[1], vec![0.25]).unwrap());
        grads_b.accumulate(id_b, &Tensor::from_vec(&[1], vec![0.35]).unwrap());
        st_a.step(&mut ps_a, &grads_a).unwrap();
        st_b.step(&mut ps_b, &grads_b).unwrap();
        assert_eq!(
            ps_a.get(id_a).data()[0].to_bits(),
            ps_b.get(id_b).data()[0].to_bits()
        );
    }

    #[test]
    fn non_trainable_entries_are_never_touched() {
        let mut ps = ParamStore::new();
        let w = ps.register("w", Tensor::from_vec(&[1], vec![1.0]).unwrap(), true);
        let stat = ps.register("running", Tensor::from_vec(&[1], vec![5.0]).unwrap(), false);
        let mut st = OptimState::new(&ps, AdamConfig::default()).unwrap();
        let grads = grads_for(&ps, w, 1.0);
        st.step(&mut ps, &grads).unwrap();
        assert_eq!(ps.get(stat).data()[0], 5.0);
        assert_ne!(ps.get(w).data()[0], 1.0);
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let (mut ps, id) = single_param_store(0.0);
        let mut st = OptimState::new(&ps, AdamConfig::default()).unwrap();
        for k in 0..10 {
            let g = if k % 2 == 0 { 1.5 } else { -2.5 };
            let grads = grads_for(&ps, id, g);
            st.step(&mut ps, &grads).unwrap();
            assert!(st.v.iter().all(|t| t.data().iter().all(|&x| x >= 0.0)));
        }
    }

    #[test]
    fn invalid_hyperparameters_are_config_errors() {
        let ps = ParamStore::new();
        for cfg in [
            AdamConfig { lr: -1.0, ..AdamConfig::default() },
            AdamConfig { beta1: 1.0, ..AdamConfig::default() },
            AdamConfig { beta2: -0.1, ..AdamConfig::default() },
            AdamConfig { eps: 0.0, ..AdamConfig::default() },
            AdamConfig { weight_decay: f64::NAN, ..AdamConfig::default() },
        ] {
            assert!(matches!(
                OptimState::new(&ps, cfg),
                Err(Error::Config(_))
            ));
        }
    }
}
