use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::autodiff::ParamStore;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-6 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainingError::InvalidConfig(format!("bad Adam settings {self:?}")))
        }
    }
}

/// Moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

/// One bias-corrected Adam update:
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainingError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(TrainingError::Shape("optimizer state does not match parameters".into()));
    }
    if let Some(b) = grads.blocks().position(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(TrainingError::NonFiniteGradient { block: ParamStore::block_name(b) });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let blocks = params.blocks_mut().zip(grads.blocks()).zip(state.m.blocks_mut().zip(state.v.blocks_mut()));
    for ((p, g), (m, v)) in blocks {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Layer;

    fn store() -> ParamStore {
        let mut l = Layer::zeros(3, 2);
        l.weight = vec![0.5, -0.25, 1.0, 2.0, 0.0, -1.0];
        l.bias = vec![0.1, -0.1];
        ParamStore::new(vec![l, Layer::zeros(2, 1)])
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut p = store();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        g.fill(1.0);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert_eq!(s.t, 1);
        let step = 1e-3 / (1.0 + 1e-6);
        for (a, b) in p.to_flat().iter().zip(&before) {
            assert!((b - a - step).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = store();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = store();
        let mut s = AdamState::new(&p);
        s.m.fill(0.5);
        s.v.fill(0.25);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, &AdamConfig::default()).unwrap();
        assert!(s.m.to_flat().iter().all(|&m| (m - 0.45).abs() < 1e-15));
        assert!(s.v.to_flat().iter().all(|&v| (v - 0.25 * 0.999).abs() < 1e-15));
    }

    #[test]
    fn descends_against_the_gradient() {
        let mut p = store();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        for i in 0..g.parameter_count() {
            g.set(i, if i % 3 == 0 { -2.0 } else { 0.7 * i as f64 + 0.1 });
        }
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        for (i, (a, b)) in p.to_flat().iter().zip(&before).enumerate() {
            assert!((a - b) * g.get(i) < 0.0);
        }
    }

    #[test]
    fn reports_the_offending_block() {
        let mut p = store();
        let mut g = p.zeros_like();
        g.layers[1].bias[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        let before = p.clone();
        let err = adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap_err();
        assert_eq!(err, TrainingError::NonFiniteGradient { block: "layer 1 bias".into() });
        assert_eq!(p, before);
        assert_eq!(s.t, 0);
    }
}
