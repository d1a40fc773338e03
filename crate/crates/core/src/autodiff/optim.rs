use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

/// Clips the global gradient norm, applies one Adam step and clears the gradients.
pub fn adam_update(store: &mut ParamStore, cfg: &AdamConfig) -> Result<UpdateStats, AutodiffError> {
    if let Some(p) = store.params().iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(AutodiffError::NonFiniteGradient(p.name.clone()));
    }
    let grad_norm = store.grad_norm();
    let factor = if cfg.clip > 0.0 && grad_norm > cfg.clip { cfg.clip / grad_norm } else { 1.0 };
    store.step += 1;
    let t = store.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for p in store.params_mut() {
        for k in 0..p.value.len() {
            let g = p.grad[k] * factor;
            p.m[k] = cfg.beta1 * p.m[k] + (1.0 - cfg.beta1) * g;
            p.v[k] = cfg.beta2 * p.v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = p.m[k] / bias1;
            let v_hat = p.v[k] / bias2;
            p.value[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            p.grad[k] = 0.0;
        }
    }
    Ok(UpdateStats { grad_norm, clipped_norm: grad_norm * factor })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = values.len();
        s.add("w", n, 1, values).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = store(vec![0.5, -1.5]);
        adam_update(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.params()[0].value, vec![0.5, -1.5]);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut s = store(vec![0.0, 0.0]);
        for _ in 0..50 {
            s.params_mut()[0].grad = vec![0.3, -2.0];
            adam_update(&mut s, &AdamConfig::default()).unwrap();
        }
        let w = &s.params()[0].value;
        assert!(w[0] < 0.0 && w[1] > 0.0);
    }

    #[test]
    fn clipping_rescales_to_clip_norm() {
        let mut s = store(vec![0.0, 0.0]);
        s.params_mut()[0].grad = vec![6.0, 8.0];
        let stats = adam_update(&mut s, &AdamConfig { clip: 1.0, ..Default::default() }).unwrap();
        assert!((stats.grad_norm - 10.0).abs() < 1e-12);
        assert!((stats.clipped_norm - 1.0).abs() < 1e-12);
        // first moment after one step is (1 - beta1) * clipped gradient
        let m = &s.params()[0].m;
        assert!((m[0] - 0.1 * 0.6).abs() < 1e-12 && (m[1] - 0.1 * 0.8).abs() < 1e-12);
        assert!(s.params()[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = store(vec![0.0]);
        s.params_mut()[0].grad = vec![f64::NAN];
        assert!(matches!(adam_update(&mut s, &AdamConfig::default()), Err(AutodiffError::NonFiniteGradient(_))));
    }
}
