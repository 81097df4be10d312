use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use super::{shape_err, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    if state.m.names() != params.names() || grads.names() != params.names() {
        return Err(shape_err(
            "adam state",
            format!("{} named parameters", params.len()),
            format!("{} / {}", state.m.len(), grads.len()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for (((name, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments)
    {
        if p.dim() != g.dim() || p.dim() != m.dim() {
            return Err(shape_err(format!("adam {name}"), format!("{:?}", p.dim()), format!("{:?}", g.dim())));
        }
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_param(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("x", array![[v, -v]]);
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(0.7);
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_steps_by_lr_sign() {
        let mut p = one_param(0.0);
        let mut g = p.zeros_like();
        g.insert("x", array![[3.0, -0.02]]);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        let mut prev = p.get("x").unwrap().clone();
        for _ in 0..200 {
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            let cur = p.get("x").unwrap().clone();
            let step = &cur - &prev;
            assert!((step[[0, 0]] + cfg.lr).abs() < 1e-6);
            assert!((step[[0, 1]] - cfg.lr).abs() < 1e-6);
            prev = cur;
        }
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let run = || {
            let mut p = one_param(0.3);
            let mut s = AdamState::new(&p);
            for k in 0..20 {
                let mut g = p.zeros_like();
                g.insert("x", array![[(k as f64).sin(), (k as f64 * 0.7).cos()]]);
                adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }
}
