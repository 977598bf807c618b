use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected Adam update. The state is left untouched on error.
pub fn adam_step(
    params: &[Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::config(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    let step = state.step + 1;
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let (p, g) = (params[i].data(), grads[i].data());
        let (m0, v0) = (state.m[i].data(), state.v[i].data());
        let mut m = Vec::with_capacity(p.len());
        let mut v = Vec::with_capacity(p.len());
        let mut next = Vec::with_capacity(p.len());
        for j in 0..p.len() {
            let mj = cfg.beta1 * m0[j] + (1.0 - cfg.beta1) * g[j];
            let vj = cfg.beta2 * v0[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            next.push(p[j] - cfg.lr * (mj / bc1) / ((vj / bc2).sqrt() + cfg.eps));
            m.push(mj);
            v.push(vj);
        }
        let shape = params[i].shape().to_vec();
        state.m[i] = Tensor::new(shape.clone(), m)?;
        state.v[i] = Tensor::new(shape.clone(), v)?;
        out.push(Tensor::new(shape, next)?);
    }
    state.step = step;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p = vec![Tensor::vector(vec![1.0, -2.0]).unwrap()];
        let g = vec![Tensor::zeros(&[2]).unwrap()];
        let mut st = AdamState::new(&p);
        let out = adam_step(&p, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = vec![Tensor::scalar(0.5)];
        let g = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        let out = adam_step(&p, &g, &mut st, &cfg).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        let expect = 0.5 - cfg.lr / (1.0 + cfg.eps);
        assert!((out[0].data()[0] - expect).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn non_finite_gradient_aborts_without_touching_state() {
        let p = vec![Tensor::scalar(0.5)];
        let mut st = AdamState::new(&p);
        let before = st.clone();
        let g = vec![Tensor::scalar(f64::NAN)];
        assert!(matches!(
            adam_step(&p, &g, &mut st, &AdamConfig::default()),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(st, before);
    }

    #[test]
    fn repeated_runs_share_a_trajectory() {
        let run = || {
            let mut p = vec![Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap()];
            let mut st = AdamState::new(&p);
            for k in 0..20 {
                let g = vec![p[0].map(|x| x * x - k as f64 * 0.1)];
                p = adam_step(&p, &g, &mut st, &AdamConfig::default()).unwrap();
            }
            p[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
