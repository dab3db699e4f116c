use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam with optional global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Gradients are rescaled so their joint L2 norm is at most this.
    pub clip_norm: Option<f32>,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Zero moments shaped like `params`; lr 1e-3, betas (0.9, 0.999),
    /// epsilon 1e-8, clipping at norm 1.0.
    pub fn new(params: &ParamSet) -> Self {
        Self::with_lr(params, 1e-3)
    }

    pub fn with_lr(params: &ParamSet, lr: f32) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(1.0),
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }
}

/// Joint L2 norm of a gradient list, accumulated in `f64`.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt()
}

/// Applies one Adam update in place. Returns the gradient norm measured
/// before clipping.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState) -> Result<f64> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for ((p, g), m) in params.tensors().iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(format!(
                "parameter {:?} with gradient {:?} and moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }

    let norm = global_norm(grads);
    let clip = match state.clip_norm {
        Some(max) if norm > max as f64 => max as f64 / norm,
        _ => 1.0,
    };

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1 as f64, state.beta2 as f64);
    let (lr, eps) = (state.lr as f64, state.epsilon as f64);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gr = gv as f64 * clip;
            let m_new = b1 * *mv as f64 + (1.0 - b1) * gr;
            let v_new = b2 * *vv as f64 + (1.0 - b2) * gr * gr;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
            *pv = (*pv as f64 - update) as f32;
        }
    }
    Ok(norm)
}
