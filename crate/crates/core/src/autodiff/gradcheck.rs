//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// How a non-scalar output is folded into the scalar being differentiated.
#[derive(Debug, Clone)]
pub enum Reduction {
    Sum,
    Weighted(Vec<f32>),
}

/// Analytic and numeric gradients for every input of a checked function.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    pub max_relative_error: f64,
}

/// Worst `|a - n| / max(1, |a|, |n|)` over all coordinates.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| {
            let (a, n) = (a as f64, n as f64);
            (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
        })
        .fold(0.0, f64::max)
}

fn reduce_value(out: &Tensor, reduction: &Reduction) -> f64 {
    match reduction {
        Reduction::Sum => out.data().iter().map(|&v| v as f64).sum(),
        Reduction::Weighted(w) => out.data().iter().zip(w).map(|(&v, &w)| v as f64 * w as f64).sum(),
    }
}

/// Checks `f` against central differences with step `h`, summing the
/// output when it is not already a scalar.
pub fn finite_diff_check<F>(inputs: &[Tensor], h: f32, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    finite_diff_check_reduced(inputs, h, Reduction::Sum, f)
}

pub fn finite_diff_check_reduced<F>(inputs: &[Tensor], h: f32, reduction: Reduction, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let loss = if tape.value(out).numel() == 1 {
        out
    } else {
        match &reduction {
            Reduction::Sum => tape.sum(out),
            Reduction::Weighted(w) => tape.weighted_sum(out, w.clone())?,
        }
    };
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.tensor(&tape, v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::no_grad();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(reduce_value(t.value(o), &reduction))
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let mut num = vec![0.0f32; input.numel()];
        for (j, slot) in num.iter_mut().enumerate() {
            let x0 = input.data()[j];
            let (xp, xm) = (x0 + h, x0 - h);
            work[i].data_mut()[j] = xp;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = xm;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = x0;
            *slot = ((fp - fm) / (xp as f64 - xm as f64)) as f32;
        }
        numeric.push(Tensor::new(input.shape().to_vec(), num)?);
    }

    let max_relative_error = max_relative_error(&analytic, &numeric);
    Ok(GradCheck {
        analytic,
        numeric,
        max_relative_error,
    })
}
