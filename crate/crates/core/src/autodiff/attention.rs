use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Projection weights for one multi-head self-attention block. Weights are
/// `[d_model, d_model]`, biases `[d_model]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Unmasked scaled dot-product self-attention over `[.., L, d_model]`.
pub fn multihead_self_attention(tape: &mut Tape, seq: Var, heads: usize, p: &AttentionVars) -> Result<Var> {
    let shape = tape.shape(seq).to_vec();
    if shape.len() < 2 {
        return Err(Error::shape(format!("attention input {shape:?} needs rank >= 2")));
    }
    let r = shape.len();
    let (len, d) = (shape[r - 2], shape[r - 1]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(format!("d_model {d} is not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let batch: usize = shape[..r - 2].iter().product();

    let split = |tape: &mut Tape, w: Var, b: Var| -> Result<Var> {
        let proj = tape.linear(seq, w, Some(b))?;
        let proj = tape.reshape(proj, [batch, len, heads, dh])?;
        tape.permute(proj, &[0, 2, 1, 3])
    };
    let q = split(tape, p.wq, p.bq)?;
    let k = split(tape, p.wk, p.bk)?;
    let v = split(tape, p.wv, p.bv)?;

    let scores = tape.bmm(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (dh as f32).sqrt());
    let weights = tape.softmax(scores)?;
    let ctx = tape.bmm(weights, v, false)?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, shape)?;
    tape.linear(ctx, p.wo, Some(p.bo))
}
