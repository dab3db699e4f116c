use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{multihead_self_attention, AttentionVars};
use super::gradcheck::{finite_diff_check, finite_diff_check_reduced, Reduction};
use super::tensor::Tensor;
use crate::Result;

/// Step used by the built-in suite.
pub const SUITE_STEP: f32 = 1e-3;
/// Largest relative error the built-in suite accepts.
pub const SUITE_TOLERANCE: f64 = 1e-3;

/// Outcome of one finite-difference case.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub max_relative_error: f64,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.max_relative_error < SUITE_TOLERANCE
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-scale..scale))
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Reduction {
    Reduction::Weighted((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Gradient checks of every differentiable operator the models use, on
/// small random shapes drawn from `seed`.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = SUITE_STEP;
    let mut cases = Vec::new();
    let mut push = |name: String, err: f64| cases.push(SuiteCase { name, max_relative_error: err });

    for stride in [1, 2] {
        let cin = rng.random_range(1..=3);
        let cout = rng.random_range(1..=3);
        let (hh, ww) = (rng.random_range(3..=6), rng.random_range(3..=6));
        let inputs =
            [random(&mut rng, &[1, cin, hh, ww], 1.0), random(&mut rng, &[cout, cin, 3, 3], 0.5), random(&mut rng, &[cout], 0.5)];
        let r = weights(&mut rng, cout * hh.div_ceil(stride) * ww.div_ceil(stride));
        let check = finite_diff_check_reduced(&inputs, h, r, |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride))?;
        push(format!("conv2d 3x3 stride {stride} [1,{cin},{hh},{ww}]"), check.max_relative_error);
    }

    let (rows, din, dout) = (rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(1..=6));
    let inputs = [random(&mut rng, &[rows, din], 1.0), random(&mut rng, &[dout, din], 1.0), random(&mut rng, &[dout], 1.0)];
    let r = weights(&mut rng, rows * dout);
    let check = finite_diff_check_reduced(&inputs, h, r, |t, v| t.linear(v[0], v[1], Some(v[2])))?;
    push(format!("linear [{rows},{din}] -> {dout}"), check.max_relative_error);

    let d = rng.random_range(2..=8);
    let inputs = [random(&mut rng, &[3, d], 2.0), random(&mut rng, &[d], 1.0), random(&mut rng, &[d], 1.0)];
    let r = weights(&mut rng, 3 * d);
    let check = finite_diff_check_reduced(&inputs, h, r, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5))?;
    push(format!("layer_norm [3,{d}]"), check.max_relative_error);

    let d = rng.random_range(2..=8);
    let inputs = [random(&mut rng, &[3, d], 3.0)];
    let r = weights(&mut rng, 3 * d);
    let check = finite_diff_check_reduced(&inputs, h, r, |t, v| t.softmax(v[0]))?;
    push(format!("softmax [3,{d}]"), check.max_relative_error);

    let n = rng.random_range(2..=12);
    let target = Tensor::from_fn([n], |_| if rng.random::<bool>() { 1.0 } else { 0.0 });
    let inputs = [random(&mut rng, &[n], 4.0)];
    let check = finite_diff_check(&inputs, h, |t, v| t.bce_with_logits(v[0], &target))?;
    push(format!("bce_with_logits [{n}]"), check.max_relative_error);

    let (len, dm, heads) = (3, 8, 2);
    let mut inputs = vec![random(&mut rng, &[len, dm], 1.0)];
    for _ in 0..4 {
        inputs.push(random(&mut rng, &[dm, dm], 0.5));
        inputs.push(random(&mut rng, &[dm], 0.2));
    }
    let r = weights(&mut rng, len * dm);
    let check = finite_diff_check_reduced(&inputs, h, r, |t, v| {
        let p = AttentionVars { wq: v[1], bq: v[2], wk: v[3], bk: v[4], wv: v[5], bv: v[6], wo: v[7], bo: v[8] };
        multihead_self_attention(t, v[0], heads, &p)
    })?;
    push(format!("attention L={len} d={dm} heads={heads}"), check.max_relative_error);

    let inputs = [random(&mut rng, &[1, 2, 3, 2], 1.0)];
    let r = weights(&mut rng, 2 * 6 * 4);
    let check = finite_diff_check_reduced(&inputs, h, r, |t, v| t.upsample2x(v[0]))?;
    push("upsample2x [1,2,3,2]".into(), check.max_relative_error);

    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_several_seeds() {
        for seed in 0..3 {
            for case in gradcheck_suite(seed).unwrap() {
                assert!(case.passed(), "{case:?}");
            }
        }
    }
}
