//! Minimal reverse-mode automatic differentiation over `f32` tensors.

mod adam;
mod attention;
mod gradcheck;
mod kernels;
mod params;
mod suite;
mod tape;
mod tensor;

pub use adam::{adam_step, global_norm, AdamState};
pub use attention::{multihead_self_attention, AttentionVars};
pub use gradcheck::{finite_diff_check, finite_diff_check_reduced, max_relative_error, GradCheck, Reduction};
pub use params::{ParamId, ParamSet};
pub use suite::{gradcheck_suite, SuiteCase, SUITE_STEP, SUITE_TOLERANCE};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use kernels::sigmoid;
