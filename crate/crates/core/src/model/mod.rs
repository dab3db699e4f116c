//! The convolutional baseline and the full encoder–attention–decoder model.

mod config;
mod network;

pub use config::{BlockPlan, ConvRow, ModelConfig, ModelKind, Preset, DESK_ROWS, PAPER_ROWS};
pub use network::{logits_to_probs, Branch, Model};
