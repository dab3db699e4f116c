//! Teacher-forced training, pixel loss and checkpoints.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MAGIC};
pub use train::{
    curve_csv, dataset_nll, items_nll, pixel_loss, target_tensor, train, training_items, CurvePoint, Split, TrainConfig,
    TrainRun,
};
