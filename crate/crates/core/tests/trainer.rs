use pixmt::corpus::{toy_corpus, Dataset, PieceMode};
use pixmt::model::{Model, ModelConfig, ModelKind};
use pixmt::raster::{FrameSpec, GlyphAtlas};
use pixmt::trainer::{
    curve_csv, dataset_nll, load_checkpoint, save_checkpoint, train, Checkpoint, Split, TrainConfig,
};

fn dataset(n: usize, seed: u64) -> Dataset {
    Dataset::build(toy_corpus(n, seed), FrameSpec::desk(), &GlyphAtlas::builtin(), PieceMode::Word).unwrap()
}

fn fresh(kind: ModelKind, config: &TrainConfig) -> Checkpoint {
    Checkpoint::fresh(Model::new(ModelConfig::desk(kind), 7).unwrap(), config.lr, config.clip_norm)
}

#[test]
fn single_pair_loss_trends_down() {
    let data = dataset(1, 0);
    let config = TrainConfig { epochs: 50, ..Default::default() };
    let run = train(&config, fresh(ModelKind::Full, &config), &data, None).unwrap();
    let losses = &run.step_losses;
    assert_eq!(losses.len(), 50);
    assert!((losses[0] as f64 - std::f64::consts::LN_2).abs() < 1e-6);
    let smoothed: Vec<f32> = losses.windows(5).map(|w| w.iter().sum::<f32>() / 5.0).collect();
    for (i, pair) in smoothed.windows(2).enumerate() {
        assert!(pair[1] < pair[0], "smoothed loss rose at step {}: {:?}", i + 5, pair);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let data = dataset(2, 1);
    let config = TrainConfig { epochs: 1, lr: 0.0, ..Default::default() };
    let start = fresh(ModelKind::Full, &config);
    let before = start.model.params().clone();
    let run = train(&config, start, &data, None).unwrap();
    assert_eq!(run.checkpoint.model.params(), &before);
    assert_eq!(run.checkpoint.step, 2);
}

#[test]
fn same_seed_same_run() {
    let data = dataset(3, 2);
    let dev = dataset(1, 3);
    let config = TrainConfig { epochs: 2, batch_size: 4, seed: 11, ..Default::default() };
    let a = train(&config, fresh(ModelKind::Full, &config), &data, Some(&dev)).unwrap();
    let b = train(&config, fresh(ModelKind::Full, &config), &data, Some(&dev)).unwrap();
    assert_eq!(curve_csv(&a.curve), curve_csv(&b.curve));
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());

    let other = TrainConfig { seed: 12, ..config };
    let c = train(&other, fresh(ModelKind::Full, &other), &data, Some(&dev)).unwrap();
    assert_ne!(a.step_losses, c.step_losses);
}

#[test]
fn curve_has_train_and_dev_rows() {
    let data = dataset(2, 4);
    let dev = dataset(1, 5);
    let config = TrainConfig { epochs: 3, eval_every: 2, ..Default::default() };
    let run = train(&config, fresh(ModelKind::Baseline, &config), &data, Some(&dev)).unwrap();
    let dev_epochs: Vec<usize> = run.curve.iter().filter(|p| p.split == Split::Dev).map(|p| p.epoch).collect();
    let train_epochs: Vec<usize> = run.curve.iter().filter(|p| p.split == Split::Train).map(|p| p.epoch).collect();
    assert_eq!(train_epochs, [1, 2, 3]);
    assert_eq!(dev_epochs, [2, 3]);
    // the baseline sees one terminal step per pair
    assert_eq!(run.checkpoint.step, 3);
    let last_dev = run.curve.iter().rev().find(|p| p.split == Split::Dev).unwrap();
    let direct = dataset_nll(&run.checkpoint.model, &dev, 8).unwrap();
    assert!((last_dev.nll - direct).abs() < 1e-9);
}

#[test]
fn resuming_from_disk_matches_an_uninterrupted_run() {
    let data = dataset(2, 6);
    let config = TrainConfig { epochs: 1, batch_size: 4, ..Default::default() };
    let once = train(&config, fresh(ModelKind::Full, &config), &data, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&once.checkpoint, &path).unwrap();
    let resumed = train(&config, load_checkpoint(&path).unwrap(), &data, None).unwrap();
    let straight = train(&config, once.checkpoint, &data, None).unwrap();
    assert_eq!(resumed.checkpoint.to_bytes(), straight.checkpoint.to_bytes());
}
