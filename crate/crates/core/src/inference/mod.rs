//! Greedy stepwise decoding that feeds the model its own binarized output.

use std::fs;
use std::path::Path;

use crate::corpus::TrainingStep;
use crate::model::{Model, ModelKind};
use crate::raster::{binarize, export_image, BinaryImage, FrameSpec, PixelProbMap, THRESHOLD};
use crate::trainer::items_nll;
use crate::{Error, Result};

/// Anything that maps (source, partial target) to a white-probability map.
pub trait PixelModel {
    fn frame(&self) -> &FrameSpec;

    fn predict(&self, source: &BinaryImage, partial: &BinaryImage) -> Result<PixelProbMap>;

    /// Whether the prediction depends on the partial target.
    fn is_stepwise(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "model".into()
    }

    /// Teacher-forced mean pixel NLL in nats. The default works from
    /// probabilities clamped away from 0 and 1.
    fn pixel_nll(&self, items: &[&TrainingStep]) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (mut total, mut count) = (0.0f64, 0usize);
        for item in items {
            let probs = self.predict(&item.source_image, &item.partial_input)?;
            for (&p, &y) in probs.values().iter().zip(item.target.pixels()) {
                let p = (p as f64).clamp(1e-12, 1.0 - 1e-12);
                total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
            }
            count += probs.values().len();
        }
        Ok(total / count as f64)
    }
}

impl PixelModel for Model {
    fn frame(&self) -> &FrameSpec {
        &self.config().frame
    }

    fn predict(&self, source: &BinaryImage, partial: &BinaryImage) -> Result<PixelProbMap> {
        Model::predict(self, source, partial)
    }

    fn is_stepwise(&self) -> bool {
        self.kind() == ModelKind::Full
    }

    fn name(&self) -> String {
        self.kind().to_string()
    }

    fn pixel_nll(&self, items: &[&TrainingStep]) -> Result<f64> {
        items_nll(self, items, 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// The output reproduced its own input.
    FixedPoint,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub step: usize,
    pub probs: PixelProbMap,
    pub image: BinaryImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub steps: Vec<DecodeStep>,
    pub reason: TerminationReason,
}

impl DecodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_image(&self) -> &BinaryImage {
        &self.steps.last().expect("trace has at least one step").image
    }

    /// Writes `step_<n>_bin.pgm` and `step_<n>_prob.pgm` for every step.
    pub fn dump(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.steps {
            export_image(&s.image, dir.join(format!("step_{}_bin.pgm", s.step)))?;
            export_image(&s.probs, dir.join(format!("step_{}_prob.pgm", s.step)))?;
        }
        Ok(())
    }
}

/// One glyph per step plus one step to confirm the fixed point.
pub fn default_max_steps(frame: &FrameSpec) -> usize {
    frame.width / frame.glyph_width + 1
}

pub fn decode_step(
    model: &impl PixelModel,
    source: &BinaryImage,
    partial: &BinaryImage,
) -> Result<(PixelProbMap, BinaryImage)> {
    let probs = model.predict(source, partial)?;
    let image = binarize(&probs, THRESHOLD);
    Ok((probs, image))
}

/// Greedy decoding from an all-white partial image until the output stops
/// changing or `max_steps` is reached.
pub fn translate(model: &impl PixelModel, source: &BinaryImage, max_steps: usize) -> Result<DecodeTrace> {
    if max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    let f = model.frame();
    if source.width() != f.width || source.height() != f.height {
        return Err(Error::shape(format!(
            "source is {}x{}, frame is {}x{}",
            source.width(),
            source.height(),
            f.width,
            f.height
        )));
    }
    let mut partial = BinaryImage::blank(f.height, f.width);
    let mut steps = Vec::new();
    for step in 1..=max_steps {
        let (probs, image) = decode_step(model, source, &partial)?;
        let fixed = image == partial;
        steps.push(DecodeStep { step, probs, image: image.clone() });
        if fixed {
            return Ok(DecodeTrace { steps, reason: TerminationReason::FixedPoint });
        }
        partial = image;
    }
    Ok(DecodeTrace { steps, reason: TerminationReason::MaxSteps })
}

/// Final output image: a single pass for models that ignore the partial
/// target, greedy stepwise decoding otherwise.
pub fn generate(model: &impl PixelModel, source: &BinaryImage, max_steps: usize) -> Result<BinaryImage> {
    if model.is_stepwise() {
        Ok(translate(model, source, max_steps)?.final_image().clone())
    } else {
        let blank = BinaryImage::blank(source.height(), source.width());
        Ok(decode_step(model, source, &blank)?.1)
    }
}
