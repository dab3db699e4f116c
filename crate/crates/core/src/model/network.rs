use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, ModelKind};
use crate::autodiff::{multihead_self_attention, sigmoid, AttentionVars, ParamSet, Tape, Tensor, Var};
use crate::raster::{BinaryImage, PixelProbMap};
use crate::{Error, Result};

const LN_EPS: f32 = 1e-5;
const EMBED_STD: f32 = 0.02;

/// Which of the two input encoders a feature map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Source,
    Target,
}

impl Branch {
    fn tag(self) -> &'static str {
        match self {
            Branch::Source => "src",
            Branch::Target => "tgt",
        }
    }
}

/// Model parameters together with the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
}

enum Init {
    Conv,
    Linear,
    Embed,
    Zero,
    One,
}

struct Builder<'a> {
    params: ParamSet,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) {
        let numel: usize = shape.iter().product();
        let data = match (&mut self.rng, init) {
            (_, Init::Zero) => vec![0.0; numel],
            (_, Init::One) => vec![1.0; numel],
            (None, _) => vec![0.0; numel],
            (Some(rng), Init::Conv) => {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f32).sqrt()).unwrap();
                (0..numel).map(|_| normal.sample(&mut **rng)).collect()
            }
            (Some(rng), Init::Linear) => {
                let limit = (6.0 / (shape[0] + shape[1]) as f32).sqrt();
                (0..numel).map(|_| rng.random_range(-limit..limit)).collect()
            }
            (Some(rng), Init::Embed) => {
                let normal = Normal::new(0.0, EMBED_STD).unwrap();
                (0..numel).map(|_| normal.sample(&mut **rng)).collect()
            }
        };
        self.params.add(name, Tensor::new(shape, data).expect("init shape"));
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, weight: Init) {
        self.add(format!("{name}.w"), vec![cout, cin, k, k], weight);
        self.add(format!("{name}.b"), vec![cout], Init::Zero);
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) {
        self.add(format!("{name}.w"), vec![dout, din], Init::Linear);
        self.add(format!("{name}.b"), vec![dout], Init::Zero);
    }

    fn norm(&mut self, name: &str, d: usize) {
        self.add(format!("{name}.g"), vec![d], Init::One);
        self.add(format!("{name}.b"), vec![d], Init::Zero);
    }
}

fn build(config: &ModelConfig, rng: Option<&mut ChaCha8Rng>) -> ParamSet {
    let mut b = Builder { params: ParamSet::new(), rng };
    let blocks = config.blocks();
    let (c, h, w) = config.latent_shape();

    let branches: &[Branch] = match config.kind {
        ModelKind::Baseline => &[Branch::Source],
        ModelKind::Full => &[Branch::Source, Branch::Target],
    };
    for branch in branches {
        for (i, p) in blocks.iter().enumerate() {
            let name = format!("{}_enc.b{i}", branch.tag());
            b.conv(&format!("{name}.conv1"), p.in_ch, p.mid_ch, p.kernel, Init::Conv);
            b.conv(&format!("{name}.conv2"), p.mid_ch, p.out_ch, p.kernel, Init::Conv);
            b.conv(&format!("{name}.proj"), p.in_ch, p.out_ch, 1, Init::Conv);
        }
    }

    match config.kind {
        ModelKind::Baseline => b.linear("latent", c, c * h * w),
        ModelKind::Full => {
            let d = config.d_model;
            for branch in branches {
                b.linear(&format!("{}_seq", branch.tag()), c * h, d);
            }
            b.add("pos".into(), vec![w, d], Init::Embed);
            for branch in branches {
                b.add(format!("seg.{}", branch.tag()), vec![d], Init::Embed);
            }
            for l in 0..config.layers {
                let name = format!("layer{l}");
                b.norm(&format!("{name}.ln1"), d);
                for proj in ["q", "k", "v", "o"] {
                    b.linear(&format!("{name}.attn.{proj}"), d, d);
                }
                b.norm(&format!("{name}.ln2"), d);
                b.linear(&format!("{name}.ff1"), d, config.ff_dim);
                b.linear(&format!("{name}.ff2"), config.ff_dim, d);
            }
            b.norm("final_ln", d);
            b.linear("readout", d, c * h);
        }
    }

    for (i, p) in blocks.iter().enumerate().rev() {
        let out = if i == 0 { p.mid_ch } else { p.in_ch };
        let name = format!("dec.b{i}");
        b.conv(&format!("{name}.conv1"), p.out_ch, p.mid_ch, p.kernel, Init::Conv);
        b.conv(&format!("{name}.conv2"), p.mid_ch, out, p.kernel, Init::Conv);
        b.conv(&format!("{name}.proj"), p.out_ch, out, 1, Init::Conv);
    }
    b.conv("head", blocks[0].mid_ch, 1, blocks[0].kernel, Init::Zero);
    b.params
}

impl Model {
    /// Fresh parameters drawn from a seeded generator. The output head starts at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = build(&config, Some(&mut rng));
        Ok(Model { config, params })
    }

    /// Wraps existing parameters, checking names, order and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let skeleton = build(&config, None);
        if skeleton.len() != params.len() {
            return Err(Error::shape(format!(
                "model expects {} parameter tensors, got {}",
                skeleton.len(),
                params.len()
            )));
        }
        for ((_, want_name, want), (_, name, got)) in skeleton.iter().zip(params.iter()) {
            if want_name != name || want.shape() != got.shape() {
                return Err(Error::shape(format!(
                    "parameter {name} {:?} does not match expected {want_name} {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ParamSet) {
        (self.config, self.params)
    }

    /// Sets the final 1-channel convolution to zero, making every logit 0.
    pub fn zero_output_head(&mut self) {
        for name in ["head.w", "head.b"] {
            let t = self.params.by_name_mut(name).expect("head parameter");
            t.data_mut().fill(0.0);
        }
    }

    fn p(&self, tape: &mut Tape, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::shape(format!("{} model has no parameter {name}", self.config.kind)))?;
        Ok(tape.param(&self.params, id))
    }

    /// Stacks images into `[N, in_channels, H, W]` with ink = 1, background = 0.
    pub fn image_tensor(&self, images: &[&BinaryImage]) -> Result<Tensor> {
        let f = &self.config.frame;
        let cin = self.config.in_channels;
        let mut data = Vec::with_capacity(images.len() * cin * f.pixel_count());
        for img in images {
            if img.width() != f.width || img.height() != f.height {
                return Err(Error::shape(format!(
                    "image is {}x{}, frame is {}x{}",
                    img.width(),
                    img.height(),
                    f.width,
                    f.height
                )));
            }
            for _ in 0..cin {
                data.extend(img.pixels().iter().map(|&p| 1.0 - p as f32));
            }
        }
        Tensor::new([images.len(), cin, f.height, f.width], data)
    }

    fn conv(&self, tape: &mut Tape, name: &str, x: Var, stride: usize) -> Result<Var> {
        let w = self.p(tape, &format!("{name}.w"))?;
        let b = self.p(tape, &format!("{name}.b"))?;
        tape.conv2d(x, w, Some(b), stride)
    }

    fn linear(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var> {
        let w = self.p(tape, &format!("{name}.w"))?;
        let b = self.p(tape, &format!("{name}.b"))?;
        tape.linear(x, w, Some(b))
    }

    fn norm(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var> {
        let g = self.p(tape, &format!("{name}.g"))?;
        let b = self.p(tape, &format!("{name}.b"))?;
        tape.layer_norm(x, g, b, LN_EPS)
    }

    /// Residual encoder. Returns every block output, the last being the feature map.
    pub fn conv_encode(&self, tape: &mut Tape, input: Var, branch: Branch) -> Result<Vec<Var>> {
        let mut x = input;
        let mut outputs = Vec::new();
        for i in 0..self.config.blocks().len() {
            let name = format!("{}_enc.b{i}", branch.tag());
            let h = self.conv(tape, &format!("{name}.conv1"), x, 1)?;
            let h = tape.relu(h);
            let h = self.conv(tape, &format!("{name}.conv2"), h, 2)?;
            let r = self.conv(tape, &format!("{name}.proj"), x, 2)?;
            x = tape.add(h, r)?;
            outputs.push(x);
        }
        Ok(outputs)
    }

    /// Global average over spatial positions: `[N, C, H, W] -> [N, C]`.
    pub fn pool_to_latent(tape: &mut Tape, featmap: Var) -> Result<Var> {
        tape.global_avg_pool(featmap)
    }

    /// Mirror of the encoder ending in a 1-channel logit map `[N, 1, H, W]`.
    pub fn conv_decode(&self, tape: &mut Tape, seed: Var) -> Result<Var> {
        let (c, h, w) = self.config.latent_shape();
        let shape = tape.shape(seed);
        if shape.len() != 4 || shape[1..] != [c, h, w] {
            return Err(Error::shape(format!("decoder seed {shape:?} is not [N, {c}, {h}, {w}]")));
        }
        let mut x = seed;
        for i in (0..self.config.blocks().len()).rev() {
            let name = format!("dec.b{i}");
            let up = tape.upsample2x(x)?;
            let y = self.conv(tape, &format!("{name}.conv1"), up, 1)?;
            let y = tape.relu(y);
            let y = self.conv(tape, &format!("{name}.conv2"), y, 1)?;
            let r = self.conv(tape, &format!("{name}.proj"), x, 1)?;
            let r = tape.upsample2x(r)?;
            x = tape.add(y, r)?;
        }
        let x = tape.relu(x);
        self.conv(tape, "head", x, 1)
    }

    /// One sequence element per feature-map column: `[N, C, H', W'] -> [N, W', d_model]`.
    pub fn featmap_to_seq(&self, tape: &mut Tape, featmap: Var, branch: Branch) -> Result<Var> {
        let shape = tape.shape(featmap).to_vec();
        if shape.len() != 4 {
            return Err(Error::shape(format!("feature map {shape:?} is not rank 4")));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let cols = tape.permute(featmap, &[0, 3, 1, 2])?;
        let cols = tape.reshape(cols, [n, w, c * h])?;
        let seq = self.linear(tape, &format!("{}_seq", branch.tag()), cols)?;
        let pos = self.p(tape, "pos")?;
        let seq = tape.add_broadcast(seq, pos)?;
        let seg = self.p(tape, &format!("seg.{}", branch.tag()))?;
        tape.add_broadcast(seq, seg)
    }

    fn transformer(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for l in 0..self.config.layers {
            let name = format!("layer{l}");
            let h = self.norm(tape, &format!("{name}.ln1"), x)?;
            let mut vars = Vec::with_capacity(8);
            for proj in ["q", "k", "v", "o"] {
                vars.push(self.p(tape, &format!("{name}.attn.{proj}.w"))?);
                vars.push(self.p(tape, &format!("{name}.attn.{proj}.b"))?);
            }
            let attn = AttentionVars {
                wq: vars[0],
                bq: vars[1],
                wk: vars[2],
                bk: vars[3],
                wv: vars[4],
                bv: vars[5],
                wo: vars[6],
                bo: vars[7],
            };
            let a = multihead_self_attention(tape, h, self.config.heads, &attn)?;
            x = tape.add(x, a)?;
            let h = self.norm(tape, &format!("{name}.ln2"), x)?;
            let h = self.linear(tape, &format!("{name}.ff1"), h)?;
            let h = tape.relu(h);
            let h = self.linear(tape, &format!("{name}.ff2"), h)?;
            x = tape.add(x, h)?;
        }
        self.norm(tape, "final_ln", x)
    }

    /// Logits `[N, 1, H, W]` for a batch. The baseline ignores `partials`.
    pub fn logits(&self, tape: &mut Tape, sources: &[&BinaryImage], partials: &[&BinaryImage]) -> Result<Var> {
        let src = self.image_tensor(sources)?;
        let src = tape.constant(src);
        match self.config.kind {
            ModelKind::Baseline => {
                let feat = *self.conv_encode(tape, src, Branch::Source)?.last().unwrap();
                let (c, h, w) = self.config.latent_shape();
                let z = Self::pool_to_latent(tape, feat)?;
                let e = self.linear(tape, "latent", z)?;
                let e = tape.reshape(e, [sources.len(), c, h, w])?;
                self.conv_decode(tape, e)
            }
            ModelKind::Full => {
                if partials.len() != sources.len() {
                    return Err(Error::shape(format!(
                        "{} sources but {} partial targets",
                        sources.len(),
                        partials.len()
                    )));
                }
                let tgt = self.image_tensor(partials)?;
                let tgt = tape.constant(tgt);
                let fs = *self.conv_encode(tape, src, Branch::Source)?.last().unwrap();
                let ft = *self.conv_encode(tape, tgt, Branch::Target)?.last().unwrap();
                let ss = self.featmap_to_seq(tape, fs, Branch::Source)?;
                let st = self.featmap_to_seq(tape, ft, Branch::Target)?;
                let cols = tape.shape(st)[1];
                let seq = tape.concat(&[ss, st], 1)?;
                let out = self.transformer(tape, seq)?;
                let out = tape.slice(out, 1, cols, cols)?;
                let (c, h, w) = self.config.latent_shape();
                let back = self.linear(tape, "readout", out)?;
                let back = tape.reshape(back, [sources.len(), w, c, h])?;
                let back = tape.permute(back, &[0, 2, 3, 1])?;
                self.conv_decode(tape, back)
            }
        }
    }

    /// Per-pixel white probabilities for one input. The baseline ignores `partial`.
    pub fn predict(&self, source: &BinaryImage, partial: &BinaryImage) -> Result<PixelProbMap> {
        let mut tape = Tape::no_grad();
        let logits = self.logits(&mut tape, &[source], &[partial])?;
        Ok(logits_to_probs(tape.value(logits)).remove(0))
    }

    pub fn baseline_forward(&self, source: &BinaryImage) -> Result<PixelProbMap> {
        if self.config.kind != ModelKind::Baseline {
            return Err(Error::Config("baseline_forward called on a full model".into()));
        }
        self.predict(source, source)
    }

    pub fn full_forward(&self, source: &BinaryImage, partial: &BinaryImage) -> Result<PixelProbMap> {
        if self.config.kind != ModelKind::Full {
            return Err(Error::Config("full_forward called on a baseline model".into()));
        }
        self.predict(source, partial)
    }
}

/// Sigmoid of a `[N, 1, H, W]` logit tensor, one map per batch item.
pub fn logits_to_probs(logits: &Tensor) -> Vec<PixelProbMap> {
    let s = logits.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    logits
        .data()
        .chunks(h * w)
        .map(|c| PixelProbMap::new(h, w, c.iter().map(|&x| sigmoid(x)).collect()).expect("logit plane"))
        .collect()
}
