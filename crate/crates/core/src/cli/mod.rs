//! Command-line front end shared by the `pixmt` binary.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{CliConfig, CONFIG_ENV, KEYS};

use crate::autodiff::{gradcheck_suite, SUITE_TOLERANCE};
use crate::corpus::{load_tsv, Dataset};
use crate::evalsuite::{comparison_table, evaluate_with_steps, ocr, TableRow};
use crate::inference::{default_max_steps, translate};
use crate::model::{Model, ModelConfig};
use crate::raster::{export_image, read_pgm, render_text, FrameSpec};
use crate::trainer::{curve_csv, load_checkpoint, save_checkpoint, train, Checkpoint};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pixmt", version, about = "Pixel-level in-image machine translation")]
struct Cli {
    /// Configuration file of key = value lines (defaults to $PIXMT_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override any configuration key, e.g. --set seed=3. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(flatten)]
    flags: KeyFlags,

    #[command(subcommand)]
    command: Command,
}

/// One flag per configuration key.
#[derive(Debug, Args)]
struct KeyFlags {
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long, global = true)]
    frame: Option<String>,
    /// Piece mode: word or char.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Model size: desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Architecture: baseline or full.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// Optimizer step cap, or "none".
    #[arg(long = "max-steps", global = true)]
    max_steps: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    /// Gradient clipping norm, or "none".
    #[arg(long = "clip-norm", global = true)]
    clip_norm: Option<String>,
    #[arg(long = "eval-every", global = true)]
    eval_every: Option<String>,
    /// Glyph atlas file (defaults to the built-in font).
    #[arg(long, global = true)]
    atlas: Option<String>,
    /// Decoding step limit (defaults to characters per frame + 1).
    #[arg(long = "decode-steps", global = true)]
    decode_steps: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let all = [
            ("frame", &self.frame),
            ("mode", &self.mode),
            ("preset", &self.preset),
            ("model", &self.model),
            ("seed", &self.seed),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("max_steps", &self.max_steps),
            ("lr", &self.lr),
            ("clip_norm", &self.clip_norm),
            ("eval_every", &self.eval_every),
            ("atlas", &self.atlas),
            ("decode_steps", &self.decode_steps),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a TSV corpus into a dataset directory of sub-examples.
    Gen {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Held-out dataset directory for per-epoch dev NLL.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Loss curve CSV (defaults to the checkpoint path with .loss.csv appended).
        #[arg(long = "loss-csv")]
        loss_csv: Option<PathBuf>,
        /// Continue from an existing checkpoint instead of a fresh model.
        #[arg(long)]
        resume: bool,
    },
    /// Translate one sentence or image.
    Translate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        text: Option<String>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-step binary and probability images.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a TSV corpus.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for report.jsonl and table.txt.
        #[arg(long, default_value = "eval_out")]
        out: PathBuf,
    },
    /// Transcribe an image.
    Ocr {
        #[arg(long)]
        image: PathBuf,
    },
    /// Render text into a frame.
    Render {
        #[arg(long)]
        text: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

/// Parses `argv` and runs the subcommand. Returns the process exit code:
/// 0 on success, 2 on usage errors, 1 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve(cli: &Cli) -> Result<CliConfig> {
    let mut cfg = CliConfig::default();
    let file = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = file {
        cfg.apply_file(&path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(format!("cannot read config {}: {e}", path.display())),
            other => other,
        })?;
    }
    for (k, v) in cli.flags.pairs() {
        cfg.set(k, v)?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn echo(cfg: &CliConfig) {
    for line in cfg.to_text().lines() {
        eprintln!("config: {line}");
    }
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    let cfg = resolve(&cli)?;
    echo(&cfg);
    match cli.command {
        Command::Gen { corpus, out } => gen(&cfg, &corpus, &out)?,
        Command::Train { data, ckpt, dev, loss_csv, resume } => {
            run_train(&cfg, &data, &ckpt, dev.as_deref(), loss_csv, resume)?
        }
        Command::Translate { ckpt, text, image, out, trace } => {
            run_translate(&cfg, &ckpt, text.as_deref(), image.as_deref(), &out, trace.as_deref())?
        }
        Command::Eval { ckpt, corpus, out } => run_eval(&cfg, &ckpt, &corpus, &out)?,
        Command::Ocr { image } => {
            let img = read_pgm(&image)?;
            let frame = FrameSpec::for_size(img.width, img.height);
            frame.validate()?;
            let atlas = cfg.atlas_for(&frame)?;
            println!("{}", ocr(&img.to_binary(), &frame, &atlas));
        }
        Command::Render { text, out } => {
            let frame = cfg.frame_spec()?;
            let atlas = cfg.atlas_for(&frame)?;
            export_image(&render_text(&text, &frame, &atlas)?, &out)?;
        }
        Command::Gradcheck => {
            let cases = gradcheck_suite(cfg.seed)?;
            let mut failed = 0;
            for c in &cases {
                let verdict = if c.passed() { "ok" } else { "FAIL" };
                println!("{verdict:4} {:<40} max rel err {:.3e}", c.name, c.max_relative_error);
                failed += usize::from(!c.passed());
            }
            if failed > 0 {
                return Err(Failure::Runtime(Error::Malformed {
                    what: "gradient",
                    detail: format!("{failed} of {} cases exceed {SUITE_TOLERANCE:e}", cases.len()),
                }));
            }
        }
    }
    Ok(())
}

fn gen(cfg: &CliConfig, corpus: &Path, out: &Path) -> Result<()> {
    let frame = cfg.frame_spec()?;
    let atlas = cfg.atlas_for(&frame)?;
    let loaded = load_tsv(corpus, &frame)?;
    eprintln!(
        "read {} pairs ({} malformed, {} unrenderable lines skipped)",
        loaded.pairs.len(),
        loaded.malformed,
        loaded.unrenderable
    );
    let data = Dataset::build(loaded.pairs, frame, &atlas, cfg.mode)?;
    data.save(out)?;
    eprintln!("wrote {} sub-examples to {}", data.steps.len(), out.display());
    Ok(())
}

fn run_train(
    cfg: &CliConfig,
    data_dir: &Path,
    ckpt_path: &Path,
    dev_dir: Option<&Path>,
    loss_csv: Option<PathBuf>,
    resume: bool,
) -> Result<()> {
    let data = Dataset::load(data_dir)?;
    let dev = dev_dir.map(Dataset::load).transpose()?;
    let start = if resume {
        load_checkpoint(ckpt_path)?
    } else {
        let mut model_cfg = ModelConfig::preset(cfg.preset, cfg.model);
        if model_cfg.frame != data.frame {
            return Err(Error::Config(format!(
                "dataset frame {}x{} does not match the {} preset frame {}x{}",
                data.frame.width, data.frame.height, cfg.preset, model_cfg.frame.width, model_cfg.frame.height
            )));
        }
        model_cfg.frame = data.frame;
        Checkpoint::fresh(Model::new(model_cfg, cfg.seed)?, cfg.lr, cfg.clip_norm)
    };
    let run = train(&cfg.train_config(), start, &data, dev.as_ref())?;
    save_checkpoint(&run.checkpoint, ckpt_path)?;
    let csv_path = loss_csv.unwrap_or_else(|| {
        let mut p = ckpt_path.as_os_str().to_owned();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    fs::write(&csv_path, curve_csv(&run.curve)).map_err(|e| Error::io(&csv_path, e))?;
    eprintln!("saved {} after {} steps; loss curve in {}", ckpt_path.display(), run.checkpoint.step, csv_path.display());
    Ok(())
}

fn run_translate(
    cfg: &CliConfig,
    ckpt: &Path,
    text: Option<&str>,
    image: Option<&Path>,
    out: &Path,
    trace_dir: Option<&Path>,
) -> Result<()> {
    let model = load_checkpoint(ckpt)?.model;
    let frame = model.config().frame;
    let source = match (text, image) {
        (Some(t), _) => render_text(t, &frame, &cfg.atlas_for(&frame)?)?,
        (None, Some(p)) => read_pgm(p)?.to_binary(),
        (None, None) => return Err(Error::Config("one of --text or --image is required".into())),
    };
    let max_steps = cfg.decode_steps.unwrap_or_else(|| default_max_steps(&frame));
    let trace = translate(&model, &source, max_steps)?;
    export_image(trace.final_image(), out)?;
    if let Some(dir) = trace_dir {
        trace.dump(dir)?;
    }
    eprintln!("{} steps, stopped by {:?}", trace.len(), trace.reason);
    Ok(())
}

fn run_eval(cfg: &CliConfig, ckpt: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let model = load_checkpoint(ckpt)?.model;
    let frame = model.config().frame;
    let atlas = cfg.atlas_for(&frame)?;
    let pairs = load_tsv(corpus, &frame)?.pairs;
    let max_steps = cfg.decode_steps.unwrap_or_else(|| default_max_steps(&frame));
    let report = evaluate_with_steps(&model, &pairs, &atlas, cfg.mode, max_steps)?;
    let jsonl = report.to_jsonl();
    print!("{jsonl}");
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.write_jsonl(out.join("report.jsonl"))?;
    let label = model.kind().to_string();
    let table = comparison_table(&[TableRow { label: &label, train: None, dev: Some(&report) }]);
    let table_path = out.join("table.txt");
    fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    eprint!("{table}");
    Ok(())
}
