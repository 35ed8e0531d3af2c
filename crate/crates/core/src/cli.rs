//! Command-line surface: synth, prepare, pretrain, finetune, sweep,
//! evaluate, ablate.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! failure (non-finite values detected).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adapt::{
    encode_dataset, fine_tune, init_head, micro_f, AdaptMode, FineTuneConfig,
    HeadConfig, HeadKind, Model,
};
use crate::autodiff::{checkpoint, Parameters};
use crate::corpus::{build_dataset, split_dataset, SplitSpec};
use crate::encoder::{init_params, EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::eval::{
    ablation, evaluate_benchmark, AblationSetup, BenchmarkReport, BenchmarkTaxonomyMap,
};
use crate::pretrain::{pretrain_mlm, MaskingSpec, PretrainConfig};
use crate::synthetic::{generate_benchmark, generate_raw, SyntheticConfig};
use crate::tokenizer::Vocabulary;

// Fixed offsets deriving per-stage seeds from the root seed, so each
// stage is independently reproducible.
const SEED_PREPARE: u64 = 0;
const SEED_INIT: u64 = 100;
const SEED_PRETRAIN: u64 = 1000;
const SEED_FINETUNE: u64 = 2000;
const SEED_ABLATE: u64 = 3000;

#[derive(Parser)]
#[command(
    name = "emotex",
    about = "Sequential transfer learning for four-class emotion classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic raw corpus, lexicon, and benchmark file
    Synth(SynthArgs),
    /// Clean, label, deduplicate, and split a raw corpus
    Prepare(PrepareArgs),
    /// Masked-token pretraining of the transformer encoder
    Pretrain(PretrainArgs),
    /// Train the classification head (frozen or unfrozen encoder)
    Finetune(FinetuneArgs),
    /// Fine-tune across several batch sizes and tabulate the results
    Sweep(SweepArgs),
    /// Score a model bundle on a benchmark file via the taxonomy map
    Evaluate(EvaluateArgs),
    /// Fine-tuning-set-size ablation curve
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of raw messages
    #[arg(long, default_value_t = 2000)]
    raw: usize,
    /// Number of benchmark items
    #[arg(long, default_value_t = 300)]
    benchmark: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Disable retweet/URL/mention/elongation noise
    #[arg(long)]
    clean: bool,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.555)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.111)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.334)]
    test_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Clone)]
struct EncoderArgs {
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 128)]
    ffn: usize,
    #[arg(long, default_value_t = 32)]
    max_len: usize,
    #[arg(long, value_enum, default_value_t = EncoderKindArg::Transformer)]
    encoder_kind: EncoderKindArg,
    #[arg(long, default_value_t = 2000)]
    vocab_max: usize,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderKindArg {
    Transformer,
    Dan,
}

impl EncoderArgs {
    fn config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            kind: match self.encoder_kind {
                EncoderKindArg::Transformer => EncoderKind::Transformer,
                EncoderKindArg::Dan => EncoderKind::Dan,
            },
            num_layers: self.layers,
            num_heads: self.heads,
            hidden_dim: self.hidden,
            ffn_dim: self.ffn,
            max_len: self.max_len,
            vocab_size,
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    /// Labeled or unlabeled dataset in JSON-lines form (labels ignored)
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    mask_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Frozen,
    Unfrozen,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Linear,
    Mlp,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Pretrained encoder directory (output of `pretrain`); omit to
    /// train from random initialization
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    encoder_args: EncoderArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long)]
    head_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    finetune: FinetuneArgs,
    /// Comma-separated batch sizes, e.g. 50,100,150,200,250
    #[arg(long, value_delimiter = ',', required = true)]
    batch_sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    benchmark: PathBuf,
    /// Taxonomy map JSON; defaults to the canonical quadrant mapping
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    finetune: FinetuneArgs,
    /// Comma-separated fine-tuning set sizes, e.g. 200,2000,20000
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Also render an SVG line plot of the curve
    #[arg(long)]
    svg: bool,
}

/// Optional JSON defaults, overridden by explicit flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    mask_prob: Option<f64>,
    mode: Option<AdaptMode>,
    head_hidden: Option<usize>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::json(p, e))
            }
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonFinite(_) | Error::NotScalar(_) => ExitCode::from(4),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Prepare(args) => cmd_prepare(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Finetune(args) => cmd_finetune(args).map(|_| ()),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Timestamps are confined to this side log so every artifact file is
/// reproducible byte for byte.
fn append_log(dir: &Path, line: &str) {
    use std::io::Write;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))
    {
        let _ = writeln!(f, "[{now}] {line}");
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    ensure_dir(&args.out_dir)?;
    let cfg = SyntheticConfig::default();
    let raws = generate_raw(&cfg, args.raw, args.seed, !args.clean);
    crate::io::write_jsonl_items(&args.out_dir.join("raw.jsonl"), &raws)?;
    crate::io::write_lexicon(&args.out_dir.join("lexicon.json"), &cfg.lexicon())?;
    let bench = generate_benchmark(&cfg, args.benchmark, args.seed.wrapping_add(1));
    crate::io::write_jsonl_items(&args.out_dir.join("benchmark.jsonl"), &bench)?;
    append_log(&args.out_dir, &format!("synth raw={} benchmark={}", args.raw, args.benchmark));
    eprintln!(
        "wrote {} raw messages, lexicon, {} benchmark items to {}",
        args.raw,
        args.benchmark,
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PrepareStats {
    total_raw: usize,
    total_labeled: usize,
    class_counts: std::collections::BTreeMap<String, usize>,
    dropped: crate::corpus::BuildStats,
    splits: std::collections::BTreeMap<String, usize>,
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let raws = crate::io::read_raw_messages(&args.raw)?;
    let lexicon = crate::io::read_lexicon(&args.lexicon)?;
    ensure_dir(&args.out_dir)?;
    let (dataset, dropped) = build_dataset(&raws, &lexicon)?;
    let spec = SplitSpec::new(
        args.train_frac,
        args.val_frac,
        args.test_frac,
        args.seed.wrapping_add(SEED_PREPARE),
    )?;
    let (train, val, test) = split_dataset(&dataset, &spec)?;
    crate::io::write_dataset(&args.out_dir.join("train.jsonl"), &train)?;
    crate::io::write_dataset(&args.out_dir.join("val.jsonl"), &val)?;
    crate::io::write_dataset(&args.out_dir.join("test.jsonl"), &test)?;
    let stats = PrepareStats {
        total_raw: raws.len(),
        total_labeled: dataset.len(),
        class_counts: dataset
            .class_counts()
            .into_iter()
            .map(|(c, n)| (c.as_str().to_string(), n))
            .collect(),
        dropped,
        splits: [
            ("train".to_string(), train.len()),
            ("val".to_string(), val.len()),
            ("test".to_string(), test.len()),
        ]
        .into_iter()
        .collect(),
    };
    crate::io::write_json_pretty(&args.out_dir.join("stats.json"), &stats)?;
    append_log(&args.out_dir, &format!("prepare labeled={}", dataset.len()));
    eprintln!(
        "labeled {} of {} messages; splits {}/{}/{}",
        dataset.len(),
        raws.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let defaults = RunConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(defaults.seed).unwrap_or(42);
    let epochs = args.epochs.or(defaults.epochs).unwrap_or(5);
    let batch_size = args.batch_size.or(defaults.batch_size).unwrap_or(32);
    let lr = args.lr.or(defaults.lr).unwrap_or(1e-3);
    let mask_prob = args.mask_prob.or(defaults.mask_prob).unwrap_or(0.15);

    let dataset = crate::io::read_dataset(&args.train)?;
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocabulary::build(
        dataset.messages.iter().map(|m| m.clean_text.as_str()),
        args.encoder.min_count,
        args.encoder.vocab_max,
    );
    let cfg = args.encoder.config(vocab.size());
    cfg.validate()?;
    let mut params = init_params(&cfg, seed.wrapping_add(SEED_INIT))?;
    let corpus: Vec<_> = dataset
        .messages
        .iter()
        .map(|m| crate::tokenizer::encode(&m.clean_text, &vocab, cfg.max_len))
        .collect();
    let pconf = PretrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        masking: MaskingSpec::new(mask_prob, seed.wrapping_add(SEED_PRETRAIN))?,
    };
    let curve = pretrain_mlm(&mut params, &cfg, &corpus, &pconf)?;

    ensure_dir(&args.out_dir)?;
    cfg.save(&args.out_dir.join("encoder.json"))?;
    checkpoint::save(&args.out_dir.join("encoder.ckpt"), &params)?;
    vocab.save(&args.out_dir.join("vocab.json"))?;
    crate::io::write_json_pretty(&args.out_dir.join("loss_curve.json"), &curve)?;
    append_log(&args.out_dir, &format!("pretrain epochs={epochs} curve={curve:?}"));
    eprintln!("pretrained {epochs} epochs; loss curve {curve:?}");
    Ok(())
}

struct FinetuneOutcome {
    val_micro_f: Option<f64>,
    test_micro_f: Option<f64>,
}

#[derive(Serialize)]
struct FinetuneMetrics {
    mode: AdaptMode,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    val_micro_f: Option<f64>,
    test_micro_f: Option<f64>,
}

fn load_or_init_encoder(
    args: &FinetuneArgs,
    train: &crate::corpus::Dataset,
    seed: u64,
) -> Result<(EncoderConfig, Parameters, Vocabulary)> {
    match &args.encoder {
        Some(dir) => {
            let cfg = EncoderConfig::load(&dir.join("encoder.json"))?;
            let params = checkpoint::load(&dir.join("encoder.ckpt"))?;
            crate::encoder::validate_params(&cfg, &params)?;
            let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
            if vocab.size() != cfg.vocab_size {
                return Err(Error::ShapeMismatch(format!(
                    "vocabulary size {} vs encoder config {}",
                    vocab.size(),
                    cfg.vocab_size
                )));
            }
            Ok((cfg, params, vocab))
        }
        None => {
            let vocab = Vocabulary::build(
                train.messages.iter().map(|m| m.clean_text.as_str()),
                args.encoder_args.min_count,
                args.encoder_args.vocab_max,
            );
            let cfg = args.encoder_args.config(vocab.size());
            cfg.validate()?;
            let params = init_params(&cfg, seed.wrapping_add(SEED_INIT))?;
            Ok((cfg, params, vocab))
        }
    }
}

fn params_fingerprint(params: &Parameters) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for (name, t) in params.iter() {
        for b in name.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        for v in t.data() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn cmd_finetune(args: FinetuneArgs) -> Result<FinetuneOutcome> {
    let defaults = RunConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(defaults.seed).unwrap_or(42);
    let epochs = args.epochs.or(defaults.epochs).unwrap_or(5);
    let batch_size = args.batch_size.or(defaults.batch_size).unwrap_or(50);
    let lr = args.lr.or(defaults.lr).unwrap_or(1e-3);
    let mode = match args.mode {
        Some(ModeArg::Frozen) => AdaptMode::Frozen,
        Some(ModeArg::Unfrozen) => AdaptMode::Unfrozen,
        None => defaults.mode.unwrap_or(AdaptMode::Unfrozen),
    };
    let head_hidden = args.head_hidden.or(defaults.head_hidden).unwrap_or(256);
    let head_cfg = match args.head {
        Some(HeadArg::Mlp) => HeadConfig { kind: HeadKind::Mlp { hidden: head_hidden }, num_classes: 4 },
        _ => HeadConfig::linear(4),
    };

    let train_ds = crate::io::read_dataset(&args.train)?;
    let val_ds = crate::io::read_dataset(&args.val)?;
    let (cfg, enc_params, vocab) = load_or_init_encoder(&args, &train_ds, seed)?;
    let head = init_head(&head_cfg, cfg.hidden_dim, seed.wrapping_add(SEED_INIT + 1))?;
    let mut model = Model::new(cfg, enc_params, head_cfg, head);

    let train = encode_dataset(&train_ds, &vocab, cfg.max_len);
    let val = encode_dataset(&val_ds, &vocab, cfg.max_len);
    let fconf = FineTuneConfig {
        mode,
        epochs,
        batch_size,
        learning_rate: lr,
        seed: seed.wrapping_add(SEED_FINETUNE),
    };
    let encoder_before = params_fingerprint(&model.encoder);
    let history = fine_tune(&mut model, &train, &val, &fconf)?;
    if mode == AdaptMode::Frozen {
        let unchanged = params_fingerprint(&model.encoder) == encoder_before;
        eprintln!("encoder unchanged: {unchanged}");
    }

    ensure_dir(&args.out_dir)?;
    crate::bundle::save(&args.out_dir.join("bundle"), &model, &vocab)?;
    crate::io::write_json_pretty(&args.out_dir.join("history.json"), &history)?;
    let val_micro_f = history.last().map(|r| r.val_micro_f);
    let test_micro_f = match &args.test {
        Some(path) => {
            let test_ds = crate::io::read_dataset(path)?;
            let test = encode_dataset(&test_ds, &vocab, cfg.max_len);
            if test.is_empty() {
                return Err(Error::EmptyDataset);
            }
            Some(micro_f(&model, &test)?)
        }
        None => None,
    };
    let metrics = FinetuneMetrics {
        mode,
        epochs,
        batch_size,
        learning_rate: lr,
        seed,
        val_micro_f,
        test_micro_f,
    };
    crate::io::write_json_pretty(&args.out_dir.join("metrics.json"), &metrics)?;
    append_log(
        &args.out_dir,
        &format!("finetune mode={mode:?} val={val_micro_f:?} test={test_micro_f:?}"),
    );
    eprintln!("fine-tuned; val micro-F {val_micro_f:?}, test micro-F {test_micro_f:?}");
    Ok(FinetuneOutcome { val_micro_f, test_micro_f })
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if args.finetune.test.is_none() {
        return Err(Error::InvalidConfig("sweep requires --test".into()));
    }
    let mut rows = Vec::new();
    for &bs in &args.batch_sizes {
        let per_run = FinetuneArgs {
            batch_size: Some(bs),
            out_dir: args.finetune.out_dir.join(format!("batch{bs}")),
            ..clone_finetune(&args.finetune)
        };
        let outcome = cmd_finetune(per_run)?;
        rows.push((bs, outcome));
    }
    let mut csv = String::from("batch_size,val_micro_f,test_micro_f\n");
    for (bs, outcome) in &rows {
        csv.push_str(&format!(
            "{bs},{:.6},{:.6}\n",
            outcome.val_micro_f.unwrap_or(f64::NAN),
            outcome.test_micro_f.unwrap_or(f64::NAN)
        ));
    }
    std::fs::write(&args.out, csv).map_err(|e| Error::io(&args.out, e))?;
    eprintln!("sweep wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn clone_finetune(a: &FinetuneArgs) -> FinetuneArgs {
    FinetuneArgs {
        train: a.train.clone(),
        val: a.val.clone(),
        test: a.test.clone(),
        out_dir: a.out_dir.clone(),
        encoder: a.encoder.clone(),
        config: a.config.clone(),
        encoder_args: a.encoder_args.clone(),
        mode: a.mode,
        head: a.head,
        head_hidden: a.head_hidden,
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
    }
}

fn report_csv(report: &BenchmarkReport) -> String {
    let mut csv = String::from("class,precision,recall,f1,support\n");
    for row in &report.per_class {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            row.class, row.precision, row.recall, row.f1, row.support
        ));
    }
    csv.push_str(&format!("micro_avg,,,{:.6},{}\n", report.micro_f, report.n));
    csv
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (model, vocab) = crate::bundle::load(&args.model)?;
    let items = crate::io::read_benchmark(&args.benchmark)?;
    let map = match &args.map {
        Some(path) => crate::io::read_taxonomy_map(path)?,
        None => BenchmarkTaxonomyMap::canonical(),
    };
    let report = evaluate_benchmark(&model, &vocab, &items, &map)?;
    ensure_dir(&args.out_dir)?;
    crate::io::write_json_pretty(&args.out_dir.join("report.json"), &report)?;
    std::fs::write(&args.out_dir.join("report.csv"), report_csv(&report))
        .map_err(|e| Error::io(&args.out_dir.join("report.csv"), e))?;
    append_log(&args.out_dir, &format!("evaluate micro_f={:.4}", report.micro_f));
    eprintln!("benchmark micro-F {:.4} over {} items", report.micro_f, report.n);
    Ok(())
}

fn curve_svg(points: &[(usize, f64)]) -> String {
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let xmax = points.iter().map(|p| p.0).max().unwrap_or(1) as f64;
    let coords: Vec<(f64, f64)> = points
        .iter()
        .map(|&(size, f)| {
            let x = margin + (size as f64 / xmax) * (w - 2.0 * margin);
            let y = h - margin - f.clamp(0.0, 1.0) * (h - 2.0 * margin);
            (x, y)
        })
        .collect();
    let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    svg.push_str(&format!(
        "  <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n  <line x1=\"{margin}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n  <line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = h - margin,
        x1 = w - margin,
    ));
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        path.join(" ")
    ));
    for ((x, y), (size, f)) in coords.iter().zip(points) {
        svg.push_str(&format!(
            "  <circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"steelblue\"/>\n  <text x=\"{x:.1}\" y=\"{ty:.1}\" font-size=\"11\" text-anchor=\"middle\">{size}: {f:.3}</text>\n",
            ty = y - 8.0
        ));
    }
    svg.push_str("  <text x=\"320\" y=\"390\" font-size=\"12\" text-anchor=\"middle\">fine-tuning set size</text>\n");
    svg.push_str("  <text x=\"15\" y=\"200\" font-size=\"12\" transform=\"rotate(-90 15 200)\" text-anchor=\"middle\">micro-F</text>\n");
    svg.push_str("</svg>\n");
    svg
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let f = &args.finetune;
    let defaults = RunConfig::load(f.config.as_deref())?;
    let seed = f.seed.or(defaults.seed).unwrap_or(42);
    let epochs = f.epochs.or(defaults.epochs).unwrap_or(2);
    let batch_size = f.batch_size.or(defaults.batch_size).unwrap_or(50);
    let lr = f.lr.or(defaults.lr).unwrap_or(1e-3);
    let mode = match f.mode {
        Some(ModeArg::Frozen) => AdaptMode::Frozen,
        Some(ModeArg::Unfrozen) => AdaptMode::Unfrozen,
        None => defaults.mode.unwrap_or(AdaptMode::Unfrozen),
    };
    let test_path = f
        .test
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("ablate requires --test".into()))?;

    let train_ds = crate::io::read_dataset(&f.train)?;
    let val_ds = crate::io::read_dataset(&f.val)?;
    let test_ds = crate::io::read_dataset(test_path)?;
    let (cfg, enc_params, vocab) = load_or_init_encoder(f, &train_ds, seed)?;
    let head_cfg = HeadConfig::linear(4);
    let head = init_head(&head_cfg, cfg.hidden_dim, seed.wrapping_add(SEED_INIT + 1))?;
    let base_model = Model::new(cfg, enc_params, head_cfg, head);

    let train = encode_dataset(&train_ds, &vocab, cfg.max_len);
    let val = encode_dataset(&val_ds, &vocab, cfg.max_len);
    let test = encode_dataset(&test_ds, &vocab, cfg.max_len);
    let setup = AblationSetup {
        base_model: &base_model,
        ftconf: FineTuneConfig {
            mode,
            epochs,
            batch_size,
            learning_rate: lr,
            seed: seed.wrapping_add(SEED_FINETUNE),
        },
        train: &train,
        val: &val,
        test: &test,
        seed: seed.wrapping_add(SEED_ABLATE),
    };
    let points = ablation(&setup, &args.sizes)?;

    ensure_dir(&f.out_dir)?;
    let mut csv = String::from("size,micro_f\n");
    for p in &points {
        csv.push_str(&format!("{},{:.6}\n", p.size, p.micro_f));
    }
    let csv_path = f.out_dir.join("curve.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    if args.svg {
        let svg = curve_svg(&points.iter().map(|p| (p.size, p.micro_f)).collect::<Vec<_>>());
        let svg_path = f.out_dir.join("curve.svg");
        std::fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
    }
    let monotone = points
        .windows(2)
        .all(|w| w[1].micro_f >= w[0].micro_f - 0.02);
    append_log(&f.out_dir, &format!("ablate points={points:?}"));
    eprintln!(
        "ablation curve: {:?}; monotone (2-point tolerance): {monotone}",
        points
            .iter()
            .map(|p| (p.size, (p.micro_f * 1000.0).round() / 1000.0))
            .collect::<Vec<_>>()
    );
    Ok(())
}
