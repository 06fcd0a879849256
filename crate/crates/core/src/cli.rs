//! Command-line front end. Every command reads a [`RunConfig`] (defaults,
//! then an optional TOML file, then flags) and reads or writes only the
//! corpus, checkpoint, hypotheses, log and report formats of the library.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::{
    build_multiref_corpus, client_from_spec, rewrite_hypotheses, AugmentConfig, ChatClient, PromptTemplates,
    DEFAULT_CHAT_TIMEOUT,
};
use crate::corpus::{compute_stats, expand_multiref, synth_fixture, Corpus, CorpusRecord, Split, SynthConfig};
use crate::decoding::{decode_corpus, DecodeConfig, DecodeRecord};
use crate::error::{Error, Result};
use crate::metrics::{render_table, topk_report, BleuConfig, MetricReport};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, Translator};
use crate::seed::derive_seed;
use crate::semantic::{ExternalScorer, SemanticScorer, SurrogateScorer};
use crate::training::{train_stage1, train_stage2, Baseline, Stage1Config, Stage2Config, Strategy, TrainLog};

/// File locations; each command uses the subset it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model_in: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub hyps: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

/// Model shape; vocabulary sizes come from the training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    pub init_scale: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelShape {
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            max_decode_len: m.max_decode_len,
            init_scale: m.init_scale,
        }
    }
}

/// Complete parameter set of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; components derive their own seeds from it by name.
    pub seed: u64,
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
    /// `surrogate` or `external:<command>`.
    pub scorer: String,
    /// `mock`, an http(s) URL, or `process:<command>`.
    pub client: String,
    pub client_timeout_secs: u64,
    pub paths: Paths,
    pub model: ModelShape,
    pub synth: SynthConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub decode: DecodeConfig,
    pub augment: AugmentConfig,
    /// Generated references per example that `stats` measures (`avg_pwb`, `avg_rfbrt`).
    pub stats_k: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: None,
            scorer: "surrogate".into(),
            client: "mock".into(),
            client_timeout_secs: DEFAULT_CHAT_TIMEOUT.as_secs(),
            paths: Paths::default(),
            model: ModelShape::default(),
            synth: SynthConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            decode: DecodeConfig::default(),
            augment: AugmentConfig::default(),
            stats_k: None,
        }
    }
}

fn collect(problems: &mut Vec<String>, section: &str, outcome: Result<()>) {
    if let Err(e) = outcome {
        match e {
            Error::InvalidConfig(list) => problems.extend(list.into_iter().map(|p| format!("{section}.{p}"))),
            other => problems.push(format!("{section}: {other}")),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("config file {}: {e}", path.display())))
    }

    /// Checks every section and reports all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.threads == Some(0) {
            problems.push("threads: must be at least 1".into());
        }
        if let Err(e) = scorer_from_spec(&self.scorer) {
            problems.extend(e.fields().iter().cloned());
        }
        if self.client_timeout_secs == 0 {
            problems.push("client_timeout_secs: must be at least 1".into());
        }
        if self.stats_k == Some(0) {
            problems.push("stats_k: must be at least 1".into());
        }
        let shape = ModelConfig {
            src_vocab: 1,
            tgt_vocab: 1,
            ..self.model_config()
        };
        collect(&mut problems, "model", shape.validate());
        collect(&mut problems, "synth", self.synth.validate());
        collect(&mut problems, "stage1", self.stage1.validate());
        collect(&mut problems, "stage2", self.stage2.validate());
        collect(&mut problems, "decode", self.decode.validate());
        collect(&mut problems, "augment", self.augment.validate());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Base model configuration; the init seed derives from the global seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            max_decode_len: self.model.max_decode_len,
            init_scale: self.model.init_scale,
            seed: derive_seed(self.seed, "model/init"),
            ..ModelConfig::default()
        }
    }

    fn client_timeout(&self) -> Duration {
        Duration::from_secs(self.client_timeout_secs)
    }
}

/// `surrogate` or `external:<command>`.
pub fn scorer_from_spec(spec: &str) -> Result<Box<dyn SemanticScorer>> {
    if spec == "surrogate" {
        Ok(Box::new(SurrogateScorer::default()))
    } else if let Some(cmd) = spec.strip_prefix("external:").filter(|c| !c.trim().is_empty()) {
        Ok(Box::new(ExternalScorer::new(cmd)))
    } else {
        Err(Error::config(format!(
            "scorer: unknown value `{spec}` (expected surrogate or external:<command>)"
        )))
    }
}

#[derive(Debug, Parser)]
#[command(name = "multiref", version, about = "Multi-reference sequence-to-sequence toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `surrogate` or `external:<command>`.
    #[arg(long, global = true)]
    pub scorer: Option<String>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the seeded synthetic corpus.
    Synth(SynthArgs),
    /// Expand a multi-reference corpus into one (source, reference) pair per line.
    Expand(ExpandArgs),
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Generate and gate extra references for a single-reference corpus.
    Augment(AugmentArgs),
    /// Fluency-revise and diversify the Top-1 line of a hypotheses file.
    Rewrite(RewriteArgs),
    /// Stage-1 cross-entropy training.
    #[command(name = "train-s1")]
    TrainS1(TrainS1Args),
    /// Stage-2 reinforcement fine-tuning.
    #[command(name = "train-s2")]
    TrainS2(TrainS2Args),
    /// Decode a corpus into a hypotheses file.
    Decode(DecodeArgs),
    /// Score a hypotheses file against a corpus.
    Eval(EvalArgs),
    /// Render metric reports as a text table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub num_examples: Option<usize>,
    /// References per example.
    #[arg(long)]
    pub k_refs: Option<usize>,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub id_prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep corpus order instead of shuffling with the seed.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Training corpus, required to count OOVs of a dev or test corpus.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Generated references per example to measure (indices 1..=k).
    #[arg(long)]
    pub k_refs: Option<usize>,
    /// Output JSON file; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output multi-reference corpus.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output quality report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Candidates requested per example.
    #[arg(long)]
    pub k_refs: Option<usize>,
    #[arg(long)]
    pub client: Option<String>,
    /// Directory of prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub min_sem: Option<f64>,
    #[arg(long)]
    pub max_pwb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long)]
    pub hyps: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Variants per example.
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub client: Option<String>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate of the cosine schedule.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainS1Args {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Per-epoch JSONL log; defaults to `<model-out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// `expand_shuffle` or `sample_one`.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainS2Args {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub model_in: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Weight of the reinforcement term.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// `none` or `running_mean`.
    #[arg(long)]
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model_in: Option<PathBuf>,
    /// Corpus to decode (alias of --test).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output hypotheses file.
    #[arg(long)]
    pub hyps: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference corpus (alias of --test).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub hyps: Option<PathBuf>,
    /// Use only the first k hypotheses of every line.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Output report JSON; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files, optionally labelled as `label=path`.
    #[arg(long = "report", required = true)]
    pub reports: Vec<String>,
    /// Output text file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_optim(
    args: &OptimArgs,
    epochs: &mut usize,
    batch: &mut usize,
    lr: &mut f64,
    momentum: &mut f64,
    ls: &mut f64,
) {
    set(epochs, args.epochs);
    set(batch, args.batch_size);
    set(lr, args.lr);
    set(momentum, args.momentum);
    set(ls, args.label_smoothing);
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        let g = &self.global;
        set(&mut cfg.seed, g.seed);
        set_opt(&mut cfg.threads, g.threads);
        set(&mut cfg.scorer, g.scorer.clone());
        let p = &mut cfg.paths;
        match &self.command {
            Command::Synth(a) => {
                set_opt(&mut p.out, a.out.clone());
                set(&mut cfg.synth.num_examples, a.num_examples);
                set(&mut cfg.synth.refs_per_example, a.k_refs);
                set(&mut cfg.synth.split, a.split);
                set(&mut cfg.synth.id_prefix, a.id_prefix.clone());
            }
            Command::Expand(a) => {
                set_opt(&mut p.corpus, a.corpus.clone());
                set_opt(&mut p.out, a.out.clone());
            }
            Command::Stats(a) => {
                set_opt(&mut p.corpus, a.corpus.clone());
                set_opt(&mut p.train, a.train.clone());
                set_opt(&mut p.report, a.report.clone());
                set_opt(&mut cfg.stats_k, a.k_refs);
            }
            Command::Augment(a) => {
                set_opt(&mut p.corpus, a.corpus.clone());
                set_opt(&mut p.out, a.out.clone());
                set_opt(&mut p.report, a.report.clone());
                set_opt(&mut p.templates, a.templates.clone());
                set(&mut cfg.client, a.client.clone());
                set(&mut cfg.augment.k, a.k_refs);
                set(&mut cfg.augment.gate.min_sem, a.min_sem);
                set(&mut cfg.augment.gate.max_pwb, a.max_pwb);
                set(&mut cfg.augment.concurrency, g.threads);
            }
            Command::Rewrite(a) => {
                set_opt(&mut p.hyps, a.hyps.clone());
                set_opt(&mut p.out, a.out.clone());
                set_opt(&mut p.templates, a.templates.clone());
                set(&mut cfg.client, a.client.clone());
                set(&mut cfg.decode.k_out, a.topk);
            }
            Command::TrainS1(a) => {
                set_opt(&mut p.train, a.train.clone());
                set_opt(&mut p.dev, a.dev.clone());
                set_opt(&mut p.model_out, a.model_out.clone());
                set_opt(&mut p.log, a.log.clone());
                let s = &mut cfg.stage1;
                apply_optim(
                    &a.optim,
                    &mut s.epochs,
                    &mut s.batch_size,
                    &mut s.lr0,
                    &mut s.momentum,
                    &mut s.label_smoothing,
                );
                set(&mut s.strategy, a.strategy);
                set(&mut cfg.model.embed_dim, a.embed_dim);
                set(&mut cfg.model.hidden_dim, a.hidden_dim);
            }
            Command::TrainS2(a) => {
                set_opt(&mut p.train, a.train.clone());
                set_opt(&mut p.dev, a.dev.clone());
                set_opt(&mut p.model_in, a.model_in.clone());
                set_opt(&mut p.model_out, a.model_out.clone());
                set_opt(&mut p.log, a.log.clone());
                let s = &mut cfg.stage2;
                apply_optim(
                    &a.optim,
                    &mut s.epochs,
                    &mut s.batch_size,
                    &mut s.lr0,
                    &mut s.momentum,
                    &mut s.label_smoothing,
                );
                set(&mut s.beta, a.beta);
                set(&mut s.samples_per_source, a.samples);
                set(&mut s.baseline, a.baseline);
            }
            Command::Decode(a) => {
                set_opt(&mut p.model_in, a.model_in.clone());
                set_opt(&mut p.test, a.test.clone().or_else(|| a.corpus.clone()));
                set_opt(&mut p.hyps, a.hyps.clone());
                let d = &mut cfg.decode;
                set(&mut d.beam_width, a.beam);
                set(&mut d.num_groups, a.groups);
                set(&mut d.diversity_penalty, a.penalty);
                set(&mut d.k_out, a.topk);
                set(&mut d.max_len, a.max_len);
            }
            Command::Eval(a) => {
                set_opt(&mut p.test, a.test.clone().or_else(|| a.corpus.clone()));
                set_opt(&mut p.hyps, a.hyps.clone());
                set_opt(&mut p.report, a.report.clone());
            }
            Command::Report(a) => set_opt(&mut p.out, a.out.clone()),
        }
        // Synthesis and both stages share the global seed; each derives its own streams by name.
        cfg.synth.seed = cfg.seed;
        cfg.stage1.seed = cfg.seed;
        cfg.stage2.seed = cfg.seed;
        Ok(cfg)
    }
}

fn need<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::config(format!("{flag}: required for this command")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_hyps(path: &Path) -> Result<Vec<DecodeRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DecodeRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_hyps(path: &Path, records: &[DecodeRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn chat_client(cfg: &RunConfig) -> Result<(Box<dyn ChatClient>, PromptTemplates)> {
    let client = client_from_spec(&cfg.client, cfg.client_timeout())?;
    let templates = match &cfg.paths.templates {
        Some(dir) => PromptTemplates::from_dir(dir)?,
        None => PromptTemplates::default(),
    };
    Ok((client, templates))
}

fn log_path(cfg: &RunConfig, model_out: &Path) -> PathBuf {
    cfg.paths.log.clone().unwrap_or_else(|| {
        let mut s = model_out.as_os_str().to_owned();
        s.push(".log.jsonl");
        PathBuf::from(s)
    })
}

fn save_training(cfg: &RunConfig, model: &Translator, log: &TrainLog, out: &Path) -> Result<()> {
    save_checkpoint(model, out)?;
    log.save(&log_path(cfg, out))?;
    match log.best_epoch {
        Some(e) => log::info!("saved {} (best dev epoch {e})", out.display()),
        None => log::info!("saved {}", out.display()),
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let corpus = synth_fixture(&cfg.synth)?;
    corpus.save(need(&cfg.paths.out, "--out")?)
}

pub fn cmd_expand(cfg: &RunConfig, shuffle: bool) -> Result<()> {
    let corpus = Corpus::load(need(&cfg.paths.corpus, "--corpus")?, Split::Train)?;
    let pairs = expand_multiref(&corpus, shuffle.then(|| derive_seed(cfg.seed, "expand/shuffle")));
    let out = need(&cfg.paths.out, "--out")?;
    let mut w = create(out)?;
    for p in pairs {
        let ex = &corpus.examples()[p.example_index];
        let rec = CorpusRecord {
            id: format!("{}#{}", ex.id, p.ref_index),
            source: ex.source.clone(),
            references: vec![ex.references[p.ref_index].raw().to_owned()],
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

pub fn cmd_stats(cfg: &RunConfig, split: Split) -> Result<()> {
    let corpus = Corpus::load(need(&cfg.paths.corpus, "--corpus")?, split)?;
    let train = match &cfg.paths.train {
        Some(p) => Some(Corpus::load(p, Split::Train)?),
        None => None,
    };
    let scorer = scorer_from_spec(&cfg.scorer)?;
    let stats = compute_stats(&corpus, train.as_ref(), cfg.stats_k, scorer.as_ref())?;
    emit(cfg.paths.report.as_deref(), &to_json_pretty(&stats)?)
}

pub fn cmd_augment(cfg: &RunConfig) -> Result<()> {
    let corpus = Corpus::load(need(&cfg.paths.corpus, "--corpus")?, Split::Train)?;
    let out = need(&cfg.paths.out, "--out")?;
    let (client, templates) = chat_client(cfg)?;
    let scorer = scorer_from_spec(&cfg.scorer)?;
    let (augmented, report) =
        build_multiref_corpus(client.as_ref(), &templates, &corpus, &cfg.augment, scorer.as_ref())?;
    augmented.save(out)?;
    if report.flagged > 0 {
        log::warn!("{} of {} examples flagged", report.flagged, corpus.len());
    }
    emit(cfg.paths.report.as_deref(), &to_json_pretty(&report)?)
}

pub fn cmd_rewrite(cfg: &RunConfig) -> Result<()> {
    let records = read_hyps(need(&cfg.paths.hyps, "--hyps")?)?;
    let out = need(&cfg.paths.out, "--out")?;
    let (client, templates) = chat_client(cfg)?;
    let rewritten = rewrite_hypotheses(
        client.as_ref(),
        &templates,
        &records,
        cfg.decode.k_out,
        cfg.augment.max_retries,
    )?;
    write_hyps(out, &rewritten)
}

pub fn cmd_train_s1(cfg: &RunConfig) -> Result<()> {
    let train = Corpus::load(need(&cfg.paths.train, "--train")?, Split::Train)?;
    let dev = Corpus::load(need(&cfg.paths.dev, "--dev")?, Split::Dev)?;
    let out = need(&cfg.paths.model_out, "--model-out")?;
    let init = Translator::for_corpus(&train, &cfg.model_config())?;
    let (model, log) = train_stage1(&train, &dev, &init, &cfg.stage1)?;
    save_training(cfg, &model, &log, out)
}

pub fn cmd_train_s2(cfg: &RunConfig) -> Result<()> {
    let train = Corpus::load(need(&cfg.paths.train, "--train")?, Split::Train)?;
    let dev = Corpus::load(need(&cfg.paths.dev, "--dev")?, Split::Dev)?;
    let init = load_checkpoint(need(&cfg.paths.model_in, "--model-in")?)?;
    let out = need(&cfg.paths.model_out, "--model-out")?;
    let (model, log) = train_stage2(&train, &dev, &init, &cfg.stage2)?;
    save_training(cfg, &model, &log, out)
}

pub fn cmd_decode(cfg: &RunConfig) -> Result<()> {
    let model = load_checkpoint(need(&cfg.paths.model_in, "--model-in")?)?;
    let corpus = Corpus::load(need(&cfg.paths.test, "--test")?, Split::Test)?;
    let records = decode_corpus(&model, &corpus, &cfg.decode)?;
    write_hyps(need(&cfg.paths.hyps, "--hyps")?, &records)
}

/// Scores hypotheses aligned by id to the corpus; `topk` truncates every list.
pub fn eval_records(
    corpus: &Corpus,
    records: &[DecodeRecord],
    topk: Option<usize>,
    scorer: &dyn SemanticScorer,
) -> Result<MetricReport> {
    if records.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: corpus.len(),
        });
    }
    let mut hyps = Vec::with_capacity(records.len());
    for (i, (rec, ex)) in records.iter().zip(corpus.examples()).enumerate() {
        if rec.id != ex.id {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("hypotheses id `{}` does not match corpus id `{}`", rec.id, ex.id),
            });
        }
        let mut list = rec.sentences();
        if let Some(k) = topk {
            if k == 0 || k > list.len() {
                return Err(Error::KTooLarge {
                    requested: k,
                    available: list.len(),
                });
            }
            list.truncate(k);
        }
        hyps.push(list);
    }
    topk_report(&hyps, &corpus.refsets(), scorer, &BleuConfig::corpus())
}

pub fn cmd_eval(cfg: &RunConfig, topk: Option<usize>) -> Result<()> {
    let corpus = Corpus::load(need(&cfg.paths.test, "--test")?, Split::Test)?;
    let records = read_hyps(need(&cfg.paths.hyps, "--hyps")?)?;
    let scorer = scorer_from_spec(&cfg.scorer)?;
    let report = eval_records(&corpus, &records, topk, scorer.as_ref())?;
    emit(cfg.paths.report.as_deref(), &to_json_pretty(&report)?)
}

pub fn cmd_report(cfg: &RunConfig, inputs: &[String]) -> Result<()> {
    let mut rows = Vec::with_capacity(inputs.len());
    for spec in inputs {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_owned(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| spec.clone());
                (label, p)
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let report: MetricReport = serde_json::from_str(&text)?;
        rows.push((label, report));
    }
    emit(cfg.paths.out.as_deref(), &render_table(&rows))
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    cfg.validate()?;
    if cli.global.print_config {
        let text = toml::to_string(&cfg).map_err(|e| Error::config(format!("config: {e}")))?;
        return emit(None, &text);
    }
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, as in repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Expand(a) => cmd_expand(&cfg, !a.no_shuffle),
        Command::Stats(a) => cmd_stats(&cfg, a.split),
        Command::Augment(_) => cmd_augment(&cfg),
        Command::Rewrite(_) => cmd_rewrite(&cfg),
        Command::TrainS1(_) => cmd_train_s1(&cfg),
        Command::TrainS2(_) => cmd_train_s2(&cfg),
        Command::Decode(_) => cmd_decode(&cfg),
        Command::Eval(a) => cmd_eval(&cfg, a.topk),
        Command::Report(a) => cmd_report(&cfg, &a.reports),
    }
}

/// Machine-readable failure record written to stderr.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            error: e.kind().to_owned(),
            message: e.to_string(),
            fields: e.fields().to_vec(),
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let record = ErrorRecord::from(&e);
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}
