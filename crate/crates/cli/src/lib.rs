//! The `spel` command-line tool.

pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use spel_core::eval::{score, MatchMode};
use spel_core::io::{self, AnnotationRecord};
use spel_core::provider::FileFeatures;
use spel_core::{
    train_head, AnnotatedDocument, CandidateStore, EntityVocabulary, RedirectTable, StoreKind,
};
use spel_gerbil::AnnotationService;

use config::PipelineConfig;

/// A failure with the exit code it maps to: 2 for bad configuration or
/// input, 1 for a failure while running the pipeline.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<spel_core::Error> for CliError {
    fn from(e: spel_core::Error) -> Self {
        CliError {
            code: if e.is_input_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "spel", version, about = "Structured-prediction entity linking")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for linking; output order does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct VocabularyArg {
    /// Overrides the configured vocabulary file.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    El,
    Md,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link a corpus and write annotation records.
    Link {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        vocab: VocabularyArg,
    },
    /// Train the head on precomputed features.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory of `<doc id>.splm` feature matrices.
        #[arg(long)]
        features: PathBuf,
        /// Output weight file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        vocab: VocabularyArg,
    },
    /// Score annotation records against a gold corpus.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long, value_enum, default_value = "el")]
        mode: ModeArg,
        /// Restrict gold to this vocabulary (InKB scoring).
        #[arg(long)]
        vocabulary: Option<PathBuf>,
        /// Normalize gold entities with this redirect table first.
        #[arg(long, requires = "vocabulary")]
        redirects: Option<PathBuf>,
        /// Also write the report as a JSON record.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the NIF annotation service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[command(flatten)]
        vocab: VocabularyArg,
    },
    /// Collapse a context-aware candidate store to a surface-keyed one.
    ProjectCandidates {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Lowercase surfaces in the output store.
        #[arg(long)]
        case_insensitive: bool,
    },
    /// Rewrite gold and predicted entities of a corpus through a redirect table.
    NormalizeRedirects {
        #[arg(long)]
        redirects: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        vocab: VocabularyArg,
    },
}

fn load_config(cli: &Cli, vocab: Option<&VocabularyArg>) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(v) = vocab.and_then(|v| v.vocabulary.clone()) {
        config.vocabulary = Some(v);
    }
    Ok(config)
}

fn write_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.workers == 0 {
        return Err(CliError::input("--workers must be at least 1"));
    }
    match &cli.command {
        Command::Link {
            input,
            output,
            vocab,
        } => {
            let config = load_config(&cli, Some(vocab))?;
            link(&config, input, output, cli.workers)
        }
        Command::Train {
            corpus,
            features,
            out,
            validation,
            epochs,
            vocab,
        } => {
            let mut config = load_config(&cli, Some(vocab))?;
            if let Some(e) = epochs {
                config.training.epochs = *e;
            }
            train(&config, corpus, features, validation.as_deref(), out)
        }
        Command::Eval {
            gold,
            predicted,
            mode,
            vocabulary,
            redirects,
            report,
        } => {
            let mode = match mode {
                ModeArg::El => MatchMode::El,
                ModeArg::Md => MatchMode::Md,
            };
            eval(
                gold,
                predicted,
                mode,
                vocabulary.as_deref(),
                redirects.as_deref(),
                report.as_deref(),
            )
        }
        Command::Serve { bind, vocab } => {
            let config = load_config(&cli, Some(vocab))?;
            serve(&config, bind.as_deref())
        }
        Command::ProjectCandidates {
            input,
            output,
            case_insensitive,
        } => project_candidates(input, output, !case_insensitive),
        Command::NormalizeRedirects {
            redirects,
            input,
            output,
            vocab,
        } => {
            let config = load_config(&cli, Some(vocab))?;
            normalize_redirects(&config, redirects, input, output)
        }
    }
}

pub fn link(
    config: &PipelineConfig,
    input: &Path,
    output: &Path,
    workers: usize,
) -> Result<(), CliError> {
    let linker = config.linker()?;
    let docs = io::read_corpus(input)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let started = Instant::now();
    let results: Vec<_> = pool.install(|| docs.par_iter().map(|d| linker.link(d)).collect());
    let elapsed = started.elapsed().as_secs_f64();
    let mut records = Vec::new();
    for (doc, result) in docs.iter().zip(results) {
        let predictions =
            result.map_err(|e| CliError::from(e).prefixed(&format!("document {:?}", doc.id)))?;
        records.extend(
            predictions
                .iter()
                .map(|p| AnnotationRecord::new(doc.id.clone(), p)),
        );
    }
    io::write_annotations(output, &records)?;
    let n = docs.len();
    let (per_second, per_doc) = if n == 0 || elapsed == 0.0 {
        (0.0, 0.0)
    } else {
        (n as f64 / elapsed, elapsed / n as f64)
    };
    println!(
        "linked {n} documents ({} annotations) in {elapsed:.3} s: {per_second:.1} documents/s, {per_doc:.6} s/document",
        records.len()
    );
    Ok(())
}

impl CliError {
    fn prefixed(self, context: &str) -> Self {
        CliError {
            code: self.code,
            message: format!("{context}: {}", self.message),
        }
    }
}

fn prepare(
    docs: Vec<AnnotatedDocument>,
    config: &PipelineConfig,
) -> Result<Vec<AnnotatedDocument>, CliError> {
    let lexicon = config.lexicon()?;
    let tokenizer = config.tokenizer(&lexicon);
    docs.into_iter()
        .map(|mut d| {
            if d.tokens.is_empty() {
                let mentions = (config.tokenizer.mode == spel_core::TokenizationMode::MentionAware)
                    .then_some(&d.gold[..]);
                d.tokens = tokenizer.tokenize(&d.text, config.tokenizer.mode, mentions)?;
            }
            Ok(d)
        })
        .collect()
}

pub fn train(
    config: &PipelineConfig,
    corpus: &Path,
    features: &Path,
    validation: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    config.chunking.validate()?;
    let vocab = config.vocabulary()?;
    let docs = prepare(io::read_corpus(corpus)?, config)?;
    let validation = validation
        .map(|p| prepare(io::read_corpus(p)?, config))
        .transpose()?;
    let first = docs.first().ok_or_else(|| {
        CliError::input(format!("{}: training corpus is empty", corpus.display()))
    })?;
    let provider = FileFeatures::probe(features, first)?;
    let trained = train_head(
        &provider,
        &docs,
        validation.as_deref(),
        &vocab,
        &config.chunking,
        &config.training(),
    )?;
    for e in &trained.epochs {
        eprintln!(
            "epoch {}: mean loss {:.6}, validation subword F1 {:.4}{}",
            e.epoch + 1,
            e.mean_loss,
            e.validation_f1,
            if e.improved { " (best so far)" } else { "" }
        );
    }
    if trained.stopped_early {
        eprintln!(
            "stopped early after {} epochs without improvement",
            config.training.patience
        );
    } else {
        eprintln!("completed {} epochs", trained.epochs.len());
    }
    trained.weights.save(out)?;
    println!(
        "wrote {}x{} head weights to {}",
        trained.weights.dim(),
        trained.weights.vocab_size(),
        out.display()
    );
    Ok(())
}

pub fn eval(
    gold: &Path,
    predicted: &Path,
    mode: MatchMode,
    vocabulary: Option<&Path>,
    redirects: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let mut gold_docs = io::read_corpus(gold)?;
    let records = io::read_annotations(predicted)?;
    let vocab = vocabulary.map(EntityVocabulary::load).transpose()?;
    if let (Some(path), Some(vocab)) = (redirects, &vocab) {
        let (table, _) = RedirectTable::load(path, vocab)?;
        for d in &mut gold_docs {
            table.normalize_in_place(&mut d.gold);
        }
    }
    let result = score(
        &gold_docs,
        &io::group_annotations(&records),
        mode,
        vocab.as_ref(),
    )?;
    print!("{}", result.to_table());
    if let Some(path) = report {
        let mut line =
            serde_json::to_string(&result).map_err(|e| CliError::runtime(e.to_string()))?;
        line.push('\n');
        std::fs::write(path, line).map_err(|e| write_error(path, e))?;
    }
    Ok(())
}

pub fn serve(config: &PipelineConfig, bind: Option<&str>) -> Result<(), CliError> {
    let linker = config.linker()?;
    let bind = bind.unwrap_or(&config.service.bind);
    let addr = bind
        .parse()
        .map_err(|e| CliError::input(format!("bad bind address {bind:?}: {e}")))?;
    let service = Arc::new(AnnotationService::new(
        linker,
        config.service.kb_prefix.clone(),
    ));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime(e.to_string()))?;
    eprintln!("serving on http://{addr}/annotate");
    runtime
        .block_on(spel_gerbil::serve(service, addr))
        .map_err(|e| CliError::runtime(format!("{addr}: {e}")))
}

pub fn project_candidates(
    input: &Path,
    output: &Path,
    case_sensitive: bool,
) -> Result<(), CliError> {
    let store = CandidateStore::load(input, StoreKind::ContextAware, case_sensitive)?;
    let projected = store.project_context_agnostic();
    std::fs::write(output, projected.to_tsv()).map_err(|e| write_error(output, e))?;
    let (before, after) = (store.stats(), projected.stats());
    println!(
        "{} occurrences (mean {:.2} candidates) -> {} surfaces (mean {:.2} candidates)",
        before.entries, before.mean_list_len, after.entries, after.mean_list_len
    );
    Ok(())
}

pub fn normalize_redirects(
    config: &PipelineConfig,
    redirects: &Path,
    input: &Path,
    output: &Path,
) -> Result<(), CliError> {
    let vocab = config.vocabulary()?;
    let (table, dropped) = RedirectTable::load(redirects, &vocab)?;
    let mut docs = io::read_corpus(input)?;
    let mut changed = 0;
    for d in &mut docs {
        for span in d.gold.iter_mut().chain(d.predicted.iter_mut()) {
            let target = table.resolve(&span.entity);
            if target != span.entity {
                span.entity = target.to_string();
                changed += 1;
            }
        }
    }
    io::write_corpus(output, &docs)?;
    println!(
        "{} redirects kept, {dropped} dropped; {changed} annotations rewritten",
        table.len()
    );
    Ok(())
}
