//! Command-line workflows: train, parse, eval and oracle-check.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::Config;
use crate::decoders::{DecoderKind, DecoderSpec, HistoryMode};
use crate::eval::score_corpus;
use crate::model::Model;
use crate::oracle::{check_trees, Interpretation};
use crate::synth::{pcfg_treebank, random_tree};
use crate::training::{stream, train, EpochLog, INIT_STREAM};
use crate::treebank::{parse_sexpr, read_treebank, render_sexpr, Normalization, Tree};
use crate::vocab::Vocab;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "chartparse", version, about = "Span-based chart constituency parser")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a bracketed treebank.
    Train(TrainArgs),
    /// Parse sentences with a trained model.
    Parse(ParseArgs),
    /// Score predicted trees against gold trees.
    Eval(EvalArgs),
    /// Validate the training oracles on random trees.
    OracleCheck(OracleArgs),
    /// Write a synthetic treebank sampled from a small grammar.
    Generate(GenerateArgs),
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Training treebank, one tree per line.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Development treebank.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub decoder: Option<DecoderKind>,
    #[arg(long)]
    pub history: Option<HistoryMode>,
    /// Follow model decisions during training.
    #[arg(long)]
    pub explore: bool,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training log (defaults to the model path with `.log` appended).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Extra `key=value` overrides applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, clap::Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Bracketed trees or `word/TAG` token lines.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "inorder")]
    pub decoder: DecoderKind,
    /// History threading; defaults to the model's own mode.
    #[arg(long)]
    pub history: Option<HistoryMode>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct OracleArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_len: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trees: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "strict")]
    pub interpretation: Interpretation,
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub sentences: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

impl clap::ValueEnum for DecoderKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[DecoderKind::Cky, DecoderKind::TopDown, DecoderKind::InOrder]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            DecoderKind::Cky => "cky",
            DecoderKind::TopDown => "topdown",
            DecoderKind::InOrder => "inorder",
        }))
    }
}

impl clap::ValueEnum for HistoryMode {
    fn value_variants<'a>() -> &'a [Self] {
        &[HistoryMode::None, HistoryMode::Chain, HistoryMode::Stack]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            HistoryMode::None => "none",
            HistoryMode::Chain => "chain",
            HistoryMode::Stack => "stack",
        }))
    }
}

impl clap::ValueEnum for Interpretation {
    fn value_variants<'a>() -> &'a [Self] {
        &[Interpretation::Strict, Interpretation::Inclusive]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Interpretation::Strict => "strict",
            Interpretation::Inclusive => "inclusive",
        }))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Parse(args) => cmd_parse(args),
        Command::Eval(args) => cmd_eval(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = Cli::command().error(ErrorKind::ArgumentConflict, msg).print();
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_trees(path: &Path) -> Result<Vec<Tree>, Error> {
    read_treebank(&read_file(path)?, &Normalization::default()).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

fn resolve_train_config(args: &TrainArgs) -> Result<Config, Failure> {
    let base = match &args.config {
        Some(path) => Config::parse(&read_file(path)?).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Config::default(),
    };
    let mut overrides = Vec::new();
    if let Some(p) = &args.train {
        overrides.push(format!("train = {}", p.display()));
    }
    if let Some(p) = &args.dev {
        overrides.push(format!("dev = {}", p.display()));
    }
    if let Some(p) = &args.model_out {
        overrides.push(format!("model_out = {}", p.display()));
    }
    if let Some(p) = &args.log {
        overrides.push(format!("log = {}", p.display()));
    }
    if let Some(d) = args.decoder {
        overrides.push(format!("decoder = {d}"));
    }
    if let Some(h) = args.history {
        overrides.push(format!("history = {h}"));
    }
    if args.explore {
        overrides.push("explore = true".into());
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed = {s}"));
    }
    if let Some(e) = args.epochs {
        overrides.push(format!("epochs = {e}"));
    }
    overrides.extend(args.set.iter().cloned());
    let config = base
        .apply(overrides.iter().map(String::as_str))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if config.train.is_none() {
        return Err(Failure::Usage("the following required argument was not provided: --train <TRAIN>".into()));
    }
    if config.model_out.is_none() {
        return Err(Failure::Usage("the following required argument was not provided: --model-out <MODEL_OUT>".into()));
    }
    config.train_config().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<i32, Failure> {
    let config = resolve_train_config(&args)?;
    let train_cfg = config.train_config()?;
    let model_out = config.model_out.clone().expect("checked");
    let log_path = config.log.clone().unwrap_or_else(|| {
        let mut p = model_out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    let corpus = read_trees(config.train.as_deref().expect("checked"))?;
    let dev = match &config.dev {
        Some(p) => read_trees(p)?,
        None => Vec::new(),
    };
    if corpus.is_empty() {
        return Err(Error::Config("the training treebank is empty".into()).into());
    }
    let io_err = |source| Error::Io {
        path: log_path.display().to_string(),
        source,
    };
    let mut log = fs::File::create(&log_path).map_err(io_err)?;
    write!(log, "{config}\n{}\n", EpochLog::HEADER).map_err(io_err)?;
    eprint!("{config}");

    let vocab = Vocab::build(&corpus);
    let mut model = Model::new(vocab, config.model_config(), &mut stream(config.seed, INIT_STREAM))?;
    eprintln!("parameters: {}", model.store.num_scalars());
    let mut log_error = None;
    let outcome = train(&mut model, &corpus, &dev, &train_cfg, |entry: &EpochLog| {
        let line = entry.line();
        eprintln!("{line}");
        if log_error.is_none() {
            log_error = writeln!(log, "{line}").and_then(|_| log.flush()).err();
        }
    })?;
    if let Some(source) = log_error {
        return Err(io_err(source).into());
    }
    if let (Some(f1), Some(epoch)) = (outcome.best_dev_f1, outcome.best_epoch) {
        let line = format!("best dev F1 {f1:.2} at epoch {epoch}");
        eprintln!("{line}");
        writeln!(log, "# {line}").map_err(io_err)?;
    }
    if let Some(epoch) = outcome.target_epoch {
        let line = format!("training F1 target reached at epoch {epoch}");
        eprintln!("{line}");
        writeln!(log, "# {line}").map_err(io_err)?;
    }
    model.save(&model_out)?;
    Ok(0)
}

/// Words and tags of one input line: a bracketed tree or `word/TAG` tokens.
fn sentence_of(line: &str, number: usize) -> Result<(Vec<String>, Vec<String>), Error> {
    if line.starts_with('(') {
        let tree = parse_sexpr(line).map_err(|e| Error::Model(format!("line {number}: {e}")))?;
        return Ok((tree.words(), tree.tags()));
    }
    let mut words = Vec::new();
    let mut tags = Vec::new();
    for token in line.split_whitespace() {
        let (w, t) = token
            .rsplit_once('/')
            .filter(|(w, t)| !w.is_empty() && !t.is_empty())
            .ok_or_else(|| Error::Model(format!("line {number}: token {token:?} is not word/TAG")))?;
        words.push(w.to_string());
        tags.push(t.to_string());
    }
    Ok((words, tags))
}

fn cmd_parse(args: ParseArgs) -> Result<i32, Failure> {
    let model = Model::load(&args.model)?;
    let history = match args.decoder {
        DecoderKind::Cky => HistoryMode::None,
        _ => args.history.unwrap_or(model.config.history),
    };
    let spec = DecoderSpec::new(args.decoder, history).map_err(|e| Failure::Usage(e.to_string()))?;
    let text = read_file(&args.input)?;
    let sentences = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| sentence_of(l.trim(), n + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let started = Instant::now();
    let run = || -> Result<Vec<String>, Error> {
        sentences
            .par_iter()
            .map(|(w, t)| Ok(render_sexpr(&model.parse(w, t, spec)?)?))
            .collect()
    };
    let lines = match args.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let seconds = started.elapsed().as_secs_f64();
    let mut out = String::new();
    for line in &lines {
        out.push_str(line);
        out.push('\n');
    }
    write_file(&args.output, &out)?;
    let rate = if seconds > 0.0 { lines.len() as f64 / seconds } else { 0.0 };
    eprintln!("parsed {} sentences in {seconds:.3}s ({rate:.1} sents/sec)", lines.len());
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<i32, Failure> {
    let gold = read_trees(&args.gold)?;
    let pred = read_trees(&args.pred)?;
    let report = score_corpus(&gold, &pred)?;
    println!("{report}");
    Ok(0)
}

fn cmd_oracle_check(args: OracleArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let mut rng = stream(args.seed, 0);
    let trees: Vec<Tree> = (0..args.trees).map(|_| random_tree(&mut rng, args.max_len as usize)).collect();
    let report = check_trees(&trees, args.interpretation);
    println!("{report}");
    println!("seconds: {:.1}", started.elapsed().as_secs_f64());
    let mut stdout = std::io::stdout();
    let _ = stdout.flush();
    Ok(if report.violations() == 0 { 0 } else { 1 })
}

fn cmd_generate(args: GenerateArgs) -> Result<i32, Failure> {
    let mut rng = stream(args.seed, 0);
    let mut out = String::new();
    for tree in pcfg_treebank(&mut rng, args.sentences) {
        out.push_str(&render_sexpr(&tree).map_err(Error::from)?);
        out.push('\n');
    }
    write_file(&args.output, &out)?;
    Ok(0)
}
