//! `rdf2vec`: walk a knowledge graph, train embeddings, evaluate and inspect
//! them.

mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;

use rdf2vec::eval::{
    cluster_evaluate, evaluate_analogies, knn_evaluate, nearest, AnalogySet, KnnTask,
    LabeledDataset,
};
use rdf2vec::train::write_loss_trace;
use rdf2vec::vocab::{DEFAULT_POWER, DEFAULT_TABLE_SIZE};
use rdf2vec::{
    generate_walks, import_text, train, write_walks, Embeddings, KnowledgeGraph, Mode,
    NegativeTable, TrainConfig, Vocabulary, WalkConfig,
};

#[derive(Parser)]
#[command(
    name = "rdf2vec",
    version,
    about = "RDF2vec walks and classic or order-aware skip-gram embeddings"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random walks from every entity of an N-Triples graph.
    Walk(WalkArgs),
    /// Train embeddings on a walk file and export them as text.
    Train(TrainArgs),
    /// Score exported embeddings on a labeled or analogy dataset.
    Eval(EvalArgs),
    /// List the tokens closest to a token by cosine similarity.
    Nearest(NearestArgs),
}

#[derive(Args)]
struct ConfigFile {
    /// key=value file of defaults; command-line flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct WalkArgs {
    /// N-Triples input (gzip if the name ends in .gz)
    graph: PathBuf,
    /// Walk file to write, one walk per line
    out: PathBuf,
    /// Walks per entity [RDF2vec: 500]
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    walks: u64,
    /// Entity hops per walk [RDF2vec: 4]
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; output is identical for any value
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    #[command(flatten)]
    config: ConfigFile,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Classic,
    Ordered,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Classic => Mode::Classic,
            ModeArg::Ordered => Mode::Ordered,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Walk file produced by `rdf2vec walk`
    walks: PathBuf,
    /// Embedding file to write
    out: PathBuf,
    /// classic: one output matrix; ordered: one per window offset
    #[arg(long, value_enum, default_value_t = ModeArg::Classic)]
    mode: ModeArg,
    /// Embedding dimension [RDF2vec: 100 or 200]
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Context window on each side [RDF2vec: 5]
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    /// Negative samples per positive pair
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    negatives: u64,
    /// Initial learning rate, decayed linearly
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; results are reproducible only with 1
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Drop tokens seen fewer times than this
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    /// Frequent-token subsampling threshold; 0 disables it
    #[arg(long, default_value_t = 0.0)]
    sample: f64,
    /// Slots in the negative-sampling table
    #[arg(long, default_value_t = DEFAULT_TABLE_SIZE as u64, value_parser = clap::value_parser!(u64).range(1..))]
    table_size: u64,
    /// Use the full window for every center token in classic mode
    #[arg(long)]
    no_dynamic_window: bool,
    /// Also write the vocabulary as token<TAB>count lines
    #[arg(long, value_name = "FILE")]
    vocab_out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigFile,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Analogy,
    Cluster,
    Classify,
    Regress,
}

#[derive(Args)]
struct EvalArgs {
    /// Embedding file
    model: PathBuf,
    #[arg(value_enum)]
    task: Task,
    /// Analogy lines `a b c d`, or `entity<TAB>label` records
    dataset: PathBuf,
    /// Neighbours for classify/regress (default 3); clusters for cluster
    /// (default: number of labels)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Seed for k-means initialisation
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    config: ConfigFile,
}

#[derive(Args)]
struct NearestArgs {
    /// Embedding file
    model: PathBuf,
    token: String,
    /// Number of neighbours to list
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[command(flatten)]
    config: ConfigFile,
}

/// Write through a temporary file in the target directory and rename it into
/// place, so a failure never leaves a partial file at `path`.
fn write_atomically<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_vectors(path: &Path) -> Result<Embeddings> {
    import_text(open(path)?).with_context(|| format!("reading embeddings from {}", path.display()))
}

fn cmd_walk(args: WalkArgs) -> Result<()> {
    let config = WalkConfig {
        walks_per_node: args.walks as usize,
        depth: args.depth as usize,
        seed: args.seed,
        threads: args.threads as usize,
    };
    eprintln!(
        "walks={} depth={} seed={} threads={}",
        config.walks_per_node, config.depth, config.seed, config.threads
    );
    let graph = KnowledgeGraph::from_path(&args.graph)
        .with_context(|| format!("loading {}", args.graph.display()))?;
    eprintln!(
        "entities={} predicates={} edges={} literals={}",
        graph.entity_count(),
        graph.predicate_count(),
        graph.edge_count(),
        graph.literal_count()
    );
    let corpus = generate_walks(&graph, &config)?;
    write_atomically(
        &args.out,
        |w| Ok(write_walks(&graph, &corpus, w).map(drop)?),
    )?;
    eprintln!("wrote {} walks to {}", corpus.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = TrainConfig {
        mode: args.mode.into(),
        dimension: args.dim as usize,
        window: args.window as usize,
        epochs: args.epochs as usize,
        negatives: args.negatives as usize,
        initial_lr: args.lr,
        seed: args.seed,
        dynamic_window: !args.no_dynamic_window,
        threads: args.threads as usize,
        sample: args.sample,
        shared_output: false,
    };
    config.validate()?;
    eprintln!(
        "mode={} dim={} window={} epochs={} negatives={} lr={} seed={} threads={}",
        config.mode,
        config.dimension,
        config.window,
        config.epochs,
        config.negatives,
        config.initial_lr,
        config.seed,
        config.threads
    );
    let vocab = Vocabulary::build(open(&args.walks)?, args.min_count)
        .with_context(|| format!("building the vocabulary from {}", args.walks.display()))?;
    let table = NegativeTable::new(&vocab, DEFAULT_POWER, args.table_size as usize)?;
    eprintln!("vocabulary={} tokens={}", vocab.len(), vocab.total_tokens());
    if let Some(path) = &args.vocab_out {
        write_atomically(path, |w| Ok(vocab.write_counts(w)?))?;
    }
    let out = train(args.walks.as_path(), &vocab, &table, &config)?;
    write_loss_trace(&out.epoch_losses, io::stderr().lock())?;
    write_atomically(&args.out, |w| {
        Ok(rdf2vec::export_text(&out.model, &vocab, w).map(drop)?)
    })?;
    eprintln!("wrote {} vectors to {}", vocab.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let vectors = load_vectors(&args.model)?;
    let data = open(&args.dataset)?;
    let context = || format!("reading {}", args.dataset.display());
    let mut out = io::stdout().lock();
    match args.task {
        Task::Analogy => {
            let set = AnalogySet::parse(data).with_context(context)?;
            let report = evaluate_analogies(&vectors, &set)?;
            writeln!(out, "accuracy\t{:.6}", report.accuracy)?;
            writeln!(out, "oov\t{}", report.oov)?;
        }
        Task::Cluster => {
            let set = LabeledDataset::parse(data).with_context(context)?;
            let (acc, oov) =
                cluster_evaluate(&vectors, &set, args.k.map(|k| k as usize), args.seed)?;
            writeln!(out, "acc\t{acc:.6}")?;
            writeln!(out, "oov\t{oov}")?;
        }
        Task::Classify | Task::Regress => {
            let set = LabeledDataset::parse(data).with_context(context)?;
            let (task, name) = match args.task {
                Task::Classify => (KnnTask::Classify, "accuracy"),
                _ => (KnnTask::Regress, "rmse"),
            };
            let report = knn_evaluate(&vectors, &set, args.k.unwrap_or(3) as usize, task)?;
            writeln!(out, "{name}\t{:.6}", report.metric)?;
            writeln!(out, "oov\t{}", report.oov)?;
        }
    }
    Ok(())
}

/// Tokens that look like `token`, best first.
fn close_spellings<'a>(vectors: &'a Embeddings, token: &str, n: usize) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = vectors
        .tokens()
        .iter()
        .map(|t| (strsim::jaro_winkler(token, t), t.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, t)| t).collect()
}

fn cmd_nearest(args: NearestArgs) -> Result<()> {
    let vectors = load_vectors(&args.model)?;
    if vectors.index_of(&args.token).is_none() {
        let suggestions = close_spellings(&vectors, &args.token, 5);
        if suggestions.is_empty() {
            bail!("unknown token {:?}; the model is empty", args.token);
        }
        bail!(
            "unknown token {:?}; did you mean:\n  {}",
            args.token,
            suggestions.join("\n  ")
        );
    }
    let mut out = io::stdout().lock();
    for (token, sim) in nearest(&vectors, &args.token, args.k as usize)? {
        writeln!(out, "{token}\t{sim:.6}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Walk(a) => cmd_walk(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Nearest(a) => cmd_nearest(a),
    }
}

fn flag_names() -> Vec<(String, Vec<String>)> {
    Cli::command()
        .get_subcommands()
        .map(|sub| {
            let longs = sub
                .get_arguments()
                .filter_map(|a| a.get_long())
                .filter(|l| *l != "config" && *l != "help")
                .map(str::to_owned)
                .collect();
            (sub.get_name().to_owned(), longs)
        })
        .collect()
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect(), &flag_names()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
