//! Command-line surface: fit models, evaluate them, inspect topics and
//! build or check word graphs.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use grlda::corpus::{self, Corpus, CorpusFormat, Vocabulary};
use grlda::eval::{pair_metrics, proportions_from_gamma, top_words, tune_metric_m};
use grlda::graph::{self, WordGraph};
use grlda::lda::e_step_corpus;
use grlda::model_io::{load_model, save_model};
use grlda::wr::{fit, FitConfig, FitResult};
use grlda::Error;

#[derive(Parser)]
#[command(
    name = "grlda",
    version,
    about = "Topic modeling with graph-regularized topics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write model, gamma, trace and manifest files.
    Fit(FitArgs),
    /// Evaluate a fitted model against document annotations.
    Eval(EvalArgs),
    /// Print the top words of each topic.
    Topics(TopicsArgs),
    /// Build, validate or summarize word graphs.
    Graph(GraphArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file.
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus format: bow or token-lines.
    #[arg(long, default_value = "token-lines")]
    format: String,
    /// Optional `token<TAB>lang` file attaching language tags.
    #[arg(long)]
    langs: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Number of topics K.
    #[arg(long)]
    topics: usize,
    /// Tradeoff between likelihood and graph loss, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Raw weight pair `WL,WR` overriding --lambda for wide sweeps.
    #[arg(long)]
    raw_weights: Option<String>,
    /// Smoothing mix in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Topic-word pseudocount.
    #[arg(long, default_value_t = 1e-8)]
    eta: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// EM iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// EM relative-objective tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Word-graph edge list (`token1<TAB>token2<TAB>weight`).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Keep only graph edges whose endpoints differ in language.
    #[arg(long)]
    cross_lingual_only: bool,
    /// Stopword file applied before fitting.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Drop tokens with total corpus count below this.
    #[arg(long, default_value_t = 0)]
    min_count: u64,
    /// Drop tokens appearing in more than this fraction of documents.
    #[arg(long, default_value_t = 1.0)]
    max_doc_frac: f64,
    /// E-step worker threads (1 = deterministic reference mode).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Paired-document distances (uses `#pair=` annotations).
    #[arg(long)]
    pairs: bool,
    /// Label-separation score (uses `#label=` annotations).
    #[arg(long)]
    labels: bool,
    /// Write per-pair detail CSV here.
    #[arg(long)]
    detail: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Words per topic.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Emit CSV (`topic,rank,token,probability`) instead of aligned text.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct GraphArgs {
    #[command(subcommand)]
    command: GraphCommand,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Turn a `source<TAB>target` dictionary into a unit-weight edge list.
    BuildDict {
        #[arg(long)]
        dict: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an edge list for unknown tokens, negative weights and
    /// conflicting duplicates.
    Validate {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Report edge count, degree histogram and cross-lingual fraction.
    Stats {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Topics(args) => cmd_topics(args),
        Command::Graph(args) => cmd_graph(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Parse { .. } | Error::Validation(_) | Error::Io(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn load_annotated_corpus(args: &CorpusArgs) -> Result<Corpus, Error> {
    let format: CorpusFormat = args.format.parse()?;
    let mut corpus = corpus::load_corpus(&args.corpus, format)?;
    if let Some(langs) = &args.langs {
        corpus.vocab.set_langs_from_file(langs)?;
    }
    Ok(corpus)
}

fn with_workers<T>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    if workers == 0 {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn sha256_hex(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let raw_weights = match &args.raw_weights {
        Some(s) => {
            let (wl, wr) = s
                .split_once(',')
                .ok_or_else(|| Error::Config("--raw-weights expects `WL,WR`".into()))?;
            let wl: f64 = wl
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad raw weight '{wl}'")))?;
            let wr: f64 = wr
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad raw weight '{wr}'")))?;
            Some((wl, wr))
        }
        None => None,
    };
    let config = FitConfig {
        n_topics: args.topics,
        lambda: args.lambda,
        raw_weights,
        rho: args.rho,
        eta: args.eta,
        em_tol: args.tol,
        max_em_iter: args.max_iters,
        seed: args.seed,
        ..FitConfig::default()
    };
    config.validate()?;

    let t0 = Instant::now();
    let mut corpus = load_annotated_corpus(&args.corpus)?;
    let stopwords = match &args.stopwords {
        Some(p) => corpus::load_stopwords(p)?,
        None => Default::default(),
    };
    if !stopwords.is_empty() || args.min_count > 0 || args.max_doc_frac < 1.0 {
        let (filtered, report) =
            corpus::preprocess(&corpus, &stopwords, args.min_count, args.max_doc_frac)?;
        if !report.dropped_docs.is_empty() {
            eprintln!(
                "warning: dropped {} empty documents after filtering: {:?}",
                report.dropped_docs.len(),
                report.dropped_docs
            );
        }
        corpus = filtered;
    }

    let graph = match &args.graph {
        Some(p) => {
            let g = graph::load_graph(p, &corpus.vocab)?;
            if args.cross_lingual_only {
                graph::restrict_cross_lingual(&g, &corpus.vocab)?
            } else {
                g
            }
        }
        None => {
            let (_, wr) = config.weights();
            if wr > 0.0 {
                eprintln!("warning: empty graph: loss is identically zero; fitting standard LDA");
            }
            WordGraph::empty(corpus.n_words())
        }
    };
    let load_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let result = with_workers(args.workers, || fit(&corpus, &graph, &config))??;
    let fit_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    fs::create_dir_all(&args.out)?;
    save_model(args.out.join("model.bin"), &result.params, &corpus.vocab)?;
    write_gamma_csv(&args.out.join("gamma.csv"), &result)?;
    write_trace_csv(&args.out.join("trace.csv"), &result)?;
    write_manifest(&args, &config, load_seconds, fit_seconds, t2)?;

    let last = result.trace.last().expect("nonempty trace");
    println!(
        "fit: {} docs, V={}, K={}, {} EM iterations, O={}",
        corpus.n_docs(),
        corpus.n_words(),
        config.n_topics,
        result.trace.len(),
        last.objective
    );
    Ok(())
}

fn write_gamma_csv(path: &Path, result: &FitResult) -> Result<(), Error> {
    let mut f = fs::File::create(path)?;
    let k = result.params.alpha.len();
    let header: Vec<String> = (0..k).map(|i| format!("k{i}")).collect();
    writeln!(f, "doc,{}", header.join(","))?;
    for (d, row) in result.state.gamma.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(f, "{d},{}", vals.join(","))?;
    }
    Ok(())
}

fn write_trace_csv(path: &Path, result: &FitResult) -> Result<(), Error> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "iter,L,R,O,delta")?;
    for row in &result.trace {
        writeln!(
            f,
            "{},{},{},{},{}",
            row.iter, row.bound, row.loss, row.objective, row.delta
        )?;
    }
    Ok(())
}

fn write_manifest(
    args: &FitArgs,
    config: &FitConfig,
    load_seconds: f64,
    fit_seconds: f64,
    write_start: Instant,
) -> Result<(), Error> {
    let mut inputs = serde_json::Map::new();
    let mut add_input = |name: &str, path: &Path| -> Result<(), Error> {
        inputs.insert(
            name.to_string(),
            serde_json::json!({
                "path": path.display().to_string(),
                "sha256": sha256_hex(path)?,
            }),
        );
        Ok(())
    };
    add_input("corpus", &args.corpus.corpus)?;
    if let Some(p) = &args.graph {
        add_input("graph", p)?;
    }
    if let Some(p) = &args.stopwords {
        add_input("stopwords", p)?;
    }
    if let Some(p) = &args.corpus.langs {
        add_input("langs", p)?;
    }
    let manifest = serde_json::json!({
        "engine": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "config": {
            "topics": config.n_topics,
            "lambda": config.lambda,
            "raw_weights": config.raw_weights,
            "rho": config.rho,
            "eta": config.eta,
            "e_tol": config.e_tol,
            "em_tol": config.em_tol,
            "max_e_iter": config.max_e_iter,
            "max_em_iter": config.max_em_iter,
            "max_smooth_iter": config.max_smooth_iter,
            "format": args.corpus.format,
            "cross_lingual_only": args.cross_lingual_only,
            "min_count": args.min_count,
            "max_doc_frac": args.max_doc_frac,
            "workers": args.workers,
        },
        "inputs": inputs,
        "timings_seconds": {
            "load": load_seconds,
            "fit": fit_seconds,
            "write": write_start.elapsed().as_secs_f64(),
        },
    });
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(())
}

/// Remap a corpus onto a model vocabulary, dropping unknown tokens.
fn align_corpus_to_vocab(corpus: &Corpus, vocab: &Vocabulary) -> Result<Corpus, Error> {
    if corpus.vocab == *vocab {
        return Ok(corpus.clone());
    }
    let mut docs = Vec::with_capacity(corpus.docs.len());
    for (d, doc) in corpus.docs.iter().enumerate() {
        let mut words: Vec<(usize, u32)> = doc
            .words
            .iter()
            .filter_map(|&(w, c)| vocab.id(corpus.vocab.token(w)).map(|id| (id, c)))
            .collect();
        words.sort_unstable_by_key(|&(w, _)| w);
        if words.is_empty() {
            return Err(Error::Validation(format!(
                "document {d} shares no tokens with the model vocabulary"
            )));
        }
        docs.push(grlda::corpus::Document {
            words,
            label: doc.label,
            pair: doc.pair,
        });
    }
    Ok(Corpus {
        vocab: vocab.clone(),
        docs,
    })
}

fn pairs_from_annotations(corpus: &Corpus) -> Result<Vec<(usize, usize)>, Error> {
    let mut groups: HashMap<i64, Vec<usize>> = HashMap::new();
    for (d, doc) in corpus.docs.iter().enumerate() {
        if let Some(p) = doc.pair {
            groups.entry(p).or_default().push(d);
        }
    }
    if groups.is_empty() {
        return Err(Error::Validation(
            "corpus carries no #pair annotations".into(),
        ));
    }
    let mut keys: Vec<i64> = groups.keys().copied().collect();
    keys.sort_unstable();
    let mut pairs = Vec::new();
    for key in keys {
        let docs = &groups[&key];
        if docs.len() == 2 {
            pairs.push((docs[0], docs[1]));
        } else {
            eprintln!(
                "warning: pair id {key} has {} documents, expected 2; skipped",
                docs.len()
            );
        }
    }
    if pairs.is_empty() {
        return Err(Error::Validation("no usable document pairs".into()));
    }
    Ok(pairs)
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    if !args.pairs && !args.labels {
        return Err(Error::Config("pass --pairs and/or --labels".into()));
    }
    let (params, vocab) = load_model(&args.model)?;
    let corpus = load_annotated_corpus(&args.corpus)?;
    let corpus = align_corpus_to_vocab(&corpus, &vocab)?;

    let (state, _, _) = with_workers(args.workers, || e_step_corpus(&corpus, &params, 1e-5, 100))??;
    let props = proportions_from_gamma(&state.gamma);

    if args.pairs {
        let pairs = pairs_from_annotations(&corpus)?;
        let report = pair_metrics(&props, &props, &pairs)?;
        println!("pairs={}", pairs.len());
        println!("l2d={}", report.l2d);
        println!("hd={}", report.hd);
        println!("a1={}", report.a1);
        println!("a5={}", report.a5);
        if let Some(path) = &args.detail {
            let mut f = fs::File::create(path)?;
            writeln!(f, "docA,docB,l2,hellinger,agree1,agree5")?;
            for row in &report.rows {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    row.doc_a,
                    row.doc_b,
                    row.l2,
                    row.hellinger,
                    row.agree_first as u8,
                    row.agree_top5
                )?;
            }
        }
    }
    if args.labels {
        let labels: Vec<i64> = corpus
            .docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.label.ok_or_else(|| {
                    Error::Validation(format!("document {d} carries no #label annotation"))
                })
            })
            .collect::<Result<_, _>>()?;
        let m = tune_metric_m(&props, &labels)?;
        println!("m_score={m}");
    }
    Ok(())
}

fn cmd_topics(args: TopicsArgs) -> Result<(), Error> {
    let (params, vocab) = load_model(&args.model)?;
    let v = vocab.len();
    let n = if args.top > v {
        eprintln!(
            "warning: --top {} exceeds vocabulary size {v}; clamping",
            args.top
        );
        v
    } else {
        args.top
    };
    if args.csv {
        println!("topic,rank,token,probability");
    }
    for k in 0..params.n_topics() {
        let words = top_words(&params.beta, k, n, &vocab)?;
        if args.csv {
            for (rank, token) in words.iter().enumerate() {
                let id = vocab.id(token).expect("token from vocab");
                println!("{k},{rank},{token},{}", params.beta[k][id]);
            }
        } else {
            println!("topic {k}: {}", words.join(" "));
        }
    }
    Ok(())
}

fn cmd_graph(args: GraphArgs) -> Result<(), Error> {
    match args.command {
        GraphCommand::BuildDict { dict, corpus, out } => {
            let c = load_annotated_corpus(&corpus)?;
            let pairs = graph::load_dictionary(&dict)?;
            let (g, skipped) = graph::build_dictionary_graph(&pairs, &c.vocab)?;
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} dictionary pairs with unknown tokens");
            }
            let mut f = fs::File::create(&out)?;
            for &(a, b, w) in g.edges() {
                writeln!(f, "{}\t{}\t{}", c.vocab.token(a), c.vocab.token(b), w)?;
            }
            println!("edges={}", g.edge_count());
            Ok(())
        }
        GraphCommand::Validate {
            graph: path,
            corpus,
        } => {
            let c = load_annotated_corpus(&corpus)?;
            validate_graph_file(&path, &c.vocab)?;
            println!("ok");
            Ok(())
        }
        GraphCommand::Stats {
            graph: path,
            corpus,
        } => {
            let c = load_annotated_corpus(&corpus)?;
            let g = graph::load_graph(&path, &c.vocab)?;
            println!("edges={}", g.edge_count());
            let mut hist = [0usize; 11];
            for w in 0..g.n_words() {
                let d = g.degree(w) as usize;
                hist[d.min(10)] += 1;
            }
            let labels: Vec<String> = hist
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    if i == 10 {
                        format!("10+:{c}")
                    } else {
                        format!("{i}:{c}")
                    }
                })
                .collect();
            println!("degree_hist={}", labels.join(" "));
            if c.vocab.has_langs() {
                let cross = g
                    .edges()
                    .iter()
                    .filter(|&&(a, b, _)| c.vocab.lang(a) != c.vocab.lang(b))
                    .count();
                let frac = if g.edge_count() == 0 {
                    0.0
                } else {
                    cross as f64 / g.edge_count() as f64
                };
                println!("cross_lingual_fraction={frac}");
            } else {
                println!("cross_lingual_fraction=unknown (no language tags)");
            }
            Ok(())
        }
    }
}

/// Line-level checks that the loader's max-merge would silently paper over:
/// conflicting duplicate weights are reported with their line numbers.
fn validate_graph_file(path: &Path, vocab: &Vocabulary) -> Result<(), Error> {
    let content = fs::read_to_string(path)?;
    let mut seen: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
    let mut problems = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            problems.push(format!("line {lineno}: expected 3 tab-separated fields"));
            continue;
        }
        let a = vocab.id(fields[0].trim());
        let b = vocab.id(fields[1].trim());
        let w: Option<f64> = fields[2].trim().parse().ok();
        match (a, b, w) {
            (None, _, _) => problems.push(format!("line {lineno}: unknown token '{}'", fields[0])),
            (_, None, _) => problems.push(format!("line {lineno}: unknown token '{}'", fields[1])),
            (_, _, None) => problems.push(format!("line {lineno}: bad weight '{}'", fields[2])),
            (Some(a), Some(b), Some(w)) => {
                if w < 0.0 {
                    problems.push(format!("line {lineno}: negative weight {w}"));
                } else if a == b {
                    eprintln!("warning: line {lineno}: self-loop is ignored");
                } else {
                    let key = (a.min(b), a.max(b));
                    if let Some(&(first_line, first_w)) = seen.get(&key) {
                        if first_w != w {
                            problems.push(format!(
                                "line {lineno}: weight {w} conflicts with line {first_line} ({first_w})"
                            ));
                        }
                    } else {
                        seen.insert(key, (lineno, w));
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{}: {}",
            path.display(),
            problems.join("; ")
        )))
    }
}
