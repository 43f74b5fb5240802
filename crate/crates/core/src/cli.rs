//! Command-line entry points: training, prediction, evaluation, and the
//! corpus-to-pairs converter.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical fault.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::archive::{self, ArchiveError, ModelArchive, RelationMeta};
use crate::eval::{hit_rate_at, mpr, spearman, EvalError, RankedTestCase};
use crate::factors::GaussianFactor;
use crate::graph::{EntityGraph, GraphError};
use crate::inference::{aggregate_query, predict_for_query, rank_candidates, InferenceError};
use crate::io::{self, IoError};
use crate::sampling::{CoOccurrenceData, RelationData, SamplingError};
use crate::trainer::{fit, ConfigError, ElboError, FitError, TrainConfig};
use crate::updates::PairKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("numerical fault: {0}")]
    Numerical(#[from] ElboError),
    #[error("cannot write {path}: {source}")]
    WriteFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write output: {0}")]
    WriteOut(std::io::Error),
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Elbo(e) => CliError::Numerical(e),
            FitError::Config(e) => CliError::Config(e),
            FitError::Sampling(e) => CliError::Sampling(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "varembed",
    version,
    about = "Bayesian entity embeddings with hierarchical priors and typed relations"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from co-occurrence data
    Train(TrainArgs),
    /// Rank candidates for a query against a trained model
    Predict(PredictArgs),
    /// Evaluate a trained model on a test set
    Eval(EvalArgs),
    /// Convert a whitespace-tokenized corpus into co-occurrence pairs
    PairsFromText(PairsArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Co-occurrence TSV: i<TAB>j<TAB>count
    #[arg(long)]
    cooc: PathBuf,
    /// Output model archive path
    #[arg(long)]
    out: PathBuf,
    /// Hierarchy TSV: child<TAB>parent
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Relations manifest: name<TAB>directed|undirected<TAB>rank<TAB>path
    #[arg(long)]
    relations: Option<PathBuf>,
    /// Embedding dimension
    #[arg(long, default_value_t = 50)]
    dim: usize,
    /// Maximum training epochs
    #[arg(long, default_value_t = 40)]
    epochs: u32,
    /// Negatives per positive occurrence
    #[arg(long = "neg-ratio", default_value_t = 1)]
    neg_ratio: u32,
    /// Gamma hyperprior shape
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Gamma hyperprior rate
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Co-occurrence subsampling threshold
    #[arg(long = "subsample-rho", default_value_t = 1e-3)]
    subsample_rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results are identical at any value)
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Relative bound-change tolerance for early stopping
    #[arg(long = "elbo-tol", default_value_t = 1e-6)]
    elbo_tol: f64,
    /// Training log path (default: <out>.log)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Model archive
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated query entity ids
    #[arg(long)]
    query: String,
    /// Score kind: `cooc` or `rel:<name>`
    #[arg(long, default_value = "cooc")]
    kind: String,
    /// Keep only the best N candidates
    #[arg(long)]
    top: Option<usize>,
    /// Candidate id file, one per line (default: whole catalog)
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Diagnostic: score by cosine of means instead of predictive probability
    #[arg(long)]
    cosine: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model archive
    #[arg(long)]
    model: PathBuf,
    /// Metric: hr, mpr, or spearman
    #[arg(long)]
    task: String,
    /// Test set path
    #[arg(long)]
    testset: PathBuf,
    /// Percentile for hr
    #[arg(long, default_value_t = 10.0)]
    k: f64,
    /// Evaluation slice: full, or rare to add the 20% least frequent entities
    #[arg(long, default_value = "full")]
    slice: String,
}

#[derive(Debug, Args)]
struct PairsArgs {
    /// Corpus file, one whitespace-tokenized sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Symmetric window size
    #[arg(long)]
    window: usize,
    /// Output path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses argv and runs; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    match execute(cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Test entry point: runs with explicit arguments, capturing stdout.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Input(e.to_string()))?;
    execute(cli, out)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(args, out),
        Command::Predict(args) => cmd_predict(args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::PairsFromText(args) => cmd_pairs_from_text(args, out),
    }
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cooc_raw = io::read_cooccurrence(&args.cooc)?;
    let edges = match &args.hierarchy {
        Some(path) => io::read_hierarchy(path)?,
        None => Vec::new(),
    };
    let rel_specs = match &args.relations {
        Some(path) => io::read_relations_manifest(path)?,
        None => Vec::new(),
    };
    let rel_raw: Vec<Vec<(String, String)>> = rel_specs
        .iter()
        .map(|spec| io::read_relation_pairs(&spec.path))
        .collect::<Result<_, _>>()?;

    // The leaf vocabulary is every id seen in pair data; hierarchy-only ids
    // are category nodes.
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for (i, j, _) in &cooc_raw {
        vocab.insert(i);
        vocab.insert(j);
    }
    for pairs in &rel_raw {
        for (i, j) in pairs {
            vocab.insert(i);
            vocab.insert(j);
        }
    }
    let leaves: Vec<&str> = vocab.into_iter().collect();
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(c, p)| (c.as_str(), p.as_str())).collect();
    let graph = EntityGraph::build(&leaves, &edge_refs)?;

    let indexed_cooc: Vec<(u32, u32, u32)> = cooc_raw
        .iter()
        .map(|(i, j, c)| (graph.leaf_id(i).unwrap(), graph.leaf_id(j).unwrap(), *c))
        .collect();
    let cooc = CoOccurrenceData::new(indexed_cooc, graph.n_leaves())?;
    let relations: Vec<RelationData> = rel_specs
        .iter()
        .zip(&rel_raw)
        .map(|(spec, pairs)| {
            let indexed: Vec<(u32, u32)> = pairs
                .iter()
                .map(|(i, j)| (graph.leaf_id(i).unwrap(), graph.leaf_id(j).unwrap()))
                .collect();
            RelationData::new(spec.name.clone(), spec.directed, spec.rank, &indexed, graph.n_leaves())
        })
        .collect::<Result<_, _>>()?;

    let config = TrainConfig {
        dim: args.dim,
        neg_ratio: args.neg_ratio,
        epochs: args.epochs,
        alpha: args.alpha,
        beta: args.beta,
        subsample_rho: args.subsample_rho,
        seed: args.seed,
        elbo_tol: args.elbo_tol,
        workers: args.workers,
    };
    let (state, log) = fit(&graph, &cooc, &relations, &config)?;

    let frequencies = (0..graph.n_leaves() as u32).map(|i| cooc.count(i)).collect();
    let archive = ModelArchive {
        state,
        graph,
        relations: rel_specs
            .iter()
            .map(|s| RelationMeta { name: s.name.clone(), directed: s.directed, rank: s.rank })
            .collect(),
        config,
        frequencies,
    };
    archive::save(&args.out, &archive)?;

    let log_path = args
        .log
        .unwrap_or_else(|| PathBuf::from(format!("{}.log", args.out.display())));
    fs::write(&log_path, log.render()).map_err(|source| CliError::WriteFile { path: log_path, source })?;

    writeln!(out, "model\t{}", args.out.display()).map_err(CliError::WriteOut)?;
    writeln!(out, "epochs\t{}", log.records.len()).map_err(CliError::WriteOut)?;
    writeln!(out, "converged\t{}", log.converged).map_err(CliError::WriteOut)?;
    Ok(())
}

fn parse_kind(kind: &str, archive: &ModelArchive) -> Result<PairKind, CliError> {
    if kind == "cooc" {
        return Ok(PairKind::Cooc);
    }
    if let Some(name) = kind.strip_prefix("rel:") {
        let k = archive
            .relation_index(name)
            .ok_or_else(|| CliError::Input(format!("unknown relation {name:?}")))?;
        return Ok(PairKind::Rel(k));
    }
    Err(CliError::Input(format!("bad --kind {kind:?} (expected cooc or rel:<name>)")))
}

fn resolve_leaf(graph: &EntityGraph, id: &str) -> Result<u32, CliError> {
    graph
        .leaf_id(id)
        .ok_or_else(|| CliError::Input(format!("unknown entity {id:?}")))
}

fn query_factor(archive: &ModelArchive, query: &str) -> Result<GaussianFactor, CliError> {
    let ids: Vec<&str> = query.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if ids.is_empty() {
        return Err(CliError::Input("empty query".into()));
    }
    let factors: Vec<&GaussianFactor> = ids
        .iter()
        .map(|id| resolve_leaf(&archive.graph, id).map(|i| &archive.state.u[i as usize]))
        .collect::<Result<_, _>>()?;
    Ok(aggregate_query(&factors)?)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn cmd_predict(args: PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let archive = archive::load(&args.model)?;
    let kind = parse_kind(&args.kind, &archive)?;
    let query = query_factor(&archive, &args.query)?;

    let candidates: Vec<u32> = match &args.candidates {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io(IoError::Read {
                path: path.clone(),
                source,
            }))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|id| resolve_leaf(&archive.graph, id))
                .collect::<Result<_, _>>()?
        }
        None => (0..archive.graph.n_leaves() as u32).collect(),
    };

    let mut ranked: Vec<(u32, f64)> = if args.cosine {
        let mut scored: Vec<(u32, f64)> = candidates
            .iter()
            .map(|&j| (j, cosine(query.mean(), archive.state.v[j as usize].mean())))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored
    } else {
        rank_candidates(&query, &candidates, kind, &archive.state)?
    };
    if let Some(top) = args.top {
        ranked.truncate(top);
    }
    for (j, p) in ranked {
        writeln!(out, "{}\t{}", archive.graph.leaf_name(j), p).map_err(CliError::WriteOut)?;
    }
    Ok(())
}

/// Indices of the 20% least frequent leaves, ties broken by entity id.
fn rare_slice(archive: &ModelArchive) -> Vec<u32> {
    let n = archive.graph.n_leaves();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        archive.frequencies[a as usize]
            .cmp(&archive.frequencies[b as usize])
            .then_with(|| archive.graph.leaf_name(a).cmp(archive.graph.leaf_name(b)))
    });
    order.truncate(n / 5);
    order
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let archive = archive::load(&args.model)?;
    let want_rare = match args.slice.as_str() {
        "full" => false,
        "rare" => true,
        other => return Err(CliError::Input(format!("bad --slice {other:?} (expected full or rare)"))),
    };
    let rare: BTreeSet<u32> = if want_rare {
        rare_slice(&archive).into_iter().collect()
    } else {
        BTreeSet::new()
    };

    match args.task.as_str() {
        "hr" | "mpr" => {
            let cases = io::read_inference_cases(&args.testset)?;
            if cases.is_empty() {
                return Err(CliError::Eval(EvalError::EmptyTestSet));
            }
            let catalog: Vec<u32> = (0..archive.graph.n_leaves() as u32).collect();
            let mut ranked_cases = Vec::with_capacity(cases.len());
            let mut rare_cases = Vec::new();
            for case in &cases {
                let query_ids: Vec<&str> = case.query.iter().map(String::as_str).collect();
                let factors: Vec<&GaussianFactor> = query_ids
                    .iter()
                    .map(|id| resolve_leaf(&archive.graph, id).map(|i| &archive.state.u[i as usize]))
                    .collect::<Result<_, _>>()?;
                let query = aggregate_query(&factors)?;
                let target = resolve_leaf(&archive.graph, &case.target)?;
                let ranking = rank_candidates(&query, &catalog, PairKind::Cooc, &archive.state)?;
                let rank = ranking.iter().position(|&(j, _)| j == target).unwrap() + 1;
                let rc = RankedTestCase::new(rank, catalog.len())?;
                ranked_cases.push(rc);
                if rare.contains(&target) {
                    rare_cases.push(rc);
                }
            }
            if args.task == "hr" {
                writeln!(out, "hr@{}\t{}", args.k, hit_rate_at(&ranked_cases, args.k)?).map_err(CliError::WriteOut)?;
                if want_rare {
                    writeln!(out, "hr@{}:rare\t{}", args.k, hit_rate_at(&rare_cases, args.k)?)
                        .map_err(CliError::WriteOut)?;
                }
            } else {
                writeln!(out, "mpr\t{}", mpr(&ranked_cases)?).map_err(CliError::WriteOut)?;
                if want_rare {
                    writeln!(out, "mpr:rare\t{}", mpr(&rare_cases)?).map_err(CliError::WriteOut)?;
                }
            }
        }
        "spearman" => {
            let pairs = io::read_similarity_pairs(&args.testset)?;
            let mut model_scores = Vec::with_capacity(pairs.len());
            let mut gold = Vec::with_capacity(pairs.len());
            let mut rare_model = Vec::new();
            let mut rare_gold = Vec::new();
            for (w1, w2, truth) in &pairs {
                let i = resolve_leaf(&archive.graph, w1)?;
                let j = resolve_leaf(&archive.graph, w2)?;
                let p = predict_for_query(&archive.state.u[i as usize], j, PairKind::Cooc, &archive.state)?;
                model_scores.push(p);
                gold.push(*truth);
                if rare.contains(&i) || rare.contains(&j) {
                    rare_model.push(p);
                    rare_gold.push(*truth);
                }
            }
            writeln!(out, "spearman\t{}", spearman(&model_scores, &gold)?).map_err(CliError::WriteOut)?;
            if want_rare {
                writeln!(out, "spearman:rare\t{}", spearman(&rare_model, &rare_gold)?)
                    .map_err(CliError::WriteOut)?;
            }
        }
        other => return Err(CliError::Input(format!("bad --task {other:?} (expected hr, mpr, or spearman)"))),
    }
    Ok(())
}

fn cmd_pairs_from_text(args: PairsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.window == 0 {
        return Err(CliError::Input("--window must be >= 1".into()));
    }
    let pairs = io::pairs_from_text(&args.corpus, args.window)?;
    let mut rendered = String::new();
    for (i, j, c) in pairs {
        rendered.push_str(&format!("{i}\t{j}\t{c}\n"));
    }
    match args.out {
        Some(path) => fs::write(&path, rendered).map_err(|source| CliError::WriteFile { path, source })?,
        None => out.write_all(rendered.as_bytes()).map_err(CliError::WriteOut)?,
    }
    Ok(())
}
