//! `maptree`: fit, apply and benchmark MAP decision trees from the shell.
//!
//! Datasets are whitespace-separated 0/1 rows with the label in the last
//! column. Trees are JSON documents; run reports are single-line JSON objects.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use maptree_core::api::{fit_dataset, FitOptions, RunReport};
use maptree_core::oracle::{enumerate_trees, OracleGuard};
use maptree_core::synthetic::{random_tree, sample_dataset, SynthConfig};
use maptree_core::{BinaryDataset, DecisionTree, PosteriorParams, SearchBudget};

/// Budgets swept by `bench`.
const BENCH_LADDER: [u64; 9] = [10, 30, 100, 300, 1000, 3000, 10_000, 30_000, 100_000];

/// Exit status of `fit --require-optimal` when the budget ran out first.
const EXIT_NOT_OPTIMAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "maptree",
    version,
    about = "Exact MAP decision trees under the Bayesian CART posterior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the MAP tree of a dataset.
    Fit(FitArgs),
    /// Print the probability of label 1 and the hard label for each row.
    Predict(PredictArgs),
    /// Evaluate a tree, or cross-validate the search with --cv.
    Eval(EvalArgs),
    /// Generate a random tree and a dataset labeled by it.
    Synth(SynthArgs),
    /// Stream every tree of a tiny dataset with its log prior and log joint.
    Enumerate(EnumerateArgs),
    /// Fit across the expansion-budget ladder and print one CSV row per budget.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Copy)]
struct PriorArgs {
    /// Split prior scale.
    #[arg(long, default_value_t = PosteriorParams::DEFAULT_ALPHA)]
    alpha: f64,
    /// Split prior depth decay.
    #[arg(long, default_value_t = PosteriorParams::DEFAULT_BETA)]
    beta: f64,
    /// Beta pseudocount of label 1.
    #[arg(long, default_value_t = PosteriorParams::DEFAULT_RHO)]
    rho1: f64,
    /// Beta pseudocount of label 0.
    #[arg(long, default_value_t = PosteriorParams::DEFAULT_RHO)]
    rho0: f64,
}

impl PriorArgs {
    fn params(&self) -> Result<PosteriorParams> {
        Ok(PosteriorParams::new(
            self.alpha, self.beta, self.rho1, self.rho0,
        )?)
    }
}

#[derive(Args, Clone, Copy)]
struct BudgetArgs {
    /// Stop after this many expansions.
    #[arg(long)]
    max_expansions: Option<u64>,
    /// Stop after this many milliseconds of wall-clock time.
    #[arg(long)]
    time_limit_ms: Option<u64>,
}

impl BudgetArgs {
    fn budget(&self) -> SearchBudget {
        SearchBudget {
            max_expansions: self.max_expansions,
            time_limit: self.time_limit_ms.map(Duration::from_millis),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training dataset.
    data: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Where to write the tree document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 unless the tree is certified optimal.
    #[arg(long)]
    require_optimal: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Tree document.
    tree: PathBuf,
    /// Rows to predict.
    data: PathBuf,
    /// Rows hold features only, without a label column.
    #[arg(long)]
    unlabeled: bool,
    #[command(flatten)]
    prior: PriorArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled dataset.
    data: PathBuf,
    /// Tree document to evaluate.
    #[arg(long, required_unless_present = "cv", conflicts_with = "cv")]
    tree: Option<PathBuf>,
    /// Run k-fold cross-validation of the search instead.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    cv: Option<u32>,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    features: usize,
    #[arg(long, default_value_t = 7)]
    internal_nodes: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Fraction of labels to flip.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth tree output.
    #[arg(long)]
    tree_out: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    data: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = OracleGuard::default().max_features)]
    max_features: usize,
    #[arg(long, default_value_t = OracleGuard::default().max_samples)]
    max_samples: usize,
}

#[derive(Args)]
struct BenchArgs {
    data: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    /// Per-rung wall-clock limit.
    #[arg(long)]
    time_limit_ms: Option<u64>,
}

fn load(path: &Path, labeled: bool) -> Result<BinaryDataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let reader = BufReader::new(file);
    let ds = if labeled {
        BinaryDataset::load(reader)
    } else {
        BinaryDataset::load_unlabeled(reader)
    };
    ds.with_context(|| format!("cannot read dataset {}", path.display()))
}

fn load_tree(path: &Path, dataset: &BinaryDataset) -> Result<DecisionTree> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    DecisionTree::from_json_for(&text, dataset)
        .with_context(|| format!("invalid tree document {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_fit(args: &FitArgs) -> Result<ExitCode> {
    let ds = load(&args.data, true)?;
    let options = FitOptions {
        params: args.prior.params()?,
        budget: args.budget.budget(),
    };
    let (tree, report) = fit_dataset(&ds, &options)?;
    if let Some(out) = &args.out {
        write_file(out, &(tree.to_json() + "\n"))?;
    }
    println!("{}", report.to_json());
    if args.require_optimal && !report.optimal {
        return Ok(ExitCode::from(EXIT_NOT_OPTIMAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let ds = load(&args.data, !args.unlabeled)?;
    let tree = load_tree(&args.tree, &ds)?;
    let params = args.prior.params()?;
    let mut out = BufWriter::new(io::stdout().lock());
    for i in 0..ds.n_samples() {
        let p = tree.predict_proba_row(&ds, i, &params);
        writeln!(out, "{p} {}", u8::from(p >= 0.5))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ds = load(&args.data, true)?;
    let params = args.prior.params()?;
    match (&args.tree, args.cv) {
        (Some(path), _) => {
            let tree = load_tree(path, &ds)?;
            println!("{}", serde_json::to_string(&tree.evaluate(&ds, &params))?);
        }
        (None, Some(k)) => {
            let options = FitOptions {
                params,
                budget: args.budget.budget(),
            };
            println!("{}", cross_validate(&ds, k as usize, &options)?);
        }
        (None, None) => unreachable!("clap requires --tree or --cv"),
    }
    Ok(())
}

/// Contiguous folds, each searched on its own thread.
fn cross_validate(ds: &BinaryDataset, k: usize, options: &FitOptions) -> Result<serde_json::Value> {
    let n = ds.n_samples();
    if k > n {
        bail!("{k} folds requested for {n} samples");
    }
    let bounds: Vec<(usize, usize)> = (0..k).map(|i| (i * n / k, (i + 1) * n / k)).collect();
    let folds: Vec<Result<serde_json::Value>> = std::thread::scope(|scope| {
        let handles: Vec<_> = bounds
            .iter()
            .map(|&(lo, hi)| {
                scope.spawn(move || -> Result<serde_json::Value> {
                    let train: Vec<usize> = (0..lo).chain(hi..n).collect();
                    let test: Vec<usize> = (lo..hi).collect();
                    let (tree, report) = fit_dataset(&ds.select(&train), options)?;
                    let eval = tree.evaluate(&ds.select(&test), &options.params);
                    Ok(serde_json::json!({
                        "accuracy": eval.accuracy,
                        "mean_log_likelihood": eval.mean_log_likelihood,
                        "n_nodes": eval.n_nodes,
                        "train": report,
                    }))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold thread panicked"))
            .collect()
    });
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = |key: &str| {
        folds
            .iter()
            .map(|f| f[key].as_f64().unwrap_or(f64::NAN))
            .sum::<f64>()
            / k as f64
    };
    Ok(serde_json::json!({
        "folds": folds,
        "mean_accuracy": mean("accuracy"),
        "mean_log_likelihood": mean("mean_log_likelihood"),
    }))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_features: args.features,
        n_internal_nodes: args.internal_nodes,
        n_samples: args.samples,
        noise_eps: args.noise,
        seed: args.seed,
    };
    let mut rng = config.rng();
    let tree = random_tree(&config, &mut rng)?;
    let ds = sample_dataset(&tree, &config, &mut rng)?;
    match &args.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
            let mut w = BufWriter::new(file);
            ds.write(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            ds.write(&mut w)?;
            w.flush()?;
        }
    }
    if let Some(path) = &args.tree_out {
        write_file(path, &(tree.to_json() + "\n"))?;
    }
    Ok(())
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<()> {
    let ds = load(&args.data, true)?;
    let params = args.prior.params()?;
    let guard = OracleGuard {
        max_features: args.max_features,
        max_samples: args.max_samples,
    };
    let mut out = BufWriter::new(io::stdout().lock());
    let mut failed = None;
    enumerate_trees(&ds, &params, guard, |t| {
        if failed.is_some() {
            return;
        }
        let doc: serde_json::Value =
            serde_json::from_str(&t.tree.to_json()).expect("tree documents are valid JSON");
        let line =
            serde_json::json!({"tree": doc, "log_prior": t.log_prior, "log_joint": t.log_joint});
        if let Err(e) = writeln!(out, "{line}") {
            failed = Some(e);
        }
    })?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let ds = load(&args.data, true)?;
    let params = args.prior.params()?;
    let mut out = io::stdout().lock();
    writeln!(out, "budget,elapsed_ms,neg_log_joint,optimal")?;
    for budget in BENCH_LADDER {
        let options = FitOptions {
            params,
            budget: SearchBudget {
                max_expansions: Some(budget),
                time_limit: args.time_limit_ms.map(Duration::from_millis),
            },
        };
        let (_, report): (_, RunReport) = fit_dataset(&ds, &options)?;
        writeln!(
            out,
            "{budget},{:.3},{},{}",
            report.elapsed_ms, report.neg_log_joint, report.optimal
        )?;
        out.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Fit(args) => return cmd_fit(args),
        Command::Predict(args) => cmd_predict(args)?,
        Command::Eval(args) => cmd_eval(args)?,
        Command::Synth(args) => cmd_synth(args)?,
        Command::Enumerate(args) => cmd_enumerate(args)?,
        Command::Bench(args) => cmd_bench(args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // keep exit code 2 reserved for "not proven optimal"
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if e.downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            {
                return ExitCode::SUCCESS;
            }
            eprintln!("maptree: {e:#}");
            ExitCode::FAILURE
        }
    }
}
