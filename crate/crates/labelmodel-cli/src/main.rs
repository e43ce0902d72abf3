//! Command-line front end: dataset generation, LF application, fitting,
//! posteriors, bounds, discovery, downstream training, the over-specification
//! sweep, and randomized bound verification.
//!
//! Every subcommand accepts `--config <json>` whose fields individual flags
//! override, and writes its outputs under `--out`. Outputs are deterministic
//! functions of the inputs: running a subcommand twice produces byte-identical
//! files. Exit codes: 0 success, 2 validation or input error, 3 bound
//! violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use labelmodel::{
    apply_keyword_lfs, candidate_pairs, fit, load_corpus_json, load_features_csv, load_lfs_json,
    load_model_json, load_truth_csv, load_votes_csv, mean_brier, one_hot_features,
    posterior_vector, rank_dependencies, roc_auc, run_bound_campaign_scaled, run_sweep,
    sample_exact, save_dataset, save_model_json, save_truth_csv, save_votes_csv, select_top_d,
    sweep_records_csv, train_noise_aware, write_ranked_csv, BoundReport, DataSource,
    DependencyKind, DependencySpec, Error, FitConfig, FitMode, LossKind, Metrics, Result,
    SweepConfig, TrainConfig, ALL_KINDS,
};

#[derive(Parser)]
#[command(
    name = "labelmodel",
    version,
    about = "Weak-supervision label modeling with dependency factors and certified misspecification bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a model file.
    Generate(GenerateArgs),
    /// Apply keyword labeling functions to a text corpus.
    ApplyLfs(ApplyLfsArgs),
    /// Fit model parameters to a vote matrix.
    Fit(FitArgs),
    /// Closed-form posteriors for every row of a vote matrix.
    Posterior(PosteriorArgs),
    /// Bound report for a fitted model against an independent baseline.
    Bounds(BoundsArgs),
    /// Score and rank candidate dependencies against true labels.
    DiscoverDeps(DiscoverArgs),
    /// Train the downstream classifier on posteriors and evaluate it.
    Train(TrainArgs),
    /// Dependency-budget sweep: fit, bound, and evaluate per d.
    Sweep(SweepArgs),
    /// Randomized bound-dominance campaign.
    VerifyBounds(VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::BoundViolation { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => generate(args),
        Command::ApplyLfs(args) => apply_lfs(args),
        Command::Fit(args) => fit_cmd(args),
        Command::Posterior(args) => posterior_cmd(args),
        Command::Bounds(args) => bounds_cmd(args),
        Command::DiscoverDeps(args) => discover(args),
        Command::Train(args) => train_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::VerifyBounds(args) => verify_bounds(args),
    }
}

// ===== Shared plumbing =====

fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{what} is required (flag or config file)")))
}

fn parse_kinds(names: &[String]) -> Result<Vec<DependencyKind>> {
    names.iter().map(|s| s.parse()).collect()
}

fn parse_mode(name: &str) -> Result<FitMode> {
    match name {
        "exact" => Ok(FitMode::Exact),
        "gibbs" => Ok(FitMode::Gibbs),
        other => Err(Error::Config(format!("unknown fit mode '{other}'"))),
    }
}

fn parse_loss(name: &str) -> Result<LossKind> {
    match name {
        "brier" => Ok(LossKind::Brier),
        "crossentropy" => Ok(LossKind::CrossEntropy),
        other => Err(Error::Config(format!("unknown loss '{other}'"))),
    }
}

/// Flag overrides shared by commands that run a fit.
#[derive(Args, Clone)]
struct FitOverride {
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    fit_seed: Option<u64>,
    /// exact or gibbs
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gibbs_chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    steps_per_iter: Option<usize>,
}

impl FitOverride {
    fn apply(&self, mut config: FitConfig) -> Result<FitConfig> {
        if let Some(v) = self.step_size {
            config.step_size = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.l2_penalty {
            config.l2_penalty = v;
        }
        if let Some(v) = self.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = self.fit_seed {
            config.seed = v;
        }
        if let Some(v) = &self.mode {
            config.mode = parse_mode(v)?;
        }
        if let Some(v) = self.gibbs_chains {
            config.gibbs_chains = v;
        }
        if let Some(v) = self.burn_in {
            config.burn_in = v;
        }
        if let Some(v) = self.steps_per_iter {
            config.steps_per_iter = v;
        }
        Ok(config)
    }
}

/// Flag overrides shared by commands that train the classifier.
#[derive(Args, Clone)]
struct TrainOverride {
    #[arg(long)]
    train_step_size: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    /// brier or crossentropy
    #[arg(long)]
    loss: Option<String>,
}

impl TrainOverride {
    fn apply(&self, mut config: TrainConfig) -> Result<TrainConfig> {
        if let Some(v) = self.train_step_size {
            config.step_size = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.train_seed {
            config.seed = v;
        }
        if let Some(v) = &self.loss {
            config.loss = parse_loss(v)?;
        }
        Ok(config)
    }
}

// ===== generate =====

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON supplying the sampling distribution.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for votes.csv, truth.csv, provenance.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct GenerateConfig {
    model: Option<PathBuf>,
    n: Option<usize>,
    seed: Option<u64>,
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config: GenerateConfig = load_config(args.config.as_ref())?;
    let model_path = require(args.model.or(config.model), "--model")?;
    let n = args.n.or(config.n).unwrap_or(1000);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let params = load_model_json(&model_path)?;
    let ds = sample_exact(&params, n, seed)?;
    save_dataset(&args.out, &ds)?;
    println!("wrote {} rows to {}", n, args.out.display());
    Ok(())
}

// ===== apply-lfs =====

#[derive(Args)]
struct ApplyLfsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus JSON: {"documents": [...], "truth": [...]?}.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// LF list JSON: [{"name", "pattern", "emit"}].
    #[arg(long)]
    lfs: Option<PathBuf>,
    /// Output directory for votes.csv (and truth.csv when the corpus has labels).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct ApplyLfsConfig {
    corpus: Option<PathBuf>,
    lfs: Option<PathBuf>,
}

fn apply_lfs(args: ApplyLfsArgs) -> Result<()> {
    let config: ApplyLfsConfig = load_config(args.config.as_ref())?;
    let corpus_path = require(args.corpus.or(config.corpus), "--corpus")?;
    let lfs_path = require(args.lfs.or(config.lfs), "--lfs")?;
    let corpus = load_corpus_json(&corpus_path)?;
    let lfs = load_lfs_json(&lfs_path)?;
    let votes = apply_keyword_lfs(&corpus, &lfs)?;
    std::fs::create_dir_all(&args.out)?;
    save_votes_csv(&args.out.join("votes.csv"), &votes)?;
    if let Some(truth) = &corpus.truth {
        save_truth_csv(&args.out.join("truth.csv"), truth)?;
    }
    println!(
        "applied {} LFs to {} documents -> {}",
        lfs.len(),
        votes.n(),
        args.out.display()
    );
    Ok(())
}

// ===== fit =====

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Dependency list JSON: [{"j", "k", "kind"}].
    #[arg(long)]
    deps: Option<PathBuf>,
    #[command(flatten)]
    fit: FitOverride,
    /// Output directory for model.json and fit_report.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct FitCmdConfig {
    votes: Option<PathBuf>,
    deps: Option<PathBuf>,
    fit: FitConfig,
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let config: FitCmdConfig = load_config(args.config.as_ref())?;
    let votes_path = require(args.votes.or(config.votes), "--votes")?;
    let data = load_votes_csv(&votes_path)?;
    let deps: Vec<DependencySpec> = match args.deps.or(config.deps) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    let fit_config = args.fit.apply(config.fit)?;
    let report = fit(&data, deps, &fit_config)?;
    std::fs::create_dir_all(&args.out)?;
    save_model_json(&args.out.join("model.json"), &report.params)?;
    write_json(&args.out.join("fit_report.json"), &report)?;
    println!(
        "fit {} rows, {} iterations, converged: {}",
        data.n(),
        report.iterations,
        report.converged
    );
    Ok(())
}

// ===== posterior =====

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Output CSV, one P(y = +1 | row) per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct PosteriorConfig {
    model: Option<PathBuf>,
    votes: Option<PathBuf>,
}

fn posterior_cmd(args: PosteriorArgs) -> Result<()> {
    let config: PosteriorConfig = load_config(args.config.as_ref())?;
    let model_path = require(args.model.or(config.model), "--model")?;
    let votes_path = require(args.votes.or(config.votes), "--votes")?;
    let params = load_model_json(&model_path)?;
    let data = load_votes_csv(&votes_path)?;
    let posteriors = posterior_vector(&params, &data)?;
    let mut out = String::new();
    for p in posteriors {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, out)?;
    Ok(())
}

// ===== bounds =====

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dependency-aware model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Independent baseline model JSON.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Estimation-error term for the risk-gap bound.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output JSON report; the 6-decimal table prints to stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct BoundsConfig {
    model: Option<PathBuf>,
    baseline: Option<PathBuf>,
    gamma: Option<f64>,
}

fn bounds_cmd(args: BoundsArgs) -> Result<()> {
    let config: BoundsConfig = load_config(args.config.as_ref())?;
    let model_path = require(args.model.or(config.model), "--model")?;
    let baseline_path = require(args.baseline.or(config.baseline), "--baseline")?;
    let gamma = args.gamma.or(config.gamma).unwrap_or(0.0);
    let p_mu = load_model_json(&model_path)?;
    let p_theta = load_model_json(&baseline_path)?;
    let report = BoundReport::compute(&p_mu, &p_theta, gamma)?;
    write_json(&args.out, &report)?;
    print!("{}", report.table());
    Ok(())
}

// ===== discover-deps =====

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// True labels; used only for discovery, never for fitting.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// LF list JSON supplying names for the ranked CSV.
    #[arg(long)]
    lfs: Option<PathBuf>,
    /// Comma-separated factor kinds (default: all five).
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    /// Minimum joint non-abstain count for a candidate pair.
    #[arg(long)]
    floor: Option<usize>,
    /// When set, also writes the top-d selection as selected.json.
    #[arg(long)]
    top_d: Option<usize>,
    /// Output directory for ranked.csv (and selected.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct DiscoverConfig {
    votes: Option<PathBuf>,
    truth: Option<PathBuf>,
    lfs: Option<PathBuf>,
    kinds: Option<Vec<String>>,
    floor: Option<usize>,
    top_d: Option<usize>,
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let config: DiscoverConfig = load_config(args.config.as_ref())?;
    let votes_path = require(args.votes.or(config.votes), "--votes")?;
    let truth_path = require(args.truth.or(config.truth), "--truth")?;
    let data = load_votes_csv(&votes_path)?;
    let truth = load_truth_csv(&truth_path)?;
    let kinds = match args.kinds.or(config.kinds) {
        Some(names) => parse_kinds(&names)?,
        None => ALL_KINDS.to_vec(),
    };
    let floor = args.floor.or(config.floor).unwrap_or(labelmodel::DEFAULT_COFIRE_FLOOR);
    let names: Vec<String> = match args.lfs.or(config.lfs) {
        Some(path) => load_lfs_json(&path)?.iter().map(|lf| lf.name().to_owned()).collect(),
        None => (0..data.m()).map(|j| format!("lf{j}")).collect(),
    };
    if names.len() != data.m() {
        return Err(Error::DimMismatch {
            what: "LF names vs vote columns",
            expected: data.m(),
            got: names.len(),
        });
    }
    let cands = candidate_pairs(&data, floor);
    let ranked = rank_dependencies(&data, &truth, &kinds, &cands)?;
    std::fs::create_dir_all(&args.out)?;
    write_ranked_csv(&args.out.join("ranked.csv"), &ranked, &names)?;
    if let Some(d) = args.top_d.or(config.top_d) {
        let selected = select_top_d(&ranked, d);
        write_json(&args.out.join("selected.json"), &selected)?;
    }
    println!(
        "ranked {} candidate pairs under {} kinds -> {}",
        cands.len(),
        kinds.len(),
        args.out.display()
    );
    Ok(())
}

// ===== train =====

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Model JSON supplying posteriors for the noise-aware loss.
    #[arg(long)]
    model: Option<PathBuf>,
    /// True labels, used only to evaluate the trained classifier.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Feature CSV; defaults to the one-hot encoding of the votes.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverride,
    /// Output metrics JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct TrainCmdConfig {
    votes: Option<PathBuf>,
    model: Option<PathBuf>,
    truth: Option<PathBuf>,
    features: Option<PathBuf>,
    train: TrainConfig,
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let config: TrainCmdConfig = load_config(args.config.as_ref())?;
    let votes_path = require(args.votes.or(config.votes), "--votes")?;
    let model_path = require(args.model.or(config.model), "--model")?;
    let truth_path = require(args.truth.or(config.truth), "--truth")?;
    let data = load_votes_csv(&votes_path)?;
    let params = load_model_json(&model_path)?;
    let truth = load_truth_csv(&truth_path)?;
    let features = match args.features.or(config.features) {
        Some(path) => load_features_csv(&path)?,
        None => one_hot_features(&data),
    };
    let train_config = args.train.apply(config.train)?;
    let posteriors = posterior_vector(&params, &data)?;
    let clf = train_noise_aware(&features, &posteriors, &train_config)?;
    let scores = clf.predict_batch(&features)?;
    let metrics = Metrics {
        roc_auc: roc_auc(&scores, &truth)?,
        brier: mean_brier(&scores, &truth)?,
        risk_gap: None,
    };
    write_json(&args.out, &metrics)?;
    println!("roc_auc {:.6}  brier {:.6}", metrics.roc_auc, metrics.brier);
    Ok(())
}

// ===== sweep =====

#[derive(Args)]
struct SweepArgs {
    /// Sweep config JSON; required unless --votes/--truth build a file source.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vote CSV; with --truth, overrides the config's data source.
    #[arg(long)]
    votes: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let mut config: SweepConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let votes = require(args.votes.clone(), "--config or --votes/--truth")?;
            let truth = require(args.truth.clone(), "--truth")?;
            SweepConfig {
                source: DataSource::Files { votes, truth },
                d_values: vec![0, 1, 3, 5, 10, 20, 40],
                kinds: ALL_KINDS.to_vec(),
                runs: 20,
                seed: 0,
                fit: FitConfig::default(),
                train: TrainConfig::default(),
                cofire_floor: labelmodel::DEFAULT_COFIRE_FLOOR,
            }
        }
    };
    if let (Some(votes), Some(truth)) = (&args.votes, &args.truth) {
        config.source = DataSource::Files { votes: votes.clone(), truth: truth.clone() };
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let records = run_sweep(&config)?;
    let csv = sweep_records_csv(&records);
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, &csv)?;
    print!("{csv}");
    Ok(())
}

// ===== verify-bounds =====

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    m_min: Option<usize>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies the certified bounds before comparison. Below 1 this
    /// corrupts them on purpose; it is the campaign's negative control.
    #[arg(long)]
    certified_scale: Option<f64>,
    /// Optional output JSON for the campaign summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct VerifyConfig {
    trials: Option<usize>,
    m_min: Option<usize>,
    m_max: Option<usize>,
    seed: Option<u64>,
    certified_scale: Option<f64>,
}

fn verify_bounds(args: VerifyArgs) -> Result<()> {
    let config: VerifyConfig = load_config(args.config.as_ref())?;
    let trials = args.trials.or(config.trials).unwrap_or(1000);
    let m_min = args.m_min.or(config.m_min).unwrap_or(2);
    let m_max = args.m_max.or(config.m_max).unwrap_or(5);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let scale = args.certified_scale.or(config.certified_scale).unwrap_or(1.0);
    let summary = run_bound_campaign_scaled(trials, (m_min, m_max), seed, scale)?;
    if let Some(out) = &args.out {
        write_json(out, &summary)?;
    }
    print!("{}", summary.table());
    Ok(())
}

// ===== Tests =====
