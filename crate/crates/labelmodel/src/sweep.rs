//! Orchestration: the over-specification sweep and randomized bound
//! verification campaigns.
//!
//! The sweep measures what happens as more and more discovered dependencies
//! are modeled: for each d it selects the top-d dependencies per kind, fits
//! the dependency-aware model, trains downstream classifiers on its
//! posteriors, and records bound values next to held-out ROC-AUC. Truth
//! labels are used only for discovery and final evaluation; the fit API takes
//! no truth vector, so the quarantine holds by construction.

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    empirical_kl, empirical_max_posterior_gap, intermediate_risk_bound, kl_bound,
    measured_posterior_bound, posterior_bound, BoundReport,
};
use crate::discovery::{candidate_pairs, rank_dependencies, select_top_d, DEFAULT_COFIRE_FLOOR};
use crate::downstream::{
    empirical_risk_gap, one_hot_features, one_hot_row, roc_auc, train_noise_aware, Classifier,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::factors::{DependencyKind, DependencySpec, Label, LabelMatrix, ALL_KINDS};
use crate::fit::{fit, FitConfig};
use crate::ingest::{load_truth_csv, load_votes_csv};
use crate::model::{posterior_vector, ModelParams};
use crate::sampler::sample_exact;

// ===== Sweep configuration =====

/// Where the sweep's votes and truth labels come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic { params: ModelParams, n: usize, seed: u64 },
    Files { votes: PathBuf, truth: PathBuf },
}

fn default_d_values() -> Vec<usize> {
    vec![0, 1, 3, 5, 10, 20, 40]
}

fn default_kinds() -> Vec<DependencyKind> {
    ALL_KINDS.to_vec()
}

fn default_runs() -> usize {
    20
}

fn default_cofire() -> usize {
    DEFAULT_COFIRE_FLOOR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub source: DataSource,
    /// Dependency budgets per kind; 0 is the independent baseline row.
    #[serde(default = "default_d_values")]
    pub d_values: Vec<usize>,
    /// Factor kinds eligible for selection; restricting this runs a
    /// single-kind variant of the sweep.
    #[serde(default = "default_kinds")]
    pub kinds: Vec<DependencyKind>,
    /// Downstream repetitions per sweep point, each with its own seed.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Seed for the train/test split.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_cofire")]
    pub cofire_floor: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() {
            return Err(Error::Config("d_values must be non-empty".into()));
        }
        if self.d_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("d_values must be strictly ascending".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("kinds must be non-empty".into()));
        }
        if self.runs == 0 || self.runs > 100 {
            return Err(Error::Config("runs must be in 1..=100".into()));
        }
        self.fit.validate()?;
        self.train.validate()
    }

    /// Display label for the kinds subset.
    pub fn variant(&self) -> String {
        if ALL_KINDS.iter().all(|k| self.kinds.contains(k)) {
            "all".to_string()
        } else {
            let names: Vec<&str> = ALL_KINDS
                .iter()
                .filter(|k| self.kinds.contains(k))
                .map(|k| k.as_str())
                .collect();
            names.join("+")
        }
    }
}

/// One sweep point: budget, what was actually modeled, bound values, and
/// downstream performance over the runs.
///
/// `posterior_bound` is the certified flip-weighted form; `empirical_gap` is
/// the enumerated max posterior difference against the d = 0 baseline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub variant: String,
    pub d: usize,
    pub n_deps: usize,
    pub mu2_l1: f64,
    pub posterior_bound: f64,
    pub empirical_gap: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

fn load_sweep_data(source: &DataSource) -> Result<(LabelMatrix, Vec<Label>)> {
    match source {
        DataSource::Synthetic { params, n, seed } => {
            let ds = sample_exact(params, *n, *seed)?;
            Ok((ds.labels, ds.truth))
        }
        DataSource::Files { votes, truth } => {
            let data = load_votes_csv(votes)?;
            let labels = load_truth_csv(truth)?;
            if labels.len() != data.n() {
                return Err(Error::DimMismatch {
                    what: "truth rows vs vote rows",
                    expected: data.n(),
                    got: labels.len(),
                });
            }
            Ok((data, labels))
        }
    }
}

fn take_rows(data: &LabelMatrix, idx: &[usize]) -> LabelMatrix {
    let rows: Vec<Vec<i8>> = idx.iter().map(|&i| data.row(i).to_vec()).collect();
    LabelMatrix::from_rows(&rows).expect("source rows are already validated")
}

/// Runs the full sweep; one record per d value, in order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let (data, truth) = load_sweep_data(&config.source)?;
    let n = data.n();
    if n < 4 {
        return Err(Error::Config(format!("sweep needs at least 4 rows, got {n}")));
    }

    // 50/50 split; truth on the train side is seen only by discovery.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(n / 2);
    let train_votes = take_rows(&data, train_idx);
    let test_votes = take_rows(&data, test_idx);
    let train_truth: Vec<Label> = train_idx.iter().map(|&i| truth[i]).collect();
    let test_truth: Vec<Label> = test_idx.iter().map(|&i| truth[i]).collect();

    let theta = fit(&train_votes, vec![], &config.fit)?.params;

    let cands = candidate_pairs(&train_votes, config.cofire_floor);
    let ranked = rank_dependencies(&train_votes, &train_truth, &config.kinds, &cands)?;

    let train_features = one_hot_features(&train_votes);
    let test_features = one_hot_features(&test_votes);
    let variant = config.variant();

    let mut records = Vec::with_capacity(config.d_values.len());
    for &d in &config.d_values {
        let deps: Vec<DependencySpec> = select_top_d(&ranked, d);
        let fitted = fit(&train_votes, deps, &config.fit)?.params;
        // fold, not sum: an empty f64 sum is -0.0, which Display renders "-0".
        let mu2_l1: f64 = fitted.mu2().iter().fold(0.0, |acc, w| acc + w.abs());
        let bound = measured_posterior_bound(&fitted, theta.mu1())?;
        let gap = empirical_max_posterior_gap(&fitted, &theta)?;
        let posteriors = posterior_vector(&fitted, &train_votes)?;

        let aucs: Vec<f64> = (0..config.runs)
            .into_par_iter()
            .map(|r| {
                let train_cfg = TrainConfig {
                    seed: config.train.seed.wrapping_add(r as u64),
                    ..config.train.clone()
                };
                let clf = train_noise_aware(&train_features, &posteriors, &train_cfg)?;
                let scores = clf.predict_batch(&test_features)?;
                roc_auc(&scores, &test_truth)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        let var = if aucs.len() > 1 {
            aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (aucs.len() - 1) as f64
        } else {
            0.0
        };
        records.push(SweepRecord {
            variant: variant.clone(),
            d,
            n_deps: fitted.n_deps(),
            mu2_l1,
            posterior_bound: bound,
            empirical_gap: gap,
            auc_mean: mean,
            auc_std: var.sqrt(),
        });
    }
    Ok(records)
}

/// Plot-ready CSV, one row per sweep point.
pub fn sweep_records_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("variant,d,n_deps,mu2_l1,posterior_bound,empirical_gap,auc_mean,auc_std\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.variant, r.d, r.n_deps, r.mu2_l1, r.posterior_bound, r.empirical_gap, r.auc_mean, r.auc_std
        ));
    }
    out
}

// ===== Bound verification campaign =====

/// Aggregated slacks over a randomized campaign. Min slacks are None when the
/// corresponding protocol ran zero trials.
///
/// The literal quarter-weighted posterior form is tracked separately: it is
/// expected to fail on structures with symmetric factor kinds, so its
/// violations are reported with a witness but do not fail the campaign. The
/// certified comparisons (measured posterior, KL, risk) do.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub trials: usize,
    pub risk_trials: usize,
    pub measured_posterior_min_slack: Option<f64>,
    pub kl_min_slack: Option<f64>,
    pub risk_min_slack: Option<f64>,
    pub literal_posterior_min_slack: Option<f64>,
    pub literal_posterior_violations: usize,
    pub literal_posterior_witness: Option<String>,
}

impl CampaignSummary {
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "n/a".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "pair trials {}  risk trials {}\n",
            self.trials, self.risk_trials
        ));
        out.push_str(&format!(
            "min slack  posterior (measured) {}  conditional-KL {}  risk gap {}\n",
            fmt(self.measured_posterior_min_slack),
            fmt(self.kl_min_slack),
            fmt(self.risk_min_slack),
        ));
        out.push_str(&format!(
            "posterior (literal): {} violation(s), min slack {}\n",
            self.literal_posterior_violations,
            fmt(self.literal_posterior_min_slack),
        ));
        if let Some(w) = &self.literal_posterior_witness {
            out.push_str(&format!("literal witness: {w}\n"));
        }
        out
    }
}

const SLACK_TOLERANCE: f64 = 1e-9;

fn track_min(slot: &mut Option<f64>, value: f64) {
    *slot = Some(slot.map_or(value, |s| s.min(value)));
}

fn random_pair(rng: &mut ChaCha8Rng, m_lo: usize, m_hi: usize) -> (ModelParams, ModelParams) {
    let m = rng.random_range(m_lo..=m_hi);
    let max_deps = if m < 2 { 0 } else { 3 };
    let n_deps = rng.random_range(0..=max_deps);
    let mu1: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut deps: Vec<DependencySpec> = Vec::new();
    let mut mu2 = Vec::new();
    let mut guard = 0;
    while deps.len() < n_deps && guard < 100 {
        guard += 1;
        let j = rng.random_range(0..m);
        let k = rng.random_range(0..m);
        if j == k {
            continue;
        }
        let kind = ALL_KINDS[rng.random_range(0..ALL_KINDS.len())];
        let spec = DependencySpec::new(j, k, kind);
        let mut cand = deps.clone();
        cand.push(spec);
        if crate::factors::validate_deps(&cand, m).is_ok() {
            deps = cand;
            mu2.push(rng.random_range(-2.0..2.0));
        }
    }
    (
        ModelParams::new(mu1, mu2, deps).expect("generated params are valid"),
        ModelParams::independent(theta).expect("generated params are valid"),
    )
}

fn witness_string(p_mu: &ModelParams, p_theta: &ModelParams, bound: f64, empirical: f64) -> String {
    format!(
        "bound {bound:.12} < empirical {empirical:.12} for mu1 {:?}, mu2 {:?}, deps {:?}, theta {:?}",
        p_mu.mu1(),
        p_mu.mu2(),
        p_mu.deps(),
        p_theta.mu1()
    )
}

/// Randomized bound-dominance campaign: `trials` random model pairs for the
/// posterior and KL comparisons, `trials / 2` for the risk-gap comparison.
///
/// Returns the aggregated minimum slacks; fails with a witness if any
/// certified bound is beaten beyond tolerance.
pub fn run_bound_campaign(trials: usize, m_range: (usize, usize), seed: u64) -> Result<CampaignSummary> {
    run_bound_campaign_scaled(trials, m_range, seed, 1.0)
}

/// `run_bound_campaign` with the certified bounds multiplied by
/// `certified_scale` before comparison. A scale below 1 corrupts the bound
/// formulas on purpose; it exists as the negative control proving the
/// campaign detects violations. Production callers use scale 1.
pub fn run_bound_campaign_scaled(
    trials: usize,
    m_range: (usize, usize),
    seed: u64,
    certified_scale: f64,
) -> Result<CampaignSummary> {
    let (m_lo, m_hi) = m_range;
    if m_lo < 1 || m_lo > m_hi {
        return Err(Error::Config(format!("bad m range [{m_lo}, {m_hi}]")));
    }
    crate::model::check_cap(m_hi)?;
    if !(certified_scale > 0.0 && certified_scale.is_finite()) {
        return Err(Error::Config("certified_scale must be positive and finite".into()));
    }
    let mut summary = CampaignSummary {
        trials,
        risk_trials: trials / 2,
        measured_posterior_min_slack: None,
        kl_min_slack: None,
        risk_min_slack: None,
        literal_posterior_min_slack: None,
        literal_posterior_violations: 0,
        literal_posterior_witness: None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let (p_mu, p_theta) = random_pair(&mut rng, m_lo, m_hi);
        let gap = empirical_max_posterior_gap(&p_mu, &p_theta)?;

        let literal = posterior_bound(p_mu.mu1(), p_theta.mu1(), p_mu.mu2())?;
        track_min(&mut summary.literal_posterior_min_slack, literal - gap);
        if gap > literal + SLACK_TOLERANCE {
            summary.literal_posterior_violations += 1;
            if summary.literal_posterior_witness.is_none() {
                summary.literal_posterior_witness =
                    Some(witness_string(&p_mu, &p_theta, literal, gap));
            }
        }

        let measured = certified_scale * measured_posterior_bound(&p_mu, p_theta.mu1())?;
        track_min(&mut summary.measured_posterior_min_slack, measured - gap);
        if gap > measured + SLACK_TOLERANCE {
            return Err(Error::BoundViolation {
                witness: format!(
                    "posterior (measured): {}",
                    witness_string(&p_mu, &p_theta, measured, gap)
                ),
            });
        }

        let kl = empirical_kl(&p_mu, &p_theta)?;
        let kb = certified_scale * kl_bound(p_mu.mu1(), p_theta.mu1(), p_mu.mu2())?;
        track_min(&mut summary.kl_min_slack, kb - kl);
        if kl > kb + SLACK_TOLERANCE {
            return Err(Error::BoundViolation {
                witness: format!("conditional-KL: {}", witness_string(&p_mu, &p_theta, kb, kl)),
            });
        }
    }

    let mut risk_rng = ChaCha8Rng::seed_from_u64(seed);
    risk_rng.set_stream(1);
    for trial in 0..summary.risk_trials {
        let (p_mu, p_theta) = random_pair(&mut risk_rng, m_lo.min(4), m_hi.min(4));
        let clf = Classifier::init(3 * p_mu.m(), seed.wrapping_add(trial as u64));
        let gap = empirical_risk_gap(&p_mu, &p_theta, &clf, one_hot_row)?;
        let bound =
            certified_scale * intermediate_risk_bound(p_mu.mu1(), p_theta.mu1(), p_mu.mu2())?;
        track_min(&mut summary.risk_min_slack, bound - gap);
        if gap > bound + SLACK_TOLERANCE {
            return Err(Error::BoundViolation {
                witness: format!("risk gap: {}", witness_string(&p_mu, &p_theta, bound, gap)),
            });
        }
    }
    Ok(summary)
}

/// Bound report for one fitted pair plus its downstream risk gap; the CLI's
/// verify-bounds uses the campaign instead, this backs the bounds subcommand.
pub fn bound_report_with_risk(
    p_mu: &ModelParams,
    p_theta: &ModelParams,
    gamma: f64,
    classifier: Option<&Classifier>,
) -> Result<BoundReport> {
    let mut report = BoundReport::compute(p_mu, p_theta, gamma)?;
    if let Some(clf) = classifier {
        let gap = empirical_risk_gap(p_mu, p_theta, clf, one_hot_row)?;
        report.set_risk_gap(gap);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        let params = ModelParams::independent(vec![0.9, 0.7, 0.5, 0.8]).unwrap();
        SweepConfig {
            source: DataSource::Synthetic { params, n: 400, seed: 5 },
            d_values: vec![0, 1, 3],
            kinds: ALL_KINDS.to_vec(),
            runs: 2,
            seed: 1,
            fit: FitConfig { max_iters: 300, ..FitConfig::default() },
            train: TrainConfig { epochs: 15, ..TrainConfig::default() },
            cofire_floor: 10,
        }
    }

    #[test]
    fn config_validation_rejects_bad_d_values() {
        let mut config = small_config();
        config.d_values = vec![0, 3, 1];
        assert!(config.validate().is_err());
        config.d_values = vec![1, 1];
        assert!(config.validate().is_err());
        config.d_values = vec![];
        assert!(config.validate().is_err());
    }

    #[test]
    fn variant_label_reflects_kind_subset() {
        let mut config = small_config();
        assert_eq!(config.variant(), "all");
        config.kinds = vec![DependencyKind::Bolstering, DependencyKind::Negated];
        assert_eq!(config.variant(), "bolstering+negated");
        config.kinds = vec![DependencyKind::Negated, DependencyKind::Bolstering];
        assert_eq!(config.variant(), "bolstering+negated");
    }

    #[test]
    fn sweep_baseline_row_is_the_independent_model() {
        let records = run_sweep(&small_config()).unwrap();
        assert_eq!(records.len(), 3);
        let base = &records[0];
        assert_eq!(base.d, 0);
        assert_eq!(base.n_deps, 0);
        assert_eq!(base.mu2_l1, 0.0);
        // d = 0 refits the same independent model the bounds compare against.
        assert_eq!(base.posterior_bound, 0.0);
        assert_eq!(base.empirical_gap, 0.0);
        for r in &records {
            assert!(r.auc_mean > 0.5 && r.auc_mean <= 1.0, "auc {}", r.auc_mean);
            assert!(r.auc_std >= 0.0);
            assert!(r.n_deps <= 5 * r.d);
            assert!(r.posterior_bound + 1e-9 >= r.empirical_gap);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let config = small_config();
        let a = run_sweep(&config).unwrap();
        let b = run_sweep(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(sweep_records_csv(&a), sweep_records_csv(&b));
    }

    #[test]
    fn sweep_csv_layout() {
        let records = vec![SweepRecord {
            variant: "all".into(),
            d: 1,
            n_deps: 5,
            mu2_l1: 0.25,
            posterior_bound: 0.5,
            empirical_gap: 0.1,
            auc_mean: 0.75,
            auc_std: 0.01,
        }];
        let csv = sweep_records_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("variant,d,n_deps,mu2_l1,posterior_bound,empirical_gap,auc_mean,auc_std")
        );
        assert_eq!(lines.next(), Some("all,1,5,0.25,0.5,0.1,0.75,0.01"));
    }

    #[test]
    fn campaign_with_zero_trials_is_empty() {
        let summary = run_bound_campaign(0, (2, 5), 9).unwrap();
        assert_eq!(summary.trials, 0);
        assert!(summary.measured_posterior_min_slack.is_none());
        assert!(summary.kl_min_slack.is_none());
        assert!(summary.risk_min_slack.is_none());
        assert_eq!(summary.literal_posterior_violations, 0);
    }

    #[test]
    fn campaign_certifies_measured_bounds() {
        let summary = run_bound_campaign(150, (2, 5), 20260822).unwrap();
        assert!(summary.measured_posterior_min_slack.unwrap() >= -SLACK_TOLERANCE);
        assert!(summary.kl_min_slack.unwrap() >= -SLACK_TOLERANCE);
        assert!(summary.risk_min_slack.unwrap() >= -SLACK_TOLERANCE);
        let table = summary.table();
        assert!(table.contains("min slack"));
    }

    #[test]
    fn corrupted_bounds_are_detected() {
        match run_bound_campaign_scaled(200, (2, 4), 3, 0.2) {
            Err(Error::BoundViolation { witness }) => {
                assert!(witness.contains("empirical"), "{witness}");
            }
            other => panic!("expected BoundViolation, got {other:?}"),
        }
    }

    #[test]
    fn campaign_m_range_is_validated() {
        assert!(run_bound_campaign(1, (0, 3), 0).is_err());
        assert!(run_bound_campaign(1, (3, 2), 0).is_err());
        assert!(run_bound_campaign(1, (2, 13), 0).is_err());
    }
}
