//! Probabilistic modeling of weak-supervision label sources.
//!
//! The core object is a discrete exponential-family joint over m labeling
//! function votes in {-1, 0, +1} and a latent binary class label, with
//! per-source accuracy weights and optional pairwise dependency factors
//! (fixing, reinforcing, priority, bolstering, negated). On top of it the
//! crate provides:
//!
//! - closed-form posteriors and exact enumeration-based inference (m <= 12),
//! - maximum marginal-likelihood fitting, exact or via persistent Gibbs
//!   chains,
//! - exact and Gibbs samplers for synthetic data,
//! - certified L1 error bounds comparing a dependency-aware model against an
//!   independent baseline, with empirical verification campaigns,
//! - brute-force dependency discovery with top-d selection,
//! - a small noise-aware downstream trainer consuming posterior soft labels,
//! - text/CSV/JSON ingestion for keyword labeling functions and datasets.
//!
//! All randomized procedures take explicit u64 seeds and are deterministic
//! given them, including under thread-pool parallelism.

pub mod bounds;
pub mod discovery;
pub mod downstream;
pub mod error;
pub mod factors;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod sampler;
pub mod sweep;

pub use bounds::{
    empirical_kl, empirical_max_posterior_gap, intermediate_risk_bound, kl_bound,
    measured_posterior_bound, posterior_bound, risk_gap_bound, BoundReport,
};
pub use discovery::{
    candidate_pairs, factor_strength, rank_dependencies, select_top_d, DependencyScore,
    RankedDependencies, DEFAULT_COFIRE_FLOOR,
};
pub use downstream::{
    empirical_risk_gap, mean_brier, noise_aware_loss, one_hot_features, one_hot_row, roc_auc,
    train_noise_aware, train_with_trace, Classifier, FeatureMatrix, LossKind, Metrics, TrainConfig,
};
pub use error::{Error, Result};
pub use factors::{
    accuracy_factor, dependency_factor, factor_vector, flip_sensitivity, DependencyKind,
    DependencySpec, Label, LabelMatrix, Vote, ALL_KINDS,
};
pub use fit::{fit, fit_exact, fit_gibbs, FitConfig, FitMode, FitReport};
pub use ingest::{
    apply_keyword_lfs, load_corpus_json, load_features_csv, load_lfs_json, load_model_json,
    load_truth_csv, load_votes_csv, save_dataset, save_model_json, save_truth_csv, save_votes_csv,
    tokenize, write_ranked_csv, KeywordLF, TextCorpus,
};
pub use model::{
    grad_log_marginal_likelihood, joint_prob, log_marginal_likelihood, log_partition,
    marginal_prob, n_states, partition_function, posterior, posterior_vector, row_to_state,
    state_to_row, ModelParams, ENUMERATION_CAP,
};
pub use sampler::{gibbs_sample, sample_exact, SyntheticDataset};
pub use sweep::{
    bound_report_with_risk, run_bound_campaign, run_bound_campaign_scaled, run_sweep,
    sweep_records_csv, CampaignSummary, DataSource, SweepConfig, SweepRecord,
};
