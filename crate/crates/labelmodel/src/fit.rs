//! Maximum marginal-likelihood fitting by deterministic full-batch gradient
//! ascent.
//!
//! Exact mode computes the model-expectation side of the gradient by
//! enumeration; Gibbs mode replaces it with averages over persistent sampling
//! chains so m can exceed the enumeration cap. The data-side conditional
//! expectation uses the closed-form posterior in both modes and is exact at
//! any m.
//!
//! Step size, tolerance, and the L2 penalty all apply to the per-example mean
//! objective (mean log-likelihood minus l2_penalty * ||params||^2), so configs
//! transfer across dataset sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{validate_deps, DependencySpec, LabelMatrix};
use crate::model::{
    collapse_rows, data_conditional_expectation, logsumexp, logsumexp2, model_expectation_from,
    row_to_state, Enumeration, ModelParams, ENUMERATION_CAP, SYMMETRY_BREAK_OFFSET,
};
use crate::sampler::{DepIndex, GibbsChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Exact,
    Gibbs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub l2_penalty: f64,
    /// Stop when the infinity norm of the mean-objective gradient drops below
    /// this.
    pub tolerance: f64,
    pub seed: u64,
    pub mode: FitMode,
    pub gibbs_chains: usize,
    pub burn_in: usize,
    pub steps_per_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            max_iters: 1000,
            l2_penalty: 0.0,
            tolerance: 1e-6,
            seed: 0,
            mode: FitMode::Exact,
            gibbs_chains: 64,
            burn_in: 100,
            steps_per_iter: 2,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive and finite".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config("l2_penalty must be nonnegative".into()));
        }
        if self.mode == FitMode::Gibbs
            && (self.gibbs_chains == 0 || self.burn_in == 0 || self.steps_per_iter == 0)
        {
            return Err(Error::Config(
                "gibbs_chains, burn_in, and steps_per_iter must be positive in Gibbs mode".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub iterations: usize,
    /// Exact log marginal likelihood at the final parameters; None above the
    /// enumeration cap, where the partition function is unavailable.
    pub final_log_likelihood: Option<f64>,
    /// Infinity norm of the mean-objective gradient at the final parameters.
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Mean objective per iteration; not serialized.
    #[serde(skip)]
    pub ll_trace: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Shared ascent driver. `model_term` fills the model-expectation side and
/// returns the exact mean log-likelihood when it is computable.
fn ascend<F>(
    data: &LabelMatrix,
    deps: Vec<DependencySpec>,
    config: &FitConfig,
    mut model_term: F,
) -> Result<FitReport>
where
    F: FnMut(&ModelParams) -> (Vec<f64>, Option<f64>),
{
    config.validate()?;
    let m = data.m();
    validate_deps(&deps, m)?;
    let n_deps = deps.len();
    let n = data.n() as f64;

    // max_iters = 0 is "no fitting requested": report the all-zero model.
    // Otherwise ascent starts from a small positive accuracy offset; the
    // all-zero point is a stationary saddle of the likelihood (see
    // SYMMETRY_BREAK_OFFSET) and ascent started exactly there never moves.
    let mut mu1 = if config.max_iters == 0 {
        vec![0.0; m]
    } else {
        vec![SYMMETRY_BREAK_OFFSET; m]
    };
    let mut mu2 = vec![0.0; n_deps];
    let mut params = ModelParams::new(mu1.clone(), mu2.clone(), deps)?;

    if data.n() == 0 {
        // Nothing to fit against; report the starting point.
        return Ok(FitReport {
            params,
            iterations: 0,
            final_log_likelihood: Some(0.0),
            final_grad_norm: 0.0,
            converged: true,
            ll_trace: Vec::new(),
        });
    }

    let collapsed = collapse_rows(data);
    let mut ll_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    for _ in 0..config.max_iters {
        let (grad, mean_ll) = {
            let (model_e, mean_ll) = model_term(&params);
            let data_e = data_conditional_expectation(&params, &collapsed);
            let mut grad = vec![0.0; m + n_deps];
            for c in 0..m + n_deps {
                let theta = if c < m { mu1[c] } else { mu2[c - m] };
                grad[c] = data_e[c] / n - model_e[c] - 2.0 * config.l2_penalty * theta;
            }
            (grad, mean_ll)
        };
        if let Some(ll) = mean_ll {
            ll_trace.push(ll);
        }
        grad_norm = inf_norm(&grad);
        if grad_norm < config.tolerance {
            converged = true;
            break;
        }
        for c in 0..m + n_deps {
            if c < m {
                mu1[c] += config.step_size * grad[c];
            } else {
                mu2[c - m] += config.step_size * grad[c];
            }
        }
        if mu1.iter().chain(&mu2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "fit parameters" });
        }
        params = params.with_weights(mu1.clone(), mu2.clone())?;
        iterations += 1;
    }

    // Final diagnostics at the returned parameters.
    let (model_e, final_mean_ll) = model_term(&params);
    let data_e = data_conditional_expectation(&params, &collapsed);
    let mut grad = vec![0.0; m + n_deps];
    for c in 0..m + n_deps {
        let theta = if c < m { mu1[c] } else { mu2[c - m] };
        grad[c] = data_e[c] / n - model_e[c] - 2.0 * config.l2_penalty * theta;
    }
    if !converged {
        grad_norm = inf_norm(&grad);
        converged = grad_norm < config.tolerance;
    }
    if let Some(ll) = final_mean_ll {
        ll_trace.push(ll);
        if !ll.is_finite() {
            return Err(Error::NonFinite { what: "fit objective" });
        }
    }

    Ok(FitReport {
        final_log_likelihood: final_mean_ll.map(|ll| ll * n),
        params,
        iterations,
        final_grad_norm: grad_norm,
        converged,
        ll_trace,
    })
}

/// Fits by full-batch ascent with the model expectation enumerated exactly.
pub fn fit_exact(
    data: &LabelMatrix,
    deps: Vec<DependencySpec>,
    config: &FitConfig,
) -> Result<FitReport> {
    let en = Enumeration::new(data.m(), &deps)?;
    let collapsed = collapse_rows(data);
    let states: Vec<usize> = collapsed.iter().map(|(row, _)| row_to_state(row)).collect();
    let counts: Vec<f64> = collapsed.iter().map(|(_, c)| *c as f64).collect();
    let n = data.n() as f64;
    ascend(data, deps, config, move |params| {
        let log_joints = en.log_joints(params.mu1(), params.mu2());
        let log_z = logsumexp(&log_joints);
        let model_e = model_expectation_from(params, &en, &log_joints, log_z);
        let mut ll = 0.0;
        for (s, c) in states.iter().zip(&counts) {
            ll += c * (logsumexp2(log_joints[s * 2], log_joints[s * 2 + 1]) - log_z);
        }
        (model_e, Some(ll / n))
    })
}

/// Fits with the model expectation estimated from persistent Gibbs chains.
///
/// Chains are initialized once from per-chain streams of the seeded generator,
/// then advanced `steps_per_iter` sweeps under the current parameters each
/// iteration; the gradient's model term averages the factor vector over the
/// chains' post-sweep states. Deterministic given the seed.
pub fn fit_gibbs(
    data: &LabelMatrix,
    deps: Vec<DependencySpec>,
    config: &FitConfig,
) -> Result<FitReport> {
    let m = data.m();
    validate_deps(&deps, m)?;
    let deps_for_chains = deps.clone();
    let index = DepIndex::new(m, &deps_for_chains);
    let mut chains: Vec<GibbsChain> = (0..config.gibbs_chains.max(1))
        .map(|i| GibbsChain::init(m, config.seed, i as u64))
        .collect();
    let mut burned_in = false;

    // Under the cap the exact likelihood is cheap enough to report per
    // iteration; above it the partition function is unavailable.
    let en = if m <= ENUMERATION_CAP {
        Some(Enumeration::new(m, &deps)?)
    } else {
        None
    };
    let collapsed = collapse_rows(data);
    let states: Vec<usize> = if en.is_some() {
        collapsed.iter().map(|(row, _)| row_to_state(row)).collect()
    } else {
        Vec::new()
    };
    let counts: Vec<f64> = collapsed.iter().map(|(_, c)| *c as f64).collect();
    let n = data.n().max(1) as f64;

    ascend(data, deps, config, move |params| {
        if !burned_in {
            for chain in chains.iter_mut() {
                for _ in 0..config.burn_in {
                    chain.sweep(params, &index);
                }
            }
            burned_in = true;
        }
        let n_deps = params.n_deps();
        let mut model_e = vec![0.0; m + n_deps];
        for chain in chains.iter_mut() {
            for _ in 0..config.steps_per_iter {
                chain.sweep(params, &index);
            }
            let phi = crate::factors::factor_vector(&chain.row, chain.y, params.deps());
            for (e, v) in model_e.iter_mut().zip(phi) {
                *e += f64::from(v);
            }
        }
        let c = chains.len() as f64;
        for e in model_e.iter_mut() {
            *e /= c;
        }
        let mean_ll = en.as_ref().map(|en| {
            let log_joints = en.log_joints(params.mu1(), params.mu2());
            let log_z = logsumexp(&log_joints);
            let mut ll = 0.0;
            for (s, cnt) in states.iter().zip(&counts) {
                ll += cnt * (logsumexp2(log_joints[s * 2], log_joints[s * 2 + 1]) - log_z);
            }
            ll / n
        });
        (model_e, mean_ll)
    })
}

/// Dispatches on `config.mode`.
pub fn fit(data: &LabelMatrix, deps: Vec<DependencySpec>, config: &FitConfig) -> Result<FitReport> {
    match config.mode {
        FitMode::Exact => fit_exact(data, deps, config),
        FitMode::Gibbs => fit_gibbs(data, deps, config),
    }
}
