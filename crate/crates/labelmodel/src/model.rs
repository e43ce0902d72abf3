//! The exponential-family joint over votes and the latent label, with exact
//! enumeration machinery.
//!
//! The joint is p(lambda, y) proportional to exp(mu1 . phi1(lambda, y) +
//! mu2 . phi2(lambda, y)), where phi1 are the per-LF accuracy factors and phi2
//! the pairwise dependency factors. M = 0 is the conditionally independent
//! model. Exact computations enumerate all 2 * 3^m states, so they are capped
//! at m <= ENUMERATION_CAP; larger models go through the Gibbs paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{
    dependency_factor_votes, validate_deps, DependencySpec, LabelMatrix, Label, Vote,
};

/// Exact enumeration is limited to 2 * 3^12 (about 1.06M) joint states.
pub const ENUMERATION_CAP: usize = 12;

/// Starting accuracy offset for ascent, breaking the label-flip symmetry.
///
/// At exactly zero parameters the marginal-likelihood gradient's accuracy
/// components vanish identically for every dataset (the posterior is uniform
/// and the model expectation cancels), so ascent started at zero never moves
/// when no dependencies are modeled. A small positive offset selects the
/// convention that labeling functions beat chance on average.
pub const SYMMETRY_BREAK_OFFSET: f64 = 0.01;

// ===== Parameters =====

/// Model parameters: accuracy weights mu1 (length m), dependency weights mu2
/// bound one-to-one to a dependency list (length M).
///
/// Invariants enforced at construction: all entries finite, mu2 and deps have
/// equal length, dependency indices valid for m, no duplicate dependencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsWire", into = "ModelParamsWire")]
pub struct ModelParams {
    mu1: Vec<f64>,
    mu2: Vec<f64>,
    deps: Vec<DependencySpec>,
}

#[derive(Serialize, Deserialize, Clone)]
struct ModelParamsWire {
    m: usize,
    mu1: Vec<f64>,
    deps: Vec<DependencySpec>,
    mu2: Vec<f64>,
}

impl TryFrom<ModelParamsWire> for ModelParams {
    type Error = Error;

    fn try_from(w: ModelParamsWire) -> Result<Self> {
        if w.m != w.mu1.len() {
            return Err(Error::DimMismatch {
                what: "model json m vs mu1",
                expected: w.m,
                got: w.mu1.len(),
            });
        }
        ModelParams::new(w.mu1, w.mu2, w.deps)
    }
}

impl From<ModelParams> for ModelParamsWire {
    fn from(p: ModelParams) -> Self {
        ModelParamsWire {
            m: p.mu1.len(),
            mu1: p.mu1,
            deps: p.deps,
            mu2: p.mu2,
        }
    }
}

impl ModelParams {
    pub fn new(mu1: Vec<f64>, mu2: Vec<f64>, deps: Vec<DependencySpec>) -> Result<Self> {
        if mu2.len() != deps.len() {
            return Err(Error::DimMismatch {
                what: "mu2 vs deps",
                expected: deps.len(),
                got: mu2.len(),
            });
        }
        if mu1.iter().chain(&mu2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "model parameters" });
        }
        let deps: Vec<DependencySpec> = deps.into_iter().map(DependencySpec::canonical).collect();
        validate_deps(&deps, mu1.len())?;
        Ok(Self { mu1, mu2, deps })
    }

    /// The conditionally independent model (M = 0).
    pub fn independent(mu1: Vec<f64>) -> Result<Self> {
        Self::new(mu1, Vec::new(), Vec::new())
    }

    pub fn zeros(m: usize, deps: Vec<DependencySpec>) -> Result<Self> {
        let n_deps = deps.len();
        Self::new(vec![0.0; m], vec![0.0; n_deps], deps)
    }

    pub fn m(&self) -> usize {
        self.mu1.len()
    }

    pub fn n_deps(&self) -> usize {
        self.deps.len()
    }

    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn mu2(&self) -> &[f64] {
        &self.mu2
    }

    pub fn deps(&self) -> &[DependencySpec] {
        &self.deps
    }

    /// Replaces the weight vectors, keeping the dependency list.
    pub(crate) fn with_weights(&self, mu1: Vec<f64>, mu2: Vec<f64>) -> Result<Self> {
        Self::new(mu1, mu2, self.deps.clone())
    }
}

// ===== State indexing =====

/// Number of vote rows for m labeling functions.
pub fn n_states(m: usize) -> usize {
    3usize.pow(m as u32)
}

/// Decodes a state index into a vote row; LF 0 is the least significant trit.
pub fn state_to_row(state: usize, m: usize) -> Vec<Vote> {
    let mut out = Vec::with_capacity(m);
    let mut s = state;
    for _ in 0..m {
        out.push((s % 3) as i8 - 1);
        s /= 3;
    }
    out
}

pub fn row_to_state(row: &[Vote]) -> usize {
    let mut state = 0usize;
    for (j, &v) in row.iter().enumerate() {
        state += (v + 1) as usize * 3usize.pow(j as u32);
    }
    state
}

pub(crate) fn check_cap(m: usize) -> Result<()> {
    if m > ENUMERATION_CAP {
        Err(Error::CapExceeded { m, cap: ENUMERATION_CAP })
    } else {
        Ok(())
    }
}

// ===== Numeric helpers =====

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logsumexp2(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// ===== Enumeration tables =====

/// Precomputed per-state factor values for a fixed (m, deps) structure.
///
/// Weights change across fit iterations but the factor tables do not, so the
/// tables are built once and reused. Layout: `votes[state * m + j]` is
/// lambda_j; `dep_values[(state * 2 + y_idx) * n_deps + l]` is the l-th
/// dependency factor, with y_idx 0 for y = -1 and 1 for y = +1.
pub struct Enumeration {
    pub m: usize,
    pub n_states: usize,
    n_deps: usize,
    votes: Vec<i8>,
    dep_values: Vec<i8>,
}

impl Enumeration {
    pub fn new(m: usize, deps: &[DependencySpec]) -> Result<Self> {
        check_cap(m)?;
        validate_deps(deps, m)?;
        let n_states = n_states(m);
        let n_deps = deps.len();
        let mut votes = vec![0i8; n_states * m];
        let mut dep_values = vec![0i8; n_states * 2 * n_deps];
        let mut row = vec![-1i8; m];
        for state in 0..n_states {
            votes[state * m..(state + 1) * m].copy_from_slice(&row);
            for (l, spec) in deps.iter().enumerate() {
                let lj = row[spec.j];
                let lk = row[spec.k];
                dep_values[(state * 2) * n_deps + l] = dependency_factor_votes(spec.kind, lj, lk, -1);
                dep_values[(state * 2 + 1) * n_deps + l] = dependency_factor_votes(spec.kind, lj, lk, 1);
            }
            // Increment the trit counter; LF 0 is least significant.
            for v in row.iter_mut() {
                if *v < 1 {
                    *v += 1;
                    break;
                }
                *v = -1;
            }
        }
        Ok(Self { m, n_states, n_deps, votes, dep_values })
    }

    pub fn row(&self, state: usize) -> &[Vote] {
        &self.votes[state * self.m..(state + 1) * self.m]
    }

    pub fn dep_values(&self, state: usize, y: Label) -> &[i8] {
        let y_idx = if y > 0 { 1 } else { 0 };
        let base = (state * 2 + y_idx) * self.n_deps;
        &self.dep_values[base..base + self.n_deps]
    }

    /// Unnormalized log joint for every state, ordered [state][y = -1, y = +1].
    pub fn log_joints(&self, mu1: &[f64], mu2: &[f64]) -> Vec<f64> {
        assert_eq!(mu1.len(), self.m);
        assert_eq!(mu2.len(), self.n_deps);
        let mut out = vec![0.0; self.n_states * 2];
        for state in 0..self.n_states {
            let row = self.row(state);
            let acc: f64 = row.iter().zip(mu1).map(|(&v, w)| w * f64::from(v)).sum();
            for (y_idx, y_sign) in [(0usize, -1.0), (1usize, 1.0)] {
                let base = (state * 2 + y_idx) * self.n_deps;
                let dep: f64 = self.dep_values[base..base + self.n_deps]
                    .iter()
                    .zip(mu2)
                    .map(|(&v, w)| w * f64::from(v))
                    .sum();
                out[state * 2 + y_idx] = acc * y_sign + dep;
            }
        }
        out
    }
}

// ===== Core model computations =====

/// Log of the unnormalized density: mu1 . phi1(row, y) + mu2 . phi2(row, y).
pub fn unnormalized_log_joint(params: &ModelParams, row: &[Vote], y: Label) -> f64 {
    debug_assert_eq!(row.len(), params.m());
    let acc: f64 = row
        .iter()
        .zip(params.mu1())
        .map(|(&v, w)| w * f64::from(v * y))
        .sum();
    let dep: f64 = params
        .deps()
        .iter()
        .zip(params.mu2())
        .map(|(spec, w)| w * f64::from(dependency_factor_votes(spec.kind, row[spec.j], row[spec.k], y)))
        .sum();
    acc + dep
}

/// Log partition function by log-sum-exp over the enumerated states.
pub fn log_partition(params: &ModelParams) -> Result<f64> {
    let en = Enumeration::new(params.m(), params.deps())?;
    Ok(logsumexp(&en.log_joints(params.mu1(), params.mu2())))
}

/// Partition function Z; prefer `log_partition` inside other computations.
pub fn partition_function(params: &ModelParams) -> Result<f64> {
    Ok(log_partition(params)?.exp())
}

/// Normalized joint probability of one (row, y) state.
pub fn joint_prob(params: &ModelParams, row: &[Vote], y: Label) -> Result<f64> {
    let log_z = log_partition(params)?;
    Ok((unnormalized_log_joint(params, row, y) - log_z).exp())
}

/// Marginal probability of a vote row, summing the label out.
pub fn marginal_prob(params: &ModelParams, row: &[Vote]) -> Result<f64> {
    let log_z = log_partition(params)?;
    let lp = logsumexp2(
        unnormalized_log_joint(params, row, -1),
        unnormalized_log_joint(params, row, 1),
    );
    Ok((lp - log_z).exp())
}

/// Closed-form posterior p(y = +1 | row): a sigmoid of the factor difference.
///
/// No enumeration involved; the partition function cancels in the conditional,
/// leaving sigma(2 mu1 . phi1(row, +1) + mu2 . (phi2(row, +1) - phi2(row, -1))).
pub fn posterior(params: &ModelParams, row: &[Vote]) -> f64 {
    sigmoid(posterior_logit(params, row))
}

/// Log-odds of y = +1 given the row; the sigmoid argument of `posterior`.
pub(crate) fn posterior_logit(params: &ModelParams, row: &[Vote]) -> f64 {
    let acc: f64 = row
        .iter()
        .zip(params.mu1())
        .map(|(&v, w)| w * f64::from(v))
        .sum();
    let mut s = 2.0 * acc;
    for (spec, w) in params.deps().iter().zip(params.mu2()) {
        let lj = row[spec.j];
        let lk = row[spec.k];
        let diff = dependency_factor_votes(spec.kind, lj, lk, 1)
            - dependency_factor_votes(spec.kind, lj, lk, -1);
        s += w * f64::from(diff);
    }
    s
}

/// Posterior p(y = +1 | row) for every row of a matrix.
pub fn posterior_vector(params: &ModelParams, data: &LabelMatrix) -> Result<Vec<f64>> {
    if data.m() != params.m() {
        return Err(Error::DimMismatch {
            what: "posterior data columns vs model m",
            expected: params.m(),
            got: data.m(),
        });
    }
    use rayon::prelude::*;
    Ok((0..data.n())
        .into_par_iter()
        .map(|i| posterior(params, data.row(i)))
        .collect())
}

/// Collapses a matrix into sorted (row, count) pairs.
///
/// Sorting makes downstream accumulation order deterministic no matter how the
/// matrix was assembled.
pub fn collapse_rows(data: &LabelMatrix) -> Vec<(Vec<Vote>, u64)> {
    let mut counts: std::collections::BTreeMap<Vec<Vote>, u64> = std::collections::BTreeMap::new();
    for row in data.rows() {
        *counts.entry(row.to_vec()).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// Sum over rows of log p(row): the latent-variable marginal log-likelihood.
pub fn log_marginal_likelihood(params: &ModelParams, data: &LabelMatrix) -> Result<f64> {
    if data.m() != params.m() {
        return Err(Error::DimMismatch {
            what: "likelihood data columns vs model m",
            expected: params.m(),
            got: data.m(),
        });
    }
    let log_z = log_partition(params)?;
    let mut total = 0.0;
    for (row, count) in collapse_rows(data) {
        let lp = logsumexp2(
            unnormalized_log_joint(params, &row, -1),
            unnormalized_log_joint(params, &row, 1),
        );
        total += count as f64 * (lp - log_z);
    }
    Ok(total)
}

/// Gradient of the marginal log-likelihood (sum form), length m + M.
///
/// Component form: sum_i E[phi(row_i, y) | row_i] - n E_model[phi]. The data
/// side uses the closed-form posterior; the model side enumerates.
pub fn grad_log_marginal_likelihood(params: &ModelParams, data: &LabelMatrix) -> Result<Vec<f64>> {
    if data.m() != params.m() {
        return Err(Error::DimMismatch {
            what: "gradient data columns vs model m",
            expected: params.m(),
            got: data.m(),
        });
    }
    let en = Enumeration::new(params.m(), params.deps())?;
    let n = data.n() as f64;
    let model_expect = model_expectation(params, &en);
    let mut grad = data_conditional_expectation(params, &collapse_rows(data));
    for (g, e) in grad.iter_mut().zip(&model_expect) {
        *g -= n * e;
    }
    Ok(grad)
}

/// E_model[phi] under the current parameters, by enumeration.
pub(crate) fn model_expectation(params: &ModelParams, en: &Enumeration) -> Vec<f64> {
    let log_joints = en.log_joints(params.mu1(), params.mu2());
    let log_z = logsumexp(&log_joints);
    model_expectation_from(params, en, &log_joints, log_z)
}

/// Same, from precomputed log joints and log partition.
pub(crate) fn model_expectation_from(
    params: &ModelParams,
    en: &Enumeration,
    log_joints: &[f64],
    log_z: f64,
) -> Vec<f64> {
    let m = params.m();
    let n_deps = params.n_deps();
    let mut expect = vec![0.0; m + n_deps];
    for state in 0..en.n_states {
        let row = en.row(state);
        for (y_idx, y_sign) in [(0usize, -1.0f64), (1usize, 1.0f64)] {
            let p = (log_joints[state * 2 + y_idx] - log_z).exp();
            if p == 0.0 {
                continue;
            }
            for (j, &v) in row.iter().enumerate() {
                expect[j] += p * f64::from(v) * y_sign;
            }
            let dep_vals = en.dep_values(state, if y_idx == 1 { 1 } else { -1 });
            for (l, &v) in dep_vals.iter().enumerate() {
                expect[m + l] += p * f64::from(v);
            }
        }
    }
    expect
}

/// sum_i E[phi(row_i, y) | row_i] over collapsed rows, using the closed-form
/// posterior; valid at any m.
pub(crate) fn data_conditional_expectation(
    params: &ModelParams,
    collapsed: &[(Vec<Vote>, u64)],
) -> Vec<f64> {
    let m = params.m();
    let n_deps = params.n_deps();
    let mut sum = vec![0.0; m + n_deps];
    for (row, count) in collapsed {
        let c = *count as f64;
        let p = posterior(params, row);
        let tilt = 2.0 * p - 1.0;
        for (j, &v) in row.iter().enumerate() {
            sum[j] += c * f64::from(v) * tilt;
        }
        for (l, (spec, _)) in params.deps().iter().zip(params.mu2()).enumerate() {
            let lj = row[spec.j];
            let lk = row[spec.k];
            let pos = f64::from(dependency_factor_votes(spec.kind, lj, lk, 1));
            let neg = f64::from(dependency_factor_votes(spec.kind, lj, lk, -1));
            sum[m + l] += c * (p * pos + (1.0 - p) * neg);
        }
    }
    sum
}
