//! Downstream training on probabilistic labels and the evaluation side of the
//! risk-gap analysis.
//!
//! The classifier is a small fixed-shape network (p -> 16 -> 16 -> 1, tanh
//! hidden units, sigmoid output) trained by mini-batch gradient descent on the
//! noise-aware loss: the posterior-weighted expectation of a per-label loss.
//! Brier loss is the bound-compatible one (it lives in [0, 1]); cross-entropy
//! is offered as a training objective only, and every risk computation here
//! uses Brier.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{Label, LabelMatrix, Vote};
use crate::model::{logsumexp, posterior, Enumeration, ModelParams};

// ===== Features =====

/// Dense n x p feature matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::DimMismatch {
                what: "feature matrix data",
                expected: n * p,
                got: data.len(),
            });
        }
        if p == 0 {
            return Err(Error::Config("feature matrix must have p >= 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "feature matrix entry" });
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimMismatch {
                    what: "feature matrix row",
                    expected: p,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(n, p, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }
}

/// Vote row one-hot encoding: 3 indicators per LF (-1, 0, +1), p = 3m.
///
/// Features built this way are functions of the votes alone, which is what the
/// risk-gap analysis assumes about the feature map.
pub fn one_hot_features(data: &LabelMatrix) -> FeatureMatrix {
    let m = data.m();
    let mut out = Vec::with_capacity(data.n() * 3 * m);
    for row in data.rows() {
        out.extend(row.iter().flat_map(|&v| one_hot_vote(v)));
    }
    FeatureMatrix::new(data.n(), 3 * m, out).expect("one-hot features are finite by construction")
}

fn one_hot_vote(v: Vote) -> [f64; 3] {
    match v {
        -1 => [1.0, 0.0, 0.0],
        0 => [0.0, 1.0, 0.0],
        _ => [0.0, 0.0, 1.0],
    }
}

/// One-hot encoding of a single vote row, matching `one_hot_features`.
pub fn one_hot_row(row: &[Vote]) -> Vec<f64> {
    row.iter().flat_map(|&v| one_hot_vote(v)).collect()
}

// ===== Loss =====

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Squared error against the label indicator; bounded in [0, 1].
    Brier,
    /// Log loss; training-only, excluded from every bound computation.
    CrossEntropy,
}

const PRED_CLAMP: f64 = 1e-12;

fn per_label_loss(pred: f64, y: Label, kind: LossKind) -> f64 {
    let target = if y > 0 { 1.0 } else { 0.0 };
    match kind {
        LossKind::Brier => (pred - target) * (pred - target),
        LossKind::CrossEntropy => {
            let p = pred.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
            if y > 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        }
    }
}

/// Posterior-weighted expected loss:
/// q * L(pred, +1) + (1 - q) * L(pred, -1).
pub fn noise_aware_loss(pred: f64, posterior_pos: f64, kind: LossKind) -> f64 {
    posterior_pos * per_label_loss(pred, 1, kind)
        + (1.0 - posterior_pos) * per_label_loss(pred, -1, kind)
}

// ===== Classifier =====

const HIDDEN: usize = 16;

/// p -> 16 -> 16 -> 1 network, tanh hidden layers, sigmoid output.
///
/// `predict` clamps the sigmoid away from exactly 0 and 1 so the output stays
/// in the open interval even when the logit saturates in floating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    p: usize,
    w1: Vec<f64>, // HIDDEN x p
    b1: Vec<f64>,
    w2: Vec<f64>, // HIDDEN x HIDDEN
    b2: Vec<f64>,
    w3: Vec<f64>, // HIDDEN
    b3: f64,
}

impl Classifier {
    /// Seeded uniform init scaled by 1/sqrt(fan_in).
    pub fn init(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let scale = 1.0 / (cols as f64).sqrt();
            (0..rows * cols)
                .map(|_| rng.random_range(-scale..scale))
                .collect()
        };
        let w1 = layer(HIDDEN, p, &mut rng);
        let b1 = vec![0.0; HIDDEN];
        let w2 = layer(HIDDEN, HIDDEN, &mut rng);
        let b2 = vec![0.0; HIDDEN];
        let w3 = layer(1, HIDDEN, &mut rng);
        Self { p, w1, b1, w2, b2, w3, b3: 0.0 }
    }

    #[cfg(test)]
    pub(crate) fn constant(p: usize, output: f64) -> Self {
        let logit = (output / (1.0 - output)).ln();
        Self {
            p,
            w1: vec![0.0; HIDDEN * p],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN],
            b3: logit,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.p
    }

    fn forward(&self, x: &[f64]) -> ([f64; HIDDEN], [f64; HIDDEN], f64) {
        let mut a1 = [0.0; HIDDEN];
        for h in 0..HIDDEN {
            let mut z = self.b1[h];
            for (j, &xj) in x.iter().enumerate() {
                z += self.w1[h * self.p + j] * xj;
            }
            a1[h] = z.tanh();
        }
        let mut a2 = [0.0; HIDDEN];
        for h in 0..HIDDEN {
            let mut z = self.b2[h];
            for (g, &a) in a1.iter().enumerate() {
                z += self.w2[h * HIDDEN + g] * a;
            }
            a2[h] = z.tanh();
        }
        let mut z3 = self.b3;
        for (h, &a) in a2.iter().enumerate() {
            z3 += self.w3[h] * a;
        }
        (a1, a2, z3)
    }

    /// P(y = +1 | x), in the open interval (0, 1).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let (_, _, z3) = self.forward(x);
        crate::model::sigmoid(z3).clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)
    }

    pub fn predict_batch(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.p() != self.p {
            return Err(Error::DimMismatch {
                what: "classifier input dim",
                expected: self.p,
                got: features.p(),
            });
        }
        Ok((0..features.n()).map(|i| self.predict(features.row(i))).collect())
    }
}

// ===== Training =====

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            loss: LossKind::Brier,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive and finite".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// `train_noise_aware` plus the per-epoch mean training loss.
pub fn train_with_trace(
    features: &FeatureMatrix,
    posteriors: &[f64],
    config: &TrainConfig,
) -> Result<(Classifier, Vec<f64>)> {
    config.validate()?;
    if posteriors.len() != features.n() {
        return Err(Error::DimMismatch {
            what: "posteriors vs feature rows",
            expected: features.n(),
            got: posteriors.len(),
        });
    }
    if let Some(bad) = posteriors.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Config(format!("posterior {bad} outside [0, 1]")));
    }
    let n = features.n();
    let p = features.p();
    let mut clf = Classifier::init(p, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1); // distinct from the init stream
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut g_w1 = vec![0.0; HIDDEN * p];
            let mut g_b1 = [0.0; HIDDEN];
            let mut g_w2 = vec![0.0; HIDDEN * HIDDEN];
            let mut g_b2 = [0.0; HIDDEN];
            let mut g_w3 = [0.0; HIDDEN];
            let mut g_b3 = 0.0;
            for &i in batch {
                let x = features.row(i);
                let q = posteriors[i];
                let (a1, a2, z3) = clf.forward(x);
                let f = crate::model::sigmoid(z3);
                // dL/dz3 for the noise-aware loss. Brier: 2 (f - q) f (1 - f);
                // cross-entropy: the sigmoid factor cancels to f - q.
                let d3 = match config.loss {
                    LossKind::Brier => 2.0 * (f - q) * f * (1.0 - f),
                    LossKind::CrossEntropy => f - q,
                };
                let mut d2 = [0.0; HIDDEN];
                for h in 0..HIDDEN {
                    d2[h] = clf.w3[h] * d3 * (1.0 - a2[h] * a2[h]);
                    g_w3[h] += d3 * a2[h];
                }
                g_b3 += d3;
                let mut d1 = [0.0; HIDDEN];
                for g in 0..HIDDEN {
                    let mut back = 0.0;
                    for h in 0..HIDDEN {
                        back += clf.w2[h * HIDDEN + g] * d2[h];
                        g_w2[h * HIDDEN + g] += d2[h] * a1[g];
                    }
                    d1[g] = back * (1.0 - a1[g] * a1[g]);
                }
                for h in 0..HIDDEN {
                    g_b2[h] += d2[h];
                    g_b1[h] += d1[h];
                    for (j, &xj) in x.iter().enumerate() {
                        g_w1[h * p + j] += d1[h] * xj;
                    }
                }
            }
            let scale = config.step_size / batch.len() as f64;
            for (w, g) in clf.w1.iter_mut().zip(&g_w1) {
                *w -= scale * g;
            }
            for (w, g) in clf.b1.iter_mut().zip(&g_b1) {
                *w -= scale * g;
            }
            for (w, g) in clf.w2.iter_mut().zip(&g_w2) {
                *w -= scale * g;
            }
            for (w, g) in clf.b2.iter_mut().zip(&g_b2) {
                *w -= scale * g;
            }
            for (w, g) in clf.w3.iter_mut().zip(&g_w3) {
                *w -= scale * g;
            }
            clf.b3 -= scale * g_b3;
        }
        if clf.b3.is_nan() || clf.w1.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { what: "classifier weights" });
        }
        let mean_loss = (0..n)
            .map(|i| noise_aware_loss(clf.predict(features.row(i)), posteriors[i], config.loss))
            .sum::<f64>()
            / n.max(1) as f64;
        trace.push(mean_loss);
    }
    Ok((clf, trace))
}

/// Mini-batch gradient descent on the mean noise-aware loss.
pub fn train_noise_aware(
    features: &FeatureMatrix,
    posteriors: &[f64],
    config: &TrainConfig,
) -> Result<Classifier> {
    train_with_trace(features, posteriors, config).map(|(clf, _)| clf)
}

// ===== Evaluation =====

/// Rank-based ROC-AUC with ties counted half.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimMismatch {
            what: "scores vs truth",
            expected: truth.len(),
            got: scores.len(),
        });
    }
    let n_pos = truth.iter().filter(|y| **y > 0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average rank within each tie group, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &t in &idx[i..j] {
            if truth[t] > 0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Mean Brier score of probabilistic predictions against true labels.
pub fn mean_brier(scores: &[f64], truth: &[Label]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimMismatch {
            what: "scores vs truth",
            expected: truth.len(),
            got: scores.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total: f64 = scores
        .iter()
        .zip(truth)
        .map(|(&s, &y)| per_label_loss(s, y, LossKind::Brier))
        .sum();
    Ok(total / scores.len() as f64)
}

/// |R_a(w) - R_b(w)|: both noise-aware Brier risks enumerated exactly.
///
/// Both risks integrate over `p_true`'s vote-row marginal; they differ only in
/// which model supplies the posterior weights inside the loss. The feature map
/// must be the deterministic row encoding the classifier was trained on.
pub fn empirical_risk_gap<F>(
    p_true: &ModelParams,
    p_misspec: &ModelParams,
    classifier: &Classifier,
    feature_map: F,
) -> Result<f64>
where
    F: Fn(&[Vote]) -> Vec<f64>,
{
    if p_misspec.m() != p_true.m() {
        return Err(Error::DimMismatch {
            what: "model pair m",
            expected: p_true.m(),
            got: p_misspec.m(),
        });
    }
    let en = Enumeration::new(p_true.m(), p_true.deps())?;
    let log_joints = en.log_joints(p_true.mu1(), p_true.mu2());
    let log_z = logsumexp(&log_joints);
    let mut risk_true = 0.0;
    let mut risk_mis = 0.0;
    for state in 0..en.n_states {
        let row = en.row(state);
        let p_row =
            (log_joints[state * 2] - log_z).exp() + (log_joints[state * 2 + 1] - log_z).exp();
        if p_row == 0.0 {
            continue;
        }
        let pred = classifier.predict(&feature_map(row));
        risk_true += p_row * noise_aware_loss(pred, posterior(p_true, row), LossKind::Brier);
        risk_mis += p_row * noise_aware_loss(pred, posterior(p_misspec, row), LossKind::Brier);
    }
    Ok((risk_true - risk_mis).abs())
}

/// Evaluation summary emitted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub roc_auc: f64,
    pub brier: f64,
    pub risk_gap: Option<f64>,
}
