//! Synthetic data generation from a known ground-truth model.
//!
//! Two mechanisms: exact inverse-CDF sampling over the enumerated joint (m
//! within the cap), and single-site Gibbs for larger m. Both are deterministic
//! given the seed; the exact sampler additionally gives each row its own
//! counter-mode stream so sharding cannot change the output.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::factors::{dependency_factor_votes, DependencySpec, Label, LabelMatrix, Vote};
use crate::model::{logsumexp, posterior, Enumeration, ModelParams};

/// A sampled (votes, truth) dataset together with its provenance.
///
/// Serialization covers provenance only; the vote and truth tables travel as
/// CSV files (see the ingest module), which also reconstructs datasets.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticDataset {
    #[serde(skip)]
    pub labels: LabelMatrix,
    #[serde(skip)]
    pub truth: Vec<Label>,
    pub source_params: ModelParams,
    pub seed: u64,
}

/// Draws n i.i.d. (row, y) pairs by inverse-CDF over the enumerated joint.
///
/// Row i uses stream i of a counter-mode generator seeded from `seed`, so any
/// sharding of the row range reproduces identical data.
pub fn sample_exact(params: &ModelParams, n: usize, seed: u64) -> Result<SyntheticDataset> {
    let en = Enumeration::new(params.m(), params.deps())?;
    let log_joints = en.log_joints(params.mu1(), params.mu2());
    let log_z = logsumexp(&log_joints);
    // Cumulative probabilities over states ordered [state][y = -1, y = +1].
    let mut cdf = Vec::with_capacity(log_joints.len());
    let mut acc = 0.0;
    for lj in &log_joints {
        acc += (lj - log_z).exp();
        cdf.push(acc);
    }
    let m = params.m();
    let draws: Vec<(Vec<Vote>, Label)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u: f64 = rng.random::<f64>() * acc;
            let idx = match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(exact) => exact + 1,
                Err(ins) => ins,
            }
            .min(cdf.len() - 1);
            let state = idx / 2;
            let y = if idx % 2 == 1 { 1 } else { -1 };
            (en.row(state).to_vec(), y)
        })
        .collect();
    let mut data = Vec::with_capacity(n * m);
    let mut truth = Vec::with_capacity(n);
    for (row, y) in draws {
        data.extend_from_slice(&row);
        truth.push(y);
    }
    Ok(SyntheticDataset {
        labels: LabelMatrix::new(n, m, data)?,
        truth,
        source_params: params.clone(),
        seed,
    })
}

// ===== Gibbs machinery =====

/// Per-LF index of the dependencies that touch it, for cheap conditionals.
pub(crate) struct DepIndex {
    // touching[j] lists dependency list positions where LF j appears.
    touching: Vec<Vec<usize>>,
}

impl DepIndex {
    pub(crate) fn new(m: usize, deps: &[DependencySpec]) -> Self {
        let mut touching = vec![Vec::new(); m];
        for (l, spec) in deps.iter().enumerate() {
            touching[spec.j].push(l);
            touching[spec.k].push(l);
        }
        Self { touching }
    }
}

/// One Gibbs chain over the m + 1 variables, with its own generator.
pub(crate) struct GibbsChain {
    pub(crate) row: Vec<Vote>,
    pub(crate) y: Label,
    rng: ChaCha8Rng,
}

impl GibbsChain {
    /// Initializes the chain uniformly at random from its own stream.
    pub(crate) fn init(m: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let row = (0..m).map(|_| rng.random_range(-1..=1) as i8).collect();
        let y = if rng.random::<f64>() < 0.5 { -1 } else { 1 };
        Self { row, y, rng }
    }

    /// One full sweep: lambda_1 .. lambda_m in order, then y.
    pub(crate) fn sweep(&mut self, params: &ModelParams, index: &DepIndex) {
        let m = params.m();
        for j in 0..m {
            // Unnormalized conditional log-weights for lambda_j = -1, 0, +1.
            let mut s = [0.0f64; 3];
            let original = self.row[j];
            for (vi, v) in [-1i8, 0, 1].into_iter().enumerate() {
                self.row[j] = v;
                let mut lw = params.mu1()[j] * f64::from(v * self.y);
                for &l in &index.touching[j] {
                    let spec = &params.deps()[l];
                    lw += params.mu2()[l]
                        * f64::from(dependency_factor_votes(
                            spec.kind,
                            self.row[spec.j],
                            self.row[spec.k],
                            self.y,
                        ));
                }
                s[vi] = lw;
            }
            self.row[j] = original;
            let max = s[0].max(s[1]).max(s[2]);
            let w = [(s[0] - max).exp(), (s[1] - max).exp(), (s[2] - max).exp()];
            let total = w[0] + w[1] + w[2];
            let u = self.rng.random::<f64>() * total;
            self.row[j] = if u < w[0] {
                -1
            } else if u < w[0] + w[1] {
                0
            } else {
                1
            };
        }
        let p = posterior(params, &self.row);
        self.y = if self.rng.random::<f64>() < p { 1 } else { -1 };
    }
}

/// Single-chain Gibbs sampling: burn_in sweeps, then one recorded state every
/// `thin` sweeps until n states are collected.
pub fn gibbs_sample(
    params: &ModelParams,
    n: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    assert!(burn_in >= 1 && thin >= 1, "burn_in and thin must be >= 1");
    let m = params.m();
    let index = DepIndex::new(m, params.deps());
    let mut chain = GibbsChain::init(m, seed, 0);
    for _ in 0..burn_in {
        chain.sweep(params, &index);
    }
    let mut data = Vec::with_capacity(n * m);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..thin {
            chain.sweep(params, &index);
        }
        data.extend_from_slice(&chain.row);
        truth.push(chain.y);
    }
    Ok(SyntheticDataset {
        labels: LabelMatrix::new(n, m, data)?,
        truth,
        source_params: params.clone(),
        seed,
    })
}
