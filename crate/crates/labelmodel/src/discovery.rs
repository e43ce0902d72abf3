//! Dependency discovery against true labels: score every candidate LF pair
//! under every factor kind, rank per kind, select the strongest d of each.
//!
//! Truth labels enter only here (and in final evaluation); model fitting never
//! sees them. The caller passes truth as a separate vector so that quarantine
//! is visible at the API boundary.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factors::{
    dependency_factor, validate_label, DependencyKind, DependencySpec, Label, LabelMatrix,
    ALL_KINDS,
};

// ===== Scores and rankings =====

/// One scored candidate: the sum of the factor over the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyScore {
    pub spec: DependencySpec,
    pub value: i64,
}

/// Per-kind descending score lists.
///
/// Kinds appear in declaration order (fixing, reinforcing, priority,
/// bolstering, negated) restricted to those requested; each list is sorted by
/// value descending with ties broken by (j, k) ascending.
#[derive(Debug, Clone)]
pub struct RankedDependencies {
    per_kind: Vec<(DependencyKind, Vec<DependencyScore>)>,
}

impl RankedDependencies {
    pub fn kinds(&self) -> impl Iterator<Item = DependencyKind> + '_ {
        self.per_kind.iter().map(|(k, _)| *k)
    }

    pub fn list(&self, kind: DependencyKind) -> Option<&[DependencyScore]> {
        self.per_kind
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, l)| l.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (DependencyKind, &[DependencyScore])> {
        self.per_kind.iter().map(|(k, l)| (*k, l.as_slice()))
    }
}

fn check_truth(data: &LabelMatrix, truth: &[Label]) -> Result<()> {
    if truth.len() != data.n() {
        return Err(Error::DimMismatch {
            what: "truth labels vs rows",
            expected: data.n(),
            got: truth.len(),
        });
    }
    if let Some(bad) = truth.iter().find(|y| !validate_label(**y)) {
        return Err(Error::Config(format!("truth label {bad} outside {{-1, +1}}")));
    }
    Ok(())
}

/// Exact integer strength: sum of the dependency factor over all rows.
pub fn factor_strength(data: &LabelMatrix, truth: &[Label], spec: &DependencySpec) -> Result<i64> {
    check_truth(data, truth)?;
    spec.validate(data.m())?;
    let mut total = 0i64;
    for (row, &y) in data.rows().zip(truth) {
        total += i64::from(dependency_factor(spec, row, y));
    }
    Ok(total)
}

/// Scores all (candidate pair, kind) combinations and ranks per kind.
///
/// Bolstering is symmetric, so mirrored candidates collapse to one canonical
/// entry under it; other kinds keep both orientations. Scoring is parallel
/// over candidates; the final sort makes the merge order deterministic.
pub fn rank_dependencies(
    data: &LabelMatrix,
    truth: &[Label],
    kinds: &[DependencyKind],
    candidates: &[(usize, usize)],
) -> Result<RankedDependencies> {
    check_truth(data, truth)?;
    for &(j, k) in candidates {
        DependencySpec::new(j, k, DependencyKind::Fixing).validate(data.m())?;
    }
    let mut per_kind = Vec::new();
    for &kind in ALL_KINDS.iter().filter(|k| kinds.contains(k)) {
        let mut seen = std::collections::BTreeSet::new();
        let specs: Vec<DependencySpec> = candidates
            .iter()
            .map(|&(j, k)| DependencySpec::new(j, k, kind))
            .filter(|s| seen.insert((s.j, s.k)))
            .collect();
        let mut scored: Vec<DependencyScore> = specs
            .par_iter()
            .map(|spec| {
                let value = data
                    .rows()
                    .zip(truth)
                    .map(|(row, &y)| i64::from(dependency_factor(spec, row, y)))
                    .sum();
                DependencyScore { spec: spec.clone(), value }
            })
            .collect();
        scored.sort_by(|a, b| {
            b.value
                .cmp(&a.value)
                .then(a.spec.j.cmp(&b.spec.j))
                .then(a.spec.k.cmp(&b.spec.k))
        });
        per_kind.push((kind, scored));
    }
    Ok(RankedDependencies { per_kind })
}

/// Takes the strongest min(d, available) entries per kind.
///
/// Only strictly positive scores are eligible: a nonpositive score means the
/// true labels provide no evidence for the dependency, and modeling it would
/// only spend bound budget. The same (j, k) pair may appear under several
/// kinds.
pub fn select_top_d(ranked: &RankedDependencies, d: usize) -> Vec<DependencySpec> {
    let mut out = Vec::new();
    for (_, list) in ranked.iter() {
        out.extend(
            list.iter()
                .take_while(|s| s.value > 0)
                .take(d)
                .map(|s| s.spec.clone()),
        );
    }
    out
}

/// All ordered pairs (j, k), j != k, whose joint non-abstain count meets the
/// floor. Scores on pairs that never co-fire are meaningless.
pub fn candidate_pairs(data: &LabelMatrix, min_cofire: usize) -> Vec<(usize, usize)> {
    let m = data.m();
    let mut cofire = vec![0usize; m * m];
    for row in data.rows() {
        for j in 0..m {
            if row[j] == 0 {
                continue;
            }
            for k in j + 1..m {
                if row[k] != 0 {
                    cofire[j * m + k] += 1;
                }
            }
        }
    }
    let mut out = Vec::new();
    for j in 0..m {
        for k in 0..m {
            if j == k {
                continue;
            }
            let (a, b) = if j < k { (j, k) } else { (k, j) };
            if cofire[a * m + b] >= min_cofire {
                out.push((j, k));
            }
        }
    }
    out
}

/// Default co-fire floor for candidate generation.
pub const DEFAULT_COFIRE_FLOOR: usize = 10;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::dependency_factor_votes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (LabelMatrix, Vec<Label>) {
        let rows: Vec<Vec<i8>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-1..=1) as i8).collect())
            .collect();
        let truth: Vec<Label> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.5 { -1 } else { 1 })
            .collect();
        (LabelMatrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn strength_hand_case_fixing() {
        // (-1,+1) helps, (0,+1) is an abstain miss, (+1,+1) is neutral.
        let data = LabelMatrix::from_rows(&[vec![-1, 1], vec![0, 1], vec![1, 1]]).unwrap();
        let truth = vec![1, 1, 1];
        let spec = DependencySpec::new(0, 1, DependencyKind::Fixing);
        assert_eq!(factor_strength(&data, &truth, &spec).unwrap(), 0);
    }

    #[test]
    fn strength_zero_when_factor_never_activates() {
        let data = LabelMatrix::from_rows(&[vec![0, 0], vec![0, 0]]).unwrap();
        let truth = vec![1, -1];
        for kind in ALL_KINDS {
            let spec = DependencySpec::new(0, 1, kind);
            assert_eq!(factor_strength(&data, &truth, &spec).unwrap(), 0);
        }
    }

    #[test]
    fn strength_is_bounded_by_n_and_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let (a, ta) = random_instance(&mut rng, 30, 4);
            let (b, tb) = random_instance(&mut rng, 20, 4);
            let mut rows = Vec::new();
            rows.extend(a.rows().map(|r| r.to_vec()));
            rows.extend(b.rows().map(|r| r.to_vec()));
            let ab = LabelMatrix::from_rows(&rows).unwrap();
            let tab: Vec<Label> = ta.iter().chain(&tb).copied().collect();
            for kind in ALL_KINDS {
                let spec = DependencySpec::new(2, 1, kind);
                let va = factor_strength(&a, &ta, &spec).unwrap();
                let vb = factor_strength(&b, &tb, &spec).unwrap();
                let vab = factor_strength(&ab, &tab, &spec).unwrap();
                assert_eq!(vab, va + vb);
                assert!(va.unsigned_abs() as usize <= a.n());
            }
        }
    }

    #[test]
    fn global_sign_flip_leaves_every_kind_invariant() {
        // Each kind's table only relates votes to y, so negating both sides
        // fixes every entry; checked over all 18 cases per kind.
        for kind in ALL_KINDS {
            for lj in [-1i8, 0, 1] {
                for lk in [-1i8, 0, 1] {
                    for y in [-1i8, 1] {
                        assert_eq!(
                            dependency_factor_votes(kind, lj, lk, y),
                            dependency_factor_votes(kind, -lj, -lk, -y),
                            "{kind:?} ({lj},{lk},{y})"
                        );
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (data, truth) = random_instance(&mut rng, 40, 3);
        let flipped_rows: Vec<Vec<i8>> = data.rows().map(|r| r.iter().map(|v| -v).collect()).collect();
        let flipped = LabelMatrix::from_rows(&flipped_rows).unwrap();
        let flipped_truth: Vec<Label> = truth.iter().map(|y| -y).collect();
        for kind in ALL_KINDS {
            let spec = DependencySpec::new(0, 2, kind);
            assert_eq!(
                factor_strength(&data, &truth, &spec).unwrap(),
                factor_strength(&flipped, &flipped_truth, &spec).unwrap()
            );
        }
    }

    #[test]
    fn one_pair_all_kinds_gives_five_singletons() {
        let data = LabelMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]).unwrap();
        let truth = vec![1, -1];
        let ranked = rank_dependencies(&data, &truth, &ALL_KINDS, &[(0, 1)]).unwrap();
        assert_eq!(ranked.kinds().count(), 5);
        for (_, list) in ranked.iter() {
            assert_eq!(list.len(), 1);
        }
    }

    #[test]
    fn ties_break_lexicographically() {
        // All-abstain data scores every candidate 0.
        let data = LabelMatrix::from_rows(&[vec![0, 0, 0]]).unwrap();
        let truth = vec![1];
        let cands = [(2, 0), (0, 1), (1, 0), (0, 2)];
        let ranked = rank_dependencies(&data, &truth, &[DependencyKind::Fixing], &cands).unwrap();
        let order: Vec<(usize, usize)> = ranked.list(DependencyKind::Fixing).unwrap()
            .iter()
            .map(|s| (s.spec.j, s.spec.k))
            .collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (1, 0), (2, 0)]);
    }

    #[test]
    fn ranking_matches_brute_force_resort() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (data, truth) = random_instance(&mut rng, 50, 4);
        let mut cands = Vec::new();
        for j in 0..4 {
            for k in 0..4 {
                if j != k {
                    cands.push((j, k));
                }
            }
        }
        let ranked = rank_dependencies(&data, &truth, &ALL_KINDS, &cands).unwrap();
        for kind in ALL_KINDS {
            let mut expect: Vec<DependencyScore> = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for &(j, k) in &cands {
                let spec = DependencySpec::new(j, k, kind);
                if !seen.insert((spec.j, spec.k)) {
                    continue;
                }
                let value = factor_strength(&data, &truth, &spec).unwrap();
                expect.push(DependencyScore { spec, value });
            }
            expect.sort_by(|a, b| {
                b.value
                    .cmp(&a.value)
                    .then(a.spec.j.cmp(&b.spec.j))
                    .then(a.spec.k.cmp(&b.spec.k))
            });
            assert_eq!(ranked.list(kind).unwrap(), expect.as_slice(), "{kind:?}");
        }
    }

    #[test]
    fn bolstering_collapses_mirrored_candidates() {
        let data = LabelMatrix::from_rows(&[vec![1, 1]]).unwrap();
        let truth = vec![1];
        let ranked = rank_dependencies(
            &data,
            &truth,
            &[DependencyKind::Fixing, DependencyKind::Bolstering],
            &[(0, 1), (1, 0)],
        )
        .unwrap();
        assert_eq!(ranked.list(DependencyKind::Fixing).unwrap().len(), 2);
        assert_eq!(ranked.list(DependencyKind::Bolstering).unwrap().len(), 1);
    }

    // Block A rows make fixing/priority/negated positive on (0, 1); block B
    // rows make reinforcing/bolstering positive on (2, 3).
    fn five_kind_instance() -> (LabelMatrix, Vec<Label>) {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..20 {
            rows.push(vec![-1, 1, 0, 0]);
            truth.push(1);
        }
        for _ in 0..20 {
            rows.push(vec![0, 0, 1, 1]);
            truth.push(1);
        }
        (LabelMatrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn top_one_per_kind_selects_five_specs() {
        let (data, truth) = five_kind_instance();
        let mut cands = Vec::new();
        for j in 0..4 {
            for k in 0..4 {
                if j != k {
                    cands.push((j, k));
                }
            }
        }
        let ranked = rank_dependencies(&data, &truth, &ALL_KINDS, &cands).unwrap();
        let picked = select_top_d(&ranked, 1);
        assert_eq!(picked.len(), 5);
        let find = |kind: DependencyKind| {
            picked
                .iter()
                .find(|s| s.kind == kind)
                .map(|s| (s.j, s.k))
                .unwrap()
        };
        assert_eq!(find(DependencyKind::Fixing), (0, 1));
        assert_eq!(find(DependencyKind::Priority), (0, 1));
        assert_eq!(find(DependencyKind::Negated), (0, 1));
        assert_eq!(find(DependencyKind::Reinforcing), (2, 3));
        assert_eq!(find(DependencyKind::Bolstering), (2, 3));
    }

    #[test]
    fn selection_respects_d_and_positivity() {
        let (data, truth) = five_kind_instance();
        let cands = [(0, 1), (2, 3)];
        let ranked = rank_dependencies(&data, &truth, &ALL_KINDS, &cands).unwrap();
        assert!(select_top_d(&ranked, 0).is_empty());
        let all = select_top_d(&ranked, 100);
        for spec in &all {
            let v = factor_strength(&data, &truth, spec).unwrap();
            assert!(v > 0, "{spec:?} selected with score {v}");
        }
        let mut keys: Vec<_> = all.iter().map(|s| (s.j, s.k, s.kind)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), all.len(), "duplicate selection");
        let expected: usize = ranked
            .iter()
            .map(|(_, list)| list.iter().filter(|s| s.value > 0).count().min(100))
            .sum();
        assert_eq!(all.len(), expected);
    }

    #[test]
    fn candidate_floor_filters_rare_cofires() {
        let mut rows = Vec::new();
        // LFs 0 and 1 co-fire 12 times; 0 and 2 co-fire twice; 1 and 2 never.
        for _ in 0..12 {
            rows.push(vec![1, -1, 0]);
        }
        rows.push(vec![1, 0, 1]);
        rows.push(vec![-1, 0, 1]);
        let data = LabelMatrix::from_rows(&rows).unwrap();
        let pairs = candidate_pairs(&data, 10);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let loose = candidate_pairs(&data, 1);
        assert_eq!(loose.len(), 4);
        assert!(loose.contains(&(0, 2)) && loose.contains(&(2, 0)));
    }
}
