//! Votes, labels, labeling-function dependencies, and the factor functions
//! that define the joint model.
//!
//! Everything here is a pure integer-valued evaluation. The dependency case
//! tables only ever produce {-1, 0, +1}, so exhaustive tests can compare
//! exactly, with no tolerances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeling-function vote: -1, 0 (abstain), or +1.
pub type Vote = i8;

/// A class label: -1 or +1. Never 0.
pub type Label = i8;

pub fn validate_vote(v: i8) -> bool {
    matches!(v, -1 | 0 | 1)
}

pub fn validate_label(v: i8) -> bool {
    matches!(v, -1 | 1)
}

// ===== Label matrix =====

/// Row-major n x m grid of votes; row i is the vote vector for example i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    m: usize,
    data: Vec<Vote>,
}

impl LabelMatrix {
    /// Builds a matrix from row-major data, validating every entry.
    pub fn new(n: usize, m: usize, data: Vec<Vote>) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::DimMismatch {
                what: "label matrix data",
                expected: n * m,
                got: data.len(),
            });
        }
        // n = 0 is allowed so an empty synthetic dataset is representable;
        // modeling entry points reject empty data where it is meaningless.
        if m == 0 {
            return Err(Error::Config("label matrix must have m >= 1".into()));
        }
        if let Some(bad) = data.iter().find(|v| !validate_vote(**v)) {
            return Err(Error::Config(format!("vote {bad} outside {{-1, 0, +1}}")));
        }
        Ok(Self { n, m, data })
    }

    pub fn from_rows(rows: &[Vec<Vote>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimMismatch {
                    what: "label matrix row",
                    expected: m,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(n, m, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[Vote] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> Vote {
        self.data[i * self.m + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Vote]> {
        self.data.chunks_exact(self.m)
    }
}

// ===== Dependency kinds and specs =====

/// The five pairwise dependency factor kinds. In all asymmetric kinds the
/// convention is that LF k acts on LF j (k fixes j, k has priority over j, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependencyKind {
    Fixing,
    Reinforcing,
    Priority,
    Bolstering,
    Negated,
}

pub const ALL_KINDS: [DependencyKind; 5] = [
    DependencyKind::Fixing,
    DependencyKind::Reinforcing,
    DependencyKind::Priority,
    DependencyKind::Bolstering,
    DependencyKind::Negated,
];

impl DependencyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DependencyKind::Fixing => "fixing",
            DependencyKind::Reinforcing => "reinforcing",
            DependencyKind::Priority => "priority",
            DependencyKind::Bolstering => "bolstering",
            DependencyKind::Negated => "negated",
        }
    }

    /// True for kinds whose case table is symmetric in (j, k).
    pub fn is_symmetric(self) -> bool {
        matches!(self, DependencyKind::Bolstering)
    }
}

impl std::fmt::Display for DependencyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DependencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixing" => Ok(DependencyKind::Fixing),
            "reinforcing" => Ok(DependencyKind::Reinforcing),
            "priority" => Ok(DependencyKind::Priority),
            "bolstering" => Ok(DependencyKind::Bolstering),
            "negated" => Ok(DependencyKind::Negated),
            other => Err(Error::Config(format!("unknown dependency kind '{other}'"))),
        }
    }
}

/// An ordered LF pair (j, k) plus a factor kind. Ordering matters for the
/// asymmetric kinds; bolstering is stored with j < k so equal pairs compare
/// equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencySpec {
    pub j: usize,
    pub k: usize,
    pub kind: DependencyKind,
}

impl DependencySpec {
    pub fn new(j: usize, k: usize, kind: DependencyKind) -> Self {
        Self { j, k, kind }.canonical()
    }

    /// Canonical storage form: symmetric kinds get j < k.
    pub fn canonical(self) -> Self {
        if self.kind.is_symmetric() && self.j > self.k {
            Self {
                j: self.k,
                k: self.j,
                kind: self.kind,
            }
        } else {
            self
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.j == self.k {
            return Err(Error::InvalidDependency(format!(
                "j and k must differ, got ({}, {})",
                self.j, self.k
            )));
        }
        if self.j >= m || self.k >= m {
            return Err(Error::InvalidDependency(format!(
                "indices ({}, {}) out of range for m = {m}",
                self.j, self.k
            )));
        }
        Ok(())
    }
}

/// Validates a dependency list against m and rejects duplicates.
///
/// Duplicates are compared after canonicalization, so bolstering (j, k) and
/// (k, j) count as the same factor. Duplicated factors are a reparameterization
/// trap for fitting: two copies of one factor make the weight split arbitrary.
pub fn validate_deps(deps: &[DependencySpec], m: usize) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for spec in deps {
        spec.validate(m)?;
        if !seen.insert(spec.canonical()) {
            return Err(Error::InvalidDependency(format!(
                "duplicate dependency ({}, {}, {})",
                spec.j, spec.k, spec.kind
            )));
        }
    }
    Ok(())
}

// ===== Factor evaluations =====

/// Accuracy factor vector: component j is lambda_j * y.
///
/// Odd in y: flipping the label negates every component.
pub fn accuracy_factor(row: &[Vote], y: Label) -> Vec<i8> {
    row.iter().map(|&v| v * y).collect()
}

/// One pairwise dependency factor evaluated on raw votes.
///
/// The case tables (k acts on j):
/// - fixing:      +1 if lj = -y and lk = y; -1 if lj = 0 and lk != 0
/// - reinforcing: +1 if lj = lk = y;        -1 if lj = 0 and lk != 0
/// - priority:    +1 if lj = -y and lk = y; -1 if lj = y and lk = -y
/// - bolstering:  +1 if lj = lk = y;        -1 if lj = lk != y (both voting) or lj = -lk != 0
/// - negated:     +1 if lj = -y and lk = y; -1 if lj = y and lk = -y, or lj = lk != 0
///
/// All other combinations, including any double abstain, evaluate to 0.
pub fn dependency_factor_votes(kind: DependencyKind, lj: Vote, lk: Vote, y: Label) -> i8 {
    match kind {
        DependencyKind::Fixing => {
            if lj == -y && lk == y {
                1
            } else if lj == 0 && lk != 0 {
                -1
            } else {
                0
            }
        }
        DependencyKind::Reinforcing => {
            if lj == y && lk == y {
                1
            } else if lj == 0 && lk != 0 {
                -1
            } else {
                0
            }
        }
        DependencyKind::Priority => {
            if lj == -y && lk == y {
                1
            } else if lj == y && lk == -y {
                -1
            } else {
                0
            }
        }
        DependencyKind::Bolstering => {
            if lj == y && lk == y {
                1
            } else if (lj == lk && lj != 0 && lj != y) || (lj == -lk && lj != 0) {
                -1
            } else {
                0
            }
        }
        DependencyKind::Negated => {
            if lj == -y && lk == y {
                1
            } else if (lj == y && lk == -y) || (lj == lk && lj != 0) {
                -1
            } else {
                0
            }
        }
    }
}

/// Dependency factor for a spec applied to a full vote row.
pub fn dependency_factor(spec: &DependencySpec, row: &[Vote], y: Label) -> i8 {
    dependency_factor_votes(spec.kind, row[spec.j], row[spec.k], y)
}

/// Concatenated factor vector (accuracy factors, then dependency factors in
/// list order); length m + M, every entry in {-1, 0, +1}.
pub fn factor_vector(row: &[Vote], y: Label, deps: &[DependencySpec]) -> Vec<i8> {
    let mut out = accuracy_factor(row, y);
    out.extend(deps.iter().map(|spec| dependency_factor(spec, row, y)));
    out
}

// ===== Label-flip sensitivity =====

/// Max over all (lj, lk) of |phi(lambda, +1) - phi(lambda, -1)| for one kind.
///
/// This is the constant a mean-value bound on the posterior difference actually
/// needs from the factor. It is 1 for fixing and reinforcing but 2 for
/// priority, bolstering, and negated, whose tables take nonzero values of
/// opposite sign for the two labels on some vote pairs. Bound formulas that
/// assume the constant is 1 for every kind do not dominate in general; see
/// `bounds::posterior_bound_measured`.
pub fn flip_sensitivity(kind: DependencyKind) -> i8 {
    let mut max = 0;
    for lj in [-1, 0, 1] {
        for lk in [-1, 0, 1] {
            let d = (dependency_factor_votes(kind, lj, lk, 1)
                - dependency_factor_votes(kind, lj, lk, -1))
            .abs();
            max = max.max(d);
        }
    }
    max
}

/// The (lj, lk) vote pairs on which a kind's factor moves by more than 1 when
/// the label flips.
pub fn flip_sensitivity_witnesses(kind: DependencyKind) -> Vec<(Vote, Vote)> {
    let mut out = Vec::new();
    for lj in [-1, 0, 1] {
        for lk in [-1, 0, 1] {
            let d = (dependency_factor_votes(kind, lj, lk, 1)
                - dependency_factor_votes(kind, lj, lk, -1))
            .abs();
            if d > 1 {
                out.push((lj, lk));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand-transcribed 18-case tables, (lj, lk) in lexicographic order over
    // {-1, 0, +1} x {-1, 0, +1}; first array is y = +1, second y = -1.
    const FIXING_TABLE: ([i8; 9], [i8; 9]) = (
        [0, 0, 1, -1, 0, -1, 0, 0, 0],
        [0, 0, 0, -1, 0, -1, 1, 0, 0],
    );
    const REINFORCING_TABLE: ([i8; 9], [i8; 9]) = (
        [0, 0, 0, -1, 0, -1, 0, 0, 1],
        [1, 0, 0, -1, 0, -1, 0, 0, 0],
    );
    const PRIORITY_TABLE: ([i8; 9], [i8; 9]) = (
        [0, 0, 1, 0, 0, 0, -1, 0, 0],
        [0, 0, -1, 0, 0, 0, 1, 0, 0],
    );
    const BOLSTERING_TABLE: ([i8; 9], [i8; 9]) = (
        [-1, 0, -1, 0, 0, 0, -1, 0, 1],
        [1, 0, -1, 0, 0, 0, -1, 0, -1],
    );
    const NEGATED_TABLE: ([i8; 9], [i8; 9]) = (
        [-1, 0, 1, 0, 0, 0, -1, 0, -1],
        [-1, 0, -1, 0, 0, 0, 1, 0, -1],
    );

    fn table_for(kind: DependencyKind) -> ([i8; 9], [i8; 9]) {
        match kind {
            DependencyKind::Fixing => FIXING_TABLE,
            DependencyKind::Reinforcing => REINFORCING_TABLE,
            DependencyKind::Priority => PRIORITY_TABLE,
            DependencyKind::Bolstering => BOLSTERING_TABLE,
            DependencyKind::Negated => NEGATED_TABLE,
        }
    }

    #[test]
    fn dependency_tables_match_hand_transcription_exhaustively() {
        for kind in ALL_KINDS {
            let (pos, neg) = table_for(kind);
            let mut idx = 0;
            for lj in [-1, 0, 1] {
                for lk in [-1, 0, 1] {
                    assert_eq!(
                        dependency_factor_votes(kind, lj, lk, 1),
                        pos[idx],
                        "{kind} ({lj}, {lk}, +1)"
                    );
                    assert_eq!(
                        dependency_factor_votes(kind, lj, lk, -1),
                        neg[idx],
                        "{kind} ({lj}, {lk}, -1)"
                    );
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn spot_examples_per_kind() {
        use DependencyKind::*;
        assert_eq!(dependency_factor_votes(Fixing, -1, 1, 1), 1);
        assert_eq!(dependency_factor_votes(Fixing, 0, 1, 1), -1);
        assert_eq!(dependency_factor_votes(Reinforcing, 1, 1, 1), 1);
        assert_eq!(dependency_factor_votes(Priority, 1, -1, 1), -1);
        assert_eq!(dependency_factor_votes(Bolstering, 1, -1, 1), -1);
        assert_eq!(dependency_factor_votes(Negated, 1, 1, -1), -1);
        for kind in ALL_KINDS {
            for y in [-1, 1] {
                assert_eq!(dependency_factor_votes(kind, 0, 0, y), 0, "{kind} double abstain");
            }
        }
    }

    #[test]
    fn factor_values_stay_in_range_and_cases_are_exclusive() {
        // At most one of the +1/-1 cases can fire for a fixed (lj, lk, y);
        // equivalently every output is in {-1, 0, +1}, checked exhaustively.
        for kind in ALL_KINDS {
            for lj in [-1, 0, 1] {
                for lk in [-1, 0, 1] {
                    for y in [-1, 1] {
                        let v = dependency_factor_votes(kind, lj, lk, y);
                        assert!((-1..=1).contains(&v));
                    }
                }
            }
        }
    }

    #[test]
    fn accuracy_factor_is_odd_in_y() {
        let rows: [&[Vote]; 4] = [&[1], &[0, 0], &[1, -1, 0], &[-1, -1, 1, 0, 1]];
        for row in rows {
            let plus = accuracy_factor(row, 1);
            let minus = accuracy_factor(row, -1);
            assert_eq!(plus.len(), row.len());
            for (a, b) in plus.iter().zip(&minus) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn accuracy_factor_examples() {
        assert_eq!(accuracy_factor(&[1], 1), vec![1]);
        assert_eq!(accuracy_factor(&[0, 0], -1), vec![0, 0]);
        assert_eq!(accuracy_factor(&[1, -1, 0], -1), vec![-1, 1, 0]);
    }

    #[test]
    fn factor_vector_concatenates_in_order() {
        assert_eq!(factor_vector(&[1, -1], 1, &[]), vec![1, -1]);
        let deps = [DependencySpec::new(0, 1, DependencyKind::Fixing)];
        assert_eq!(factor_vector(&[-1, 1], 1, &deps), vec![-1, 1, 1]);
        for v in factor_vector(&[-1, 0, 1], -1, &deps) {
            assert!((-1..=1).contains(&v));
        }
    }

    #[test]
    fn flip_sensitivity_is_one_for_two_kinds_and_two_for_three() {
        use DependencyKind::*;
        assert_eq!(flip_sensitivity(Fixing), 1);
        assert_eq!(flip_sensitivity(Reinforcing), 1);
        assert_eq!(flip_sensitivity(Priority), 2);
        assert_eq!(flip_sensitivity(Bolstering), 2);
        assert_eq!(flip_sensitivity(Negated), 2);
    }

    #[test]
    fn flip_witnesses_are_the_expected_vote_pairs() {
        use DependencyKind::*;
        assert!(flip_sensitivity_witnesses(Fixing).is_empty());
        assert!(flip_sensitivity_witnesses(Reinforcing).is_empty());
        assert_eq!(flip_sensitivity_witnesses(Priority), vec![(-1, 1), (1, -1)]);
        assert_eq!(flip_sensitivity_witnesses(Bolstering), vec![(-1, -1), (1, 1)]);
        assert_eq!(flip_sensitivity_witnesses(Negated), vec![(-1, 1), (1, -1)]);
    }

    #[test]
    fn duplicate_deps_rejected_including_bolstering_mirror() {
        use DependencyKind::*;
        let dup = [
            DependencySpec::new(0, 1, Fixing),
            DependencySpec::new(0, 1, Fixing),
        ];
        assert!(validate_deps(&dup, 3).is_err());
        // (1, 0) bolstering canonicalizes onto (0, 1) bolstering.
        let mirror = [
            DependencySpec::new(0, 1, Bolstering),
            DependencySpec { j: 1, k: 0, kind: Bolstering },
        ];
        assert!(validate_deps(&mirror, 3).is_err());
        // Fixing (0, 1) vs (1, 0) are genuinely different factors.
        let ok = [
            DependencySpec::new(0, 1, Fixing),
            DependencySpec::new(1, 0, Fixing),
        ];
        assert!(validate_deps(&ok, 3).is_ok());
    }

    #[test]
    fn self_pair_and_out_of_range_rejected() {
        let self_pair = DependencySpec { j: 0, k: 0, kind: DependencyKind::Fixing };
        assert!(self_pair.validate(2).is_err());
        let oob = DependencySpec::new(0, 5, DependencyKind::Priority);
        assert!(oob.validate(2).is_err());
    }

    #[test]
    fn label_matrix_validates_entries_and_shape() {
        assert!(LabelMatrix::new(2, 2, vec![1, 0, -1, 1]).is_ok());
        assert!(LabelMatrix::new(2, 2, vec![1, 0, -1]).is_err());
        assert!(LabelMatrix::new(2, 2, vec![1, 0, -1, 2]).is_err());
        assert!(LabelMatrix::new(0, 3, vec![]).is_ok());
        assert!(LabelMatrix::new(1, 0, vec![]).is_err());
        let m = LabelMatrix::from_rows(&[vec![1, 0], vec![-1, 1]]).unwrap();
        assert_eq!(m.row(1), &[-1, 1]);
        assert_eq!(m.get(0, 1), 0);
    }

    #[test]
    fn kind_strings_round_trip() {
        for kind in ALL_KINDS {
            let s = kind.to_string();
            assert_eq!(s.parse::<DependencyKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{s}\""));
        }
    }
}
