//! Input and output: keyword labeling functions over text, CSV vote/truth/
//! feature tables, and JSON model files.
//!
//! File formats are deliberately plain: votes.csv is headerless with m
//! comma-separated integers per line; truth.csv is one label per line;
//! lfs.json is a list of {"name", "pattern", "emit"} objects; model.json is
//! the serialized parameter set. All files are UTF-8 with LF line endings.
//! Parse errors carry 1-based line and column positions.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discovery::RankedDependencies;
use crate::downstream::FeatureMatrix;
use crate::error::{Error, Result};
use crate::factors::{validate_label, Label, LabelMatrix, Vote};
use crate::model::ModelParams;
use crate::sampler::SyntheticDataset;

// ===== Tokenization =====

/// Lowercases and splits on runs of non-alphanumeric characters.
///
/// No stemming and no stop-word removal; the output depends only on the
/// letter/digit content, so it is idempotent under join-and-retokenize.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

// ===== Keyword labeling functions =====

/// Votes `emit` when a unigram or adjacent bigram occurs in a document.
///
/// The pattern is stored in canonical token form (lowercase, single spaces).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KeywordLFWire", into = "KeywordLFWire")]
pub struct KeywordLF {
    name: String,
    pattern: String,
    emit: Label,
}

#[derive(Serialize, Deserialize)]
struct KeywordLFWire {
    name: String,
    pattern: String,
    emit: i8,
}

impl TryFrom<KeywordLFWire> for KeywordLF {
    type Error = Error;

    fn try_from(wire: KeywordLFWire) -> Result<Self> {
        KeywordLF::new(wire.name, &wire.pattern, wire.emit)
    }
}

impl From<KeywordLF> for KeywordLFWire {
    fn from(lf: KeywordLF) -> Self {
        Self { name: lf.name, pattern: lf.pattern, emit: lf.emit }
    }
}

impl KeywordLF {
    pub fn new(name: String, pattern: &str, emit: Label) -> Result<Self> {
        let tokens = tokenize(pattern);
        if tokens.is_empty() || tokens.len() > 2 {
            return Err(Error::Config(format!(
                "LF '{name}': pattern '{pattern}' must contain 1 or 2 tokens"
            )));
        }
        if !validate_label(emit) {
            return Err(Error::Config(format!(
                "LF '{name}': emit must be -1 or +1, got {emit}"
            )));
        }
        Ok(Self { name, pattern: tokens.join(" "), emit })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn emit(&self) -> Label {
        self.emit
    }

    fn matches(&self, tokens: &[String]) -> bool {
        let mut parts = self.pattern.split(' ');
        let first = parts.next().expect("validated non-empty");
        match parts.next() {
            None => tokens.iter().any(|t| t == first),
            Some(second) => tokens
                .windows(2)
                .any(|w| w[0] == first && w[1] == second),
        }
    }
}

/// Documents plus optional truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub documents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<Label>>,
}

impl TextCorpus {
    pub fn validate(&self) -> Result<()> {
        if let Some(truth) = &self.truth {
            if truth.len() != self.documents.len() {
                return Err(Error::DimMismatch {
                    what: "corpus truth labels vs documents",
                    expected: self.documents.len(),
                    got: truth.len(),
                });
            }
            if let Some(bad) = truth.iter().find(|y| !validate_label(**y)) {
                return Err(Error::Config(format!("truth label {bad} outside {{-1, +1}}")));
            }
        }
        Ok(())
    }
}

/// Applies every LF to every document. Bigrams match any adjacent token pair,
/// including across sentence boundaries.
pub fn apply_keyword_lfs(corpus: &TextCorpus, lfs: &[KeywordLF]) -> Result<LabelMatrix> {
    if corpus.documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if lfs.is_empty() {
        return Err(Error::Config("no labeling functions supplied".into()));
    }
    corpus.validate()?;
    let rows: Vec<Vec<Vote>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let tokens = tokenize(doc);
            lfs.iter()
                .map(|lf| if lf.matches(&tokens) { lf.emit } else { 0 })
                .collect()
        })
        .collect();
    LabelMatrix::from_rows(&rows)
}

// ===== CSV =====

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Splits one CSV line, tracking 1-based column positions of each field start.
fn split_line(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut col = 1;
    for field in line.split(',') {
        out.push((col, field.trim()));
        col += field.len() + 1;
    }
    out
}

/// Headerless integer votes, m comma-separated values per line.
pub fn load_votes_csv(path: &Path) -> Result<LabelMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<Vote>> = Vec::new();
    let mut m = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in split_line(line) {
            let value: i64 = field.parse().map_err(|_| Error::Parse {
                path: path_str(path),
                line: i + 1,
                col,
                msg: format!("expected an integer vote, got '{field}'"),
            })?;
            if !(-1..=1).contains(&value) {
                return Err(Error::Range {
                    path: path_str(path),
                    line: i + 1,
                    col,
                    value: field.to_string(),
                    msg: "votes must be -1, 0, or +1",
                });
            }
            row.push(value as Vote);
        }
        if rows.is_empty() {
            m = row.len();
        } else if row.len() != m {
            return Err(Error::Parse {
                path: path_str(path),
                line: i + 1,
                col: 1,
                msg: format!("row has {} values, previous rows have {m}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    LabelMatrix::from_rows(&rows)
}

pub fn save_votes_csv(path: &Path, data: &LabelMatrix) -> Result<()> {
    let mut out = String::new();
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Single-column labels in {-1, +1}, one per line.
pub fn load_truth_csv(path: &Path) -> Result<Vec<Label>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        let value: i64 = field.parse().map_err(|_| Error::Parse {
            path: path_str(path),
            line: i + 1,
            col: 1,
            msg: format!("expected a label, got '{field}'"),
        })?;
        if value != -1 && value != 1 {
            return Err(Error::Range {
                path: path_str(path),
                line: i + 1,
                col: 1,
                value: field.to_string(),
                msg: "labels must be -1 or +1",
            });
        }
        out.push(value as Label);
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

pub fn save_truth_csv(path: &Path, truth: &[Label]) -> Result<()> {
    let mut out = String::new();
    for y in truth {
        out.push_str(&y.to_string());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Headerless real-valued features, p comma-separated values per line.
pub fn load_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut p = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in split_line(line) {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                path: path_str(path),
                line: i + 1,
                col,
                msg: format!("expected a real number, got '{field}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::Range {
                    path: path_str(path),
                    line: i + 1,
                    col,
                    value: field.to_string(),
                    msg: "features must be finite",
                });
            }
            row.push(value);
        }
        if rows.is_empty() {
            p = row.len();
        } else if row.len() != p {
            return Err(Error::Parse {
                path: path_str(path),
                line: i + 1,
                col: 1,
                msg: format!("row has {} values, previous rows have {p}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    FeatureMatrix::from_rows(&rows)
}

// ===== JSON =====

pub fn load_model_json(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_model_json(path: &Path, params: &ModelParams) -> Result<()> {
    let mut text = serde_json::to_string_pretty(params)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_lfs_json(path: &Path) -> Result<Vec<KeywordLF>> {
    let text = std::fs::read_to_string(path)?;
    let lfs: Vec<KeywordLF> = serde_json::from_str(&text)?;
    if lfs.is_empty() {
        return Err(Error::Config("lfs.json contains no labeling functions".into()));
    }
    Ok(lfs)
}

pub fn load_corpus_json(path: &Path) -> Result<TextCorpus> {
    let text = std::fs::read_to_string(path)?;
    let corpus: TextCorpus = serde_json::from_str(&text)?;
    corpus.validate()?;
    Ok(corpus)
}

/// Writes votes.csv, truth.csv, and a provenance sidecar JSON into `dir`.
pub fn save_dataset(dir: &Path, ds: &SyntheticDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_votes_csv(&dir.join("votes.csv"), &ds.labels)?;
    save_truth_csv(&dir.join("truth.csv"), &ds.truth)?;
    let mut text = serde_json::to_string_pretty(ds)?;
    text.push('\n');
    std::fs::write(dir.join("provenance.json"), text)?;
    Ok(())
}

/// Ranked discovery output: one CSV with lf_j_name, lf_k_name, kind, value.
pub fn write_ranked_csv(path: &Path, ranked: &RankedDependencies, names: &[String]) -> Result<()> {
    let mut out = String::from("lf_j_name,lf_k_name,kind,value\n");
    for (kind, list) in ranked.iter() {
        for score in list {
            let j = names.get(score.spec.j).ok_or(Error::DimMismatch {
                what: "LF names vs dependency index",
                expected: score.spec.j + 1,
                got: names.len(),
            })?;
            let k = names.get(score.spec.k).ok_or(Error::DimMismatch {
                what: "LF names vs dependency index",
                expected: score.spec.k + 1,
                got: names.len(),
            })?;
            out.push_str(&format!("{j},{k},{kind},{}\n", score.value));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Well worth WATCHING!"), vec!["well", "worth", "watching"]);
        assert_eq!(tokenize("it's  a--test, 123"), vec!["it", "s", "a", "test", "123"]);
        assert_eq!(tokenize("???"), Vec::<String>::new());
    }

    #[test]
    fn tokenizer_is_idempotent_under_rejoin() {
        for text in ["Mixed CASE text.", "a,b;;c  d", "Uni-grams & bi-grams!"] {
            let once = tokenize(text);
            let twice = tokenize(&once.join(" "));
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn keyword_lf_validation_and_canonical_pattern() {
        let lf = KeywordLF::new("w".into(), "  Not   WORTH ", 1).unwrap();
        assert_eq!(lf.pattern(), "not worth");
        assert!(KeywordLF::new("bad".into(), "", 1).is_err());
        assert!(KeywordLF::new("bad".into(), "one two three", 1).is_err());
        assert!(KeywordLF::new("bad".into(), "worth", 0).is_err());
    }

    #[test]
    fn unigram_and_bigram_matching() {
        let corpus = TextCorpus {
            documents: vec![
                "well worth watching".into(),
                "worth every penny".into(),
                "it was not worth it".into(),
            ],
            truth: None,
        };
        let lfs = vec![
            KeywordLF::new("worth".into(), "worth", 1).unwrap(),
            KeywordLF::new("not_worth".into(), "not worth", -1).unwrap(),
        ];
        let votes = apply_keyword_lfs(&corpus, &lfs).unwrap();
        assert_eq!(votes.row(0), &[1, 0]);
        assert_eq!(votes.row(1), &[1, 0]);
        // Both the unigram and the bigram fire on the third document.
        assert_eq!(votes.row(2), &[1, -1]);
    }

    #[test]
    fn matching_ignores_case_and_punctuation() {
        let a = TextCorpus { documents: vec!["Not WORTH it.".into()], truth: None };
        let b = TextCorpus { documents: vec!["not...worth,it".into()], truth: None };
        let lfs = vec![KeywordLF::new("nw".into(), "not worth", -1).unwrap()];
        assert_eq!(
            apply_keyword_lfs(&a, &lfs).unwrap().row(0),
            apply_keyword_lfs(&b, &lfs).unwrap().row(0)
        );
    }

    #[test]
    fn bigram_matches_across_sentence_boundary() {
        let corpus = TextCorpus { documents: vec!["I said not. Worth it?".into()], truth: None };
        let lfs = vec![KeywordLF::new("nw".into(), "not worth", -1).unwrap()];
        assert_eq!(apply_keyword_lfs(&corpus, &lfs).unwrap().row(0), &[-1]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpus = TextCorpus { documents: vec![], truth: None };
        let lfs = vec![KeywordLF::new("w".into(), "worth", 1).unwrap()];
        match apply_keyword_lfs(&corpus, &lfs) {
            Err(Error::EmptyCorpus) => {}
            other => panic!("expected EmptyCorpus, got {other:?}"),
        }
    }

    #[test]
    fn votes_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<i8>> = (0..40)
            .map(|_| (0..5).map(|_| rng.random_range(-1..=1) as i8).collect())
            .collect();
        let data = LabelMatrix::from_rows(&rows).unwrap();
        save_votes_csv(&path, &data).unwrap();
        assert_eq!(load_votes_csv(&path).unwrap(), data);
    }

    #[test]
    fn votes_csv_reports_position_of_bad_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.csv");
        std::fs::write(&path, "1,0,-1\n0,2,1\n").unwrap();
        match load_votes_csv(&path) {
            Err(Error::Range { line, col, value, .. }) => {
                assert_eq!((line, col), (2, 3));
                assert_eq!(value, "2");
            }
            other => panic!("expected Range, got {other:?}"),
        }
        std::fs::write(&path, "1,0\nx,1\n").unwrap();
        match load_votes_csv(&path) {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (2, 1)),
            other => panic!("expected Parse, got {other:?}"),
        }
        std::fs::write(&path, "1,0\n1\n").unwrap();
        assert!(matches!(load_votes_csv(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn truth_csv_round_trip_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let truth = vec![1i8, -1, -1, 1];
        save_truth_csv(&path, &truth).unwrap();
        assert_eq!(load_truth_csv(&path).unwrap(), truth);
        std::fs::write(&path, "1\n0\n").unwrap();
        assert!(matches!(load_truth_csv(&path), Err(Error::Range { line: 2, .. })));
    }

    #[test]
    fn features_csv_parses_reals_and_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        std::fs::write(&path, "0.5,-1.25\n3,0\n").unwrap();
        let f = load_features_csv(&path).unwrap();
        assert_eq!((f.n(), f.p()), (2, 2));
        assert_eq!(f.row(0), &[0.5, -1.25]);
        std::fs::write(&path, "0.5,inf\n").unwrap();
        assert!(matches!(load_features_csv(&path), Err(Error::Range { .. })));
    }

    #[test]
    fn model_json_round_trip() {
        use crate::factors::{DependencyKind, DependencySpec};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let deps = vec![DependencySpec::new(2, 0, DependencyKind::Priority)];
        let params = ModelParams::new(vec![0.5, -0.25, 1.0], vec![0.75], deps).unwrap();
        save_model_json(&path, &params).unwrap();
        assert_eq!(load_model_json(&path).unwrap(), params);
    }

    #[test]
    fn lfs_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lfs.json");
        std::fs::write(
            &path,
            r#"[{"name":"worth","pattern":"worth","emit":1},
                {"name":"not_worth","pattern":"not worth","emit":-1}]"#,
        )
        .unwrap();
        let lfs = load_lfs_json(&path).unwrap();
        assert_eq!(lfs.len(), 2);
        assert_eq!(lfs[1].pattern(), "not worth");
        assert_eq!(lfs[1].emit(), -1);
        std::fs::write(&path, r#"[{"name":"bad","pattern":"a b c","emit":1}]"#).unwrap();
        assert!(load_lfs_json(&path).is_err());
    }

    #[test]
    fn dataset_directory_layout() {
        use crate::model::posterior_vector;
        use crate::sampler::sample_exact;
        let dir = tempfile::tempdir().unwrap();
        let truth_model = ModelParams::independent(vec![0.9, 0.4]).unwrap();
        let ds = sample_exact(&truth_model, 25, 3).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let votes = load_votes_csv(&dir.path().join("votes.csv")).unwrap();
        let truth = load_truth_csv(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(votes, ds.labels);
        assert_eq!(truth, ds.truth);
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("provenance.json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["seed"], 3);
        assert_eq!(sidecar["source_params"]["m"], 2);
        // Sidecar params reload into a working model.
        let params: ModelParams = serde_json::from_value(sidecar["source_params"].clone()).unwrap();
        assert!(posterior_vector(&params, &votes).is_ok());
    }

    #[test]
    fn ranked_csv_layout() {
        use crate::discovery::rank_dependencies;
        use crate::factors::ALL_KINDS;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranked.csv");
        let data = LabelMatrix::from_rows(&[vec![-1, 1], vec![1, 1]]).unwrap();
        let truth = vec![1, 1];
        let ranked = rank_dependencies(&data, &truth, &ALL_KINDS, &[(0, 1)]).unwrap();
        write_ranked_csv(&path, &ranked, &["alpha".into(), "beta".into()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("lf_j_name,lf_k_name,kind,value"));
        assert_eq!(lines.next(), Some("alpha,beta,fixing,1"));
        assert_eq!(text.lines().count(), 6);
    }
}
