//! Routing supervision derived from a correctness matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{compute_leaderboard, CorrectnessMatrix};
use crate::error::{Error, Result};

/// Granularity at which routing labels are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Query,
    Subject,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Query => "query",
            Level::Subject => "subject",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "query" => Ok(Level::Query),
            "subject" => Ok(Level::Subject),
            other => Err(format!("unknown level `{other}` (expected query|subject)")),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterExample {
    pub query_id: String,
    pub subject: String,
    pub text: String,
    pub label: usize,
    pub label_name: String,
}

/// Text → model-index pairs used to train a router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterDataset {
    pub level: Level,
    pub model_names: Vec<String>,
    pub examples: Vec<RouterExample>,
    pub source_dataset_id: String,
}

/// Index of the maximum under `better(candidate, incumbent)`, first wins.
fn first_max_by(n: usize, mut better: impl FnMut(usize, usize) -> bool) -> usize {
    (1..n).fold(0, |best, l| if better(l, best) { l } else { best })
}

/// Per-query best model; ties go to the model with the best overall mean,
/// then to the lowest model index.
pub fn build_query_labels(matrix: &CorrectnessMatrix) -> RouterDataset {
    let lb = compute_leaderboard(matrix);
    let overall: Vec<f64> = lb.overall.values().copied().collect();
    let examples = matrix
        .records()
        .iter()
        .map(|r| {
            let label = first_max_by(r.scores.len(), |l, best| {
                r.scores[l] > r.scores[best]
                    || (r.scores[l] == r.scores[best] && overall[l] > overall[best])
            });
            example(matrix, r, label)
        })
        .collect();
    RouterDataset {
        level: Level::Query,
        model_names: matrix.model_names().to_vec(),
        examples,
        source_dataset_id: matrix.dataset_id().to_string(),
    }
}

/// Index of the best model per subject (by subject mean; ties → lowest index),
/// parallel to `matrix.subjects()`.
pub fn subject_winners(matrix: &CorrectnessMatrix) -> Vec<usize> {
    matrix
        .subject_score_sums()
        .iter()
        .map(|sums| first_max_by(sums.len(), |l, best| sums[l] > sums[best]))
        .collect()
}

/// Every query inherits the best model of its subject.
pub fn build_subject_labels(matrix: &CorrectnessMatrix) -> RouterDataset {
    let winners = subject_winners(matrix);
    let mut labels = vec![0; matrix.len()];
    for (group, &winner) in matrix.subject_groups().iter().zip(&winners) {
        for &i in group {
            labels[i] = winner;
        }
    }
    let examples = matrix
        .records()
        .iter()
        .zip(labels)
        .map(|(r, label)| example(matrix, r, label))
        .collect();
    RouterDataset {
        level: Level::Subject,
        model_names: matrix.model_names().to_vec(),
        examples,
        source_dataset_id: matrix.dataset_id().to_string(),
    }
}

pub fn build_labels(matrix: &CorrectnessMatrix, level: Level) -> RouterDataset {
    match level {
        Level::Query => build_query_labels(matrix),
        Level::Subject => build_subject_labels(matrix),
    }
}

fn example(
    matrix: &CorrectnessMatrix,
    r: &crate::corpus::QueryRecord,
    label: usize,
) -> RouterExample {
    RouterExample {
        query_id: r.query_id.clone(),
        subject: r.subject.clone(),
        text: r.text.clone(),
        label,
        label_name: matrix.model_names()[label].clone(),
    }
}

/// Distinct label names in first-occurrence order; unused models are dropped.
pub fn select_model_set(dataset: &RouterDataset) -> Vec<String> {
    let mut set: Vec<String> = Vec::new();
    for ex in &dataset.examples {
        if !set.contains(&ex.label_name) {
            set.push(ex.label_name.clone());
        }
    }
    set
}

impl RouterDataset {
    /// Drop models no example is labeled with, keeping the original model
    /// order, and re-index labels accordingly.
    pub fn restrict_to_model_set(&self) -> RouterDataset {
        let selected = select_model_set(self);
        let model_names: Vec<String> = self
            .model_names
            .iter()
            .filter(|m| selected.contains(m))
            .cloned()
            .collect();
        let examples = self
            .examples
            .iter()
            .map(|ex| {
                let mut ex = ex.clone();
                ex.label = model_names
                    .iter()
                    .position(|m| *m == ex.label_name)
                    .expect("label name comes from the model set");
                ex
            })
            .collect();
        RouterDataset {
            level: self.level,
            model_names,
            examples,
            source_dataset_id: self.source_dataset_id.clone(),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    fn validate(&self) -> Result<()> {
        if self.model_names.is_empty() {
            return Err(Error::InvalidDataset("model list is empty".into()));
        }
        if self.examples.is_empty() {
            return Err(Error::InvalidDataset("no examples".into()));
        }
        for ex in &self.examples {
            match self.model_names.get(ex.label) {
                None => {
                    return Err(Error::InvalidDataset(format!(
                        "query `{}`: label {} out of range for {} models",
                        ex.query_id,
                        ex.label,
                        self.model_names.len()
                    )))
                }
                Some(name) if *name != ex.label_name => {
                    return Err(Error::InvalidDataset(format!(
                        "query `{}`: label {} is `{}`, not `{}`",
                        ex.query_id, ex.label, name, ex.label_name
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let wio = |e| Error::io("<writer>", e);
        serde_json::to_writer(
            &mut out,
            &DatasetLine::Header {
                level: self.level,
                models: self.model_names.clone(),
                dataset: self.source_dataset_id.clone(),
            },
        )?;
        out.write_all(b"\n").map_err(wio)?;
        for ex in &self.examples {
            serde_json::to_writer(
                &mut out,
                &ExampleOut {
                    kind: "example",
                    query_id: &ex.query_id,
                    subject: &ex.subject,
                    text: &ex.text,
                    label: ex.label,
                    label_name: &ex.label_name,
                },
            )?;
            out.write_all(b"\n").map_err(wio)?;
        }
        out.flush().map_err(wio)
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut dataset: Option<RouterDataset> = None;
        for (n, line) in input.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DatasetLine =
                serde_json::from_str(&line).map_err(|e| Error::malformed(lineno, e))?;
            match (parsed, dataset.as_mut()) {
                (
                    DatasetLine::Header {
                        level,
                        models,
                        dataset: id,
                    },
                    None,
                ) => {
                    dataset = Some(RouterDataset {
                        level,
                        model_names: models,
                        examples: Vec::new(),
                        source_dataset_id: id,
                    })
                }
                (DatasetLine::Header { .. }, Some(_)) => {
                    return Err(Error::malformed(lineno, "unexpected second header"))
                }
                (DatasetLine::Example { .. }, None) => {
                    return Err(Error::malformed(lineno, "missing header line"))
                }
                (
                    DatasetLine::Example {
                        query_id,
                        subject,
                        text,
                        label,
                        label_name,
                    },
                    Some(d),
                ) => d.examples.push(RouterExample {
                    query_id,
                    subject,
                    text,
                    label,
                    label_name,
                }),
            }
        }
        let dataset = dataset.ok_or_else(|| Error::InvalidDataset("no examples".into()))?;
        dataset.validate()?;
        Ok(dataset)
    }
}

pub fn write_dataset(dataset: &RouterDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    dataset.write_to(BufWriter::new(file))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<RouterDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    RouterDataset::read_from(BufReader::new(file))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum DatasetLine {
    Header {
        level: Level,
        models: Vec<String>,
        dataset: String,
    },
    Example {
        query_id: String,
        subject: String,
        text: String,
        label: usize,
        label_name: String,
    },
}

#[derive(Serialize)]
struct ExampleOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    query_id: &'a str,
    subject: &'a str,
    text: &'a str,
    label: usize,
    label_name: &'a str,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QueryRecord, NO_SUBJECT};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn matrix(models: &[&str], rows: &[(&str, &[f64])]) -> CorrectnessMatrix {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (subject, scores))| {
                QueryRecord::new(format!("q{}", i + 1), *subject, format!("text {i}"), "", scores.to_vec())
            })
            .collect();
        CorrectnessMatrix::new("t", names(models), records).unwrap()
    }

    fn label_names(d: &RouterDataset) -> Vec<&str> {
        d.examples.iter().map(|e| e.label_name.as_str()).collect()
    }

    #[test]
    fn query_labels_fall_through_to_lowest_index() {
        let m = matrix(
            &["A", "B"],
            &[("s", &[1.0, 0.0]), ("s", &[1.0, 1.0]), ("s", &[0.0, 1.0])],
        );
        assert_eq!(label_names(&build_query_labels(&m)), vec!["A", "A", "B"]);
    }

    #[test]
    fn query_tie_prefers_overall_best() {
        let m = matrix(
            &["A", "B"],
            &[
                ("s", &[1.0, 0.0]),
                ("s", &[1.0, 1.0]),
                ("s", &[0.0, 1.0]),
                ("s", &[0.0, 1.0]),
            ],
        );
        assert_eq!(label_names(&build_query_labels(&m)), vec!["A", "B", "B", "B"]);
    }

    #[test]
    fn all_zero_row_gets_index_zero() {
        let m = matrix(&["A", "B", "C"], &[("s", &[0.0, 0.0, 0.0])]);
        assert_eq!(build_query_labels(&m).examples[0].label, 0);
    }

    #[test]
    fn single_model_labels() {
        let m = matrix(&["A"], &[("s", &[0.0]), ("s", &[1.0])]);
        assert!(build_query_labels(&m).labels().all(|l| l == 0));
        assert!(build_subject_labels(&m).labels().all(|l| l == 0));
    }

    #[test]
    fn subject_labels_follow_subject_means() {
        let m = matrix(
            &["A", "B"],
            &[("s1", &[1.0, 0.0]), ("s1", &[1.0, 0.0]), ("s2", &[0.0, 1.0])],
        );
        let d = build_subject_labels(&m);
        assert_eq!(label_names(&d), vec!["A", "A", "B"]);
        assert_eq!(d.level, Level::Subject);
        assert_eq!(select_model_set(&d), names(&["A", "B"]));
    }

    #[test]
    fn subject_tie_goes_to_lowest_index() {
        let m = matrix(&["A", "B", "C"], &[("s", &[0.5, 0.5, 0.5]), ("t", &[1.0, 1.0, 1.0])]);
        assert!(build_subject_labels(&m).labels().all(|l| l == 0));
    }

    #[test]
    fn subject_free_matrix_uses_overall_best() {
        let m = matrix(
            &["A", "B"],
            &[(NO_SUBJECT, &[1.0, 0.0]), (NO_SUBJECT, &[0.0, 1.0]), (NO_SUBJECT, &[0.0, 1.0])],
        );
        assert_eq!(label_names(&build_subject_labels(&m)), vec!["B", "B", "B"]);
    }

    #[test]
    fn model_set_excludes_unselected() {
        let m = matrix(
            &["A", "B", "C"],
            &[("s", &[1.0, 0.0, 0.0]), ("s", &[1.0, 0.0, 0.0]), ("s", &[0.0, 1.0, 0.0])],
        );
        let d = build_query_labels(&m);
        assert_eq!(select_model_set(&d), names(&["A", "B"]));
        let pruned = d.restrict_to_model_set();
        assert_eq!(pruned.model_names, names(&["A", "B"]));
        assert_eq!(pruned.labels().collect::<Vec<_>>(), vec![0, 0, 1]);
    }

    #[test]
    fn restrict_keeps_matrix_order() {
        let m = matrix(&["A", "B", "C"], &[("s", &[0.0, 0.0, 1.0]), ("s", &[1.0, 0.0, 0.0])]);
        let d = build_query_labels(&m);
        assert_eq!(select_model_set(&d), names(&["C", "A"]));
        assert_eq!(d.restrict_to_model_set().model_names, names(&["A", "C"]));
    }

    #[test]
    fn dataset_round_trip_and_validation() {
        let m = matrix(
            &["A", "B"],
            &[("s", &[1.0, 0.0]), ("s", &[1.0, 1.0]), ("s", &[0.0, 1.0])],
        );
        let d = build_query_labels(&m);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(RouterDataset::read_from(buf.as_slice()).unwrap(), d);

        let bad = r#"{"type":"header","level":"query","models":["A","B"],"dataset":"t"}
{"type":"example","query_id":"q1","subject":"s","text":"x","label":5,"label_name":"A"}
"#;
        let err = RouterDataset::read_from(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");

        let err = RouterDataset::read_from("".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no examples"), "{err}");

        let mismatch = r#"{"type":"header","level":"query","models":["A","B"],"dataset":"t"}
{"type":"example","query_id":"q1","subject":"s","text":"x","label":1,"label_name":"A"}
"#;
        assert!(RouterDataset::read_from(mismatch.as_bytes()).is_err());
    }
}
