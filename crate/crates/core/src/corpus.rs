//! Benchmark data model: correctness matrices and leaderboards.
//!
//! A correctness matrix records, for every benchmark query, the score each
//! candidate model obtained on it. Model order in the header fixes the model
//! index used by every "lowest index wins" tie rule downstream.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Subject name used for datasets that carry no subject split.
pub const NO_SUBJECT: &str = "_none";

fn check_score(context: impl FnOnce() -> String, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange {
            context: context(),
            value,
        })
    }
}

/// One benchmark query with the recorded score of every model.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub subject: String,
    pub text: String,
    pub gold: String,
    /// Scores aligned with the owning matrix's model order.
    pub scores: Vec<f64>,
    /// Raw model outputs keyed by model name, when the producer kept them.
    pub raw_outputs: Option<IndexMap<String, String>>,
}

impl QueryRecord {
    pub fn new(
        query_id: impl Into<String>,
        subject: impl Into<String>,
        text: impl Into<String>,
        gold: impl Into<String>,
        scores: Vec<f64>,
    ) -> Self {
        QueryRecord {
            query_id: query_id.into(),
            subject: subject.into(),
            text: text.into(),
            gold: gold.into(),
            scores,
            raw_outputs: None,
        }
    }
}

/// Validated per-query, per-model score table for one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessMatrix {
    dataset_id: String,
    model_names: Vec<String>,
    records: Vec<QueryRecord>,
    subjects: Vec<String>,
    // record indices per subject, in record order
    groups: Vec<Vec<usize>>,
}

impl CorrectnessMatrix {
    pub fn new(
        dataset_id: impl Into<String>,
        model_names: Vec<String>,
        records: Vec<QueryRecord>,
    ) -> Result<Self> {
        if model_names.is_empty() {
            return Err(Error::InvalidMatrix("model list is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &model_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidMatrix(format!("duplicate model `{name}`")));
            }
        }
        if records.is_empty() {
            return Err(Error::InvalidMatrix("no query records".into()));
        }

        let mut ids = HashSet::new();
        let mut subjects: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (i, record) in records.iter().enumerate() {
            if !ids.insert(record.query_id.as_str()) {
                return Err(Error::DuplicateQuery(record.query_id.clone()));
            }
            if record.scores.len() != model_names.len() {
                return Err(Error::InvalidMatrix(format!(
                    "query `{}` has {} scores for {} models",
                    record.query_id,
                    record.scores.len(),
                    model_names.len()
                )));
            }
            for (score, model) in record.scores.iter().zip(&model_names) {
                check_score(|| format!("{}/{}", record.query_id, model), *score)?;
            }
            subjects.entry(record.subject.clone()).or_default().push(i);
        }

        let (subjects, groups) = subjects.into_iter().unzip();
        Ok(CorrectnessMatrix {
            dataset_id: dataset_id.into(),
            model_names,
            records,
            subjects,
            groups,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn num_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subjects in first-occurrence order.
    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    /// Record indices of each subject, parallel to [`subjects`](Self::subjects).
    pub fn subject_groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.model_names.iter().position(|m| m == name)
    }

    /// Per-subject score sums `[subject][model]`, accumulated in record order.
    ///
    /// Every aggregate in the crate is built from these sums so that
    /// bound comparisons hold exactly in floating point.
    pub fn subject_score_sums(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|group| {
                let mut sums = vec![0.0; self.model_names.len()];
                for &i in group {
                    for (sum, score) in sums.iter_mut().zip(&self.records[i].scores) {
                        *sum += score;
                    }
                }
                sums
            })
            .collect()
    }

    /// Keep only the named models, in the given order.
    pub fn restrict_models(&self, models: &[String]) -> Result<Self> {
        let indices = models
            .iter()
            .map(|m| {
                self.model_index(m)
                    .ok_or_else(|| Error::InvalidMatrix(format!("unknown model `{m}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.scores = indices.iter().map(|&l| r.scores[l]).collect();
                if let Some(outputs) = &mut r.raw_outputs {
                    outputs.retain(|k, _| models.contains(k));
                }
                r
            })
            .collect();
        CorrectnessMatrix::new(self.dataset_id.clone(), models.to_vec(), records)
    }

    /// Seeded random split into (train, test); each part keeps record order.
    ///
    /// The train part receives `round(train_fraction * N)` records, clamped so
    /// both parts are non-empty.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if self.records.len() < 2 || !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidMatrix(
                "split needs at least 2 records and a fraction in [0, 1]".into(),
            ));
        }
        let n = self.records.len();
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut in_train = vec![false; n];
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
        let (train, test): (Vec<_>, Vec<_>) = self
            .records
            .iter()
            .cloned()
            .zip(in_train)
            .partition(|(_, t)| *t);
        let strip = |v: Vec<(QueryRecord, bool)>| v.into_iter().map(|(r, _)| r).collect();
        Ok((
            CorrectnessMatrix::new(
                format!("{}/train", self.dataset_id),
                self.model_names.clone(),
                strip(train),
            )?,
            CorrectnessMatrix::new(
                format!("{}/test", self.dataset_id),
                self.model_names.clone(),
                strip(test),
            )?,
        ))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = HeaderLine {
            kind: "header",
            dataset: &self.dataset_id,
            models: &self.model_names,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        for r in &self.records {
            let line = QueryLineOut {
                kind: "query",
                query_id: &r.query_id,
                subject: &r.subject,
                text: &r.text,
                gold: &r.gold,
                scores: ScoreMap(&self.model_names, &r.scores),
                outputs: r.raw_outputs.as_ref(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        out.flush().map_err(|e| Error::io("<writer>", e))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<(String, Vec<String>)> = None;
        let mut records = Vec::new();
        let mut ids = HashSet::new();

        for (n, line) in input.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: MatrixLine =
                serde_json::from_str(&line).map_err(|e| Error::malformed(lineno, e))?;
            match (parsed, &header) {
                (MatrixLine::Header { dataset, models }, None) => {
                    header = Some((dataset, models));
                }
                (MatrixLine::Header { .. }, Some(_)) => {
                    return Err(Error::malformed(lineno, "unexpected second header"));
                }
                (MatrixLine::Query { .. }, None) => {
                    return Err(Error::malformed(lineno, "missing header line"));
                }
                (
                    MatrixLine::Query {
                        query_id,
                        subject,
                        text,
                        gold,
                        mut scores,
                        outputs,
                    },
                    Some((_, models)),
                ) => {
                    if !ids.insert(query_id.clone()) {
                        return Err(Error::DuplicateQuery(query_id));
                    }
                    let mut ordered = Vec::with_capacity(models.len());
                    for model in models {
                        match scores.shift_remove(model) {
                            Some(s) => ordered.push(s),
                            None => {
                                return Err(Error::MissingScore {
                                    query_id,
                                    model: model.clone(),
                                })
                            }
                        }
                    }
                    if let Some((model, _)) = scores.into_iter().next() {
                        return Err(Error::UnknownModel { query_id, model });
                    }
                    records.push(QueryRecord {
                        query_id,
                        subject,
                        text,
                        gold,
                        scores: ordered,
                        raw_outputs: outputs,
                    });
                }
            }
        }

        let (dataset, models) = header.ok_or_else(|| Error::malformed(1, "missing header line"))?;
        CorrectnessMatrix::new(dataset, models, records)
    }
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<CorrectnessMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CorrectnessMatrix::read_from(BufReader::new(file))
}

pub fn save_matrix(matrix: &CorrectnessMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    matrix.write_to(BufWriter::new(file))
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    dataset: &'a str,
    models: &'a [String],
}

struct ScoreMap<'a>(&'a [String], &'a [f64]);

impl Serialize for ScoreMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, score) in self.0.iter().zip(self.1) {
            map.serialize_entry(name, score)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct QueryLineOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    query_id: &'a str,
    subject: &'a str,
    text: &'a str,
    gold: &'a str,
    scores: ScoreMap<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<&'a IndexMap<String, String>>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum MatrixLine {
    Header {
        dataset: String,
        models: Vec<String>,
    },
    Query {
        query_id: String,
        subject: String,
        text: String,
        gold: String,
        scores: IndexMap<String, f64>,
        #[serde(default)]
        outputs: Option<IndexMap<String, String>>,
    },
}

/// Subject → model → mean score, plus each model's overall mean.
///
/// Model order inside each subject row is significant: ties on the best
/// model resolve to the earliest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaderboard {
    #[serde(rename = "dataset")]
    pub dataset_id: String,
    pub overall: IndexMap<String, f64>,
    #[serde(rename = "subjects")]
    pub table: IndexMap<String, IndexMap<String, f64>>,
}

impl Leaderboard {
    pub fn validate(&self) -> Result<()> {
        if self.table.is_empty() {
            return Err(Error::InvalidLeaderboard("no subjects".into()));
        }
        for (model, v) in &self.overall {
            check_score(|| format!("overall/{model}"), *v)?;
        }
        for (subject, row) in &self.table {
            if row.is_empty() {
                return Err(Error::InvalidLeaderboard(format!(
                    "subject `{subject}` lists no models"
                )));
            }
            for (model, v) in row {
                check_score(|| format!("{subject}/{model}"), *v)?;
            }
        }
        Ok(())
    }

    /// Highest-scoring model of `subject`; ties go to the earliest entry.
    pub fn best_model(&self, subject: &str) -> Option<&str> {
        let row = self.table.get(subject)?;
        let mut best: Option<(&str, f64)> = None;
        for (model, &score) in row {
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((model, score));
            }
        }
        best.map(|(m, _)| m)
    }
}

/// Mean score per (subject, model) and per model across the whole matrix.
pub fn compute_leaderboard(matrix: &CorrectnessMatrix) -> Leaderboard {
    let sums = matrix.subject_score_sums();
    let n = matrix.len() as f64;
    let models = matrix.model_names();

    let mut totals = vec![0.0; models.len()];
    for row in &sums {
        for (t, s) in totals.iter_mut().zip(row) {
            *t += s;
        }
    }
    let overall = models
        .iter()
        .cloned()
        .zip(totals.iter().map(|t| t / n))
        .collect();
    let table = matrix
        .subjects()
        .iter()
        .zip(&sums)
        .zip(matrix.subject_groups())
        .map(|((subject, row), group)| {
            let size = group.len() as f64;
            let cells = models
                .iter()
                .cloned()
                .zip(row.iter().map(|s| s / size))
                .collect();
            (subject.clone(), cells)
        })
        .collect();

    Leaderboard {
        dataset_id: matrix.dataset_id().to_string(),
        overall,
        table,
    }
}

pub fn load_leaderboard(path: impl AsRef<Path>) -> Result<Leaderboard> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lb: Leaderboard = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::InvalidLeaderboard(e.to_string()))?;
    lb.validate()?;
    Ok(lb)
}

pub fn save_leaderboard(lb: &Leaderboard, path: impl AsRef<Path>) -> Result<()> {
    lb.validate()?;
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    serde_json::to_writer(&mut out, lb)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn s1s2() -> CorrectnessMatrix {
        CorrectnessMatrix::new(
            "fixture",
            names(&["A", "B"]),
            vec![
                QueryRecord::new("q1", "s1", "first", "A", vec![1.0, 0.0]),
                QueryRecord::new("q2", "s1", "second", "B", vec![1.0, 0.0]),
                QueryRecord::new("q3", "s2", "third", "C", vec![0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_header_and_queries() {
        let text = r#"{"type":"header","dataset":"d","models":["A","B"]}
{"type":"query","query_id":"q1","subject":"s","text":"t1","gold":"A","scores":{"A":1.0,"B":0.0}}
{"type":"query","query_id":"q2","subject":"s","text":"t2","gold":"B","scores":{"B":1.0,"A":0.5}}
"#;
        let m = CorrectnessMatrix::read_from(text.as_bytes()).unwrap();
        assert_eq!(m.num_models(), 2);
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[1].scores, vec![0.5, 1.0]);
    }

    #[test]
    fn missing_score_names_query_and_model() {
        let text = r#"{"type":"header","dataset":"d","models":["A","B"]}
{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.0,"B":0.0}}
{"type":"query","query_id":"q2","subject":"s","text":"t","gold":"A","scores":{"A":1.0}}
"#;
        let err = CorrectnessMatrix::read_from(text.as_bytes()).unwrap_err();
        match err {
            Error::MissingScore { query_id, model } => {
                assert_eq!(query_id, "q2");
                assert_eq!(model, "B");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_malformed_lines_with_line_number() {
        let text = "{\"type\":\"header\",\"dataset\":\"d\",\"models\":[\"A\"]}\nnot json\n";
        let err = CorrectnessMatrix::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = r#"{"type":"header","dataset":"d","models":["A"]}
{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.0}}
{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.0}}
"#;
        assert!(matches!(
            CorrectnessMatrix::read_from(dup.as_bytes()),
            Err(Error::DuplicateQuery(id)) if id == "q1"
        ));
        let range = r#"{"type":"header","dataset":"d","models":["A"]}
{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.5}}
"#;
        assert!(matches!(
            CorrectnessMatrix::read_from(range.as_bytes()),
            Err(Error::ScoreOutOfRange { .. })
        ));
        let extra = r#"{"type":"header","dataset":"d","models":["A"]}
{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.0,"Z":0.0}}
"#;
        assert!(matches!(
            CorrectnessMatrix::read_from(extra.as_bytes()),
            Err(Error::UnknownModel { .. })
        ));
    }

    #[test]
    fn missing_header_is_an_error() {
        let text = r#"{"type":"query","query_id":"q1","subject":"s","text":"t","gold":"A","scores":{"A":1.0}}"#;
        assert!(matches!(
            CorrectnessMatrix::read_from(text.as_bytes()),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_models_rejected() {
        let err = CorrectnessMatrix::new("d", names(&["A", "A"]), vec![]).unwrap_err();
        assert!(matches!(err, Error::InvalidMatrix(_)));
    }

    #[test]
    fn leaderboard_means() {
        let lb = compute_leaderboard(&s1s2());
        assert_eq!(lb.table["s1"]["A"], 1.0);
        assert_eq!(lb.table["s1"]["B"], 0.0);
        assert_eq!(lb.table["s2"]["A"], 0.0);
        assert_eq!(lb.table["s2"]["B"], 1.0);
        assert_eq!(lb.overall["A"], 2.0 / 3.0);
        assert_eq!(lb.overall["B"], 1.0 / 3.0);
    }

    #[test]
    fn single_model_all_ones() {
        let m = CorrectnessMatrix::new(
            "d",
            names(&["only"]),
            vec![
                QueryRecord::new("a", "x", "", "", vec![1.0]),
                QueryRecord::new("b", "y", "", "", vec![1.0]),
            ],
        )
        .unwrap();
        let lb = compute_leaderboard(&m);
        assert!(lb.table.values().all(|row| row["only"] == 1.0));
        assert_eq!(lb.overall["only"], 1.0);
    }

    #[test]
    fn leaderboard_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lb.json");
        let lb = compute_leaderboard(&s1s2());
        save_leaderboard(&lb, &path).unwrap();
        assert_eq!(load_leaderboard(&path).unwrap(), lb);

        std::fs::write(&path, r#"{"dataset":"d","overall":{},"subjects":{"s":{"A":1.5}}}"#).unwrap();
        assert!(matches!(
            load_leaderboard(&path),
            Err(Error::ScoreOutOfRange { .. })
        ));
        std::fs::write(&path, r#"{"dataset":"d","overall":{},"subjects":{}}"#).unwrap();
        let err = load_leaderboard(&path).unwrap_err();
        assert!(err.to_string().contains("no subjects"), "{err}");
        std::fs::write(
            &path,
            r#"{"dataset":"d","overall":{},"subjects":{"s":{"A":0.5}},"extra":1}"#,
        )
        .unwrap();
        assert!(matches!(
            load_leaderboard(&path),
            Err(Error::InvalidLeaderboard(_))
        ));
    }

    #[test]
    fn best_model_prefers_first_on_tie() {
        let mut lb = compute_leaderboard(&s1s2());
        assert_eq!(lb.best_model("s2"), Some("B"));
        lb.table["s2"]["A"] = 1.0;
        assert_eq!(lb.best_model("s2"), Some("A"));
        assert_eq!(lb.best_model("chemistry"), None);
    }

    #[test]
    fn split_partitions_records() {
        let m = s1s2();
        let (train, test) = m.split(0.67, 7).unwrap();
        assert_eq!(train.len() + test.len(), 3);
        assert_eq!(train.len(), 2);
        let mut ids: Vec<_> = train
            .records()
            .iter()
            .chain(test.records())
            .map(|r| r.query_id.clone())
            .collect();
        ids.sort();
        assert_eq!(ids, vec!["q1", "q2", "q3"]);
    }

    #[test]
    fn restrict_reorders_scores() {
        let m = s1s2().restrict_models(&names(&["B"])).unwrap();
        assert_eq!(m.model_names(), &["B".to_string()]);
        assert_eq!(m.records()[2].scores, vec![1.0]);
    }
}
