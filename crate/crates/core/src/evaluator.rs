//! Replay evaluation of routing policies over recorded scores.
//!
//! A policy picks one model per query; its accuracy is the mean recorded
//! score of the picked models. No model is executed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{compute_leaderboard, CorrectnessMatrix, Leaderboard};
use crate::error::{Error, Result};
use crate::labeler::{build_labels, build_query_labels, build_subject_labels, Level};
use crate::router::{self, route, route_via_leaderboard, FeaturizerSpec, RouterParams, TrainConfig};

/// How a model is chosen for each query during replay.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Fixed(&'a str),
    BestSingle,
    QueryOracle,
    SubjectOracle,
    Router(&'a RouterParams),
    TwoStage {
        subject_params: &'a RouterParams,
        leaderboard: &'a Leaderboard,
    },
}

impl Policy<'_> {
    pub fn describe(&self) -> String {
        match self {
            Policy::Fixed(m) => format!("fixed:{m}"),
            Policy::BestSingle => "best-single".into(),
            Policy::QueryOracle => "query-oracle".into(),
            Policy::SubjectOracle => "subject-oracle".into(),
            Policy::Router(_) => "router".into(),
            Policy::TwoStage { .. } => "two-stage".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSingle {
    pub model: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBounds {
    pub query_oracle_acc: f64,
    pub subject_oracle_acc: f64,
    pub best_single_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub policy: String,
    pub accuracy: f64,
    pub per_subject: IndexMap<String, f64>,
    pub best_single: BestSingle,
    pub increment_delta: f64,
    pub routing_histogram: IndexMap<String, f64>,
    /// Accuracy of every individual model on the same matrix.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub models: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBounds>,
}

fn best_single(matrix: &CorrectnessMatrix) -> (usize, f64) {
    let lb = compute_leaderboard(matrix);
    let overall: Vec<f64> = lb.overall.values().copied().collect();
    let best = router::argmax(&overall);
    (best, overall[best])
}

fn model_index_map(matrix: &CorrectnessMatrix, labels: &[String]) -> Result<Vec<usize>> {
    let missing: Vec<String> = labels
        .iter()
        .filter(|l| matrix.model_index(l).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownPolicyModels(missing));
    }
    Ok(labels.iter().map(|l| matrix.model_index(l).unwrap()).collect())
}

fn choices(matrix: &CorrectnessMatrix, policy: &Policy<'_>) -> Result<Vec<usize>> {
    let n = matrix.len();
    Ok(match *policy {
        Policy::Fixed(name) => {
            let l = matrix
                .model_index(name)
                .ok_or_else(|| Error::UnknownPolicyModels(vec![name.to_string()]))?;
            vec![l; n]
        }
        Policy::BestSingle => vec![best_single(matrix).0; n],
        Policy::QueryOracle => build_query_labels(matrix).labels().collect(),
        Policy::SubjectOracle => build_subject_labels(matrix).labels().collect(),
        Policy::Router(params) => {
            let to_model = model_index_map(matrix, &params.labels)?;
            matrix
                .records()
                .iter()
                .map(|r| to_model[route(params, &r.text).index])
                .collect()
        }
        Policy::TwoStage {
            subject_params,
            leaderboard,
        } => matrix
            .records()
            .iter()
            .map(|r| {
                let routed = route_via_leaderboard(subject_params, leaderboard, &r.text)?;
                matrix
                    .model_index(&routed.model)
                    .ok_or(Error::UnknownPolicyModels(vec![routed.model]))
            })
            .collect::<Result<_>>()?,
    })
}

/// Replay `policy` over `matrix`.
pub fn replay(matrix: &CorrectnessMatrix, policy: Policy<'_>) -> Result<EvalReport> {
    let chosen = choices(matrix, &policy)?;
    let records = matrix.records();
    let n = matrix.len() as f64;

    // Sums grouped by subject in record order, matching `oracle_bounds`.
    let mut total = 0.0;
    let mut per_subject = IndexMap::new();
    for (subject, group) in matrix.subjects().iter().zip(matrix.subject_groups()) {
        let sum: f64 = group.iter().fold(0.0, |acc, &i| acc + records[i].scores[chosen[i]]);
        total += sum;
        per_subject.insert(subject.clone(), sum / group.len() as f64);
    }

    let mut counts = vec![0usize; matrix.num_models()];
    for &c in &chosen {
        counts[c] += 1;
    }
    let routing_histogram = matrix
        .model_names()
        .iter()
        .cloned()
        .zip(counts.iter().map(|&c| c as f64 / n))
        .collect();

    let lb = compute_leaderboard(matrix);
    let (best, best_acc) = best_single(matrix);
    let accuracy = total / n;
    Ok(EvalReport {
        dataset: matrix.dataset_id().to_string(),
        policy: policy.describe(),
        accuracy,
        per_subject,
        best_single: BestSingle {
            model: matrix.model_names()[best].clone(),
            accuracy: best_acc,
        },
        increment_delta: accuracy - best_acc,
        routing_histogram,
        models: lb.overall,
        oracle: None,
    })
}

/// Upper bounds from choosing the best model per query and per subject,
/// and the best fixed model.
///
/// All three are computed from identically ordered sums, so
/// `query ≥ subject ≥ single` holds exactly in floating point.
pub fn oracle_bounds(matrix: &CorrectnessMatrix) -> OracleBounds {
    let records = matrix.records();
    let n = matrix.len() as f64;
    let sums = matrix.subject_score_sums();

    let mut query_total = 0.0;
    let mut subject_total = 0.0;
    let mut model_totals = vec![0.0; matrix.num_models()];
    for (group, row) in matrix.subject_groups().iter().zip(&sums) {
        query_total += group.iter().fold(0.0, |acc, &i| {
            acc + records[i].scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        });
        subject_total += row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (t, s) in model_totals.iter_mut().zip(row) {
            *t += s;
        }
    }
    let single_total = model_totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    OracleBounds {
        query_oracle_acc: query_total / n,
        subject_oracle_acc: subject_total / n,
        best_single_acc: single_total / n,
    }
}

/// Display name of a trained router policy in reports.
pub fn coe_policy_name(level: Level) -> &'static str {
    match level {
        Level::Query => "CoE (Query-Level)",
        Level::Subject => "CoE (Subject-Level)",
    }
}

/// Label `train`, fit a router, replay it on `test`.
///
/// Both matrices are restricted to their shared models (in `train` order)
/// and the router's labels to the models that actually win a label. Pass
/// the same matrix twice for the naive scenario.
pub fn scenario_run(
    train: &CorrectnessMatrix,
    test: &CorrectnessMatrix,
    level: Level,
    spec: FeaturizerSpec,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    scenario_run_with_params(train, test, level, spec, cfg).map(|(r, _)| r)
}

pub fn scenario_run_with_params(
    train: &CorrectnessMatrix,
    test: &CorrectnessMatrix,
    level: Level,
    spec: FeaturizerSpec,
    cfg: &TrainConfig,
) -> Result<(EvalReport, RouterParams)> {
    let shared: Vec<String> = train
        .model_names()
        .iter()
        .filter(|m| test.model_index(m).is_some())
        .cloned()
        .collect();
    if shared.len() < 2 {
        return Err(Error::TooFewSharedModels(shared.len()));
    }
    let train = train.restrict_models(&shared)?;
    let test = test.restrict_models(&shared)?;

    let dataset = build_labels(&train, level).restrict_to_model_set();
    let params = router::train(&dataset, spec, cfg)?;
    let mut report = replay(&test, Policy::Router(&params))?;
    report.policy = coe_policy_name(level).to_string();
    report.oracle = Some(oracle_bounds(&test));
    Ok((report, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRule {
    Exact,
    ChoiceLetter,
}

/// Score a raw model output against the gold answer; 1.0 or 0.0.
///
/// `Exact` compares trimmed strings case-insensitively. `ChoiceLetter`
/// takes the last standalone capital letter A–J in the output (it may be
/// wrapped in parentheses) and compares it to the gold letter.
pub fn score_answer(raw_output: &str, gold: &str, rule: ScoreRule) -> f64 {
    let hit = match rule {
        ScoreRule::Exact => raw_output.trim().to_lowercase() == gold.trim().to_lowercase(),
        ScoreRule::ChoiceLetter => match extract_choice_letter(raw_output) {
            Some(letter) => gold.trim().eq_ignore_ascii_case(letter.encode_utf8(&mut [0; 4])),
            None => false,
        },
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

fn extract_choice_letter(text: &str) -> Option<char> {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len()).rev().find_map(|i| {
        let c = chars[i];
        let standalone = ('A'..='J').contains(&c)
            && (i == 0 || !chars[i - 1].is_alphanumeric())
            && chars.get(i + 1).is_none_or(|n| !n.is_alphanumeric());
        standalone.then_some(c)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiversity {
    pub model: String,
    /// First model (in matrix order) that is never worse and sometimes better.
    pub dominated_by: Option<String>,
    /// Fraction of queries on which this model is the unique best.
    pub win_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub dataset: String,
    pub models: Vec<ModelDiversity>,
    /// Set when a single model dominates every other one, in which case
    /// routing cannot beat always choosing it.
    pub dominant_model: Option<String>,
}

fn dominates(matrix: &CorrectnessMatrix, v: usize, u: usize) -> bool {
    let mut strict = false;
    for r in matrix.records() {
        if r.scores[v] < r.scores[u] {
            return false;
        }
        strict |= r.scores[v] > r.scores[u];
    }
    strict
}

pub fn diversity_report(matrix: &CorrectnessMatrix) -> DiversityReport {
    let l = matrix.num_models();
    let names = matrix.model_names();
    let mut wins = vec![0usize; l];
    for r in matrix.records() {
        let best = router::argmax(&r.scores);
        if r.scores.iter().enumerate().all(|(k, s)| k == best || *s < r.scores[best]) {
            wins[best] += 1;
        }
    }
    let models = (0..l)
        .map(|u| ModelDiversity {
            model: names[u].clone(),
            dominated_by: (0..l)
                .find(|&v| v != u && dominates(matrix, v, u))
                .map(|v| names[v].clone()),
            win_share: wins[u] as f64 / matrix.len() as f64,
        })
        .collect();
    let dominant_model = (0..l)
        .find(|&v| (0..l).all(|u| u == v || dominates(matrix, v, u)))
        .map(|v| names[v].clone());
    DiversityReport {
        dataset: matrix.dataset_id().to_string(),
        models,
        dominant_model,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "structured" => Ok(ReportFormat::Structured),
            "table" => Ok(ReportFormat::Table),
            other => Err(format!("unknown format `{other}` (expected structured|table)")),
        }
    }
}

pub fn format_percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Signed percentage with two decimals, e.g. `+0.87%`.
pub fn format_delta(delta: f64) -> String {
    let s = format!("{:+.2}%", delta * 100.0);
    if s == "-0.00%" {
        "+0.00%".to_string()
    } else {
        s
    }
}

fn push_table(out: &mut String, rows: &[[String; 3]]) {
    let widths: Vec<usize> = (0..2)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line = format!(
            "{}{}  {}{}  {}",
            row[0],
            " ".repeat(widths[0] - row[0].chars().count()),
            row[1],
            " ".repeat(widths[1] - row[1].chars().count()),
            row[2]
        );
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Table => {
            let mut out = format!("Dataset: {}\n\n", report.dataset);
            let mut rows = vec![["Model".into(), "Accuracy".into(), "Increment Δ".into()]];
            for (model, acc) in &report.models {
                let delta = if *model == report.best_single.model { "0" } else { "-" };
                rows.push([model.clone(), format_percent(*acc), delta.into()]);
            }
            if report.models.is_empty() {
                rows.push([
                    report.best_single.model.clone(),
                    format_percent(report.best_single.accuracy),
                    "0".into(),
                ]);
            }
            rows.push([
                report.policy.clone(),
                format_percent(report.accuracy),
                format_delta(report.increment_delta),
            ]);
            push_table(&mut out, &rows);

            if let Some(o) = &report.oracle {
                out.push_str(&format!(
                    "\nOracle bounds: query {}, subject {}, single {}\n",
                    format_percent(o.query_oracle_acc),
                    format_percent(o.subject_oracle_acc),
                    format_percent(o.best_single_acc)
                ));
            }

            out.push_str("\nRouting\n");
            let rows: Vec<[String; 3]> = report
                .routing_histogram
                .iter()
                .map(|(m, f)| [m.clone(), format_percent(*f), String::new()])
                .collect();
            push_table(&mut out, &rows);

            if !report.per_subject.is_empty() {
                out.push_str("\nSubject\n");
                let rows: Vec<[String; 3]> = report
                    .per_subject
                    .iter()
                    .map(|(s, a)| [s.clone(), format_percent(*a), String::new()])
                    .collect();
                push_table(&mut out, &rows);
            }
            Ok(out)
        }
    }
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(report, format)?;
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
