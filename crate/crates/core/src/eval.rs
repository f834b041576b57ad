//! Scoring of model predictions: numeric extraction with mean relative
//! accuracy for numeric answers, option matching with accuracy for
//! multiple-choice answers, and per-task aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qa::{AnswerType, QaRecord, Task};

/// Confidence thresholds θ; a prediction passes θ when its relative error is
/// strictly below `1 − θ`.
pub const MRA_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground truth {0} is not positive")]
    NonPositiveTruth(f64),
    #[error("no number found")]
    NoNumberFound,
    #[error("no option matches")]
    NoMatch,
    #[error("answer matches several options: {0:?}")]
    AmbiguousMatch(Vec<usize>),
    #[error("duplicate prediction qid '{0}'")]
    DuplicateQid(String),
    #[error("predictions line {line}: {message}")]
    BadPrediction { line: usize, message: String },
}

pub fn mra_passes(pred: f64, truth: f64) -> Result<[bool; 10], EvalError> {
    if !(truth > 0.0) || !truth.is_finite() {
        return Err(EvalError::NonPositiveTruth(truth));
    }
    let rel = (pred - truth).abs() / truth;
    Ok(MRA_THRESHOLDS.map(|theta| rel < 1.0 - theta))
}

pub fn mra(pred: f64, truth: f64) -> Result<f64, EvalError> {
    Ok(mra_passes(pred, truth)?.iter().filter(|&&p| p).count() as f64 / 10.0)
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)").expect("valid regex"))
}

/// First decimal numeral in `text`. Commas end a numeral, so "1,200" reads
/// as 1; units are ignored and never converted.
pub fn extract_number(text: &str) -> Result<f64, EvalError> {
    let m = number_re().find(text).ok_or(EvalError::NoNumberFound)?;
    m.as_str().parse().map_err(|_| EvalError::NoNumberFound)
}

fn letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\(?([A-Da-d])(?:[.):]|\)?[.:]?$)").expect("valid regex"))
}

fn normalize(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolves a free-text answer to an option index: a leading or lone option
/// letter first, then a unique whole-word occurrence of an option, then the
/// option sharing the most words with the answer by a margin of at least one.
pub fn match_option(text: &str, options: &[String]) -> Result<usize, EvalError> {
    let trimmed = text.trim();
    if let Some(c) = letter_re().captures(trimmed) {
        let idx = (c[1].to_ascii_uppercase().as_bytes()[0] - b'A') as usize;
        if idx < options.len() {
            return Ok(idx);
        }
    }

    let norm_text = normalize(trimmed);
    let norm_opts: Vec<String> = options.iter().map(|o| normalize(o)).collect();
    if let Some(i) = norm_opts.iter().position(|o| *o == norm_text) {
        return Ok(i);
    }
    let padded = format!(" {norm_text} ");
    let hits: Vec<usize> =
        (0..options.len()).filter(|&i| !norm_opts[i].is_empty() && padded.contains(&format!(" {} ", norm_opts[i]))).collect();
    // An option that is a word-run inside another matching option is not a separate hit.
    let maximal: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| !hits.iter().any(|&j| j != i && norm_opts[j].len() > norm_opts[i].len() && format!(" {} ", norm_opts[j]).contains(&format!(" {} ", norm_opts[i]))))
        .collect();
    match maximal.len() {
        1 => return Ok(maximal[0]),
        0 => {}
        _ => return Err(EvalError::AmbiguousMatch(maximal)),
    }

    let words: BTreeSet<&str> = norm_text.split(' ').filter(|w| !w.is_empty()).collect();
    let overlap: Vec<usize> =
        norm_opts.iter().map(|o| o.split(' ').collect::<BTreeSet<_>>().intersection(&words).count()).collect();
    let best = overlap.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Err(EvalError::NoMatch);
    }
    let top: Vec<usize> = (0..options.len()).filter(|&i| overlap[i] == best).collect();
    if top.len() == 1 {
        Ok(top[0])
    } else {
        Err(EvalError::AmbiguousMatch(top))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub qid: String,
    pub raw_text: String,
}

pub fn parse_predictions_jsonl(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(line).map_err(|e| EvalError::BadPrediction { line: n + 1, message: e.to_string() })?;
        if p.qid.is_empty() {
            return Err(EvalError::BadPrediction { line: n + 1, message: "qid must be nonempty".into() });
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Overall is the unweighted mean of per-task means.
    #[default]
    TaskMean,
    /// Overall is the mean over all questions.
    QuestionMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Judgment {
    pub qid: String,
    pub task: Task,
    pub score: f64,
    pub missing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_option: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parsed_number: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_passes: Option<[bool; 10]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskScore {
    pub count: usize,
    pub missing: usize,
    pub flagged: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub weighting: Weighting,
    pub note: &'static str,
    pub per_task: BTreeMap<Task, TaskScore>,
    pub overall: f64,
    pub unmatched_predictions: usize,
    pub judgments: Vec<Judgment>,
}

const TASK_MEAN_NOTE: &str = "overall is the unweighted mean of per-task scores over tasks present";
const QUESTION_MEAN_NOTE: &str = "overall is the mean over all questions";

fn judge(r: &QaRecord, pred: Option<&Prediction>) -> Judgment {
    let mut j = Judgment {
        qid: r.qid.clone(),
        task: r.task,
        score: 0.0,
        missing: pred.is_none(),
        matched_option: None,
        parsed_number: None,
        threshold_passes: None,
        error: None,
    };
    let Some(pred) = pred else { return j };
    match r.answer_type {
        AnswerType::Na => {
            let truth: f64 = match r.ground_truth.trim().parse() {
                Ok(t) => t,
                Err(_) => {
                    j.error = Some(format!("unparseable ground truth '{}'", r.ground_truth));
                    return j;
                }
            };
            let res = extract_number(&pred.raw_text).and_then(|p| {
                j.parsed_number = Some(p);
                mra_passes(p, truth)
            });
            match res {
                Ok(passes) => {
                    j.score = passes.iter().filter(|&&p| p).count() as f64 / 10.0;
                    j.threshold_passes = Some(passes);
                }
                Err(e) => j.error = Some(e.to_string()),
            }
        }
        AnswerType::Mca => match match_option(&pred.raw_text, &r.options) {
            Ok(i) => {
                j.matched_option = Some(i);
                j.score = if r.options[i] == r.ground_truth { 1.0 } else { 0.0 };
            }
            Err(e) => j.error = Some(e.to_string()),
        },
    }
    j
}

/// Scores every record; records without a prediction score 0 and are
/// counted as missing. Predictions for unknown qids are tallied and ignored.
pub fn score_run(records: &[QaRecord], preds: &[Prediction], weighting: Weighting) -> Result<EvalReport, EvalError> {
    let mut by_qid: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in preds {
        if by_qid.insert(&p.qid, p).is_some() {
            return Err(EvalError::DuplicateQid(p.qid.clone()));
        }
    }
    let known: BTreeSet<&str> = records.iter().map(|r| r.qid.as_str()).collect();
    let unmatched_predictions = by_qid.keys().filter(|q| !known.contains(*q)).count();

    let mut judgments: Vec<Judgment> = records.par_iter().map(|r| judge(r, by_qid.get(r.qid.as_str()).copied())).collect();
    judgments.sort_by(|a, b| a.task.cmp(&b.task).then_with(|| a.qid.cmp(&b.qid)));

    let mut sums: BTreeMap<Task, (TaskScore, f64)> = BTreeMap::new();
    for j in &judgments {
        let e = sums.entry(j.task).or_insert((TaskScore { count: 0, missing: 0, flagged: 0, score: 0.0 }, 0.0));
        e.0.count += 1;
        e.0.missing += j.missing as usize;
        e.0.flagged += j.error.is_some() as usize;
        e.1 += j.score;
    }
    let per_task: BTreeMap<Task, TaskScore> =
        sums.into_iter().map(|(t, (mut s, total))| (t, { s.score = total / s.count as f64; s })).collect();
    let overall = match weighting {
        _ if per_task.is_empty() => 0.0,
        Weighting::TaskMean => per_task.values().map(|s| s.score).sum::<f64>() / per_task.len() as f64,
        Weighting::QuestionMean => judgments.iter().map(|j| j.score).sum::<f64>() / judgments.len() as f64,
    };
    Ok(EvalReport {
        weighting,
        note: match weighting {
            Weighting::TaskMean => TASK_MEAN_NOTE,
            Weighting::QuestionMean => QUESTION_MEAN_NOTE,
        },
        per_task,
        overall,
        unmatched_predictions,
        judgments,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>7} {:>7} {:>7} {:>7}", "task", "count", "missing", "flagged", "score");
        for (t, s) in &self.per_task {
            let _ = writeln!(out, "{:<20} {:>7} {:>7} {:>7} {:>7.4}", t.name(), s.count, s.missing, s.flagged, s.score);
        }
        let _ = writeln!(out, "{:<20} {:>31.4}", "overall", self.overall);
        let _ = writeln!(out, "({})", self.note);
        out
    }
}
