//! Problem, proof-state and dialogue-record files.
//!
//! `problems.json` and `states.json` are single documents carrying a
//! `format_version`; records are JSONL, one [`DialogueRecord`] per line.
//! Formulas are always written in ascii notation. Every error names the file
//! and the line of the offending entry.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::formula::{parse, Formula};
use crate::kg::{KgBounds, KgError, KnowledgeGraph, ProofProblem, ProofState, StateKey};
use crate::pipeline::DialogueRecord;
use crate::rules::{Derivation, EnumerationConfig, RuleId};

pub const FORMAT_VERSION: u32 = 1;
pub const PROBLEMS_FILE: &str = "problems.json";
pub const STATES_FILE: &str = "states.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}:{line}: schema error: {message}")]
    Schema { file: String, line: usize, message: String },
    #[error("{file}:{line}: {item}: {message}")]
    Validation {
        file: String,
        line: usize,
        item: String,
        message: String,
    },
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Schema { line, .. } | CorpusError::Validation { line, .. } => Some(*line),
        }
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CorpusError> {
    let io = |e: std::io::Error| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

/// 1-based line of `part`, which must be a slice of `src`.
fn line_of(src: &str, part: &str) -> usize {
    let offset = (part.as_ptr() as usize).saturating_sub(src.as_ptr() as usize).min(src.len());
    src[..offset].matches('\n').count() + 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    id: String,
    level: u8,
    premises: Vec<String>,
    conclusion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_derived_complexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewrite_depth_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    addition_vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_intermediates: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    statement: String,
    rule: RuleId,
    parents: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    id: String,
    problem: String,
    intermediates: Vec<StepDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemsIn<'a> {
    format_version: u32,
    #[serde(borrow)]
    problems: Vec<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatesIn<'a> {
    format_version: u32,
    #[serde(borrow)]
    states: Vec<&'a RawValue>,
}

#[derive(Serialize)]
struct ProblemsOut<'a> {
    format_version: u32,
    problems: &'a [ProblemDoc],
}

#[derive(Serialize)]
struct StatesOut<'a> {
    format_version: u32,
    states: &'a [StateDoc],
}

/// A problem with the enumeration bounds its graph is built under.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusProblem {
    pub problem: Arc<ProofProblem>,
    /// Overrides of the default complexity cap and rewrite depth.
    pub max_derived_complexity: Option<f64>,
    pub rewrite_depth_limit: Option<usize>,
    /// Replaces the default vocabulary (every subformula of the problem).
    pub addition_vocabulary: Option<BTreeSet<Formula>>,
    /// Overrides the graph depth bound.
    pub max_intermediates: Option<usize>,
}

impl CorpusProblem {
    pub fn new(problem: ProofProblem) -> CorpusProblem {
        CorpusProblem {
            problem: Arc::new(problem),
            max_derived_complexity: None,
            rewrite_depth_limit: None,
            addition_vocabulary: None,
            max_intermediates: None,
        }
    }

    pub fn config(&self) -> EnumerationConfig {
        let mut c = self.problem.enumeration_config();
        if let Some(cap) = self.max_derived_complexity {
            c.max_derived_complexity = cap;
        }
        if let Some(depth) = self.rewrite_depth_limit {
            c.rewrite_depth_limit = depth;
        }
        if let Some(vocab) = &self.addition_vocabulary {
            c.addition_vocabulary = vocab.clone();
        }
        c
    }

    /// `defaults` with this problem's depth override applied.
    pub fn bounds(&self, defaults: KgBounds) -> KgBounds {
        KgBounds {
            max_intermediates: self.max_intermediates.unwrap_or(defaults.max_intermediates),
            ..defaults
        }
    }

    /// Builds under `bounds(defaults)`.
    pub fn build_kg(&self, defaults: KgBounds) -> KnowledgeGraph {
        KnowledgeGraph::build(self.problem.clone(), self.config(), self.bounds(defaults))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusState {
    pub id: String,
    pub state: ProofState,
}

/// A validated corpus: every state is justified step by step under its
/// problem's bounds and no two states of a problem share a key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub problems: Vec<CorpusProblem>,
    pub states: Vec<CorpusState>,
}

fn formula(file: &str, line: usize, item: &str, text: &str) -> Result<Formula, CorpusError> {
    parse(text).map_err(|e| CorpusError::Validation {
        file: file.into(),
        line,
        item: item.into(),
        message: format!("cannot parse {text:?}: {e}"),
    })
}

fn element<T: serde::de::DeserializeOwned>(file: &str, src: &str, raw: &RawValue) -> Result<(T, usize), CorpusError> {
    let line = line_of(src, raw.get());
    serde_json::from_str(raw.get())
        .map(|v| (v, line))
        .map_err(|e| CorpusError::Schema {
            file: file.into(),
            line: line + e.line().saturating_sub(1),
            message: e.to_string(),
        })
}

fn document<'a, T: Deserialize<'a>>(file: &str, src: &'a str) -> Result<T, CorpusError> {
    serde_json::from_str(src).map_err(|e| CorpusError::Schema {
        file: file.into(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn check_version(file: &str, version: u32) -> Result<(), CorpusError> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(CorpusError::Schema {
            file: file.into(),
            line: 1,
            message: format!("format_version {version} is not supported (expected {FORMAT_VERSION})"),
        })
    }
}

impl Corpus {
    pub fn problem(&self, id: &str) -> Option<&CorpusProblem> {
        self.problems.iter().find(|p| p.problem.id == id)
    }

    pub fn state(&self, id: &str) -> Option<&CorpusState> {
        self.states.iter().find(|s| s.id == id)
    }

    /// Reads `problems.json` and `states.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Corpus, CorpusError> {
        let problems = dir.join(PROBLEMS_FILE);
        let states = dir.join(STATES_FILE);
        Corpus::from_sources(
            &problems.display().to_string(),
            &read(&problems)?,
            &states.display().to_string(),
            &read(&states)?,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        write(&dir.join(PROBLEMS_FILE), &self.problems_json())?;
        write(&dir.join(STATES_FILE), &self.states_json())
    }

    pub fn from_sources(problems_file: &str, problems: &str, states_file: &str, states: &str) -> Result<Corpus, CorpusError> {
        let mut corpus = Corpus {
            problems: parse_problems(problems_file, problems)?,
            states: Vec::new(),
        };
        corpus.states = parse_states(states_file, states, &corpus.problems)?;
        Ok(corpus)
    }

    pub fn problems_json(&self) -> String {
        let docs: Vec<ProblemDoc> = self
            .problems
            .iter()
            .map(|p| ProblemDoc {
                id: p.problem.id.clone(),
                level: p.problem.level,
                premises: p.problem.premises.iter().map(Formula::ascii).collect(),
                conclusion: p.problem.conclusion.ascii(),
                max_derived_complexity: p.max_derived_complexity,
                rewrite_depth_limit: p.rewrite_depth_limit,
                addition_vocabulary: p
                    .addition_vocabulary
                    .as_ref()
                    .map(|v| v.iter().map(Formula::ascii).collect()),
                max_intermediates: p.max_intermediates,
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&ProblemsOut {
            format_version: FORMAT_VERSION,
            problems: &docs,
        })
        .expect("problems serialize");
        out.push('\n');
        out
    }

    pub fn states_json(&self) -> String {
        let docs: Vec<StateDoc> = self
            .states
            .iter()
            .map(|s| StateDoc {
                id: s.id.clone(),
                problem: s.state.problem().id.clone(),
                intermediates: s
                    .state
                    .intermediates()
                    .iter()
                    .map(|d| StepDoc {
                        statement: d.derived.ascii(),
                        rule: d.rule,
                        parents: d.parents.iter().map(Formula::ascii).collect(),
                    })
                    .collect(),
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&StatesOut {
            format_version: FORMAT_VERSION,
            states: &docs,
        })
        .expect("states serialize");
        out.push('\n');
        out
    }

    /// States per level, for levels that have any.
    pub fn level_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.states {
            *counts.entry(s.state.problem().level).or_default() += 1;
        }
        counts
    }
}

fn parse_problems(file: &str, src: &str) -> Result<Vec<CorpusProblem>, CorpusError> {
    let doc: ProblemsIn = document(file, src)?;
    check_version(file, doc.format_version)?;
    let mut out: Vec<CorpusProblem> = Vec::new();
    for raw in doc.problems {
        let (p, line): (ProblemDoc, usize) = element(file, src, raw)?;
        let item = format!("problem {}", p.id);
        let invalid = |message: String| CorpusError::Validation {
            file: file.into(),
            line,
            item: item.clone(),
            message,
        };
        if out.iter().any(|q| q.problem.id == p.id) {
            return Err(invalid("duplicate problem id".into()));
        }
        let premises = p
            .premises
            .iter()
            .map(|t| formula(file, line, &item, t))
            .collect::<Result<Vec<_>, _>>()?;
        let conclusion = formula(file, line, &item, &p.conclusion)?;
        let problem = ProofProblem::new(p.id.clone(), premises, conclusion, p.level).map_err(|e| match e {
            KgError::InvalidProblem(m) => invalid(m),
            other => invalid(other.to_string()),
        })?;
        if p.max_derived_complexity.is_some_and(|c| !(c.is_finite() && c >= 0.0)) {
            return Err(invalid("max_derived_complexity must be a non-negative number".into()));
        }
        let addition_vocabulary = match &p.addition_vocabulary {
            Some(v) => Some(
                v.iter()
                    .map(|t| formula(file, line, &item, t))
                    .collect::<Result<BTreeSet<_>, _>>()?,
            ),
            None => None,
        };
        out.push(CorpusProblem {
            problem: Arc::new(problem),
            max_derived_complexity: p.max_derived_complexity,
            rewrite_depth_limit: p.rewrite_depth_limit,
            addition_vocabulary,
            max_intermediates: p.max_intermediates,
        });
    }
    Ok(out)
}

fn parse_states(file: &str, src: &str, problems: &[CorpusProblem]) -> Result<Vec<CorpusState>, CorpusError> {
    let doc: StatesIn = document(file, src)?;
    check_version(file, doc.format_version)?;
    let mut ids = BTreeSet::new();
    let mut keys: BTreeSet<(String, StateKey)> = BTreeSet::new();
    let mut out = Vec::new();
    for raw in doc.states {
        let (s, line): (StateDoc, usize) = element(file, src, raw)?;
        let item = format!("state {}", s.id);
        let invalid = |message: String| CorpusError::Validation {
            file: file.into(),
            line,
            item: item.clone(),
            message,
        };
        if !ids.insert(s.id.clone()) {
            return Err(invalid("duplicate state id".into()));
        }
        let problem = problems
            .iter()
            .find(|p| p.problem.id == s.problem)
            .ok_or_else(|| invalid(format!("unknown problem {:?}", s.problem)))?;
        let steps = s
            .intermediates
            .iter()
            .map(|step| {
                Ok(Derivation::new(
                    formula(file, line, &item, &step.statement)?,
                    step.rule,
                    step.parents
                        .iter()
                        .map(|t| formula(file, line, &item, t))
                        .collect::<Result<_, _>>()?,
                ))
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        let state = ProofState::new(problem.problem.clone(), steps, &problem.config()).map_err(|e| match e {
            KgError::InvalidState(m) => invalid(m),
            other => invalid(other.to_string()),
        })?;
        if state.is_goal() {
            return Err(invalid("state already contains the conclusion".into()));
        }
        if !keys.insert((s.problem.clone(), state.key())) {
            return Err(invalid(format!("same statements as an earlier state of problem {}", s.problem)));
        }
        out.push(CorpusState { id: s.id, state });
    }
    Ok(out)
}

/// One line of the dataset table. `level` is `None` on the totals row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub level: Option<u8>,
    pub states: usize,
    /// Mean of premises + intermediates per state.
    pub mean_statements: Option<f64>,
    /// Mean of intermediates alone.
    pub mean_intermediates: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Pooled over all states; absent for an empty corpus.
    pub total: Option<SummaryRow>,
    /// Unweighted mean of the per-level `mean_statements`.
    pub mean_of_level_means: Option<f64>,
}

/// Per-level table from `(level, premises, intermediates)` per state.
pub fn summarize_counts<I: IntoIterator<Item = (u8, usize, usize)>>(states: I) -> Summary {
    let mut by_level: BTreeMap<u8, (usize, usize, usize)> = BTreeMap::new();
    for (level, premises, inter) in states {
        let e = by_level.entry(level).or_default();
        e.0 += 1;
        e.1 += premises + inter;
        e.2 += inter;
    }
    let row = |level, (n, stmts, inter): (usize, usize, usize)| SummaryRow {
        level,
        states: n,
        mean_statements: (n > 0).then(|| stmts as f64 / n as f64),
        mean_intermediates: (n > 0).then(|| inter as f64 / n as f64),
    };
    let rows: Vec<SummaryRow> = by_level.iter().map(|(&l, &c)| row(Some(l), c)).collect();
    if rows.is_empty() {
        return Summary::default();
    }
    let sum = by_level
        .values()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let means: Vec<f64> = rows.iter().filter_map(|r| r.mean_statements).collect();
    Summary {
        mean_of_level_means: Some(means.iter().sum::<f64>() / means.len() as f64),
        total: Some(row(None, sum)),
        rows,
    }
}

pub fn summarize(corpus: &Corpus) -> Summary {
    summarize_counts(corpus.states.iter().map(|s| {
        let st = &s.state;
        (st.problem().level, st.problem().premises.len(), st.intermediates().len())
    }))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        writeln!(f, "{:<8} {:>7} {:>16} {:>14}", "Level", "States", "Avg. Statements", "Avg. Steps")?;
        for r in self.rows.iter().chain(&self.total) {
            let level = r.level.map_or("Total".to_string(), |l| l.to_string());
            writeln!(
                f,
                "{:<8} {:>7} {:>16} {:>14}",
                level,
                r.states,
                num(r.mean_statements),
                num(r.mean_intermediates)
            )?;
        }
        if self.total.is_some() {
            writeln!(f, "Mean of level means (Avg. Statements): {}", num(self.mean_of_level_means))?;
        }
        Ok(())
    }
}

/// Writes one record per line. An empty slice gives an empty file.
pub fn save_records(records: &[DialogueRecord], path: &Path) -> Result<(), CorpusError> {
    write(path, &records_jsonl(records))
}

pub fn records_jsonl(records: &[DialogueRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn load_records(path: &Path) -> Result<Vec<DialogueRecord>, CorpusError> {
    parse_records(&path.display().to_string(), &read(path)?)
}

pub fn parse_records(file: &str, src: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Schema {
                file: file.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
