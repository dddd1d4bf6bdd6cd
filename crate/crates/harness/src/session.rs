//! Interactive tutoring sessions: one learner working one problem.
//!
//! Justified Optimal and ValidNonOptimal steps extend the state; anything
//! else is recorded in the history and leaves the state alone. Feedback is
//! template text built from the classification and never names the rule or
//! lines the learner should have used.

use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use prooftutor::pipeline::prompts::full_hint_line;
use prooftutor::{
    parse, CorpusProblem, Derivation, Formula, KgError, KnowledgeGraph, ProofState, RuleId, StepCategory,
    StepClassification,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionError {
    GoalReached,
    Unparseable(String),
    Kg(KgError),
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SessionError::GoalReached => f.write_str("the conclusion has already been derived"),
            SessionError::Unparseable(m) => f.write_str(m),
            SessionError::Kg(e) => write!(f, "{e}"),
        }
    }
}

/// A parent given by 1-based line number or by statement text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParentRef {
    Line(usize),
    Statement(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSubmission {
    pub step: String,
    pub rule: String,
    #[serde(default)]
    pub parents: Vec<ParentRef>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    /// The next statement only.
    #[default]
    Tutor,
    /// Statement, rule and parents.
    Teacher,
}

impl Verbosity {
    pub fn parse(text: &str) -> Option<Verbosity> {
        match text {
            "tutor" => Some(Verbosity::Tutor),
            "teacher" => Some(Verbosity::Teacher),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attempt {
    pub step: Derivation,
    pub classification: StepClassification,
    pub feedback: String,
    pub accepted: bool,
}

#[derive(Clone)]
pub struct Session {
    pub id: String,
    pub problem: Arc<CorpusProblem>,
    pub kg: Arc<KnowledgeGraph>,
    pub state: ProofState,
    pub history: Vec<Attempt>,
    pub created_at: SystemTime,
    pub expires_at: SystemTime,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineView {
    pub number: usize,
    pub statement: String,
    pub unicode: String,
    /// Absent for premises.
    pub rule: Option<RuleId>,
    /// Line numbers of the parents.
    pub parents: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttemptView {
    pub step: String,
    pub rule: RuleId,
    pub parents: Vec<String>,
    pub verdict: String,
    pub category: StepCategory,
    pub justified: bool,
    pub feedback: String,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub problem_id: String,
    pub level: u8,
    pub premises: usize,
    pub lines: Vec<LineView>,
    pub conclusion: String,
    pub conclusion_unicode: String,
    pub goal_reached: bool,
    pub history: Vec<AttemptView>,
    pub created_at: u64,
    pub expires_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationView {
    pub category: StepCategory,
    pub justified: bool,
    pub distance_before: Option<usize>,
    pub distance_after: Option<usize>,
    pub verdict: String,
}

impl From<StepClassification> for ClassificationView {
    fn from(c: StepClassification) -> Self {
        ClassificationView {
            category: c.category,
            justified: c.justified,
            distance_before: c.distance_before,
            distance_after: c.distance_after,
            verdict: c.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepOutcome {
    pub classification: ClassificationView,
    pub accepted: bool,
    pub feedback: String,
    pub state: SessionView,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hint {
    pub verbosity: Verbosity,
    pub statement: String,
    pub unicode: String,
    /// Teacher verbosity only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parents: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

fn unix(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn feedback(step: &Formula, rule: RuleId, c: &StepClassification, goal: bool) -> String {
    let s = step.ascii();
    match (c.category, c.justified) {
        (StepCategory::Invalid, _) => format!("{s} cannot be derived in one step from the current lines."),
        (_, false) => format!(
            "{s} can be reached from here, but not by applying {} to the selected lines.",
            rule.short_name()
        ),
        (StepCategory::Optimal, true) if goal => format!("Correct: {s} completes the proof."),
        (StepCategory::Optimal, true) => format!("Correct: {s} brings you one step closer to the conclusion."),
        (StepCategory::ValidNonOptimal, true) => {
            format!("{s} is valid, but it does not shorten the rest of the proof. Consider a more direct step.")
        }
    }
}

impl Session {
    pub fn new(id: String, problem: Arc<CorpusProblem>, kg: Arc<KnowledgeGraph>, ttl: Duration) -> Session {
        let now = SystemTime::now();
        Session {
            id,
            state: kg.root_state(),
            problem,
            kg,
            history: Vec::new(),
            created_at: now,
            expires_at: now + ttl,
        }
    }

    pub fn expired(&self, now: SystemTime) -> bool {
        now >= self.expires_at
    }

    /// Current statements, premises first.
    fn lines(&self) -> Vec<Formula> {
        self.state.statements()
    }

    fn resolve(&self, parent: &ParentRef) -> Result<Result<Formula, String>, SessionError> {
        let lines = self.lines();
        Ok(match parent {
            ParentRef::Line(n) => match n.checked_sub(1).and_then(|i| lines.get(i)) {
                Some(f) => Ok(f.clone()),
                None => Err(format!("Line {n} does not exist.")),
            },
            ParentRef::Statement(text) => {
                let f = parse(text).map_err(|e| SessionError::Unparseable(format!("parent {text:?}: {e}")))?;
                if lines.contains(&f) {
                    Ok(f)
                } else {
                    Err(format!("{} is not one of the current lines.", f.ascii()))
                }
            }
        })
    }

    pub fn submit(&mut self, sub: &StepSubmission) -> Result<StepOutcome, SessionError> {
        if self.state.is_goal() {
            return Err(SessionError::GoalReached);
        }
        let step = parse(&sub.step).map_err(|e| SessionError::Unparseable(format!("step {:?}: {e}", sub.step)))?;
        let rule: RuleId = sub
            .rule
            .parse()
            .map_err(|_| SessionError::Unparseable(format!("unknown rule {:?}", sub.rule)))?;
        let mut parents = Vec::new();
        let mut missing = None;
        for p in &sub.parents {
            match self.resolve(p)? {
                Ok(f) => parents.push(f),
                Err(m) => {
                    missing.get_or_insert(m);
                }
            }
        }
        let (classification, mut text) = match missing {
            // A step built on a line that is not there is not a move in this state.
            Some(m) => (
                StepClassification {
                    category: StepCategory::Invalid,
                    justified: false,
                    distance_before: self.kg.distance(&self.state).map_err(SessionError::Kg)?,
                    distance_after: None,
                },
                m,
            ),
            None => {
                let c = self
                    .kg
                    .classify_step(&self.state, &step, rule, &parents)
                    .map_err(SessionError::Kg)?;
                let goal = step == self.problem.problem.conclusion;
                let text = feedback(&step, rule, &c, goal);
                (c, text)
            }
        };
        let derivation = Derivation::new(step, rule, parents);
        let mut accepted = classification.category != StepCategory::Invalid && classification.justified;
        if accepted {
            let next = self.state.extended(derivation.clone());
            if self.kg.contains(&next) {
                self.state = next;
            } else {
                accepted = false;
                text = format!(
                    "{} is valid, but it leads outside the explored proof space. Try a different step.",
                    derivation.derived.ascii()
                );
            }
        }
        self.history.push(Attempt {
            step: derivation,
            classification,
            feedback: text.clone(),
            accepted,
        });
        Ok(StepOutcome {
            classification: classification.into(),
            accepted,
            feedback: text,
            state: self.view(),
        })
    }

    pub fn hint(&self, verbosity: Verbosity) -> Result<Hint, SessionError> {
        if self.state.is_goal() {
            return Err(SessionError::GoalReached);
        }
        let d = self.kg.hint(&self.state).map_err(SessionError::Kg)?;
        let mut hint = Hint {
            verbosity,
            statement: d.derived.ascii(),
            unicode: d.derived.unicode(),
            rule: None,
            parents: None,
            text: None,
        };
        if verbosity == Verbosity::Teacher {
            hint.rule = Some(d.rule);
            hint.parents = Some(d.parents.iter().map(Formula::ascii).collect());
            hint.text = Some(full_hint_line(&d));
        }
        Ok(hint)
    }

    /// The state obtained by applying the accepted attempts to the root.
    pub fn replay(&self) -> ProofState {
        self.history
            .iter()
            .filter(|a| a.accepted)
            .fold(self.kg.root_state(), |s, a| s.extended(a.step.clone()))
    }

    pub fn view(&self) -> SessionView {
        let lines = self.lines();
        let line_of = |f: &Formula| lines.iter().position(|l| l == f).map_or(0, |i| i + 1);
        let premises = self.problem.problem.premises.len();
        let mut views: Vec<LineView> = lines
            .iter()
            .enumerate()
            .map(|(i, f)| LineView {
                number: i + 1,
                statement: f.ascii(),
                unicode: f.unicode(),
                rule: None,
                parents: Vec::new(),
            })
            .collect();
        for (i, d) in self.state.intermediates().iter().enumerate() {
            let v = &mut views[premises + i];
            v.rule = Some(d.rule);
            v.parents = d.parents.iter().map(line_of).collect();
        }
        SessionView {
            session_id: self.id.clone(),
            problem_id: self.problem.problem.id.clone(),
            level: self.problem.problem.level,
            premises,
            lines: views,
            conclusion: self.problem.problem.conclusion.ascii(),
            conclusion_unicode: self.problem.problem.conclusion.unicode(),
            goal_reached: self.state.is_goal(),
            history: self
                .history
                .iter()
                .map(|a| AttemptView {
                    step: a.step.derived.ascii(),
                    rule: a.step.rule,
                    parents: a.step.parents.iter().map(Formula::ascii).collect(),
                    verdict: a.classification.to_string(),
                    category: a.classification.category,
                    justified: a.classification.justified,
                    feedback: a.feedback.clone(),
                    accepted: a.accepted,
                })
                .collect(),
            created_at: unix(self.created_at),
            expires_at: unix(self.expires_at),
        }
    }
}
