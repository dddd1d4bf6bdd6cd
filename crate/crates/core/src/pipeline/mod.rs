//! Single-round tutoring protocol: a Student proposes a step, a Tutor or
//! Teacher (optionally checked by a Judge) gives feedback, and the Student
//! revises once when the feedback finds a problem.
//!
//! What each role may see is fixed here, not by the backends: the Tutor gets
//! only the optimal statement, the Teacher and Judge get rule and parents too.

pub mod backend;
pub mod prompts;
pub mod remote;
pub mod schema;
pub mod scripted;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::kg::{KgError, KnowledgeGraph, ProofState, StepClassification};
use crate::metrics::complexity::{step_complexity, ComplexityConstants};
use crate::metrics::{PipelineKind, PipelineResult};
use crate::rules::{Derivation, RuleId};

use backend::{AgentBackend, BackendError, Backends, ChatMessage, ChatRequest};
use prompts::Prompt;

/// Schema retries allowed per record, shared by all of its agent calls.
pub const MAX_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Student,
    Tutor,
    Teacher,
    Judge,
    /// The student's second turn, answering feedback.
    Reviser,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Student, Role::Tutor, Role::Teacher, Role::Judge, Role::Reviser];

    pub fn label(self) -> &'static str {
        match self {
            Role::Student => "Student",
            Role::Tutor => "Tutor",
            Role::Teacher => "Teacher",
            Role::Judge => "Judge",
            Role::Reviser => "Reviser",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorrectnessLabel {
    Correct,
    Suboptimal,
    Incorrect,
}

impl fmt::Display for CorrectnessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectnessLabel::Correct => "Correct",
            CorrectnessLabel::Suboptimal => "Suboptimal",
            CorrectnessLabel::Incorrect => "Incorrect",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JudgeAction {
    Enhanced,
    Overridden,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub step: String,
    pub rationale: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentResponse {
    pub candidates: Vec<Candidate>,
    pub reasoning: String,
    pub next_step: Formula,
    pub rule: RuleId,
    pub parents: Vec<Formula>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub role: Role,
    pub student_errors: String,
    pub label: CorrectnessLabel,
    pub feedback: String,
    /// The rule the Tutor believes produces the optimal step. Teachers are told it.
    pub tutor_rule: Option<RuleId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub student_errors: String,
    pub label: CorrectnessLabel,
    pub teacher_feedback_correctness: String,
    pub action: JudgeAction,
    pub final_feedback: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevisionResponse {
    NoImprovementNeeded,
    Revised {
        reasoning: String,
        step: Formula,
        rule: RuleId,
        parents: Vec<Formula>,
    },
}

/// Solution information handed to a feedback role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintPacket {
    pub optimal_step: Formula,
    pub rule: Option<RuleId>,
    pub parents: Option<Vec<Formula>>,
}

impl HintPacket {
    /// The packet `role` is entitled to: statement only for the Tutor.
    pub fn for_role(role: Role, optimal: &Derivation) -> HintPacket {
        let full = role != Role::Tutor;
        HintPacket {
            optimal_step: optimal.derived.clone(),
            rule: full.then_some(optimal.rule),
            parents: full.then(|| optimal.parents.clone()),
        }
    }

    pub fn check_for(&self, role: Role) -> Result<(), PipelineError> {
        let withheld = self.rule.is_none() && self.parents.is_none();
        let full = self.rule.is_some() && self.parents.is_some();
        let ok = match role {
            Role::Tutor => withheld,
            Role::Teacher | Role::Judge => full,
            Role::Student | Role::Reviser => false,
        };
        if ok {
            Ok(())
        } else {
            Err(PipelineError::HintMismatch(role))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("{role} response unusable after {attempts} attempts: {reason}")]
    MalformedResponse { role: Role, attempts: usize, reason: String },
    #[error("{role} backend: {source}")]
    Backend { role: Role, source: BackendError },
    #[error("no backend configured for {0}")]
    MissingBackend(Role),
    #[error("hint packet does not match what {0} may see")]
    HintMismatch(Role),
    #[error("tutor prompt leaks solution detail: {0}")]
    InformationLeak(String),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// One request/response pair as sent, kept verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub attempt: usize,
    pub messages: Vec<ChatMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// A successful agent call with its retry cost and transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTurn<T> {
    pub value: T,
    pub retries: usize,
    pub exchanges: Vec<Exchange>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnFailure {
    pub error: PipelineError,
    pub retries: usize,
    pub exchanges: Vec<Exchange>,
}

pub type Outcome<T> = Result<AgentTurn<T>, TurnFailure>;

/// Sends `prompt`, re-prompting on unusable output while the budget lasts.
/// `spent` is what the record has already used.
fn converse<T>(
    backend: &dyn AgentBackend,
    role: Role,
    prompt: &Prompt,
    spent: usize,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Outcome<T> {
    let mut messages = prompt.messages();
    let mut exchanges = Vec::new();
    let mut retries = 0;
    for attempt in 0.. {
        let request = ChatRequest {
            agent: role,
            messages: messages.clone(),
        };
        let text = match backend.complete(&request) {
            Ok(text) => text,
            Err(source) => {
                exchanges.push(Exchange {
                    role,
                    attempt,
                    messages,
                    response: None,
                    error: Some(source.to_string()),
                });
                return Err(TurnFailure {
                    error: PipelineError::Backend { role, source },
                    retries,
                    exchanges,
                });
            }
        };
        let parsed = parse(&text);
        exchanges.push(Exchange {
            role,
            attempt,
            messages: messages.clone(),
            response: Some(text.clone()),
            error: parsed.as_ref().err().cloned(),
        });
        match parsed {
            Ok(value) => {
                return Ok(AgentTurn {
                    value,
                    retries,
                    exchanges,
                })
            }
            Err(reason) if spent + retries >= MAX_RETRIES => {
                return Err(TurnFailure {
                    error: PipelineError::MalformedResponse {
                        role,
                        attempts: attempt + 1,
                        reason,
                    },
                    retries,
                    exchanges,
                })
            }
            Err(reason) => {
                retries += 1;
                messages.push(ChatMessage::assistant(text));
                messages.push(ChatMessage::user(prompts::correction(&reason)));
            }
        }
    }
    unreachable!()
}

fn failure(error: PipelineError) -> TurnFailure {
    TurnFailure {
        error,
        retries: 0,
        exchanges: Vec::new(),
    }
}

fn student_turn(backend: &dyn AgentBackend, state: &ProofState, spent: usize) -> Outcome<StudentResponse> {
    if state.is_goal() {
        return Err(failure(KgError::InvalidState("state already contains the conclusion".into()).into()));
    }
    converse(backend, Role::Student, &prompts::student_prompt(state), spent, schema::parse_student)
}

pub fn run_student(backend: &dyn AgentBackend, state: &ProofState) -> Outcome<StudentResponse> {
    student_turn(backend, state, 0)
}

fn feedback_turn(
    role: Role,
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    hint: &HintPacket,
    optimal: Option<&Derivation>,
    spent: usize,
) -> Outcome<FeedbackResponse> {
    hint.check_for(role).map_err(failure)?;
    let prompt = prompts::feedback_prompt(role, state, student, hint);
    if role == Role::Tutor {
        let fallback = Derivation::new(hint.optimal_step.clone(), RuleId::MP, Vec::new());
        prompts::audit_tutor_prompt(&prompt.user, optimal.unwrap_or(&fallback))
            .map_err(|e| failure(PipelineError::InformationLeak(e)))?;
    }
    converse(backend, role, &prompt, spent, |text| schema::parse_feedback(role, text))
}

/// Tutor or Teacher feedback on the student's step. The hint packet must be
/// exactly what the role is allowed to see.
pub fn run_feedback(
    role: Role,
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    hint: &HintPacket,
) -> Outcome<FeedbackResponse> {
    feedback_turn(role, backend, state, student, hint, None, 0)
}

fn judge_turn(
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    hint: &HintPacket,
    reviewed: &FeedbackResponse,
    spent: usize,
) -> Outcome<JudgeResponse> {
    hint.check_for(Role::Judge).map_err(failure)?;
    let prompt = prompts::judge_prompt(state, student, hint, reviewed);
    converse(backend, Role::Judge, &prompt, spent, schema::parse_judge)
}

pub fn run_judge(
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    hint: &HintPacket,
    reviewed: &FeedbackResponse,
) -> Outcome<JudgeResponse> {
    judge_turn(backend, state, student, hint, reviewed, 0)
}

fn revision_turn(
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    label: CorrectnessLabel,
    feedback: &str,
    spent: usize,
) -> Outcome<RevisionResponse> {
    let prompt = prompts::reviser_prompt(state, student, label, feedback);
    converse(backend, Role::Reviser, &prompt, spent, schema::parse_revision)
}

pub fn run_revision(
    backend: &dyn AgentBackend,
    state: &ProofState,
    student: &StudentResponse,
    label: CorrectnessLabel,
    feedback: &str,
) -> Outcome<RevisionResponse> {
    revision_turn(backend, state, student, label, feedback, 0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RecordStatus {
    Complete,
    Failed { stage: String, error: String },
}

/// Everything one pipeline run produced, in the order it happened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub state_id: String,
    pub problem_id: String,
    pub pipeline: PipelineKind,
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
    pub intermediates: Vec<Derivation>,
    pub optimal: Option<Derivation>,
    pub optimal_step_complexity: Option<f64>,
    pub hint: Option<HintPacket>,
    pub student: Option<StudentResponse>,
    pub feedback: Option<FeedbackResponse>,
    pub judge: Option<JudgeResponse>,
    pub revision: Option<RevisionResponse>,
    pub pre_classification: Option<StepClassification>,
    pub post_classification: Option<StepClassification>,
    pub retries: usize,
    pub needs_review: bool,
    pub backend_ids: BTreeMap<Role, String>,
    pub transcript: Vec<Exchange>,
    pub status: RecordStatus,
}

impl DialogueRecord {
    fn new(kind: PipelineKind, state_id: &str, state: &ProofState) -> DialogueRecord {
        let problem = state.problem();
        DialogueRecord {
            state_id: state_id.to_string(),
            problem_id: problem.id.clone(),
            pipeline: kind,
            premises: problem.premises.clone(),
            conclusion: problem.conclusion.clone(),
            intermediates: state.intermediates().to_vec(),
            optimal: None,
            optimal_step_complexity: None,
            hint: None,
            student: None,
            feedback: None,
            judge: None,
            revision: None,
            pre_classification: None,
            post_classification: None,
            retries: 0,
            needs_review: false,
            backend_ids: BTreeMap::new(),
            transcript: Vec::new(),
            status: RecordStatus::Complete,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == RecordStatus::Complete
    }

    /// The label that drives revision: the Judge's when there is one.
    pub fn effective_label(&self) -> Option<CorrectnessLabel> {
        match (&self.judge, &self.feedback) {
            (Some(j), _) => Some(j.label),
            (None, Some(f)) => Some(f.label),
            _ => None,
        }
    }

    /// The step the student ends with after the feedback round.
    pub fn predicted_step(&self) -> Option<&Formula> {
        match &self.revision {
            Some(RevisionResponse::Revised { step, .. }) => Some(step),
            _ => self.student.as_ref().map(|s| &s.next_step),
        }
    }

    /// Metrics view of a completed record; `None` for failed ones.
    pub fn to_result(&self) -> Option<PipelineResult<f64>> {
        if !self.is_complete() {
            return None;
        }
        let optimal = self.optimal.as_ref()?;
        Some(PipelineResult {
            state_id: self.state_id.clone(),
            pipeline: self.pipeline,
            pre_correct: self.pre_classification?.is_optimal(),
            post_correct: self.post_classification?.is_optimal(),
            predicted_step: self.predicted_step().cloned(),
            tutor_rule_predicted: self.feedback.as_ref().and_then(|f| f.tutor_rule),
            optimal_rule: optimal.rule,
            optimal_step_complexity: self.optimal_step_complexity?,
        })
    }

    fn absorb<T>(&mut self, role: Role, outcome: Outcome<T>) -> Option<T> {
        match outcome {
            Ok(turn) => {
                self.retries += turn.retries;
                self.transcript.extend(turn.exchanges);
                Some(turn.value)
            }
            Err(f) => {
                self.retries += f.retries;
                self.transcript.extend(f.exchanges);
                self.fail(role.label(), f.error);
                None
            }
        }
    }

    fn fail(&mut self, stage: &str, error: PipelineError) {
        if matches!(error, PipelineError::MalformedResponse { .. }) {
            self.needs_review = true;
        }
        self.status = RecordStatus::Failed {
            stage: stage.to_string(),
            error: error.to_string(),
        };
    }
}

/// Agent outputs shared between the pipeline kinds run on one state, so the
/// student turn happens once and each feedback turn at most once.
#[derive(Clone, Debug, Default)]
pub struct Reuse {
    pub student: Option<Outcome<StudentResponse>>,
    pub tutor: Option<Outcome<FeedbackResponse>>,
    pub teacher: Option<Outcome<FeedbackResponse>>,
}

fn backend_for(backends: &Backends, role: Role) -> Result<&Arc<dyn AgentBackend>, TurnFailure> {
    backends.get(role).ok_or_else(|| failure(PipelineError::MissingBackend(role)))
}

fn retries_of<T>(outcome: &Outcome<T>) -> usize {
    match outcome {
        Ok(t) => t.retries,
        Err(f) => f.retries,
    }
}

/// Runs one pipeline kind on `state`, drawing on and filling `reuse`.
pub fn run_pipeline(
    kind: PipelineKind,
    state_id: &str,
    state: &ProofState,
    kg: &KnowledgeGraph,
    backends: &Backends,
    reuse: &mut Reuse,
) -> DialogueRecord {
    let mut record = DialogueRecord::new(kind, state_id, state);
    let optimal = match kg.hint(state) {
        Ok(d) => d,
        Err(e) => {
            record.fail("hint", e.into());
            return record;
        }
    };
    record.optimal_step_complexity = Some(step_complexity(&optimal.derived, &ComplexityConstants::default()));

    let student_outcome = reuse
        .student
        .get_or_insert_with(|| {
            backend_for(backends, Role::Student).and_then(|b| student_turn(b.as_ref(), state, 0))
        })
        .clone();
    let spent_student = retries_of(&student_outcome);
    if let Ok(b) = backend_for(backends, Role::Student) {
        record.backend_ids.insert(Role::Student, b.identity().to_string());
    }
    let Some(student) = record.absorb(Role::Student, student_outcome) else {
        record.optimal = Some(optimal);
        return record;
    };

    let feedback_role = match kind {
        PipelineKind::Tutor | PipelineKind::Judge => Role::Tutor,
        PipelineKind::Teacher | PipelineKind::TeacherJudge => Role::Teacher,
    };
    let hint = HintPacket::for_role(feedback_role, &optimal);
    let slot = if feedback_role == Role::Tutor {
        &mut reuse.tutor
    } else {
        &mut reuse.teacher
    };
    let feedback_outcome = slot
        .get_or_insert_with(|| {
            backend_for(backends, feedback_role).and_then(|b| {
                feedback_turn(feedback_role, b.as_ref(), state, &student, &hint, Some(&optimal), spent_student)
            })
        })
        .clone();
    if let Ok(b) = backend_for(backends, feedback_role) {
        record.backend_ids.insert(feedback_role, b.identity().to_string());
    }
    record.hint = Some(hint);
    record.optimal = Some(optimal.clone());
    record.student = Some(student.clone());
    record.pre_classification =
        match kg.classify_step(state, &student.next_step, student.rule, &student.parents) {
            Ok(c) => Some(c),
            Err(e) => {
                record.fail("classify", e.into());
                return record;
            }
        };
    let Some(feedback) = record.absorb(feedback_role, feedback_outcome) else {
        return record;
    };
    record.feedback = Some(feedback.clone());

    let (label, guidance) = if matches!(kind, PipelineKind::Judge | PipelineKind::TeacherJudge) {
        let full = HintPacket::for_role(Role::Judge, &optimal);
        let outcome = backend_for(backends, Role::Judge)
            .and_then(|b| judge_turn(b.as_ref(), state, &student, &full, &feedback, record.retries));
        if let Ok(b) = backend_for(backends, Role::Judge) {
            record.backend_ids.insert(Role::Judge, b.identity().to_string());
        }
        let Some(judge) = record.absorb(Role::Judge, outcome) else {
            return record;
        };
        let out = (judge.label, judge.final_feedback.clone());
        record.judge = Some(judge);
        out
    } else {
        (feedback.label, feedback.feedback.clone())
    };

    if label == CorrectnessLabel::Correct {
        record.post_classification = record.pre_classification;
    } else {
        let outcome = backend_for(backends, Role::Reviser)
            .and_then(|b| revision_turn(b.as_ref(), state, &student, label, &guidance, record.retries));
        if let Ok(b) = backend_for(backends, Role::Reviser) {
            record.backend_ids.insert(Role::Reviser, b.identity().to_string());
        }
        let Some(revision) = record.absorb(Role::Reviser, outcome) else {
            return record;
        };
        record.post_classification = match &revision {
            RevisionResponse::NoImprovementNeeded => record.pre_classification,
            RevisionResponse::Revised { step, rule, parents, .. } => {
                match kg.classify_step(state, step, *rule, parents) {
                    Ok(c) => Some(c),
                    Err(e) => {
                        record.fail("classify", e.into());
                        return record;
                    }
                }
            }
        };
        record.revision = Some(revision);
    }
    if record.retries >= MAX_RETRIES {
        record.needs_review = true;
    }
    record
}

/// A state ready to be tutored, with the graph of its problem.
#[derive(Clone)]
pub struct PipelineJob {
    pub state_id: String,
    pub state: ProofState,
    pub kg: Arc<KnowledgeGraph>,
}

/// Runs every kind on every job. States run concurrently, at most
/// `concurrency` at a time; the kinds for one state run in order and share
/// agent turns. Output is job-major, kind-minor, whatever the scheduling.
pub fn run_batch(
    jobs: &[PipelineJob],
    kinds: &[PipelineKind],
    backends: &Backends,
    concurrency: usize,
) -> Vec<DialogueRecord> {
    let run_one = |job: &PipelineJob| -> Vec<DialogueRecord> {
        let mut reuse = Reuse::default();
        kinds
            .iter()
            .map(|&k| run_pipeline(k, &job.state_id, &job.state, &job.kg, backends, &mut reuse))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| jobs.par_iter().map(run_one).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}
