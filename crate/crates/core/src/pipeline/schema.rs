//! Strict parsing of agent responses.
//!
//! Each role answers with one JSON object, optionally inside a code fence.
//! Unknown keys are rejected and every key is required; any failure becomes
//! a retry reason for the caller.

use serde::Deserialize;
use serde_json::Value;

use crate::formula::{parse, Formula};
use crate::rules::RuleId;

use super::{Candidate, CorrectnessLabel, FeedbackResponse, JudgeAction, JudgeResponse, RevisionResponse, Role, StudentResponse};

pub const NO_IMPROVEMENT: &str = "No Improvement Needed";

/// The JSON object in `text`: a fenced block if present, else the outermost braces.
pub fn extract_json(text: &str) -> Result<&str, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty output".into());
    }
    if let Some(open) = text.find("```") {
        let after = &text[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after[body_start..];
        let close = body.find("```").ok_or("unterminated code fence")?;
        return Ok(body[..close].trim());
    }
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => Ok(&text[a..=b]),
        _ => Err("no JSON object in output".into()),
    }
}

fn decode<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, String> {
    serde_json::from_str(extract_json(text)?).map_err(|e| format!("schema violation: {e}"))
}

fn formula(field: &str, text: &str) -> Result<Formula, String> {
    parse(text).map_err(|e| format!("{field}: cannot parse {text:?}: {e}"))
}

fn rule(field: &str, text: &str) -> Result<RuleId, String> {
    RuleId::parse_lenient(text).ok_or_else(|| format!("{field}: unknown rule {text:?}"))
}

fn label(text: &str) -> Result<CorrectnessLabel, String> {
    match text.trim().to_ascii_lowercase().as_str() {
        "correct" => Ok(CorrectnessLabel::Correct),
        "suboptimal" => Ok(CorrectnessLabel::Suboptimal),
        "incorrect" => Ok(CorrectnessLabel::Incorrect),
        _ => Err(format!("NEXT_STEP_CORRECTNESS: {text:?} is not Correct, Suboptimal or Incorrect")),
    }
}

fn non_empty(field: &str, text: String) -> Result<String, String> {
    if text.trim().is_empty() {
        Err(format!("{field} is empty"))
    } else {
        Ok(text)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateWire {
    step: String,
    rationale: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct StudentWire {
    candidates: Vec<CandidateWire>,
    reasoning: String,
    next_step: String,
    rule: String,
    parent_statements: Vec<String>,
}

pub fn parse_student(text: &str) -> Result<StudentResponse, String> {
    let w: StudentWire = decode(text)?;
    if !(2..=3).contains(&w.candidates.len()) {
        return Err(format!("CANDIDATES must hold 2 or 3 entries, got {}", w.candidates.len()));
    }
    let candidates = w
        .candidates
        .into_iter()
        .map(|c| {
            Ok(Candidate {
                step: non_empty("candidate step", c.step)?,
                rationale: c.rationale,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(StudentResponse {
        candidates,
        reasoning: non_empty("REASONING", w.reasoning)?,
        next_step: formula("NEXT_STEP", &w.next_step)?,
        rule: rule("RULE", &w.rule)?,
        parents: w
            .parent_statements
            .iter()
            .map(|p| formula("PARENT_STATEMENTS", p))
            .collect::<Result<_, _>>()?,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct TutorWire {
    student_errors: String,
    next_step_correctness: String,
    tutor_rule: String,
    tutor_feedback: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct TeacherWire {
    student_errors: String,
    next_step_correctness: String,
    teacher_feedback: String,
}

pub fn parse_feedback(role: Role, text: &str) -> Result<FeedbackResponse, String> {
    match role {
        Role::Tutor => {
            let w: TutorWire = decode(text)?;
            Ok(FeedbackResponse {
                role,
                student_errors: non_empty("STUDENT_ERRORS", w.student_errors)?,
                label: label(&w.next_step_correctness)?,
                feedback: non_empty("TUTOR_FEEDBACK", w.tutor_feedback)?,
                tutor_rule: Some(rule("TUTOR_RULE", &w.tutor_rule)?),
            })
        }
        Role::Teacher => {
            let w: TeacherWire = decode(text)?;
            Ok(FeedbackResponse {
                role,
                student_errors: non_empty("STUDENT_ERRORS", w.student_errors)?,
                label: label(&w.next_step_correctness)?,
                feedback: non_empty("TEACHER_FEEDBACK", w.teacher_feedback)?,
                tutor_rule: None,
            })
        }
        other => Err(format!("{other:?} does not write feedback")),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct JudgeWire {
    student_errors: String,
    next_step_correctness: String,
    teacher_feedback_correctness: String,
    judge_action: String,
    final_feedback: String,
}

pub fn parse_judge(text: &str) -> Result<JudgeResponse, String> {
    let w: JudgeWire = decode(text)?;
    let action = match w.judge_action.trim().to_ascii_lowercase().as_str() {
        "enhanced" => JudgeAction::Enhanced,
        "overridden" => JudgeAction::Overridden,
        other => return Err(format!("JUDGE_ACTION: {other:?} is not Enhanced or Overridden")),
    };
    Ok(JudgeResponse {
        student_errors: non_empty("STUDENT_ERRORS", w.student_errors)?,
        label: label(&w.next_step_correctness)?,
        teacher_feedback_correctness: non_empty("TEACHER_FEEDBACK_CORRECTNESS", w.teacher_feedback_correctness)?,
        action,
        final_feedback: non_empty("FINAL_FEEDBACK", w.final_feedback)?,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct RevisionWire {
    revised_reasoning: String,
    improved_step: String,
    better_rule: Option<String>,
    parent_statements: Value,
}

fn is_marker(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
    t == "no improvement needed" || t == "no improvements needed"
}

pub fn parse_revision(text: &str) -> Result<RevisionResponse, String> {
    let w: RevisionWire = decode(text)?;
    if is_marker(&w.improved_step) {
        return Ok(RevisionResponse::NoImprovementNeeded);
    }
    let rule_text = w.better_rule.ok_or("BETTER_RULE is required with an improved step")?;
    let parents = match w.parent_statements {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => formula("PARENT_STATEMENTS", s),
                other => Err(format!("PARENT_STATEMENTS: expected strings, got {other}")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        other => return Err(format!("PARENT_STATEMENTS must be a list with an improved step, got {other}")),
    };
    Ok(RevisionResponse::Revised {
        reasoning: non_empty("REVISED_REASONING", w.revised_reasoning)?,
        step: formula("IMPROVED_STEP", &w.improved_step)?,
        rule: rule("BETTER_RULE", &rule_text)?,
        parents,
    })
}
