//! Prompt assembly from the bundled templates, and the Tutor hint audit.
//!
//! Templates live in `templates/` as plain text with `{{NAME}}` slots:
//! `GIVENS`, `INTERMEDIATES`, `CONCLUSION`, `STUDENT`, `HINT`, `FEEDBACK`.

use crate::formula::Formula;
use crate::kg::ProofState;
use crate::rules::{Derivation, RuleId};

use super::backend::ChatMessage;
use super::{FeedbackResponse, HintPacket, Role, StudentResponse};

pub const TEMPLATE_VERSION: &str = "1";

/// Section header that opens the Tutor's hint block.
pub const TUTOR_HINT_HEADER: &str = "### OPTIMAL NEXT STEP";
/// Section header that opens the Teacher's and Judge's hint block.
pub const FULL_HINT_HEADER: &str = "### KNOWLEDGE_BASE_STEPS";

fn template(role: Role) -> (&'static str, &'static str) {
    match role {
        Role::Student => (
            include_str!("../../templates/student.system.txt"),
            include_str!("../../templates/student.user.txt"),
        ),
        Role::Reviser => (
            include_str!("../../templates/reviser.system.txt"),
            include_str!("../../templates/reviser.user.txt"),
        ),
        Role::Tutor => (
            include_str!("../../templates/tutor.system.txt"),
            include_str!("../../templates/tutor.user.txt"),
        ),
        Role::Teacher => (
            include_str!("../../templates/teacher.system.txt"),
            include_str!("../../templates/teacher.user.txt"),
        ),
        Role::Judge => (
            include_str!("../../templates/judge.system.txt"),
            include_str!("../../templates/judge.user.txt"),
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::user(&self.user)]
    }
}

fn fill(role: Role, slots: &[(&str, String)]) -> Prompt {
    let (system, user) = template(role);
    let mut user = user.to_string();
    for (name, value) in slots {
        user = user.replace(&format!("{{{{{name}}}}}"), value.trim_end());
    }
    debug_assert!(!user.contains("{{"), "unfilled slot in {role:?} template");
    Prompt {
        system: system.trim_end().to_string(),
        user: user.trim_end().to_string(),
    }
}

fn givens(state: &ProofState) -> String {
    state
        .problem()
        .premises
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {}\n", i + 1, p))
        .collect()
}

/// Intermediates numbered after the givens, each citing its parents by line.
fn intermediates(state: &ProofState) -> String {
    if state.intermediates().is_empty() {
        return "(none)".into();
    }
    let statements = state.statements();
    let line = |f: &Formula| {
        statements
            .iter()
            .position(|s| s == f)
            .map(|i| (i + 1).to_string())
            .unwrap_or_else(|| "?".into())
    };
    let offset = state.problem().premises.len();
    state
        .intermediates()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let cites: Vec<String> = d.parents.iter().map(line).collect();
            format!("{}. {} [{}: {}]\n", offset + i + 1, d.derived, d.rule, cites.join(", "))
        })
        .collect()
}

pub fn render_student(s: &StudentResponse) -> String {
    let mut out = String::from("CANDIDATES:\n");
    for c in &s.candidates {
        out.push_str(&format!("- {}: {}\n", c.step, c.rationale));
    }
    let parents: Vec<String> = s.parents.iter().map(Formula::ascii).collect();
    out.push_str(&format!("REASONING: {}\n", s.reasoning));
    out.push_str(&format!("NEXT_STEP: {}\n", s.next_step));
    out.push_str(&format!("RULE: {}\n", s.rule));
    out.push_str(&format!("PARENT_STATEMENTS: {}\n", parents.join("; ")));
    out
}

fn render_feedback(f: &FeedbackResponse) -> String {
    let mut out = format!("FROM: {}\nNEXT_STEP_CORRECTNESS: {}\n", f.role.label(), f.label);
    if let Some(rule) = f.tutor_rule {
        out.push_str(&format!("TUTOR_RULE: {rule}\n"));
    }
    out.push_str(&format!("FEEDBACK: {}\n", f.feedback));
    out
}

fn list(parents: &[Formula]) -> String {
    let rendered: Vec<String> = parents.iter().map(Formula::ascii).collect();
    match rendered.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// The Teacher-style scaffold: "Derive X from A and B using the Full (SHORT) rule."
pub fn full_hint_line(d: &Derivation) -> String {
    format!(
        "Derive {} from {} using the {} ({}) rule.",
        d.derived,
        list(&d.parents),
        d.rule.full_name(),
        d.rule.short_name()
    )
}

fn hint_block(hint: &HintPacket) -> String {
    match (&hint.rule, &hint.parents) {
        (Some(rule), Some(parents)) => {
            full_hint_line(&Derivation::new(hint.optimal_step.clone(), *rule, parents.clone()))
        }
        _ => hint.optimal_step.ascii(),
    }
}

fn base(state: &ProofState) -> Vec<(&'static str, String)> {
    vec![
        ("GIVENS", givens(state)),
        ("INTERMEDIATES", intermediates(state)),
        ("CONCLUSION", state.problem().conclusion.ascii()),
    ]
}

pub fn student_prompt(state: &ProofState) -> Prompt {
    fill(Role::Student, &base(state))
}

/// Tutor or Teacher prompt; the hint block follows the packet's access level.
pub fn feedback_prompt(role: Role, state: &ProofState, student: &StudentResponse, hint: &HintPacket) -> Prompt {
    let mut slots = base(state);
    slots.push(("STUDENT", render_student(student)));
    slots.push(("HINT", hint_block(hint)));
    fill(role, &slots)
}

pub fn judge_prompt(state: &ProofState, student: &StudentResponse, hint: &HintPacket, reviewed: &FeedbackResponse) -> Prompt {
    let mut slots = base(state);
    slots.push(("STUDENT", render_student(student)));
    slots.push(("HINT", hint_block(hint)));
    slots.push(("FEEDBACK", render_feedback(reviewed)));
    fill(Role::Judge, &slots)
}

pub fn reviser_prompt(state: &ProofState, student: &StudentResponse, label: super::CorrectnessLabel, feedback: &str) -> Prompt {
    let mut slots = base(state);
    slots.push(("STUDENT", render_student(student)));
    slots.push(("FEEDBACK", format!("NEXT_STEP_CORRECTNESS: {label}\nFEEDBACK: {feedback}\n")));
    fill(Role::Reviser, &slots)
}

/// Retry instruction appended after an unusable response.
pub fn correction(reason: &str) -> String {
    format!("Your previous reply could not be used ({reason}). Reply again with only the JSON object in the required format.")
}

/// Text of the section opened by `header`, up to the next `###` line.
pub fn section<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let start = text.find(header)? + header.len();
    let rest = &text[start..];
    let end = rest.find("\n###").unwrap_or(rest.len());
    Some(rest[..end].trim())
}

fn contains_token(haystack: &str, token: &str) -> bool {
    haystack
        .split(|c: char| !c.is_ascii_alphanumeric())
        .any(|w| w == token)
}

/// Checks that the hint block of a serialized Tutor prompt reveals neither
/// the optimal rule nor its parents. Occurrences inside the optimal statement
/// itself (e.g. the parent `~K` of `(~K + L)`) are not leaks.
pub fn audit_tutor_prompt(prompt: &str, optimal: &Derivation) -> Result<(), String> {
    if prompt.contains(FULL_HINT_HEADER) {
        return Err("tutor prompt carries a full knowledge-base block".into());
    }
    let block = section(prompt, TUTOR_HINT_HEADER).ok_or("tutor prompt has no hint block")?;
    let residue = block.replace(&optimal.derived.ascii(), " ").replace(&optimal.derived.unicode(), " ");
    let rule = optimal.rule;
    if contains_token(&residue, rule.short_name())
        || residue.to_lowercase().contains(&rule.full_name().to_lowercase())
    {
        return Err(format!("hint block names the rule {rule}"));
    }
    for p in &optimal.parents {
        if residue.contains(&p.ascii()) || residue.contains(&p.unicode()) {
            return Err(format!("hint block contains the parent {p}"));
        }
    }
    for r in RuleId::ALL {
        if contains_token(&residue, r.short_name()) {
            return Err(format!("hint block names a rule ({r})"));
        }
    }
    Ok(())
}
