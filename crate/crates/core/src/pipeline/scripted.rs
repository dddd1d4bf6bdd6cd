//! A deterministic rule-based stand-in for every agent role.
//!
//! It reads the same prompt text a remote model would, works out the state
//! from the rendered sections, and answers in the required JSON. Its mistakes
//! (wrong rule, skipping ahead, vague or echoing feedback, the odd malformed
//! reply) are chosen by a stable hash of the state, so runs repeat exactly.

use std::collections::BTreeSet;

use serde_json::json;

use crate::formula::{parse, Formula};
use crate::metrics::complexity::{step_complexity, ComplexityConstants};
use crate::rules::{applicable_derivations, justify, Derivation, EnumerationConfig, RuleId};

use super::backend::{AgentBackend, BackendError, BackendKind, ChatRequest};
use super::prompts::{section, FULL_HINT_HEADER, TUTOR_HINT_HEADER};
use super::Role;

#[derive(Clone, Debug)]
pub struct SymbolicAgent {
    identity: String,
    seed: u64,
}

impl SymbolicAgent {
    pub fn new(identity: impl Into<String>, seed: u64) -> SymbolicAgent {
        SymbolicAgent {
            identity: identity.into(),
            seed,
        }
    }
}

impl Default for SymbolicAgent {
    fn default() -> Self {
        SymbolicAgent::new("symbolic-v1", 0)
    }
}

fn fnv(seed: u64, parts: &[&str]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn after_number(line: &str) -> &str {
    match line.split_once(". ") {
        Some((n, rest)) if n.chars().all(|c| c.is_ascii_digit()) => rest,
        _ => line,
    }
}

fn backticked(text: &str) -> Vec<Formula> {
    text.split('`').skip(1).step_by(2).filter_map(|s| parse(s).ok()).collect()
}

struct StudentView {
    step: Formula,
    rule: RuleId,
    parents: Vec<Formula>,
}

fn student_view(block: &str) -> Option<StudentView> {
    let field = |name: &str| {
        block
            .lines()
            .find_map(|l| l.strip_prefix(name))
            .map(str::trim)
    };
    let parents = field("PARENT_STATEMENTS:").unwrap_or("");
    Some(StudentView {
        step: parse(field("NEXT_STEP:")?).ok()?,
        rule: RuleId::parse_lenient(field("RULE:")?)?,
        parents: parents
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .filter_map(|p| parse(p).ok())
            .collect(),
    })
}

/// "Derive X from A and B using the Full (SHORT) rule."
fn full_hint(block: &str) -> Option<Derivation> {
    let rest = block.trim().strip_prefix("Derive ")?;
    let (derived, rest) = rest.split_once(" from ")?;
    let (parents, rule) = rest.split_once(" using the ")?;
    let short = rule.rsplit_once('(')?.1.split_once(')')?.0;
    let parents = parents
        .split(", ")
        .flat_map(|p| p.split(" and "))
        .map(parse)
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    Some(Derivation::new(parse(derived).ok()?, RuleId::parse_lenient(short)?, parents))
}

/// What the agent can reconstruct from a prompt.
struct Instance {
    premises: Vec<Formula>,
    statements: Vec<Formula>,
    conclusion: Formula,
    config: EnumerationConfig,
    /// Hash of the state sections alone, shared by all roles.
    h: u64,
}

impl Instance {
    fn read(text: &str, seed: u64) -> Option<Instance> {
        let givens = section(text, "### GIVENS")?;
        let inter = section(text, "### INTERMEDIATE STEPS")?;
        let concl = section(text, "### CONCLUSION")?;
        let premises: Vec<Formula> = givens
            .lines()
            .map(|l| parse(after_number(l.trim())))
            .collect::<Result<_, _>>()
            .ok()?;
        let mut statements = premises.clone();
        for line in inter.lines().map(str::trim).filter(|l| *l != "(none)" && !l.is_empty()) {
            let body = after_number(line);
            let formula = body.split_once(" [").map_or(body, |(f, _)| f);
            statements.push(parse(formula).ok()?);
        }
        let conclusion = parse(concl).ok()?;
        let config = EnumerationConfig::for_problem(&premises, &conclusion);
        Some(Instance {
            h: fnv(seed, &[givens, inter, concl]),
            premises,
            statements,
            conclusion,
            config,
        })
    }

    fn frontier(&self) -> Vec<Derivation> {
        let mut ds = applicable_derivations(&self.statements, &self.config);
        let vocab: BTreeSet<Formula> = self
            .premises
            .iter()
            .chain(std::iter::once(&self.conclusion))
            .flat_map(|f| f.subformulas())
            .collect();
        let goal_parts: BTreeSet<Formula> = self.conclusion.subformulas().into_iter().collect();
        let constants = ComplexityConstants::<f64>::default();
        let score = |d: &Derivation| {
            let mut s = -step_complexity(&d.derived, &constants);
            if d.derived == self.conclusion {
                s += 100.0;
            }
            if goal_parts.contains(&d.derived) {
                s += 6.0;
            }
            if vocab.contains(&d.derived) {
                s += 3.0;
            } else if matches!(d.rule, RuleId::DN | RuleId::Com | RuleId::Assoc | RuleId::Add | RuleId::Conj) {
                s -= 4.0;
            }
            s
        };
        // Stable sort keeps the enumeration order among equal scores.
        ds.sort_by(|a, b| score(b).total_cmp(&score(a)));
        ds
    }

    fn justified(&self, step: &Formula, rule: RuleId, parents: &[Formula]) -> bool {
        let available: BTreeSet<Formula> = self.statements.iter().cloned().collect();
        justify(step, rule, parents, &available, &self.config)
    }

    fn rule_for(&self, frontier: &[Derivation], step: &Formula) -> Option<Derivation> {
        frontier.iter().find(|d| &d.derived == step).cloned()
    }
}

fn ascii_list(fs: &[Formula]) -> Vec<String> {
    fs.iter().map(Formula::ascii).collect()
}

fn other_rule(rule: RuleId) -> RuleId {
    match rule {
        RuleId::MP => RuleId::MT,
        RuleId::MT => RuleId::MP,
        RuleId::Simp => RuleId::Conj,
        RuleId::DS => RuleId::MP,
        RuleId::Add => RuleId::Simp,
        _ => RuleId::MP,
    }
}

fn rationale(d: &Derivation) -> String {
    if d.parents.is_empty() {
        format!("by {}", d.rule)
    } else {
        format!("{} on {}", d.rule, ascii_list(&d.parents).join(" and "))
    }
}

impl SymbolicAgent {
    fn student(&self, inst: &Instance, first_attempt: bool) -> String {
        let frontier = inst.frontier();
        let h = inst.h;
        if first_attempt && h % 11 == 3 {
            return String::new();
        }
        let fallback = Derivation::new(inst.conclusion.clone(), RuleId::MP, Vec::new());
        let top = frontier.first().cloned().unwrap_or_else(|| fallback.clone());
        let n = if h % 2 == 0 { 3 } else { 2 };
        let mut shown: Vec<Derivation> = frontier.iter().take(n).cloned().collect();
        while shown.len() < 2 {
            shown.push(fallback.clone());
        }
        if first_attempt && h % 13 == 5 {
            shown.push(top.clone());
            shown.push(fallback.clone());
        }
        let (choice, reasoning) = match h % 6 {
            0 if frontier.len() > 1 => (frontier[1].clone(), "This keeps more options open for later steps."),
            1 => (
                Derivation::new(top.derived.clone(), other_rule(top.rule), top.parents.clone()),
                "The rule applies to the cited statements directly.",
            ),
            2 if top.derived != inst.conclusion => (
                Derivation::new(inst.conclusion.clone(), top.rule, top.parents.clone()),
                "The conclusion seems to follow from these statements at once.",
            ),
            _ => (top.clone(), "This step moves most directly toward the conclusion."),
        };
        json!({
            "CANDIDATES": shown.iter().map(|d| json!({"step": d.derived.ascii(), "rationale": rationale(d)})).collect::<Vec<_>>(),
            "REASONING": reasoning,
            "NEXT_STEP": choice.derived.ascii(),
            "RULE": choice.rule.short_name(),
            "PARENT_STATEMENTS": ascii_list(&choice.parents),
        })
        .to_string()
    }

    fn tutor(&self, inst: &Instance, text: &str) -> Option<String> {
        let student = student_view(section(text, "### STUDENT RESPONSE")?)?;
        let target = parse(section(text, TUTOR_HINT_HEADER)?).ok()?;
        let frontier = inst.frontier();
        let h = fnv(self.seed, &[&inst.h.to_string(), "tutor"]);
        let deriver = inst.rule_for(&frontier, &target);
        let justified = inst.justified(&student.step, student.rule, &student.parents);
        let valid = inst.rule_for(&frontier, &student.step).is_some();
        let echo = h % 2 == 0;
        let (label, errors) = if student.step == target {
            if justified || echo {
                ("Correct", "Correct".to_string())
            } else {
                ("Incorrect", format!("The step is right but {} does not produce it from the cited statements.", student.rule))
            }
        } else if valid {
            ("Suboptimal", "The step is valid but does not shorten the proof.".to_string())
        } else {
            ("Incorrect", "The step does not follow from the statements available.".to_string())
        };
        let tutor_rule = match (&deriver, student.step == target && echo) {
            (_, true) | (None, _) => student.rule,
            (Some(d), false) => d.rule,
        };
        let feedback = match label {
            "Correct" => "Well done, that step is sound. Keep going toward the conclusion.".to_string(),
            _ if !justified && student.step == target => {
                "You found a good statement. Now check which rule actually produces it from what you have.".to_string()
            }
            _ => match deriver.as_ref().and_then(|d| d.parents.first()) {
                Some(p) if h % 3 == 0 => format!("Good effort. Look again at `{p}` and ask what it lets you conclude."),
                _ => "Good effort. Think about which of your statements combine to move closer to the conclusion.".to_string(),
            },
        };
        Some(
            json!({
                "STUDENT_ERRORS": errors,
                "NEXT_STEP_CORRECTNESS": label,
                "TUTOR_RULE": tutor_rule.short_name(),
                "TUTOR_FEEDBACK": feedback,
            })
            .to_string(),
        )
    }

    /// Label and diagnosis against the full knowledge-base step.
    fn assess(inst: &Instance, student: &StudentView, optimal: &Derivation) -> (&'static str, String, bool) {
        let justified = inst.justified(&student.step, student.rule, &student.parents);
        let frontier = inst.frontier();
        if student.step == optimal.derived && justified {
            ("Correct", "Correct".into(), true)
        } else if student.step == optimal.derived {
            ("Incorrect", format!("{} is not the rule that yields this step.", student.rule), false)
        } else if justified && inst.rule_for(&frontier, &student.step).is_some() {
            ("Suboptimal", "The step is valid but not the most direct one.".into(), true)
        } else {
            ("Incorrect", "The step is not justified by the cited statements.".into(), justified)
        }
    }

    fn teacher(&self, inst: &Instance, text: &str) -> Option<String> {
        let student = student_view(section(text, "### STUDENT RESPONSE")?)?;
        let optimal = full_hint(section(text, FULL_HINT_HEADER)?)?;
        let h = fnv(self.seed, &[&inst.h.to_string(), "teacher"]);
        let (label, errors, _) = Self::assess(inst, &student, &optimal);
        let feedback = if label == "Correct" {
            "Nice work, that is exactly the right move. Keep going.".to_string()
        } else if student.step == optimal.derived {
            "You picked a useful statement. Check which rule actually produces it from your lines.".to_string()
        } else if h % 5 == 0 {
            format!("Good try. Try deriving `{}` next.", optimal.derived)
        } else {
            let p = &optimal.parents[(h as usize / 5) % optimal.parents.len().max(1)];
            format!("Good try. Look again at `{p}`; what does it give you together with another line?")
        };
        Some(
            json!({
                "STUDENT_ERRORS": errors,
                "NEXT_STEP_CORRECTNESS": label,
                "TEACHER_FEEDBACK": feedback,
            })
            .to_string(),
        )
    }

    fn judge(&self, inst: &Instance, text: &str) -> Option<String> {
        let student = student_view(section(text, "### STUDENT RESPONSE")?)?;
        let optimal = full_hint(section(text, FULL_HINT_HEADER)?)?;
        let reviewed = section(text, "### FEEDBACK UNDER REVIEW")?;
        let reviewed_label = reviewed
            .lines()
            .find_map(|l| l.strip_prefix("NEXT_STEP_CORRECTNESS:"))
            .map(str::trim)
            .unwrap_or("");
        let reviewed_text = reviewed
            .lines()
            .find_map(|l| l.strip_prefix("FEEDBACK:"))
            .map(str::trim)
            .unwrap_or("");
        let (label, errors, _) = Self::assess(inst, &student, &optimal);
        let pointers = backticked(reviewed_text);
        let reveals = pointers.contains(&optimal.derived);
        let specific = pointers.iter().any(|p| optimal.parents.contains(p));
        let agrees = reviewed_label == label;
        let (action, verdict) = match (agrees, label == "Correct" || (specific && !reveals)) {
            (true, true) => ("Enhanced", "Correct"),
            (true, false) if reveals => ("Overridden", "Incorrect: gives the answer away"),
            (true, false) => ("Overridden", "Vague"),
            _ => ("Overridden", "Incorrect"),
        };
        let guidance = if label == "Correct" {
            "Your step is correct and well justified. What will you do with it next?".to_string()
        } else if student.step == optimal.derived {
            "You chose a useful statement. Which rule really connects it to the lines you cited?".to_string()
        } else {
            let ps: Vec<String> = optimal.parents.iter().map(|p| format!("`{p}`")).collect();
            format!("You are working with the right ideas. What can you conclude by combining {}?", ps.join(" and "))
        };
        let final_feedback = if action == "Enhanced" && label != "Correct" {
            format!("{reviewed_text} {guidance}")
        } else {
            guidance
        };
        Some(
            json!({
                "STUDENT_ERRORS": errors,
                "NEXT_STEP_CORRECTNESS": label,
                "TEACHER_FEEDBACK_CORRECTNESS": verdict,
                "JUDGE_ACTION": action,
                "FINAL_FEEDBACK": final_feedback,
            })
            .to_string(),
        )
    }

    fn reviser(&self, inst: &Instance, text: &str) -> Option<String> {
        let student = student_view(section(text, "### YOUR PREVIOUS RESPONSE")?)?;
        let fb = section(text, "### FEEDBACK")?;
        let no_change = || {
            json!({
                "REVISED_REASONING": "No Improvement Needed",
                "IMPROVED_STEP": "No Improvement Needed",
                "BETTER_RULE": "No Improvement Needed",
                "PARENT_STATEMENTS": "No Improvement Needed",
            })
            .to_string()
        };
        if fb.lines().any(|l| l.trim() == "NEXT_STEP_CORRECTNESS: Correct") {
            return Some(no_change());
        }
        let frontier = inst.frontier();
        let mentioned = backticked(fb);
        let pick = if fb.contains("which rule") {
            inst.rule_for(&frontier, &student.step)
        } else {
            None
        }
        .or_else(|| mentioned.iter().find_map(|m| inst.rule_for(&frontier, m)))
        .or_else(|| {
            frontier
                .iter()
                .find(|d| d.derived != student.step && d.parents.iter().any(|p| mentioned.contains(p)))
                .cloned()
        })
        .or_else(|| frontier.iter().find(|d| d.derived != student.step).cloned());
        let Some(d) = pick else {
            return Some(no_change());
        };
        Some(
            json!({
                "REVISED_REASONING": format!("Following the feedback, {} gives a better step.", rationale(&d)),
                "IMPROVED_STEP": d.derived.ascii(),
                "BETTER_RULE": d.rule.short_name(),
                "PARENT_STATEMENTS": ascii_list(&d.parents),
            })
            .to_string(),
        )
    }
}

impl AgentBackend for SymbolicAgent {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = request.instance().unwrap_or("");
        let Some(inst) = Instance::read(text, self.seed) else {
            return Ok("I could not read the problem.".into());
        };
        let first_attempt = request.messages.len() <= 2;
        let out = match request.agent {
            Role::Student => Some(self.student(&inst, first_attempt)),
            Role::Tutor => self.tutor(&inst, text),
            Role::Teacher => self.teacher(&inst, text),
            Role::Judge => self.judge(&inst, text),
            Role::Reviser => self.reviser(&inst, text),
        };
        Ok(out.unwrap_or_else(|| "I could not read the prompt sections.".into()))
    }
}
