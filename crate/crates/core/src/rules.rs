//! The closed rule set: forward application, single-step enumeration and
//! rule/parent justification.
//!
//! Inference rules (`MP`, `MT`, `Conj`, `Simp`, `Add`, `DS`, `HS`, `CD`) match
//! whole statements. Equivalence rules (`Impl`, `DN`, `CP`, `Com`, `Assoc`,
//! `Dist`, `Equiv`, `DeM`) rewrite exactly one subformula occurrence, in
//! either direction, at nesting depth up to
//! [`EnumerationConfig::rewrite_depth_limit`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::metrics::complexity::{step_complexity, ComplexityConstants};

/// Short rule names, the wire vocabulary for every agent message and file.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum RuleId {
    MP,
    MT,
    Conj,
    Simp,
    Add,
    DS,
    HS,
    Impl,
    DN,
    CP,
    Com,
    Assoc,
    Dist,
    CD,
    Equiv,
    DeM,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RuleKind {
    /// Consumes whole statements.
    Inference,
    /// Rewrites a subformula into an equivalent one.
    Equivalence,
}

impl RuleId {
    pub const ALL: [RuleId; 16] = [
        RuleId::MP,
        RuleId::MT,
        RuleId::Conj,
        RuleId::Simp,
        RuleId::Add,
        RuleId::DS,
        RuleId::HS,
        RuleId::Impl,
        RuleId::DN,
        RuleId::CP,
        RuleId::Com,
        RuleId::Assoc,
        RuleId::Dist,
        RuleId::CD,
        RuleId::Equiv,
        RuleId::DeM,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RuleId::MP => "MP",
            RuleId::MT => "MT",
            RuleId::Conj => "Conj",
            RuleId::Simp => "Simp",
            RuleId::Add => "Add",
            RuleId::DS => "DS",
            RuleId::HS => "HS",
            RuleId::Impl => "Impl",
            RuleId::DN => "DN",
            RuleId::CP => "CP",
            RuleId::Com => "Com",
            RuleId::Assoc => "Assoc",
            RuleId::Dist => "Dist",
            RuleId::CD => "CD",
            RuleId::Equiv => "Equiv",
            RuleId::DeM => "DeM",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            RuleId::MP => "Modus Ponens",
            RuleId::MT => "Modus Tollens",
            RuleId::Conj => "Conjunction",
            RuleId::Simp => "Simplification",
            RuleId::Add => "Addition",
            RuleId::DS => "Disjunctive Syllogism",
            RuleId::HS => "Hypothetical Syllogism",
            RuleId::Impl => "Implication",
            RuleId::DN => "Double Negation",
            RuleId::CP => "Contraposition",
            RuleId::Com => "Commutation",
            RuleId::Assoc => "Associativity",
            RuleId::Dist => "Distribution",
            RuleId::CD => "Constructive Dilemma",
            RuleId::Equiv => "Equivalence",
            RuleId::DeM => "De Morgan",
        }
    }

    /// Number of parent statements the rule consumes.
    pub fn arity(self) -> usize {
        match self {
            RuleId::MP | RuleId::MT | RuleId::Conj | RuleId::DS | RuleId::HS => 2,
            RuleId::CD => 3,
            _ => 1,
        }
    }

    pub fn kind(self) -> RuleKind {
        match self {
            RuleId::MP
            | RuleId::MT
            | RuleId::Conj
            | RuleId::Simp
            | RuleId::Add
            | RuleId::DS
            | RuleId::HS
            | RuleId::CD => RuleKind::Inference,
            _ => RuleKind::Equivalence,
        }
    }

    /// Accepts the short name, the full name (any case) or `"Full Name (SHORT)"`.
    pub fn parse_lenient(text: &str) -> Option<RuleId> {
        let text = text.trim();
        if let Ok(rule) = text.parse() {
            return Some(rule);
        }
        if let (Some(open), true) = (text.rfind('('), text.ends_with(')')) {
            if let Ok(rule) = text[open + 1..text.len() - 1].trim().parse() {
                return Some(rule);
            }
        }
        RuleId::ALL
            .into_iter()
            .find(|r| r.full_name().eq_ignore_ascii_case(text))
    }
}

impl PartialOrd for RuleId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Rules order by short name.
impl Ord for RuleId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.short_name().cmp(other.short_name())
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown rule `{0}`")]
pub struct UnknownRule(pub String);

impl FromStr for RuleId {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<RuleId, UnknownRule> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.short_name() == s)
            .ok_or_else(|| UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("{rule} takes {expected} parent statement(s), got {got}")]
    ArityMismatch {
        rule: RuleId,
        expected: usize,
        got: usize,
    },
}

/// One derivation step: the derived statement, the rule and its parents.
///
/// Parents are stored in the rule's pattern order, e.g. `[(P → Q), P]` for MP.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Derivation {
    pub derived: Formula,
    pub rule: RuleId,
    pub parents: Vec<Formula>,
}

impl Derivation {
    pub fn new(derived: Formula, rule: RuleId, parents: Vec<Formula>) -> Derivation {
        Derivation {
            derived,
            rule,
            parents,
        }
    }

    /// Sort key: rule name, then rendered statement, then rendered parents.
    fn enumeration_key(&self) -> (&'static str, String, Vec<String>) {
        (
            self.rule.short_name(),
            self.derived.ascii(),
            self.parents.iter().map(Formula::ascii).collect(),
        )
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parents: Vec<String> = self.parents.iter().map(Formula::ascii).collect();
        write!(f, "{} [{}: {}]", self.derived, self.rule, parents.join(", "))
    }
}

/// Bounds on forward enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationConfig {
    /// Derived statements scoring above this are dropped.
    pub max_derived_complexity: f64,
    /// Disjuncts that `Add` may introduce.
    pub addition_vocabulary: BTreeSet<Formula>,
    /// Deepest subformula position an equivalence rule may rewrite (root is 0).
    pub rewrite_depth_limit: usize,
    #[serde(default)]
    pub complexity: ComplexityConstants<f64>,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig {
            max_derived_complexity: 12.0,
            addition_vocabulary: BTreeSet::new(),
            rewrite_depth_limit: 2,
            complexity: ComplexityConstants::default(),
        }
    }
}

impl EnumerationConfig {
    /// Default bounds with the addition vocabulary set to every subformula of
    /// the premises and the conclusion.
    pub fn for_problem<'a, I>(premises: I, conclusion: &'a Formula) -> EnumerationConfig
    where
        I: IntoIterator<Item = &'a Formula>,
    {
        EnumerationConfig::default().with_vocabulary_from(premises, conclusion)
    }

    pub fn with_vocabulary_from<'a, I>(mut self, premises: I, conclusion: &'a Formula) -> Self
    where
        I: IntoIterator<Item = &'a Formula>,
    {
        self.addition_vocabulary = premises
            .into_iter()
            .chain(std::iter::once(conclusion))
            .flat_map(Formula::subformulas)
            .collect();
        self
    }

    fn admits(&self, formula: &Formula) -> bool {
        step_complexity(formula, &self.complexity) <= self.max_derived_complexity
    }
}

/// Results of one application of `rule` to `parents` taken in the rule's
/// pattern order, before filtering.
pub(crate) fn derive_ordered(rule: RuleId, parents: &[&Formula], config: &EnumerationConfig) -> Vec<Formula> {
    use Formula::*;
    match (rule, parents) {
        (RuleId::MP, [Implies(a, c), p]) if **a == **p => vec![(**c).clone()],
        (RuleId::MT, [Implies(a, c), Not(nc)]) if **c == **nc => vec![Formula::not((**a).clone())],
        (RuleId::Conj, [p, q]) => vec![Formula::and((*p).clone(), (*q).clone())],
        (RuleId::Simp, [And(l, r)]) => vec![(**l).clone(), (**r).clone()],
        (RuleId::Add, [p]) => config
            .addition_vocabulary
            .iter()
            .map(|q| Formula::or((*p).clone(), q.clone()))
            .collect(),
        (RuleId::DS, [Or(l, r), Not(n)]) => {
            let mut out = Vec::new();
            if **n == **l {
                out.push((**r).clone());
            }
            if **n == **r {
                out.push((**l).clone());
            }
            out
        }
        (RuleId::HS, [Implies(a, b), Implies(b2, c)]) if b == b2 => {
            vec![Formula::implies((**a).clone(), (**c).clone())]
        }
        (RuleId::CD, [Implies(p, q), Implies(r, s), Or(p2, r2)]) if p == p2 && r == r2 => {
            vec![Formula::or((**q).clone(), (**s).clone())]
        }
        (rule, [p]) if rule.kind() == RuleKind::Equivalence => {
            let mut out = Vec::new();
            rewrite_positions(rule, p, 0, config.rewrite_depth_limit, &mut out);
            out
        }
        _ => Vec::new(),
    }
}

/// Every formula obtained by rewriting one subformula of `f` at depth
/// `depth..=limit` with `rule`.
fn rewrite_positions(rule: RuleId, f: &Formula, depth: usize, limit: usize, out: &mut Vec<Formula>) {
    if depth > limit {
        return;
    }
    out.extend(rewrite_root(rule, f));
    match f {
        Formula::Var(_) => {}
        Formula::Not(inner) => {
            let mut inner_out = Vec::new();
            rewrite_positions(rule, inner, depth + 1, limit, &mut inner_out);
            out.extend(inner_out.into_iter().map(Formula::not));
        }
        _ => {
            let op = f.operator().unwrap();
            let (l, r) = f.operands().unwrap();
            let mut left_out = Vec::new();
            rewrite_positions(rule, l, depth + 1, limit, &mut left_out);
            out.extend(left_out.into_iter().map(|nl| Formula::binary(op, nl, r.clone())));
            let mut right_out = Vec::new();
            rewrite_positions(rule, r, depth + 1, limit, &mut right_out);
            out.extend(right_out.into_iter().map(|nr| Formula::binary(op, l.clone(), nr)));
        }
    }
}

/// Both directions of an equivalence rule applied at the root of `f`.
fn rewrite_root(rule: RuleId, f: &Formula) -> Vec<Formula> {
    use Formula::*;
    let b = |x: &Formula| x.clone();
    let mut out = Vec::new();
    match rule {
        RuleId::Impl => match f {
            Implies(p, q) => out.push(Formula::or(Formula::not(b(p)), b(q))),
            Or(np, q) => {
                if let Not(p) = &**np {
                    out.push(Formula::implies(b(p), b(q)));
                }
            }
            _ => {}
        },
        RuleId::DN => {
            out.push(Formula::not(Formula::not(b(f))));
            if let Not(inner) = f {
                if let Not(p) = &**inner {
                    out.push(b(p));
                }
            }
        }
        RuleId::CP => {
            if let Implies(p, q) = f {
                out.push(Formula::implies(Formula::not(b(q)), Formula::not(b(p))));
                if let (Not(nq), Not(np)) = (&**p, &**q) {
                    out.push(Formula::implies(b(np), b(nq)));
                }
            }
        }
        RuleId::Com => match f {
            And(p, q) => out.push(Formula::and(b(q), b(p))),
            Or(p, q) => out.push(Formula::or(b(q), b(p))),
            _ => {}
        },
        RuleId::Assoc => match f {
            And(l, r) => {
                if let And(p, q) = &**l {
                    out.push(Formula::and(b(p), Formula::and(b(q), b(r))));
                }
                if let And(q, s) = &**r {
                    out.push(Formula::and(Formula::and(b(l), b(q)), b(s)));
                }
            }
            Or(l, r) => {
                if let Or(p, q) = &**l {
                    out.push(Formula::or(b(p), Formula::or(b(q), b(r))));
                }
                if let Or(q, s) = &**r {
                    out.push(Formula::or(Formula::or(b(l), b(q)), b(s)));
                }
            }
            _ => {}
        },
        RuleId::Dist => match f {
            And(p, r) => {
                // P ∧ (Q ∨ R) ⇒ (P ∧ Q) ∨ (P ∧ R)
                if let Or(q, s) = &**r {
                    out.push(Formula::or(Formula::and(b(p), b(q)), Formula::and(b(p), b(s))));
                }
                // (P ∨ Q) ∧ (P ∨ R) ⇒ P ∨ (Q ∧ R)
                if let (Or(p1, q), Or(p2, s)) = (&**p, &**r) {
                    if p1 == p2 {
                        out.push(Formula::or(b(p1), Formula::and(b(q), b(s))));
                    }
                }
            }
            Or(p, r) => {
                // P ∨ (Q ∧ R) ⇒ (P ∨ Q) ∧ (P ∨ R)
                if let And(q, s) = &**r {
                    out.push(Formula::and(Formula::or(b(p), b(q)), Formula::or(b(p), b(s))));
                }
                // (P ∧ Q) ∨ (P ∧ R) ⇒ P ∧ (Q ∨ R)
                if let (And(p1, q), And(p2, s)) = (&**p, &**r) {
                    if p1 == p2 {
                        out.push(Formula::and(b(p1), Formula::or(b(q), b(s))));
                    }
                }
            }
            _ => {}
        },
        RuleId::Equiv => match f {
            Iff(p, q) => out.push(Formula::and(
                Formula::implies(b(p), b(q)),
                Formula::implies(b(q), b(p)),
            )),
            And(l, r) => {
                if let (Implies(p, q), Implies(q2, p2)) = (&**l, &**r) {
                    if p == p2 && q == q2 {
                        out.push(Formula::iff(b(p), b(q)));
                    }
                }
            }
            _ => {}
        },
        RuleId::DeM => match f {
            Not(inner) => match &**inner {
                And(p, q) => out.push(Formula::or(Formula::not(b(p)), Formula::not(b(q)))),
                Or(p, q) => out.push(Formula::and(Formula::not(b(p)), Formula::not(b(q)))),
                _ => {}
            },
            Or(l, r) => {
                if let (Not(p), Not(q)) = (&**l, &**r) {
                    out.push(Formula::not(Formula::and(b(p), b(q))));
                }
            }
            And(l, r) => {
                if let (Not(p), Not(q)) = (&**l, &**r) {
                    out.push(Formula::not(Formula::or(b(p), b(q))));
                }
            }
            _ => {}
        },
        _ => {}
    }
    out
}

/// Pattern-order results filtered by the complexity cap, with statements
/// equal to a parent removed.
pub(crate) fn derive_filtered(rule: RuleId, parents: &[&Formula], config: &EnumerationConfig) -> Vec<Formula> {
    let mut out: Vec<Formula> = derive_ordered(rule, parents, config)
        .into_iter()
        .filter(|d| !parents.contains(&d) && config.admits(d))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn permutations<'a>(parents: &[&'a Formula]) -> Vec<Vec<&'a Formula>> {
    match parents.len() {
        0 | 1 => vec![parents.to_vec()],
        _ => {
            let mut out = Vec::new();
            for i in 0..parents.len() {
                let mut rest = parents.to_vec();
                let head = rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
    }
}

/// Every statement derivable from exactly these parents by one application
/// of `rule`. Parents may be listed in any order.
pub fn apply_rule(
    rule: RuleId,
    parents: &[Formula],
    config: &EnumerationConfig,
) -> Result<BTreeSet<Formula>, RuleError> {
    if parents.len() != rule.arity() {
        return Err(RuleError::ArityMismatch {
            rule,
            expected: rule.arity(),
            got: parents.len(),
        });
    }
    let refs: Vec<&Formula> = parents.iter().collect();
    Ok(permutations(&refs)
        .into_iter()
        .flat_map(|order| derive_filtered(rule, &order, config))
        .collect())
}

/// Ordered parent selections (by index into `statements`) that could match
/// `rule`'s pattern. Repetition is allowed for `Conj` only.
pub(crate) fn parent_selections(rule: RuleId, statements: &[&Formula]) -> Vec<Vec<usize>> {
    let n = statements.len();
    let is = |i: usize, pred: fn(&Formula) -> bool| pred(statements[i]);
    let implication = |f: &Formula| matches!(f, Formula::Implies(..));
    let disjunction = |f: &Formula| matches!(f, Formula::Or(..));
    let negation = |f: &Formula| matches!(f, Formula::Not(..));
    let conjunction = |f: &Formula| matches!(f, Formula::And(..));
    let mut out = Vec::new();
    match rule.arity() {
        1 => {
            for i in 0..n {
                if rule != RuleId::Simp || is(i, conjunction) {
                    out.push(vec![i]);
                }
            }
        }
        2 => {
            for i in 0..n {
                let first_ok = match rule {
                    RuleId::MP | RuleId::MT | RuleId::HS => is(i, implication),
                    RuleId::DS => is(i, disjunction),
                    _ => true,
                };
                if !first_ok {
                    continue;
                }
                for j in 0..n {
                    if i == j && rule != RuleId::Conj {
                        continue;
                    }
                    let second_ok = match rule {
                        RuleId::MT | RuleId::DS => is(j, negation),
                        RuleId::HS => is(j, implication),
                        _ => true,
                    };
                    if second_ok {
                        out.push(vec![i, j]);
                    }
                }
            }
        }
        _ => {
            for k in (0..n).filter(|&k| is(k, disjunction)) {
                for i in (0..n).filter(|&i| i != k && is(i, implication)) {
                    for j in (0..n).filter(|&j| j != k && j != i && is(j, implication)) {
                        out.push(vec![i, j, k]);
                    }
                }
            }
        }
    }
    out
}

/// One frontier layer: every single-step derivation from `statements` whose
/// derived statement is new, ordered by (rule name, rendered statement).
pub fn applicable_derivations(statements: &[Formula], config: &EnumerationConfig) -> Vec<Derivation> {
    let refs: Vec<&Formula> = statements.iter().collect();
    let present: BTreeSet<&Formula> = statements.iter().collect();
    let mut found = BTreeSet::new();
    for rule in RuleId::ALL {
        for selection in parent_selections(rule, &refs) {
            let parents: Vec<&Formula> = selection.iter().map(|&i| refs[i]).collect();
            for derived in derive_filtered(rule, &parents, config) {
                if !present.contains(&derived) {
                    found.insert(Derivation::new(
                        derived,
                        rule,
                        parents.iter().map(|p| (*p).clone()).collect(),
                    ));
                }
            }
        }
    }
    let mut out: Vec<Derivation> = found.into_iter().collect();
    out.sort_by_cached_key(Derivation::enumeration_key);
    out
}

/// True iff every parent is available and `step` follows from the parents by `rule`.
pub fn justify(
    step: &Formula,
    rule: RuleId,
    parents: &[Formula],
    available: &BTreeSet<Formula>,
    config: &EnumerationConfig,
) -> bool {
    parents.iter().all(|p| available.contains(p))
        && apply_rule(rule, parents, config).is_ok_and(|out| out.contains(step))
}
