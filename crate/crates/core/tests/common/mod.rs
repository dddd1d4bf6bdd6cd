//! Shared strategies and independent oracles for the integration suites.
//!
//! Nothing here calls the production matcher, evaluator or scorer: rules are
//! re-stated as schema tables and applied by a tiny unifier.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use proptest::prelude::*;
use prooftutor::{parse, Formula, RuleId};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn f(s: &str) -> Formula {
    parse(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

/// Random formulas over the first `vars` letters, at most `depth` levels of nesting.
pub fn formula(vars: u8, depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = (0..vars).prop_map(|i| Formula::var((b'A' + i) as char));
    leaf.prop_recursive(depth, 48, 2, |inner| {
        prop_oneof![
            2 => inner.clone().prop_map(Formula::not),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            1 => (inner.clone(), inner).prop_map(|(a, b)| Formula::iff(a, b)),
        ]
    })
}

pub fn random_formula<R: Rng>(rng: &mut R, vars: u8, depth: u32) -> Formula {
    if depth == 0 || rng.random_bool(0.3) {
        return Formula::var((b'A' + rng.random_range(0..vars)) as char);
    }
    let a = random_formula(rng, vars, depth - 1);
    match rng.random_range(0..9) {
        0 | 1 => Formula::not(a),
        2 | 3 => Formula::and(a, random_formula(rng, vars, depth - 1)),
        4 | 5 => Formula::or(a, random_formula(rng, vars, depth - 1)),
        6 | 7 => Formula::implies(a, random_formula(rng, vars, depth - 1)),
        _ => Formula::iff(a, random_formula(rng, vars, depth - 1)),
    }
}

// ---------------------------------------------------------------- semantics

fn eval(f: &Formula, bits: u32, letters: &[char]) -> bool {
    match f {
        Formula::Var(v) => {
            let i = letters.iter().position(|&c| c == v.letter()).unwrap();
            bits >> i & 1 == 1
        }
        Formula::Not(a) => !eval(a, bits, letters),
        Formula::And(a, b) => eval(a, bits, letters) && eval(b, bits, letters),
        Formula::Or(a, b) => eval(a, bits, letters) || eval(b, bits, letters),
        Formula::Implies(a, b) => !eval(a, bits, letters) || eval(b, bits, letters),
        Formula::Iff(a, b) => eval(a, bits, letters) == eval(b, bits, letters),
    }
}

fn letters_of(f: &Formula, out: &mut BTreeSet<char>) {
    match f {
        Formula::Var(v) => {
            out.insert(v.letter());
        }
        Formula::Not(a) => letters_of(a, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
            letters_of(a, out);
            letters_of(b, out);
        }
    }
}

/// Exhaustive truth-table entailment.
pub fn tt_entails(premises: &[Formula], goal: &Formula) -> bool {
    let mut set = BTreeSet::new();
    premises.iter().chain([goal]).for_each(|p| letters_of(p, &mut set));
    let letters: Vec<char> = set.into_iter().collect();
    assert!(letters.len() <= 20);
    (0..1u32 << letters.len()).all(|bits| {
        !premises.iter().all(|p| eval(p, bits, &letters)) || eval(goal, bits, &letters)
    })
}

/// Weighted depth-penalized operator count with the default constants.
pub fn default_score(f: &Formula) -> f64 {
    fn go(f: &Formula, depth: i32) -> f64 {
        let (w, kids): (f64, Vec<&Formula>) = match f {
            Formula::Var(_) => return 0.0,
            Formula::Not(a) => (0.5, vec![a]),
            Formula::And(a, b) => (1.0, vec![a, b]),
            Formula::Or(a, b) => (1.0, vec![a, b]),
            Formula::Implies(a, b) => (1.5, vec![a, b]),
            Formula::Iff(a, b) => (2.0, vec![a, b]),
        };
        w * 1.5f64.powi(depth) + kids.iter().map(|k| go(k, depth + 1)).sum::<f64>()
    }
    go(f, 0)
}

// ---------------------------------------------------------------- rule schemas

type Bindings = BTreeMap<char, Formula>;

/// Unify a schema (its letters are metavariables) with a concrete formula.
fn unify(schema: &Formula, target: &Formula, b: &mut Bindings) -> bool {
    match (schema, target) {
        (Formula::Var(m), t) => match b.get(&m.letter()) {
            Some(bound) => bound == t,
            None => {
                b.insert(m.letter(), t.clone());
                true
            }
        },
        (Formula::Not(s), Formula::Not(t)) => unify(s, t, b),
        (Formula::And(s1, s2), Formula::And(t1, t2))
        | (Formula::Or(s1, s2), Formula::Or(t1, t2))
        | (Formula::Implies(s1, s2), Formula::Implies(t1, t2))
        | (Formula::Iff(s1, s2), Formula::Iff(t1, t2)) => unify(s1, t1, b) && unify(s2, t2, b),
        _ => false,
    }
}

fn instantiate(schema: &Formula, b: &Bindings) -> Option<Formula> {
    Some(match schema {
        Formula::Var(m) => b.get(&m.letter())?.clone(),
        Formula::Not(s) => Formula::not(instantiate(s, b)?),
        Formula::And(x, y) => Formula::and(instantiate(x, b)?, instantiate(y, b)?),
        Formula::Or(x, y) => Formula::or(instantiate(x, b)?, instantiate(y, b)?),
        Formula::Implies(x, y) => Formula::implies(instantiate(x, b)?, instantiate(y, b)?),
        Formula::Iff(x, y) => Formula::iff(instantiate(x, b)?, instantiate(y, b)?),
    })
}

/// Inference schemas: (premise patterns, conclusion pattern).
fn inference_schemas(rule: RuleId) -> Vec<(Vec<&'static str>, &'static str)> {
    match rule {
        RuleId::MP => vec![(vec!["P > Q", "P"], "Q")],
        RuleId::MT => vec![(vec!["P > Q", "~Q"], "~P")],
        RuleId::Conj => vec![(vec!["P", "Q"], "P * Q")],
        RuleId::Simp => vec![(vec!["P * Q"], "P"), (vec!["P * Q"], "Q")],
        RuleId::Add => vec![(vec!["P"], "P + Q")],
        RuleId::DS => vec![(vec!["P + Q", "~P"], "Q"), (vec!["P + Q", "~Q"], "P")],
        RuleId::HS => vec![(vec!["P > Q", "Q > R"], "P > R")],
        RuleId::CD => vec![(vec!["P > Q", "R > S", "P + R"], "Q + S")],
        _ => vec![],
    }
}

/// Equivalence schemas, each usable left-to-right and right-to-left.
fn equivalence_schemas(rule: RuleId) -> Vec<(&'static str, &'static str)> {
    match rule {
        RuleId::Impl => vec![("P > Q", "~P + Q")],
        RuleId::DN => vec![("P", "~~P")],
        RuleId::CP => vec![("P > Q", "~Q > ~P")],
        RuleId::Com => vec![("P * Q", "Q * P"), ("P + Q", "Q + P")],
        RuleId::Assoc => vec![("(P * Q) * R", "P * (Q * R)"), ("(P + Q) + R", "P + (Q + R)")],
        RuleId::Dist => vec![("P * (Q + R)", "(P * Q) + (P * R)"), ("P + (Q * R)", "(P + Q) * (P + R)")],
        RuleId::Equiv => vec![("P <> Q", "(P > Q) * (Q > P)")],
        RuleId::DeM => vec![("~(P * Q)", "~P + ~Q"), ("~(P + Q)", "~P * ~Q")],
        _ => vec![],
    }
}

/// Subterm at a path of child indices.
fn at<'a>(f: &'a Formula, path: &[usize]) -> &'a Formula {
    match (path.split_first(), f) {
        (None, _) => f,
        (Some((0, rest)), Formula::Not(a)) => at(a, rest),
        (Some((i, rest)), Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b)) => {
            at(if *i == 0 { a } else { b }, rest)
        }
        _ => unreachable!(),
    }
}

fn replace(f: &Formula, path: &[usize], with: &Formula) -> Formula {
    let Some((&i, rest)) = path.split_first() else {
        return with.clone();
    };
    match f {
        Formula::Not(a) => Formula::not(replace(a, rest, with)),
        Formula::And(a, b) if i == 0 => Formula::and(replace(a, rest, with), (**b).clone()),
        Formula::And(a, b) => Formula::and((**a).clone(), replace(b, rest, with)),
        Formula::Or(a, b) if i == 0 => Formula::or(replace(a, rest, with), (**b).clone()),
        Formula::Or(a, b) => Formula::or((**a).clone(), replace(b, rest, with)),
        Formula::Implies(a, b) if i == 0 => Formula::implies(replace(a, rest, with), (**b).clone()),
        Formula::Implies(a, b) => Formula::implies((**a).clone(), replace(b, rest, with)),
        Formula::Iff(a, b) if i == 0 => Formula::iff(replace(a, rest, with), (**b).clone()),
        Formula::Iff(a, b) => Formula::iff((**a).clone(), replace(b, rest, with)),
        Formula::Var(_) => unreachable!(),
    }
}

fn paths(f: &Formula, limit: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut i = 0;
    while i < out.len() {
        let p = out[i].clone();
        i += 1;
        if p.len() == limit {
            continue;
        }
        let kids = match at(f, &p) {
            Formula::Var(_) => 0,
            Formula::Not(_) => 1,
            _ => 2,
        };
        for k in 0..kids {
            let mut q = p.clone();
            q.push(k);
            out.push(q);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub max_complexity: f64,
    pub vocabulary: BTreeSet<Formula>,
    pub rewrite_depth: usize,
}

impl OracleConfig {
    pub fn matching(config: &prooftutor::EnumerationConfig) -> OracleConfig {
        assert_eq!(config.complexity, Default::default(), "oracle scores with default constants");
        OracleConfig {
            max_complexity: config.max_derived_complexity,
            vocabulary: config.addition_vocabulary.clone(),
            rewrite_depth: config.rewrite_depth_limit,
        }
    }
}

/// Results of `rule` on `parents` in exactly the given order.
pub fn oracle_ordered(rule: RuleId, parents: &[Formula], cfg: &OracleConfig) -> BTreeSet<Formula> {
    let mut raw = Vec::new();
    for (premises, conclusion) in inference_schemas(rule) {
        if premises.len() != parents.len() {
            continue;
        }
        let mut b = Bindings::new();
        if !premises.iter().zip(parents).all(|(s, p)| unify(&f(s), p, &mut b)) {
            continue;
        }
        let conclusion = f(conclusion);
        if rule == RuleId::Add {
            for q in &cfg.vocabulary {
                let mut b = b.clone();
                b.insert('Q', q.clone());
                raw.push(instantiate(&conclusion, &b).unwrap());
            }
        } else {
            raw.push(instantiate(&conclusion, &b).unwrap());
        }
    }
    if let [p] = parents {
        for (l, r) in equivalence_schemas(rule) {
            let (l, r) = (f(l), f(r));
            for path in paths(p, cfg.rewrite_depth) {
                let sub = at(p, &path);
                for (from, to) in [(&l, &r), (&r, &l)] {
                    let mut b = Bindings::new();
                    if unify(from, sub, &mut b) {
                        if let Some(new) = instantiate(to, &b) {
                            raw.push(replace(p, &path, &new));
                        }
                    }
                }
            }
        }
    }
    raw.into_iter()
        .filter(|d| !parents.contains(d) && default_score(d) <= cfg.max_complexity)
        .collect()
}

fn orders(parents: &[Formula]) -> Vec<Vec<Formula>> {
    if parents.len() <= 1 {
        return vec![parents.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..parents.len() {
        let mut rest = parents.to_vec();
        let head = rest.remove(i);
        for mut tail in orders(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

pub fn arity(rule: RuleId) -> usize {
    match rule {
        RuleId::MP | RuleId::MT | RuleId::Conj | RuleId::DS | RuleId::HS => 2,
        RuleId::CD => 3,
        _ => 1,
    }
}

/// Results of `rule` on `parents` in any order.
pub fn oracle_apply(rule: RuleId, parents: &[Formula], cfg: &OracleConfig) -> BTreeSet<Formula> {
    if parents.len() != arity(rule) {
        return BTreeSet::new();
    }
    orders(parents)
        .iter()
        .flat_map(|o| oracle_ordered(rule, o, cfg))
        .collect()
}

pub fn oracle_justify(step: &Formula, rule: RuleId, parents: &[Formula], available: &BTreeSet<Formula>, cfg: &OracleConfig) -> bool {
    parents.iter().all(|p| available.contains(p)) && oracle_apply(rule, parents, cfg).contains(step)
}

/// Every (derived, rule, ordered parents) with a new derived statement.
pub fn oracle_frontier(statements: &[Formula], cfg: &OracleConfig) -> BTreeSet<(Formula, RuleId, Vec<Formula>)> {
    let present: BTreeSet<&Formula> = statements.iter().collect();
    let n = statements.len();
    let mut out = BTreeSet::new();
    for rule in RuleId::ALL {
        let k = arity(rule);
        let mut tuples: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..k {
            tuples = tuples
                .into_iter()
                .flat_map(|t| (0..n).map(move |i| [t.clone(), vec![i]].concat()))
                .collect();
        }
        for t in tuples {
            let distinct: BTreeSet<usize> = t.iter().copied().collect();
            if distinct.len() != t.len() && rule != RuleId::Conj {
                continue;
            }
            let parents: Vec<Formula> = t.iter().map(|&i| statements[i].clone()).collect();
            for d in oracle_ordered(rule, &parents, cfg) {
                if !present.contains(&d) {
                    out.insert((d, rule, parents.clone()));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- brute-force classifier

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Optimal,
    ValidNonOptimal,
    Invalid,
}

/// Full state space of a problem recomputed from scratch: keyed by the set
/// of derived statements, with shortest goal distances by value iteration.
pub struct BruteForce {
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
    pub cfg: OracleConfig,
    pub max_intermediates: usize,
    pub successors: HashMap<BTreeSet<Formula>, BTreeSet<Formula>>,
    pub distance: HashMap<BTreeSet<Formula>, Option<usize>>,
}

impl BruteForce {
    pub fn new(premises: &[Formula], conclusion: &Formula, cfg: OracleConfig, max_intermediates: usize) -> BruteForce {
        let mut successors = HashMap::new();
        let root = BTreeSet::new();
        let mut queue = VecDeque::from([root.clone()]);
        let mut seen: BTreeSet<BTreeSet<Formula>> = BTreeSet::from([root]);
        while let Some(state) = queue.pop_front() {
            if state.contains(conclusion) || state.len() >= max_intermediates {
                successors.insert(state, BTreeSet::new());
                continue;
            }
            let statements: Vec<Formula> = premises.iter().cloned().chain(state.iter().cloned()).collect();
            let next: BTreeSet<Formula> = oracle_frontier(&statements, &cfg).into_iter().map(|(d, _, _)| d).collect();
            for d in &next {
                let mut child = state.clone();
                child.insert(d.clone());
                if seen.insert(child.clone()) {
                    queue.push_back(child);
                }
            }
            successors.insert(state, next);
        }
        // Value iteration: a different route to the same shortest distances.
        let mut distance: HashMap<BTreeSet<Formula>, Option<usize>> = successors
            .keys()
            .map(|s| (s.clone(), s.contains(conclusion).then_some(0)))
            .collect();
        loop {
            let mut changed = false;
            for (state, next) in &successors {
                let best = next
                    .iter()
                    .filter_map(|d| {
                        let mut child = state.clone();
                        child.insert(d.clone());
                        distance.get(&child).copied().flatten()
                    })
                    .min()
                    .map(|m| m + 1);
                let cur = distance[state];
                if let Some(b) = best {
                    if cur.is_none_or(|c| b < c) {
                        distance.insert(state.clone(), Some(b));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        BruteForce {
            premises: premises.to_vec(),
            conclusion: conclusion.clone(),
            cfg,
            max_intermediates,
            successors,
            distance,
        }
    }

    pub fn state_count(&self) -> usize {
        self.successors.len()
    }

    /// Valid steps from a state, including those from states at the depth
    /// bound, which the space above does not expand.
    pub fn valid_steps(&self, state: &BTreeSet<Formula>) -> BTreeSet<Formula> {
        if state.contains(&self.conclusion) {
            return BTreeSet::new();
        }
        let statements: Vec<Formula> = self.premises.iter().cloned().chain(state.iter().cloned()).collect();
        oracle_frontier(&statements, &self.cfg).into_iter().map(|(d, _, _)| d).collect()
    }

    pub fn classify(
        &self,
        state: &BTreeSet<Formula>,
        step: &Formula,
        rule: RuleId,
        parents: &[Formula],
    ) -> (Verdict, bool, Option<usize>, Option<usize>) {
        let available: BTreeSet<Formula> = self.premises.iter().cloned().chain(state.iter().cloned()).collect();
        let justified = oracle_justify(step, rule, parents, &available, &self.cfg);
        let before = self.distance.get(state).copied().flatten();
        if !self.valid_steps(state).contains(step) {
            return (Verdict::Invalid, justified, before, None);
        }
        let mut child = state.clone();
        child.insert(step.clone());
        let after = self.distance.get(&child).copied().flatten();
        let verdict = match (before, after) {
            (Some(b), Some(a)) if a + 1 == b => Verdict::Optimal,
            _ => Verdict::ValidNonOptimal,
        };
        (verdict, justified, before, after)
    }
}

/// A random problem with at most four premises whose conclusion is a
/// statement derivable in one to three steps.
pub fn random_problem<R: Rng>(rng: &mut R) -> (Vec<Formula>, Formula) {
    loop {
        let n = rng.random_range(2..=4);
        let mut premises: Vec<Formula> = Vec::new();
        while premises.len() < n {
            let p = random_formula(rng, 4, 2);
            if !premises.contains(&p) {
                premises.push(p);
            }
        }
        let cfg = OracleConfig {
            max_complexity: 3.0,
            vocabulary: BTreeSet::new(),
            rewrite_depth: 1,
        };
        let mut statements = premises.clone();
        let steps = rng.random_range(1..=3);
        for _ in 0..steps {
            let frontier: Vec<Formula> = oracle_frontier(&statements, &cfg)
                .into_iter()
                .map(|(d, _, _)| d)
                .filter(|d| !matches!(d, Formula::Not(x) if matches!(**x, Formula::Not(_))))
                .collect();
            let Some(next) = frontier.choose(rng) else { break };
            statements.push(next.clone());
        }
        let conclusion = statements.last().unwrap().clone();
        if !premises.contains(&conclusion) {
            return (premises, conclusion);
        }
    }
}

/// Parents shaped to fire `rule`: its schema instantiated with `metas` for
/// P, Q, R, S. Equivalence parents use side `flip` and are optionally
/// embedded one level deep next to `context`.
pub fn shaped_parents(rule: RuleId, metas: &[Formula; 4], flip: bool, context: Option<(u8, &Formula)>) -> Vec<Formula> {
    let b: Bindings = ['P', 'Q', 'R', 'S'].into_iter().zip(metas.iter().cloned()).collect();
    if let Some((premises, _)) = inference_schemas(rule).into_iter().nth(flip as usize % 2).or_else(|| inference_schemas(rule).into_iter().next()) {
        return premises.iter().map(|s| instantiate(&f(s), &b).unwrap()).collect();
    }
    let schemas = equivalence_schemas(rule);
    let (l, r) = schemas[metas[0].size() % schemas.len()];
    let core = instantiate(&f(if flip { r } else { l }), &b).unwrap();
    let wrapped = match context {
        None => core,
        Some((k, other)) => match k % 5 {
            0 => Formula::not(core),
            1 => Formula::and(other.clone(), core),
            2 => Formula::or(core, other.clone()),
            3 => Formula::implies(other.clone(), core),
            _ => Formula::iff(core, other.clone()),
        },
    };
    vec![wrapped]
}

/// Outcome of comparing `classify_step` against [`BruteForce`].
#[derive(Debug, Default)]
pub struct Agreement {
    pub problems: usize,
    pub pairs: usize,
    pub mismatches: Vec<String>,
}

/// Build `problems` random problems, classify sampled (state, candidate)
/// pairs with the KG and with the brute-force classifier, and report.
pub fn oracle_equivalence(seed: u64, problems: usize, states_per_problem: usize, candidates_per_state: usize) -> Agreement {
    use prooftutor::{KgBounds, KnowledgeGraph, ProofProblem, StepCategory};
    use rand::SeedableRng;
    use std::sync::Arc;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut agreement = Agreement::default();
    for i in 0..problems {
        let (premises, conclusion) = random_problem(&mut rng);
        let problem = Arc::new(ProofProblem::new(format!("rand-{i}"), premises.clone(), conclusion.clone(), 2).unwrap());
        let mut config = problem.enumeration_config();
        config.max_derived_complexity = 3.0;
        config.rewrite_depth_limit = 1;
        let mut depth = 3;
        let kg = loop {
            let kg = KnowledgeGraph::build(problem.clone(), config.clone(), KgBounds { max_nodes: 5000, max_intermediates: depth });
            if !kg.truncated() || depth == 1 {
                break kg;
            }
            depth -= 1;
        };
        assert!(!kg.truncated(), "problem {i} truncated even at depth 1");
        let brute = BruteForce::new(&premises, &conclusion, OracleConfig::matching(&config), depth);
        agreement.problems += 1;

        let states = kg.states();
        let mut picked = vec![states[0].clone()];
        picked.extend(states.choose_multiple(&mut rng, states_per_problem.saturating_sub(1)).cloned());
        for state in picked {
            let derived: BTreeSet<Formula> = state.intermediates().iter().map(|d| d.derived.clone()).collect();
            let statements = state.statements();
            let frontier: Vec<(Formula, RuleId, Vec<Formula>)> = if state.is_goal() {
                vec![]
            } else {
                oracle_frontier(&statements, &brute.cfg).into_iter().collect()
            };
            let mut candidates: Vec<(Formula, RuleId, Vec<Formula>)> = frontier
                .choose_multiple(&mut rng, candidates_per_state)
                .cloned()
                .map(|(d, r, p)| {
                    if rng.random_bool(0.3) {
                        (d, *RuleId::ALL.choose(&mut rng).unwrap(), p)
                    } else {
                        (d, r, p)
                    }
                })
                .collect();
            for _ in 0..3 {
                let junk = random_formula(&mut rng, 5, 2);
                let parents = vec![statements.choose(&mut rng).unwrap().clone()];
                candidates.push((junk, *RuleId::ALL.choose(&mut rng).unwrap(), parents));
            }
            candidates.push((conclusion.clone(), RuleId::MP, vec![f("Z > Z"), f("Z")]));
            for (step, rule, parents) in candidates {
                let got = kg.classify_step(&state, &step, rule, &parents).unwrap();
                let (verdict, justified, before, after) = brute.classify(&derived, &step, rule, &parents);
                let category = match verdict {
                    Verdict::Optimal => StepCategory::Optimal,
                    Verdict::ValidNonOptimal => StepCategory::ValidNonOptimal,
                    Verdict::Invalid => StepCategory::Invalid,
                };
                agreement.pairs += 1;
                if (got.category, got.justified, got.distance_before, got.distance_after) != (category, justified, before, after) {
                    agreement.mismatches.push(format!(
                        "problem {i} state {} step {step} [{rule}]: kg {:?} vs brute {:?}",
                        state.key(),
                        got,
                        (category, justified, before, after)
                    ));
                }
            }
        }
    }
    agreement
}
