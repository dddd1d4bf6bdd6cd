//! Seeded generator for a small bundled corpus.
//!
//! Each problem is a chain of textbook moves (MP, MT, DS, Conj then MP, Add
//! then MP, MP then Simp) that threads fresh variables from a starting fact
//! to the conclusion, plus distractor premises. The graph is built and the
//! problem kept only if its root distance equals the target; states are
//! then harvested by random walks through the graph.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formula::{Formula, Operator, Var};
use crate::kg::{KgBounds, KnowledgeGraph, ProofProblem, ProofState};

use super::{Corpus, CorpusProblem, CorpusState};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// One entry per problem; the level is also the target root distance.
    pub levels: Vec<u8>,
    pub states_per_problem: usize,
    pub max_derived_complexity: f64,
    pub rewrite_depth_limit: usize,
    pub max_nodes: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 2024,
            levels: vec![2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 6, 6],
            states_per_problem: 5,
            max_derived_complexity: 2.0,
            rewrite_depth_limit: 0,
            max_nodes: 200_000,
        }
    }
}

impl SyntheticSpec {
    pub fn bounds(&self, level: u8) -> KgBounds {
        KgBounds {
            max_nodes: self.max_nodes,
            max_intermediates: (level as usize + 2).min(7),
        }
    }
}

struct Vars(Vec<Var>);

impl Vars {
    fn shuffled(rng: &mut ChaCha8Rng) -> Vars {
        let mut v: Vec<Var> = "ABCDEFGHJKLMNPQRSTUW".chars().filter_map(Var::new).collect();
        v.shuffle(rng);
        Vars(v)
    }

    fn fresh(&mut self) -> Formula {
        Formula::Var(self.0.pop().expect("enough variables"))
    }
}

fn neg(f: &Formula) -> Formula {
    match f.negated() {
        Some(inner) => inner.clone(),
        None => Formula::not(f.clone()),
    }
}

/// Premises and conclusion of a chain needing `steps` derivations.
fn chain(rng: &mut ChaCha8Rng, steps: usize) -> (Vec<Formula>, Formula) {
    let mut vars = Vars::shuffled(rng);
    let start = vars.fresh();
    let mut x = if rng.random_bool(0.5) { Formula::not(start) } else { start };
    let mut premises = vec![x.clone()];
    let mut left = steps;
    let mut known = vec![x.clone()];
    while left > 0 {
        let mut moves: Vec<u8> = vec![0, 1, 2];
        if left >= 2 {
            moves.extend([3, 4, 5]);
        }
        let v = vars.fresh();
        match *moves.choose(rng).unwrap() {
            // MP
            0 => {
                premises.push(Formula::implies(x.clone(), v.clone()));
                x = v;
                left -= 1;
            }
            // MT: (V > ~X), X gives ~V
            1 => {
                premises.push(Formula::implies(v.clone(), neg(&x)));
                x = Formula::not(v);
                left -= 1;
            }
            // DS: (~X + V), X gives V
            2 => {
                premises.push(Formula::or(neg(&x), v.clone()));
                x = v;
                left -= 1;
            }
            // Conj with a second fact, then MP
            3 => {
                let w = vars.fresh();
                premises.push(w.clone());
                premises.push(Formula::implies(Formula::and(x.clone(), w), v.clone()));
                x = v;
                left -= 2;
            }
            // Add, then MP
            4 => {
                let w = vars.fresh();
                premises.push(Formula::implies(Formula::or(x.clone(), w), v.clone()));
                x = v;
                left -= 2;
            }
            // MP into a conjunction, then Simp
            _ => {
                let w = vars.fresh();
                premises.push(Formula::implies(x.clone(), Formula::and(v.clone(), w)));
                x = v;
                left -= 2;
            }
        }
        known.push(x.clone());
    }
    // Distractors: dead ends hanging off statements the chain passes through.
    for _ in 0..rng.random_range(1..=2) {
        let from = known[rng.random_range(0..known.len().saturating_sub(1).max(1))].clone();
        let z = vars.fresh();
        premises.push(if rng.random_bool(0.5) {
            Formula::implies(from, z)
        } else {
            Formula::or(neg(&from), z)
        });
    }
    premises.shuffle(rng);
    (premises, x)
}

/// Both sides of every disjunction in the problem: the only disjuncts a
/// proof of it can usefully add.
fn disjuncts(problem: &ProofProblem) -> BTreeSet<Formula> {
    problem
        .premises
        .iter()
        .chain(std::iter::once(&problem.conclusion))
        .flat_map(Formula::subformulas)
        .filter(|f| f.operator() == Some(Operator::Disjunction))
        .flat_map(|f| {
            let (l, r) = f.operands().unwrap();
            [l.clone(), r.clone()]
        })
        .collect()
}

/// Random walk of `len` steps through graph nodes that still reach the goal.
fn walk(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, len: usize) -> Option<ProofState> {
    let mut state = kg.root_state();
    for _ in 0..len {
        let optimal = kg.optimal_steps(&state).ok()?;
        let options: Vec<_> = if rng.random_bool(0.6) {
            optimal
        } else {
            kg.successors(&state)
                .ok()?
                .into_iter()
                .filter(|d| {
                    let next = state.extended(d.clone());
                    matches!(kg.distance(&next), Ok(Some(k)) if k > 0)
                })
                .collect()
        };
        let step = options.choose(rng)?.clone();
        let next = state.extended(step);
        match kg.distance(&next) {
            Ok(Some(k)) if k > 0 => state = next,
            _ => return None,
        }
    }
    Some(state)
}

/// `n` distinct non-goal states, or `None` if the graph has too few.
fn harvest(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, distance: usize, n: usize) -> Option<Vec<ProofState>> {
    let mut keys = BTreeSet::new();
    let mut states = Vec::new();
    for _ in 0..50 * n {
        if states.len() == n {
            return Some(states);
        }
        let len = rng.random_range(0..distance);
        let Some(state) = walk(rng, kg, len) else { continue };
        if keys.insert(state.key()) {
            states.push(state);
        }
    }
    (states.len() == n).then_some(states)
}

pub fn generate(spec: &SyntheticSpec) -> Result<Corpus, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = Corpus::default();
    for (i, &level) in spec.levels.iter().enumerate() {
        let id = format!("syn-{:02}-L{level}", i + 1);
        let mut found = None;
        for _ in 0..200 {
            let (premises, conclusion) = chain(&mut rng, level as usize);
            let Ok(problem) = ProofProblem::new(id.clone(), premises, conclusion, level) else {
                continue;
            };
            let problem_ref = problem.clone();
            let entry = CorpusProblem {
                problem: problem.into(),
                max_derived_complexity: Some(spec.max_derived_complexity),
                rewrite_depth_limit: Some(spec.rewrite_depth_limit),
                addition_vocabulary: Some(disjuncts(&problem_ref)),
                max_intermediates: Some(spec.bounds(level).max_intermediates),
            };
            let kg = entry.build_kg(spec.bounds(level));
            if kg.root_distance() != Some(level as usize) {
                continue;
            }
            if let Some(states) = harvest(&mut rng, &kg, level as usize, spec.states_per_problem) {
                found = Some((entry, states));
                break;
            }
        }
        let (entry, mut states) = found.ok_or_else(|| format!("no usable level-{level} problem found for {id}"))?;
        states.sort_by_key(|s| (s.intermediates().len(), s.key()));
        for (j, state) in states.into_iter().enumerate() {
            corpus.states.push(CorpusState {
                id: format!("{id}-s{}", j + 1),
                state,
            });
        }
        corpus.problems.push(entry);
    }
    Ok(corpus)
}
