//! Proof-state knowledge graphs.
//!
//! A graph holds every proof state of one problem reachable by forward
//! chaining from the empty state, up to the configured bounds. States are
//! keyed by the *set* of derived statements, so two orders of the same
//! independent steps land on one node. Goal states (those containing the
//! conclusion) are terminal.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rustc_hash::{FxHashMap, FxHashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::rules::{self, justify, Derivation, EnumerationConfig, RuleId};

pub const KG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KgError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid proof state: {0}")]
    InvalidState(String),
    #[error("state {0} is not a node of the knowledge graph")]
    UnknownState(String),
    #[error("no goal state is reachable within the build bounds")]
    GoalUnreachable,
    #[error("state has no optimal next step (goal reached or goal unreachable)")]
    NoOptimalStep,
    #[error("knowledge graph document is inconsistent: {0}")]
    InvalidExport(String),
}

/// A premise set and a target conclusion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofProblem {
    pub id: String,
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
    pub level: u8,
}

impl ProofProblem {
    pub const LEVELS: std::ops::RangeInclusive<u8> = 2..=6;

    pub fn new(
        id: impl Into<String>,
        premises: Vec<Formula>,
        conclusion: Formula,
        level: u8,
    ) -> Result<ProofProblem, KgError> {
        let problem = ProofProblem {
            id: id.into(),
            premises,
            conclusion,
            level,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<(), KgError> {
        if self.premises.is_empty() {
            return Err(KgError::InvalidProblem(format!("{}: no premises", self.id)));
        }
        if self.premises.contains(&self.conclusion) {
            return Err(KgError::InvalidProblem(format!(
                "{}: conclusion {} is already a premise",
                self.id, self.conclusion
            )));
        }
        if !Self::LEVELS.contains(&self.level) {
            return Err(KgError::InvalidProblem(format!(
                "{}: level {} outside 2-6",
                self.id, self.level
            )));
        }
        let distinct: BTreeSet<&Formula> = self.premises.iter().collect();
        if distinct.len() != self.premises.len() {
            return Err(KgError::InvalidProblem(format!("{}: duplicate premise", self.id)));
        }
        Ok(())
    }

    /// Default enumeration bounds with this problem's subformula vocabulary.
    pub fn enumeration_config(&self) -> EnumerationConfig {
        EnumerationConfig::for_problem(&self.premises, &self.conclusion)
    }
}

/// A learner's progress: the problem plus derived intermediates, in order.
///
/// Every intermediate is justified by statements that precede it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofState {
    problem: Arc<ProofProblem>,
    intermediates: Vec<Derivation>,
}

impl ProofState {
    pub fn root(problem: Arc<ProofProblem>) -> ProofState {
        ProofState {
            problem,
            intermediates: Vec::new(),
        }
    }

    /// Builds a state, checking each intermediate against the statements before it.
    pub fn new(
        problem: Arc<ProofProblem>,
        intermediates: Vec<Derivation>,
        config: &EnumerationConfig,
    ) -> Result<ProofState, KgError> {
        let mut state = ProofState::root(problem);
        for (i, step) in intermediates.into_iter().enumerate() {
            state
                .push(step, config)
                .map_err(|e| KgError::InvalidState(format!("intermediate {}: {}", i + 1, inner_message(e))))?;
        }
        Ok(state)
    }

    pub fn problem(&self) -> &Arc<ProofProblem> {
        &self.problem
    }

    pub fn intermediates(&self) -> &[Derivation] {
        &self.intermediates
    }

    /// Premises followed by intermediates, in display order.
    pub fn statements(&self) -> Vec<Formula> {
        self.problem
            .premises
            .iter()
            .cloned()
            .chain(self.intermediates.iter().map(|d| d.derived.clone()))
            .collect()
    }

    pub fn statement_set(&self) -> BTreeSet<Formula> {
        self.statements().into_iter().collect()
    }

    pub fn is_goal(&self) -> bool {
        self.intermediates
            .iter()
            .any(|d| d.derived == self.problem.conclusion)
    }

    pub fn key(&self) -> StateKey {
        StateKey::new(self.intermediates.iter().map(|d| d.derived.clone()))
    }

    /// Appends a justified step that derives a new statement.
    pub fn push(&mut self, step: Derivation, config: &EnumerationConfig) -> Result<(), KgError> {
        let available = self.statement_set();
        if available.contains(&step.derived) {
            return Err(KgError::InvalidState(format!("{} is already present", step.derived)));
        }
        if !justify(&step.derived, step.rule, &step.parents, &available, config) {
            return Err(KgError::InvalidState(format!("{step} is not justified")));
        }
        self.intermediates.push(step);
        Ok(())
    }

    /// The state extended by one step, without re-validation.
    pub fn extended(&self, step: Derivation) -> ProofState {
        let mut next = self.clone();
        next.intermediates.push(step);
        next
    }
}

fn inner_message(e: KgError) -> String {
    match e {
        KgError::InvalidState(m) => m,
        other => other.to_string(),
    }
}

/// Order-free identity of a proof state: its derived statements sorted by
/// canonical ascii rendering.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(Vec<String>);

impl StateKey {
    pub fn new<I: IntoIterator<Item = Formula>>(statements: I) -> StateKey {
        let mut rendered: Vec<String> = statements.into_iter().map(|f| f.ascii()).collect();
        rendered.sort();
        rendered.dedup();
        StateKey(rendered)
    }

    pub fn statements(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("|"))
    }
}

/// Limits on graph construction.
///
/// `max_nodes` caps non-goal states; goal states discovered while expanding
/// an admitted state are always recorded, so that every expanded state keeps
/// an exact distance. Reaching the cap sets [`KnowledgeGraph::truncated`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgBounds {
    pub max_nodes: usize,
    pub max_intermediates: usize,
}

impl Default for KgBounds {
    fn default() -> Self {
        KgBounds {
            max_nodes: 200_000,
            max_intermediates: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepCategory {
    Optimal,
    ValidNonOptimal,
    Invalid,
}

impl fmt::Display for StepCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepCategory::Optimal => "Optimal",
            StepCategory::ValidNonOptimal => "ValidNonOptimal",
            StepCategory::Invalid => "Invalid",
        })
    }
}

/// Verdict on a proposed next step. Distances are `None` when unreachable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepClassification {
    pub category: StepCategory,
    pub justified: bool,
    pub distance_before: Option<usize>,
    pub distance_after: Option<usize>,
}

impl StepClassification {
    pub fn is_optimal(&self) -> bool {
        self.category == StepCategory::Optimal
    }
}

impl fmt::Display for StepClassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.category {
            StepCategory::Invalid => write!(f, "Invalid"),
            c => write!(
                f,
                "{}, {}",
                c,
                if self.justified { "justified" } else { "unjustified" }
            ),
        }
    }
}

type FormulaId = u32;
type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct DerivationRecord {
    derived: FormulaId,
    rule: RuleId,
    parents: Vec<FormulaId>,
}

#[derive(Clone, Debug)]
struct Node {
    /// Derived statement ids, ascending.
    key: Box<[FormulaId]>,
    depth: usize,
    expanded: bool,
    goal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Edge {
    from: NodeId,
    to: NodeId,
    derivation: u32,
}

/// Read-only view of one annotated edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeView {
    pub from: StateKey,
    pub to: StateKey,
    pub derivation: Derivation,
}

#[derive(Default)]
struct Interner {
    formulas: Vec<Formula>,
    index: FxHashMap<Formula, FormulaId>,
}

impl Interner {
    fn intern(&mut self, f: Formula) -> FormulaId {
        if let Some(&id) = self.index.get(&f) {
            return id;
        }
        let id = self.formulas.len() as FormulaId;
        self.formulas.push(f.clone());
        self.index.insert(f, id);
        id
    }

    fn get(&self, f: &Formula) -> Option<FormulaId> {
        self.index.get(f).copied()
    }
}

/// All reachable proof states of one problem with annotated single-step edges.
pub struct KnowledgeGraph {
    problem: Arc<ProofProblem>,
    config: EnumerationConfig,
    bounds: KgBounds,
    interner: Interner,
    premise_ids: Vec<FormulaId>,
    conclusion_id: FormulaId,
    nodes: Vec<Node>,
    node_index: FxHashMap<Box<[FormulaId]>, NodeId>,
    derivations: Vec<DerivationRecord>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<u32>>,
    distances: Vec<Option<usize>>,
    truncated: bool,
}

/// Memoized rule applications over interned formulas.
struct Expander<'c> {
    config: &'c EnumerationConfig,
    derivation_index: FxHashMap<DerivationRecord, u32>,
    unary: FxHashMap<FormulaId, Vec<u32>>,
    binary: FxHashMap<(FormulaId, FormulaId), Vec<u32>>,
    ternary: FxHashMap<(FormulaId, FormulaId, FormulaId), Vec<u32>>,
}

impl<'c> Expander<'c> {
    fn record(
        &mut self,
        interner: &mut Interner,
        derivations: &mut Vec<DerivationRecord>,
        rule: RuleId,
        parents: &[FormulaId],
    ) -> Vec<u32> {
        let parent_formulas: Vec<Formula> = parents
            .iter()
            .map(|&p| interner.formulas[p as usize].clone())
            .collect();
        let refs: Vec<&Formula> = parent_formulas.iter().collect();
        let mut out = Vec::new();
        for derived in rules::derive_filtered(rule, &refs, self.config) {
            let rec = DerivationRecord {
                derived: interner.intern(derived),
                rule,
                parents: parents.to_vec(),
            };
            let id = *self.derivation_index.entry(rec.clone()).or_insert_with(|| {
                derivations.push(rec);
                (derivations.len() - 1) as u32
            });
            out.push(id);
        }
        out
    }

    /// Derivation ids available from `statements` (ids in display order).
    fn expand(
        &mut self,
        statements: &[FormulaId],
        interner: &mut Interner,
        derivations: &mut Vec<DerivationRecord>,
    ) -> Vec<u32> {
        let cd_selections = {
            let refs: Vec<&Formula> = statements.iter().map(|&id| &interner.formulas[id as usize]).collect();
            rules::parent_selections(RuleId::CD, &refs)
        };
        let mut out = Vec::new();
        for &s in statements {
            if !self.unary.contains_key(&s) {
                let mut ids = Vec::new();
                for rule in RuleId::ALL.into_iter().filter(|r| r.arity() == 1) {
                    ids.extend(self.record(interner, derivations, rule, &[s]));
                }
                self.unary.insert(s, ids);
            }
            out.extend_from_slice(&self.unary[&s]);
        }
        for &a in statements {
            for &b in statements {
                let key = (a, b);
                if !self.binary.contains_key(&key) {
                    let mut ids = Vec::new();
                    for rule in RuleId::ALL.into_iter().filter(|r| r.arity() == 2) {
                        if a == b && rule != RuleId::Conj {
                            continue;
                        }
                        ids.extend(self.record(interner, derivations, rule, &[a, b]));
                    }
                    self.binary.insert(key, ids);
                }
                out.extend_from_slice(&self.binary[&key]);
            }
        }
        for selection in cd_selections {
            let key = (
                statements[selection[0]],
                statements[selection[1]],
                statements[selection[2]],
            );
            if !self.ternary.contains_key(&key) {
                let ids = self.record(interner, derivations, RuleId::CD, &[key.0, key.1, key.2]);
                self.ternary.insert(key, ids);
            }
            out.extend_from_slice(&self.ternary[&key]);
        }
        out
    }
}

/// Breadth-first forward chaining from the empty state.
pub fn build_kg(problem: &ProofProblem, config: &EnumerationConfig, bounds: KgBounds) -> KnowledgeGraph {
    KnowledgeGraph::build(Arc::new(problem.clone()), config.clone(), bounds)
}

impl KnowledgeGraph {
    pub fn build(problem: Arc<ProofProblem>, config: EnumerationConfig, bounds: KgBounds) -> KnowledgeGraph {
        let mut interner = Interner::default();
        let premise_ids: Vec<FormulaId> = problem
            .premises
            .iter()
            .map(|p| interner.intern(p.clone()))
            .collect();
        let conclusion_id = interner.intern(problem.conclusion.clone());
        let mut kg = KnowledgeGraph {
            problem,
            config,
            bounds,
            interner,
            premise_ids,
            conclusion_id,
            nodes: Vec::new(),
            node_index: FxHashMap::default(),
            derivations: Vec::new(),
            edges: Vec::new(),
            out_edges: Vec::new(),
            distances: Vec::new(),
            truncated: false,
        };
        kg.add_node(Box::new([]), 0, false);
        kg.expand_all();
        kg.compute_distances();
        kg
    }

    fn add_node(&mut self, key: Box<[FormulaId]>, depth: usize, goal: bool) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            key: key.clone(),
            depth,
            expanded: false,
            goal,
        });
        self.node_index.insert(key, id);
        self.out_edges.push(Vec::new());
        id
    }

    fn expand_all(&mut self) {
        let config = self.config.clone();
        let mut expander = Expander {
            config: &config,
            derivation_index: FxHashMap::default(),
            unary: FxHashMap::default(),
            binary: FxHashMap::default(),
            ternary: FxHashMap::default(),
        };
        let mut queue: VecDeque<NodeId> = VecDeque::from([0]);
        while let Some(node) = queue.pop_front() {
            let (key, depth, goal) = {
                let n = &self.nodes[node as usize];
                (n.key.clone(), n.depth, n.goal)
            };
            if goal || depth >= self.bounds.max_intermediates {
                continue;
            }
            let statements: Vec<FormulaId> = self.premise_ids.iter().chain(key.iter()).copied().collect();
            let present: FxHashSet<FormulaId> = statements.iter().copied().collect();
            let derivation_ids = expander.expand(&statements, &mut self.interner, &mut self.derivations);
            let mut child: Vec<FormulaId> = Vec::with_capacity(key.len() + 1);
            for did in derivation_ids {
                let derived = self.derivations[did as usize].derived;
                if present.contains(&derived) {
                    continue;
                }
                child.clear();
                child.extend_from_slice(&key);
                let pos = child.binary_search(&derived).unwrap_err();
                child.insert(pos, derived);
                let target = match self.node_index.get(child.as_slice()) {
                    Some(&t) => t,
                    None => {
                        let is_goal = derived == self.conclusion_id;
                        if !is_goal && self.nodes.len() >= self.bounds.max_nodes {
                            self.truncated = true;
                            continue;
                        }
                        let t = self.add_node(child.as_slice().into(), depth + 1, is_goal);
                        queue.push_back(t);
                        t
                    }
                };
                let edge = self.edges.len() as u32;
                self.edges.push(Edge {
                    from: node,
                    to: target,
                    derivation: did,
                });
                self.out_edges[node as usize].push(edge);
            }
            self.nodes[node as usize].expanded = true;
        }
    }

    fn compute_distances(&mut self) {
        let mut incoming: Vec<Vec<NodeId>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            incoming[e.to as usize].push(e.from);
        }
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.goal {
                dist[i] = Some(0);
                queue.push_back(i);
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &u in &incoming[v] {
                if dist[u as usize].is_none() {
                    dist[u as usize] = Some(d + 1);
                    queue.push_back(u as usize);
                }
            }
        }
        self.distances = dist;
    }

    pub fn problem(&self) -> &Arc<ProofProblem> {
        &self.problem
    }

    pub fn config(&self) -> &EnumerationConfig {
        &self.config
    }

    pub fn bounds(&self) -> KgBounds {
        self.bounds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Set when the node cap stopped expansion from admitting new states.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn goal_reachable(&self) -> bool {
        self.distances[0].is_some()
    }

    /// `Err(GoalUnreachable)` when no goal state exists within the bounds.
    pub fn ensure_reachable(&self) -> Result<(), KgError> {
        if self.goal_reachable() {
            Ok(())
        } else {
            Err(KgError::GoalUnreachable)
        }
    }

    pub fn root_distance(&self) -> Option<usize> {
        self.distances[0]
    }

    pub fn root_state(&self) -> ProofState {
        ProofState::root(self.problem.clone())
    }

    fn formula(&self, id: FormulaId) -> &Formula {
        &self.interner.formulas[id as usize]
    }

    fn derivation(&self, id: u32) -> Derivation {
        let rec = &self.derivations[id as usize];
        Derivation::new(
            self.formula(rec.derived).clone(),
            rec.rule,
            rec.parents.iter().map(|&p| self.formula(p).clone()).collect(),
        )
    }

    fn state_key_of(&self, node: NodeId) -> StateKey {
        StateKey::new(self.nodes[node as usize].key.iter().map(|&f| self.formula(f).clone()))
    }

    fn lookup<'a, I>(&self, derived: I) -> Option<NodeId>
    where
        I: IntoIterator<Item = &'a Formula>,
    {
        let mut ids = Vec::new();
        for f in derived {
            ids.push(self.interner.get(f)?);
        }
        ids.sort_unstable();
        ids.dedup();
        self.node_index.get(ids.as_slice()).copied()
    }

    fn node_of(&self, state: &ProofState) -> Result<NodeId, KgError> {
        if state.problem().as_ref() != self.problem.as_ref() {
            return Err(KgError::UnknownState(format!(
                "{} (problem {} differs from graph problem {})",
                state.key(),
                state.problem().id,
                self.problem.id
            )));
        }
        self.lookup(state.intermediates().iter().map(|d| &d.derived))
            .ok_or_else(|| KgError::UnknownState(state.key().to_string()))
    }

    pub fn contains(&self, state: &ProofState) -> bool {
        self.node_of(state).is_ok()
    }

    /// Shortest edge count to a goal state; `Ok(None)` when none is reachable in the graph.
    pub fn distance(&self, state: &ProofState) -> Result<Option<usize>, KgError> {
        Ok(self.distances[self.node_of(state)? as usize])
    }

    /// Derivations available from `state`: the node's out-edges, or a fresh
    /// enumeration for states the build did not expand. A truncated build may
    /// have dropped children, so it always enumerates afresh.
    pub fn successors(&self, state: &ProofState) -> Result<Vec<Derivation>, KgError> {
        let node = self.node_of(state)?;
        let n = &self.nodes[node as usize];
        if n.goal {
            return Ok(Vec::new());
        }
        if !n.expanded || self.truncated {
            return Ok(rules::applicable_derivations(&state.statements(), &self.config));
        }
        Ok(self.out_edges[node as usize]
            .iter()
            .map(|&e| self.derivation(self.edges[e as usize].derivation))
            .collect())
    }

    /// Classify a proposed step from `state`.
    ///
    /// The category comes from the graph alone; `justified` checks the claimed
    /// rule and parents, so a step can be optimal yet unjustified.
    pub fn classify_step(
        &self,
        state: &ProofState,
        step: &Formula,
        rule: RuleId,
        parents: &[Formula],
    ) -> Result<StepClassification, KgError> {
        let node = self.node_of(state)?;
        let before = self.distances[node as usize];
        let justified = justify(step, rule, parents, &state.statement_set(), &self.config);
        let valid = self.successors(state)?.iter().any(|d| &d.derived == step);
        if !valid {
            return Ok(StepClassification {
                category: StepCategory::Invalid,
                justified,
                distance_before: before,
                distance_after: None,
            });
        }
        let after = self
            .lookup(state.intermediates().iter().map(|d| &d.derived).chain(std::iter::once(step)))
            .and_then(|child| self.distances[child as usize]);
        let optimal = matches!((before, after), (Some(b), Some(a)) if b >= 1 && a == b - 1);
        Ok(StepClassification {
            category: if optimal {
                StepCategory::Optimal
            } else {
                StepCategory::ValidNonOptimal
            },
            justified,
            distance_before: before,
            distance_after: after,
        })
    }

    /// Edges that reduce the distance by one, sorted by (rendered statement,
    /// rule name, rendered parents). The first entry is the canonical hint.
    pub fn optimal_steps(&self, state: &ProofState) -> Result<Vec<Derivation>, KgError> {
        let node = self.node_of(state)?;
        let d = match self.distances[node as usize] {
            Some(d) if d > 0 => d,
            _ => return Err(KgError::NoOptimalStep),
        };
        let mut steps: Vec<Derivation> = self.out_edges[node as usize]
            .iter()
            .map(|&e| self.edges[e as usize])
            .filter(|e| self.distances[e.to as usize] == Some(d - 1))
            .map(|e| self.derivation(e.derivation))
            .collect();
        steps.sort_by_cached_key(|s| {
            (
                s.derived.ascii(),
                s.rule.short_name(),
                s.parents.iter().map(Formula::ascii).collect::<Vec<_>>(),
            )
        });
        steps.dedup();
        if steps.is_empty() {
            return Err(KgError::NoOptimalStep);
        }
        Ok(steps)
    }

    pub fn hint(&self, state: &ProofState) -> Result<Derivation, KgError> {
        Ok(self.optimal_steps(state)?.remove(0))
    }

    /// Fewest edges from `state` to a state containing `target`; 0 if it is
    /// already present, `Ok(None)` if no such state is reachable in the graph.
    pub fn derivational_depth(&self, state: &ProofState, target: &Formula) -> Result<Option<usize>, KgError> {
        let start = self.node_of(state)?;
        if state.statement_set().contains(target) {
            return Ok(Some(0));
        }
        let Some(target_id) = self.interner.get(target) else {
            return Ok(None);
        };
        let mut seen = vec![false; self.nodes.len()];
        seen[start as usize] = true;
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            for &e in &self.out_edges[v as usize] {
                let to = self.edges[e as usize].to;
                if seen[to as usize] {
                    continue;
                }
                if self.nodes[to as usize].key.binary_search(&target_id).is_ok() {
                    return Ok(Some(d + 1));
                }
                seen[to as usize] = true;
                queue.push_back((to, d + 1));
            }
        }
        Ok(None)
    }

    /// Every edge, in construction order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeView> + '_ {
        self.edges.iter().map(|e| EdgeView {
            from: self.state_key_of(e.from),
            to: self.state_key_of(e.to),
            derivation: self.derivation(e.derivation),
        })
    }

    /// Keys of every node with its distance, in construction order.
    pub fn nodes(&self) -> impl Iterator<Item = (StateKey, Option<usize>)> + '_ {
        (0..self.nodes.len()).map(|i| (self.state_key_of(i as NodeId), self.distances[i]))
    }

    pub fn goal_keys(&self) -> BTreeSet<StateKey> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].goal)
            .map(|i| self.state_key_of(i as NodeId))
            .collect()
    }

    /// Reconstruct the ordered proof state of a node by walking edges back to the root.
    fn state_of(&self, node: NodeId, parents_of: &[Option<u32>]) -> ProofState {
        let mut chain = Vec::new();
        let mut cur = node;
        while let Some(e) = parents_of[cur as usize] {
            let edge = self.edges[e as usize];
            chain.push(self.derivation(edge.derivation));
            cur = edge.from;
        }
        chain.reverse();
        ProofState {
            problem: self.problem.clone(),
            intermediates: chain,
        }
    }

    /// One ordered proof state per node (via a first-discovered path), in
    /// construction order.
    pub fn states(&self) -> Vec<ProofState> {
        let spanning = self.spanning_edges();
        (0..self.nodes.len())
            .map(|i| self.state_of(i as NodeId, &spanning))
            .collect()
    }

    fn spanning_edges(&self) -> Vec<Option<u32>> {
        let mut parent = vec![None; self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if parent[e.to as usize].is_none() && e.to != 0 {
                parent[e.to as usize] = Some(i as u32);
            }
        }
        parent
    }

    pub fn export(&self) -> KgExport {
        let keys: Vec<StateKey> = (0..self.nodes.len()).map(|i| self.state_key_of(i as NodeId)).collect();
        KgExport {
            format_version: KG_FORMAT_VERSION,
            problem: (*self.problem).clone(),
            config: self.config.clone(),
            bounds: self.bounds,
            truncated: self.truncated,
            nodes: (0..self.nodes.len())
                .map(|i| ExportNode {
                    key: keys[i].to_string(),
                    statements: keys[i].statements().to_vec(),
                    distance: self.distances[i],
                    expanded: self.nodes[i].expanded,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| {
                    let d = self.derivation(e.derivation);
                    ExportEdge {
                        from: keys[e.from as usize].to_string(),
                        to: keys[e.to as usize].to_string(),
                        derived: d.derived,
                        rule: d.rule,
                        parents: d.parents,
                    }
                })
                .collect(),
        }
    }

    /// Rebuild a graph from an exported document, checking it for consistency.
    pub fn from_export(doc: KgExport) -> Result<KnowledgeGraph, KgError> {
        if doc.format_version != KG_FORMAT_VERSION {
            return Err(KgError::InvalidExport(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        doc.problem.validate()?;
        let mut interner = Interner::default();
        let premise_ids: Vec<FormulaId> = doc.problem.premises.iter().map(|p| interner.intern(p.clone())).collect();
        let conclusion_id = interner.intern(doc.problem.conclusion.clone());
        let mut kg = KnowledgeGraph {
            problem: Arc::new(doc.problem),
            config: doc.config,
            bounds: doc.bounds,
            interner,
            premise_ids,
            conclusion_id,
            nodes: Vec::new(),
            node_index: FxHashMap::default(),
            derivations: Vec::new(),
            edges: Vec::new(),
            out_edges: Vec::new(),
            distances: Vec::new(),
            truncated: doc.truncated,
        };
        let mut by_key: HashMap<String, NodeId> = HashMap::new();
        for node in &doc.nodes {
            let mut ids = Vec::new();
            for s in &node.statements {
                let f = crate::formula::parse(s).map_err(|e| KgError::InvalidExport(format!("node {}: {e}", node.key)))?;
                ids.push(kg.interner.intern(f));
            }
            ids.sort_unstable();
            let goal = ids.contains(&kg.conclusion_id);
            let depth = ids.len();
            let id = kg.add_node(ids.into_boxed_slice(), depth, goal);
            kg.nodes[id as usize].expanded = node.expanded;
            if by_key.insert(node.key.clone(), id).is_some() {
                return Err(KgError::InvalidExport(format!("duplicate node {}", node.key)));
            }
        }
        if kg.nodes.first().is_none_or(|n| !n.key.is_empty()) {
            return Err(KgError::InvalidExport("first node must be the empty root".into()));
        }
        let mut derivation_index: FxHashMap<DerivationRecord, u32> = FxHashMap::default();
        for edge in doc.edges {
            let endpoint = |k: &str| {
                by_key
                    .get(k)
                    .copied()
                    .ok_or_else(|| KgError::InvalidExport(format!("edge references unknown node {k}")))
            };
            let (from, to) = (endpoint(&edge.from)?, endpoint(&edge.to)?);
            let rec = DerivationRecord {
                derived: kg.interner.intern(edge.derived),
                rule: edge.rule,
                parents: edge.parents.into_iter().map(|p| kg.interner.intern(p)).collect(),
            };
            let mut expected = kg.nodes[from as usize].key.to_vec();
            expected.push(rec.derived);
            expected.sort_unstable();
            if expected.as_slice() != &*kg.nodes[to as usize].key {
                return Err(KgError::InvalidExport(format!(
                    "edge {} -> {} does not add exactly its derived statement",
                    edge.from, edge.to
                )));
            }
            let did = *derivation_index.entry(rec.clone()).or_insert_with(|| {
                kg.derivations.push(rec);
                (kg.derivations.len() - 1) as u32
            });
            let eid = kg.edges.len() as u32;
            kg.edges.push(Edge {
                from,
                to,
                derivation: did,
            });
            kg.out_edges[from as usize].push(eid);
        }
        kg.compute_distances();
        for (node, recomputed) in doc.nodes.iter().zip(&kg.distances) {
            if node.distance != *recomputed {
                return Err(KgError::InvalidExport(format!(
                    "node {} records distance {:?}, edges give {:?}",
                    node.key, node.distance, recomputed
                )));
            }
        }
        Ok(kg)
    }
}

/// Serializable form of a [`KnowledgeGraph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgExport {
    pub format_version: u32,
    pub problem: ProofProblem,
    pub config: EnumerationConfig,
    pub bounds: KgBounds,
    pub truncated: bool,
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportNode {
    /// Sorted canonical renderings joined by `|`; the root is `""`.
    pub key: String,
    pub statements: Vec<String>,
    pub distance: Option<usize>,
    pub expanded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportEdge {
    pub from: String,
    pub to: String,
    pub derived: Formula,
    pub rule: RuleId,
    pub parents: Vec<Formula>,
}
