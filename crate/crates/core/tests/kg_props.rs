mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{f, oracle_equivalence, random_problem, tt_entails};
use prooftutor::{build_kg, Derivation, EnumerationConfig, KgBounds, KnowledgeGraph, ProofProblem, ProofState, RuleId, StepCategory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(p: &ProofProblem) -> EnumerationConfig {
    let mut c = p.enumeration_config();
    c.max_derived_complexity = 3.0;
    c.rewrite_depth_limit = 1;
    c
}

fn random_graphs(seed: u64, n: usize) -> Vec<KnowledgeGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (premises, conclusion) = random_problem(&mut rng);
            let p = Arc::new(ProofProblem::new(format!("g{i}"), premises, conclusion, 3).unwrap());
            let cfg = small(&p);
            KnowledgeGraph::build(p, cfg, KgBounds { max_nodes: 3000, max_intermediates: 3 })
        })
        .collect()
}

fn worked_problem() -> ProofProblem {
    ProofProblem::new(
        "worked",
        vec![f("((~K + L) > (M * N))"), f("(K > O)"), f("~O")],
        f("N"),
        4,
    )
    .unwrap()
}

#[test]
fn classification_agrees_with_brute_force() {
    let agreement = oracle_equivalence(11, 12, 6, 12);
    assert!(agreement.mismatches.is_empty(), "{:#?}", agreement.mismatches);
    assert!(agreement.pairs > 400, "only {} pairs", agreement.pairs);
}

#[test]
fn distances_are_consistent() {
    for kg in random_graphs(3, 15) {
        for state in kg.states() {
            let Some(k) = kg.distance(&state).unwrap() else { continue };
            if k == 0 {
                assert!(state.is_goal());
                continue;
            }
            let succ: Vec<Option<usize>> = kg
                .successors(&state)
                .unwrap()
                .into_iter()
                .filter_map(|d| {
                    let next = state.extended(d);
                    kg.contains(&next).then(|| kg.distance(&next).unwrap())
                })
                .collect();
            assert!(succ.contains(&Some(k - 1)), "{} at {k}", state.key());
            assert!(succ.iter().flatten().all(|&d| d + 1 >= k));
        }
    }
}

#[test]
fn every_reachable_statement_follows_from_the_premises() {
    for kg in random_graphs(5, 10) {
        let premises = kg.problem().premises.clone();
        let mut checked = BTreeSet::new();
        for state in kg.states() {
            for d in state.intermediates() {
                if checked.insert(d.derived.clone()) {
                    assert!(tt_entails(&premises, &d.derived), "{} in {}", d.derived, state.key());
                }
            }
        }
    }
}

#[test]
fn building_twice_is_identical() {
    let a = random_graphs(9, 6);
    let b = random_graphs(9, 6);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.export(), y.export());
        for state in x.states().into_iter().take(50) {
            assert_eq!(x.optimal_steps(&state), y.optimal_steps(&state));
        }
    }
}

#[test]
fn goal_keys_are_exactly_states_with_the_conclusion() {
    for kg in random_graphs(13, 8) {
        let conclusion = kg.problem().conclusion.ascii();
        for (key, distance) in kg.nodes() {
            let has = key.statements().contains(&conclusion);
            assert_eq!(kg.goal_keys().contains(&key), has);
            assert_eq!(distance == Some(0), has);
        }
    }
}

#[test]
fn worked_example_graph() {
    let problem = worked_problem();
    let kg = build_kg(&problem, &problem.enumeration_config(), KgBounds::default());
    let root = kg.root_state();
    assert_eq!(kg.root_distance(), Some(4));

    let hints = kg.optimal_steps(&root).unwrap();
    assert_eq!(hints[0], Derivation::new(f("~K"), RuleId::MT, vec![f("(K > O)"), f("~O")]));
    assert!(hints.iter().all(|h| h.derived == f("~K")));

    assert_eq!(kg.derivational_depth(&root, &f("~K")).unwrap(), Some(1));
    assert_eq!(kg.derivational_depth(&root, &f("(M * N)")).unwrap(), Some(3));

    let cfg = kg.config().clone();
    let state = ProofState::new(
        kg.problem().clone(),
        vec![
            Derivation::new(f("~K"), RuleId::MT, vec![f("(K > O)"), f("~O")]),
            Derivation::new(f("(~K + L)"), RuleId::Add, vec![f("~K")]),
            Derivation::new(f("(M * N)"), RuleId::MP, vec![f("((~K + L) > (M * N))"), f("(~K + L)")]),
        ],
        &cfg,
    )
    .unwrap();
    assert_eq!(kg.distance(&state).unwrap(), Some(1));
    let c = kg.classify_step(&state, &f("N"), RuleId::Simp, &[f("(M * N)")]).unwrap();
    assert_eq!(c.category, StepCategory::Optimal);
    assert!(c.justified);

    // (M ∨ M) would need M derived first.
    let c = kg.classify_step(&state, &f("(M + M)"), RuleId::Add, &[f("M")]).unwrap();
    assert_eq!(c.category, StepCategory::Invalid);
}

#[test]
fn misattributed_rule_is_flagged() {
    let problem = ProofProblem::new(
        "chain",
        vec![f("((S > D) + I)"), f("((~S + Q) > Y)"), f("~D"), f("(~D > ~I)")],
        f("Y"),
        5,
    )
    .unwrap();
    let mut cfg = problem.enumeration_config();
    cfg.max_derived_complexity = 4.0;
    cfg.rewrite_depth_limit = 1;
    let kg = build_kg(&problem, &cfg, KgBounds { max_nodes: 20_000, max_intermediates: 4 });
    let root = kg.root_state();
    let claimed = kg.classify_step(&root, &f("~I"), RuleId::MT, &[f("(~D > ~I)"), f("~D")]).unwrap();
    assert!(!claimed.justified);
    assert_ne!(claimed.category, StepCategory::Invalid);
    let corrected = kg.classify_step(&root, &f("~I"), RuleId::MP, &[f("(~D > ~I)"), f("~D")]).unwrap();
    assert!(corrected.justified);
    assert_eq!(corrected.category, claimed.category);
}

#[test]
fn forced_truncation() {
    let problem = worked_problem();
    let kg = build_kg(&problem, &problem.enumeration_config(), KgBounds { max_nodes: 10, max_intermediates: 12 });
    assert!(kg.truncated());
}
