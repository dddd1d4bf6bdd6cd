mod common;

use std::collections::BTreeMap;

use common::{default_score, f, formula};
use num_rational::Rational64;
use proptest::prelude::*;
use prooftutor::metrics::report::build_report;
use prooftutor::metrics::{
    bucket_report, default_bucket_edges, learning_gain, step_complexity, unique_improvement_count, ComplexityConstants,
    PipelineKind, PipelineResult,
};
use prooftutor::{Formula, RuleId};

fn result<S: Copy>(id: &str, kind: PipelineKind, pre: bool, post: bool, c: S) -> PipelineResult<S> {
    PipelineResult {
        state_id: id.into(),
        pipeline: kind,
        pre_correct: pre,
        post_correct: post,
        predicted_step: None,
        tutor_rule_predicted: Some(RuleId::MP),
        optimal_rule: RuleId::MP,
        optimal_step_complexity: c,
    }
}

#[test]
fn complexity_ordering_with_defaults() {
    let k = ComplexityConstants::<f64>::default();
    let (a, b, c) = (
        step_complexity(&f("F"), &k),
        step_complexity(&f("A + B"), &k),
        step_complexity(&f("A > (B + C)"), &k),
    );
    assert!(a < b && b < c);
    assert!(a.abs() < 1e-9 && (b - 1.0).abs() < 1e-9 && (c - 3.0).abs() < 1e-9);
    let exact = ComplexityConstants::<Rational64>::default();
    assert_eq!(step_complexity(&f("A > (B + C)"), &exact), Rational64::from_integer(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn complexity_matches_oracle(g in formula(4, 5)) {
        let k = ComplexityConstants::<f64>::default();
        prop_assert!((step_complexity(&g, &k) - default_score(&g)).abs() < 1e-9);
    }

    #[test]
    fn wrapping_increases_complexity(g in formula(4, 4), h in formula(4, 2), op in 0..5u8) {
        let k = ComplexityConstants::<Rational64>::default();
        let wrapped = match op {
            0 => Formula::not(g.clone()),
            1 => Formula::and(g.clone(), h),
            2 => Formula::or(h, g.clone()),
            3 => Formula::implies(g.clone(), h),
            _ => Formula::iff(h, g.clone()),
        };
        prop_assert!(step_complexity(&wrapped, &k) > step_complexity(&g, &k));
    }

    #[test]
    fn learning_gain_is_antisymmetric(a in 0i64..10_000, b in 0i64..10_000) {
        let (a, b) = (Rational64::new(a, 100), Rational64::new(b, 100));
        prop_assert_eq!(learning_gain(a, b), -learning_gain(b, a));
    }

    #[test]
    fn uic_is_bounded(outcomes in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..40)) {
        let judge: Vec<_> = outcomes.iter().enumerate()
            .map(|(i, (j, _))| result(&format!("s{i}"), PipelineKind::Judge, false, *j, 1.0)).collect();
        let teacher: Vec<_> = outcomes.iter().enumerate()
            .map(|(i, (_, t))| result(&format!("s{i}"), PipelineKind::Teacher, false, *t, 1.0)).collect();
        let u = unique_improvement_count(&judge, &teacher, &ComplexityConstants::default()).unwrap();
        let hand = outcomes.iter().filter(|(j, t)| *j && !*t).count();
        prop_assert_eq!(u.count, hand);
        prop_assert!(u.count <= outcomes.iter().filter(|(_, t)| !*t).count());
        prop_assert!(u.count <= outcomes.iter().filter(|(j, _)| *j).count());
    }

    #[test]
    fn buckets_recombine_to_global_accuracy(
        rows in proptest::collection::vec((0i64..80, any::<bool>()), 1..60),
    ) {
        let results: Vec<_> = rows.iter().enumerate()
            .map(|(i, (c, ok))| result(&format!("s{i}"), PipelineKind::Tutor, false, *ok, Rational64::new(*c, 10)))
            .collect();
        let table = bucket_report(&results, &default_bucket_edges()).unwrap();
        let hundred = Rational64::from_integer(100);
        for b in &table {
            prop_assert!(b.post_accuracy >= Rational64::from_integer(0) && b.post_accuracy <= hundred);
        }
        let n: usize = table.iter().map(|b| b.n).sum();
        prop_assert_eq!(n, results.len());
        let weighted = table.iter().map(|b| b.post_accuracy * Rational64::from_integer(b.n as i64)).sum::<Rational64>()
            / Rational64::from_integer(n as i64);
        let global = Rational64::new(100 * rows.iter().filter(|(_, ok)| *ok).count() as i64, rows.len() as i64);
        prop_assert_eq!(weighted, global);
    }
}

fn four_pipelines() -> BTreeMap<String, Vec<PipelineResult<f64>>> {
    // Eight states; the student starts right on s0 and s1 only.
    let pre = |i: usize| i < 2;
    let posts: [(PipelineKind, [bool; 8]); 4] = [
        (PipelineKind::Tutor, [true, true, true, false, false, false, false, false]),
        (PipelineKind::Teacher, [true, true, true, true, false, false, false, false]),
        (PipelineKind::Judge, [true, true, true, true, true, true, false, false]),
        (PipelineKind::TeacherJudge, [true, false, true, true, true, false, false, false]),
    ];
    let mut rs = Vec::new();
    for (kind, post) in posts {
        for (i, &ok) in post.iter().enumerate() {
            let mut r = result(&format!("s{i}"), kind, pre(i), ok, 1.0 + i as f64);
            if kind == PipelineKind::Tutor {
                r.tutor_rule_predicted = Some(if i % 4 == 0 { RuleId::MT } else { RuleId::MP });
            }
            if kind == PipelineKind::Teacher && !ok {
                r.predicted_step = Some(f("A > (B + C)"));
            }
            rs.push(r);
        }
    }
    [("model-a".to_string(), rs)].into()
}

#[test]
fn report_matches_hand_counts() {
    let rep = build_report(&four_pipelines(), &default_bucket_edges(), &ComplexityConstants::default()).unwrap();
    let row = &rep.rows[0];
    assert_eq!(row.states, 8);
    assert_eq!(row.pre, Some(25.0));
    assert_eq!(row.rule_accuracy, Some(75.0));
    let post = |k| row.pipelines[&k].post;
    assert_eq!(post(PipelineKind::Tutor), 37.5);
    assert_eq!(post(PipelineKind::Teacher), 50.0);
    assert_eq!(post(PipelineKind::Judge), 75.0);
    assert_eq!(post(PipelineKind::TeacherJudge), 50.0);
    assert_eq!(row.pipelines[&PipelineKind::Judge].delta, Some(50.0));
    assert_eq!(row.pipelines[&PipelineKind::Tutor].delta, Some(12.5));
    assert_eq!(row.best, Some((PipelineKind::Judge, 50.0)));
    // Improved Tutor states: s2 only (complexity 3).
    assert_eq!(row.pipelines[&PipelineKind::Tutor].mean_complexity, Some(3.0));
    // Judge improves s2..s5: complexities 3, 4, 5, 6.
    assert_eq!(row.pipelines[&PipelineKind::Judge].mean_complexity, Some(4.5));
    // Judge succeeds where Teacher fails on s4 and s5.
    assert_eq!(row.uic, Some(2));
    // Teacher predicted (A > (B + C)) = 3.0 there against optimal 5.0 and 6.0.
    assert_eq!(row.gap, Some(-2.5));
}

#[test]
fn report_csv_and_json_shapes() {
    let rep = build_report(&four_pipelines(), &default_bucket_edges(), &ComplexityConstants::default()).unwrap();
    let csv = rep.to_csv();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for col in ["Pre", "Rule Acc.", "Post Judge", "Δ Judge (pp)", "Δ Best (pp)", "Mean Complexity Judge", "UIC", "Gap"] {
        assert!(header.contains(&col), "missing {col}");
    }
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), header.len());
    let at = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(at("Pre"), "25.00");
    assert_eq!(at("Δ Best (pp)"), "50.00");
    assert_eq!(at("Best Pipeline"), "Judge");
    assert_eq!(at("UIC"), "2");

    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(json["rows"][0]["uic"], 2);
    assert_eq!(json["rows"][0]["pipelines"]["Judge"]["post"], 75.0);
    assert_eq!(json["buckets"].as_array().unwrap().len(), 4);

    let buckets = rep.buckets_csv();
    assert!(buckets.starts_with("Model,Pipeline,Complexity,N,Post"));
    assert!(buckets.contains("model-a,Judge,<2.5,2,100.00"));
}

#[test]
fn report_is_exact_over_rationals() {
    let by: BTreeMap<String, Vec<PipelineResult<Rational64>>> = [(
        "m".to_string(),
        (0..3)
            .map(|i| result(&format!("s{i}"), PipelineKind::Teacher, false, i == 0, Rational64::new(5, 2)))
            .collect(),
    )]
    .into();
    let rep = build_report(&by, &default_bucket_edges(), &ComplexityConstants::default()).unwrap();
    let row = &rep.rows[0];
    assert_eq!(row.pipelines[&PipelineKind::Teacher].post, Rational64::new(100, 3));
    assert_eq!(row.uic, None);
    assert_eq!(row.rule_accuracy, None);
}
