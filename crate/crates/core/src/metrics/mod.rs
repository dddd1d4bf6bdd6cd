//! Evaluation metrics: learning gain, tutor rule accuracy, complexity of
//! improved states, unique improvement count and complexity buckets.

pub mod complexity;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::rules::RuleId;
use crate::scalar::{mean, Scalar};

pub use complexity::{step_complexity, ComplexityConstants};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("result {0} has no tutor rule prediction")]
    MissingRulePrediction(String),
    #[error("judge and teacher results cover different states")]
    MisalignedInputs,
    #[error("bucket edges must be strictly increasing")]
    UnsortedEdges,
    #[error("invalid complexity constants: {0}")]
    InvalidConstants(String),
}

/// Feedback pipeline variants.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum PipelineKind {
    Tutor,
    Teacher,
    Judge,
    /// Judge verifying Teacher feedback instead of Tutor feedback.
    TeacherJudge,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::Tutor,
        PipelineKind::Teacher,
        PipelineKind::Judge,
        PipelineKind::TeacherJudge,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::Tutor => "Tutor",
            PipelineKind::Teacher => "Teacher",
            PipelineKind::Judge => "Judge",
            PipelineKind::TeacherJudge => "Teacher+Judge",
        }
    }

    pub fn parse(text: &str) -> Option<PipelineKind> {
        match text.trim().to_ascii_lowercase().as_str() {
            "tutor" => Some(PipelineKind::Tutor),
            "teacher" => Some(PipelineKind::Teacher),
            "judge" => Some(PipelineKind::Judge),
            "teacher-judge" | "teacher+judge" | "teacherjudge" => Some(PipelineKind::TeacherJudge),
            _ => None,
        }
    }
}

/// Per-state outcome of one pipeline run, distilled for aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult<S> {
    pub state_id: String,
    pub pipeline: PipelineKind,
    pub pre_correct: bool,
    pub post_correct: bool,
    pub predicted_step: Option<Formula>,
    pub tutor_rule_predicted: Option<RuleId>,
    pub optimal_rule: RuleId,
    pub optimal_step_complexity: S,
}

impl<S: Scalar> PipelineResult<S> {
    pub fn improved(&self) -> bool {
        !self.pre_correct && self.post_correct
    }
}

/// Percentage of `hits` over `total`; `None` when `total` is 0.
pub fn percentage<S: Scalar>(hits: usize, total: usize) -> Option<S> {
    (total > 0).then(|| S::from_count(hits) * S::from_count(100) / S::from_count(total))
}

/// Post minus pre, in percentage points.
pub fn learning_gain<S: Scalar>(pre_accuracy: S, post_accuracy: S) -> S {
    post_accuracy - pre_accuracy
}

/// Share of results whose tutor-predicted rule equals the optimal rule, ×100.
pub fn rule_accuracy<S: Scalar>(results: &[PipelineResult<S>]) -> Result<S, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut hits = 0;
    for r in results {
        match r.tutor_rule_predicted {
            Some(rule) if rule == r.optimal_rule => hits += 1,
            Some(_) => {}
            None => return Err(MetricsError::MissingRulePrediction(r.state_id.clone())),
        }
    }
    Ok(percentage(hits, results.len()).unwrap())
}

/// Mean optimal-step complexity over results that went from wrong to right.
pub fn mean_improved_complexity<S: Scalar>(results: &[PipelineResult<S>]) -> Option<S> {
    mean(
        results
            .iter()
            .filter(|r| r.improved())
            .map(|r| r.optimal_step_complexity),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniqueImprovement<S> {
    /// States where the Judge pipeline ends correct and the Teacher pipeline does not.
    pub count: usize,
    /// Mean of predicted minus optimal complexity of the Teacher-pipeline
    /// predictions on those states; `None` if there are none.
    pub mean_gap: Option<S>,
    pub state_ids: Vec<String>,
}

pub fn unique_improvement_count<S: Scalar>(
    judge: &[PipelineResult<S>],
    teacher: &[PipelineResult<S>],
    constants: &ComplexityConstants<S>,
) -> Result<UniqueImprovement<S>, MetricsError> {
    fn multiset<S>(rs: &[PipelineResult<S>]) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for r in rs {
            *m.entry(r.state_id.as_str()).or_default() += 1;
        }
        m
    }
    if multiset(judge) != multiset(teacher) {
        return Err(MetricsError::MisalignedInputs);
    }
    let judge_ok: BTreeSet<&str> = judge
        .iter()
        .filter(|r| r.post_correct)
        .map(|r| r.state_id.as_str())
        .collect();
    let mut ids = BTreeSet::new();
    let mut gaps = Vec::new();
    for t in teacher.iter().filter(|t| !t.post_correct) {
        if judge_ok.contains(t.state_id.as_str()) && ids.insert(t.state_id.clone()) {
            if let Some(predicted) = &t.predicted_step {
                gaps.push(step_complexity(predicted, constants) - t.optimal_step_complexity);
            }
        }
    }
    Ok(UniqueImprovement {
        count: ids.len(),
        mean_gap: mean(gaps),
        state_ids: ids.into_iter().collect(),
    })
}

/// One row of a complexity bucket table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketRow<S> {
    /// Inclusive lower edge, `None` for the open first bucket.
    pub lower: Option<S>,
    /// Exclusive upper edge, `None` for the open last bucket.
    pub upper: Option<S>,
    pub n: usize,
    pub post_accuracy: S,
}

impl<S: Scalar> BucketRow<S> {
    pub fn label(&self) -> String {
        match (self.lower, self.upper) {
            (None, Some(u)) => format!("<{}", u.as_f64()),
            (Some(l), Some(u)) => format!("[{}, {})", l.as_f64(), u.as_f64()),
            (Some(l), None) => format!(">={}", l.as_f64()),
            (None, None) => "all".into(),
        }
    }
}

/// Default bucket edges for proof-state complexity.
pub fn default_bucket_edges<S: Scalar>() -> Vec<S> {
    vec![S::ratio(5, 2), S::ratio(4, 1), S::ratio(9, 2)]
}

/// Partition by optimal-step complexity and report post accuracy per
/// populated bucket. Buckets are `(-inf, e0)`, `[e0, e1)`, ..., `[e_last, inf)`.
pub fn bucket_report<S: Scalar>(
    results: &[PipelineResult<S>],
    edges: &[S],
) -> Result<Vec<BucketRow<S>>, MetricsError> {
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::UnsortedEdges);
    }
    let mut counts = vec![(0usize, 0usize); edges.len() + 1];
    for r in results {
        let bucket = edges
            .iter()
            .take_while(|e| !(r.optimal_step_complexity < **e))
            .count();
        counts[bucket].0 += 1;
        if r.post_correct {
            counts[bucket].1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(i, (n, hits))| BucketRow {
            lower: i.checked_sub(1).map(|j| edges[j]),
            upper: edges.get(i).copied(),
            n,
            post_accuracy: percentage(hits, n).unwrap(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn result(id: &str, pre: bool, post: bool, c: f64) -> PipelineResult<f64> {
        PipelineResult {
            state_id: id.into(),
            pipeline: PipelineKind::Judge,
            pre_correct: pre,
            post_correct: post,
            predicted_step: None,
            tutor_rule_predicted: None,
            optimal_rule: RuleId::MP,
            optimal_step_complexity: c,
        }
    }

    #[test]
    fn learning_gain_arithmetic() {
        assert!((learning_gain(21.31, 75.38) - 54.07f64).abs() < 0.005);
        assert!((learning_gain(52.52, 73.92) - 21.40f64).abs() < 0.005);
        assert_eq!(learning_gain(40.0, 40.0), 0.0);
        let exact = learning_gain(Rational64::new(2131, 100), Rational64::new(7538, 100));
        assert_eq!(exact, Rational64::new(5407, 100));
    }

    #[test]
    fn rule_accuracy_counts() {
        let mk = |hit: bool| PipelineResult {
            tutor_rule_predicted: Some(if hit { RuleId::MP } else { RuleId::MT }),
            ..result("s", false, false, 1.0)
        };
        assert_eq!(rule_accuracy(&[mk(true), mk(true)]).unwrap(), 100.0);
        assert_eq!(rule_accuracy(&[mk(true), mk(false), mk(true), mk(false)]).unwrap(), 50.0);
        let batch: Vec<_> = (0..10).map(|i| mk(i < 7)).collect();
        assert!((rule_accuracy(&batch).unwrap() - 70.0).abs() < 1e-12);
        assert_eq!(rule_accuracy::<f64>(&[]), Err(MetricsError::EmptyInput));
        assert!(matches!(
            rule_accuracy(&[result("x", false, false, 0.0)]),
            Err(MetricsError::MissingRulePrediction(_))
        ));
    }

    #[test]
    fn improved_complexity_mean() {
        assert_eq!(mean_improved_complexity(&[result("a", false, true, 3.0)]), Some(3.0));
        assert_eq!(mean_improved_complexity(&[result("a", true, true, 3.0)]), None);
        let rs = [
            result("a", false, true, 2.0),
            result("b", false, true, 4.0),
            result("c", false, false, 9.0),
        ];
        assert_eq!(mean_improved_complexity(&rs), Some(3.0));
    }

    #[test]
    fn unique_improvements() {
        let k = ComplexityConstants::default();
        let judge = [
            result("a", false, true, 1.0),
            result("b", false, true, 1.0),
            result("c", false, false, 1.0),
        ];
        let teacher = [
            result("a", false, false, 1.0),
            result("b", false, false, 1.0),
            result("c", false, false, 1.0),
        ];
        let uic = unique_improvement_count(&judge, &teacher, &k).unwrap();
        assert_eq!(uic.count, 2);
        assert_eq!(uic.state_ids, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(unique_improvement_count(&judge, &judge, &k).unwrap().count, 0);
        let other = [result("z", false, false, 1.0)];
        assert_eq!(
            unique_improvement_count(&judge, &other, &k),
            Err(MetricsError::MisalignedInputs)
        );
    }

    #[test]
    fn unique_improvement_gap() {
        let k = ComplexityConstants::default();
        let judge = [result("a", false, true, 1.0)];
        let mut t = result("a", false, false, 1.0);
        t.predicted_step = Some(crate::formula::parse("A > (B + C)").unwrap());
        let uic = unique_improvement_count(&judge, &[t], &k).unwrap();
        assert_eq!(uic.mean_gap, Some(2.0));
    }

    #[test]
    fn buckets() {
        let edges = default_bucket_edges::<f64>();
        assert!(bucket_report::<f64>(&[], &edges).unwrap().is_empty());
        let low = [result("a", false, true, 1.0), result("b", false, false, 2.0)];
        let rows = bucket_report(&low, &edges).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 2);
        assert_eq!(rows[0].post_accuracy, 50.0);
        assert_eq!(rows[0].label(), "<2.5");

        let mixed = [
            result("a", false, true, 1.0),
            result("b", false, true, 3.0),
            result("c", false, false, 3.5),
            result("d", false, true, 4.0),
            result("e", false, false, 4.49),
            result("f", false, false, 4.5),
            result("g", false, true, 7.0),
        ];
        let rows = bucket_report(&mixed, &edges).unwrap();
        let shape: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.post_accuracy)).collect();
        assert_eq!(shape, vec![(1, 100.0), (2, 50.0), (2, 50.0), (2, 50.0)]);
        assert!(bucket_report(&mixed, &[3.0, 2.0]).is_err());
    }
}
