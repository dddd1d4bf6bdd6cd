//! Per-model summary tables: accuracy before and after each pipeline, gains,
//! complexity of improved states, unique improvements, and bucket tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::scalar::Scalar;

use super::{
    bucket_report, learning_gain, mean_improved_complexity, percentage, rule_accuracy, unique_improvement_count,
    BucketRow, ComplexityConstants, MetricsError, PipelineKind, PipelineResult,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineColumns<S> {
    pub n: usize,
    pub post: S,
    /// Post minus the model's Pre.
    pub delta: Option<S>,
    pub mean_complexity: Option<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow<S> {
    pub model: String,
    /// Distinct states seen across all pipelines.
    pub states: usize,
    /// Student accuracy before feedback, one vote per state.
    pub pre: Option<S>,
    /// Tutor rule accuracy over Tutor-pipeline results.
    pub rule_accuracy: Option<S>,
    pub pipelines: BTreeMap<PipelineKind, PipelineColumns<S>>,
    /// Pipeline with the highest Post and its delta.
    pub best: Option<(PipelineKind, S)>,
    /// Needs both Judge and Teacher results.
    pub uic: Option<usize>,
    pub gap: Option<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketTable<S> {
    pub model: String,
    pub pipeline: PipelineKind,
    pub rows: Vec<BucketRow<S>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report<S> {
    pub rows: Vec<ModelRow<S>>,
    pub buckets: Vec<BucketTable<S>>,
}

fn of_kind<S: Scalar>(results: &[PipelineResult<S>], kind: PipelineKind) -> Vec<PipelineResult<S>> {
    results.iter().filter(|r| r.pipeline == kind).cloned().collect()
}

/// Judge and Teacher results restricted to the states both cover.
fn aligned<S: Scalar>(judge: Vec<PipelineResult<S>>, teacher: Vec<PipelineResult<S>>) -> (Vec<PipelineResult<S>>, Vec<PipelineResult<S>>) {
    let ids = |rs: &[PipelineResult<S>]| rs.iter().map(|r| r.state_id.clone()).collect::<BTreeSet<_>>();
    let common: BTreeSet<String> = ids(&judge).intersection(&ids(&teacher)).cloned().collect();
    let keep = |rs: Vec<PipelineResult<S>>| {
        let mut seen = BTreeSet::new();
        rs.into_iter()
            .filter(|r| common.contains(&r.state_id) && seen.insert(r.state_id.clone()))
            .collect::<Vec<_>>()
    };
    (keep(judge), keep(teacher))
}

pub fn model_row<S: Scalar>(
    model: &str,
    results: &[PipelineResult<S>],
    constants: &ComplexityConstants<S>,
) -> Result<ModelRow<S>, MetricsError> {
    let mut pre_votes: BTreeMap<&str, bool> = BTreeMap::new();
    for r in results {
        pre_votes.entry(r.state_id.as_str()).or_insert(r.pre_correct);
    }
    let pre = percentage(pre_votes.values().filter(|&&ok| ok).count(), pre_votes.len());

    let tutor: Vec<_> = of_kind(results, PipelineKind::Tutor)
        .into_iter()
        .filter(|r| r.tutor_rule_predicted.is_some())
        .collect();
    let rule_acc = if tutor.is_empty() { None } else { Some(rule_accuracy(&tutor)?) };

    let mut pipelines = BTreeMap::new();
    for kind in PipelineKind::ALL {
        let rs = of_kind(results, kind);
        let Some(post) = percentage(rs.iter().filter(|r| r.post_correct).count(), rs.len()) else {
            continue;
        };
        pipelines.insert(
            kind,
            PipelineColumns {
                n: rs.len(),
                post,
                delta: pre.map(|p| learning_gain(p, post)),
                mean_complexity: mean_improved_complexity(&rs),
            },
        );
    }
    let best = pipelines
        .iter()
        .filter_map(|(&k, c)| c.delta.map(|d| (k, c.post, d)))
        .fold(None, |best: Option<(PipelineKind, S, S)>, cur| match best {
            Some(b) if !(cur.1 > b.1) => Some(b),
            _ => Some(cur),
        })
        .map(|(k, _, d)| (k, d));

    let judge = of_kind(results, PipelineKind::Judge);
    let teacher = of_kind(results, PipelineKind::Teacher);
    let (uic, gap) = if judge.is_empty() || teacher.is_empty() {
        (None, None)
    } else {
        let (j, t) = aligned(judge, teacher);
        let u = unique_improvement_count(&j, &t, constants)?;
        (Some(u.count), u.mean_gap)
    };

    Ok(ModelRow {
        model: model.to_string(),
        states: pre_votes.len(),
        pre,
        rule_accuracy: rule_acc,
        pipelines,
        best,
        uic,
        gap,
    })
}

/// One row per model and a bucket table per (model, pipeline).
pub fn build_report<S: Scalar>(
    by_model: &BTreeMap<String, Vec<PipelineResult<S>>>,
    edges: &[S],
    constants: &ComplexityConstants<S>,
) -> Result<Report<S>, MetricsError> {
    let mut rows = Vec::new();
    let mut buckets = Vec::new();
    for (model, results) in by_model {
        rows.push(model_row(model, results, constants)?);
        for kind in PipelineKind::ALL {
            let rs = of_kind(results, kind);
            if !rs.is_empty() {
                buckets.push(BucketTable {
                    model: model.clone(),
                    pipeline: kind,
                    rows: bucket_report(&rs, edges)?,
                });
            }
        }
    }
    Ok(Report { rows, buckets })
}

fn cell<S: Scalar>(x: Option<S>) -> String {
    x.map_or(String::new(), |v| format!("{:.2}", v.as_f64()))
}

impl<S: Scalar> Report<S> {
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = vec!["Model".into(), "States".into(), "Pre".into(), "Rule Acc.".into()];
        for kind in PipelineKind::ALL {
            h.push(format!("Post {}", kind.label()));
        }
        for kind in PipelineKind::ALL {
            h.push(format!("Δ {} (pp)", kind.label()));
        }
        h.push("Δ Best (pp)".into());
        h.push("Best Pipeline".into());
        for kind in PipelineKind::ALL {
            h.push(format!("Mean Complexity {}", kind.label()));
        }
        h.push("UIC".into());
        h.push("Gap".into());
        h
    }

    /// Main table as CSV; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::csv_header()).expect("in-memory write");
        for r in &self.rows {
            let col = |f: &dyn Fn(&PipelineColumns<S>) -> Option<S>| -> Vec<String> {
                PipelineKind::ALL
                    .iter()
                    .map(|k| cell(r.pipelines.get(k).and_then(f)))
                    .collect()
            };
            let mut rec = vec![r.model.clone(), r.states.to_string(), cell(r.pre), cell(r.rule_accuracy)];
            rec.extend(col(&|c| Some(c.post)));
            rec.extend(col(&|c| c.delta));
            rec.push(cell(r.best.map(|b| b.1)));
            rec.push(r.best.map_or(String::new(), |b| b.0.label().to_string()));
            rec.extend(col(&|c| c.mean_complexity));
            rec.push(r.uic.map_or(String::new(), |u| u.to_string()));
            rec.push(cell(r.gap));
            w.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn buckets_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["Model", "Pipeline", "Complexity", "N", "Post"]).expect("in-memory write");
        for t in &self.buckets {
            for b in &t.rows {
                w.write_record([
                    t.model.clone(),
                    t.pipeline.label().to_string(),
                    b.label(),
                    b.n.to_string(),
                    cell(Some(b.post_accuracy)),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

impl<S: Scalar + Serialize> Report<S> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
