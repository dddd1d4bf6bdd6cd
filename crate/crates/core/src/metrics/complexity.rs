//! Step complexity: a weighted, depth-penalized operator count.

use serde::{Deserialize, Serialize};

use crate::formula::{Formula, Operator};
use crate::metrics::MetricsError;
use crate::scalar::Scalar;

/// Per-operator base weights and the nesting penalty `alpha`.
///
/// The root operator sits at depth 0; each nesting level multiplies the
/// operator's weight by `alpha` once more.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConstants<S> {
    pub negation: S,
    pub conjunction: S,
    pub disjunction: S,
    pub implication: S,
    pub biconditional: S,
    pub alpha: S,
}

impl<S: Scalar> Default for ComplexityConstants<S> {
    fn default() -> Self {
        ComplexityConstants {
            negation: S::ratio(1, 2),
            conjunction: S::one(),
            disjunction: S::one(),
            implication: S::ratio(3, 2),
            biconditional: S::ratio(2, 1),
            alpha: S::ratio(3, 2),
        }
    }
}

impl<S: Scalar> ComplexityConstants<S> {
    pub fn weight(&self, op: Operator) -> S {
        match op {
            Operator::Negation => self.negation,
            Operator::Conjunction => self.conjunction,
            Operator::Disjunction => self.disjunction,
            Operator::Implication => self.implication,
            Operator::Biconditional => self.biconditional,
        }
    }

    /// Checks `alpha > 1` and that every weight is positive.
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.alpha > S::one()) {
            return Err(MetricsError::InvalidConstants("alpha must exceed 1".into()));
        }
        let weights = [
            self.negation,
            self.conjunction,
            self.disjunction,
            self.implication,
            self.biconditional,
        ];
        if weights.iter().any(|w| !(*w > S::zero())) {
            return Err(MetricsError::InvalidConstants("weights must be positive".into()));
        }
        Ok(())
    }
}

/// Sum of `weight(op) * alpha^depth(op)` over every operator occurrence.
pub fn step_complexity<S: Scalar>(formula: &Formula, constants: &ComplexityConstants<S>) -> S {
    fn walk<S: Scalar>(f: &Formula, depth: usize, k: &ComplexityConstants<S>) -> S {
        match f {
            Formula::Var(_) => S::zero(),
            Formula::Not(inner) => {
                k.weight(Operator::Negation) * k.alpha.powi(depth) + walk(inner, depth + 1, k)
            }
            _ => {
                let (l, r) = f.operands().unwrap();
                k.weight(f.operator().unwrap()) * k.alpha.powi(depth)
                    + walk(l, depth + 1, k)
                    + walk(r, depth + 1, k)
            }
        }
    }
    walk(formula, 0, constants)
}
