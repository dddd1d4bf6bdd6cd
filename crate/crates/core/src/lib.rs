//! Knowledge-graph-grounded propositional proof engine with step-level
//! evaluation and a role-specialized tutoring pipeline.

pub mod corpus;
pub mod formula;
pub mod kg;
pub mod metrics;
pub mod pipeline;
pub mod rules;
pub mod scalar;

pub use corpus::{Corpus, CorpusError, CorpusProblem, CorpusState};
pub use formula::{entails, parse, Formula, Notation, ParseError, Valuation, Var};
pub use kg::{build_kg, KgBounds, KgError, KnowledgeGraph, ProofProblem, ProofState, StateKey, StepCategory, StepClassification};
pub use metrics::{ComplexityConstants, PipelineKind, PipelineResult};
pub use pipeline::{DialogueRecord, PipelineError, Role};
pub use rules::{apply_rule, applicable_derivations, justify, Derivation, EnumerationConfig, RuleId};
pub use scalar::Scalar;

/// Default score type for complexity and accuracy figures.
pub type Score = f64;
/// Single-precision scores.
pub type Score32 = f32;
/// Exact scores; every default constant is a small rational.
pub type ExactScore = num_rational::Rational64;

pub type Constants = ComplexityConstants<Score>;
pub type ExactConstants = ComplexityConstants<ExactScore>;
pub type Result64 = PipelineResult<Score>;
