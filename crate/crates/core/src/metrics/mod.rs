//! Per-function metric vectors: instruction counts per category, scaled by
//! how often each statement runs.

mod context;
mod traverse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::polyhedral::{AffineExpr, Binding, CountExpr, PolyError};

pub use context::{
    apply_annotation, complete_scop, handle_branch, pct_of, AnalysisContext, AnnotationEffect, AnnotationSite,
    BranchSplit, BranchStrategy, Frame, LoopSite,
};
pub use traverse::{collect_bottom_up, generate_top_down, generate_with_known, LineEvidence};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("line {line}: cannot model: {reason}")]
    ModelGap { line: u32, reason: String },
    #[error("line {line}: annotation does not fit here: {reason}")]
    AnnotationMismatch { line: u32, reason: String },
}

/// Category id to count. A missing category counts as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricVector {
    counts: BTreeMap<String, CountExpr>,
}

impl MetricVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, category: &str) -> CountExpr {
        self.counts.get(category).cloned().unwrap_or_else(CountExpr::zero)
    }

    pub fn add_term(&mut self, category: &str, term: CountExpr) {
        if term.is_zero() {
            return;
        }
        let sum = collect_terms([self.get(category), term]);
        if sum.is_zero() {
            self.counts.remove(category);
        } else {
            self.counts.insert(category.to_string(), sum);
        }
    }

    /// Replaces a category's count as given.
    pub fn set(&mut self, category: &str, count: CountExpr) {
        if count.is_zero() {
            self.counts.remove(category);
        } else {
            self.counts.insert(category.to_string(), count);
        }
    }

    pub fn scaled(&self, k: &CountExpr) -> MetricVector {
        let mut out = MetricVector::new();
        for (c, v) in &self.counts {
            out.add_term(c, CountExpr::mul([k.clone(), v.clone()]));
        }
        out
    }

    pub fn plus(&self, other: &MetricVector) -> MetricVector {
        let mut out = self.clone();
        for (c, v) in &other.counts {
            out.add_term(c, v.clone());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CountExpr)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn free_params(&self) -> BTreeSet<String> {
        self.counts.values().flat_map(CountExpr::free_params).collect()
    }

    pub fn eval(&self, binding: &Binding) -> Result<BTreeMap<String, BigInt>, PolyError> {
        self.counts.iter().map(|(c, v)| Ok((c.clone(), v.eval(binding)?))).collect()
    }
}

impl FromIterator<(String, CountExpr)> for MetricVector {
    fn from_iter<I: IntoIterator<Item = (String, CountExpr)>>(iter: I) -> Self {
        let mut out = MetricVector::new();
        for (c, v) in iter {
            out.add_term(&c, v);
        }
        out
    }
}

/// Sum with like terms merged: `2·X + 3·X` becomes `5·X`.
fn collect_terms(parts: impl IntoIterator<Item = CountExpr>) -> CountExpr {
    let mut by_shape: BTreeMap<Option<CountExpr>, BigInt> = BTreeMap::new();
    let mut push = |t: CountExpr| {
        let (k, shape) = match t {
            CountExpr::Int(k) => (k, None),
            CountExpr::Mul(fs) => match fs.split_first() {
                Some((CountExpr::Int(k), rest)) => (k.clone(), Some(CountExpr::mul(rest.iter().cloned()))),
                _ => (BigInt::from(1), Some(CountExpr::Mul(fs))),
            },
            other => (BigInt::from(1), Some(other)),
        };
        *by_shape.entry(shape).or_default() += k;
    };
    for p in parts {
        match p {
            CountExpr::Add(ts) => ts.into_iter().for_each(&mut push),
            t => push(t),
        }
    }
    CountExpr::add(by_shape.into_iter().map(|(shape, k)| match shape {
        None => CountExpr::Int(k),
        Some(x) => CountExpr::mul([CountExpr::Int(k), x]),
    }))
}

/// `caller + iterations · callee`, category by category.
pub fn compose_call(caller: &MetricVector, callee: &MetricVector, iterations: &CountExpr) -> MetricVector {
    caller.plus(&callee.scaled(iterations))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingKind {
    /// Part of the code could not be modeled and contributes nothing.
    ModelGap,
    /// Both arms of a branch were counted in full.
    OverApprox,
    /// Instructions on a line were split between several statements.
    SharedLine,
    Skipped,
    ExternalCall,
    AnnotationMismatch,
}

impl FindingKind {
    pub fn code(self) -> &'static str {
        match self {
            FindingKind::ModelGap => "MODEL_GAP",
            FindingKind::OverApprox => "OVERAPPROX",
            FindingKind::SharedLine => "SHARED_LINE",
            FindingKind::Skipped => "SKIPPED",
            FindingKind::ExternalCall => "EXTERNAL_CALL",
            FindingKind::AnnotationMismatch => "ANNOTATION_MISMATCH",
        }
    }

    pub fn from_code(code: &str) -> Option<FindingKind> {
        use FindingKind::*;
        [ModelGap, OverApprox, SharedLine, Skipped, ExternalCall, AnnotationMismatch]
            .into_iter()
            .find(|k| k.code() == code)
    }

    /// Findings that make `--strict` fail.
    pub fn is_gap(self) -> bool {
        matches!(self, FindingKind::ModelGap | FindingKind::AnnotationMismatch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub line: u32,
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    pub fn new(kind: FindingKind, line: u32, message: impl Into<String>) -> Self {
        Finding {
            line,
            kind,
            message: message.into(),
        }
    }
}

impl From<MetricsError> for Finding {
    fn from(e: MetricsError) -> Self {
        match &e {
            MetricsError::ModelGap { line, reason } => Finding::new(FindingKind::ModelGap, *line, reason.clone()),
            MetricsError::AnnotationMismatch { line, reason } => {
                Finding::new(FindingKind::AnnotationMismatch, *line, reason.clone())
            }
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} line {}: {}", self.kind.code(), self.line, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CallSite {
    /// Mangled name of the callee, or the bare name for unresolved calls.
    pub callee: String,
    pub line: u32,
    /// How many times the call runs per invocation of the caller.
    pub iterations: CountExpr,
    pub external: bool,
    /// Actual arguments that are affine in the caller's parameters.
    pub args: Vec<Option<AffineExpr>>,
}

/// A model parameter and the source line it comes from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamInfo {
    pub source_line: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionMetrics {
    pub mangled_name: String,
    /// Free parameters of the body and call multipliers, by source line.
    pub params: Vec<ParamInfo>,
    /// Formal parameter names of the source function, in order.
    pub formals: Vec<String>,
    pub first_line: u32,
    pub body: MetricVector,
    pub call_sites: Vec<CallSite>,
    pub findings: Vec<Finding>,
}

impl FunctionMetrics {
    pub fn gaps(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.kind.is_gap())
    }
}
