//! Loop-nest iteration domains and exact lattice-point counting.

mod affine;
mod count_expr;
mod domain;
mod enumerate;
mod poly;
mod symbolic;

use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

pub use affine::{AffineExpr, Var};
pub use count_expr::{Binding, CountExpr, LazySum, DEFAULT_EVAL_BUDGET};
pub use domain::{domain_from_scops, ConstraintSystem, LoopLevel, LoopNestDomain};
pub use enumerate::{count_enumerate, count_enumerate_capped, DEFAULT_ENUMERATION_CAP};
pub use poly::{power_sum, Poly, MAX_POWER_SUM_DEGREE};
pub use symbolic::{count_symbolic, is_closed_form};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("non-affine bound at level {level}: {reason}")]
    NonAffineBound { level: usize, reason: String },
    #[error("non-affine branch condition: {0}")]
    NonAffineCondition(String),
    #[error("enumeration exceeds {cap} lattice points")]
    EnumerationTooLarge { cap: u64 },
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("division by zero in count expression")]
    DivisionByZero,
    #[error("count expression evaluated to a negative value")]
    NegativeCount,
    #[error("count does not fit in 128 bits")]
    CountOverflow,
    #[error("lazy summation exceeds the evaluation budget")]
    EvaluationBudgetExceeded,
    #[error("malformed count expression: {0}")]
    BadSexpr(String),
}

/// Restricts the domain to iterations satisfying `cond ≥ 0`, where `cond` is
/// written against the source loop indices.
pub fn intersect_branch(domain: &LoopNestDomain, cond: &AffineExpr) -> Result<LoopNestDomain, PolyError> {
    let mut out = domain.clone();
    out.push_constraint(domain.translate(cond))?;
    Ok(out)
}

/// `total - false_branch`, clamped at zero.
pub fn complement_count(total: &CountExpr, false_branch: &CountExpr) -> CountExpr {
    CountExpr::max0(CountExpr::sub(total.clone(), false_branch.clone()))
}

/// Evaluates a count under a total binding of its parameters.
pub fn eval_count(expr: &CountExpr, binding: &Binding) -> Result<u128, PolyError> {
    let v = expr.eval(binding)?;
    if v.is_negative() {
        return Err(PolyError::NegativeCount);
    }
    v.to_u128().ok_or(PolyError::CountOverflow)
}
