use crate::polyhedral::{AffineExpr, Var};

use super::ast::{BinOp, Expr, ForInit, UnOp};

/// A bound part of a loop header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bound {
    Affine(AffineExpr),
    /// Not statically analyzable; the string says why.
    Unanalyzable(String),
}

impl Bound {
    pub fn affine(&self) -> Option<&AffineExpr> {
        match self {
            Bound::Affine(e) => Some(e),
            Bound::Unanalyzable(_) => None,
        }
    }

    fn offset(&self, k: i64) -> Bound {
        match self {
            Bound::Affine(e) => Bound::Affine(e.offset(k)),
            u => u.clone(),
        }
    }
}

/// `index <op> bound` with the index on the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    fn increasing(self) -> bool {
        matches!(self, Comparison::Lt | Comparison::Le)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

/// Static control part of a `for` loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopScop {
    pub index: String,
    /// Value assigned by the init clause.
    pub init: Bound,
    /// Right-hand side of the condition as written.
    pub bound: Bound,
    pub comparison: Comparison,
    /// Signed constant stride; `None` when not a constant.
    pub step: Option<i64>,
}

impl LoopScop {
    /// Smallest index value visited (inclusive).
    pub fn lower(&self) -> Bound {
        match self.comparison {
            Comparison::Lt | Comparison::Le => self.init.clone(),
            Comparison::Gt => self.bound.offset(1),
            Comparison::Ge => self.bound.clone(),
        }
    }

    /// Largest index value visited (inclusive).
    pub fn upper(&self) -> Bound {
        match self.comparison {
            Comparison::Lt => self.bound.offset(-1),
            Comparison::Le => self.bound.clone(),
            Comparison::Gt | Comparison::Ge => self.init.clone(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.init.affine().is_some() && self.bound.affine().is_some() && self.step.is_some()
    }

    fn first_problem(&self) -> Option<String> {
        if let Bound::Unanalyzable(r) = &self.init {
            return Some(format!("initial value: {r}"));
        }
        if let Bound::Unanalyzable(r) = &self.bound {
            return Some(format!("loop bound: {r}"));
        }
        if self.step.is_none() {
            return Some("step is not a non-zero constant".into());
        }
        None
    }
}

/// Why a loop header is not a complete SCoP. `partial` keeps whatever was
/// recognized so annotations can complete it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScopFailure {
    pub reason: String,
    pub partial: Option<LoopScop>,
}

pub type ScopResult = Result<LoopScop, ScopFailure>;

/// Converts an expression to an affine form. Names in `indices` become
/// loop-index variables; every other free name becomes a parameter.
pub fn to_affine(e: &Expr, indices: &[String]) -> Result<AffineExpr, String> {
    match e {
        Expr::Int(v) => Ok(AffineExpr::constant(*v)),
        Expr::Var(n) => Ok(if indices.iter().any(|i| i == n) {
            AffineExpr::index(n)
        } else {
            AffineExpr::param(n)
        }),
        Expr::Unary(UnOp::Neg, x) => Ok(to_affine(x, indices)?.scale(-1)),
        Expr::Binary(BinOp::Add, a, b) => Ok(to_affine(a, indices)?.add(&to_affine(b, indices)?)),
        Expr::Binary(BinOp::Sub, a, b) => Ok(to_affine(a, indices)?.sub(&to_affine(b, indices)?)),
        Expr::Binary(BinOp::Mul, a, b) => {
            let (a, b) = (to_affine(a, indices)?, to_affine(b, indices)?);
            if a.is_constant() {
                Ok(b.scale(a.constant_term()))
            } else if b.is_constant() {
                Ok(a.scale(b.constant_term()))
            } else {
                Err(format!("product of variables `{e}`"))
            }
        }
        Expr::Float(f) => Err(format!("floating-point value `{f}`")),
        Expr::Call(c) => Err(format!("call to `{}`", c.name)),
        Expr::Index(..) => Err(format!("array read `{e}`")),
        Expr::Binary(BinOp::Div | BinOp::Rem, ..) => Err(format!("division in `{e}`")),
        _ => Err(format!("non-affine expression `{e}`")),
    }
}

fn bound_of(e: &Expr, indices: &[String]) -> Bound {
    match to_affine(e, indices) {
        Ok(a) => Bound::Affine(a),
        Err(r) => Bound::Unanalyzable(r),
    }
}

fn as_var(e: &Expr) -> Option<&str> {
    match e {
        Expr::Var(n) => Some(n),
        _ => None,
    }
}

fn const_of(e: &Expr) -> Option<i64> {
    to_affine(e, &[]).ok().filter(AffineExpr::is_constant).map(|a| a.constant_term())
}

/// `(index, stride)` from the increment clause.
fn parse_step(step: &Expr) -> Option<(String, Option<i64>)> {
    match step {
        Expr::Unary(UnOp::PostInc | UnOp::PreInc, x) => Some((as_var(x)?.to_string(), Some(1))),
        Expr::Unary(UnOp::PostDec | UnOp::PreDec, x) => Some((as_var(x)?.to_string(), Some(-1))),
        Expr::Assign(Some(op @ (BinOp::Add | BinOp::Sub)), t, v) => {
            let k = const_of(v).map(|k| if *op == BinOp::Sub { -k } else { k });
            Some((as_var(t)?.to_string(), k))
        }
        Expr::Assign(None, t, v) => {
            let name = as_var(t)?.to_string();
            let k = match &**v {
                Expr::Binary(BinOp::Add, a, b) if as_var(a) == Some(&name) => const_of(b),
                Expr::Binary(BinOp::Add, a, b) if as_var(b) == Some(&name) => const_of(a),
                Expr::Binary(BinOp::Sub, a, b) if as_var(a) == Some(&name) => const_of(b).map(|k| -k),
                _ => None,
            };
            Some((name, k))
        }
        _ => None,
    }
}

fn flip(c: Comparison) -> Comparison {
    match c {
        Comparison::Lt => Comparison::Gt,
        Comparison::Le => Comparison::Ge,
        Comparison::Gt => Comparison::Lt,
        Comparison::Ge => Comparison::Le,
    }
}

fn comparison_of(op: BinOp) -> Option<Comparison> {
    Some(match op {
        BinOp::Lt => Comparison::Lt,
        BinOp::Le => Comparison::Le,
        BinOp::Gt => Comparison::Gt,
        BinOp::Ge => Comparison::Ge,
        _ => return None,
    })
}

/// Extracts the static control part of a `for` header. `enclosing` lists the
/// indices of enclosing loops, outermost first.
pub fn extract_scop(
    init: Option<&ForInit>,
    cond: Option<&Expr>,
    step: Option<&Expr>,
    enclosing: &[String],
) -> ScopResult {
    let fail = |reason: &str| ScopFailure {
        reason: reason.to_string(),
        partial: None,
    };
    let (init_index, init_value) = match init {
        Some(ForInit::Expr(Expr::Assign(None, t, v))) => (as_var(t).map(str::to_string), Some(&**v)),
        Some(ForInit::Decl(d)) if d.dims.is_empty() => (Some(d.name.clone()), d.init.as_ref()),
        _ => (None, None),
    };
    let step_info = step.and_then(parse_step);
    let index = init_index
        .clone()
        .or_else(|| step_info.as_ref().map(|s| s.0.clone()))
        .ok_or_else(|| fail("no loop index in the init or increment clause"))?;
    if let Some((s_index, _)) = &step_info {
        if *s_index != index {
            return Err(fail("increment updates a different variable than the init clause"));
        }
    }
    let (comparison, bound_expr) = match cond {
        Some(Expr::Binary(op, a, b)) => match comparison_of(*op) {
            Some(c) if as_var(a) == Some(&index) => (c, &**b),
            Some(c) if as_var(b) == Some(&index) => (flip(c), &**a),
            _ => return Err(fail("condition is not a comparison against the loop index")),
        },
        _ => return Err(fail("condition is not a comparison against the loop index")),
    };
    let mut scope: Vec<String> = enclosing.to_vec();
    scope.push(index.clone());
    let init = match init_value {
        Some(v) if init_index.as_deref() == Some(&index) => bound_of(v, enclosing),
        _ => Bound::Unanalyzable("no initial value".into()),
    };
    let mut bound = bound_of(bound_expr, &scope);
    if let Bound::Affine(b) = &bound {
        if b.mentions(&Var::Index(index.clone())) {
            bound = Bound::Unanalyzable("bound depends on the loop index".into());
        }
    }
    let mut stride = step_info.and_then(|s| s.1).filter(|k| *k != 0);
    let mismatch = stride.is_some_and(|k| (k > 0) != comparison.increasing());
    if mismatch {
        stride = None;
    }
    let scop = LoopScop {
        index,
        init,
        bound,
        comparison,
        step: stride,
    };
    if mismatch {
        return Err(ScopFailure {
            reason: "stride direction contradicts the loop condition".into(),
            partial: Some(scop),
        });
    }
    match scop.first_problem() {
        None => Ok(scop),
        Some(reason) => Err(ScopFailure {
            reason,
            partial: Some(scop),
        }),
    }
}
