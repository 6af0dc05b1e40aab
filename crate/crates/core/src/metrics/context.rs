use std::cell::OnceCell;
use std::collections::BTreeSet;

use num_rational::Rational64;

use crate::frontend::{to_affine, Annotation, Annotations, BinOp, Bound, Expr, IfStmt, LoopScop, Stmt, StmtKind, ScopResult, UnOp};
use crate::polyhedral::{complement_count, count_symbolic, AffineExpr, CountExpr, LoopNestDomain, Var};

use super::MetricsError;

/// One nesting level of the analysis: a scalar factor times the lattice
/// count of an iteration domain.
#[derive(Clone, Debug)]
pub struct Frame {
    factor: CountExpr,
    domain: LoopNestDomain,
    /// Indices of enclosing loops that are no longer part of `domain`.
    opaque: BTreeSet<String>,
    in_loop: bool,
    multiplier: OnceCell<CountExpr>,
}

impl Frame {
    fn new(factor: CountExpr, domain: LoopNestDomain, opaque: BTreeSet<String>, in_loop: bool) -> Self {
        Frame {
            factor,
            domain,
            opaque,
            in_loop,
            multiplier: OnceCell::new(),
        }
    }

    pub fn root() -> Self {
        Frame::new(CountExpr::one(), LoopNestDomain::new(), BTreeSet::new(), false)
    }

    pub fn domain(&self) -> &LoopNestDomain {
        &self.domain
    }

    pub fn in_loop(&self) -> bool {
        self.in_loop
    }

    /// Executions per function invocation of code in this frame.
    pub fn multiplier(&self) -> &CountExpr {
        self.multiplier.get_or_init(|| {
            if self.domain.levels.is_empty() && self.domain.constraints.is_empty() {
                self.factor.clone()
            } else {
                CountExpr::mul([self.factor.clone(), count_symbolic(&self.domain)])
            }
        })
    }

    fn all_indices(&self) -> BTreeSet<String> {
        let mut s = self.opaque.clone();
        s.extend(self.domain.indices().map(str::to_string));
        s
    }

    /// A frame with the given multiplier and no usable domain.
    fn opaque_child(&self, multiplier: CountExpr, extra_index: Option<&str>) -> Frame {
        let mut opaque = self.all_indices();
        opaque.extend(extra_index.map(str::to_string));
        Frame::new(multiplier, LoopNestDomain::new(), opaque, self.in_loop || extra_index.is_some())
    }

    fn restricted(&self, conj: &[AffineExpr]) -> Result<Frame, String> {
        let mut d = self.domain.clone();
        for c in conj {
            d.push_constraint(d.translate(c)).map_err(|e| e.to_string())?;
        }
        Ok(Frame::new(self.factor.clone(), d, self.opaque.clone(), self.in_loop))
    }
}

/// The traversal state inside one function.
#[derive(Clone, Debug)]
pub struct AnalysisContext {
    stack: Vec<Frame>,
}

impl Default for AnalysisContext {
    fn default() -> Self {
        Self::new()
    }
}

impl AnalysisContext {
    pub fn new() -> Self {
        AnalysisContext { stack: vec![Frame::root()] }
    }

    /// Context positioned inside an existing loop nest.
    pub fn with_domain(domain: LoopNestDomain) -> Self {
        let in_loop = domain.depth() > 0;
        AnalysisContext {
            stack: vec![Frame::new(CountExpr::one(), domain, BTreeSet::new(), in_loop)],
        }
    }

    pub fn top(&self) -> &Frame {
        self.stack.last().expect("context has a root frame")
    }

    pub fn multiplier(&self) -> CountExpr {
        self.top().multiplier().clone()
    }

    pub fn active_domain(&self) -> Option<&LoopNestDomain> {
        let d = &self.top().domain;
        (d.depth() > 0).then_some(d)
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn push(&mut self, f: Frame) {
        self.stack.push(f);
    }

    pub fn pop(&mut self) {
        assert!(self.stack.len() > 1, "cannot pop the root frame");
        self.stack.pop();
    }

    /// Names of every enclosing loop index, analyzable or not.
    pub fn indices(&self) -> Vec<String> {
        self.top().all_indices().into_iter().collect()
    }

    /// Converts an expression into an affine form over the active domain. Fails
    /// if it is not affine or mentions an index without a domain.
    pub fn affine(&self, e: &Expr) -> Result<AffineExpr, String> {
        let a = to_affine(e, &self.indices())?;
        for v in a.vars() {
            if let Var::Index(n) = v {
                if self.top().opaque.contains(&n) {
                    return Err(format!("`{n}` belongs to a loop without an affine domain"));
                }
            }
        }
        Ok(a)
    }

    /// Frame for the body of a loop.
    pub fn enter_loop(&self, site: &LoopSite) -> Result<Frame, String> {
        let top = self.top();
        match site {
            LoopSite::Iterations { index, count } => Ok(top.opaque_child(
                CountExpr::mul([top.multiplier().clone(), CountExpr::int(*count)]),
                index.as_deref(),
            )),
            LoopSite::Scop(scop) => {
                if let Some(v) = [&scop.init, &scop.bound]
                    .into_iter()
                    .filter_map(Bound::affine)
                    .flat_map(|a| a.vars())
                    .find(|v| matches!(v, Var::Index(n) if top.opaque.contains(n)))
                {
                    return Err(format!("bound depends on `{}`, whose loop has no affine domain", v.name()));
                }
                let mut d = top.domain.clone();
                d.push_scop(scop).map_err(|e| e.to_string())?;
                Ok(Frame::new(top.factor.clone(), d, top.opaque.clone(), true))
            }
        }
    }
}

/// How a loop's iterations are known.
#[derive(Clone, Debug)]
pub enum LoopSite {
    Scop(LoopScop),
    Iterations { index: Option<String>, count: u64 },
}

/// Conjunction of `expr ≥ 0` constraints.
type Conj = Vec<AffineExpr>;

/// Affine descriptions of a condition and of its negation, where they exist.
fn condition_sets(e: &Expr, ctx: &AnalysisContext) -> (Option<Conj>, Option<Conj>) {
    let cmp = |a: &Expr, b: &Expr| -> Option<(AffineExpr, AffineExpr)> { Some((ctx.affine(a).ok()?, ctx.affine(b).ok()?)) };
    match e {
        Expr::Binary(op @ (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge), a, b) => {
            let Some((a, b)) = cmp(a, b) else { return (None, None) };
            // a < b  ⇔  b - a - 1 ≥ 0
            let (lo, hi, strict) = match op {
                BinOp::Lt => (a, b, true),
                BinOp::Le => (a, b, false),
                BinOp::Gt => (b, a, true),
                _ => (b, a, false),
            };
            let pos = hi.sub(&lo).offset(if strict { -1 } else { 0 });
            let neg = pos.negated_inequality();
            (Some(vec![pos]), Some(vec![neg]))
        }
        Expr::Binary(BinOp::Eq, a, b) => match cmp(a, b) {
            Some((a, b)) => (Some(vec![a.sub(&b), b.sub(&a)]), None),
            None => (None, None),
        },
        Expr::Binary(BinOp::Ne, a, b) => match cmp(a, b) {
            Some((a, b)) => (None, Some(vec![a.sub(&b), b.sub(&a)])),
            None => (None, None),
        },
        Expr::Binary(BinOp::And, a, b) => {
            let ((pa, _), (pb, _)) = (condition_sets(a, ctx), condition_sets(b, ctx));
            (pa.zip(pb).map(|(mut x, y)| {
                x.extend(y);
                x
            }), None)
        }
        Expr::Binary(BinOp::Or, a, b) => {
            let ((_, na), (_, nb)) = (condition_sets(a, ctx), condition_sets(b, ctx));
            (None, na.zip(nb).map(|(mut x, y)| {
                x.extend(y);
                x
            }))
        }
        Expr::Unary(UnOp::Not, x) => {
            let (p, n) = condition_sets(x, ctx);
            (n, p)
        }
        _ => match ctx.affine(e) {
            // A bare affine value is true when non-zero.
            Ok(a) if a.is_constant() => {
                let t = AffineExpr::constant(0);
                let f = AffineExpr::constant(-1);
                if a.constant_term() != 0 {
                    (Some(vec![t]), Some(vec![f]))
                } else {
                    (Some(vec![f]), Some(vec![t]))
                }
            }
            Ok(a) => (None, Some(vec![a.clone(), a.scale(-1)])),
            Err(_) => (None, None),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchStrategy {
    /// Both arms are restrictions of the enclosing domain.
    Intersection,
    /// One arm is a restriction; the other is what remains of the total.
    Complement,
    Percentage,
    Iterations,
    /// Outside loops with no usable condition: both arms run once per entry.
    OverApproximate,
    /// The condition is unusable but the then-arm is skipped and there is no else.
    SkippedArm,
}

#[derive(Clone, Debug)]
pub struct BranchSplit {
    pub strategy: BranchStrategy,
    pub then_frame: Frame,
    pub else_frame: Frame,
}

impl BranchSplit {
    pub fn then_multiplier(&self) -> CountExpr {
        self.then_frame.multiplier().clone()
    }

    pub fn else_multiplier(&self) -> CountExpr {
        self.else_frame.multiplier().clone()
    }
}

/// A skipped statement, or a non-empty block of them.
fn fully_skipped(s: &Stmt) -> bool {
    match &s.kind {
        _ if s.annotations.skip() => true,
        StmtKind::Block(items) => !items.is_empty() && items.iter().all(fully_skipped),
        _ => false,
    }
}

/// Chooses how the two arms of a branch are counted.
pub fn handle_branch(
    stmt: &IfStmt,
    annotations: &Annotations,
    ctx: &AnalysisContext,
    line: u32,
) -> Result<BranchSplit, MetricsError> {
    let top = ctx.top();
    let total = top.multiplier().clone();
    if let Some(p) = annotations.percentage() {
        let then = pct_of(&total, p);
        let els = CountExpr::sub(total.clone(), then.clone());
        return Ok(BranchSplit {
            strategy: BranchStrategy::Percentage,
            then_frame: top.opaque_child(then, None),
            else_frame: top.opaque_child(els, None),
        });
    }
    if let Some(k) = annotations.iterations() {
        let rest = CountExpr::max0(CountExpr::sub(total.clone(), CountExpr::int(k)));
        return Ok(BranchSplit {
            strategy: BranchStrategy::Iterations,
            then_frame: top.opaque_child(CountExpr::sub(total.clone(), rest.clone()), None),
            else_frame: top.opaque_child(rest, None),
        });
    }
    let gap = |reason: String| MetricsError::ModelGap { line, reason };
    let (pos, neg) = condition_sets(&stmt.cond, ctx);
    match (pos, neg) {
        (Some(p), Some(n)) => Ok(BranchSplit {
            strategy: BranchStrategy::Intersection,
            then_frame: top.restricted(&p).map_err(gap)?,
            else_frame: top.restricted(&n).map_err(gap)?,
        }),
        (Some(p), None) => {
            let then_frame = top.restricted(&p).map_err(gap)?;
            let rest = complement_count(&total, then_frame.multiplier());
            Ok(BranchSplit {
                strategy: BranchStrategy::Complement,
                else_frame: top.opaque_child(rest, None),
                then_frame,
            })
        }
        (None, Some(n)) => {
            let else_frame = top.restricted(&n).map_err(gap)?;
            let rest = complement_count(&total, else_frame.multiplier());
            Ok(BranchSplit {
                strategy: BranchStrategy::Complement,
                then_frame: top.opaque_child(rest, None),
                else_frame,
            })
        }
        (None, None) if stmt.else_branch.is_none() && fully_skipped(&stmt.then_branch) => Ok(BranchSplit {
            strategy: BranchStrategy::SkippedArm,
            then_frame: top.opaque_child(CountExpr::zero(), None),
            else_frame: top.opaque_child(total, None),
        }),
        (None, None) if !top.in_loop() => Ok(BranchSplit {
            strategy: BranchStrategy::OverApproximate,
            then_frame: top.opaque_child(total.clone(), None),
            else_frame: top.opaque_child(total, None),
        }),
        (None, None) => Err(gap(format!(
            "condition `{}` is not affine; annotate the branch with pct or iters",
            stmt.cond_text
        ))),
    }
}

/// `floor(p · total)`.
pub fn pct_of(total: &CountExpr, p: Rational64) -> CountExpr {
    CountExpr::floor_div(
        CountExpr::mul([CountExpr::int(*p.numer()), total.clone()]),
        CountExpr::int(*p.denom()),
    )
}

/// Where an annotation sits.
#[derive(Clone, Copy, Debug)]
pub enum AnnotationSite<'a> {
    Loop(&'a ScopResult),
    Branch,
    Statement,
}

/// What an annotation does at its site.
#[derive(Clone, Debug, PartialEq)]
pub enum AnnotationEffect {
    Skip,
    /// The loop runs this many times per entry.
    Iterations(u64),
    /// The then-arm runs this fraction of the time.
    Percentage(Rational64),
    /// The loop's header with annotated parameters substituted.
    CompletedScop(LoopScop),
    /// Recorded on the branch arm count (see [`handle_branch`]).
    BranchIterations(u64),
}

pub fn apply_annotation(ann: &Annotation, site: AnnotationSite<'_>, line: u32) -> Result<AnnotationEffect, MetricsError> {
    let mismatch = |what: &str| MetricsError::AnnotationMismatch {
        line,
        reason: format!("`{}` {what}", ann.key()),
    };
    match (ann, site) {
        (Annotation::Skip, _) => Ok(AnnotationEffect::Skip),
        (Annotation::IterationCount(k), AnnotationSite::Loop(_)) => Ok(AnnotationEffect::Iterations(*k)),
        (Annotation::IterationCount(k), AnnotationSite::Branch) => Ok(AnnotationEffect::BranchIterations(*k)),
        (Annotation::Percentage(p), AnnotationSite::Branch) => Ok(AnnotationEffect::Percentage(*p)),
        (Annotation::LpInit(_) | Annotation::LpCond(_), AnnotationSite::Loop(scop)) => {
            let mut hints = Annotations::default();
            hints.insert(ann.clone());
            complete_scop(scop, &hints)
                .map(AnnotationEffect::CompletedScop)
                .ok_or_else(|| mismatch("needs a loop whose index is recognizable"))
        }
        (Annotation::IterationCount(_), _) => Err(mismatch("applies only to loops and branches")),
        (Annotation::Percentage(_), _) => Err(mismatch("applies only to branches")),
        _ => Err(mismatch("applies only to loops")),
    }
}

/// The loop header with `lp_init`/`lp_cond` parameters substituted.
pub fn complete_scop(scop: &ScopResult, hints: &Annotations) -> Option<LoopScop> {
    let mut s = match scop {
        Ok(s) => s.clone(),
        Err(f) => f.partial.clone()?,
    };
    if let Some(x) = hints.lp_init() {
        s.init = Bound::Affine(AffineExpr::param(x));
    }
    if let Some(y) = hints.lp_cond() {
        s.bound = Bound::Affine(AffineExpr::param(y));
    }
    Some(s)
}
