use std::collections::BTreeSet;
use std::fmt;

use super::affine::{AffineExpr, Var};
use super::PolyError;
use crate::frontend::{Bound, LoopScop};

/// One level of a loop nest with inclusive bounds and a positive stride.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopLevel {
    pub index: String,
    pub lower: AffineExpr,
    pub upper: AffineExpr,
    pub step: i64,
}

impl LoopLevel {
    pub fn new(index: &str, lower: AffineExpr, upper: AffineExpr, step: i64) -> Self {
        LoopLevel {
            index: index.to_string(),
            lower,
            upper,
            step,
        }
    }

    pub fn var(&self) -> Var {
        Var::Index(self.index.clone())
    }
}

/// Iteration domain of a loop nest, outermost level first, plus residual
/// constraints (`expr ≥ 0`) contributed by enclosing branches.
///
/// Decreasing loops are stored with their index negated; [`translate`]
/// maps expressions written against the source indices into this space.
///
/// [`translate`]: LoopNestDomain::translate
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoopNestDomain {
    pub levels: Vec<LoopLevel>,
    pub params: BTreeSet<String>,
    pub constraints: Vec<AffineExpr>,
    negated: BTreeSet<String>,
}

/// Conjunction of affine inequalities over loop indices and parameters.
/// Strides are not representable here and stay on the [`LoopNestDomain`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSystem {
    pub dims: Vec<String>,
    pub params: BTreeSet<String>,
    pub constraints: Vec<AffineExpr>,
}

impl LoopNestDomain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = &str> {
        self.levels.iter().map(|l| l.index.as_str())
    }

    pub fn has_index(&self, name: &str) -> bool {
        self.levels.iter().any(|l| l.index == name)
    }

    pub fn is_negated(&self, index: &str) -> bool {
        self.negated.contains(index)
    }

    /// Rewrites an expression over source indices into the normalized space.
    pub fn translate(&self, e: &AffineExpr) -> AffineExpr {
        let mut out = e.clone();
        for name in &self.negated {
            let v = Var::Index(name.clone());
            out = out.substitute(&v, &AffineExpr::term(v.clone(), -1));
        }
        out
    }

    fn check_scope(&self, e: &AffineExpr, level: usize) -> Result<(), PolyError> {
        for v in e.vars() {
            if let Var::Index(name) = &v {
                if !self.has_index(name) {
                    return Err(PolyError::NonAffineBound {
                        level,
                        reason: format!("bound refers to `{name}`, which is not an enclosing index"),
                    });
                }
            }
        }
        Ok(())
    }

    fn absorb_params(&mut self, e: &AffineExpr) {
        for v in e.vars() {
            if let Var::Param(p) = v {
                self.params.insert(p);
            }
        }
    }

    /// Appends a level; bounds are in normalized space already.
    pub fn push_level(&mut self, level: LoopLevel) -> Result<(), PolyError> {
        let depth = self.levels.len();
        if level.step < 1 {
            return Err(PolyError::NonAffineBound {
                level: depth,
                reason: format!("step {} is not positive", level.step),
            });
        }
        if self.has_index(&level.index) {
            return Err(PolyError::NonAffineBound {
                level: depth,
                reason: format!("index `{}` is already bound by an enclosing level", level.index),
            });
        }
        self.check_scope(&level.lower, depth)?;
        self.check_scope(&level.upper, depth)?;
        self.absorb_params(&level.lower);
        self.absorb_params(&level.upper);
        self.levels.push(level);
        Ok(())
    }

    /// Appends the level described by a loop's static control part.
    pub fn push_scop(&mut self, scop: &LoopScop) -> Result<(), PolyError> {
        let level = self.levels.len();
        let gap = |reason: String| PolyError::NonAffineBound { level, reason };
        let step = scop
            .step
            .ok_or_else(|| gap(format!("step of `{}` is not a constant", scop.index)))?;
        let affine = |b: Bound, what: &str| match b {
            Bound::Affine(e) => Ok(e),
            Bound::Unanalyzable(r) => Err(gap(format!("{what} bound of `{}`: {r}", scop.index))),
        };
        let lower = self.translate(&affine(scop.lower(), "lower")?);
        let upper = self.translate(&affine(scop.upper(), "upper")?);
        if step > 0 {
            self.push_level(LoopLevel::new(&scop.index, lower, upper, step))
        } else {
            self.push_level(LoopLevel::new(&scop.index, upper.scale(-1), lower.scale(-1), -step))?;
            self.negated.insert(scop.index.clone());
            Ok(())
        }
    }

    /// Adds `cond ≥ 0` (given in normalized space).
    pub fn push_constraint(&mut self, cond: AffineExpr) -> Result<(), PolyError> {
        for v in cond.vars() {
            if let Var::Index(name) = &v {
                if !self.has_index(name) {
                    return Err(PolyError::NonAffineCondition(format!(
                        "`{name}` is not an index of the enclosing nest"
                    )));
                }
            }
        }
        self.absorb_params(&cond);
        self.constraints.push(cond);
        Ok(())
    }

    /// Keeps the first `depth` levels and the constraints they fully scope.
    pub fn prefix(&self, depth: usize) -> LoopNestDomain {
        let levels: Vec<LoopLevel> = self.levels[..depth].to_vec();
        let keep = |e: &AffineExpr| {
            e.vars().iter().all(|v| match v {
                Var::Index(n) => levels.iter().any(|l| &l.index == n),
                Var::Param(_) => true,
            })
        };
        let constraints = self.constraints.iter().filter(|c| keep(c)).cloned().collect();
        let negated = self
            .negated
            .iter()
            .filter(|n| levels.iter().any(|l| &l.index == *n))
            .cloned()
            .collect();
        let mut out = LoopNestDomain {
            levels,
            params: BTreeSet::new(),
            constraints,
            negated,
        };
        let exprs: Vec<AffineExpr> = out
            .levels
            .iter()
            .flat_map(|l| [l.lower.clone(), l.upper.clone()])
            .chain(out.constraints.iter().cloned())
            .collect();
        for e in &exprs {
            out.absorb_params(e);
        }
        out
    }

    pub fn constraint_system(&self) -> ConstraintSystem {
        let mut constraints = Vec::new();
        for l in &self.levels {
            let v = AffineExpr::var(l.var());
            constraints.push(v.sub(&l.lower));
            constraints.push(l.upper.sub(&v));
        }
        constraints.extend(self.constraints.iter().cloned());
        ConstraintSystem {
            dims: self.levels.iter().map(|l| l.index.clone()).collect(),
            params: self.params.clone(),
            constraints,
        }
    }
}

impl fmt::Display for LoopNestDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| format!("{{{}, {}, {}, {}}}", l.index, l.lower, l.upper, l.step))
            .chain(self.constraints.iter().map(|c| format!("{c} >= 0")))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Builds the nest domain from outermost-first loop SCoPs.
pub fn domain_from_scops(scops: &[LoopScop]) -> Result<LoopNestDomain, PolyError> {
    let mut d = LoopNestDomain::new();
    for s in scops {
        d.push_scop(s)?;
    }
    Ok(d)
}
