use super::affine::{AffineExpr, Var};
use super::count_expr::Binding;
use super::domain::LoopNestDomain;
use super::PolyError;

/// Default cap on visited lattice points for [`count_enumerate`].
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

/// Brute-force lattice-point count: walks every iteration of the nest.
pub fn count_enumerate(domain: &LoopNestDomain, binding: &Binding) -> Result<u64, PolyError> {
    count_enumerate_capped(domain, binding, DEFAULT_ENUMERATION_CAP)
}

pub fn count_enumerate_capped(domain: &LoopNestDomain, binding: &Binding, cap: u64) -> Result<u64, PolyError> {
    for p in &domain.params {
        if !binding.contains_key(p) {
            return Err(PolyError::UnboundParameter(p.clone()));
        }
    }
    // Each residual constraint is checked as soon as its innermost index is bound.
    let mut checks: Vec<Vec<&AffineExpr>> = vec![Vec::new(); domain.depth() + 1];
    for c in &domain.constraints {
        let deepest = domain
            .levels
            .iter()
            .rposition(|l| c.mentions(&l.var()))
            .map_or(0, |k| k + 1);
        checks[deepest].push(c);
    }
    let mut walk = Walk {
        domain,
        binding,
        checks,
        values: Vec::with_capacity(domain.depth()),
        visited: 0,
        cap,
    };
    walk.run()
}

struct Walk<'a> {
    domain: &'a LoopNestDomain,
    binding: &'a Binding,
    checks: Vec<Vec<&'a AffineExpr>>,
    values: Vec<i64>,
    visited: u64,
    cap: u64,
}

impl Walk<'_> {
    fn eval(&self, e: &AffineExpr) -> Result<i128, PolyError> {
        let lookup = |v: &Var| match v {
            Var::Param(p) => self.binding.get(p).copied(),
            Var::Index(n) => self
                .domain
                .levels
                .iter()
                .position(|l| &l.index == n)
                .and_then(|k| self.values.get(k).copied()),
        };
        e.eval(&lookup)
            .ok_or_else(|| PolyError::UnboundParameter(format!("{e}")))
    }

    fn satisfied(&self, depth: usize) -> Result<bool, PolyError> {
        for c in &self.checks[depth] {
            if self.eval(c)? < 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn run(&mut self) -> Result<u64, PolyError> {
        if !self.satisfied(0)? {
            return Ok(0);
        }
        self.level(0)
    }

    fn level(&mut self, depth: usize) -> Result<u64, PolyError> {
        if depth == self.domain.depth() {
            self.visited += 1;
            if self.visited > self.cap {
                return Err(PolyError::EnumerationTooLarge { cap: self.cap });
            }
            return Ok(1);
        }
        let lvl = &self.domain.levels[depth];
        let lo = self.eval(&lvl.lower)?;
        let hi = self.eval(&lvl.upper)?;
        let mut total = 0;
        let mut v = lo;
        while v <= hi {
            self.values.push(v as i64);
            if self.satisfied(depth + 1)? {
                total += self.level(depth + 1)?;
            } else {
                self.visited += 1;
                if self.visited > self.cap {
                    return Err(PolyError::EnumerationTooLarge { cap: self.cap });
                }
            }
            self.values.pop();
            v += lvl.step as i128;
        }
        Ok(total)
    }
}
