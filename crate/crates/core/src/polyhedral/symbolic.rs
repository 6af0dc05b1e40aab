//! Parametric lattice-point counting.
//!
//! Levels are summed innermost-out. The working form is a list of terms
//! `poly · Π[guard ≥ 0]`. Summing a term over an index collects the lower
//! and upper bounds the guards impose on it, splits into one chamber per
//! (active lower, active upper) pair, and applies closed-form power sums.
//! This is exact as long as every guard touching the index has a unit
//! coefficient on it (or a constant remainder); otherwise, and for strides
//! over non-constant spans, the level becomes a `lazysum`.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;

use super::affine::{AffineExpr, Var};
use super::count_expr::CountExpr;
use super::domain::{LoopLevel, LoopNestDomain};
use super::poly::Poly;

/// Chamber splitting is abandoned beyond this many terms.
const MAX_TERMS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Term {
    poly: Poly,
    guards: BTreeSet<AffineExpr>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Piecewise {
    terms: Vec<Term>,
}

enum Guard {
    True,
    False,
    Keep(AffineExpr),
}

fn normalize_guard(e: &AffineExpr) -> Guard {
    if e.is_constant() {
        return if e.constant_term() >= 0 { Guard::True } else { Guard::False };
    }
    let g = e.terms().fold(0i64, |acc, (_, c)| acc.gcd(&c));
    if g <= 1 {
        return Guard::Keep(e.clone());
    }
    let scaled = AffineExpr::from_parts(e.terms().map(|(v, c)| (v.clone(), c / g)), Integer::div_floor(&e.constant_term(), &g));
    Guard::Keep(scaled)
}

/// Normalizes a guard set. Returns `None` when it is recognizably infeasible.
fn simplify_guards(guards: impl IntoIterator<Item = AffineExpr>) -> Option<BTreeSet<AffineExpr>> {
    // Keyed by the variable part; keeps the tightest constant.
    let mut by_shape: BTreeMap<AffineExpr, i64> = BTreeMap::new();
    for g in guards {
        match normalize_guard(&g) {
            Guard::True => {}
            Guard::False => return None,
            Guard::Keep(e) => {
                let c = e.constant_term();
                let shape = e.offset(-c);
                let slot = by_shape.entry(shape).or_insert(c);
                *slot = (*slot).min(c);
            }
        }
    }
    for (shape, c) in &by_shape {
        if let Some(c2) = by_shape.get(&shape.scale(-1)) {
            if c + c2 < 0 {
                return None;
            }
        }
    }
    Some(by_shape.into_iter().map(|(s, c)| s.offset(c)).collect())
}

impl Piecewise {
    fn constant(c: i64) -> Self {
        Piecewise {
            terms: vec![Term {
                poly: Poly::int(c),
                guards: BTreeSet::new(),
            }],
        }
    }

    fn guarded(poly: Poly, guards: impl IntoIterator<Item = AffineExpr>) -> Self {
        match simplify_guards(guards) {
            Some(guards) if !poly.is_zero() => Piecewise {
                terms: vec![Term { poly, guards }],
            },
            _ => Piecewise::default(),
        }
    }

    fn depends_on(&self, v: &Var) -> bool {
        self.terms
            .iter()
            .any(|t| t.poly.depends_on(v) || t.guards.iter().any(|g| g.mentions(v)))
    }

    fn push(&mut self, term: Term) {
        if term.poly.is_zero() {
            return;
        }
        if let Some(existing) = self.terms.iter_mut().find(|t| t.guards == term.guards) {
            existing.poly = existing.poly.add(&term.poly);
        } else {
            self.terms.push(term);
        }
        self.terms.retain(|t| !t.poly.is_zero());
    }

    fn mul(&self, other: &Piecewise) -> Piecewise {
        let mut out = Piecewise::default();
        for a in &self.terms {
            for b in &other.terms {
                if let Some(guards) = simplify_guards(a.guards.iter().chain(&b.guards).cloned()) {
                    out.push(Term {
                        poly: a.poly.mul(&b.poly),
                        guards,
                    });
                }
            }
        }
        out
    }

    fn substitute(&self, v: &Var, e: &AffineExpr) -> Option<Piecewise> {
        let p = Poly::from_affine(e);
        let mut out = Piecewise::default();
        for t in &self.terms {
            let guards = simplify_guards(t.guards.iter().map(|g| g.substitute(v, e)));
            if let Some(guards) = guards {
                out.push(Term {
                    poly: t.poly.substitute(v, &p),
                    guards,
                });
            }
        }
        Some(out)
    }

    /// `Σ_{v=lower}^{upper} self` with empty ranges contributing zero.
    fn sum_over(&self, v: &Var, lower: &AffineExpr, upper: &AffineExpr) -> Option<Piecewise> {
        let mut out = Piecewise::default();
        for t in &self.terms {
            let mut lowers = vec![lower.clone()];
            let mut uppers = vec![upper.clone()];
            let mut rest = Vec::new();
            for g in &t.guards {
                let a = g.coeff(v);
                let r = g.without(v);
                match a {
                    0 => rest.push(g.clone()),
                    1 => lowers.push(r.scale(-1)),
                    -1 => uppers.push(r),
                    a if r.is_constant() => {
                        let r = r.constant_term();
                        if a > 0 {
                            lowers.push(AffineExpr::constant(Integer::div_ceil(&(-r), &a)));
                        } else {
                            uppers.push(AffineExpr::constant(Integer::div_floor(&r, &(-a))));
                        }
                    }
                    _ => return None,
                }
            }
            dedup(&mut lowers);
            dedup(&mut uppers);
            for (li, l) in lowers.iter().enumerate() {
                for (ui, u) in uppers.iter().enumerate() {
                    let mut guards = rest.clone();
                    for (j, other) in lowers.iter().enumerate() {
                        if j != li {
                            let slack = if j < li { -1 } else { 0 };
                            guards.push(l.sub(other).offset(slack));
                        }
                    }
                    for (j, other) in uppers.iter().enumerate() {
                        if j != ui {
                            let slack = if j < ui { -1 } else { 0 };
                            guards.push(other.sub(u).offset(slack));
                        }
                    }
                    guards.push(u.sub(l));
                    let Some(guards) = simplify_guards(guards) else {
                        continue;
                    };
                    let poly = t
                        .poly
                        .sum_over(v, &Poly::from_affine(l), &Poly::from_affine(u))?;
                    out.push(Term { poly, guards });
                    if out.terms.len() > MAX_TERMS {
                        return None;
                    }
                }
            }
        }
        Some(out)
    }

    fn to_expr(&self) -> CountExpr {
        CountExpr::add(self.terms.iter().map(render_term))
    }
}

fn dedup(xs: &mut Vec<AffineExpr>) {
    let mut seen = BTreeSet::new();
    xs.retain(|x| seen.insert(x.clone()));
}

/// `p · Π[g ≥ 0]`. Where `(g+1)^k` divides `p` the guard becomes a
/// `max0(g+1)^k` factor, so a rectangular extent renders as `max0(N)`.
fn render_term(t: &Term) -> CountExpr {
    let mut poly = t.poly.clone();
    let mut factors = Vec::new();
    let mut indicators = Vec::new();
    for g in &t.guards {
        let divisor = g.offset(1);
        let mut k = 0;
        while let Some(q) = poly.div_exact_linear(&divisor) {
            poly = q;
            k += 1;
        }
        if k > 0 {
            factors.push(CountExpr::pow(CountExpr::max0(CountExpr::from_affine(&divisor)), k));
        } else {
            indicators.push(CountExpr::indicator(g));
        }
    }
    let mut all = vec![poly.to_count_expr_with(factors)];
    all.extend(indicators);
    CountExpr::mul(all)
}

enum Sym {
    Closed(Piecewise),
    Opaque(CountExpr),
}

impl Sym {
    fn depends_on(&self, v: &Var) -> bool {
        match self {
            Sym::Closed(p) => p.depends_on(v),
            Sym::Opaque(e) => e.mentions(v.name()),
        }
    }

    fn to_expr(&self) -> CountExpr {
        match self {
            Sym::Closed(p) => p.to_expr(),
            Sym::Opaque(e) => e.clone(),
        }
    }

    fn mul(self, other: Sym) -> Sym {
        match (self, other) {
            (Sym::Closed(a), Sym::Closed(b)) => Sym::Closed(a.mul(&b)),
            (a, b) => Sym::Opaque(CountExpr::mul([a.to_expr(), b.to_expr()])),
        }
    }
}

fn extent(level: &LoopLevel) -> Sym {
    let span = level.upper.sub(&level.lower);
    if level.step == 1 {
        return Sym::Closed(Piecewise::guarded(Poly::from_affine(&span.offset(1)), [span]));
    }
    if span.is_constant() {
        let trips = (Integer::div_floor(&span.constant_term(), &level.step) + 1).max(0);
        return Sym::Closed(Piecewise::constant(trips));
    }
    Sym::Opaque(CountExpr::max0(CountExpr::add([
        CountExpr::floor_div(CountExpr::from_affine(&span), CountExpr::int(level.step)),
        CountExpr::one(),
    ])))
}

fn sum_level(body: Sym, level: &LoopLevel) -> Sym {
    let v = level.var();
    if !body.depends_on(&v) {
        return body.mul(extent(level));
    }
    if let Sym::Closed(pw) = &body {
        if level.step == 1 {
            if let Some(r) = pw.sum_over(&v, &level.lower, &level.upper) {
                return Sym::Closed(r);
            }
        } else {
            let span = level.upper.sub(&level.lower);
            if span.is_constant() {
                let last = Integer::div_floor(&span.constant_term(), &level.step);
                if last < 0 {
                    return Sym::Closed(Piecewise::default());
                }
                // v = lower + step·t, t ∈ [0, last]
                let t = Var::Index(format!("{}#t", level.index));
                let image = level.lower.add(&AffineExpr::term(t.clone(), level.step));
                if let Some(r) = pw
                    .substitute(&v, &image)
                    .and_then(|p| p.sum_over(&t, &AffineExpr::constant(0), &AffineExpr::constant(last)))
                {
                    return Sym::Closed(r);
                }
            }
        }
    }
    Sym::Opaque(CountExpr::lazy_sum(
        &level.index,
        CountExpr::from_affine(&level.lower),
        CountExpr::from_affine(&level.upper),
        level.step,
        body.to_expr(),
    ))
}

/// Parametric count of the nest's lattice points.
pub fn count_symbolic(domain: &LoopNestDomain) -> CountExpr {
    let mut body = Sym::Closed(Piecewise::guarded(Poly::int(1), domain.constraints.iter().cloned()));
    for level in domain.levels.iter().rev() {
        body = sum_level(body, level);
    }
    body.to_expr()
}

/// True if `count_symbolic` produced a loop-free closed form.
pub fn is_closed_form(e: &CountExpr) -> bool {
    match e {
        CountExpr::Int(_) | CountExpr::Param(_) => true,
        CountExpr::Add(xs) | CountExpr::Mul(xs) => xs.iter().all(is_closed_form),
        CountExpr::Pow(b, _) | CountExpr::Max0(b) => is_closed_form(b),
        CountExpr::FloorDiv(a, b) => is_closed_form(a) && is_closed_form(b),
        CountExpr::LazySum(_) => false,
    }
}
