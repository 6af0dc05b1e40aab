//! Symbolic count expressions and their canonical s-expression form.
//!
//! A [`CountExpr`] is built over the node set `int`, `param`, `add`, `mul`,
//! `pow`, `floordiv`, `max0` and `lazysum`. The text rendering is a prefix
//! s-expression such as `(max0 (add (param N) (int -1)))`.
//!
//! Inside a `lazysum` the summation index is referenced with `param`; the
//! bound name shadows any model parameter of the same name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::affine::{AffineExpr, Var};
use super::PolyError;

/// Parameter binding used to evaluate counts.
pub type Binding = BTreeMap<String, i64>;

/// Default number of `lazysum` iterations a single evaluation may perform.
pub const DEFAULT_EVAL_BUDGET: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CountExpr {
    Int(BigInt),
    Param(String),
    Add(Vec<CountExpr>),
    Mul(Vec<CountExpr>),
    Pow(Box<CountExpr>, u32),
    FloorDiv(Box<CountExpr>, Box<CountExpr>),
    Max0(Box<CountExpr>),
    LazySum(Box<LazySum>),
}

/// `Σ body` for `var` running from `lower` to `upper` (inclusive) by `step`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LazySum {
    pub var: String,
    pub lower: CountExpr,
    pub upper: CountExpr,
    pub step: i64,
    pub body: CountExpr,
}

impl CountExpr {
    pub fn int(v: impl Into<BigInt>) -> Self {
        CountExpr::Int(v.into())
    }

    pub fn zero() -> Self {
        CountExpr::int(0)
    }

    pub fn one() -> Self {
        CountExpr::int(1)
    }

    pub fn param(name: &str) -> Self {
        CountExpr::Param(name.to_string())
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            CountExpr::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_int().is_some_and(Zero::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_int().is_some_and(One::is_one)
    }

    /// Sum with constant folding and flattening.
    pub fn add(terms: impl IntoIterator<Item = CountExpr>) -> CountExpr {
        let mut constant = BigInt::zero();
        let mut rest = Vec::new();
        for t in terms {
            match t {
                CountExpr::Int(v) => constant += v,
                CountExpr::Add(inner) => {
                    for t in inner {
                        match t {
                            CountExpr::Int(v) => constant += v,
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if !constant.is_zero() {
            rest.push(CountExpr::Int(constant));
        }
        match rest.len() {
            0 => CountExpr::zero(),
            1 => rest.pop().unwrap(),
            _ => CountExpr::Add(rest),
        }
    }

    /// Product with constant folding and flattening.
    pub fn mul(factors: impl IntoIterator<Item = CountExpr>) -> CountExpr {
        let mut constant = BigInt::one();
        let mut rest = Vec::new();
        for f in factors {
            match f {
                CountExpr::Int(v) => constant *= v,
                CountExpr::Mul(inner) => {
                    for f in inner {
                        match f {
                            CountExpr::Int(v) => constant *= v,
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if constant.is_zero() {
            return CountExpr::zero();
        }
        if !constant.is_one() || rest.is_empty() {
            rest.insert(0, CountExpr::Int(constant));
        }
        if rest.len() == 1 {
            rest.pop().unwrap()
        } else {
            CountExpr::Mul(rest)
        }
    }

    pub fn sub(a: CountExpr, b: CountExpr) -> CountExpr {
        CountExpr::add([a, CountExpr::mul([CountExpr::int(-1), b])])
    }

    pub fn pow(base: CountExpr, exp: u32) -> CountExpr {
        match (exp, &base) {
            (0, _) => CountExpr::one(),
            (1, _) => base,
            (_, CountExpr::Int(v)) => CountExpr::Int(num_traits::pow(v.clone(), exp as usize)),
            _ => CountExpr::Pow(Box::new(base), exp),
        }
    }

    pub fn floor_div(num: CountExpr, den: CountExpr) -> CountExpr {
        match (&num, &den) {
            (_, d) if d.is_one() => num,
            (CountExpr::Int(n), CountExpr::Int(d)) if !d.is_zero() => CountExpr::Int(n.div_floor(d)),
            _ => CountExpr::FloorDiv(Box::new(num), Box::new(den)),
        }
    }

    pub fn max0(arg: CountExpr) -> CountExpr {
        match arg {
            CountExpr::Int(v) => CountExpr::Int(if v.is_negative() { BigInt::zero() } else { v }),
            m @ CountExpr::Max0(_) => m,
            other => CountExpr::Max0(Box::new(other)),
        }
    }

    pub fn lazy_sum(var: &str, lower: CountExpr, upper: CountExpr, step: i64, body: CountExpr) -> CountExpr {
        if body.is_zero() {
            return CountExpr::zero();
        }
        CountExpr::LazySum(Box::new(LazySum {
            var: var.to_string(),
            lower,
            upper,
            step,
            body,
        }))
    }

    pub fn from_affine(e: &AffineExpr) -> CountExpr {
        let mut terms: Vec<CountExpr> = e
            .terms()
            .map(|(v, c)| CountExpr::mul([CountExpr::int(c), CountExpr::param(v.name())]))
            .collect();
        terms.push(CountExpr::int(e.constant_term()));
        CountExpr::add(terms)
    }

    /// Indicator `[e ≥ 0]` written as `max0(e + 1) - max0(e)`.
    pub fn indicator(e: &AffineExpr) -> CountExpr {
        if e.is_constant() {
            return CountExpr::int(i64::from(e.constant_term() >= 0));
        }
        CountExpr::sub(
            CountExpr::max0(CountExpr::from_affine(&e.offset(1))),
            CountExpr::max0(CountExpr::from_affine(e)),
        )
    }

    /// Free parameter names; `lazysum` indices are bound inside their body.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            CountExpr::Int(_) => {}
            CountExpr::Param(p) => {
                if !bound.contains(p) {
                    out.insert(p.clone());
                }
            }
            CountExpr::Add(xs) | CountExpr::Mul(xs) => xs.iter().for_each(|x| x.collect_free(bound, out)),
            CountExpr::Pow(b, _) | CountExpr::Max0(b) => b.collect_free(bound, out),
            CountExpr::FloorDiv(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            CountExpr::LazySum(s) => {
                s.lower.collect_free(bound, out);
                s.upper.collect_free(bound, out);
                bound.push(s.var.clone());
                s.body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.free_params().contains(name)
    }

    /// Replaces free parameters by expressions. Bound `lazysum` indices are untouched.
    pub fn substitute_params(&self, map: &BTreeMap<String, CountExpr>) -> CountExpr {
        match self {
            CountExpr::Int(_) => self.clone(),
            CountExpr::Param(p) => map.get(p).cloned().unwrap_or_else(|| self.clone()),
            CountExpr::Add(xs) => CountExpr::add(xs.iter().map(|x| x.substitute_params(map))),
            CountExpr::Mul(xs) => CountExpr::mul(xs.iter().map(|x| x.substitute_params(map))),
            CountExpr::Pow(b, e) => CountExpr::pow(b.substitute_params(map), *e),
            CountExpr::FloorDiv(a, b) => CountExpr::floor_div(a.substitute_params(map), b.substitute_params(map)),
            CountExpr::Max0(a) => CountExpr::max0(a.substitute_params(map)),
            CountExpr::LazySum(s) => {
                let mut inner = map.clone();
                inner.remove(&s.var);
                CountExpr::lazy_sum(
                    &s.var,
                    s.lower.substitute_params(map),
                    s.upper.substitute_params(map),
                    s.step,
                    s.body.substitute_params(&inner),
                )
            }
        }
    }

    /// True for a bare negative integer.
    pub fn is_negative_constant(&self) -> bool {
        self.as_int().is_some_and(Signed::is_negative)
    }

    pub fn to_sexpr(&self) -> String {
        self.to_string()
    }

    pub fn parse_sexpr(text: &str) -> Result<CountExpr, PolyError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let expr = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(PolyError::BadSexpr(format!("trailing input after position {pos}")));
        }
        Ok(expr)
    }

    /// Evaluates with the default iteration budget.
    pub fn eval(&self, binding: &Binding) -> Result<BigInt, PolyError> {
        let mut budget = DEFAULT_EVAL_BUDGET;
        self.eval_with(binding, &mut budget)
    }

    pub fn eval_with(&self, binding: &Binding, budget: &mut u64) -> Result<BigInt, PolyError> {
        let mut env = Env {
            binding,
            scopes: Vec::new(),
            budget,
        };
        env.eval(self)
    }
}

struct Env<'a> {
    binding: &'a Binding,
    scopes: Vec<(String, BigInt)>,
    budget: &'a mut u64,
}

impl Env<'_> {
    fn lookup(&self, name: &str) -> Result<BigInt, PolyError> {
        if let Some((_, v)) = self.scopes.iter().rev().find(|(n, _)| n == name) {
            return Ok(v.clone());
        }
        self.binding
            .get(name)
            .map(|v| BigInt::from(*v))
            .ok_or_else(|| PolyError::UnboundParameter(name.to_string()))
    }

    fn eval(&mut self, e: &CountExpr) -> Result<BigInt, PolyError> {
        Ok(match e {
            CountExpr::Int(v) => v.clone(),
            CountExpr::Param(p) => self.lookup(p)?,
            CountExpr::Add(xs) => {
                let mut acc = BigInt::zero();
                for x in xs {
                    acc += self.eval(x)?;
                }
                acc
            }
            CountExpr::Mul(xs) => {
                let mut acc = BigInt::one();
                for x in xs {
                    acc *= self.eval(x)?;
                    if acc.is_zero() {
                        break;
                    }
                }
                acc
            }
            CountExpr::Pow(b, k) => num_traits::pow(self.eval(b)?, *k as usize),
            CountExpr::FloorDiv(a, b) => {
                let d = self.eval(b)?;
                if d.is_zero() {
                    return Err(PolyError::DivisionByZero);
                }
                self.eval(a)?.div_floor(&d)
            }
            CountExpr::Max0(a) => {
                let v = self.eval(a)?;
                if v.is_negative() {
                    BigInt::zero()
                } else {
                    v
                }
            }
            CountExpr::LazySum(s) => {
                if s.step <= 0 {
                    return Err(PolyError::BadSexpr(format!("lazysum step {} must be positive", s.step)));
                }
                let lo = self.eval(&s.lower)?;
                let hi = self.eval(&s.upper)?;
                let mut acc = BigInt::zero();
                if hi < lo {
                    return Ok(acc);
                }
                let trips = ((&hi - &lo) / s.step + 1u32).to_u64().unwrap_or(u64::MAX);
                if trips > *self.budget {
                    return Err(PolyError::EvaluationBudgetExceeded);
                }
                *self.budget -= trips;
                let mut v = lo;
                while v <= hi {
                    self.scopes.push((s.var.clone(), v.clone()));
                    let r = self.eval(&s.body);
                    self.scopes.pop();
                    acc += r?;
                    v += s.step;
                }
                acc
            }
        })
    }
}

impl fmt::Display for CountExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, head: &str, xs: &[CountExpr]) -> fmt::Result {
            write!(f, "({head}")?;
            for x in xs {
                write!(f, " {x}")?;
            }
            f.write_str(")")
        }
        match self {
            CountExpr::Int(v) => write!(f, "(int {v})"),
            CountExpr::Param(p) => write!(f, "(param {p})"),
            CountExpr::Add(xs) => list(f, "add", xs),
            CountExpr::Mul(xs) => list(f, "mul", xs),
            CountExpr::Pow(b, k) => write!(f, "(pow {b} {k})"),
            CountExpr::FloorDiv(a, b) => write!(f, "(floordiv {a} {b})"),
            CountExpr::Max0(a) => write!(f, "(max0 {a})"),
            CountExpr::LazySum(s) => write!(
                f,
                "(lazysum {} {} {} {} {})",
                s.var, s.lower, s.upper, s.step, s.body
            ),
        }
    }
}

#[derive(Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' | ' ' | '\t' | '\n' | '\r' => {
                if !cur.is_empty() {
                    out.push(Tok::Atom(std::mem::take(&mut cur)));
                }
                match ch {
                    '(' => out.push(Tok::Open),
                    ')' => out.push(Tok::Close),
                    _ => {}
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(Tok::Atom(cur));
    }
    out
}

fn atom<'t>(tokens: &'t [Tok], pos: &mut usize) -> Result<&'t str, PolyError> {
    match tokens.get(*pos) {
        Some(Tok::Atom(a)) => {
            *pos += 1;
            Ok(a)
        }
        _ => Err(PolyError::BadSexpr(format!("expected atom at token {pos}"))),
    }
}

fn int_atom<T: std::str::FromStr>(tokens: &[Tok], pos: &mut usize) -> Result<T, PolyError> {
    let a = atom(tokens, pos)?;
    a.parse()
        .map_err(|_| PolyError::BadSexpr(format!("expected integer, found `{a}`")))
}

fn parse_node(tokens: &[Tok], pos: &mut usize) -> Result<CountExpr, PolyError> {
    if tokens.get(*pos) != Some(&Tok::Open) {
        return Err(PolyError::BadSexpr(format!("expected `(` at token {pos}")));
    }
    *pos += 1;
    let head = atom(tokens, pos)?.to_string();
    let children = |pos: &mut usize| -> Result<Vec<CountExpr>, PolyError> {
        let mut xs = Vec::new();
        while tokens.get(*pos) == Some(&Tok::Open) {
            xs.push(parse_node(tokens, pos)?);
        }
        Ok(xs)
    };
    let expr = match head.as_str() {
        "int" => {
            let a = atom(tokens, pos)?;
            let v: BigInt = a
                .parse()
                .map_err(|_| PolyError::BadSexpr(format!("bad integer `{a}`")))?;
            CountExpr::Int(v)
        }
        "param" => CountExpr::Param(atom(tokens, pos)?.to_string()),
        "add" | "mul" => {
            let xs = children(pos)?;
            if xs.is_empty() {
                return Err(PolyError::BadSexpr(format!("`{head}` needs operands")));
            }
            if head == "add" {
                CountExpr::Add(xs)
            } else {
                CountExpr::Mul(xs)
            }
        }
        "pow" => {
            let b = parse_node(tokens, pos)?;
            let k: u32 = int_atom(tokens, pos)?;
            CountExpr::Pow(Box::new(b), k)
        }
        "floordiv" => {
            let a = parse_node(tokens, pos)?;
            let b = parse_node(tokens, pos)?;
            CountExpr::FloorDiv(Box::new(a), Box::new(b))
        }
        "max0" => CountExpr::Max0(Box::new(parse_node(tokens, pos)?)),
        "lazysum" => {
            let var = atom(tokens, pos)?.to_string();
            let lower = parse_node(tokens, pos)?;
            let upper = parse_node(tokens, pos)?;
            let step: i64 = int_atom(tokens, pos)?;
            let body = parse_node(tokens, pos)?;
            CountExpr::LazySum(Box::new(LazySum {
                var,
                lower,
                upper,
                step,
                body,
            }))
        }
        other => return Err(PolyError::BadSexpr(format!("unknown node `{other}`"))),
    };
    if tokens.get(*pos) != Some(&Tok::Close) {
        return Err(PolyError::BadSexpr(format!("expected `)` after `{head}`")));
    }
    *pos += 1;
    Ok(expr)
}

/// Renders a variable reference for an affine form used inside count expressions.
pub(crate) fn var_expr(v: &Var) -> CountExpr {
    CountExpr::param(v.name())
}
