//! Exact multivariate polynomials with rational coefficients and closed-form
//! power sums.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::affine::{AffineExpr, Var};
use super::count_expr::{var_expr, CountExpr};

/// Highest power whose prefix sum has a closed form.
pub const MAX_POWER_SUM_DEGREE: u32 = 6;

type Monomial = BTreeMap<Var, u32>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::new(), c);
        p
    }

    pub fn int(c: i64) -> Self {
        Poly::constant(rat(c))
    }

    pub fn var(v: &Var) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::from([(v.clone(), 1)]), BigRational::one());
        p
    }

    pub fn from_affine(e: &AffineExpr) -> Self {
        let mut p = Poly::int(e.constant_term());
        for (v, c) in e.terms() {
            p.add_term(Monomial::from([(v.clone(), 1)]), rat(c));
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Monomial::new()).cloned(),
            _ => None,
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(&rat(-1)))
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = ma.clone();
                for (v, e) in mb {
                    *m.entry(v.clone()).or_insert(0) += e;
                }
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::int(1);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn depends_on(&self, v: &Var) -> bool {
        self.terms.keys().any(|m| m.contains_key(v))
    }

    pub fn degree_in(&self, v: &Var) -> u32 {
        self.terms.keys().filter_map(|m| m.get(v).copied()).max().unwrap_or(0)
    }

    /// Total degree over all variables.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.values().sum()).max().unwrap_or(0)
    }

    /// Splits into coefficients of `v^0, v^1, ...`.
    pub fn coefficients_in(&self, v: &Var) -> Vec<Poly> {
        let mut out = vec![Poly::zero(); self.degree_in(v) as usize + 1];
        for (m, c) in &self.terms {
            let k = m.get(v).copied().unwrap_or(0);
            let mut rest = m.clone();
            rest.remove(v);
            out[k as usize].add_term(rest, c.clone());
        }
        out
    }

    pub fn substitute(&self, v: &Var, replacement: &Poly) -> Poly {
        if !self.depends_on(v) {
            return self.clone();
        }
        let coeffs = self.coefficients_in(v);
        // Horner evaluation in the replacement.
        let mut out = Poly::zero();
        for c in coeffs.iter().rev() {
            out = out.mul(replacement).add(c);
        }
        out
    }

    /// `Σ_{v=lower}^{upper} self`, valid for all integers with `upper ≥ lower - 1`.
    /// Returns `None` when the degree in `v` exceeds [`MAX_POWER_SUM_DEGREE`].
    pub fn sum_over(&self, v: &Var, lower: &Poly, upper: &Poly) -> Option<Poly> {
        if self.degree_in(v) > MAX_POWER_SUM_DEGREE {
            return None;
        }
        let below = lower.sub(&Poly::int(1));
        let mut out = Poly::zero();
        for (k, c) in self.coefficients_in(v).iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let s = power_sum(k as u32);
            let diff = s.substitute(&power_sum_var(), upper).sub(&s.substitute(&power_sum_var(), &below));
            out = out.add(&diff.mul(c));
        }
        Some(out)
    }

    /// Exact division by a linear polynomial; `None` if it leaves a remainder.
    pub fn div_exact_linear(&self, divisor: &AffineExpr) -> Option<Poly> {
        let (pivot, a) = divisor.terms().next().map(|(v, c)| (v.clone(), c))?;
        let inv_a = BigRational::new(BigInt::one(), BigInt::from(a));
        let mut remainder = self.clone();
        let mut quotient = Poly::zero();
        let lin = Poly::from_affine(divisor);
        while remainder.depends_on(&pivot) {
            let deg = remainder.degree_in(&pivot);
            let lead = remainder.coefficients_in(&pivot).pop().unwrap();
            let q = lead.scale(&inv_a).mul(&Poly::var(&pivot).pow(deg - 1));
            remainder = remainder.sub(&q.mul(&lin));
            quotient = quotient.add(&q);
        }
        remainder.is_zero().then_some(quotient)
    }

    pub fn eval(&self, lookup: &dyn Fn(&Var) -> Option<BigInt>) -> Option<BigRational> {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in m {
                let x = BigRational::from_integer(lookup(v)?);
                t *= num_traits::pow(x, *e as usize);
            }
            acc += t;
        }
        Some(acc)
    }

    /// Clears denominators: returns `(d·p, d)` with `d·p` integer-coefficient.
    pub fn integer_form(&self) -> (CountExpr, BigInt) {
        let den = self
            .terms
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let mut terms = Vec::new();
        for (m, c) in &self.terms {
            let k = (c * BigRational::from_integer(den.clone())).to_integer();
            let mut factors = vec![CountExpr::Int(k)];
            for (v, e) in m {
                factors.push(CountExpr::pow(var_expr(v), *e));
            }
            terms.push(CountExpr::mul(factors));
        }
        (CountExpr::add(terms), den)
    }

    /// Renders `p · Π factors` as `floordiv(Π factors · d·p, d)`. Exact whenever
    /// the full product is integer-valued at integer points.
    pub fn to_count_expr_with(&self, factors: Vec<CountExpr>) -> CountExpr {
        let (numer, den) = self.integer_form();
        let mut all = factors;
        all.push(numer);
        CountExpr::floor_div(CountExpr::mul(all), CountExpr::Int(den))
    }

    pub fn to_count_expr(&self) -> CountExpr {
        self.to_count_expr_with(Vec::new())
    }

}

fn power_sum_var() -> Var {
    Var::Index("#x".to_string())
}

/// `S_k(x) = Σ_{v=1}^{x} v^k` as a polynomial in `#x`, via
/// `(x+1)^{k+1} - 1 = Σ_{j=0}^{k} C(k+1, j) S_j(x)`.
pub fn power_sum(k: u32) -> Poly {
    static TABLE: OnceLock<Vec<Poly>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let x = Poly::var(&power_sum_var());
        let mut sums: Vec<Poly> = Vec::new();
        for k in 0..=MAX_POWER_SUM_DEGREE {
            let mut acc = x.add(&Poly::int(1)).pow(k + 1).sub(&Poly::int(1));
            for (j, s) in sums.iter().enumerate() {
                acc = acc.sub(&s.scale(&rat(binomial(k as u64 + 1, j as u64))));
            }
            sums.push(acc.scale(&BigRational::new(BigInt::one(), BigInt::from(k + 1))));
        }
        sums
    });
    table[k as usize].clone()
}

fn binomial(n: u64, k: u64) -> i64 {
    let mut r: i64 = 1;
    for i in 0..k {
        r = r * (n - i) as i64 / (i + 1) as i64;
    }
    r
}
