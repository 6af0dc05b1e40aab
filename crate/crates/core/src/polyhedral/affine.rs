use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A variable appearing in an affine form: either a loop index bound by an
/// enclosing level or a free model parameter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    Index(String),
    Param(String),
}

impl Var {
    pub fn name(&self) -> &str {
        match self {
            Var::Index(n) | Var::Param(n) => n,
        }
    }

    pub fn is_param(&self) -> bool {
        matches!(self, Var::Param(_))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Integer affine form `Σ coeff·var + constant`. Zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AffineExpr {
    coeffs: BTreeMap<Var, i64>,
    constant: i64,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        Self::term(v, 1)
    }

    pub fn index(name: &str) -> Self {
        Self::var(Var::Index(name.to_string()))
    }

    pub fn param(name: &str) -> Self {
        Self::var(Var::Param(name.to_string()))
    }

    pub fn term(v: Var, coeff: i64) -> Self {
        let mut e = Self::constant(0);
        e.add_term(v, coeff);
        e
    }

    pub fn from_parts(terms: impl IntoIterator<Item = (Var, i64)>, constant: i64) -> Self {
        let mut e = Self::constant(constant);
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    fn add_term(&mut self, v: Var, c: i64) {
        let slot = self.coeffs.entry(v).or_insert(0);
        *slot += c;
        if *slot == 0 {
            self.coeffs.retain(|_, c| *c != 0);
        }
    }

    pub fn constant_term(&self) -> i64 {
        self.constant
    }

    pub fn coeff(&self, v: &Var) -> i64 {
        self.coeffs.get(v).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Var, i64)> {
        self.coeffs.iter().map(|(v, c)| (v, *c))
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn mentions(&self, v: &Var) -> bool {
        self.coeffs.contains_key(v)
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            out.add_term(v.clone(), *c);
        }
        out.constant += other.constant;
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1))
    }

    pub fn scale(&self, k: i64) -> AffineExpr {
        if k == 0 {
            return AffineExpr::constant(0);
        }
        AffineExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn offset(&self, k: i64) -> AffineExpr {
        let mut out = self.clone();
        out.constant += k;
        out
    }

    /// Drops `v` from the form, returning the remainder.
    pub fn without(&self, v: &Var) -> AffineExpr {
        let mut out = self.clone();
        out.coeffs.remove(v);
        out
    }

    /// Replaces `v` by `replacement`.
    pub fn substitute(&self, v: &Var, replacement: &AffineExpr) -> AffineExpr {
        match self.coeffs.get(v) {
            None => self.clone(),
            Some(&c) => self.without(v).add(&replacement.scale(c)),
        }
    }

    /// Renames every occurrence of `from` to `to` (same coefficient).
    pub fn rename(&self, from: &Var, to: &Var) -> AffineExpr {
        self.substitute(from, &AffineExpr::var(to.clone()))
    }

    /// Negation of the inequality `self ≥ 0` over the integers: `-self - 1 ≥ 0`.
    pub fn negated_inequality(&self) -> AffineExpr {
        self.scale(-1).offset(-1)
    }

    pub fn eval(&self, lookup: &dyn Fn(&Var) -> Option<i64>) -> Option<i128> {
        let mut acc = self.constant as i128;
        for (v, c) in &self.coeffs {
            acc += (*c as i128) * (lookup(v)? as i128);
        }
        Some(acc)
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
            if first {
                if *c < 0 {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_are_dropped() {
        let i = AffineExpr::index("i");
        let e = i.sub(&i).offset(3);
        assert!(e.is_constant());
        assert_eq!(e.constant_term(), 3);
    }

    #[test]
    fn substitution_and_display() {
        let e = AffineExpr::from_parts([(Var::Index("j".into()), 2), (Var::Param("N".into()), -1)], 4);
        assert_eq!(e.to_string(), "2*j - N + 4");
        let s = e.substitute(&Var::Index("j".into()), &AffineExpr::index("i").offset(1));
        assert_eq!(s.to_string(), "2*i - N + 6");
    }

    #[test]
    fn negated_inequality_partitions_integers() {
        let e = AffineExpr::index("j").offset(-5);
        let n = e.negated_inequality();
        for j in -10..10 {
            let look = |_: &Var| Some(j);
            let a = e.eval(&look).unwrap() >= 0;
            let b = n.eval(&look).unwrap() >= 0;
            assert!(a ^ b);
        }
    }
}
