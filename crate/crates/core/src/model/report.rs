use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;

use super::{EvaluationResult, Model, ModelError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistributionRow {
    pub category: String,
    pub display_name: String,
    pub count: u128,
    /// Share of the total in hundredths of a percent.
    pub basis_points: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    pub rows: Vec<DistributionRow>,
    pub total: u128,
}

/// Per-category counts with percentages rounded to two decimals. Rounding
/// uses largest remainders, so the shares add up to exactly 100.00%.
pub fn distribution(model: &Model, result: &EvaluationResult) -> Distribution {
    let mut cats: Vec<String> = model.categories.iter().map(|(id, _)| id.clone()).collect();
    for c in result.per_category.keys() {
        if !cats.contains(c) {
            cats.push(c.clone());
        }
    }
    let total = result.total();
    let mut rows: Vec<DistributionRow> = cats
        .into_iter()
        .map(|c| DistributionRow {
            display_name: model.display_name(&c).to_string(),
            count: result.get(&c),
            basis_points: 0,
            category: c,
        })
        .collect();
    if total > 0 {
        let scaled: Vec<(u128, u128)> = rows.iter().map(|r| ((r.count * 10_000) / total, (r.count * 10_000) % total)).collect();
        let assigned: u128 = scaled.iter().map(|s| s.0).sum();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
        for (i, r) in rows.iter_mut().enumerate() {
            r.basis_points = scaled[i].0 as u32;
        }
        for &i in order.iter().take((10_000 - assigned) as usize) {
            rows[i].basis_points += 1;
        }
    }
    Distribution { rows, total }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|r| r.display_name.len()).max().unwrap_or(0).max("Total".len());
        for r in &self.rows {
            writeln!(
                f,
                "{:<w$}  {:>20}  {:>3}.{:02}%",
                r.display_name,
                r.count,
                r.basis_points / 100,
                r.basis_points % 100
            )?;
        }
        writeln!(f, "{:<w$}  {:>20}  100.00%", "Total", self.total)
    }
}

/// Floating-point instructions per memory-movement instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithmeticIntensity {
    pub fp: u128,
    pub mem: u128,
    pub ratio: BigRational,
}

impl ArithmeticIntensity {
    pub fn rendered(&self) -> String {
        round_half_even(&self.ratio, 2)
    }
}

pub fn arithmetic_intensity(model: &Model, result: &EvaluationResult) -> Result<ArithmeticIntensity, ModelError> {
    if model.roles.fp.is_empty() {
        return Err(ModelError::MissingRole("fp"));
    }
    if model.roles.mem.is_empty() {
        return Err(ModelError::MissingRole("mem"));
    }
    let fp: u128 = model.roles.fp.iter().map(|c| result.get(c)).sum();
    let mem: u128 = model.roles.mem.iter().map(|c| result.get(c)).sum();
    if mem == 0 {
        return Err(ModelError::ZeroDenominator);
    }
    Ok(ArithmeticIntensity {
        fp,
        mem,
        ratio: BigRational::new(fp.into(), mem.into()),
    })
}

/// Decimal rendering with ties going to the even last digit.
pub fn round_half_even(r: &BigRational, decimals: u32) -> String {
    let scale = num_traits::pow(BigInt::from(10), decimals as usize);
    let scaled = r * BigRational::from_integer(scale.clone());
    let (q, rem): (BigInt, BigInt) = scaled.numer().div_mod_floor(scaled.denom());
    let twice: BigInt = rem * 2;
    let q = match twice.cmp(scaled.denom()) {
        Ordering::Greater => q + 1,
        Ordering::Equal if q.is_odd() => q + 1,
        _ => q,
    };
    let negative = q < BigInt::zero();
    let digits = q.magnitude().to_string();
    let d = decimals as usize;
    let padded = format!("{digits:0>width$}", width = d + 1);
    let (int, frac) = padded.split_at(padded.len() - d);
    let sign = if negative { "-" } else { "" };
    if d == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}
