use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::polyhedral::{Binding, CountExpr, PolyError};

use super::{Model, ModelError};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvaluationResult {
    pub root: String,
    /// Totals over the whole call tree below the root.
    pub per_category: BTreeMap<String, u128>,
    /// Each function's own body counts summed over all its invocations.
    pub per_function: BTreeMap<String, BTreeMap<String, u128>>,
    pub flags: Vec<String>,
}

impl EvaluationResult {
    pub fn total(&self) -> u128 {
        self.per_category.values().sum()
    }

    pub fn get(&self, category: &str) -> u128 {
        self.per_category.get(category).copied().unwrap_or(0)
    }
}

struct Walk<'a> {
    model: &'a Model,
    per_category: BTreeMap<String, BigInt>,
    per_function: BTreeMap<String, BTreeMap<String, BigInt>>,
    flags: BTreeSet<String>,
}

fn count(function: &str, e: &CountExpr, binding: &Binding) -> Result<BigInt, ModelError> {
    let v = e.eval(binding).map_err(|source| ModelError::Count {
        function: function.to_string(),
        source,
    })?;
    if v.is_negative() {
        return Err(ModelError::Count {
            function: function.to_string(),
            source: PolyError::NegativeCount,
        });
    }
    Ok(v)
}

impl Walk<'_> {
    fn visit(&mut self, name: &str, binding: &Binding, times: &BigInt) -> Result<(), ModelError> {
        let f = self.model.function(name)?;
        for flag in &f.flags {
            self.flags.insert(format!("{name}: {flag}"));
        }
        for (cat, e) in f.body.iter() {
            let v = count(name, e, binding)? * times;
            *self.per_category.entry(cat.to_string()).or_default() += &v;
            *self.per_function.entry(name.to_string()).or_default().entry(cat.to_string()).or_default() += v;
        }
        for call in &f.calls {
            if call.external {
                continue;
            }
            let k = count(name, &call.iterations, binding)?;
            if k.is_zero() {
                continue;
            }
            let mut inner = Binding::new();
            for (p, arg) in &call.args {
                let v = arg.eval(binding).map_err(|source| ModelError::Count {
                    function: name.to_string(),
                    source,
                })?;
                let v = v.to_i64().ok_or_else(|| ModelError::ArgumentOutOfRange {
                    callee: call.callee.clone(),
                    param: p.clone(),
                    line: call.line,
                })?;
                inner.insert(p.clone(), v);
            }
            self.visit(&call.callee, &inner, &(times * k))?;
        }
        Ok(())
    }
}

fn to_u128(function: &str, v: BigInt) -> Result<u128, ModelError> {
    v.to_u128().ok_or_else(|| ModelError::Count {
        function: function.to_string(),
        source: PolyError::CountOverflow,
    })
}

/// Evaluates the call tree below `root`. The binding must cover the root's
/// parameters; callee parameters are bound through the call arguments.
pub fn evaluate(model: &Model, root: &str, binding: &Binding) -> Result<EvaluationResult, ModelError> {
    let f = model.function(root)?;
    let missing: Vec<String> = f
        .params
        .iter()
        .filter(|p| !binding.contains_key(&p.name))
        .map(|p| p.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::UnboundParameter(missing));
    }
    let mut w = Walk {
        model,
        per_category: BTreeMap::new(),
        per_function: BTreeMap::new(),
        flags: BTreeSet::new(),
    };
    w.visit(root, binding, &BigInt::from(1))?;
    let per_category = w
        .per_category
        .into_iter()
        .map(|(c, v)| Ok((c, to_u128(root, v)?)))
        .collect::<Result<_, ModelError>>()?;
    let mut per_function = BTreeMap::new();
    for (name, cats) in w.per_function {
        let cats = cats
            .into_iter()
            .map(|(c, v)| Ok((c, to_u128(&name, v)?)))
            .collect::<Result<_, ModelError>>()?;
        per_function.insert(name, cats);
    }
    Ok(EvaluationResult {
        root: root.to_string(),
        per_category,
        per_function,
        flags: w.flags.into_iter().collect(),
    })
}
