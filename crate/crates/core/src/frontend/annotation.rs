use num_rational::Rational64;

use super::FrontendError;

/// A single `key:value` hint from a `#pragma @Annotation {…}` directive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Annotation {
    /// `iters:N`: the loop or branch executes N times per enclosing iteration.
    IterationCount(u64),
    /// `pct:P`: fraction of enclosing iterations that take the branch.
    Percentage(Rational64),
    /// `lp_init:x`: parameter standing in for the loop's initial value.
    LpInit(String),
    /// `lp_cond:y`: parameter standing in for the loop's bound.
    LpCond(String),
    /// `skip:yes`: the scope contributes nothing.
    Skip,
}

impl Annotation {
    pub fn key(&self) -> &'static str {
        match self {
            Annotation::IterationCount(_) => "iters",
            Annotation::Percentage(_) => "pct",
            Annotation::LpInit(_) => "lp_init",
            Annotation::LpCond(_) => "lp_cond",
            Annotation::Skip => "skip",
        }
    }

    pub fn value_text(&self) -> String {
        match self {
            Annotation::IterationCount(n) => n.to_string(),
            Annotation::Percentage(p) => format!("{}/{}", p.numer(), p.denom()),
            Annotation::LpInit(v) | Annotation::LpCond(v) => v.clone(),
            Annotation::Skip => "yes".into(),
        }
    }
}

/// Annotations attached to one statement; later keys override earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    items: Vec<Annotation>,
}

impl Annotations {
    pub fn insert(&mut self, a: Annotation) {
        self.items.retain(|x| x.key() != a.key());
        self.items.push(a);
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.items.iter()
    }

    pub fn skip(&self) -> bool {
        self.items.iter().any(|a| matches!(a, Annotation::Skip))
    }

    pub fn iterations(&self) -> Option<u64> {
        self.items.iter().find_map(|a| match a {
            Annotation::IterationCount(n) => Some(*n),
            _ => None,
        })
    }

    pub fn percentage(&self) -> Option<Rational64> {
        self.items.iter().find_map(|a| match a {
            Annotation::Percentage(p) => Some(*p),
            _ => None,
        })
    }

    pub fn lp_init(&self) -> Option<&str> {
        self.items.iter().find_map(|a| match a {
            Annotation::LpInit(v) => Some(v.as_str()),
            _ => None,
        })
    }

    pub fn lp_cond(&self) -> Option<&str> {
        self.items.iter().find_map(|a| match a {
            Annotation::LpCond(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Removes and returns the loop-completion hints (`lp_init`, `lp_cond`).
    pub fn take_loop_hints(&mut self) -> Vec<Annotation> {
        let (hints, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.items)
            .into_iter()
            .partition(|a| matches!(a, Annotation::LpInit(_) | Annotation::LpCond(_)));
        self.items = rest;
        hints
    }

    /// `{k:v,…}` in canonical spelling.
    pub fn render(&self) -> String {
        let kv: Vec<String> = self.items.iter().map(|a| format!("{}:{}", a.key(), a.value_text())).collect();
        format!("{{{}}}", kv.join(","))
    }
}

fn malformed(text: &str, why: &str) -> FrontendError {
    FrontendError::MalformedAnnotation {
        text: text.to_string(),
        reason: why.to_string(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `0.25`, `1/4` or `25%` exactly.
fn parse_fraction(v: &str) -> Option<Rational64> {
    if let Some(pct) = v.strip_suffix('%') {
        return parse_fraction(pct).map(|r| r / 100);
    }
    if let Some((n, d)) = v.split_once('/') {
        let (n, d): (i64, i64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (d != 0).then(|| Rational64::new(n, d));
    }
    let (int, frac) = v.split_once('.').unwrap_or((v, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 15 {
        return None;
    }
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let scale = 10i64.pow(frac.len() as u32);
    let part: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Rational64::new(whole.checked_mul(scale)? + part, scale))
}

/// Parses a `#pragma @Annotation {k:v,…}` line into its annotations, in order.
pub fn parse_annotation(pragma_text: &str) -> Result<Vec<Annotation>, FrontendError> {
    let text = pragma_text.trim();
    let rest = text
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|t| t.strip_prefix("pragma"))
        .map(str::trim_start)
        .and_then(|t| t.strip_prefix("@Annotation"))
        .ok_or_else(|| malformed(text, "expected `#pragma @Annotation`"))?
        .trim();
    let inner = rest
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| malformed(text, "expected `{key:value,...}`"))?;
    if inner.contains(['{', '}']) {
        return Err(malformed(text, "nested braces"));
    }
    let mut out = Vec::new();
    for pair in inner.split(',') {
        let (k, v) = pair
            .split_once(':')
            .ok_or_else(|| malformed(text, &format!("`{}` is not key:value", pair.trim())))?;
        let (k, v) = (k.trim(), v.trim());
        if v.is_empty() {
            return Err(malformed(text, &format!("empty value for `{k}`")));
        }
        let a = match k {
            "iters" => Annotation::IterationCount(
                v.parse()
                    .map_err(|_| malformed(text, &format!("`iters` needs a non-negative integer, got `{v}`")))?,
            ),
            "pct" => {
                let p = parse_fraction(v).ok_or_else(|| malformed(text, &format!("bad percentage `{v}`")))?;
                if p < Rational64::from_integer(0) || p > Rational64::from_integer(1) {
                    return Err(malformed(text, &format!("percentage `{v}` outside [0,1]")));
                }
                Annotation::Percentage(p)
            }
            "lp_init" | "lp_cond" => {
                if !is_identifier(v) {
                    return Err(malformed(text, &format!("`{k}` needs an identifier, got `{v}`")));
                }
                if k == "lp_init" {
                    Annotation::LpInit(v.to_string())
                } else {
                    Annotation::LpCond(v.to_string())
                }
            }
            "skip" => match v {
                "yes" | "true" => Annotation::Skip,
                _ => return Err(malformed(text, &format!("`skip` takes `yes`, got `{v}`"))),
            },
            other => return Err(FrontendError::UnknownAnnotationKey(other.to_string())),
        };
        out.push(a);
    }
    Ok(out)
}
