use std::fmt::Write;

use crate::polyhedral::CountExpr;

use super::Model;

/// Module the emitted code imports `handle_function_call` from.
pub const RUNTIME_MODULE: &str = "statmodel_runtime";

const PY_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif",
    "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or",
    "pass", "raise", "return", "try", "while", "with", "yield",
];

/// Names the emitted code itself uses.
const PY_RESERVED: &[&str] = &["metrics", "handle_function_call", "max", "sum", "range"];

/// A parameter name that is safe to use as a Python identifier.
pub fn python_identifier(name: &str) -> String {
    if PY_KEYWORDS.contains(&name) || PY_RESERVED.contains(&name) {
        format!("{name}_")
    } else {
        name.to_string()
    }
}

fn expr(e: &CountExpr) -> String {
    match e {
        CountExpr::Int(v) if v.sign() == num_bigint::Sign::Minus => format!("({v})"),
        CountExpr::Int(v) => v.to_string(),
        CountExpr::Param(p) => python_identifier(p),
        CountExpr::Add(xs) => format!("({})", xs.iter().map(expr).collect::<Vec<_>>().join(" + ")),
        CountExpr::Mul(xs) => format!("({})", xs.iter().map(expr).collect::<Vec<_>>().join(" * ")),
        CountExpr::Pow(b, k) => format!("({} ** {k})", expr(b)),
        CountExpr::FloorDiv(a, b) => format!("({} // {})", expr(a), expr(b)),
        CountExpr::Max0(a) => format!("max(0, {})", expr(a)),
        CountExpr::LazySum(s) => format!(
            "sum({} for {} in range({}, {} + 1, {}))",
            expr(&s.body),
            python_identifier(&s.var),
            expr(&s.lower),
            expr(&s.upper),
            s.step
        ),
    }
}

/// Python source with one function per model function. Each returns a dict
/// of category counts for one call; calls fold callee dicts in through
/// `handle_function_call`.
pub fn emit_python(model: &Model) -> String {
    let mut out = String::new();
    out.push_str("# Performance model generated by statmodel.\n");
    let _ = writeln!(out, "# arch_ref: {}", model.arch_ref);
    if let Some(e) = &model.entry {
        let _ = writeln!(out, "# entry: {e}");
    }
    let _ = writeln!(out, "from {RUNTIME_MODULE} import handle_function_call");
    for (name, f) in &model.functions {
        let params: Vec<String> = f.params.iter().map(|p| python_identifier(&p.name)).collect();
        let _ = write!(out, "\n\ndef {name}({}):\n", params.join(", "));
        out.push_str("    metrics = {\n");
        for (cat, e) in f.body.iter() {
            let _ = writeln!(out, "        {cat:?}: {},", expr(e));
        }
        out.push_str("    }\n");
        for c in &f.calls {
            if c.external {
                let _ = writeln!(out, "    # line {}: external call to {}", c.line, c.callee);
                continue;
            }
            let args: Vec<String> = c
                .args
                .iter()
                .map(|(p, e)| format!("{}={}", python_identifier(p), expr(e)))
                .collect();
            let _ = writeln!(out, "    # line {}", c.line);
            let _ = writeln!(
                out,
                "    metrics = handle_function_call(metrics, {}({}), {})",
                c.callee,
                args.join(", "),
                expr(&c.iterations)
            );
        }
        out.push_str("    return metrics\n");
    }
    out
}
