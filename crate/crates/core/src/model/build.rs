use std::collections::{BTreeMap, BTreeSet};

use crate::binary::ArchDescription;
use crate::metrics::{Finding, FindingKind, FunctionMetrics, ParamInfo};
use crate::polyhedral::CountExpr;

use super::{Meta, Model, ModelCall, ModelError, ModelFunction, Roles};

/// `main` with no arguments when present, else any `main`.
pub fn entry_of<'a>(names: impl IntoIterator<Item = &'a str>) -> Option<String> {
    let mains: Vec<&str> = names
        .into_iter()
        .filter(|n| n.strip_prefix("main_").is_some_and(|a| a.chars().all(|c| c.is_ascii_digit())))
        .collect();
    mains.iter().find(|n| **n == "main_0").or(mains.first()).map(|s| s.to_string())
}

fn add_param(params: &mut Vec<ParamInfo>, name: &str, line: u32) {
    if !params.iter().any(|p| p.name == name) {
        params.push(ParamInfo {
            source_line: line,
            name: name.to_string(),
        });
    }
}

struct Builder<'a> {
    metrics: BTreeMap<&'a str, &'a FunctionMetrics>,
    done: BTreeMap<String, ModelFunction>,
    on_stack: BTreeSet<String>,
}

impl Builder<'_> {
    /// Builds `name` after its callees. A call back into a function still
    /// being built closes a cycle; it is dropped and reported.
    fn visit(&mut self, name: &str) {
        if self.done.contains_key(name) {
            return;
        }
        let fm = self.metrics[name];
        self.on_stack.insert(name.to_string());
        let mut params = fm.params.clone();
        let mut flags = fm.findings.clone();
        let mut calls = Vec::new();
        for site in &fm.call_sites {
            if site.external {
                calls.push(ModelCall {
                    callee: site.callee.clone(),
                    line: site.line,
                    iterations: site.iterations.clone(),
                    external: true,
                    args: BTreeMap::new(),
                });
                continue;
            }
            if self.on_stack.contains(&site.callee) {
                flags.push(Finding::new(
                    FindingKind::ModelGap,
                    site.line,
                    format!("recursive call to `{}` is not modeled", site.callee),
                ));
                continue;
            }
            self.visit(&site.callee);
            let callee = &self.metrics[site.callee.as_str()];
            let callee_params = self.done[&site.callee].params.clone();
            let mut args = BTreeMap::new();
            for p in &callee_params {
                let actual = callee
                    .formals
                    .iter()
                    .position(|f| *f == p.name)
                    .and_then(|k| site.args.get(k).cloned().flatten());
                let value = match actual {
                    Some(a) => {
                        for v in a.vars() {
                            add_param(&mut params, v.name(), site.line);
                        }
                        CountExpr::from_affine(&a)
                    }
                    None => {
                        let fresh = format!("{}_{}", p.name, site.line);
                        add_param(&mut params, &fresh, site.line);
                        CountExpr::param(&fresh)
                    }
                };
                args.insert(p.name.clone(), value);
            }
            calls.push(ModelCall {
                callee: site.callee.clone(),
                line: site.line,
                iterations: site.iterations.clone(),
                external: false,
                args,
            });
        }
        params.sort();
        flags.sort();
        flags.dedup();
        self.on_stack.remove(name);
        self.done.insert(
            name.to_string(),
            ModelFunction {
                params,
                body: fm.body.clone(),
                calls,
                flags,
            },
        );
    }
}

/// Assembles per-function metrics into a model. Callee parameters are bound
/// at each call site: to the actual argument when it is affine in the
/// caller's parameters, otherwise to a fresh `<name>_<line>` parameter of
/// the caller.
pub fn build_model(metrics: &[FunctionMetrics], arch: &ArchDescription) -> Result<Model, ModelError> {
    let mut by_name = BTreeMap::new();
    for m in metrics {
        if by_name.insert(m.mangled_name.as_str(), m).is_some() {
            return Err(ModelError::DuplicateFunction(m.mangled_name.clone()));
        }
    }
    for m in metrics {
        for c in &m.call_sites {
            if !c.external && !by_name.contains_key(c.callee.as_str()) {
                return Err(ModelError::UnresolvedCallee {
                    caller: m.mangled_name.clone(),
                    callee: c.callee.clone(),
                    line: c.line,
                });
            }
        }
    }
    let mut b = Builder {
        metrics: by_name,
        done: BTreeMap::new(),
        on_stack: BTreeSet::new(),
    };
    let entry = entry_of(b.metrics.keys().copied());
    // Start from the entry so that a cycle is broken on its way back up.
    let order: Vec<&str> = entry.iter().map(String::as_str).chain(b.metrics.keys().copied()).collect();
    for name in order {
        b.visit(name);
    }
    let functions = b.done;
    let params = model_params(&functions, entry.as_deref());
    Ok(Model {
        arch_ref: arch.digest.clone(),
        categories: arch.categories.clone(),
        roles: Roles {
            fp: arch.fp_categories.iter().cloned().collect(),
            mem: arch.mem_categories.iter().cloned().collect(),
        },
        params,
        functions,
        entry,
        meta: Meta::default(),
    })
}

/// Parameters of the entry, or of every function nobody calls.
fn model_params(functions: &BTreeMap<String, ModelFunction>, entry: Option<&str>) -> Vec<ParamInfo> {
    let roots: Vec<&str> = match entry {
        Some(e) => vec![e],
        None => {
            let called: BTreeSet<&str> = functions
                .values()
                .flat_map(|f| f.calls.iter().map(|c| c.callee.as_str()))
                .collect();
            functions.keys().map(String::as_str).filter(|n| !called.contains(n)).collect()
        }
    };
    let mut out = Vec::new();
    for r in roots {
        for p in &functions[r].params {
            add_param(&mut out, &p.name, p.source_line);
        }
    }
    out.sort();
    out
}
