use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::metrics::{Finding, FindingKind, MetricVector, ParamInfo};
use crate::polyhedral::CountExpr;

use super::{Meta, Model, ModelCall, ModelError, ModelFunction, Roles};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    schema_version: u64,
    arch_ref: String,
    categories: Vec<RawCategory>,
    roles: RawRoles,
    params: Vec<RawParam>,
    functions: BTreeMap<String, RawFunction>,
    entry: Option<String>,
    meta: RawMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCategory {
    id: String,
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoles {
    fp: Vec<String>,
    mem: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    source_line: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunction {
    params: Vec<RawParam>,
    body: BTreeMap<String, String>,
    calls: Vec<RawCall>,
    flags: Vec<RawFlag>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCall {
    callee: String,
    line: u32,
    iterations: String,
    external: bool,
    args: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlag {
    kind: String,
    line: u32,
    message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    tool_version: String,
    sources: Vec<String>,
    created_unix: u64,
}

fn raw_params(ps: &[ParamInfo]) -> Vec<RawParam> {
    ps.iter()
        .map(|p| RawParam {
            name: p.name.clone(),
            source_line: p.source_line,
        })
        .collect()
}

/// Canonical JSON: fixed field order, sorted maps, two-space indent and a
/// trailing newline.
pub fn serialize(model: &Model) -> String {
    let raw = RawModel {
        schema_version: SCHEMA_VERSION,
        arch_ref: model.arch_ref.clone(),
        categories: model
            .categories
            .iter()
            .map(|(id, name)| RawCategory {
                id: id.clone(),
                name: name.clone(),
            })
            .collect(),
        roles: RawRoles {
            fp: model.roles.fp.clone(),
            mem: model.roles.mem.clone(),
        },
        params: raw_params(&model.params),
        functions: model
            .functions
            .iter()
            .map(|(name, f)| {
                let raw = RawFunction {
                    params: raw_params(&f.params),
                    body: f.body.iter().map(|(c, e)| (c.to_string(), e.to_sexpr())).collect(),
                    calls: f
                        .calls
                        .iter()
                        .map(|c| RawCall {
                            callee: c.callee.clone(),
                            line: c.line,
                            iterations: c.iterations.to_sexpr(),
                            external: c.external,
                            args: c.args.iter().map(|(p, e)| (p.clone(), e.to_sexpr())).collect(),
                        })
                        .collect(),
                    flags: f
                        .flags
                        .iter()
                        .map(|x| RawFlag {
                            kind: x.kind.code().to_string(),
                            line: x.line,
                            message: x.message.clone(),
                        })
                        .collect(),
                };
                (name.clone(), raw)
            })
            .collect(),
        entry: model.entry.clone(),
        meta: RawMeta {
            tool_version: model.meta.tool_version.clone(),
            sources: model.meta.sources.clone(),
            created_unix: model.meta.created_unix,
        },
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("model JSON is always serializable");
    s.push('\n');
    s
}

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::MalformedModel(msg.into())
}

fn count(text: &str, what: &str) -> Result<CountExpr, ModelError> {
    let e = CountExpr::parse_sexpr(text).map_err(|e| malformed(format!("{what}: {e}")))?;
    if e.is_negative_constant() {
        return Err(malformed(format!("{what}: negative count `{text}`")));
    }
    Ok(e)
}

fn params(raw: Vec<RawParam>) -> Vec<ParamInfo> {
    raw.into_iter()
        .map(|p| ParamInfo {
            name: p.name,
            source_line: p.source_line,
        })
        .collect()
}

pub fn deserialize(text: &str) -> Result<Model, ModelError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| malformed("missing schema_version"))?
        .as_u64()
        .ok_or_else(|| malformed("schema_version is not a non-negative integer"))?;
    if version != SCHEMA_VERSION {
        return Err(ModelError::SchemaVersionMismatch {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let raw: RawModel = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    let mut functions = BTreeMap::new();
    for (name, rf) in raw.functions {
        let mut body = MetricVector::new();
        for (cat, text) in &rf.body {
            body.set(cat, count(text, &format!("{name}.body.{cat}"))?);
        }
        let mut calls = Vec::new();
        for rc in rf.calls {
            let what = format!("{name} call at line {}", rc.line);
            let mut args = BTreeMap::new();
            for (p, text) in &rc.args {
                args.insert(p.clone(), CountExpr::parse_sexpr(text).map_err(|e| malformed(format!("{what}: {e}")))?);
            }
            calls.push(ModelCall {
                iterations: count(&rc.iterations, &what)?,
                callee: rc.callee,
                line: rc.line,
                external: rc.external,
                args,
            });
        }
        let flags = rf
            .flags
            .into_iter()
            .map(|f| {
                let kind = FindingKind::from_code(&f.kind).ok_or_else(|| malformed(format!("unknown flag kind `{}`", f.kind)))?;
                Ok(Finding::new(kind, f.line, f.message))
            })
            .collect::<Result<_, ModelError>>()?;
        functions.insert(
            name,
            ModelFunction {
                params: params(rf.params),
                body,
                calls,
                flags,
            },
        );
    }
    let model = Model {
        arch_ref: raw.arch_ref,
        categories: raw.categories.into_iter().map(|c| (c.id, c.name)).collect(),
        roles: Roles {
            fp: raw.roles.fp,
            mem: raw.roles.mem,
        },
        params: params(raw.params),
        functions,
        entry: raw.entry,
        meta: Meta {
            tool_version: raw.meta.tool_version,
            sources: raw.meta.sources,
            created_unix: raw.meta.created_unix,
        },
    };
    validate(&model)?;
    Ok(model)
}

fn validate(model: &Model) -> Result<(), ModelError> {
    if let Some(e) = &model.entry {
        if !model.functions.contains_key(e) {
            return Err(malformed(format!("entry `{e}` is not a function of the model")));
        }
    }
    for (name, f) in &model.functions {
        let declared: BTreeSet<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
        let mut used = f.body.free_params();
        for c in &f.calls {
            used.extend(c.iterations.free_params());
            used.extend(c.args.values().flat_map(CountExpr::free_params));
            if c.external {
                continue;
            }
            let callee = model
                .functions
                .get(&c.callee)
                .ok_or_else(|| malformed(format!("`{name}` calls unknown function `{}`", c.callee)))?;
            if let Some(p) = callee.params.iter().find(|p| !c.args.contains_key(&p.name)) {
                return Err(malformed(format!("call from `{name}` to `{}` leaves `{}` unbound", c.callee, p.name)));
            }
        }
        if let Some(p) = used.iter().find(|p| !declared.contains(p.as_str())) {
            return Err(malformed(format!("`{name}` uses undeclared parameter `{p}`")));
        }
    }
    Ok(())
}
