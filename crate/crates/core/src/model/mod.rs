//! The assembled model: functions with parametric metric vectors, their call
//! graph, and the parameters a user binds at evaluation time.

mod build;
mod eval;
mod json;
mod python;
mod report;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::metrics::{Finding, MetricVector, ParamInfo};
use crate::polyhedral::{CountExpr, PolyError};

pub use build::{build_model, entry_of};
pub use eval::{evaluate, EvaluationResult};
pub use json::{deserialize, serialize, SCHEMA_VERSION};
pub use python::{emit_python, python_identifier, RUNTIME_MODULE};
pub use report::{arithmetic_intensity, distribution, round_half_even, ArithmeticIntensity, Distribution, DistributionRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("function `{0}` is defined more than once")]
    DuplicateFunction(String),
    #[error("`{caller}` calls `{callee}` at line {line}, which is neither defined nor external")]
    UnresolvedCallee { caller: String, callee: String, line: u32 },
    #[error("no function named `{0}` in the model")]
    UnknownFunction(String),
    #[error("unbound parameters: {}", .0.join(", "))]
    UnboundParameter(Vec<String>),
    #[error("in `{function}`: {source}")]
    Count { function: String, source: PolyError },
    #[error("argument `{param}` of the call to `{callee}` at line {line} is out of range")]
    ArgumentOutOfRange { callee: String, param: String, line: u32 },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("no memory-movement instructions; arithmetic intensity is undefined")]
    ZeroDenominator,
    #[error("the architecture description declares no {0} categories")]
    MissingRole(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCall {
    pub callee: String,
    pub line: u32,
    pub iterations: CountExpr,
    pub external: bool,
    /// Value of each callee parameter in terms of the caller's parameters.
    pub args: BTreeMap<String, CountExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFunction {
    pub params: Vec<ParamInfo>,
    pub body: MetricVector,
    pub calls: Vec<ModelCall>,
    pub flags: Vec<Finding>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Roles {
    pub fp: Vec<String>,
    pub mem: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Meta {
    pub tool_version: String,
    pub sources: Vec<String>,
    /// Seconds since the epoch; zero for reproducible runs.
    pub created_unix: u64,
}

impl Default for Meta {
    fn default() -> Self {
        Meta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            sources: Vec::new(),
            created_unix: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    /// SHA-256 of the architecture description text.
    pub arch_ref: String,
    /// Category ids and display names in declaration order.
    pub categories: Vec<(String, String)>,
    pub roles: Roles,
    pub params: Vec<ParamInfo>,
    pub functions: BTreeMap<String, ModelFunction>,
    pub entry: Option<String>,
    pub meta: Meta,
}

impl Model {
    pub fn function(&self, name: &str) -> Result<&ModelFunction, ModelError> {
        self.functions.get(name).ok_or_else(|| ModelError::UnknownFunction(name.to_string()))
    }

    pub fn display_name<'a>(&'a self, category: &'a str) -> &'a str {
        self.categories
            .iter()
            .find(|(id, _)| id == category)
            .map_or(category, |(_, name)| name.as_str())
    }

    /// Every finding, labelled with its function.
    pub fn findings(&self) -> impl Iterator<Item = (&str, &Finding)> {
        self.functions.iter().flat_map(|(n, f)| f.flags.iter().map(move |x| (n.as_str(), x)))
    }
}
