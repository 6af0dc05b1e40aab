//! C-subset parsing, annotations and static control part extraction.

mod annotation;
mod ast;
mod lexer;
mod parser;
pub mod pretty;
mod scop;

use thiserror::Error;

pub use annotation::{parse_annotation, Annotation, Annotations};
pub use ast::*;
pub use lexer::{tokenize, TokKind, Token};
pub use parser::parse_source;
pub use scop::{extract_scop, to_affine, Bound, Comparison, LoopScop, ScopFailure, ScopResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("unsupported construct at line {line}: {construct}")]
    Unsupported { line: u32, construct: String },
    #[error("malformed annotation `{text}`: {reason}")]
    MalformedAnnotation { text: String, reason: String },
    #[error("unknown annotation key `{0}`")]
    UnknownAnnotationKey(String),
}
