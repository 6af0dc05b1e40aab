//! Static instruction-mix performance models.
//!
//! Source loops are parsed into polyhedral iteration domains, binary
//! instructions are attributed to source lines through DWARF line tables, and
//! the two are combined into per-function symbolic instruction counts.

pub mod binary;
pub mod frontend;
pub mod metrics;
pub mod model;
pub mod polyhedral;
