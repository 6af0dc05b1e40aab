//! Binary evidence: ELF sections, DWARF line tables, disassembly and
//! instruction categories.

mod arch;
mod disasm;
mod dwarf;
mod elf;
mod mapping;

use thiserror::Error;

pub use arch::{ArchDescription, MatchKind, Rule, MISC};
pub use disasm::{parse_disassembly, Disassembly, InstructionRecord};
pub use dwarf::{decode_line_program, line_table, DwarfSections, LineRow, LineTable};
pub use elf::{load_elf, parse_elf, ElfImage, Endian, Section};
pub use mapping::{map_lines, LineMap, SourceKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BinaryError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} is not an ELF file: {reason}")]
    NotAnElf { path: String, reason: String },
    #[error("{path} has no .debug_line section; recompile with -g")]
    MissingDebugInfo { path: String },
    #[error("unsupported DWARF line table version {version} at offset 0x{offset:x}")]
    UnsupportedDwarfVersion { version: u16, offset: u64 },
    #[error("corrupt line program at offset 0x{offset:x}: {reason}")]
    CorruptLineProgram { offset: u64, reason: String },
    #[error("{failed} of {total} disassembly lines are unparsable (first at line {first_line})")]
    UnparsableDisassembly { failed: usize, total: usize, first_line: usize },
    #[error("architecture description line {line}: {message}")]
    ArchSyntax { line: usize, message: String },
    #[error("architecture description line {line}: undeclared category `{category}`")]
    UnknownCategory { line: usize, category: String },
}
