use std::collections::BTreeMap;

use super::disasm::InstructionRecord;
use super::dwarf::LineTable;

/// Source position an instruction is attributed to. [`SourceKey::Unattributed`]
/// collects instructions outside every sequence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceKey {
    Line { file: String, line: u32 },
    Unattributed,
}

pub type LineMap = BTreeMap<SourceKey, Vec<InstructionRecord>>;

/// Attributes each instruction to the last row at or below its address within
/// the enclosing sequence.
pub fn map_lines(table: &LineTable, instrs: &[InstructionRecord]) -> LineMap {
    // (start, end, rows) per sequence, rows sorted by address.
    let mut seqs: Vec<(u64, u64, Vec<(u64, &str, u32)>)> = Vec::new();
    for seq in table.sequences() {
        let Some(last) = seq.last().filter(|r| r.end_sequence) else {
            continue;
        };
        let mut rows: Vec<(u64, &str, u32)> = seq[..seq.len() - 1]
            .iter()
            .map(|r| (r.address, r.file.as_str(), r.line))
            .collect();
        if rows.is_empty() {
            continue;
        }
        // Stable sort keeps the later of two rows at the same address last.
        rows.sort_by_key(|r| r.0);
        seqs.push((rows[0].0, last.address, rows));
    }
    let mut out = LineMap::new();
    for ins in instrs {
        let hit = seqs.iter().find(|(lo, hi, _)| *lo <= ins.address && ins.address < *hi).map(|(_, _, rows)| {
            let k = rows.partition_point(|r| r.0 <= ins.address) - 1;
            SourceKey::Line {
                file: rows[k].1.to_string(),
                line: rows[k].2,
            }
        });
        out.entry(hit.unwrap_or(SourceKey::Unattributed)).or_default().push(ins.clone());
    }
    out
}
