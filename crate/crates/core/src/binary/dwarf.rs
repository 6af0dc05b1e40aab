use super::elf::{cstr_at, ElfImage, Endian, Reader};
use super::BinaryError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineRow {
    pub address: u64,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub is_stmt: bool,
    pub end_sequence: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LineTable {
    pub rows: Vec<LineRow>,
}

impl LineTable {
    /// Rows grouped by sequence; each slice ends with its `end_sequence` row.
    pub fn sequences(&self) -> Vec<&[LineRow]> {
        let mut out = Vec::new();
        let mut start = 0;
        for (k, r) in self.rows.iter().enumerate() {
            if r.end_sequence {
                out.push(&self.rows[start..=k]);
                start = k + 1;
            }
        }
        if start < self.rows.len() {
            out.push(&self.rows[start..]);
        }
        out
    }
}

/// Raw bytes of the sections a line program may reference.
#[derive(Clone, Copy, Debug)]
pub struct DwarfSections<'a> {
    pub debug_line: &'a [u8],
    pub debug_line_str: &'a [u8],
    pub debug_str: &'a [u8],
    pub endian: Endian,
}

impl<'a> DwarfSections<'a> {
    pub fn from_image(image: &'a ElfImage) -> Self {
        DwarfSections {
            debug_line: image.section_data(".debug_line"),
            debug_line_str: image.section_data(".debug_line_str"),
            debug_str: image.section_data(".debug_str"),
            endian: image.endian,
        }
    }
}

const DW_LNS_COPY: u8 = 1;
const DW_LNS_ADVANCE_PC: u8 = 2;
const DW_LNS_ADVANCE_LINE: u8 = 3;
const DW_LNS_SET_FILE: u8 = 4;
const DW_LNS_SET_COLUMN: u8 = 5;
const DW_LNS_NEGATE_STMT: u8 = 6;
const DW_LNS_SET_BASIC_BLOCK: u8 = 7;
const DW_LNS_CONST_ADD_PC: u8 = 8;
const DW_LNS_FIXED_ADVANCE_PC: u8 = 9;
const DW_LNS_SET_PROLOGUE_END: u8 = 10;
const DW_LNS_SET_EPILOGUE_BEGIN: u8 = 11;
const DW_LNS_SET_ISA: u8 = 12;

const DW_LNE_END_SEQUENCE: u8 = 1;
const DW_LNE_SET_ADDRESS: u8 = 2;
const DW_LNE_DEFINE_FILE: u8 = 3;

const DW_LNCT_PATH: u64 = 1;
const DW_LNCT_DIRECTORY_INDEX: u64 = 2;

const DW_FORM_BLOCK: u64 = 0x09;
const DW_FORM_DATA1: u64 = 0x0b;
const DW_FORM_DATA2: u64 = 0x05;
const DW_FORM_DATA4: u64 = 0x06;
const DW_FORM_DATA8: u64 = 0x07;
const DW_FORM_DATA16: u64 = 0x1e;
const DW_FORM_STRING: u64 = 0x08;
const DW_FORM_STRP: u64 = 0x0e;
const DW_FORM_UDATA: u64 = 0x0f;
const DW_FORM_LINE_STRP: u64 = 0x1f;

fn join(dir: &str, name: &str) -> String {
    if name.starts_with('/') || dir.is_empty() {
        name.to_string()
    } else if dir.ends_with('/') {
        format!("{dir}{name}")
    } else {
        format!("{dir}/{name}")
    }
}

struct Header {
    version: u16,
    address_size: u8,
    min_inst_length: u8,
    default_is_stmt: bool,
    line_base: i8,
    line_range: u8,
    opcode_base: u8,
    standard_lengths: Vec<u8>,
    dirs: Vec<String>,
    /// Resolved file paths indexed by the program's file register.
    files: Vec<Option<String>>,
}

impl Header {
    fn file(&self, index: u64) -> String {
        self.files
            .get(index as usize)
            .cloned()
            .flatten()
            .unwrap_or_else(|| format!("<file {index}>"))
    }
}

enum Value<'a> {
    Str(&'a str),
    Num(u64),
    Skip,
}

struct Decoder<'a> {
    sec: DwarfSections<'a>,
}

impl<'a> Decoder<'a> {
    fn corrupt(&self, offset: usize, reason: &str) -> BinaryError {
        BinaryError::CorruptLineProgram {
            offset: offset as u64,
            reason: reason.to_string(),
        }
    }

    fn form(&self, r: &mut Reader<'a>, form: u64, offset_size: usize) -> Result<Value<'a>, BinaryError> {
        let at = r.pos;
        let eof = || self.corrupt(at, "entry runs past the header");
        let strp = |data: &'a [u8], off: u64| {
            cstr_at(data, off as usize).map(Value::Str).ok_or_else(|| self.corrupt(at, "string offset out of range"))
        };
        Ok(match form {
            DW_FORM_STRING => Value::Str(r.cstr().ok_or_else(eof)?),
            DW_FORM_LINE_STRP => {
                let off = r.uint(offset_size).ok_or_else(eof)?;
                strp(self.sec.debug_line_str, off)?
            }
            DW_FORM_STRP => {
                let off = r.uint(offset_size).ok_or_else(eof)?;
                strp(self.sec.debug_str, off)?
            }
            DW_FORM_UDATA => Value::Num(r.uleb().ok_or_else(eof)?),
            DW_FORM_DATA1 => Value::Num(r.uint(1).ok_or_else(eof)?),
            DW_FORM_DATA2 => Value::Num(r.uint(2).ok_or_else(eof)?),
            DW_FORM_DATA4 => Value::Num(r.uint(4).ok_or_else(eof)?),
            DW_FORM_DATA8 => Value::Num(r.uint(8).ok_or_else(eof)?),
            DW_FORM_DATA16 => {
                r.bytes(16).ok_or_else(eof)?;
                Value::Skip
            }
            DW_FORM_BLOCK => {
                let n = r.uleb().ok_or_else(eof)?;
                r.bytes(n as usize).ok_or_else(eof)?;
                Value::Skip
            }
            other => return Err(self.corrupt(at, &format!("unsupported attribute form 0x{other:x}"))),
        })
    }

    /// DWARF 5 directory or file entry table: `(path, directory index)` per entry.
    fn entry_table(&self, r: &mut Reader<'a>, offset_size: usize) -> Result<Vec<(String, u64)>, BinaryError> {
        let at = r.pos;
        let eof = || self.corrupt(at, "entry format runs past the header");
        let nformats = r.u8().ok_or_else(eof)?;
        let mut formats = Vec::new();
        for _ in 0..nformats {
            formats.push((r.uleb().ok_or_else(eof)?, r.uleb().ok_or_else(eof)?));
        }
        let count = r.uleb().ok_or_else(eof)?;
        let mut out = Vec::new();
        for _ in 0..count {
            let (mut path, mut dir) = (String::new(), 0);
            for &(content, form) in &formats {
                match (content, self.form(r, form, offset_size)?) {
                    (DW_LNCT_PATH, Value::Str(s)) => path = s.to_string(),
                    (DW_LNCT_DIRECTORY_INDEX, Value::Num(n)) => dir = n,
                    _ => {}
                }
            }
            out.push((path, dir));
        }
        Ok(out)
    }

    fn header(&self, r: &mut Reader<'a>, offset_size: usize, unit_start: usize) -> Result<(Header, usize), BinaryError> {
        let eof = |what: &str| self.corrupt(unit_start, &format!("truncated header ({what})"));
        let version = r.u16().ok_or_else(|| eof("version"))?;
        if !(3..=5).contains(&version) {
            return Err(BinaryError::UnsupportedDwarfVersion {
                version,
                offset: unit_start as u64,
            });
        }
        let mut address_size = 8;
        if version >= 5 {
            address_size = r.u8().ok_or_else(|| eof("address size"))?;
            r.u8().ok_or_else(|| eof("segment selector size"))?;
        }
        let header_length = r.uint(offset_size).ok_or_else(|| eof("header length"))? as usize;
        let program_start = r.pos.checked_add(header_length).ok_or_else(|| eof("header length"))?;
        let min_inst_length = r.u8().ok_or_else(|| eof("minimum instruction length"))?;
        if version >= 4 {
            r.u8().ok_or_else(|| eof("maximum operations per instruction"))?;
        }
        let default_is_stmt = r.u8().ok_or_else(|| eof("default_is_stmt"))? != 0;
        let line_base = r.u8().ok_or_else(|| eof("line base"))? as i8;
        let line_range = r.u8().ok_or_else(|| eof("line range"))?;
        let opcode_base = r.u8().ok_or_else(|| eof("opcode base"))?;
        if line_range == 0 {
            return Err(self.corrupt(unit_start, "line_range is zero"));
        }
        let mut standard_lengths = vec![0u8];
        for _ in 1..opcode_base {
            standard_lengths.push(r.u8().ok_or_else(|| eof("standard opcode lengths"))?);
        }
        let mut dirs = Vec::new();
        let mut files = Vec::new();
        if version >= 5 {
            dirs = self.entry_table(r, offset_size)?.into_iter().map(|(p, _)| p).collect();
            for (name, d) in self.entry_table(r, offset_size)? {
                let dir = dirs.get(d as usize).map(String::as_str).unwrap_or("");
                files.push(Some(join(dir, &name)));
            }
        } else {
            loop {
                let d = r.cstr().ok_or_else(|| eof("include directories"))?;
                if d.is_empty() {
                    break;
                }
                dirs.push(d.to_string());
            }
            // File register values are 1-based before DWARF 5.
            files.push(None);
            loop {
                let name = r.cstr().ok_or_else(|| eof("file names"))?;
                if name.is_empty() {
                    break;
                }
                let d = r.uleb().ok_or_else(|| eof("file names"))?;
                r.uleb().ok_or_else(|| eof("file names"))?;
                r.uleb().ok_or_else(|| eof("file names"))?;
                files.push(Some(v4_path(&dirs, d, name)));
            }
        }
        Ok((
            Header {
                version,
                address_size,
                min_inst_length,
                default_is_stmt,
                line_base,
                line_range,
                opcode_base,
                standard_lengths,
                dirs,
                files,
            },
            program_start,
        ))
    }

    fn unit(&self, r: &mut Reader<'a>, rows: &mut Vec<LineRow>) -> Result<(), BinaryError> {
        let unit_start = r.pos;
        let mut length = r.u32().ok_or_else(|| self.corrupt(unit_start, "truncated unit length"))? as u64;
        let mut offset_size = 4;
        if length == 0xffff_ffff {
            length = r.u64().ok_or_else(|| self.corrupt(unit_start, "truncated unit length"))?;
            offset_size = 8;
        } else if length >= 0xffff_fff0 {
            return Err(self.corrupt(unit_start, "reserved unit length"));
        }
        let end = r
            .pos
            .checked_add(length as usize)
            .filter(|&e| e <= r.data.len())
            .ok_or_else(|| self.corrupt(unit_start, "unit extends past the section"))?;
        let unit_data = &r.data[..end];
        let mut hr = Reader::at(unit_data, r.pos, r.endian);
        let (mut h, program_start) = self.header(&mut hr, offset_size, unit_start)?;
        if program_start > end {
            return Err(self.corrupt(unit_start, "header length exceeds the unit"));
        }
        let mut p = Reader::at(unit_data, program_start, r.endian);
        self.program(&mut p, &mut h, rows)?;
        r.pos = end;
        Ok(())
    }

    fn program(&self, p: &mut Reader<'a>, h: &mut Header, rows: &mut Vec<LineRow>) -> Result<(), BinaryError> {
        struct State {
            address: u64,
            file: u64,
            line: i64,
            column: u64,
            is_stmt: bool,
        }
        let fresh = |h: &Header| State {
            address: 0,
            file: 1,
            line: 1,
            column: 0,
            is_stmt: h.default_is_stmt,
        };
        let mut st = fresh(h);
        let emit = |st: &State, h: &Header, end: bool, rows: &mut Vec<LineRow>| {
            rows.push(LineRow {
                address: st.address,
                file: h.file(st.file),
                line: st.line.clamp(0, u32::MAX as i64) as u32,
                column: st.column.min(u32::MAX as u64) as u32,
                // The end row marks the first address past the sequence, not a statement.
                is_stmt: st.is_stmt && !end,
                end_sequence: end,
            });
        };
        let min_inst = h.min_inst_length as u64;
        while p.remaining() > 0 {
            let at = p.pos;
            let eof = || self.corrupt(at, "opcode operands run past the unit");
            let op = p.u8().ok_or_else(eof)?;
            if op >= h.opcode_base {
                let adjusted = (op - h.opcode_base) as u64;
                st.address = st.address.wrapping_add(adjusted / h.line_range as u64 * min_inst);
                st.line += h.line_base as i64 + (adjusted % h.line_range as u64) as i64;
                emit(&st, h, false, rows);
                continue;
            }
            match op {
                0 => {
                    let len = p.uleb().ok_or_else(eof)? as usize;
                    if len == 0 {
                        return Err(self.corrupt(at, "empty extended opcode"));
                    }
                    let body = p.bytes(len).ok_or_else(eof)?;
                    let mut b = Reader::new(body, p.endian);
                    match b.u8().unwrap_or(0) {
                        DW_LNE_END_SEQUENCE => {
                            emit(&st, h, true, rows);
                            st = fresh(h);
                        }
                        DW_LNE_SET_ADDRESS => {
                            let n = len - 1;
                            if n != h.address_size as usize && h.version >= 5 || n == 0 || n > 8 {
                                return Err(self.corrupt(at, "bad DW_LNE_set_address operand size"));
                            }
                            st.address = b.uint(n).ok_or_else(eof)?;
                        }
                        DW_LNE_DEFINE_FILE if h.version < 5 => {
                            let name = b.cstr().ok_or_else(eof)?;
                            let d = b.uleb().ok_or_else(eof)?;
                            h.files.push(Some(v4_path(&h.dirs, d, name)));
                        }
                        _ => {}
                    }
                }
                DW_LNS_COPY => emit(&st, h, false, rows),
                DW_LNS_ADVANCE_PC => {
                    let n = p.uleb().ok_or_else(eof)?;
                    st.address = st.address.wrapping_add(n.wrapping_mul(min_inst));
                }
                DW_LNS_ADVANCE_LINE => st.line += p.sleb().ok_or_else(eof)?,
                DW_LNS_SET_FILE => st.file = p.uleb().ok_or_else(eof)?,
                DW_LNS_SET_COLUMN => st.column = p.uleb().ok_or_else(eof)?,
                DW_LNS_NEGATE_STMT => st.is_stmt = !st.is_stmt,
                DW_LNS_SET_BASIC_BLOCK | DW_LNS_SET_PROLOGUE_END | DW_LNS_SET_EPILOGUE_BEGIN => {}
                DW_LNS_CONST_ADD_PC => {
                    let adjusted = (255 - h.opcode_base) as u64;
                    st.address = st.address.wrapping_add(adjusted / h.line_range as u64 * min_inst);
                }
                DW_LNS_FIXED_ADVANCE_PC => st.address = st.address.wrapping_add(p.u16().ok_or_else(eof)? as u64),
                DW_LNS_SET_ISA => {
                    p.uleb().ok_or_else(eof)?;
                }
                _ => {
                    for _ in 0..h.standard_lengths[op as usize] {
                        p.uleb().ok_or_else(eof)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn v4_path(dirs: &[String], dir_index: u64, name: &str) -> String {
    match dir_index.checked_sub(1).and_then(|k| dirs.get(k as usize)) {
        Some(d) => join(d, name),
        None => name.to_string(),
    }
}

/// Runs every line-number program in `.debug_line` and returns all rows.
pub fn decode_line_program(sections: DwarfSections<'_>) -> Result<LineTable, BinaryError> {
    let d = Decoder { sec: sections };
    let mut r = Reader::new(sections.debug_line, sections.endian);
    let mut rows = Vec::new();
    while r.remaining() > 0 {
        d.unit(&mut r, &mut rows)?;
    }
    Ok(LineTable { rows })
}

pub fn line_table(image: &ElfImage) -> Result<LineTable, BinaryError> {
    decode_line_program(DwarfSections::from_image(image))
}
