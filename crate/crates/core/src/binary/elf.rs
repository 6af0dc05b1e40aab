use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::BinaryError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub addr: u64,
    pub offset: u64,
    pub size: u64,
    pub data: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct ElfImage {
    pub path: PathBuf,
    pub is_64bit: bool,
    pub endian: Endian,
    pub sections: BTreeMap<String, Section>,
}

impl ElfImage {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn section_data(&self, name: &str) -> &[u8] {
        self.sections.get(name).map(|s| s.data.as_slice()).unwrap_or(&[])
    }
}

/// Bounds-checked reader over a byte slice with a fixed byte order.
#[derive(Clone)]
pub(crate) struct Reader<'a> {
    pub data: &'a [u8],
    pub pos: usize,
    pub endian: Endian,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8], endian: Endian) -> Self {
        Reader { data, pos: 0, endian }
    }

    pub fn at(data: &'a [u8], pos: usize, endian: Endian) -> Self {
        Reader { data, pos, endian }
    }

    pub fn remaining(&self) -> usize {
        self.data.len().saturating_sub(self.pos)
    }

    pub fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.data.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    pub fn uint(&mut self, n: usize) -> Option<u64> {
        let b = self.bytes(n)?;
        let mut v = 0u64;
        match self.endian {
            Endian::Little => b.iter().rev().for_each(|&x| v = (v << 8) | x as u64),
            Endian::Big => b.iter().for_each(|&x| v = (v << 8) | x as u64),
        }
        Some(v)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.uint(1).map(|v| v as u8)
    }

    pub fn u16(&mut self) -> Option<u16> {
        self.uint(2).map(|v| v as u16)
    }

    pub fn u32(&mut self) -> Option<u32> {
        self.uint(4).map(|v| v as u32)
    }

    pub fn u64(&mut self) -> Option<u64> {
        self.uint(8)
    }

    pub fn uleb(&mut self) -> Option<u64> {
        let mut v = 0u64;
        let mut shift = 0;
        loop {
            let b = self.u8()?;
            if shift < 64 {
                v |= ((b & 0x7f) as u64) << shift;
            }
            shift += 7;
            if b & 0x80 == 0 {
                return Some(v);
            }
        }
    }

    pub fn sleb(&mut self) -> Option<i64> {
        let mut v = 0i64;
        let mut shift = 0;
        loop {
            let b = self.u8()?;
            if shift < 64 {
                v |= ((b & 0x7f) as i64) << shift;
            }
            shift += 7;
            if b & 0x80 == 0 {
                if shift < 64 && b & 0x40 != 0 {
                    v |= -1i64 << shift;
                }
                return Some(v);
            }
        }
    }

    pub fn cstr(&mut self) -> Option<&'a str> {
        let rest = self.data.get(self.pos..)?;
        let n = rest.iter().position(|&b| b == 0)?;
        let s = std::str::from_utf8(&rest[..n]).ok()?;
        self.pos += n + 1;
        Some(s)
    }
}

pub(crate) fn cstr_at(data: &[u8], offset: usize) -> Option<&str> {
    Reader::at(data, offset, Endian::Little).cstr()
}

/// Reads an ELF file and its section table.
pub fn load_elf(path: &Path) -> Result<ElfImage, BinaryError> {
    let bytes = std::fs::read(path).map_err(|e| BinaryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let image = parse_elf(&bytes, path)?;
    if image.section(".debug_line").is_none() {
        return Err(BinaryError::MissingDebugInfo {
            path: path.display().to_string(),
        });
    }
    Ok(image)
}

/// Parses ELF bytes without requiring debug information.
pub fn parse_elf(bytes: &[u8], path: &Path) -> Result<ElfImage, BinaryError> {
    let bad = |why: &str| BinaryError::NotAnElf {
        path: path.display().to_string(),
        reason: why.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != b"\x7fELF" {
        return Err(bad("missing ELF magic"));
    }
    let is_64bit = match bytes[4] {
        1 => false,
        2 => true,
        _ => return Err(bad("unknown ELF class")),
    };
    let endian = match bytes[5] {
        1 => Endian::Little,
        2 => Endian::Big,
        _ => return Err(bad("unknown ELF data encoding")),
    };
    let truncated = || bad("truncated header");
    let word = if is_64bit { 8 } else { 4 };
    let mut r = Reader::at(bytes, 16, endian);
    r.bytes(2 + 2 + 4).ok_or_else(truncated)?; // type, machine, version
    r.uint(word).ok_or_else(truncated)?; // entry
    r.uint(word).ok_or_else(truncated)?; // phoff
    let shoff = r.uint(word).ok_or_else(truncated)?;
    r.u32().ok_or_else(truncated)?; // flags
    r.u16().ok_or_else(truncated)?; // ehsize
    r.u16().ok_or_else(truncated)?; // phentsize
    r.u16().ok_or_else(truncated)?; // phnum
    let shentsize = r.u16().ok_or_else(truncated)? as u64;
    let shnum = r.u16().ok_or_else(truncated)? as u64;
    let shstrndx = r.u16().ok_or_else(truncated)? as u64;

    struct Raw {
        name: u32,
        kind: u32,
        addr: u64,
        offset: u64,
        size: u64,
    }
    let mut raw = Vec::new();
    for k in 0..shnum {
        let at = shoff
            .checked_add(k * shentsize)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| bad("section table out of range"))?;
        let mut r = Reader::at(bytes, at, endian);
        let sec = (|| {
            let name = r.u32()?;
            let kind = r.u32()?;
            r.uint(word)?; // flags
            let addr = r.uint(word)?;
            let offset = r.uint(word)?;
            let size = r.uint(word)?;
            Some(Raw { name, kind, addr, offset, size })
        })()
        .ok_or_else(|| bad("section header out of range"))?;
        raw.push(sec);
    }
    let contents = |s: &Raw| -> Result<Vec<u8>, BinaryError> {
        // SHT_NOBITS occupies no file space.
        if s.kind == 8 {
            return Ok(Vec::new());
        }
        let start = usize::try_from(s.offset).map_err(|_| bad("section offset out of range"))?;
        let end = start
            .checked_add(usize::try_from(s.size).map_err(|_| bad("section size out of range"))?)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("section extends past end of file"))?;
        Ok(bytes[start..end].to_vec())
    };
    let names = match raw.get(shstrndx as usize) {
        Some(s) if shnum > 0 => contents(s)?,
        _ => Vec::new(),
    };
    let mut sections = BTreeMap::new();
    for s in raw.iter().skip(1) {
        let name = cstr_at(&names, s.name as usize).unwrap_or("").to_string();
        if name.is_empty() {
            continue;
        }
        sections.insert(
            name,
            Section {
                addr: s.addr,
                offset: s.offset,
                size: s.size,
                data: contents(s)?,
            },
        );
    }
    Ok(ElfImage {
        path: path.to_path_buf(),
        is_64bit,
        endian,
        sections,
    })
}
