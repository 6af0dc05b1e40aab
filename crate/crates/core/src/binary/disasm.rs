use super::BinaryError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionRecord {
    pub address: u64,
    /// Encoded length in bytes, including continuation lines.
    pub size: u64,
    pub mnemonic: String,
    pub operands: String,
    pub function_symbol: Option<String>,
    pub category: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Disassembly {
    pub records: Vec<InstructionRecord>,
    /// `(line number, text)` of lines that could not be parsed.
    pub unparsable: Vec<(usize, String)>,
}

/// Instruction prefixes objdump prints ahead of the mnemonic.
const PREFIXES: &[&str] = &[
    "rep", "repz", "repe", "repnz", "repne", "lock", "bnd", "notrack", "data16", "data32", "addr32", "cs", "ds",
    "es", "ss", "fs", "gs", "rex", "rex.w", "rex.b", "rex.r", "rex.x", "xacquire", "xrelease",
];

fn symbol_header(line: &str) -> Option<&str> {
    let (addr, rest) = line.split_once(' ')?;
    if addr.is_empty() || !addr.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    rest.strip_prefix('<')?.strip_suffix(">:")
}

fn hex_bytes(s: &str) -> Option<u64> {
    let mut n = 0;
    for b in s.split_whitespace() {
        if b.len() != 2 || !b.chars().all(|c| c.is_ascii_hexdigit()) {
            return None;
        }
        n += 1;
    }
    Some(n)
}

fn split_mnemonic(text: &str) -> Option<(String, String)> {
    let text = text.split('#').next().unwrap_or("").trim();
    let mut rest = text;
    loop {
        let (word, tail) = match rest.find(char::is_whitespace) {
            Some(k) => (&rest[..k], rest[k..].trim_start()),
            None => (rest, ""),
        };
        if word.is_empty() {
            return None;
        }
        let lower = word.to_ascii_lowercase();
        if PREFIXES.contains(&lower.as_str()) && !tail.is_empty() {
            rest = tail;
            continue;
        }
        return Some((lower, tail.trim_end().to_string()));
    }
}

/// Parses `objdump -d` text. Lines that are neither headers, blanks nor
/// instructions are reported in `unparsable`; more than 10% of them is fatal.
pub fn parse_disassembly(text: &str) -> Result<Disassembly, BinaryError> {
    let mut out = Disassembly::default();
    let mut symbol: Option<String> = None;
    let mut candidates = 0usize;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        let trimmed = line.trim();
        if trimmed.is_empty()
            || trimmed == "..."
            || trimmed.starts_with("Disassembly of section")
            || trimmed.contains("file format")
        {
            continue;
        }
        if let Some(s) = symbol_header(trimmed) {
            symbol = Some(s.to_string());
            continue;
        }
        candidates += 1;
        let parsed = (|| {
            let (addr, rest) = trimmed.split_once(':')?;
            let address = u64::from_str_radix(addr.trim(), 16).ok()?;
            let mut fields = rest.split('\t').skip_while(|f| f.trim().is_empty());
            let bytes = fields.next()?;
            let size = hex_bytes(bytes)?;
            let insn: Vec<&str> = fields.collect();
            Some((address, size, insn.join("\t")))
        })();
        match parsed {
            Some((address, size, insn)) if insn.trim().is_empty() => {
                // A long encoding wraps onto a bytes-only line right after its instruction.
                match out.records.last_mut() {
                    Some(prev) if prev.address + prev.size == address => prev.size += size,
                    _ => out.unparsable.push((k + 1, raw.to_string())),
                }
            }
            Some((address, size, insn)) => match split_mnemonic(&insn) {
                Some((mnemonic, operands)) => out.records.push(InstructionRecord {
                    address,
                    size,
                    mnemonic,
                    operands,
                    function_symbol: symbol.clone(),
                    category: None,
                }),
                None => out.unparsable.push((k + 1, raw.to_string())),
            },
            None => out.unparsable.push((k + 1, raw.to_string())),
        }
    }
    if out.unparsable.len() * 10 > candidates && !out.unparsable.is_empty() {
        let (line, _) = out.unparsable[0];
        return Err(BinaryError::UnparsableDisassembly {
            failed: out.unparsable.len(),
            total: candidates,
            first_line: line,
        });
    }
    Ok(out)
}
