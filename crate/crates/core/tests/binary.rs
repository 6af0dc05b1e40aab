use std::path::{Path, PathBuf};

use proptest::prelude::*;
use statmodel::binary::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str) -> Vec<LineRow> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            LineRow {
                address: u64::from_str_radix(f[0].trim_start_matches("0x"), 16).unwrap(),
                file: f[1].to_string(),
                line: f[2].parse().unwrap(),
                column: f[3].parse().unwrap(),
                is_stmt: f[4] == "1",
                end_sequence: f[5] == "1",
            }
        })
        .collect()
}

fn decode_fixture(elf: &str) -> Vec<LineRow> {
    let image = load_elf(&fixture(elf)).unwrap();
    line_table(&image).unwrap().rows
}

#[test]
fn dwarf5_fixture_matches_reference_decode() {
    let image = load_elf(&fixture("triad.elf")).unwrap();
    assert!(image.section(".text").is_some() && image.section(".debug_line").is_some());
    assert!(image.is_64bit);
    assert_eq!(decode_fixture("triad.elf"), golden("triad.lines.golden"));
}

#[test]
fn dwarf4_fixture_matches_reference_decode() {
    assert_eq!(decode_fixture("triad.dwarf4.elf"), golden("triad.dwarf4.lines.golden"));
}

#[test]
fn cpp_fixture_matches_reference_decode() {
    assert_eq!(decode_fixture("method.elf"), golden("method.lines.golden"));
}

#[test]
fn stripped_binary_reports_missing_debug_info() {
    let err = load_elf(&fixture("triad.stripped.elf")).unwrap_err();
    assert!(matches!(err, BinaryError::MissingDebugInfo { .. }));
    assert!(err.to_string().contains("-g"));
}

#[test]
fn truncated_file_is_not_an_elf() {
    let bytes = std::fs::read(fixture("triad.elf")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short");
    std::fs::write(&p, &bytes[..3]).unwrap();
    assert!(matches!(load_elf(&p), Err(BinaryError::NotAnElf { .. })));
    assert!(matches!(load_elf(&dir.path().join("absent")), Err(BinaryError::Io { .. })));
}

#[test]
fn empty_section_gives_empty_table() {
    let t = decode_line_program(DwarfSections {
        debug_line: &[],
        debug_line_str: &[],
        debug_str: &[],
        endian: Endian::Little,
    })
    .unwrap();
    assert!(t.rows.is_empty());
}

fn decode(bytes: &[u8]) -> Result<LineTable, BinaryError> {
    decode_line_program(DwarfSections {
        debug_line: bytes,
        debug_line_str: &[],
        debug_str: &[],
        endian: Endian::Little,
    })
}

#[test]
fn hand_assembled_minimal_program() {
    // DWARF 3 header: one file "f.c", no include directories.
    let mut hdr = vec![
        1, // min_inst_length
        1, // default_is_stmt
        0xfb, // line_base -5
        14, // line_range
        13, // opcode_base
        0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 1, // standard opcode lengths
        0, // no include directories
    ];
    hdr.extend_from_slice(b"f.c\0\0\0\0\0");
    let program = [
        0x04, 0x01, // set_file 1
        0x00, 0x09, 0x02, 0x00, 0x10, 0, 0, 0, 0, 0, 0, // set_address 0x1000
        0x03, 0x04, // advance_line +4
        0x01, // copy
        0x02, 0x04, // advance_pc 4
        0x00, 0x01, 0x01, // end_sequence
    ];
    let mut unit = vec![3, 0];
    unit.extend_from_slice(&(hdr.len() as u32).to_le_bytes());
    unit.extend_from_slice(&hdr);
    unit.extend_from_slice(&program);
    let mut bytes = (unit.len() as u32).to_le_bytes().to_vec();
    bytes.extend_from_slice(&unit);
    let rows = decode(&bytes).unwrap().rows;
    let row = |address, end_sequence: bool| LineRow {
        address,
        file: "f.c".into(),
        line: 5,
        column: 0,
        is_stmt: !end_sequence,
        end_sequence,
    };
    assert_eq!(rows, vec![row(0x1000, false), row(0x1004, true)]);

    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(decode(&v2), Err(BinaryError::UnsupportedDwarfVersion { version: 2, .. })));
    let cut = &bytes[..bytes.len() - 2];
    assert!(matches!(decode(cut), Err(BinaryError::CorruptLineProgram { offset: 0, .. })));
}

// ----- encoder used only by the round-trip property -------------------------

fn uleb(mut v: u64, out: &mut Vec<u8>) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn sleb(mut v: i64, out: &mut Vec<u8>) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0) {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

const LINE_BASE: i64 = -5;
const LINE_RANGE: u64 = 14;
const OPCODE_BASE: u8 = 13;

#[derive(Clone, Debug)]
struct SynthRow {
    address: u64,
    file: usize,
    line: u32,
    column: u32,
    is_stmt: bool,
}

/// Encodes sequences of rows; the last entry of each sequence is its end address.
fn encode(version: u16, dwarf64: bool, dir: &str, files: &[String], seqs: &[(Vec<SynthRow>, u64)]) -> Vec<u8> {
    let off = |v: u64, out: &mut Vec<u8>| {
        if dwarf64 {
            out.extend_from_slice(&v.to_le_bytes())
        } else {
            out.extend_from_slice(&(v as u32).to_le_bytes())
        }
    };
    let mut hdr = vec![1u8];
    if version >= 4 {
        hdr.push(1);
    }
    hdr.extend_from_slice(&[1, LINE_BASE as i8 as u8, LINE_RANGE as u8, OPCODE_BASE]);
    hdr.extend_from_slice(&[0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 1]);
    if version >= 5 {
        // directories: path as DW_FORM_string
        hdr.extend_from_slice(&[1, 1, 0x08]);
        uleb(1, &mut hdr);
        hdr.extend_from_slice(dir.as_bytes());
        hdr.push(0);
        // files: path string, directory index udata, md5 data16
        hdr.extend_from_slice(&[3, 1, 0x08, 2, 0x0f, 5, 0x1e]);
        uleb(files.len() as u64, &mut hdr);
        for f in files {
            hdr.extend_from_slice(f.as_bytes());
            hdr.push(0);
            uleb(0, &mut hdr);
            hdr.extend_from_slice(&[0xab; 16]);
        }
    } else {
        hdr.extend_from_slice(dir.as_bytes());
        hdr.extend_from_slice(&[0, 0]);
        for f in files {
            hdr.extend_from_slice(f.as_bytes());
            hdr.extend_from_slice(&[0, 1, 0, 0]);
        }
        hdr.push(0);
    }
    let base_file = if version >= 5 { 0 } else { 1 };
    let mut prog = Vec::new();
    for (rows, end) in seqs {
        let (mut addr, mut file, mut line, mut col, mut stmt) = (0u64, 1usize, 1i64, 0u32, true);
        for (k, r) in rows.iter().enumerate() {
            if k == 0 {
                prog.extend_from_slice(&[0, 9, 2]);
                prog.extend_from_slice(&r.address.to_le_bytes());
                addr = r.address;
            }
            if r.file + base_file != file {
                file = r.file + base_file;
                prog.push(4);
                uleb(file as u64, &mut prog);
            }
            if r.column != col {
                col = r.column;
                prog.push(5);
                uleb(col as u64, &mut prog);
            }
            if r.is_stmt != stmt {
                stmt = r.is_stmt;
                prog.push(6);
            }
            let dl = r.line as i64 - line;
            let da = r.address - addr;
            let fits = (0..LINE_RANGE as i64).contains(&(dl - LINE_BASE)) && da < 18;
            if fits && (dl - LINE_BASE) as u64 + LINE_RANGE * da + OPCODE_BASE as u64 <= 255 {
                let special = (dl - LINE_BASE) as u64 + LINE_RANGE * da + OPCODE_BASE as u64;
                prog.push(special as u8);
            } else {
                if da > 0 {
                    prog.push(2);
                    uleb(da, &mut prog);
                }
                if dl != 0 {
                    prog.push(3);
                    sleb(dl, &mut prog);
                }
                prog.push(1);
            }
            addr = r.address;
            line = r.line as i64;
        }
        if *end > addr {
            prog.push(2);
            uleb(end - addr, &mut prog);
        }
        prog.extend_from_slice(&[0, 1, 1]);
    }
    let mut unit = version.to_le_bytes().to_vec();
    if version >= 5 {
        unit.extend_from_slice(&[8, 0]);
    }
    off(hdr.len() as u64, &mut unit);
    unit.extend_from_slice(&hdr);
    unit.extend_from_slice(&prog);
    let mut out = Vec::new();
    if dwarf64 {
        out.extend_from_slice(&0xffff_ffffu32.to_le_bytes());
    }
    off(unit.len() as u64, &mut out);
    out.extend_from_slice(&unit);
    out
}

fn arb_seq(nfiles: usize) -> impl Strategy<Value = (Vec<SynthRow>, u64)> {
    (
        0u64..1 << 40,
        prop::collection::vec((0u64..300, 0..nfiles, 1u32..5000, 0u32..200, any::<bool>()), 1..30),
        0u64..64,
    )
        .prop_map(|(start, steps, tail)| {
            let mut addr = start;
            let rows: Vec<SynthRow> = steps
                .into_iter()
                .map(|(da, file, line, column, is_stmt)| {
                    addr += da;
                    SynthRow { address: addr, file, line, column, is_stmt }
                })
                .collect();
            (rows, addr + tail)
        })
}

proptest! {
    #[test]
    fn encoded_rows_decode_identically(
        version in 3u16..=5,
        dwarf64 in any::<bool>(),
        seqs in prop::collection::vec(arb_seq(3), 1..4),
    ) {
        let files: Vec<String> = vec!["a.c".into(), "b.h".into(), "/abs/c.c".into()];
        let bytes = encode(version, dwarf64, "/src", &files, &seqs);
        let path = |k: usize| if files[k].starts_with('/') { files[k].clone() } else { format!("/src/{}", files[k]) };
        let mut expected = Vec::new();
        for (rows, end) in &seqs {
            for r in rows {
                expected.push(LineRow { address: r.address, file: path(r.file), line: r.line, column: r.column, is_stmt: r.is_stmt, end_sequence: false });
            }
            let last = rows.last().unwrap();
            expected.push(LineRow { address: *end, file: path(last.file), line: last.line, column: last.column, is_stmt: false, end_sequence: true });
        }
        prop_assert_eq!(decode(&bytes).unwrap().rows, expected);
    }
}

// ----- disassembly ----------------------------------------------------------

#[test]
fn parses_instruction_with_symbol() {
    let d = parse_disassembly("0000000000401120 <main>:\n  401126:\t48 89 e5\tmov %rsp,%rbp\n").unwrap();
    assert_eq!(
        d.records,
        vec![InstructionRecord {
            address: 0x401126,
            size: 3,
            mnemonic: "mov".into(),
            operands: "%rsp,%rbp".into(),
            function_symbol: Some("main".into()),
            category: None,
        }]
    );
}

#[test]
fn blank_and_ellipsis_lines_are_skipped() {
    let d = parse_disassembly("\n\t...\n\n").unwrap();
    assert!(d.records.is_empty() && d.unparsable.is_empty());
}

#[test]
fn data_line_without_mnemonic_is_reported() {
    let mut text = String::from("0000000000001000 <f>:\n");
    for k in 0..20 {
        text.push_str(&format!("  {:x}:\t90\tnop\n", 0x1000 + k));
    }
    text.push_str("  2000:\t00 00 00\n");
    let d = parse_disassembly(&text).unwrap();
    assert_eq!(d.records.len(), 20);
    assert_eq!(d.unparsable, vec![(22, "  2000:\t00 00 00".to_string())]);

    let err = parse_disassembly("  2000:\t00 00 00\n").unwrap_err();
    assert!(matches!(err, BinaryError::UnparsableDisassembly { failed: 1, total: 1, first_line: 1 }));
}

#[test]
fn continuation_lines_extend_the_previous_instruction() {
    let text = "0000000000001000 <f>:\n    1000:\t48 b8 00 00 00 00 00 \tmovabs $0x0,%rax\n    1007:\t00 00 00 \n    100a:\tf3 48 ab             \trep stos %rax,%es:(%rdi)\n    100d:\tf2 e9 e1 ff ff ff    \tbnd jmp 1020 <g>   # comment\n";
    let d = parse_disassembly(text).unwrap();
    assert!(d.unparsable.is_empty());
    let got: Vec<(u64, u64, &str, &str)> =
        d.records.iter().map(|r| (r.address, r.size, r.mnemonic.as_str(), r.operands.as_str())).collect();
    assert_eq!(
        got,
        vec![
            (0x1000, 10, "movabs", "$0x0,%rax"),
            (0x100a, 3, "stos", "%rax,%es:(%rdi)"),
            (0x100d, 6, "jmp", "1020 <g>"),
        ]
    );
}

#[test]
fn fixture_disassembly_parses_completely() {
    for name in ["triad.dis", "method.dis"] {
        let d = parse_disassembly(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        assert!(d.unparsable.is_empty(), "{name}: {:?}", d.unparsable);
        assert!(d.records.iter().all(|r| !r.mnemonic.is_empty()));
        let mut addrs: Vec<u64> = d.records.iter().map(|r| r.address).collect();
        addrs.dedup();
        assert_eq!(addrs.len(), d.records.len());
    }
}

// ----- categories -----------------------------------------------------------

#[test]
fn default_categories() {
    let arch = ArchDescription::default_x86_64();
    assert_eq!(arch.categorize("addsd"), "sse2_packed_arithmetic");
    assert_eq!(arch.categorize("movsd"), "sse2_data_movement");
    assert_eq!(arch.categorize("xyzzy"), "misc");
    assert_eq!(arch.categorize("movl"), "integer_data_transfer");
    assert_eq!(arch.categorize("jne"), "integer_control_transfer");
    assert_eq!(arch.categorize("cltq"), "mode64");
    assert_eq!(arch.categories.len(), 7);
    assert!(arch.fp_categories.contains("sse2_packed_arithmetic"));
    assert!(arch.mem_categories.contains("sse2_data_movement"));
    assert_eq!(arch.digest.len(), 64);
}

#[test]
fn malformed_descriptions_are_rejected() {
    let base = "[categories]\nmisc = Misc\nfp = FP\n";
    assert!(ArchDescription::parse(base).is_ok());
    assert!(matches!(
        ArchDescription::parse(&format!("{base}[rules]\nexact addsd = vector\n")),
        Err(BinaryError::UnknownCategory { line: 5, .. })
    ));
    assert!(matches!(
        ArchDescription::parse(&format!("{base}[rules]\nglob add* = fp\n")),
        Err(BinaryError::ArchSyntax { line: 5, .. })
    ));
    assert!(matches!(ArchDescription::parse("[categories]\nfp = FP\n"), Err(BinaryError::ArchSyntax { .. })));
    assert!(matches!(
        ArchDescription::parse(&format!("{base}[roles]\nfp = nope\n")),
        Err(BinaryError::UnknownCategory { .. })
    ));
}

fn arb_arch() -> impl Strategy<Value = (Vec<(bool, String, usize)>, Vec<usize>)> {
    let rule = (any::<bool>(), "[a-d]{1,3}", 0usize..3);
    prop::collection::vec(rule, 0..12).prop_flat_map(|rules| {
        let n = rules.len();
        (Just(rules), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

fn arch_text(rules: &[(bool, String, usize)], order: &[usize]) -> String {
    let mut t = String::from("[categories]\nmisc = Misc\nc0 = A\nc1 = B\nc2 = C\n[rules]\n");
    for &k in order {
        let (exact, pat, cat) = &rules[k];
        t.push_str(&format!("{} {pat} = c{cat}\n", if *exact { "exact" } else { "prefix" }));
    }
    t
}

proptest! {
    #[test]
    fn categorization_is_total_and_exact_rules_are_order_free(
        (rules, perm) in arb_arch(),
        probes in prop::collection::vec("[a-d]{0,4}", 1..20),
    ) {
        // Keep only the first exact rule per pattern so reordering cannot change which one wins.
        let mut seen = std::collections::BTreeSet::new();
        let rules: Vec<_> = rules.into_iter().filter(|(e, p, _)| !*e || seen.insert(p.clone())).collect();
        let identity: Vec<usize> = (0..rules.len()).collect();
        let perm: Vec<usize> = perm.into_iter().filter(|&k| k < rules.len()).collect();
        // Prefix rules keep their relative order; only exact rules move.
        let prefix_order: Vec<usize> = identity.iter().copied().filter(|&k| !rules[k].0).collect();
        let mut exact_order = perm.iter().copied().filter(|&k| rules[k].0);
        let mut pi = prefix_order.iter();
        let mixed: Vec<usize> = perm.iter().map(|&k| if rules[k].0 { exact_order.next().unwrap() } else { *pi.next().unwrap() }).collect();
        let a = ArchDescription::parse(&arch_text(&rules, &identity)).unwrap();
        let b = ArchDescription::parse(&arch_text(&rules, &mixed)).unwrap();
        for p in &probes {
            let got = a.categorize(p);
            prop_assert!(a.has_category(got));
            prop_assert_eq!(got, b.categorize(p));
            if let Some((_, _, c)) = rules.iter().find(|(e, pat, _)| *e && pat == p) {
                prop_assert_eq!(got, format!("c{c}"));
            }
        }
    }
}

// ----- line attribution -----------------------------------------------------

fn row(address: u64, line: u32, end: bool) -> LineRow {
    LineRow {
        address,
        file: "k.c".into(),
        line,
        column: 0,
        is_stmt: true,
        end_sequence: end,
    }
}

fn ins(address: u64) -> InstructionRecord {
    InstructionRecord {
        address,
        size: 1,
        mnemonic: "nop".into(),
        operands: String::new(),
        function_symbol: None,
        category: None,
    }
}

fn key(line: u32) -> SourceKey {
    SourceKey::Line { file: "k.c".into(), line }
}

#[test]
fn interval_attribution() {
    let t = LineTable {
        rows: vec![row(0x10, 3, false), row(0x20, 4, false), row(0x30, 4, true)],
    };
    let m = map_lines(&t, &[ins(0x18), ins(0x08), ins(0x20), ins(0x30)]);
    assert_eq!(m[&key(3)], vec![ins(0x18)]);
    assert_eq!(m[&key(4)], vec![ins(0x20)]);
    assert_eq!(m[&SourceKey::Unattributed], vec![ins(0x08), ins(0x30)]);
}

#[test]
fn fixture_attribution_matches_golden_rows() {
    let image = load_elf(&fixture("triad.elf")).unwrap();
    let table = line_table(&image).unwrap();
    let d = parse_disassembly(&std::fs::read_to_string(fixture("triad.dis")).unwrap()).unwrap();
    let m = map_lines(&table, &d.records);
    // Independent attribution straight from the golden rows: the last row at or
    // below the address before the next end_sequence.
    let rows = golden("triad.lines.golden");
    let mut expected: std::collections::BTreeMap<SourceKey, Vec<u64>> = Default::default();
    for r in &d.records {
        let mut hit = SourceKey::Unattributed;
        let mut current: Option<&LineRow> = None;
        for g in &rows {
            if g.end_sequence {
                if let Some(c) = current {
                    if c.address <= r.address && r.address < g.address {
                        hit = SourceKey::Line { file: c.file.clone(), line: c.line };
                    }
                }
                current = None;
            } else if g.address <= r.address {
                current = Some(g);
            }
        }
        expected.entry(hit).or_default().push(r.address);
    }
    let got: std::collections::BTreeMap<SourceKey, Vec<u64>> =
        m.iter().map(|(k, v)| (k.clone(), v.iter().map(|i| i.address).collect())).collect();
    assert_eq!(got, expected);
    // The loop body line holds the two floating-point operations.
    let body = SourceKey::Line { file: rows[0].file.clone(), line: 5 };
    let mnems: Vec<&str> = m[&body].iter().map(|i| i.mnemonic.as_str()).collect();
    assert_eq!(mnems.iter().filter(|m| ["mulsd", "addsd"].contains(m)).count(), 2);
}

proptest! {
    #[test]
    fn attribution_is_total_over_sequences(
        starts in prop::collection::vec((0u64..50, 1u64..20), 1..10),
        probes in prop::collection::vec(0u64..400, 1..50),
    ) {
        let mut rows = Vec::new();
        let mut addr = 100u64;
        for (k, (gap, len)) in starts.iter().enumerate() {
            addr += gap;
            rows.push(row(addr, k as u32 + 1, false));
            addr += len;
        }
        let end = addr;
        rows.push(row(end, 0, true));
        let t = LineTable { rows };
        let instrs: Vec<InstructionRecord> = probes.iter().map(|&a| ins(a)).collect();
        let m = map_lines(&t, &instrs);
        let total: usize = m.values().map(Vec::len).sum();
        prop_assert_eq!(total, instrs.len());
        let first = t.rows[0].address;
        let un = m.get(&SourceKey::Unattributed).map(|v| v.len()).unwrap_or(0);
        let outside = probes.iter().filter(|&&a| a < first || a >= end).count();
        prop_assert_eq!(un, outside);
    }
}

#[test]
fn category_counts_partition_function_total() {
    let arch = ArchDescription::default_x86_64();
    let mut d = parse_disassembly(&std::fs::read_to_string(fixture("method.dis")).unwrap()).unwrap();
    arch.categorize_all(&mut d.records);
    let in_main: Vec<_> = d.records.iter().filter(|r| r.function_symbol.as_deref() == Some("main")).collect();
    let mut per: std::collections::BTreeMap<&str, usize> = Default::default();
    for r in &in_main {
        *per.entry(r.category.as_deref().unwrap()).or_default() += 1;
    }
    assert_eq!(per.values().sum::<usize>(), in_main.len());
}
