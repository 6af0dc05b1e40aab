//! `statmodel`: build parametric instruction-count models from C/C++ sources
//! and their debug binaries, then evaluate, export and report on them.
//!
//! Exit codes: 0 success, 2 model gaps under `--strict`, 64 usage error,
//! 65 bad input data, 66 missing or unreadable input, 73 output not writable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use statmodel::binary::{line_table, load_elf, map_lines, parse_disassembly, ArchDescription, BinaryError};
use statmodel::frontend::{parse_source, FrontendError};
use statmodel::metrics::{collect_bottom_up, generate_with_known, LineEvidence};
use statmodel::model::{
    arithmetic_intensity, build_model, deserialize, distribution, emit_python, evaluate, serialize, Model, ModelError,
};
use statmodel::polyhedral::Binding;

const EX_GAPS: u8 = 2;
const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_NOINPUT: u8 = 66;
const EX_CANTCREAT: u8 = 73;

#[derive(Parser)]
#[command(name = "statmodel", version, about = "Static instruction-mix performance models")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze sources and their binary into a model.
    Analyze(AnalyzeArgs),
    /// Evaluate a model for concrete parameter values.
    Eval(EvalArgs),
    /// Write the model as Python.
    Export(ExportArgs),
    /// Instruction distribution or arithmetic intensity.
    Report(ReportArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "source", required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    elf: PathBuf,
    /// `objdump -d` output for the same binary.
    #[arg(long)]
    disasm: PathBuf,
    /// Architecture description file.
    #[arg(long, env = "STATMODEL_ARCH")]
    arch: PathBuf,
    /// Model file to write; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Exit with status 2 when part of the code could not be modeled.
    #[arg(long)]
    strict: bool,
    /// Zero the creation timestamp so identical inputs give identical output.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    /// Parameter binding `name=value`; repeatable.
    #[arg(short, long = "param", value_parser = parse_binding)]
    params: Vec<(String, i64)>,
    /// Root function; defaults to the model's entry.
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    model: PathBuf,
    /// Python file to write; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Distribution,
    Ai,
}

#[derive(Args)]
struct ReportArgs {
    model: PathBuf,
    #[arg(long, value_enum, default_value = "distribution")]
    report: ReportKind,
    #[arg(short, long = "param", value_parser = parse_binding)]
    params: Vec<(String, i64)>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    json: bool,
}

fn parse_binding(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not name=value"))?;
    let v = v.trim().parse().map_err(|_| format!("`{v}` is not an integer"))?;
    Ok((k.trim().to_string(), v))
}

/// A failure with its exit status and a stable code for the stderr line.
struct Failure {
    status: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn new(status: u8, code: &'static str, message: impl Into<String>) -> Self {
        Failure {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<FrontendError> for Failure {
    fn from(e: FrontendError) -> Self {
        let code = match e {
            FrontendError::Syntax { .. } => "SYNTAX",
            FrontendError::Unsupported { .. } => "UNSUPPORTED_CONSTRUCT",
            FrontendError::MalformedAnnotation { .. } => "MALFORMED_ANNOTATION",
            FrontendError::UnknownAnnotationKey(_) => "UNKNOWN_ANNOTATION_KEY",
        };
        Failure::new(EX_DATAERR, code, e.to_string())
    }
}

impl From<BinaryError> for Failure {
    fn from(e: BinaryError) -> Self {
        let (status, code) = match e {
            BinaryError::Io { .. } => (EX_NOINPUT, "IO"),
            BinaryError::MissingDebugInfo { .. } => (EX_NOINPUT, "MISSING_DEBUG_INFO"),
            BinaryError::NotAnElf { .. } => (EX_DATAERR, "NOT_AN_ELF"),
            BinaryError::UnsupportedDwarfVersion { .. } => (EX_DATAERR, "UNSUPPORTED_DWARF_VERSION"),
            BinaryError::CorruptLineProgram { .. } => (EX_DATAERR, "CORRUPT_LINE_PROGRAM"),
            BinaryError::UnparsableDisassembly { .. } => (EX_DATAERR, "UNPARSABLE_DISASSEMBLY"),
            BinaryError::ArchSyntax { .. } => (EX_DATAERR, "ARCH_SYNTAX"),
            BinaryError::UnknownCategory { .. } => (EX_DATAERR, "UNKNOWN_CATEGORY"),
        };
        Failure::new(status, code, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::DuplicateFunction(_) => "DUPLICATE_FUNCTION",
            ModelError::UnresolvedCallee { .. } => "UNRESOLVED_CALLEE",
            ModelError::UnknownFunction(_) => "UNKNOWN_FUNCTION",
            ModelError::UnboundParameter(_) => "UNBOUND_PARAMETER",
            ModelError::Count { .. } => "COUNT",
            ModelError::ArgumentOutOfRange { .. } => "ARGUMENT_OUT_OF_RANGE",
            ModelError::SchemaVersionMismatch { .. } => "SCHEMA_VERSION_MISMATCH",
            ModelError::MalformedModel(_) => "MALFORMED_MODEL",
            ModelError::ZeroDenominator => "ZERO_DENOMINATOR",
            ModelError::MissingRole(_) => "MISSING_ROLE",
        };
        Failure::new(EX_DATAERR, code, e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EX_NOINPUT, "IO", format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::new(EX_CANTCREAT, "IO", format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Ok(deserialize(&read_input(path)?)?)
}

fn root_of(model: &Model, function: Option<&str>) -> Result<String, Failure> {
    match function.map(str::to_string).or_else(|| model.entry.clone()) {
        Some(r) => Ok(r),
        None => Err(Failure::new(EX_USAGE, "NO_ROOT", "the model has no entry function; pass --function")),
    }
}

fn binding_of(params: &[(String, i64)]) -> Binding {
    params.iter().cloned().collect()
}

fn analyze(a: &AnalyzeArgs, verbose: u8) -> Outcome {
    let arch = ArchDescription::parse(&read_input(&a.arch)?)?;
    let image = load_elf(&a.elf)?;
    let table = line_table(&image)?;
    let mut dis = parse_disassembly(&read_input(&a.disasm)?)?;
    arch.categorize_all(&mut dis.records);
    let map = map_lines(&table, &dis.records);
    if verbose > 0 {
        eprintln!(
            "decoded {} line rows, {} instructions",
            table.rows.len(),
            dis.records.len()
        );
    }
    let mut units = Vec::new();
    for src in &a.sources {
        let name = src.to_string_lossy().into_owned();
        let unit = collect_bottom_up(parse_source(&read_input(src)?, &name)?);
        units.push((name, unit));
    }
    let known: BTreeSet<String> = units
        .iter()
        .flat_map(|(_, u)| u.functions.iter().map(|f| f.mangled_name()))
        .collect();
    let mut metrics = Vec::new();
    let mut origin = BTreeMap::new();
    for (name, unit) in &units {
        let evidence = LineEvidence::from_line_map(&map, name, &arch);
        for fm in generate_with_known(unit, &evidence, &known) {
            origin.insert(fm.mangled_name.clone(), name.clone());
            metrics.push(fm);
        }
    }
    let mut model = build_model(&metrics, &arch)?;
    model.meta.sources = units.iter().map(|(n, _)| n.clone()).collect();
    if !a.reproducible {
        model.meta.created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    }
    let mut gaps = 0;
    for (function, f) in model.findings() {
        let file = origin.get(function).map_or("?", String::as_str);
        eprintln!("{file}:{}: {}: {} (in {function})", f.line, f.kind.code(), f.message);
        gaps += usize::from(f.kind.is_gap());
    }
    write_output(a.output.as_deref(), &serialize(&model))?;
    if a.strict && gaps > 0 {
        eprintln!("error[MODEL_GAP]: {gaps} part(s) of the code could not be modeled");
        return Ok(EX_GAPS);
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvalJson<'a> {
    root: &'a str,
    per_category: &'a BTreeMap<String, u128>,
    per_function: &'a BTreeMap<String, BTreeMap<String, u128>>,
    flags: &'a [String],
}

fn eval(a: &EvalArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let root = root_of(&model, a.function.as_deref())?;
    let result = evaluate(&model, &root, &binding_of(&a.params))?;
    for f in &result.flags {
        eprintln!("note: {f}");
    }
    if a.json {
        let j = EvalJson {
            root: &result.root,
            per_category: &result.per_category,
            per_function: &result.per_function,
            flags: &result.flags,
        };
        println!("{}", serde_json::to_string_pretty(&j).expect("serializable"));
    } else {
        let w = model.categories.iter().map(|(id, _)| id.len()).max().unwrap_or(8);
        let mut cats: Vec<&str> = model.categories.iter().map(|(id, _)| id.as_str()).collect();
        cats.extend(result.per_category.keys().map(String::as_str).filter(|c| !model.categories.iter().any(|(id, _)| id == c)));
        for c in cats {
            println!("{c:<w$}  {}", result.get(c));
        }
    }
    Ok(0)
}

fn export(a: &ExportArgs) -> Outcome {
    let model = load_model(&a.model)?;
    write_output(a.output.as_deref(), &emit_python(&model))?;
    Ok(0)
}

fn report(a: &ReportArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let root = root_of(&model, a.function.as_deref())?;
    let result = evaluate(&model, &root, &binding_of(&a.params))?;
    match a.report {
        ReportKind::Distribution => {
            let d = distribution(&model, &result);
            if a.json {
                let rows: Vec<serde_json::Value> = d
                    .rows
                    .iter()
                    .map(|r| {
                        serde_json::json!({
                            "category": r.category,
                            "name": r.display_name,
                            "count": r.count.to_string(),
                            "percent": format!("{}.{:02}", r.basis_points / 100, r.basis_points % 100),
                        })
                    })
                    .collect();
                let j = serde_json::json!({"root": root, "total": d.total.to_string(), "rows": rows});
                println!("{}", serde_json::to_string_pretty(&j).expect("serializable"));
            } else {
                print!("{d}");
            }
        }
        ReportKind::Ai => {
            let ai = arithmetic_intensity(&model, &result)?;
            if a.json {
                let j = serde_json::json!({
                    "root": root,
                    "fp": ai.fp.to_string(),
                    "mem": ai.mem.to_string(),
                    "ratio": ai.ratio.to_string(),
                    "value": ai.rendered(),
                });
                println!("{}", serde_json::to_string_pretty(&j).expect("serializable"));
            } else {
                println!("{} ({} = {} fp / {} mem)", ai.rendered(), ai.ratio, ai.fp, ai.mem);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let status = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(status);
        }
    };
    let outcome = match &cli.command {
        Command::Analyze(a) => analyze(a, cli.verbose),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(status) => ExitCode::from(status),
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.status)
        }
    }
}
