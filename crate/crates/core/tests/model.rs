mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::nests::{NestRng, SeedableRng};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use statmodel::binary::*;
use statmodel::frontend::*;
use statmodel::metrics::*;
use statmodel::model::*;
use statmodel::polyhedral::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bind(pairs: &[(&str, i64)]) -> Binding {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn line_of(src: &str, needle: &str) -> u32 {
    src.lines().position(|l| l.contains(needle)).expect(needle) as u32 + 1
}

fn model_from(src: &str, ev: &LineEvidence) -> Model {
    let unit = collect_bottom_up(parse_source(src, "t.c").unwrap());
    build_model(&generate_top_down(&unit, ev), &ArchDescription::default_x86_64()).unwrap()
}

/// Full pipeline over a checked-in source/ELF/disassembly triple.
fn fixture_model(src: &str, elf: &str, dis: &str) -> Model {
    let text = std::fs::read_to_string(fixture(src)).unwrap();
    let unit = collect_bottom_up(parse_source(&text, src).unwrap());
    let table = line_table(&load_elf(&fixture(elf)).unwrap()).unwrap();
    let d = parse_disassembly(&std::fs::read_to_string(fixture(dis)).unwrap()).unwrap();
    let arch = ArchDescription::default_x86_64();
    let ev = LineEvidence::from_line_map(&map_lines(&table, &d.records), src, &arch);
    build_model(&generate_top_down(&unit, &ev), &arch).unwrap()
}

fn nonzero(m: &BTreeMap<String, u128>) -> BTreeMap<String, u128> {
    m.iter().filter(|(_, v)| **v > 0).map(|(k, v)| (k.clone(), *v)).collect()
}

fn cg_solve_model() -> Model {
    deserialize(&std::fs::read_to_string(fixture("cg_solve.model.json")).unwrap()).unwrap()
}

const METHOD_CALL: &str = include_str!("fixtures/method.cpp");

fn method_call_synthetic() -> Model {
    let mut ev = LineEvidence::new();
    ev.insert(line_of(METHOD_CALL, "a[j] = a[j] + 2.0"), "sse2_packed_arithmetic", 2);
    model_from(METHOD_CALL, &ev)
}

#[test]
fn main_alone_is_the_entry_with_no_parameters() {
    let m = model_from("int main() {\n  x = 1;\n  return 0;\n}\n", &LineEvidence::new());
    assert_eq!(m.entry.as_deref(), Some("main_0"));
    assert!(m.params.is_empty());
    assert_eq!(entry_of(["f_1", "main_2"]), Some("main_2".into()));
    assert_eq!(entry_of(["f_1"]), None);
}

#[test]
fn method_call_links_callee_parameters_to_the_call_site() {
    let m = method_call_synthetic();
    assert_eq!(m.functions.keys().collect::<Vec<_>>(), vec!["A_foo_2", "main_0"]);
    let names = |ps: &[ParamInfo]| ps.iter().map(|p| p.name.clone()).collect::<Vec<_>>();
    assert_eq!(names(&m.functions["A_foo_2"].params), vec!["y"]);
    assert_eq!(names(&m.params), vec!["y_16"]);
    let call = &m.functions["main_0"].calls[0];
    assert_eq!((call.callee.as_str(), call.line), ("A_foo_2", 16));
    assert_eq!(call.args["y"], CountExpr::param("y_16"));
}

#[test]
fn method_model_matches_enumeration() {
    let m = method_call_synthetic();
    let mut d = LoopNestDomain::new();
    d.push_level(LoopLevel::new("i", AffineExpr::constant(0), AffineExpr::constant(7), 1)).unwrap();
    d.push_level(LoopLevel::new("j", AffineExpr::constant(0), AffineExpr::param("y").offset(-1), 1)).unwrap();
    for y in [-3, 0, 1, 10, 1000] {
        let expect = 2 * u128::from(count_enumerate(&d, &bind(&[("y", y)])).unwrap());
        let r = evaluate(&m, "main_0", &bind(&[("y_16", y)])).unwrap();
        assert_eq!(r.get("sse2_packed_arithmetic"), expect, "y={y}");
        let direct = evaluate(&m, "A_foo_2", &bind(&[("y", y)])).unwrap();
        assert_eq!(direct.per_category, r.per_category);
    }
}

#[test]
fn recursion_is_cut_and_flagged() {
    let src = "void f(int n) {\n  g(n);\n}\nvoid g(int n) {\n  x = 1;\n  f(n);\n}\nint main() {\n  f(3);\n  return 0;\n}\n";
    let mut ev = LineEvidence::new();
    ev.insert(5, "misc", 1);
    let m = model_from(src, &ev);
    assert!(m.findings().any(|(_, f)| f.kind == FindingKind::ModelGap));
    let r = evaluate(&m, "main_0", &Binding::new()).unwrap();
    assert_eq!(r.get("misc"), 1);
    assert!(!r.flags.is_empty());
}

#[test]
fn calls_to_unknown_internal_functions_are_rejected() {
    let fm = FunctionMetrics {
        mangled_name: "main_0".into(),
        params: vec![],
        formals: vec![],
        first_line: 1,
        body: MetricVector::new(),
        call_sites: vec![CallSite {
            callee: "ghost_0".into(),
            line: 2,
            iterations: CountExpr::one(),
            external: false,
            args: vec![],
        }],
        findings: vec![],
    };
    let arch = ArchDescription::default_x86_64();
    assert!(matches!(build_model(std::slice::from_ref(&fm), &arch), Err(ModelError::UnresolvedCallee { line: 2, .. })));
    assert!(matches!(build_model(&[fm.clone(), fm], &arch), Err(ModelError::DuplicateFunction(n)) if n == "main_0"));
}

#[test]
fn triad_fixture_scales_with_n() {
    let m = fixture_model("triad.c", "triad.elf", "triad.dis");
    let per_n = evaluate(&m, "triad_5", &bind(&[("N", 1)])).unwrap();
    let k = per_n.get("sse2_packed_arithmetic");
    assert!(k > 0);
    for n in [10, 2_000_000] {
        let r = evaluate(&m, "main_0", &bind(&[("n", n)])).unwrap();
        assert_eq!(r.get("sse2_packed_arithmetic"), k * n as u128);
    }
    assert_eq!(
        evaluate(&m, "triad_5", &Binding::new()),
        Err(ModelError::UnboundParameter(vec!["N".into()]))
    );
    assert!(matches!(evaluate(&m, "nope", &Binding::new()), Err(ModelError::UnknownFunction(_))));
}

#[test]
fn root_without_evidence_counts_zero() {
    let m = model_from("void f() {\n  x = 1;\n}\nint main() {\n  return 0;\n}\n", &LineEvidence::new());
    let r = evaluate(&m, "main_0", &Binding::new()).unwrap();
    assert_eq!(r.total(), 0);
}

#[test]
fn counts_are_linear_in_the_evidence() {
    let src = "void k(int N, int M) {\n  for (i = 0; i < N; i++)\n    for (j = i; j < M; j++)\n      s = s + 1;\n}\n";
    let mut rng = NestRng::seed_from_u64(7);
    for _ in 0..20 {
        let c: u64 = rng.gen_range(1..9);
        let mut one = LineEvidence::new();
        one.insert(4, "misc", 1);
        let mut many = LineEvidence::new();
        many.insert(4, "misc", c);
        let (a, b) = (model_from(src, &one), model_from(src, &many));
        let binding = bind(&[("N", rng.gen_range(-5..40)), ("M", rng.gen_range(-5..40))]);
        let ra = evaluate(&a, "k_2", &binding).unwrap();
        let rb = evaluate(&b, "k_2", &binding).unwrap();
        assert_eq!(rb.get("misc"), u128::from(c) * ra.get("misc"));
    }
}

#[test]
fn json_round_trips_and_is_stable() {
    for m in [
        method_call_synthetic(),
        fixture_model("triad.c", "triad.elf", "triad.dis"),
        fixture_model("method.cpp", "method.elf", "method.dis"),
        cg_solve_model(),
    ] {
        let text = serialize(&m);
        let back = deserialize(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serialize(&back), text);
    }
}

#[test]
fn json_rejects_bad_documents() {
    let text = std::fs::read_to_string(fixture("cg_solve.model.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();

    let mut wrong = v.clone();
    wrong["schema_version"] = 99.into();
    assert_eq!(
        deserialize(&wrong.to_string()),
        Err(ModelError::SchemaVersionMismatch { found: 99, expected: 1 })
    );

    let mut neg = v.clone();
    neg["functions"]["cg_solve"]["body"]["misc"] = "(int -4)".into();
    assert!(matches!(deserialize(&neg.to_string()), Err(ModelError::MalformedModel(_))));

    let mut extra = v.clone();
    extra["surprise"] = true.into();
    assert!(matches!(deserialize(&extra.to_string()), Err(ModelError::MalformedModel(_))));

    v["entry"] = "missing".into();
    assert!(matches!(deserialize(&v.to_string()), Err(ModelError::MalformedModel(_))));
    assert!(matches!(deserialize("{"), Err(ModelError::MalformedModel(_))));
}

#[test]
fn python_has_one_function_per_model_function() {
    let py = emit_python(&method_call_synthetic());
    assert!(py.contains("from statmodel_runtime import handle_function_call\n"));
    assert!(py.contains("\ndef A_foo_2(y):\n"));
    assert!(py.contains("\ndef main_0(y_16):\n"));
    assert!(py.contains("    metrics = handle_function_call(metrics, A_foo_2(y=y_16), 1)\n"));
    assert_eq!(py.matches("    return metrics\n").count(), 2);
    assert_eq!(python_identifier("lambda"), "lambda_");
    assert_eq!(python_identifier("N"), "N");
}

const SHIM: &str = "\
def handle_function_call(caller, callee, iterations):
    out = dict(caller)
    for k, v in callee.items():
        out[k] = out.get(k, 0) + v * iterations
    return out
";

/// Runs `root(**binding)` for each binding and returns the non-zero dicts.
fn run_python(model: &Model, root: &str, bindings: &[Binding]) -> Vec<BTreeMap<String, u128>> {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(format!("{RUNTIME_MODULE}.py")), SHIM).unwrap();
    std::fs::write(dir.path().join("model.py"), emit_python(model)).unwrap();
    let calls: Vec<String> = bindings
        .iter()
        .map(|b| {
            let kw: Vec<String> = b.iter().map(|(k, v)| format!("{}={v}", python_identifier(k))).collect();
            format!("print(json.dumps({{k: v for k, v in model.{root}({}).items() if v}}))", kw.join(", "))
        })
        .collect();
    let script = format!("import json, model\n{}\n", calls.join("\n"));
    let out = Command::new("python3").arg("-c").arg(script).current_dir(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn emitted_python_matches_native_evaluation() {
    let mut rng = NestRng::seed_from_u64(99);
    let branchy = "void k(int N, int M) {\n  for (i = 0; i < N; i += 2)\n    for (j = i; j <= M; j++) {\n      if (j > 3) s = 1; else s = 2;\n    }\n}\nint main(int N) {\n  k(N, 2 * N + 1);\n  k(5, N);\n  return 0;\n}\n";
    let mut ev = LineEvidence::new();
    ev.insert(4, "misc", 3);
    ev.insert(2, "integer_arithmetic", 1);
    let cases = [
        ("method", fixture_model("method.cpp", "method.elf", "method.dis")),
        ("triad", fixture_model("triad.c", "triad.elf", "triad.dis")),
        ("branchy", model_from(branchy, &ev)),
    ];
    for (what, m) in cases {
        let root = m.entry.clone().unwrap();
        let bindings: Vec<Binding> = (0..20)
            .map(|_| m.params.iter().map(|p| (p.name.clone(), rng.gen_range(-5..3000))).collect())
            .collect();
        assert!(!m.params.is_empty(), "{what}");
        let py = run_python(&m, &root, &bindings);
        assert!(py.iter().filter(|d| !d.is_empty()).count() > 10, "{what}");
        for (b, got) in bindings.iter().zip(py) {
            let native = evaluate(&m, &root, b).unwrap();
            assert_eq!(got, nonzero(&native.per_category), "{what} at {b:?}");
        }
    }
}

#[test]
fn cg_solve_arithmetic_intensity() {
    let m = cg_solve_model();
    let r = evaluate(&m, "cg_solve", &Binding::new()).unwrap();
    let ai = arithmetic_intensity(&m, &r).unwrap();
    assert_eq!(ai.ratio, BigRational::new(BigInt::from(193), BigInt::from(367)));
    assert_eq!((ai.fp, ai.mem), (193_000_000, 367_000_000));
    assert_eq!(ai.rendered(), "0.53");
}

#[test]
fn cg_solve_distribution_sums_exactly() {
    let m = cg_solve_model();
    let r = evaluate(&m, "cg_solve", &Binding::new()).unwrap();
    let d = distribution(&m, &r);
    assert_eq!(d.rows.len(), 7);
    assert_eq!(d.total, 4_422_000_000);
    assert_eq!(d.rows.iter().map(|r| r.count).sum::<u128>(), d.total);
    assert_eq!(d.rows.iter().map(|r| r.basis_points).sum::<u32>(), 10_000);
    assert_eq!(d.rows[2].display_name, "Integer data transfer instruction");
    assert_eq!(d.rows[2].basis_points, 5473);
    assert!(d.to_string().ends_with("100.00%\n"));
}

#[test]
fn intensity_needs_memory_traffic_and_roles() {
    let mut m = cg_solve_model();
    m.functions.get_mut("cg_solve").unwrap().body.set("sse2_data_movement", CountExpr::zero());
    let r = evaluate(&m, "cg_solve", &Binding::new()).unwrap();
    assert_eq!(arithmetic_intensity(&m, &r), Err(ModelError::ZeroDenominator));
    m.roles.fp.clear();
    assert_eq!(arithmetic_intensity(&m, &r), Err(ModelError::MissingRole("fp")));
}

#[test]
fn rounding_ties_go_to_even() {
    let r = |n: i64, d: i64| round_half_even(&BigRational::new(n.into(), d.into()), 2);
    assert_eq!(r(1, 8), "0.12");
    assert_eq!(r(3, 8), "0.38");
    assert_eq!(r(-1, 8), "-0.12");
    assert_eq!(r(2, 1), "2.00");
    assert_eq!(r(193, 367), "0.53");
}
