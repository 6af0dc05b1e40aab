mod common;

use std::time::{Duration, Instant};

use common::nests::{random_binding, Nest, NestRng, SeedableRng};
use statmodel::frontend::{parse_source, LoopScop, Stmt, StmtKind};
use statmodel::polyhedral::*;

fn bind(pairs: &[(&str, i64)]) -> Binding {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Loop headers of the first function, outermost first, following the first loop at each level.
fn scops_of(body: &str) -> Vec<Result<LoopScop, String>> {
    let unit = parse_source(&format!("void f(int N) {{\n{body}\n}}\n"), "t.c").unwrap();
    let mut out = Vec::new();
    fn walk(s: &Stmt, out: &mut Vec<Result<LoopScop, String>>) {
        if let StmtKind::For(f) = &s.kind {
            out.push(f.scop.clone().map_err(|e| e.reason));
        }
        if let Some(c) = s.children().into_iter().next() {
            walk(c, out);
        }
    }
    walk(&unit.functions[0].body, &mut out);
    out
}

fn domain_of(body: &str) -> LoopNestDomain {
    let scops: Vec<LoopScop> = scops_of(body).into_iter().map(Result::unwrap).collect();
    domain_from_scops(&scops).unwrap()
}

const BASIC_LOOP: &str = "for (i = 0; i < 10; i++) { x = 1; }";
const TRIANGULAR_NEST: &str = "for (i = 1; i <= 4; i++)\n for (j = i + 1; j <= 6; j++) { x = 1; }";

fn both_counts(d: &LoopNestDomain, b: &Binding) -> (u128, u64) {
    (eval_count(&count_symbolic(d), b).unwrap(), count_enumerate(d, b).unwrap())
}

#[test]
fn basic_loop_has_ten_iterations() {
    let d = domain_of(BASIC_LOOP);
    assert_eq!(d.levels, vec![LoopLevel::new("i", AffineExpr::constant(0), AffineExpr::constant(9), 1)]);
    assert_eq!(both_counts(&d, &Binding::new()), (10, 10));
}

#[test]
fn triangular_nest_has_fourteen_iterations() {
    let d = domain_of(TRIANGULAR_NEST);
    assert_eq!(d.levels[0], LoopLevel::new("i", AffineExpr::constant(1), AffineExpr::constant(4), 1));
    assert_eq!(d.levels[1], LoopLevel::new("j", AffineExpr::index("i").offset(1), AffineExpr::constant(6), 1));
    let oracle: u64 = (1..=4).map(|i| (i + 1..=6).count() as u64).sum();
    assert_eq!(both_counts(&d, &Binding::new()), (u128::from(oracle), oracle));
    assert_eq!(oracle, 14);
}

#[test]
fn inner_index_branch_and_its_complement() {
    let d = domain_of(TRIANGULAR_NEST);
    // j > 4  ⇔  j - 5 ≥ 0
    let cond = AffineExpr::index("j").offset(-5);
    let then = intersect_branch(&d, &cond).unwrap();
    let els = intersect_branch(&d, &cond.negated_inequality()).unwrap();
    let oracle_then = (1..=4).flat_map(|i| (i + 1..=6).map(move |j| (i, j))).filter(|&(_, j)| j > 4).count() as u64;
    assert_eq!(oracle_then, 8);
    assert_eq!(both_counts(&then, &Binding::new()), (8, 8));
    assert_eq!(both_counts(&els, &Binding::new()), (6, 6));
    let total = count_symbolic(&d);
    let comp = complement_count(&total, &count_symbolic(&then));
    assert_eq!(eval_count(&comp, &Binding::new()).unwrap(), 6);
}

#[test]
fn trivial_and_infeasible_branches() {
    let d = domain_of(TRIANGULAR_NEST);
    let always = intersect_branch(&d, &AffineExpr::constant(0)).unwrap();
    assert_eq!(both_counts(&always, &Binding::new()), (14, 14));
    let never = intersect_branch(&d, &AffineExpr::index("i").offset(-10)).unwrap();
    assert_eq!(both_counts(&never, &Binding::new()), (0, 0));
}

#[test]
fn complement_examples() {
    // Points of the triangular nest with even j, counted directly.
    let even = (1..=4).flat_map(|i| i + 1..=6).filter(|j| j % 2 == 0).count() as i64;
    assert_eq!(even, 8);
    let c = |t: i64, f: i64| eval_count(&complement_count(&CountExpr::int(t), &CountExpr::int(f)), &Binding::new()).unwrap();
    assert_eq!(c(14, even), 6);
    assert_eq!(c(14, 0), 14);
    assert_eq!(c(14, 14), 0);
    let x = CountExpr::param("X");
    let e = complement_count(&x, &CountExpr::zero());
    assert_eq!(eval_count(&e, &bind(&[("X", 37)])).unwrap(), 37);
}

#[test]
fn parametric_single_loop() {
    let d = domain_of("for (i = 0; i < N; i++) x = 1;");
    assert_eq!(d.params.iter().collect::<Vec<_>>(), vec!["N"]);
    let e = count_symbolic(&d);
    assert_eq!(e.to_sexpr(), "(max0 (param N))");
    assert_eq!(eval_count(&e, &bind(&[("N", 100)])).unwrap(), 100);
    assert_eq!(eval_count(&e, &bind(&[("N", -5)])).unwrap(), 0);
    assert_eq!(count_enumerate(&d, &bind(&[("N", 0)])).unwrap(), 0);
}

#[test]
fn strided_parametric_loop() {
    let d = domain_of("for (i = 0; i < N; i += 2) x = 1;");
    assert_eq!(d.levels[0].step, 2);
    let e = count_symbolic(&d);
    assert!(e.to_sexpr().contains("floordiv"), "{e}");
    let oracle = (0..10).step_by(2).count() as u128;
    assert_eq!(eval_count(&e, &bind(&[("N", 10)])).unwrap(), oracle);
    for n in -5..30 {
        let b = bind(&[("N", n)]);
        assert_eq!(eval_count(&e, &b).unwrap(), u128::from(count_enumerate(&d, &b).unwrap()), "N={n}");
    }
}

#[test]
fn non_affine_bounds_are_rejected_with_their_level() {
    let scops = scops_of("for (i = 1; i <= 5; i++)\n for (j = min(6 - i, 3); j <= max(8 - i, i); j++) { x = 1; }");
    assert!(scops[0].is_ok());
    assert!(scops[1].is_err());
    let mut d = LoopNestDomain::new();
    d.push_scop(scops[0].as_ref().unwrap()).unwrap();
    let level = LoopLevel::new("k", AffineExpr::index("q"), AffineExpr::constant(3), 1);
    assert!(matches!(d.push_level(level), Err(PolyError::NonAffineBound { level: 1, .. })));
}

#[test]
fn unbound_parameter_is_named() {
    let e = count_symbolic(&domain_of("for (i = 0; i < N; i++) x = 1;"));
    assert_eq!(eval_count(&e, &Binding::new()), Err(PolyError::UnboundParameter("N".into())));
}

#[test]
fn enumeration_cap_is_enforced() {
    let d = domain_of("for (i = 0; i < N; i++)\n for (j = 0; j < N; j++) x = 1;");
    let b = bind(&[("N", 1000)]);
    assert_eq!(count_enumerate_capped(&d, &b, 10_000), Err(PolyError::EnumerationTooLarge { cap: 10_000 }));
    assert_eq!(eval_count(&count_symbolic(&d), &b).unwrap(), 1_000_000);
}

/// 200 seeded nests, 5 bindings each, symbolic against enumeration.
#[test]
fn symbolic_counts_match_enumeration_on_random_nests() {
    let start = Instant::now();
    let mut rng = NestRng::seed_from_u64(0x5eed);
    let mut with_branch = 0;
    for n in 0..200 {
        let nest = Nest::random(&mut rng, 0.3, &[">="]);
        with_branch += usize::from(nest.branch.is_some());
        let d = nest.domain();
        let e = count_symbolic(&d);
        for _ in 0..5 {
            let b = random_binding(&mut rng);
            let (sym, brute) = both_counts_checked(&e, &d, &b);
            assert_eq!(sym, brute, "nest #{n} {nest:?} at {b:?}: {e}");
        }
    }
    assert!((40..=80).contains(&with_branch), "{with_branch} nests have a branch");
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
}

fn both_counts_checked(e: &CountExpr, d: &LoopNestDomain, b: &Binding) -> (u128, u128) {
    (eval_count(e, b).unwrap(), u128::from(count_enumerate(d, b).unwrap()))
}

#[test]
fn branch_and_its_negation_partition_the_domain() {
    let mut rng = NestRng::seed_from_u64(7);
    for _ in 0..100 {
        let nest = Nest::random(&mut rng, 1.0, &[">="]);
        let d = nest.loop_domain();
        let c = &nest.branch.as_ref().unwrap().expr;
        let yes = intersect_branch(&d, c).unwrap();
        let no = intersect_branch(&d, &c.negated_inequality()).unwrap();
        for _ in 0..3 {
            let b = random_binding(&mut rng);
            let total = count_enumerate(&d, &b).unwrap();
            let (y, n) = (count_enumerate(&yes, &b).unwrap(), count_enumerate(&no, &b).unwrap());
            assert_eq!(y + n, total);
            assert!(y <= total, "monotonicity");
            let ys = eval_count(&count_symbolic(&yes), &b).unwrap();
            let ns = eval_count(&count_symbolic(&no), &b).unwrap();
            assert_eq!(ys + ns, u128::from(total));
        }
    }
}

#[test]
fn stacking_constraints_never_increases_the_count() {
    let mut rng = NestRng::seed_from_u64(11);
    for _ in 0..50 {
        let mut d = Nest::random(&mut rng, 0.0, &[">="]).loop_domain();
        let b = random_binding(&mut rng);
        let mut prev = count_enumerate(&d, &b).unwrap();
        for _ in 0..3 {
            let c = Nest::random(&mut rng, 1.0, &[">="]).branch.unwrap().expr;
            // Keep only variables the domain knows.
            let c = AffineExpr::from_parts(
                c.terms().filter(|(v, _)| v.is_param() || d.has_index(v.name())).map(|(v, k)| (v.clone(), k)),
                c.constant_term(),
            );
            d = intersect_branch(&d, &c).unwrap();
            let now = count_enumerate(&d, &b).unwrap();
            assert!(now <= prev);
            prev = now;
        }
    }
}

/// Rectangular depth-d nests over N: the d-th finite difference in N is a
/// non-zero constant and the next one vanishes.
#[test]
fn rectangular_nests_are_polynomials_of_their_depth() {
    for depth in 1..=4usize {
        let mut body = String::new();
        for k in 0..depth {
            body.push_str(&format!("for (i{k} = {k}; i{k} < N + {k}; i{k}++)\n"));
        }
        body.push_str("x = 1;");
        let e = count_symbolic(&domain_of(&body));
        assert!(is_closed_form(&e), "{e}");
        let vals: Vec<i128> = (1..=depth as i64 + 3)
            .map(|n| eval_count(&e, &bind(&[("N", n)])).unwrap() as i128)
            .collect();
        let mut diffs = vals;
        for _ in 0..depth {
            diffs = diffs.windows(2).map(|w| w[1] - w[0]).collect();
        }
        assert!(diffs.iter().all(|d| *d == diffs[0] && *d != 0), "depth {depth}: {diffs:?}");
        let next: Vec<i128> = diffs.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(next.iter().all(|d| *d == 0));
    }
}

#[test]
fn empty_extents_count_zero() {
    let d = domain_of("for (i = 0; i < N; i++)\n for (j = i; j < N; j++)\n for (k = 0; k < M; k++) x = 1;");
    let e = count_symbolic(&d);
    for (n, m) in [(0, 5), (-3, 5), (5, 0), (5, -7), (-1, -1)] {
        assert_eq!(eval_count(&e, &bind(&[("N", n), ("M", m)])).unwrap(), 0, "N={n} M={m}");
    }
    assert_eq!(eval_count(&e, &bind(&[("N", 4), ("M", 3)])).unwrap(), 10 * 3);
}

#[test]
fn decreasing_loops_count_like_their_mirror() {
    let down = domain_of("for (i = N; i > 0; i -= 3) x = 1;");
    let e = count_symbolic(&down);
    for n in -4..20 {
        let b = bind(&[("N", n)]);
        let oracle = (1..=n.max(0)).rev().step_by(3).count() as u128;
        assert_eq!(eval_count(&e, &b).unwrap(), oracle);
        assert_eq!(u128::from(count_enumerate(&down, &b).unwrap()), oracle);
    }
}
