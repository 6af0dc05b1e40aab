//! Seeded random affine loop nests, shared by the polyhedral, metrics and
//! acceptance tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statmodel::frontend::{Bound, Comparison, LoopScop};
use statmodel::polyhedral::{intersect_branch, AffineExpr, Binding, LoopNestDomain, Var};

pub use rand::SeedableRng;

pub type NestRng = ChaCha8Rng;

pub const PARAMS: [&str; 2] = ["N", "M"];

/// Branch condition `expr op 0`.
#[derive(Clone, Debug)]
pub struct Cond {
    pub expr: AffineExpr,
    pub op: &'static str,
}

impl Cond {
    pub fn c_text(&self) -> String {
        format!("{} {} 0", c_affine(&self.expr), self.op)
    }
}

#[derive(Clone, Debug)]
pub struct Nest {
    pub scops: Vec<LoopScop>,
    pub branch: Option<Cond>,
}

fn random_affine(rng: &mut NestRng, vars: &[Var], coeffs: &[i64]) -> AffineExpr {
    let terms: Vec<(Var, i64)> = vars.iter().map(|v| (v.clone(), *coeffs.choose(rng).unwrap())).collect();
    AffineExpr::from_parts(terms, rng.gen_range(-10..=10))
}

fn params() -> Vec<Var> {
    PARAMS.iter().map(|p| Var::Param(p.to_string())).collect()
}

impl Nest {
    /// Depth 1 to 3, constants in [-10, 10], unit coefficients on outer
    /// indices and parameters, strides 1 to 3 in either direction.
    pub fn random(rng: &mut NestRng, branch_probability: f64, ops: &[&'static str]) -> Nest {
        let depth = rng.gen_range(1..=3);
        let mut scops = Vec::new();
        let mut vars = params();
        for k in 0..depth {
            let index = format!("i{k}");
            let init = random_affine(rng, &vars, &[-1, 0, 0, 0, 1]);
            let bound = random_affine(rng, &vars, &[-1, 0, 0, 0, 1]);
            let comparison = *[Comparison::Lt, Comparison::Le, Comparison::Gt, Comparison::Ge].choose(rng).unwrap();
            let stride = rng.gen_range(1..=3i64);
            let step = if matches!(comparison, Comparison::Lt | Comparison::Le) { stride } else { -stride };
            scops.push(LoopScop {
                index: index.clone(),
                init: Bound::Affine(init),
                bound: Bound::Affine(bound),
                comparison,
                step: Some(step),
            });
            vars.push(Var::Index(index));
        }
        let branch = rng.gen_bool(branch_probability).then(|| Cond {
            expr: random_affine(rng, &vars, &[-2, -1, 0, 1, 2]),
            op: ops.choose(rng).unwrap(),
        });
        Nest { scops, branch }
    }

    pub fn indices(&self) -> Vec<String> {
        self.scops.iter().map(|s| s.index.clone()).collect()
    }

    /// The loops alone.
    pub fn loop_domain(&self) -> LoopNestDomain {
        let mut d = LoopNestDomain::new();
        for s in &self.scops {
            d.push_scop(s).unwrap();
        }
        d
    }

    /// The loops intersected with a `>= 0` branch.
    pub fn domain(&self) -> LoopNestDomain {
        let d = self.loop_domain();
        match &self.branch {
            Some(c) => {
                assert_eq!(c.op, ">=", "only `>=` branches are domain constraints");
                intersect_branch(&d, &c.expr).unwrap()
            }
            None => d,
        }
    }

    /// The nest as a C function. `pragma` is placed before the branch.
    pub fn c_source(&self, pragma: Option<&str>) -> String {
        let mut out = format!("void kernel(int {}, int {}) {{\n", PARAMS[0], PARAMS[1]);
        for (k, s) in self.scops.iter().enumerate() {
            let pad = "  ".repeat(k + 1);
            let step = s.step.unwrap();
            let inc = if step > 0 { format!("{} += {step}", s.index) } else { format!("{} -= {}", s.index, -step) };
            out.push_str(&format!(
                "{pad}for ({i} = {}; {i} {} {}; {inc}) {{\n",
                c_affine(s.init.affine().unwrap()),
                s.comparison.symbol(),
                c_affine(s.bound.affine().unwrap()),
                i = s.index
            ));
        }
        let pad = "  ".repeat(self.scops.len() + 1);
        match &self.branch {
            Some(c) => {
                if let Some(p) = pragma {
                    out.push_str(&format!("#pragma @Annotation {p}\n"));
                }
                out.push_str(&format!("{pad}if ({}) {{\n{pad}  x = 1;\n{pad}}} else {{\n{pad}  x = 2;\n{pad}}}\n", c.c_text()));
            }
            None => out.push_str(&format!("{pad}x = 1;\n")),
        }
        for k in (0..self.scops.len()).rev() {
            out.push_str(&format!("{}}}\n", "  ".repeat(k + 1)));
        }
        out.push_str("}\n");
        out
    }
}

/// `2*i0 - N + 3` style rendering.
pub fn c_affine(e: &AffineExpr) -> String {
    let mut out = String::new();
    for (v, c) in e.terms() {
        let mag = c.abs();
        let term = if mag == 1 { v.name().to_string() } else { format!("{mag}*{}", v.name()) };
        if out.is_empty() {
            out = if c < 0 { format!("-{term}") } else { term };
        } else {
            out.push_str(if c < 0 { " - " } else { " + " });
            out.push_str(&term);
        }
    }
    let k = e.constant_term();
    if out.is_empty() {
        return k.to_string();
    }
    if k != 0 {
        out.push_str(if k < 0 { " - " } else { " + " });
        out.push_str(&k.abs().to_string());
    }
    out
}

pub fn random_binding(rng: &mut NestRng) -> Binding {
    PARAMS.iter().map(|p| (p.to_string(), rng.gen_range(-10..=10))).collect()
}
