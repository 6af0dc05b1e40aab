//! Canonical source printing. Reparsing the output gives a structurally equal unit.

use super::ast::*;

const PREC_ASSIGN: u8 = 0;
const PREC_COND: u8 = 1;
const PREC_UNARY: u8 = 20;
const PREC_POSTFIX: u8 = 21;
const PREC_PRIMARY: u8 = 22;

fn bin_prec(op: BinOp) -> u8 {
    op.precedence() + 1
}

fn wrap(e: &Expr, min: u8) -> String {
    let (s, p) = expr_prec(e);
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

fn expr_prec(e: &Expr) -> (String, u8) {
    match e {
        Expr::Int(v) if *v < 0 => (format!("({v})"), PREC_PRIMARY),
        Expr::Int(v) => (v.to_string(), PREC_PRIMARY),
        Expr::Float(f) => (f.clone(), PREC_PRIMARY),
        Expr::Var(n) => (n.clone(), PREC_PRIMARY),
        Expr::Unary(op, x) => {
            let s = match op {
                UnOp::PostInc => format!("{}++", wrap(x, PREC_POSTFIX)),
                UnOp::PostDec => format!("{}--", wrap(x, PREC_POSTFIX)),
                _ => {
                    let sym = match op {
                        UnOp::Neg => "-",
                        UnOp::Not => "!",
                        UnOp::BitNot => "~",
                        UnOp::Deref => "*",
                        UnOp::AddrOf => "&",
                        UnOp::PreInc => "++",
                        _ => "--",
                    };
                    let inner = wrap(x, PREC_UNARY);
                    // Keep `- -x` from lexing as `--x`.
                    let sep = if inner.starts_with(['-', '+', '&']) { " " } else { "" };
                    format!("{sym}{sep}{inner}")
                }
            };
            let p = if matches!(op, UnOp::PostInc | UnOp::PostDec) { PREC_POSTFIX } else { PREC_UNARY };
            (s, p)
        }
        Expr::Binary(op, a, b) => {
            let p = bin_prec(*op);
            (format!("{} {} {}", wrap(a, p), op.symbol(), wrap(b, p + 1)), p)
        }
        Expr::Assign(op, t, v) => {
            let sym = op.map(|o| format!("{}=", o.symbol())).unwrap_or_else(|| "=".into());
            (format!("{} {sym} {}", wrap(t, PREC_UNARY), wrap(v, PREC_ASSIGN)), PREC_ASSIGN)
        }
        Expr::Conditional(c, a, b) => (
            format!("{} ? {} : {}", wrap(c, PREC_COND + 1), wrap(a, PREC_ASSIGN), wrap(b, PREC_COND)),
            PREC_COND,
        ),
        Expr::Index(a, i) => (format!("{}[{}]", wrap(a, PREC_POSTFIX), print_expr(i)), PREC_POSTFIX),
        Expr::Member(a, f) => (format!("{}.{f}", wrap(a, PREC_POSTFIX)), PREC_POSTFIX),
        Expr::Cast(ty, x) => (format!("({ty}){}", wrap(x, PREC_UNARY)), PREC_UNARY),
        Expr::Call(c) => (print_call(c), PREC_POSTFIX),
    }
}

fn print_call(c: &Call) -> String {
    let args: Vec<String> = c.args.iter().map(|a| wrap(a, PREC_ASSIGN)).collect();
    let head = match (&c.receiver, &c.qualifier) {
        (Some(r), _) => format!("{}.{}", wrap(r, PREC_POSTFIX), c.name),
        (None, Some(q)) => format!("{q}::{}", c.name),
        (None, None) => c.name.clone(),
    };
    format!("{head}({})", args.join(", "))
}

pub fn print_expr(e: &Expr) -> String {
    expr_prec(e).0
}

fn print_decl(d: &Decl) -> String {
    let mut s = format!("{} {}", d.ty, d.name);
    for dim in &d.dims {
        match dim {
            Some(e) => s.push_str(&format!("[{}]", print_expr(e))),
            None => s.push_str("[]"),
        }
    }
    if let Some(i) = &d.init {
        s.push_str(&format!(" = {}", wrap(i, PREC_ASSIGN)));
    }
    s
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_stmt(s: &Stmt, depth: usize, out: &mut String) {
    if !s.annotations.is_empty() {
        out.push_str(&format!("#pragma @Annotation {}\n", s.annotations.render()));
    }
    indent(out, depth);
    match &s.kind {
        StmtKind::Block(b) => {
            out.push_str("{\n");
            for c in b {
                print_stmt(c, depth + 1, out);
            }
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::For(f) => {
            let init = match &f.init {
                Some(ForInit::Expr(e)) => print_expr(e),
                Some(ForInit::Decl(d)) => print_decl(d),
                None => String::new(),
            };
            let cond = f.cond.as_ref().map(print_expr).unwrap_or_default();
            let step = f.step.as_ref().map(print_expr).unwrap_or_default();
            out.push_str(&format!("for ({init}; {cond}; {step})\n"));
            print_stmt(&f.body, depth + 1, out);
        }
        StmtKind::If(i) => {
            out.push_str(&format!("if ({})\n", print_expr(&i.cond)));
            print_stmt(&i.then_branch, depth + 1, out);
            if let Some(e) = &i.else_branch {
                indent(out, depth);
                out.push_str("else\n");
                print_stmt(e, depth + 1, out);
            }
        }
        StmtKind::Expr(e) => out.push_str(&format!("{};\n", print_expr(e))),
        StmtKind::Call(c) => out.push_str(&format!("{};\n", print_call(c))),
        StmtKind::Decl(d) => out.push_str(&format!("{};\n", print_decl(d))),
        StmtKind::Return(Some(e)) => out.push_str(&format!("return {};\n", print_expr(e))),
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Empty => out.push_str(";\n"),
    }
}

fn print_param(p: &Param) -> String {
    match p.ty.find('[') {
        Some(k) => format!("{} {}{}", &p.ty[..k], p.name, &p.ty[k..]),
        None => format!("{} {}", p.ty, p.name),
    }
}

fn print_function(f: &FunctionDecl, depth: usize, out: &mut String) {
    indent(out, depth);
    let params: Vec<String> = f.params.iter().map(print_param).collect();
    out.push_str(&format!("{} {}({})\n", f.return_type, f.name, params.join(", ")));
    print_stmt(&f.body, depth, out);
}

pub fn print_unit(u: &SourceUnit) -> String {
    let mut out = String::new();
    let mut k = 0;
    while k < u.functions.len() {
        match &u.functions[k].class_name {
            Some(c) => {
                out.push_str(&format!("class {c} {{\npublic:\n"));
                while k < u.functions.len() && u.functions[k].class_name.as_ref() == Some(c) {
                    print_function(&u.functions[k], 1, &mut out);
                    k += 1;
                }
                out.push_str("};\n");
            }
            None => {
                print_function(&u.functions[k], 0, &mut out);
                k += 1;
            }
        }
        out.push('\n');
    }
    out
}
