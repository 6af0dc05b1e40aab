use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::annotation::Annotations;
use super::scop::ScopResult;

pub type StmtId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
    Deref,
    AddrOf,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            Mul => "*",
            Div => "/",
            Rem => "%",
            Add => "+",
            Sub => "-",
            Shl => "<<",
            Shr => ">>",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            BitAnd => "&",
            BitXor => "^",
            BitOr => "|",
            And => "&&",
            Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinOp::*;
        match self {
            Mul | Div | Rem => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne => 6,
            BitAnd => 5,
            BitXor => 4,
            BitOr => 3,
            And => 2,
            Or => 1,
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        use BinOp::*;
        Some(match s {
            "*" => Mul,
            "/" => Div,
            "%" => Rem,
            "+" => Add,
            "-" => Sub,
            "<<" => Shl,
            ">>" => Shr,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "==" => Eq,
            "!=" => Ne,
            "&" => BitAnd,
            "^" => BitXor,
            "|" => BitOr,
            "&&" => And,
            "||" => Or,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(String),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `target op= value`; `op` is `None` for plain assignment.
    Assign(Option<BinOp>, Box<Expr>, Box<Expr>),
    Conditional(Box<Expr>, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Member(Box<Expr>, String),
    Cast(String, Box<Expr>),
    Call(Call),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Call {
    /// `obj` in `obj.f(...)`.
    pub receiver: Option<Box<Expr>>,
    /// `A` in `A::f(...)`.
    pub qualifier: Option<String>,
    pub name: String,
    pub args: Vec<Expr>,
}

impl Expr {
    /// Every call in the expression, outermost first.
    pub fn calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Call(c) = e {
                out.push(c);
            }
        });
        out
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => {}
            Expr::Unary(_, e) | Expr::Member(e, _) | Expr::Cast(_, e) => e.visit(f),
            Expr::Binary(_, a, b) | Expr::Assign(_, a, b) | Expr::Index(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Conditional(a, b, c) => {
                a.visit(f);
                b.visit(f);
                c.visit(f);
            }
            Expr::Call(c) => {
                if let Some(r) = &c.receiver {
                    r.visit(f);
                }
                c.args.iter().for_each(|a| a.visit(f));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decl {
    pub ty: String,
    pub name: String,
    /// Array extents, `None` for `[]`.
    pub dims: Vec<Option<Expr>>,
    pub init: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForInit {
    Expr(Expr),
    Decl(Decl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForLoop {
    pub init: Option<ForInit>,
    pub cond: Option<Expr>,
    pub step: Option<Expr>,
    pub body: Box<Stmt>,
    /// Static control part, or why it could not be extracted.
    pub scop: ScopResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IfStmt {
    pub cond: Expr,
    /// The condition as written in the source.
    pub cond_text: String,
    pub then_branch: Box<Stmt>,
    pub else_branch: Option<Box<Stmt>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    For(ForLoop),
    If(IfStmt),
    Expr(Expr),
    /// An expression statement that is a bare call.
    Call(Call),
    Block(Vec<Stmt>),
    Decl(Decl),
    Return(Option<Expr>),
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub first_line: u32,
    pub last_line: u32,
    pub annotations: Annotations,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn children(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::For(f) => vec![&f.body],
            StmtKind::If(i) => {
                let mut v = vec![&*i.then_branch];
                if let Some(e) = &i.else_branch {
                    v.push(e);
                }
                v
            }
            StmtKind::Block(b) => b.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Stmt> {
        match &mut self.kind {
            StmtKind::For(f) => vec![&mut f.body],
            StmtKind::If(i) => {
                let mut v = vec![&mut *i.then_branch];
                if let Some(e) = &mut i.else_branch {
                    v.push(e);
                }
                v
            }
            StmtKind::Block(b) => b.iter_mut().collect(),
            _ => Vec::new(),
        }
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Expressions evaluated by the statement itself, excluding child statements.
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::For(f) => {
                let mut v = Vec::new();
                match &f.init {
                    Some(ForInit::Expr(e)) => v.push(e),
                    Some(ForInit::Decl(d)) => v.extend(d.init.iter()),
                    None => {}
                }
                v.extend(f.cond.iter());
                v.extend(f.step.iter());
                v
            }
            StmtKind::If(i) => vec![&i.cond],
            StmtKind::Expr(e) => vec![e],
            StmtKind::Decl(d) => d.init.iter().chain(d.dims.iter().flatten()).collect(),
            StmtKind::Return(e) => e.iter().collect(),
            StmtKind::Call(_) | StmtKind::Block(_) | StmtKind::Empty => Vec::new(),
        }
    }

    /// Calls made by the statement itself, excluding child statements.
    pub fn own_calls(&self) -> Vec<&Call> {
        match &self.kind {
            StmtKind::Call(c) => {
                let mut v = vec![c];
                for a in &c.args {
                    v.extend(a.calls());
                }
                if let Some(r) = &c.receiver {
                    v.extend(r.calls());
                }
                v
            }
            _ => self.own_exprs().into_iter().flat_map(Expr::calls).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    /// Declared type, e.g. `int`, `double[]`, `double*`.
    pub ty: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub class_name: Option<String>,
    pub return_type: String,
    pub params: Vec<Param>,
    pub body: Stmt,
    pub first_line: u32,
    pub last_line: u32,
}

impl FunctionDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// `[Class_]name_arity`.
    pub fn mangled_name(&self) -> String {
        match &self.class_name {
            Some(c) => format!("{c}_{}_{}", self.name, self.arity()),
            None => format!("{}_{}", self.name, self.arity()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceUnit {
    pub file_name: String,
    pub functions: Vec<FunctionDecl>,
    /// Source lines owned by each statement (not by its children).
    pub line_index: BTreeMap<StmtId, BTreeSet<u32>>,
    pub line_count: u32,
}

impl SourceUnit {
    pub fn function(&self, mangled: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.mangled_name() == mangled)
    }

    pub fn lines_of(&self, id: StmtId) -> Option<&BTreeSet<u32>> {
        self.line_index.get(&id)
    }

    /// Same functions and statements, ignoring ids and line positions.
    pub fn structure_eq(&self, other: &SourceUnit) -> bool {
        super::pretty::print_unit(self) == super::pretty::print_unit(other)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::pretty::print_expr(self))
    }
}
