//! Recursive-descent parser for the supported C subset.

use std::collections::{BTreeMap, BTreeSet};

use super::annotation::{parse_annotation, Annotations};
use super::ast::*;
use super::lexer::{tokenize, TokKind, Token};
use super::scop::extract_scop;
use super::FrontendError;

const TYPE_WORDS: &[&str] = &[
    "void", "int", "long", "short", "char", "float", "double", "unsigned", "signed", "const", "bool",
    "static", "inline", "size_t", "auto", "volatile", "register", "extern",
];

const RESERVED: &[&str] = &["return", "if", "else", "for", "class", "struct", "public", "private", "protected"];

const UNSUPPORTED: &[&str] = &["while", "do", "switch", "goto", "break", "continue", "case", "default"];

struct Owner {
    id: StmtId,
    lines: BTreeSet<u32>,
    segment: Option<(u32, u32)>,
}

impl Owner {
    fn flush(&mut self) {
        if let Some((a, b)) = self.segment.take() {
            self.lines.extend(a..=b);
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    next_id: StmtId,
    pending: Annotations,
    pending_line: Option<u32>,
    owners: Vec<Owner>,
    line_index: BTreeMap<StmtId, BTreeSet<u32>>,
    loop_indices: Vec<String>,
    class_names: BTreeSet<String>,
}

/// Parses C-subset source text.
pub fn parse_source(text: &str, file_name: &str) -> Result<SourceUnit, FrontendError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        src: text,
        toks,
        pos: 0,
        next_id: 0,
        pending: Annotations::default(),
        pending_line: None,
        owners: Vec::new(),
        line_index: BTreeMap::new(),
        loop_indices: Vec::new(),
        class_names: BTreeSet::new(),
    };
    let functions = p.unit()?;
    if let Some(line) = p.pending_line {
        return Err(FrontendError::MalformedAnnotation {
            text: p.pending.render(),
            reason: format!("annotation at line {line} is not followed by a statement"),
        });
    }
    Ok(SourceUnit {
        file_name: file_name.to_string(),
        functions,
        line_index: p.line_index,
        line_count: text.lines().count() as u32,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&TokKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, k: usize) -> Option<&TokKind> {
        self.toks.get(self.pos + k).map(|t| &t.kind)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(TokKind::Punct(q)) if *q == p)
    }

    fn is_punct_at(&self, k: usize, p: &str) -> bool {
        matches!(self.peek_at(k), Some(TokKind::Punct(q)) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(TokKind::Ident(q)) if q == w)
    }

    fn here(&self) -> (u32, u32) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, FrontendError> {
        let (line, col) = self.here();
        Err(FrontendError::Syntax {
            line,
            col,
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        self.pos += 1;
        if let Some(o) = self.owners.last_mut() {
            o.segment = Some(match o.segment {
                None => (t.line, t.end_line),
                Some((a, b)) => (a.min(t.line), b.max(t.end_line)),
            });
        }
        t
    }

    fn expect(&mut self, p: &str) -> Result<Token, FrontendError> {
        if self.is_punct(p) {
            Ok(self.bump())
        } else {
            let found = self.describe();
            self.err(format!("expected `{p}`, found {found}"))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(TokKind::Ident(s)) => format!("`{s}`"),
            Some(TokKind::Int(v)) => format!("`{v}`"),
            Some(TokKind::Float(f)) => format!("`{f}`"),
            Some(TokKind::Punct(p)) => format!("`{p}`"),
            Some(TokKind::Pragma(_)) => "annotation pragma".into(),
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek() {
            Some(TokKind::Ident(s)) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => {
                let found = self.describe();
                self.err(format!("expected identifier, found {found}"))
            }
        }
    }

    fn absorb_pragmas(&mut self) -> Result<(), FrontendError> {
        while let Some(TokKind::Pragma(text)) = self.peek() {
            let text = text.clone();
            let line = self.toks[self.pos].line;
            self.pos += 1;
            for a in parse_annotation(&text)? {
                self.pending.insert(a);
            }
            self.pending_line.get_or_insert(line);
        }
        Ok(())
    }

    fn begin_stmt(&mut self) -> (StmtId, Annotations) {
        if let Some(o) = self.owners.last_mut() {
            o.flush();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.owners.push(Owner {
            id,
            lines: BTreeSet::new(),
            segment: None,
        });
        self.pending_line = None;
        (id, std::mem::take(&mut self.pending))
    }

    fn end_stmt(&mut self) -> (u32, u32) {
        let mut o = self.owners.pop().expect("statement owner");
        o.flush();
        let first = o.lines.first().copied().unwrap_or(1);
        let last = o.lines.last().copied().unwrap_or(first);
        self.line_index.insert(o.id, o.lines);
        (first, last)
    }

    // ----- declarations -------------------------------------------------

    fn unit(&mut self) -> Result<Vec<FunctionDecl>, FrontendError> {
        let mut out = Vec::new();
        loop {
            self.absorb_pragmas()?;
            if self.peek().is_none() {
                break;
            }
            if self.is_punct(";") {
                self.bump();
            } else if self.is_word("class") || self.is_word("struct") {
                self.class(&mut out)?;
            } else if let Some(f) = self.function(None)? {
                out.push(f);
            }
        }
        Ok(out)
    }

    fn class(&mut self, out: &mut Vec<FunctionDecl>) -> Result<(), FrontendError> {
        self.bump();
        let name = self.ident()?;
        self.class_names.insert(name.clone());
        if self.is_punct(";") {
            self.bump();
            return Ok(());
        }
        self.expect("{")?;
        loop {
            self.absorb_pragmas()?;
            if self.is_punct("}") {
                self.bump();
                break;
            }
            if self.peek().is_none() {
                return self.err(format!("unterminated class `{name}`"));
            }
            if (self.is_word("public") || self.is_word("private") || self.is_word("protected"))
                && self.is_punct_at(1, ":")
            {
                self.bump();
                self.bump();
            } else if self.is_punct(";") {
                self.bump();
            } else if let Some(f) = self.function(Some(&name))? {
                out.push(f);
            }
        }
        if self.is_punct(";") {
            self.bump();
        }
        Ok(())
    }

    fn type_name(&mut self) -> Result<String, FrontendError> {
        let mut words = Vec::new();
        loop {
            match self.peek() {
                Some(TokKind::Ident(w)) if TYPE_WORDS.contains(&w.as_str()) => {
                    words.push(w.clone());
                    self.bump();
                }
                Some(TokKind::Ident(w)) if words.iter().all(|x| x == "const" || x == "static") && {
                    // A user type name is followed by a declarator name or `*`.
                    matches!(self.peek_at(1), Some(TokKind::Ident(_)))
                        || (self.class_names.contains(w) && (self.is_punct_at(1, "*") || self.is_punct_at(1, "&")))
                } =>
                {
                    words.push(w.clone());
                    self.bump();
                }
                _ => break,
            }
        }
        if words.is_empty() {
            let found = self.describe();
            return self.err(format!("expected a type, found {found}"));
        }
        let mut ty = words.join(" ");
        while self.is_punct("*") || self.is_punct("&") {
            let t = self.bump();
            if let TokKind::Punct(p) = t.kind {
                ty.push_str(p);
            }
        }
        Ok(ty)
    }

    fn starts_decl(&self) -> bool {
        match self.peek() {
            Some(TokKind::Ident(w)) if TYPE_WORDS.contains(&w.as_str()) => true,
            Some(TokKind::Ident(w)) if !RESERVED.contains(&w.as_str()) => {
                matches!(self.peek_at(1), Some(TokKind::Ident(_)))
                    || (self.class_names.contains(w) && self.is_punct_at(1, "*"))
            }
            _ => false,
        }
    }

    fn function(&mut self, class: Option<&str>) -> Result<Option<FunctionDecl>, FrontendError> {
        let first_line = self.here().0;
        let ret = self.type_name()?;
        let mut name = self.ident()?;
        let mut class_name = class.map(str::to_string);
        if self.is_punct("::") {
            self.bump();
            class_name = Some(name);
            name = self.ident()?;
        }
        if !self.is_punct("(") {
            // Data member or global variable: skip to the end of the declaration.
            if class.is_some() || self.is_punct(";") || self.is_punct("=") || self.is_punct("[") {
                while !self.is_punct(";") {
                    if self.peek().is_none() {
                        return self.err("unterminated declaration");
                    }
                    self.bump();
                }
                self.bump();
                return Ok(None);
            }
            return self.err(format!("expected `(` after `{name}`"));
        }
        self.bump();
        let mut params = Vec::new();
        if self.is_word("void") && self.is_punct_at(1, ")") {
            self.bump();
        }
        while !self.is_punct(")") {
            let mut ty = self.type_name()?;
            let pname = self.ident()?;
            while self.is_punct("[") {
                self.bump();
                let mut dim = String::new();
                while !self.is_punct("]") {
                    match self.peek() {
                        Some(TokKind::Int(v)) => dim.push_str(&v.to_string()),
                        Some(TokKind::Ident(s)) => dim.push_str(s),
                        _ => return self.err("unsupported array extent in parameter"),
                    }
                    self.bump();
                }
                self.bump();
                ty.push_str(&format!("[{dim}]"));
            }
            params.push(Param { name: pname, ty });
            if !self.is_punct(")") {
                self.expect(",")?;
            }
        }
        self.bump();
        if self.is_word("const") {
            self.bump();
        }
        if self.is_punct(";") {
            self.bump();
            return Ok(None);
        }
        if !self.is_punct("{") {
            return self.err(format!("expected function body for `{name}`"));
        }
        self.loop_indices.clear();
        let body = self.stmt()?;
        let last_line = self.toks[self.pos - 1].end_line;
        Ok(Some(FunctionDecl {
            name,
            class_name,
            return_type: ret,
            params,
            body,
            first_line,
            last_line,
        }))
    }

    // ----- statements ---------------------------------------------------

    /// Parses one statement, wrapping multi-declarator declarations in a block.
    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let mut v = Vec::new();
        self.stmt_into(&mut v)?;
        if v.len() == 1 {
            Ok(v.pop().unwrap())
        } else {
            let first_line = v[0].first_line;
            let last_line = v.last().unwrap().last_line;
            let id = self.next_id;
            self.next_id += 1;
            self.line_index.insert(id, self.line_index[&v[0].id].clone());
            Ok(Stmt {
                id,
                first_line,
                last_line,
                annotations: Annotations::default(),
                kind: StmtKind::Block(v),
            })
        }
    }

    fn stmt_into(&mut self, out: &mut Vec<Stmt>) -> Result<(), FrontendError> {
        self.absorb_pragmas()?;
        let (line, _) = self.here();
        for bad in UNSUPPORTED {
            if self.is_word(bad) {
                return Err(FrontendError::Unsupported {
                    line,
                    construct: format!("`{bad}`"),
                });
            }
        }
        if self.starts_decl() {
            return self.decl_stmt(out);
        }
        let (id, annotations) = self.begin_stmt();
        let kind = self.stmt_kind(id);
        let (first_line, last_line) = self.end_stmt();
        out.push(Stmt {
            id,
            first_line,
            last_line,
            annotations,
            kind: kind?,
        });
        Ok(())
    }

    fn stmt_kind(&mut self, _id: StmtId) -> Result<StmtKind, FrontendError> {
        if self.is_punct("{") {
            self.bump();
            let mut stmts = Vec::new();
            loop {
                self.absorb_pragmas()?;
                if self.is_punct("}") {
                    break;
                }
                if self.peek().is_none() {
                    return self.err("unterminated block");
                }
                self.stmt_into(&mut stmts)?;
            }
            if let Some(o) = self.owners.last_mut() {
                o.flush();
            }
            self.bump();
            return Ok(StmtKind::Block(stmts));
        }
        if self.is_punct(";") {
            self.bump();
            return Ok(StmtKind::Empty);
        }
        if self.is_word("return") {
            self.bump();
            let e = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect(";")?;
            return Ok(StmtKind::Return(e));
        }
        if self.is_word("for") {
            return self.for_stmt();
        }
        if self.is_word("if") {
            return self.if_stmt();
        }
        let e = self.expr()?;
        self.expect(";")?;
        Ok(match e {
            Expr::Call(c) => StmtKind::Call(c),
            e => StmtKind::Expr(e),
        })
    }

    fn declarator(&mut self, base: &str) -> Result<Decl, FrontendError> {
        let mut ty = base.to_string();
        while self.is_punct("*") {
            self.bump();
            ty.push('*');
        }
        let name = self.ident()?;
        let mut dims = Vec::new();
        while self.is_punct("[") {
            self.bump();
            if self.is_punct("]") {
                dims.push(None);
            } else {
                dims.push(Some(self.expr()?));
            }
            self.expect("]")?;
        }
        let init = if self.is_punct("=") {
            self.bump();
            Some(self.assignment()?)
        } else {
            None
        };
        Ok(Decl { ty, name, dims, init })
    }

    fn decl_stmt(&mut self, out: &mut Vec<Stmt>) -> Result<(), FrontendError> {
        let (id, annotations) = self.begin_stmt();
        let result = (|| {
            let base = self.type_name()?;
            let mut decls = vec![self.declarator(&base)?];
            while self.is_punct(",") {
                self.bump();
                decls.push(self.declarator(&base)?);
            }
            self.expect(";")?;
            Ok(decls)
        })();
        let (first_line, last_line) = self.end_stmt();
        let decls = result?;
        let lines = self.line_index[&id].clone();
        for (k, d) in decls.into_iter().enumerate() {
            let sid = if k == 0 {
                id
            } else {
                let s = self.next_id;
                self.next_id += 1;
                self.line_index.insert(s, lines.clone());
                s
            };
            out.push(Stmt {
                id: sid,
                first_line,
                last_line,
                annotations: if k == 0 { annotations.clone() } else { Annotations::default() },
                kind: StmtKind::Decl(d),
            });
        }
        Ok(())
    }

    fn for_stmt(&mut self) -> Result<StmtKind, FrontendError> {
        self.bump();
        self.expect("(")?;
        let init = if self.is_punct(";") {
            None
        } else if self.starts_decl() {
            let base = self.type_name()?;
            Some(ForInit::Decl(self.declarator(&base)?))
        } else {
            Some(ForInit::Expr(self.expr()?))
        };
        self.expect(";")?;
        let cond = if self.is_punct(";") { None } else { Some(self.expr()?) };
        self.expect(";")?;
        let step = if self.is_punct(")") { None } else { Some(self.expr()?) };
        self.expect(")")?;
        let scop = extract_scop(init.as_ref(), cond.as_ref(), step.as_ref(), &self.loop_indices);
        let index = match &scop {
            Ok(s) => Some(s.index.clone()),
            Err(f) => f.partial.as_ref().map(|s| s.index.clone()),
        };
        if let Some(i) = &index {
            self.loop_indices.push(i.clone());
        }
        let body = self.stmt();
        if index.is_some() {
            self.loop_indices.pop();
        }
        Ok(StmtKind::For(ForLoop {
            init,
            cond,
            step,
            body: Box::new(body?),
            scop,
        }))
    }

    fn if_stmt(&mut self) -> Result<StmtKind, FrontendError> {
        self.bump();
        self.expect("(")?;
        let start = self.toks.get(self.pos).map(|t| t.offset).unwrap_or(0);
        let cond = self.expr()?;
        let end = self.toks[self.pos - 1].end;
        let cond_text = self.src[start..end].to_string();
        self.expect(")")?;
        let then_branch = Box::new(self.stmt()?);
        let else_branch = if self.is_word("else") {
            self.bump();
            Some(Box::new(self.stmt()?))
        } else {
            None
        };
        Ok(StmtKind::If(IfStmt {
            cond,
            cond_text,
            then_branch,
            else_branch,
        }))
    }

    // ----- expressions --------------------------------------------------

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let e = self.assignment()?;
        if self.is_punct(",") && !self.owners.is_empty() {
            let (line, _) = self.here();
            return Err(FrontendError::Unsupported {
                line,
                construct: "comma operator".into(),
            });
        }
        Ok(e)
    }

    fn assignment(&mut self) -> Result<Expr, FrontendError> {
        let lhs = self.conditional()?;
        let op = match self.peek() {
            Some(TokKind::Punct(p)) => match *p {
                "=" => Some(None),
                "+=" => Some(Some(BinOp::Add)),
                "-=" => Some(Some(BinOp::Sub)),
                "*=" => Some(Some(BinOp::Mul)),
                "/=" => Some(Some(BinOp::Div)),
                "%=" => Some(Some(BinOp::Rem)),
                "&=" => Some(Some(BinOp::BitAnd)),
                "|=" => Some(Some(BinOp::BitOr)),
                "^=" => Some(Some(BinOp::BitXor)),
                "<<=" => Some(Some(BinOp::Shl)),
                ">>=" => Some(Some(BinOp::Shr)),
                _ => None,
            },
            _ => None,
        };
        match op {
            Some(op) => {
                self.bump();
                let rhs = self.assignment()?;
                Ok(Expr::Assign(op, Box::new(lhs), Box::new(rhs)))
            }
            None => Ok(lhs),
        }
    }

    fn conditional(&mut self) -> Result<Expr, FrontendError> {
        let c = self.binary(1)?;
        if self.is_punct("?") {
            self.bump();
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.conditional()?;
            return Ok(Expr::Conditional(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(TokKind::Punct(p)) => BinOp::from_symbol(p),
                _ => None,
            };
            let Some(op) = op.filter(|o| o.precedence() >= min_prec) else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        let op = match self.peek() {
            Some(TokKind::Punct(p)) => match *p {
                "-" => Some(UnOp::Neg),
                "!" => Some(UnOp::Not),
                "~" => Some(UnOp::BitNot),
                "*" => Some(UnOp::Deref),
                "&" => Some(UnOp::AddrOf),
                "++" => Some(UnOp::PreInc),
                "--" => Some(UnOp::PreDec),
                "+" => {
                    self.bump();
                    return self.unary();
                }
                "(" if matches!(self.peek_at(1), Some(TokKind::Ident(w)) if TYPE_WORDS.contains(&w.as_str())) => {
                    self.bump();
                    let ty = self.type_name()?;
                    self.expect(")")?;
                    let e = self.unary()?;
                    return Ok(Expr::Cast(ty, Box::new(e)));
                }
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let e = self.unary()?;
            return Ok(Expr::Unary(op, Box::new(e)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("[") {
                self.bump();
                let i = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(i));
            } else if self.is_punct("(") {
                self.bump();
                let mut args = Vec::new();
                while !self.is_punct(")") {
                    args.push(self.assignment()?);
                    if !self.is_punct(")") {
                        self.expect(",")?;
                    }
                }
                self.bump();
                e = match e {
                    Expr::Var(n) => match n.split_once("::") {
                        Some((q, f)) => Expr::Call(Call {
                            receiver: None,
                            qualifier: Some(q.to_string()),
                            name: f.to_string(),
                            args,
                        }),
                        None => Expr::Call(Call {
                            receiver: None,
                            qualifier: None,
                            name: n,
                            args,
                        }),
                    },
                    Expr::Member(obj, f) => Expr::Call(Call {
                        receiver: Some(obj),
                        qualifier: None,
                        name: f,
                        args,
                    }),
                    _ => return self.err("call through an expression is not supported"),
                };
            } else if self.is_punct(".") || self.is_punct("->") {
                self.bump();
                let f = self.ident()?;
                e = Expr::Member(Box::new(e), f);
            } else if self.is_punct("++") {
                self.bump();
                e = Expr::Unary(UnOp::PostInc, Box::new(e));
            } else if self.is_punct("--") {
                self.bump();
                e = Expr::Unary(UnOp::PostDec, Box::new(e));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        match self.peek().cloned() {
            Some(TokKind::Int(v)) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Some(TokKind::Float(f)) => {
                self.bump();
                Ok(Expr::Float(f))
            }
            Some(TokKind::Ident(n)) => {
                self.bump();
                if self.is_punct("::") {
                    self.bump();
                    let f = self.ident()?;
                    return Ok(Expr::Var(format!("{n}::{f}")));
                }
                Ok(Expr::Var(n))
            }
            Some(TokKind::Punct("(")) => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => {
                let found = self.describe();
                self.err(format!("expected an expression, found {found}"))
            }
        }
    }
}
