use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::binary::{ArchDescription, LineMap, SourceKey};
use crate::frontend::{Call, Expr, FunctionDecl, SourceUnit, Stmt, StmtId, StmtKind};
use crate::polyhedral::{AffineExpr, CountExpr, Var};

use super::context::{apply_annotation, complete_scop, handle_branch, AnalysisContext, AnnotationSite, BranchStrategy, LoopSite};
use super::{CallSite, Finding, FindingKind, FunctionMetrics, MetricVector, MetricsError, ParamInfo};

/// Instruction counts per category for each line of one source file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LineEvidence {
    lines: BTreeMap<u32, BTreeMap<String, u64>>,
}

fn components(p: &str) -> Vec<&str> {
    p.split(['/', '\\']).filter(|c| !c.is_empty() && *c != ".").collect()
}

/// True when the shorter path is a trailing run of the longer one's components.
fn path_suffix_match(a: &str, b: &str) -> bool {
    let (a, b) = (components(a), components(b));
    let n = a.len().min(b.len());
    n > 0 && a[a.len() - n..] == b[b.len() - n..]
}

impl LineEvidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, line: u32, category: &str, count: u64) {
        *self.lines.entry(line).or_default().entry(category.to_string()).or_default() += count;
    }

    pub fn line(&self, line: u32) -> Option<&BTreeMap<String, u64>> {
        self.lines.get(&line)
    }

    pub fn lines(&self) -> impl Iterator<Item = (u32, &BTreeMap<String, u64>)> {
        self.lines.iter().map(|(l, m)| (*l, m))
    }

    /// Picks the rows of `map` that belong to `source_path`. Paths match when one
    /// is a suffix of the other; failing that, on the file name alone.
    pub fn from_line_map(map: &LineMap, source_path: &str, arch: &ArchDescription) -> Self {
        let files: BTreeSet<&str> = map
            .keys()
            .filter_map(|k| match k {
                SourceKey::Line { file, .. } => Some(file.as_str()),
                SourceKey::Unattributed => None,
            })
            .collect();
        let mut chosen: BTreeSet<&str> = files.iter().copied().filter(|f| path_suffix_match(f, source_path)).collect();
        if chosen.is_empty() {
            let base = Path::new(source_path).file_name();
            chosen = files.iter().copied().filter(|f| Path::new(f).file_name() == base).collect();
        }
        let mut out = LineEvidence::new();
        for (key, records) in map {
            if let SourceKey::Line { file, line } = key {
                if chosen.contains(file.as_str()) {
                    for r in records {
                        let cat = r.category.as_deref().unwrap_or_else(|| arch.categorize(&r.mnemonic));
                        out.insert(*line, cat, 1);
                    }
                }
            }
        }
        out
    }
}

fn is_loop(s: &Stmt) -> bool {
    matches!(s.kind, StmtKind::For(_))
}

fn has_loop_hints(s: &Stmt) -> bool {
    s.annotations.lp_init().is_some() || s.annotations.lp_cond().is_some()
}

fn hoist(s: &mut Stmt) {
    for c in s.children_mut() {
        hoist(c);
    }
    if !is_loop(s) || has_loop_hints(s) {
        return;
    }
    let hints = {
        let StmtKind::For(f) = &mut s.kind else { return };
        let body = &mut *f.body;
        let donor = if matches!(body.kind, StmtKind::Block(_)) {
            body.children_mut().into_iter().find(|c| !is_loop(c) && has_loop_hints(c))
        } else if !is_loop(body) && has_loop_hints(body) {
            Some(body)
        } else {
            None
        };
        donor.map(|d| d.annotations.take_loop_hints()).unwrap_or_default()
    };
    for h in hints {
        s.annotations.insert(h);
    }
}

/// Moves `lp_init`/`lp_cond` hints written on the first statements of a loop
/// body up to the loop itself, so every loop head carries everything needed
/// to build its domain.
pub fn collect_bottom_up(mut unit: SourceUnit) -> SourceUnit {
    for f in &mut unit.functions {
        hoist(&mut f.body);
    }
    unit
}

/// Metrics for every function of `unit`. Calls are resolved within the unit.
pub fn generate_top_down(unit: &SourceUnit, evidence: &LineEvidence) -> Vec<FunctionMetrics> {
    let known: BTreeSet<String> = unit.functions.iter().map(FunctionDecl::mangled_name).collect();
    generate_with_known(unit, evidence, &known)
}

/// Like [`generate_top_down`], resolving calls against `known` mangled names.
pub fn generate_with_known(unit: &SourceUnit, evidence: &LineEvidence, known: &BTreeSet<String>) -> Vec<FunctionMetrics> {
    unit.functions.iter().map(|f| FunctionWalk::run(unit, f, evidence, known)).collect()
}

fn base_type(ty: &str) -> &str {
    let t = ty.trim().trim_start_matches("const ").trim();
    t.trim_end_matches(|c: char| matches!(c, '*' | '&' | '[' | ']') || c.is_whitespace())
}

struct FunctionWalk<'a> {
    func: &'a FunctionDecl,
    known: &'a BTreeSet<String>,
    /// Evidence share of each statement, category → count.
    shares: BTreeMap<StmtId, BTreeMap<String, u64>>,
    var_types: BTreeMap<String, String>,
    body: MetricVector,
    calls: Vec<CallSite>,
    findings: Vec<Finding>,
    param_lines: BTreeMap<String, u32>,
}

impl<'a> FunctionWalk<'a> {
    fn run(unit: &'a SourceUnit, func: &'a FunctionDecl, evidence: &LineEvidence, known: &'a BTreeSet<String>) -> FunctionMetrics {
        let mut w = FunctionWalk {
            func,
            known,
            shares: BTreeMap::new(),
            var_types: BTreeMap::new(),
            body: MetricVector::new(),
            calls: Vec::new(),
            findings: Vec::new(),
            param_lines: BTreeMap::new(),
        };
        for p in &func.params {
            w.var_types.insert(p.name.clone(), base_type(&p.ty).to_string());
        }
        func.body.walk(&mut |s| {
            if let StmtKind::Decl(d) = &s.kind {
                w.var_types.insert(d.name.clone(), base_type(&d.ty).to_string());
            }
        });
        w.split_lines(unit, evidence);
        let mut ctx = AnalysisContext::new();
        w.stmt(&func.body, &mut ctx);
        w.finish()
    }

    /// Divides each line's instructions among the statements that own it.
    fn split_lines(&mut self, unit: &SourceUnit, evidence: &LineEvidence) {
        let mut owners: BTreeMap<u32, (Vec<StmtId>, Vec<StmtId>)> = BTreeMap::new();
        self.func.body.walk(&mut |s| {
            for l in unit.lines_of(s.id).into_iter().flatten() {
                let slot = owners.entry(*l).or_default();
                if matches!(s.kind, StmtKind::Block(_)) {
                    slot.1.push(s.id);
                } else {
                    slot.0.push(s.id);
                }
            }
        });
        for line in self.func.first_line..=self.func.last_line {
            let Some(counts) = evidence.line(line) else { continue };
            let ids = match owners.get(&line) {
                Some((stmts, _)) if !stmts.is_empty() => stmts.clone(),
                Some((_, blocks)) if !blocks.is_empty() => blocks.clone(),
                _ => {
                    // Prologue and epilogue code on the signature line runs once per call.
                    for (c, k) in counts {
                        self.body.add_term(c, CountExpr::int(*k));
                    }
                    continue;
                }
            };
            let mut ids = ids;
            ids.sort_unstable();
            ids.dedup();
            if ids.len() > 1 {
                self.findings.push(Finding::new(
                    FindingKind::SharedLine,
                    line,
                    format!("instructions split between {} statements", ids.len()),
                ));
            }
            let n = ids.len() as u64;
            for (c, k) in counts {
                for (pos, id) in ids.iter().enumerate() {
                    let share = k / n + if pos == 0 { k % n } else { 0 };
                    if share > 0 {
                        *self.shares.entry(*id).or_default().entry(c.clone()).or_default() += share;
                    }
                }
            }
        }
    }

    fn note_params(&mut self, e: &CountExpr, line: u32) {
        for p in e.free_params() {
            self.param_lines.entry(p).or_insert(line);
        }
    }

    fn attribute(&mut self, s: &Stmt, multiplier: &CountExpr) {
        if let Some(share) = self.shares.get(&s.id) {
            for (c, k) in share {
                self.body.add_term(c, CountExpr::mul([CountExpr::int(*k), multiplier.clone()]));
            }
        }
        self.note_params(multiplier, s.first_line);
    }

    fn check_annotations(&mut self, s: &Stmt, site: AnnotationSite<'_>) {
        for a in s.annotations.iter() {
            if let Err(e) = apply_annotation(a, site, s.first_line) {
                self.findings.push(e.into());
            }
        }
    }

    fn gap(&mut self, line: u32, reason: impl Into<String>) {
        self.findings.push(MetricsError::ModelGap { line, reason: reason.into() }.into());
    }

    fn stmt(&mut self, s: &Stmt, ctx: &mut AnalysisContext) {
        if s.annotations.skip() {
            self.findings.push(Finding::new(FindingKind::Skipped, s.first_line, "skipped by annotation"));
            return;
        }
        match &s.kind {
            StmtKind::For(f) => {
                self.check_annotations(s, AnnotationSite::Loop(&f.scop));
                let site = if let Some(k) = s.annotations.iterations() {
                    let index = match &f.scop {
                        Ok(sc) => Some(sc.index.clone()),
                        Err(e) => e.partial.as_ref().map(|p| p.index.clone()),
                    };
                    LoopSite::Iterations { index, count: k }
                } else {
                    match complete_scop(&f.scop, &s.annotations) {
                        Some(sc) if sc.is_complete() => LoopSite::Scop(sc),
                        _ => {
                            let reason = match &f.scop {
                                Err(e) => e.reason.clone(),
                                Ok(_) => "loop header is not analyzable".into(),
                            };
                            self.gap(s.first_line, format!("{reason}; annotate the loop with iters or lp_init/lp_cond"));
                            return;
                        }
                    }
                };
                let frame = match ctx.enter_loop(&site) {
                    Ok(fr) => fr,
                    Err(reason) => return self.gap(s.first_line, reason),
                };
                let m = frame.multiplier().clone();
                ctx.push(frame);
                self.attribute(s, &m);
                self.record_calls(s, &m, ctx);
                self.stmt(&f.body, ctx);
                ctx.pop();
            }
            StmtKind::If(i) => {
                self.check_annotations(s, AnnotationSite::Branch);
                let m = ctx.multiplier();
                let split = match handle_branch(i, &s.annotations, ctx, s.first_line) {
                    Ok(sp) => sp,
                    Err(e) => {
                        self.findings.push(e.into());
                        return;
                    }
                };
                self.attribute(s, &m);
                self.record_calls(s, &m, ctx);
                if split.strategy == BranchStrategy::OverApproximate {
                    self.findings.push(Finding::new(
                        FindingKind::OverApprox,
                        s.first_line,
                        format!("branch `{}` outside loops: both arms counted", i.cond_text),
                    ));
                }
                ctx.push(split.then_frame);
                self.stmt(&i.then_branch, ctx);
                ctx.pop();
                if let Some(e) = &i.else_branch {
                    ctx.push(split.else_frame);
                    self.stmt(e, ctx);
                    ctx.pop();
                }
            }
            _ => {
                self.check_annotations(s, AnnotationSite::Statement);
                let m = ctx.multiplier();
                self.attribute(s, &m);
                self.record_calls(s, &m, ctx);
                for c in s.children() {
                    self.stmt(c, ctx);
                }
            }
        }
    }

    fn candidates(&self, call: &Call) -> Vec<String> {
        let n = call.args.len();
        if let Some(q) = &call.qualifier {
            return vec![format!("{q}_{}_{n}", call.name)];
        }
        if let Some(r) = &call.receiver {
            let class = match &**r {
                Expr::Var(v) if v == "this" => self.func.class_name.clone(),
                Expr::Var(v) => self.var_types.get(v).cloned(),
                Expr::Unary(_, inner) => match &**inner {
                    Expr::Var(v) => self.var_types.get(v).cloned(),
                    _ => None,
                },
                _ => None,
            };
            return match class {
                Some(c) => vec![format!("{c}_{}_{n}", call.name)],
                None => vec![format!("{}_{n}", call.name)],
            };
        }
        let mut out = Vec::new();
        if let Some(c) = &self.func.class_name {
            out.push(format!("{c}_{}_{n}", call.name));
        }
        out.push(format!("{}_{n}", call.name));
        out
    }

    fn record_calls(&mut self, s: &Stmt, multiplier: &CountExpr, ctx: &AnalysisContext) {
        for call in s.own_calls() {
            let cands = self.candidates(call);
            let resolved = cands.iter().find(|c| self.known.contains(*c)).cloned();
            let external = resolved.is_none();
            let callee = resolved.unwrap_or_else(|| cands[0].clone());
            if external {
                self.findings.push(Finding::new(
                    FindingKind::ExternalCall,
                    s.first_line,
                    format!("`{}` has no source; only the call sequence is counted", call.name),
                ));
            }
            let args = call.args.iter().map(|a| caller_affine(a, ctx)).collect();
            self.calls.push(CallSite {
                callee,
                line: s.first_line,
                iterations: multiplier.clone(),
                external,
                args,
            });
        }
    }

    fn finish(self) -> FunctionMetrics {
        let formals: Vec<String> = self.func.params.iter().map(|p| p.name.clone()).collect();
        let mut free = self.body.free_params();
        for c in &self.calls {
            free.extend(c.iterations.free_params());
        }
        let mut params: Vec<ParamInfo> = free
            .into_iter()
            .map(|name| {
                let source_line = if formals.contains(&name) {
                    self.func.first_line
                } else {
                    self.param_lines.get(&name).copied().unwrap_or(self.func.first_line)
                };
                ParamInfo { source_line, name }
            })
            .collect();
        params.sort();
        let mut findings = self.findings;
        findings.sort();
        findings.dedup();
        FunctionMetrics {
            mangled_name: self.func.mangled_name(),
            params,
            formals,
            first_line: self.func.first_line,
            body: self.body,
            call_sites: self.calls,
            findings,
        }
    }
}

/// The argument as an affine form over caller parameters, if it is one.
fn caller_affine(e: &Expr, ctx: &AnalysisContext) -> Option<AffineExpr> {
    let a = ctx.affine(e).ok()?;
    a.vars().iter().all(|v| matches!(v, Var::Param(_))).then_some(a)
}
