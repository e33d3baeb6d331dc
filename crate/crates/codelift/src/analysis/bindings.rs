//! Def/use extraction over a cell's AST.
//!
//! `defined` is the set of names a cell binds at module level; `used` is
//! the set of free names the cell needs from outside (earlier cells,
//! imports it does not make itself, or builtins). The walker models just
//! enough of Python's scoping to get those two sets right:
//!
//! - Module-level code executes in order, so a top-level load counts as a
//!   use only if the name was not already defined earlier in the cell.
//! - Function and lambda bodies run later, so loads inside them resolve
//!   against everything the cell defines at module level, regardless of
//!   statement order, plus the enclosing function scopes.
//! - Class bodies execute immediately and bind attributes, not module
//!   names; their names are invisible to nested functions.
//! - Comprehensions get their own scope but evaluate eagerly; walrus
//!   targets inside them bind to the nearest enclosing real scope.

use std::collections::{BTreeMap, BTreeSet};

use rustpython_parser::ast::{self, Ranged};

use super::syntax::{parse_module, LineIndex, SyntaxDiagnosis};

/// An import binding: `(module path as written, name bound in the cell)`.
pub type ImportPair = (String, String);

/// Names a cell defines, uses, and imports.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BindingSet {
    /// Names bound at module level anywhere in the cell.
    pub defined: BTreeSet<String>,
    /// Free names the cell reads but does not define.
    pub used: BTreeSet<String>,
    /// Import bindings. `import numpy as np` yields `("numpy", "np")`;
    /// `from os.path import join` yields `("os.path", "join")`.
    pub imports: BTreeSet<ImportPair>,
}

/// One recorded import with its source line (for lint findings).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ImportRecord {
    pub module: String,
    pub alias: String,
    pub line: usize,
}

/// Full analysis output; [`BindingSet`] plus bookkeeping other passes use.
#[derive(Debug, Clone, Default)]
pub(crate) struct Analysis {
    pub bindings: BindingSet,
    /// Every base name read anywhere in the cell, bound or not.
    pub all_loads: BTreeSet<String>,
    pub imports: Vec<ImportRecord>,
    /// First line at which each module-level name is bound.
    pub first_def_line: BTreeMap<String, usize>,
}

/// Extracts the def/use binding set of a cell source.
pub fn extract_bindings(source: &str) -> Result<BindingSet, SyntaxDiagnosis> {
    analyze(source).map(|analysis| analysis.bindings)
}

pub(crate) fn analyze(source: &str) -> Result<Analysis, SyntaxDiagnosis> {
    let body = parse_module(source)?;
    let index = LineIndex::new(source);

    let mut top_level = block_bindings(&body);
    collect_global_assignments(&body, &mut top_level);

    let mut walker = Walker {
        index: &index,
        top_level_all: top_level,
        analysis: Analysis::default(),
        scopes: vec![Scope::new(ScopeKind::Module)],
        deferred_depth: 0,
        current_line: 1,
    };
    walker.walk_block(&body);

    let mut analysis = walker.analysis;
    analysis.bindings.defined = walker.top_level_all;
    Ok(analysis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScopeKind {
    Module,
    Function,
    Class,
    Comprehension,
}

struct Scope {
    kind: ScopeKind,
    bound: BTreeSet<String>,
}

impl Scope {
    fn new(kind: ScopeKind) -> Self {
        Scope {
            kind,
            bound: BTreeSet::new(),
        }
    }
}

struct Walker<'a> {
    index: &'a LineIndex,
    top_level_all: BTreeSet<String>,
    analysis: Analysis,
    scopes: Vec<Scope>,
    /// How many enclosing scopes run later (function/lambda bodies).
    deferred_depth: usize,
    current_line: usize,
}

impl<'a> Walker<'a> {
    fn load(&mut self, name: &str) {
        self.analysis.all_loads.insert(name.to_string());
        let top = self.scopes.len() - 1;
        for pos in (0..=top).rev() {
            let scope = &self.scopes[pos];
            // Class attributes are visible only to the class body itself.
            if scope.kind == ScopeKind::Class && pos != top {
                continue;
            }
            if pos == 0 {
                let found = if self.deferred_depth > 0 {
                    self.top_level_all.contains(name)
                } else {
                    scope.bound.contains(name)
                };
                if found {
                    return;
                }
            } else if scope.bound.contains(name) {
                return;
            }
        }
        self.analysis.bindings.used.insert(name.to_string());
    }

    fn bind(&mut self, name: &str) {
        if self.scopes.len() == 1 {
            self.analysis
                .first_def_line
                .entry(name.to_string())
                .or_insert(self.current_line);
        }
        self.scopes
            .last_mut()
            .expect("scope stack never empty")
            .bound
            .insert(name.to_string());
    }

    /// Walrus targets skip comprehension scopes and bind to the nearest
    /// enclosing real scope.
    fn bind_walrus(&mut self, name: &str) {
        let pos = self
            .scopes
            .iter()
            .rposition(|s| s.kind != ScopeKind::Comprehension)
            .unwrap_or(0);
        if pos == 0 {
            self.analysis
                .first_def_line
                .entry(name.to_string())
                .or_insert(self.current_line);
        }
        self.scopes[pos].bound.insert(name.to_string());
    }

    fn walk_block(&mut self, stmts: &[ast::Stmt]) {
        for stmt in stmts {
            self.walk_stmt(stmt);
        }
    }

    fn walk_stmt(&mut self, stmt: &ast::Stmt) {
        self.current_line = self.index.line_of(stmt.range().start().into());
        match stmt {
            ast::Stmt::Assign(s) => {
                self.expr(&s.value);
                for target in &s.targets {
                    self.bind_target(target);
                }
            }
            ast::Stmt::AugAssign(s) => {
                self.expr(&s.value);
                match s.target.as_ref() {
                    ast::Expr::Name(name) => {
                        self.load(name.id.as_str());
                        self.bind(name.id.as_str());
                    }
                    other => self.bind_target(other),
                }
            }
            ast::Stmt::AnnAssign(s) => {
                self.expr(&s.annotation);
                if let Some(value) = &s.value {
                    self.expr(value);
                    self.bind_target(&s.target);
                }
            }
            ast::Stmt::For(s) => {
                self.expr(&s.iter);
                self.bind_target(&s.target);
                self.walk_block(&s.body);
                self.walk_block(&s.orelse);
            }
            ast::Stmt::AsyncFor(s) => {
                self.expr(&s.iter);
                self.bind_target(&s.target);
                self.walk_block(&s.body);
                self.walk_block(&s.orelse);
            }
            ast::Stmt::While(s) => {
                self.expr(&s.test);
                self.walk_block(&s.body);
                self.walk_block(&s.orelse);
            }
            ast::Stmt::If(s) => {
                self.expr(&s.test);
                self.walk_block(&s.body);
                self.walk_block(&s.orelse);
            }
            ast::Stmt::With(s) => self.walk_with(&s.items, &s.body),
            ast::Stmt::AsyncWith(s) => self.walk_with(&s.items, &s.body),
            ast::Stmt::Try(s) => {
                self.walk_block(&s.body);
                for handler in &s.handlers {
                    self.walk_handler(handler);
                }
                self.walk_block(&s.orelse);
                self.walk_block(&s.finalbody);
            }
            ast::Stmt::TryStar(s) => {
                self.walk_block(&s.body);
                for handler in &s.handlers {
                    self.walk_handler(handler);
                }
                self.walk_block(&s.orelse);
                self.walk_block(&s.finalbody);
            }
            ast::Stmt::Match(s) => {
                self.expr(&s.subject);
                for case in &s.cases {
                    self.bind_pattern(&case.pattern);
                    if let Some(guard) = &case.guard {
                        self.expr(guard);
                    }
                    self.walk_block(&case.body);
                }
            }
            ast::Stmt::Import(s) => {
                let line = self.current_line;
                for alias in &s.names {
                    let module = alias.name.as_str();
                    let bound = alias
                        .asname
                        .as_ref()
                        .map(|n| n.as_str())
                        .unwrap_or_else(|| module.split('.').next().unwrap_or(module));
                    self.record_import(module.to_string(), bound.to_string(), line);
                }
            }
            ast::Stmt::ImportFrom(s) => {
                let line = self.current_line;
                let level = s.level.map(|l| l.to_usize()).unwrap_or(0);
                let mut module = ".".repeat(level);
                if let Some(name) = &s.module {
                    module.push_str(name.as_str());
                }
                for alias in &s.names {
                    // `from m import *` binds an unknowable set; skip it.
                    if alias.name.as_str() == "*" {
                        continue;
                    }
                    let bound = alias
                        .asname
                        .as_ref()
                        .map(|n| n.as_str())
                        .unwrap_or(alias.name.as_str());
                    self.record_import(module.clone(), bound.to_string(), line);
                }
            }
            ast::Stmt::FunctionDef(s) => {
                self.walk_function(&s.decorator_list, &s.args, s.returns.as_deref(), s.name.as_str(), &s.body)
            }
            ast::Stmt::AsyncFunctionDef(s) => {
                self.walk_function(&s.decorator_list, &s.args, s.returns.as_deref(), s.name.as_str(), &s.body)
            }
            ast::Stmt::ClassDef(s) => {
                for dec in &s.decorator_list {
                    self.expr(dec);
                }
                for base in &s.bases {
                    self.expr(base);
                }
                for kw in &s.keywords {
                    self.expr(&kw.value);
                }
                self.bind(s.name.as_str());
                self.scopes.push(Scope::new(ScopeKind::Class));
                self.walk_block(&s.body);
                self.scopes.pop();
            }
            ast::Stmt::Return(s) => {
                if let Some(value) = &s.value {
                    self.expr(value);
                }
            }
            ast::Stmt::Delete(s) => {
                for target in &s.targets {
                    match target {
                        // `del x` unbinds; it reads nothing.
                        ast::Expr::Name(_) => {}
                        other => self.bind_target(other),
                    }
                }
            }
            ast::Stmt::Raise(s) => {
                if let Some(exc) = &s.exc {
                    self.expr(exc);
                }
                if let Some(cause) = &s.cause {
                    self.expr(cause);
                }
            }
            ast::Stmt::Assert(s) => {
                self.expr(&s.test);
                if let Some(msg) = &s.msg {
                    self.expr(msg);
                }
            }
            ast::Stmt::Expr(s) => self.expr(&s.value),
            ast::Stmt::Global(_)
            | ast::Stmt::Nonlocal(_)
            | ast::Stmt::Pass(_)
            | ast::Stmt::Break(_)
            | ast::Stmt::Continue(_) => {}
            ast::Stmt::TypeAlias(s) => {
                self.bind_target(&s.name);
                self.expr(&s.value);
            }
        }
    }

    fn walk_with(&mut self, items: &[ast::WithItem], body: &[ast::Stmt]) {
        for item in items {
            self.expr(&item.context_expr);
            if let Some(vars) = &item.optional_vars {
                self.bind_target(vars);
            }
        }
        self.walk_block(body);
    }

    fn walk_handler(&mut self, handler: &ast::ExceptHandler) {
        let ast::ExceptHandler::ExceptHandler(h) = handler;
        if let Some(type_) = &h.type_ {
            self.expr(type_);
        }
        if let Some(name) = &h.name {
            self.bind(name.as_str());
        }
        self.walk_block(&h.body);
    }

    fn walk_function(
        &mut self,
        decorators: &[ast::Expr],
        args: &ast::Arguments,
        returns: Option<&ast::Expr>,
        name: &str,
        body: &[ast::Stmt],
    ) {
        // Decorators, defaults, and annotations evaluate at definition
        // time, in the enclosing scope.
        for dec in decorators {
            self.expr(dec);
        }
        self.eval_arg_defaults_and_annotations(args);
        if let Some(returns) = returns {
            self.expr(returns);
        }
        self.bind(name);

        let mut scope = Scope::new(ScopeKind::Function);
        collect_param_names(args, &mut scope.bound);
        let mut locals = block_bindings(body);
        let (globals, nonlocals) = declared_names(body);
        for skip in globals.iter().chain(nonlocals.iter()) {
            locals.remove(skip);
        }
        scope.bound.extend(locals);

        self.scopes.push(scope);
        self.deferred_depth += 1;
        self.walk_block(body);
        self.deferred_depth -= 1;
        self.scopes.pop();
    }

    fn eval_arg_defaults_and_annotations(&mut self, args: &ast::Arguments) {
        for arg in args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs) {
            if let Some(default) = &arg.default {
                self.expr(default);
            }
            if let Some(ann) = &arg.def.annotation {
                self.expr(ann);
            }
        }
        if let Some(vararg) = &args.vararg {
            if let Some(ann) = &vararg.annotation {
                self.expr(ann);
            }
        }
        if let Some(kwarg) = &args.kwarg {
            if let Some(ann) = &kwarg.annotation {
                self.expr(ann);
            }
        }
    }

    fn record_import(&mut self, module: String, alias: String, line: usize) {
        self.bind(&alias);
        self.analysis
            .bindings
            .imports
            .insert((module.clone(), alias.clone()));
        self.analysis.imports.push(ImportRecord {
            module,
            alias,
            line,
        });
    }

    /// Binds an assignment target, reading any bases it subscripts or
    /// dereferences.
    fn bind_target(&mut self, target: &ast::Expr) {
        match target {
            ast::Expr::Name(name) => self.bind(name.id.as_str()),
            ast::Expr::Tuple(t) => {
                for elt in &t.elts {
                    self.bind_target(elt);
                }
            }
            ast::Expr::List(l) => {
                for elt in &l.elts {
                    self.bind_target(elt);
                }
            }
            ast::Expr::Starred(s) => self.bind_target(&s.value),
            // `obj.attr = v` and `d[k] = v` read their base.
            ast::Expr::Attribute(a) => self.expr(&a.value),
            ast::Expr::Subscript(s) => {
                self.expr(&s.value);
                self.expr(&s.slice);
            }
            other => self.expr(other),
        }
    }

    fn bind_pattern(&mut self, pattern: &ast::Pattern) {
        match pattern {
            ast::Pattern::MatchValue(p) => self.expr(&p.value),
            ast::Pattern::MatchSingleton(_) => {}
            ast::Pattern::MatchSequence(p) => {
                for sub in &p.patterns {
                    self.bind_pattern(sub);
                }
            }
            ast::Pattern::MatchMapping(p) => {
                for key in &p.keys {
                    self.expr(key);
                }
                for sub in &p.patterns {
                    self.bind_pattern(sub);
                }
                if let Some(rest) = &p.rest {
                    self.bind(rest.as_str());
                }
            }
            ast::Pattern::MatchClass(p) => {
                self.expr(&p.cls);
                for sub in &p.patterns {
                    self.bind_pattern(sub);
                }
                for sub in &p.kwd_patterns {
                    self.bind_pattern(sub);
                }
            }
            ast::Pattern::MatchStar(p) => {
                if let Some(name) = &p.name {
                    self.bind(name.as_str());
                }
            }
            ast::Pattern::MatchAs(p) => {
                if let Some(sub) = &p.pattern {
                    self.bind_pattern(sub);
                }
                if let Some(name) = &p.name {
                    self.bind(name.as_str());
                }
            }
            ast::Pattern::MatchOr(p) => {
                for sub in &p.patterns {
                    self.bind_pattern(sub);
                }
            }
        }
    }

    fn expr(&mut self, expr: &ast::Expr) {
        match expr {
            ast::Expr::Name(name) => {
                if matches!(name.ctx, ast::ExprContext::Load) {
                    self.load(name.id.as_str());
                }
            }
            ast::Expr::Attribute(a) => self.expr(&a.value),
            ast::Expr::Subscript(s) => {
                self.expr(&s.value);
                self.expr(&s.slice);
            }
            ast::Expr::Call(c) => {
                self.expr(&c.func);
                for arg in &c.args {
                    self.expr(arg);
                }
                for kw in &c.keywords {
                    self.expr(&kw.value);
                }
            }
            ast::Expr::BinOp(b) => {
                self.expr(&b.left);
                self.expr(&b.right);
            }
            ast::Expr::UnaryOp(u) => self.expr(&u.operand),
            ast::Expr::BoolOp(b) => {
                for value in &b.values {
                    self.expr(value);
                }
            }
            ast::Expr::Compare(c) => {
                self.expr(&c.left);
                for comp in &c.comparators {
                    self.expr(comp);
                }
            }
            ast::Expr::IfExp(i) => {
                self.expr(&i.test);
                self.expr(&i.body);
                self.expr(&i.orelse);
            }
            ast::Expr::Dict(d) => {
                for key in d.keys.iter().flatten() {
                    self.expr(key);
                }
                for value in &d.values {
                    self.expr(value);
                }
            }
            ast::Expr::Set(s) => {
                for elt in &s.elts {
                    self.expr(elt);
                }
            }
            ast::Expr::List(l) => {
                for elt in &l.elts {
                    self.expr(elt);
                }
            }
            ast::Expr::Tuple(t) => {
                for elt in &t.elts {
                    self.expr(elt);
                }
            }
            ast::Expr::Starred(s) => self.expr(&s.value),
            ast::Expr::Lambda(l) => {
                for arg in l.args.posonlyargs.iter().chain(&l.args.args).chain(&l.args.kwonlyargs)
                {
                    if let Some(default) = &arg.default {
                        self.expr(default);
                    }
                }
                let mut scope = Scope::new(ScopeKind::Function);
                collect_param_names(&l.args, &mut scope.bound);
                expr_walrus_targets(&l.body, &mut scope.bound);
                self.scopes.push(scope);
                self.deferred_depth += 1;
                self.expr(&l.body);
                self.deferred_depth -= 1;
                self.scopes.pop();
            }
            ast::Expr::NamedExpr(n) => {
                self.expr(&n.value);
                if let ast::Expr::Name(name) = n.target.as_ref() {
                    self.bind_walrus(name.id.as_str());
                }
            }
            ast::Expr::ListComp(c) => self.comprehension(&c.generators, &[&c.elt]),
            ast::Expr::SetComp(c) => self.comprehension(&c.generators, &[&c.elt]),
            ast::Expr::GeneratorExp(c) => self.comprehension(&c.generators, &[&c.elt]),
            ast::Expr::DictComp(c) => self.comprehension(&c.generators, &[&c.key, &c.value]),
            ast::Expr::Await(a) => self.expr(&a.value),
            ast::Expr::Yield(y) => {
                if let Some(value) = &y.value {
                    self.expr(value);
                }
            }
            ast::Expr::YieldFrom(y) => self.expr(&y.value),
            ast::Expr::JoinedStr(j) => {
                for value in &j.values {
                    self.expr(value);
                }
            }
            ast::Expr::FormattedValue(f) => {
                self.expr(&f.value);
                if let Some(spec) = &f.format_spec {
                    self.expr(spec);
                }
            }
            ast::Expr::Slice(s) => {
                for part in [&s.lower, &s.upper, &s.step].into_iter().flatten() {
                    self.expr(part);
                }
            }
            ast::Expr::Constant(_) => {}
        }
    }

    /// Comprehensions evaluate in place: the first iterable in the current
    /// scope, everything else inside a fresh comprehension scope.
    fn comprehension(&mut self, generators: &[ast::Comprehension], elements: &[&ast::Expr]) {
        if let Some(first) = generators.first() {
            self.expr(&first.iter);
        }
        self.scopes.push(Scope::new(ScopeKind::Comprehension));
        for (i, gen) in generators.iter().enumerate() {
            if i > 0 {
                self.expr(&gen.iter);
            }
            self.bind_target(&gen.target);
            for if_clause in &gen.ifs {
                self.expr(if_clause);
            }
        }
        for element in elements {
            self.expr(element);
        }
        self.scopes.pop();
    }
}

fn collect_param_names(args: &ast::Arguments, into: &mut BTreeSet<String>) {
    for arg in args.posonlyargs.iter().chain(&args.args).chain(&args.kwonlyargs) {
        into.insert(arg.def.arg.to_string());
    }
    if let Some(vararg) = &args.vararg {
        into.insert(vararg.arg.to_string());
    }
    if let Some(kwarg) = &args.kwarg {
        into.insert(kwarg.arg.to_string());
    }
}

/// Names bound by the statements of one block, descending into compound
/// statements but not into nested function/class bodies (which only
/// contribute their own name) or comprehension scopes (except walrus
/// targets, which escape them).
fn block_bindings(stmts: &[ast::Stmt]) -> BTreeSet<String> {
    let mut bound = BTreeSet::new();
    for stmt in stmts {
        stmt_bindings(stmt, &mut bound);
    }
    bound
}

fn stmt_bindings(stmt: &ast::Stmt, bound: &mut BTreeSet<String>) {
    match stmt {
        ast::Stmt::Assign(s) => {
            expr_walrus_targets(&s.value, bound);
            for target in &s.targets {
                target_names(target, bound);
            }
        }
        ast::Stmt::AugAssign(s) => {
            expr_walrus_targets(&s.value, bound);
            target_names(&s.target, bound);
        }
        ast::Stmt::AnnAssign(s) => {
            expr_walrus_targets(&s.annotation, bound);
            if let Some(value) = &s.value {
                expr_walrus_targets(value, bound);
                target_names(&s.target, bound);
            }
        }
        ast::Stmt::For(s) => {
            expr_walrus_targets(&s.iter, bound);
            target_names(&s.target, bound);
            for sub in s.body.iter().chain(&s.orelse) {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::AsyncFor(s) => {
            expr_walrus_targets(&s.iter, bound);
            target_names(&s.target, bound);
            for sub in s.body.iter().chain(&s.orelse) {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::While(s) => {
            expr_walrus_targets(&s.test, bound);
            for sub in s.body.iter().chain(&s.orelse) {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::If(s) => {
            expr_walrus_targets(&s.test, bound);
            for sub in s.body.iter().chain(&s.orelse) {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::With(s) => {
            for item in &s.items {
                expr_walrus_targets(&item.context_expr, bound);
                if let Some(vars) = &item.optional_vars {
                    target_names(vars, bound);
                }
            }
            for sub in &s.body {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::AsyncWith(s) => {
            for item in &s.items {
                expr_walrus_targets(&item.context_expr, bound);
                if let Some(vars) = &item.optional_vars {
                    target_names(vars, bound);
                }
            }
            for sub in &s.body {
                stmt_bindings(sub, bound);
            }
        }
        ast::Stmt::Try(s) => {
            for sub in s
                .body
                .iter()
                .chain(&s.orelse)
                .chain(&s.finalbody)
            {
                stmt_bindings(sub, bound);
            }
            for handler in &s.handlers {
                let ast::ExceptHandler::ExceptHandler(h) = handler;
                if let Some(name) = &h.name {
                    bound.insert(name.to_string());
                }
                for sub in &h.body {
                    stmt_bindings(sub, bound);
                }
            }
        }
        ast::Stmt::TryStar(s) => {
            for sub in s
                .body
                .iter()
                .chain(&s.orelse)
                .chain(&s.finalbody)
            {
                stmt_bindings(sub, bound);
            }
            for handler in &s.handlers {
                let ast::ExceptHandler::ExceptHandler(h) = handler;
                if let Some(name) = &h.name {
                    bound.insert(name.to_string());
                }
                for sub in &h.body {
                    stmt_bindings(sub, bound);
                }
            }
        }
        ast::Stmt::Match(s) => {
            expr_walrus_targets(&s.subject, bound);
            for case in &s.cases {
                pattern_names(&case.pattern, bound);
                for sub in &case.body {
                    stmt_bindings(sub, bound);
                }
            }
        }
        ast::Stmt::Import(s) => {
            for alias in &s.names {
                let name = alias
                    .asname
                    .as_ref()
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| {
                        let full = alias.name.as_str();
                        full.split('.').next().unwrap_or(full).to_string()
                    });
                bound.insert(name);
            }
        }
        ast::Stmt::ImportFrom(s) => {
            for alias in &s.names {
                if alias.name.as_str() == "*" {
                    continue;
                }
                let name = alias
                    .asname
                    .as_ref()
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| alias.name.to_string());
                bound.insert(name);
            }
        }
        ast::Stmt::FunctionDef(s) => {
            for dec in &s.decorator_list {
                expr_walrus_targets(dec, bound);
            }
            bound.insert(s.name.to_string());
        }
        ast::Stmt::AsyncFunctionDef(s) => {
            for dec in &s.decorator_list {
                expr_walrus_targets(dec, bound);
            }
            bound.insert(s.name.to_string());
        }
        ast::Stmt::ClassDef(s) => {
            for dec in &s.decorator_list {
                expr_walrus_targets(dec, bound);
            }
            bound.insert(s.name.to_string());
        }
        ast::Stmt::Expr(s) => expr_walrus_targets(&s.value, bound),
        ast::Stmt::Return(s) => {
            if let Some(value) = &s.value {
                expr_walrus_targets(value, bound);
            }
        }
        ast::Stmt::Assert(s) => {
            expr_walrus_targets(&s.test, bound);
            if let Some(msg) = &s.msg {
                expr_walrus_targets(msg, bound);
            }
        }
        _ => {}
    }
}

fn target_names(target: &ast::Expr, bound: &mut BTreeSet<String>) {
    match target {
        ast::Expr::Name(name) => {
            bound.insert(name.id.to_string());
        }
        ast::Expr::Tuple(t) => {
            for elt in &t.elts {
                target_names(elt, bound);
            }
        }
        ast::Expr::List(l) => {
            for elt in &l.elts {
                target_names(elt, bound);
            }
        }
        ast::Expr::Starred(s) => target_names(&s.value, bound),
        // Attribute/subscript targets bind no plain name.
        _ => {}
    }
}

fn pattern_names(pattern: &ast::Pattern, bound: &mut BTreeSet<String>) {
    match pattern {
        ast::Pattern::MatchSequence(p) => {
            for sub in &p.patterns {
                pattern_names(sub, bound);
            }
        }
        ast::Pattern::MatchMapping(p) => {
            for sub in &p.patterns {
                pattern_names(sub, bound);
            }
            if let Some(rest) = &p.rest {
                bound.insert(rest.to_string());
            }
        }
        ast::Pattern::MatchClass(p) => {
            for sub in p.patterns.iter().chain(&p.kwd_patterns) {
                pattern_names(sub, bound);
            }
        }
        ast::Pattern::MatchStar(p) => {
            if let Some(name) = &p.name {
                bound.insert(name.to_string());
            }
        }
        ast::Pattern::MatchAs(p) => {
            if let Some(sub) = &p.pattern {
                pattern_names(sub, bound);
            }
            if let Some(name) = &p.name {
                bound.insert(name.to_string());
            }
        }
        ast::Pattern::MatchOr(p) => {
            for sub in &p.patterns {
                pattern_names(sub, bound);
            }
        }
        ast::Pattern::MatchValue(_) | ast::Pattern::MatchSingleton(_) => {}
    }
}

/// Collects walrus targets appearing anywhere in an expression except
/// inside lambda bodies (those bind to the lambda's own scope).
fn expr_walrus_targets(expr: &ast::Expr, bound: &mut BTreeSet<String>) {
    match expr {
        ast::Expr::NamedExpr(n) => {
            if let ast::Expr::Name(name) = n.target.as_ref() {
                bound.insert(name.id.to_string());
            }
            expr_walrus_targets(&n.value, bound);
        }
        ast::Expr::Lambda(l) => {
            for arg in l.args.posonlyargs.iter().chain(&l.args.args).chain(&l.args.kwonlyargs) {
                if let Some(default) = &arg.default {
                    expr_walrus_targets(default, bound);
                }
            }
        }
        ast::Expr::BoolOp(b) => {
            for value in &b.values {
                expr_walrus_targets(value, bound);
            }
        }
        ast::Expr::BinOp(b) => {
            expr_walrus_targets(&b.left, bound);
            expr_walrus_targets(&b.right, bound);
        }
        ast::Expr::UnaryOp(u) => expr_walrus_targets(&u.operand, bound),
        ast::Expr::IfExp(i) => {
            expr_walrus_targets(&i.test, bound);
            expr_walrus_targets(&i.body, bound);
            expr_walrus_targets(&i.orelse, bound);
        }
        ast::Expr::Dict(d) => {
            for key in d.keys.iter().flatten() {
                expr_walrus_targets(key, bound);
            }
            for value in &d.values {
                expr_walrus_targets(value, bound);
            }
        }
        ast::Expr::Set(s) => {
            for elt in &s.elts {
                expr_walrus_targets(elt, bound);
            }
        }
        ast::Expr::List(l) => {
            for elt in &l.elts {
                expr_walrus_targets(elt, bound);
            }
        }
        ast::Expr::Tuple(t) => {
            for elt in &t.elts {
                expr_walrus_targets(elt, bound);
            }
        }
        ast::Expr::Starred(s) => expr_walrus_targets(&s.value, bound),
        ast::Expr::Compare(c) => {
            expr_walrus_targets(&c.left, bound);
            for comp in &c.comparators {
                expr_walrus_targets(comp, bound);
            }
        }
        ast::Expr::Call(c) => {
            expr_walrus_targets(&c.func, bound);
            for arg in &c.args {
                expr_walrus_targets(arg, bound);
            }
            for kw in &c.keywords {
                expr_walrus_targets(&kw.value, bound);
            }
        }
        ast::Expr::Attribute(a) => expr_walrus_targets(&a.value, bound),
        ast::Expr::Subscript(s) => {
            expr_walrus_targets(&s.value, bound);
            expr_walrus_targets(&s.slice, bound);
        }
        ast::Expr::Await(a) => expr_walrus_targets(&a.value, bound),
        ast::Expr::Yield(y) => {
            if let Some(value) = &y.value {
                expr_walrus_targets(value, bound);
            }
        }
        ast::Expr::YieldFrom(y) => expr_walrus_targets(&y.value, bound),
        ast::Expr::JoinedStr(j) => {
            for value in &j.values {
                expr_walrus_targets(value, bound);
            }
        }
        ast::Expr::FormattedValue(f) => expr_walrus_targets(&f.value, bound),
        ast::Expr::Slice(s) => {
            for part in [&s.lower, &s.upper, &s.step].into_iter().flatten() {
                expr_walrus_targets(part, bound);
            }
        }
        // Comprehension scopes: walrus targets escape them, so recurse.
        ast::Expr::ListComp(c) => {
            expr_walrus_targets(&c.elt, bound);
            comprehension_walrus(&c.generators, bound);
        }
        ast::Expr::SetComp(c) => {
            expr_walrus_targets(&c.elt, bound);
            comprehension_walrus(&c.generators, bound);
        }
        ast::Expr::GeneratorExp(c) => {
            expr_walrus_targets(&c.elt, bound);
            comprehension_walrus(&c.generators, bound);
        }
        ast::Expr::DictComp(c) => {
            expr_walrus_targets(&c.key, bound);
            expr_walrus_targets(&c.value, bound);
            comprehension_walrus(&c.generators, bound);
        }
        ast::Expr::Name(_) | ast::Expr::Constant(_) => {}
    }
}

fn comprehension_walrus(generators: &[ast::Comprehension], bound: &mut BTreeSet<String>) {
    for gen in generators {
        expr_walrus_targets(&gen.iter, bound);
        for if_clause in &gen.ifs {
            expr_walrus_targets(if_clause, bound);
        }
    }
}

/// `global` / `nonlocal` declarations directly in a block (descending into
/// compound statements but not nested scopes).
fn declared_names(stmts: &[ast::Stmt]) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut globals = BTreeSet::new();
    let mut nonlocals = BTreeSet::new();
    collect_declared(stmts, &mut globals, &mut nonlocals);
    (globals, nonlocals)
}

fn collect_declared(
    stmts: &[ast::Stmt],
    globals: &mut BTreeSet<String>,
    nonlocals: &mut BTreeSet<String>,
) {
    for stmt in stmts {
        match stmt {
            ast::Stmt::Global(g) => {
                globals.extend(g.names.iter().map(|n| n.to_string()));
            }
            ast::Stmt::Nonlocal(n) => {
                nonlocals.extend(n.names.iter().map(|n| n.to_string()));
            }
            ast::Stmt::For(s) => collect_declared_bodies(&[&s.body, &s.orelse], globals, nonlocals),
            ast::Stmt::AsyncFor(s) => {
                collect_declared_bodies(&[&s.body, &s.orelse], globals, nonlocals)
            }
            ast::Stmt::While(s) => {
                collect_declared_bodies(&[&s.body, &s.orelse], globals, nonlocals)
            }
            ast::Stmt::If(s) => collect_declared_bodies(&[&s.body, &s.orelse], globals, nonlocals),
            ast::Stmt::With(s) => collect_declared_bodies(&[&s.body], globals, nonlocals),
            ast::Stmt::AsyncWith(s) => collect_declared_bodies(&[&s.body], globals, nonlocals),
            ast::Stmt::Try(s) => {
                collect_declared_bodies(&[&s.body, &s.orelse, &s.finalbody], globals, nonlocals);
                for handler in &s.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = handler;
                    collect_declared(&h.body, globals, nonlocals);
                }
            }
            ast::Stmt::TryStar(s) => {
                collect_declared_bodies(&[&s.body, &s.orelse, &s.finalbody], globals, nonlocals);
                for handler in &s.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = handler;
                    collect_declared(&h.body, globals, nonlocals);
                }
            }
            ast::Stmt::Match(s) => {
                for case in &s.cases {
                    collect_declared(&case.body, globals, nonlocals);
                }
            }
            _ => {}
        }
    }
}

fn collect_declared_bodies(
    bodies: &[&Vec<ast::Stmt>],
    globals: &mut BTreeSet<String>,
    nonlocals: &mut BTreeSet<String>,
) {
    for body in bodies {
        collect_declared(body, globals, nonlocals);
    }
}

/// Finds names that functions (or class bodies) assign under a `global`
/// declaration; those become module-level definitions.
fn collect_global_assignments(stmts: &[ast::Stmt], module_defs: &mut BTreeSet<String>) {
    for stmt in stmts {
        match stmt {
            ast::Stmt::FunctionDef(s) => scan_scope_globals(&s.body, module_defs),
            ast::Stmt::AsyncFunctionDef(s) => scan_scope_globals(&s.body, module_defs),
            ast::Stmt::ClassDef(s) => scan_scope_globals(&s.body, module_defs),
            ast::Stmt::For(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
            }
            ast::Stmt::AsyncFor(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
            }
            ast::Stmt::While(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
            }
            ast::Stmt::If(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
            }
            ast::Stmt::With(s) => collect_global_assignments(&s.body, module_defs),
            ast::Stmt::AsyncWith(s) => collect_global_assignments(&s.body, module_defs),
            ast::Stmt::Try(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
                collect_global_assignments(&s.finalbody, module_defs);
                for handler in &s.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = handler;
                    collect_global_assignments(&h.body, module_defs);
                }
            }
            ast::Stmt::TryStar(s) => {
                collect_global_assignments(&s.body, module_defs);
                collect_global_assignments(&s.orelse, module_defs);
                collect_global_assignments(&s.finalbody, module_defs);
                for handler in &s.handlers {
                    let ast::ExceptHandler::ExceptHandler(h) = handler;
                    collect_global_assignments(&h.body, module_defs);
                }
            }
            ast::Stmt::Match(s) => {
                for case in &s.cases {
                    collect_global_assignments(&case.body, module_defs);
                }
            }
            _ => {}
        }
    }
}

/// For one function/class scope: names both declared `global` and bound
/// there become module definitions; then recurse for deeper scopes.
fn scan_scope_globals(body: &[ast::Stmt], module_defs: &mut BTreeSet<String>) {
    let (globals, _) = declared_names(body);
    if !globals.is_empty() {
        let bound = block_bindings(body);
        for name in globals.intersection(&bound) {
            module_defs.insert(name.clone());
        }
    }
    collect_global_assignments(body, module_defs);
}
