//! The line-oriented `.fdb` text format for extensional databases, their
//! relationships and view definitions.
//!
//! ```text
//! fdb 1
//! relation customers(cid: int)
//! row 1 -> {age=45, name="Alice"}
//! end
//! rel order links customers.cid, products.pid
//! view adults = filter(fn(c) => c.age >= 18, DB.customers)
//! ```
//!
//! Output is canonical: relations alphabetical, rows by key, attributes
//! alphabetical, relationships in declaration order, views alphabetical.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::value::{format_float, quote_text};
use crate::model::{
    BaseType, Catalog, ConstraintForm, DomainConstraint, Entry, FnKind, FunctionValue, Key, Param,
    ParamSig, RelationshipDecl, Value, ViewDef,
};
use crate::surface::lexer::{tokenize, Token, TokenKind};
use crate::surface::{parse_expr, print_expr};

const HEADER: &str = "fdb 1";

pub fn store_fdb(c: &Catalog) -> Result<String> {
    let mut out = format!("{HEADER}\n");
    for (name, entry) in c.entries() {
        match entry {
            Entry::Stored(v) | Entry::Materialized { value: v, .. } => {
                write_relation(name, v, &mut out)?
            }
            Entry::View(_) => {}
        }
    }
    for r in c.relationships() {
        if r.name != r.function || r.is_predicate {
            return Err(Error::NotSerializable(format!(
                "relationship {:?} has no textual form",
                r.name
            )));
        }
        let parts: Vec<String> = r
            .participants
            .iter()
            .map(|(f, p)| format!("{f}.{p}"))
            .collect();
        out.push_str(&format!("rel {} links {}\n", r.function, parts.join(", ")));
    }
    for (name, entry) in c.entries() {
        let def = match entry {
            Entry::View(def) | Entry::Materialized { def, .. } => def,
            Entry::Stored(_) => continue,
        };
        let text = print_expr(&def.expr);
        let flag = if def.materialized { " materialized" } else { "" };
        out.push_str(&format!("view {name}{flag} = {text}\n"));
    }
    Ok(out)
}

pub fn store_file(c: &Catalog, path: &Path) -> Result<()> {
    let text = store_fdb(c)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_file(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_fdb(&text)
}

fn not_serializable(name: &str, why: impl std::fmt::Display) -> Error {
    Error::NotSerializable(format!("{name}: {why}"))
}

fn write_relation(name: &str, v: &Value, out: &mut String) -> Result<()> {
    let Value::Func(f) = v else {
        return Err(not_serializable(name, "only relations can be stored"));
    };
    if f.kind() != FnKind::Relation {
        return Err(not_serializable(name, "only relations can be stored"));
    }
    if *f.codomain() != DomainConstraint::any() {
        return Err(not_serializable(name, "codomain constraints are not stored"));
    }
    let Some(map) = f.extensional_map() else {
        return Err(not_serializable(name, "computed relations can only be stored as views"));
    };
    if f.sig().arity() == 0 {
        return Err(not_serializable(name, "relations need at least one key parameter"));
    }
    let params: Vec<String> = f
        .sig()
        .params()
        .iter()
        .map(|p| param_text(name, p))
        .collect::<Result<_>>()?;
    out.push_str(&format!("relation {name}({})\n", params.join(", ")));
    for (key, row) in map {
        let keys: Vec<String> = key.iter().map(|k| literal(name, k)).collect::<Result<_>>()?;
        let Value::Func(t) = row else {
            return Err(not_serializable(name, "rows must be tuples"));
        };
        let Some(attrs) = t.extensional_map().filter(|_| t.kind() == FnKind::Tuple) else {
            return Err(not_serializable(name, "rows must be tuples"));
        };
        let mut cells = Vec::with_capacity(attrs.len());
        for (a, v) in attrs {
            let a = match a.as_slice() {
                [Value::Text(a)] if is_name(a) => a,
                _ => return Err(not_serializable(name, "attribute names must be identifiers")),
            };
            cells.push(format!("{a}={}", literal(name, v)?));
        }
        out.push_str(&format!("row {} -> {{{}}}\n", keys.join(" "), cells.join(", ")));
    }
    out.push_str("end\n");
    Ok(())
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn param_text(rel: &str, p: &Param) -> Result<String> {
    let c = &p.constraint;
    let base = match c.base() {
        b @ (BaseType::Int | BaseType::Float | BaseType::Text | BaseType::Bool) => b,
        other => {
            return Err(not_serializable(
                rel,
                format!("parameter {} has base type {other}", p.name),
            ))
        }
    };
    let form = match c.form() {
        ConstraintForm::Any => String::new(),
        ConstraintForm::FiniteSet(values) => {
            let items: Vec<String> = values.iter().map(|v| literal(rel, v)).collect::<Result<_>>()?;
            format!(" in {{{}}}", items.join(", "))
        }
        ConstraintForm::ClosedInterval(lo, hi) => {
            format!(" in [{}; {}]", bound(base, lo.0), bound(base, hi.0))
        }
        ConstraintForm::Predicate(_) => {
            return Err(not_serializable(
                rel,
                format!("parameter {} has a predicate constraint", p.name),
            ))
        }
    };
    Ok(format!("{}: {base}{form}", p.name))
}

fn bound(base: BaseType, x: f64) -> String {
    if base == BaseType::Int && x.fract() == 0.0 && x.abs() < 9e15 && !(x == 0.0 && x.is_sign_negative()) {
        format!("{}", x as i64)
    } else {
        format_float(x)
    }
}

fn literal(rel: &str, v: &Value) -> Result<String> {
    match v {
        Value::Int(i) => Ok(i.to_string()),
        Value::Float(x) if x.0.is_finite() => Ok(format_float(x.0)),
        Value::Text(s) => Ok(quote_text(s)),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(not_serializable(rel, format!("{} value has no literal form", other.type_name()))),
    }
}

// ---- loading ----

struct Line {
    toks: Vec<Token>,
    pos: usize,
    line: usize,
}

impl Line {
    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> Error {
        let t = &self.toks[self.pos];
        Error::Parse {
            line: self.line,
            column: t.column,
            message: format!("unexpected {}", t.kind),
            expected: vec![expected.to_string()],
        }
    }

    fn expect(&mut self, k: TokenKind) -> Result<()> {
        if *self.peek() == k {
            self.next();
            Ok(())
        } else {
            Err(self.err(&k.to_string()))
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(self.err("name")),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        match self.peek() {
            TokenKind::Ident(s) if s == word => {
                self.next();
                Ok(())
            }
            _ => Err(self.err(&format!("`{word}`"))),
        }
    }

    fn at_end(&self) -> bool {
        matches!(self.peek(), TokenKind::Eof | TokenKind::Newline)
    }

    fn end(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("end of line"))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let neg = *self.peek() == TokenKind::Minus;
        if neg {
            self.next();
        }
        let x = match self.peek().clone() {
            TokenKind::Int(n) => n as f64,
            TokenKind::Float(x) => x,
            _ => return Err(self.err("number")),
        };
        self.next();
        Ok(if neg { -x } else { x })
    }

    fn literal(&mut self) -> Result<Value> {
        let neg = *self.peek() == TokenKind::Minus;
        if neg {
            self.next();
        }
        let t = self.toks[self.pos].clone();
        let v = match (t.kind, neg) {
            (TokenKind::Int(n), false) => Value::Int(
                i64::try_from(n)
                    .map_err(|_| Error::parse(self.line, t.column, "integer out of range"))?,
            ),
            (TokenKind::Int(n), true) => {
                if n == i64::MAX as u64 + 1 {
                    Value::Int(i64::MIN)
                } else {
                    Value::Int(-i64::try_from(n).map_err(|_| {
                        Error::parse(self.line, t.column, "integer out of range")
                    })?)
                }
            }
            (TokenKind::Float(x), neg) => Value::float(if neg { -x } else { x }),
            (TokenKind::Str(s), false) => Value::Text(s),
            (TokenKind::Ident(s), false) if s == "true" || s == "false" => Value::Bool(s == "true"),
            _ => return Err(self.err("literal")),
        };
        self.next();
        Ok(v)
    }
}

fn base_type(s: &str) -> Option<BaseType> {
    Some(match s {
        "int" => BaseType::Int,
        "float" => BaseType::Float,
        "text" => BaseType::Text,
        "bool" => BaseType::Bool,
        _ => return None,
    })
}

struct Pending {
    name: String,
    sig: ParamSig,
    rows: BTreeMap<Key, Value>,
    line: usize,
}

pub fn load_fdb(text: &str) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    let mut header_seen = false;
    let mut pending: Option<Pending> = None;

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let toks = tokenize(raw).map_err(|e| relocate(e, lineno, 0))?;
        let mut l = Line {
            toks,
            pos: 0,
            line: lineno,
        };
        if l.at_end() {
            continue;
        }
        if !header_seen {
            if raw.split('#').next().unwrap_or("").trim() != HEADER {
                return Err(Error::parse(lineno, 1, format!("expected header `{HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        let word = l.name()?;
        match (word.as_str(), pending.is_some()) {
            ("row", true) => {
                let rel = pending.as_mut().unwrap();
                let mut key = Vec::new();
                while *l.peek() != TokenKind::Minus {
                    key.push(l.literal()?);
                }
                l.expect(TokenKind::Minus)?;
                l.expect(TokenKind::Gt)?;
                if key.len() != rel.sig.arity() {
                    return Err(Error::Arity {
                        expected: rel.sig.arity(),
                        got: key.len(),
                    });
                }
                l.expect(TokenKind::LBrace)?;
                let mut attrs: Vec<(String, Value)> = Vec::new();
                while *l.peek() != TokenKind::RBrace {
                    let a = l.name()?;
                    l.expect(TokenKind::Assign)?;
                    let v = l.literal()?;
                    if attrs.iter().any(|(n, _)| *n == a) {
                        return Err(Error::parse(lineno, 1, format!("attribute {a} given twice")));
                    }
                    attrs.push((a, v));
                    if *l.peek() == TokenKind::Comma {
                        l.next();
                    } else {
                        break;
                    }
                }
                l.expect(TokenKind::RBrace)?;
                l.end()?;
                let tuple = Value::func(FunctionValue::record(attrs)?);
                if rel.rows.contains_key(&key) {
                    return Err(Error::UniqueViolation(format!(
                        "line {lineno}: {} already has a row for key {}",
                        rel.name,
                        crate::model::function::show_key(&key)
                    )));
                }
                rel.rows.insert(key, tuple);
            }
            ("end", true) => {
                l.end()?;
                let rel = pending.take().unwrap();
                let f = FunctionValue::extensional(rel.sig, DomainConstraint::any(), rel.rows)
                    .map_err(|e| match e {
                        Error::Domain(m) => {
                            Error::Domain(format!("relation starting at line {}: {m}", rel.line))
                        }
                        other => other,
                    })?
                    .with_kind(FnKind::Relation);
                if catalog.entry(&rel.name).is_some() {
                    return Err(Error::Schema(format!(
                        "line {lineno}: {} defined twice",
                        rel.name
                    )));
                }
                catalog.set_stored(rel.name, Value::func(f))?;
            }
            (_, true) => {
                return Err(Error::parse(lineno, 1, "expected `row` or `end`"));
            }
            ("relation", false) => {
                let name = l.name()?;
                l.expect(TokenKind::LParen)?;
                let mut params = Vec::new();
                loop {
                    let pname = l.name()?;
                    l.expect(TokenKind::Colon)?;
                    let tname = l.name()?;
                    let base = base_type(&tname).ok_or_else(|| {
                        Error::parse(lineno, 1, format!("unknown type {tname}"))
                    })?;
                    let constraint = if matches!(l.peek(), TokenKind::Ident(s) if s == "in") {
                        l.next();
                        match l.peek() {
                            TokenKind::LBrace => {
                                l.next();
                                let mut vals = vec![l.literal()?];
                                while *l.peek() == TokenKind::Comma {
                                    l.next();
                                    vals.push(l.literal()?);
                                }
                                l.expect(TokenKind::RBrace)?;
                                DomainConstraint::finite_set(base, vals)?
                            }
                            TokenKind::LBracket => {
                                l.next();
                                let lo = l.number()?;
                                l.expect(TokenKind::Semi)?;
                                let hi = l.number()?;
                                l.expect(TokenKind::RBracket)?;
                                DomainConstraint::closed_interval(base, lo, hi)?
                            }
                            _ => return Err(l.err("`{` or `[`")),
                        }
                    } else {
                        DomainConstraint::of(base)
                    };
                    params.push(Param::new(pname, constraint));
                    if *l.peek() == TokenKind::Comma {
                        l.next();
                    } else {
                        break;
                    }
                }
                l.expect(TokenKind::RParen)?;
                l.end()?;
                pending = Some(Pending {
                    name,
                    sig: ParamSig::new(params)?,
                    rows: BTreeMap::new(),
                    line: lineno,
                });
            }
            ("rel", false) => {
                let function = l.name()?;
                l.keyword("links")?;
                let mut participants = Vec::new();
                loop {
                    let f = l.name()?;
                    l.expect(TokenKind::Dot)?;
                    let p = l.name()?;
                    participants.push((f, p));
                    if *l.peek() == TokenKind::Comma {
                        l.next();
                    } else {
                        break;
                    }
                }
                l.end()?;
                catalog.add_relationship(RelationshipDecl::new(function, participants))?;
            }
            ("view", false) => {
                let name = l.name()?;
                let materialized = matches!(l.peek(), TokenKind::Ident(s) if s == "materialized");
                if materialized {
                    l.next();
                }
                if *l.peek() != TokenKind::Assign {
                    return Err(l.err("`=`"));
                }
                let col = l.toks[l.pos].column;
                let body: String = raw.chars().skip(col).collect();
                let expr = parse_expr(&body).map_err(|e| relocate(e, lineno, col))?;
                let def = ViewDef {
                    name: name.clone(),
                    expr,
                    materialized,
                };
                let entry = if materialized {
                    match catalog.remove(&name) {
                        Some(Entry::Stored(value)) => Entry::Materialized { def, value },
                        _ => {
                            return Err(Error::Schema(format!(
                                "line {lineno}: materialized view {name} has no stored relation"
                            )))
                        }
                    }
                } else {
                    if catalog.entry(&name).is_some() {
                        return Err(Error::Schema(format!(
                            "line {lineno}: {name} defined twice"
                        )));
                    }
                    Entry::View(def)
                };
                catalog.set_entry(name, entry)?;
            }
            (other, false) => {
                return Err(Error::parse(
                    lineno,
                    1,
                    format!("unknown block `{other}`; expected relation, rel or view"),
                ));
            }
        }
    }
    if !header_seen {
        return Err(Error::parse(1, 1, format!("expected header `{HEADER}`")));
    }
    if let Some(rel) = pending {
        return Err(Error::parse(
            rel.line,
            1,
            format!("relation {} is missing its `end` line", rel.name),
        ));
    }
    Ok(catalog)
}

fn relocate(e: Error, line: usize, col_offset: usize) -> Error {
    match e {
        Error::Parse {
            column,
            message,
            expected,
            ..
        } => Error::Parse {
            line,
            column: column + col_offset,
            message,
            expected,
        },
        other => other,
    }
}
