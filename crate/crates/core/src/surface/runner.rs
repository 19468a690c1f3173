//! Executes scripts statement by statement against a session.
//!
//! Script variables are named expressions: a use of `x` is replaced by the
//! definition of `x` before evaluation, so `customers = DB.customers`
//! makes `customers` a reference to the stored relation (mutations through
//! it reach the database) and the optimizer sees whole pipelines rather
//! than opaque intermediate values. Two forms fix a variable to a value
//! instead: `x = copy(..)` / `x = deep_copy(..)`, and `v.m = e`, which
//! replaces member `m` of `v`'s current value.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{parse_script, render::render_value, Script, Stmt};
use crate::engine::{ReadMode, Session};
use crate::error::{Error, Result};
use crate::eval::{Bindings, Interpreter};
use crate::expr::{Expr, Operator};
use crate::model::{StaticEval, Value};
use crate::optimizer;
use crate::persist::{load_file, store_file};

/// An error and the script line of the statement that raised it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptError {
    pub line: usize,
    pub error: Error,
}

impl std::fmt::Display for ScriptError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.error {
            Error::Parse { .. } => write!(f, "{}", self.error),
            e => write!(f, "line {}: {}: {e}", self.line, e.class()),
        }
    }
}

pub struct Runner {
    session: Session,
    vars: BTreeMap<String, Expr>,
    mode: ReadMode,
    base_dir: PathBuf,
}

impl Runner {
    pub fn new(session: Session) -> Self {
        Runner {
            session,
            vars: BTreeMap::new(),
            mode: ReadMode::Optimized,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn with_mode(mut self, mode: ReadMode) -> Self {
        self.mode = mode;
        self
    }

    /// Directory that relative `load` and `save` paths start from.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    /// Parses and runs `src`, writing rendered output to `out`. Stops at the
    /// first failing statement.
    pub fn run_source(&mut self, src: &str, out: &mut dyn Write) -> std::result::Result<(), ScriptError> {
        let script = parse_script(src).map_err(|error| ScriptError {
            line: match &error {
                Error::Parse { line, .. } => *line,
                _ => 0,
            },
            error,
        })?;
        self.run(&script, out)
    }

    pub fn run(&mut self, script: &Script, out: &mut dyn Write) -> std::result::Result<(), ScriptError> {
        for s in &script.stmts {
            let text = self.exec(&s.stmt).map_err(|error| ScriptError {
                line: s.line,
                error,
            })?;
            out.write_all(text.as_bytes()).map_err(|e| ScriptError {
                line: s.line,
                error: Error::Io(e.to_string()),
            })?;
        }
        Ok(())
    }

    /// Runs one statement and returns what it prints.
    pub fn exec(&mut self, stmt: &Stmt) -> Result<String> {
        let none = Bindings::new();
        match stmt {
            Stmt::Let { name, expr } => {
                let expr = self.resolve(expr);
                let value = self.session.read(&expr, &none, self.mode)?;
                let expr = match expr {
                    // a copy is taken now, not every time the variable is used
                    Expr::Op(Operator::Copy | Operator::DeepCopy, _) => Expr::Lit(value),
                    other => other,
                };
                self.vars.insert(name.clone(), expr);
                Ok(String::new())
            }
            Stmt::SetMember { var, member, expr } => {
                let current = self
                    .vars
                    .get(var)
                    .cloned()
                    .ok_or_else(|| Error::Name(format!("{var} is not a script variable")))?;
                let Value::Func(db) = self.session.read(&current, &none, self.mode)? else {
                    return Err(Error::TypeMismatch(format!("{var} is not a function")));
                };
                let value = self.session.read(&self.resolve(expr), &none, self.mode)?;
                let updated = db.with_mapping(vec![Value::text(member.as_str())], value, &mut StaticEval)?;
                self.vars.insert(var.clone(), Expr::Lit(Value::func(updated)));
                Ok(String::new())
            }
            Stmt::Assign { name, expr } => {
                let expr = self.resolve(expr);
                let materialize = matches!(expr, Expr::Op(Operator::Copy | Operator::DeepCopy, _));
                self.session.assign(name, &expr, materialize, &none)?;
                Ok(String::new())
            }
            Stmt::Mutate { target, mutation } => {
                let target = self.resolve(target);
                let mutation = match mutation {
                    super::Mutation::SetTuple { key, value } => super::Mutation::SetTuple {
                        key: key.iter().map(|k| self.resolve(k)).collect(),
                        value: self.resolve(value),
                    },
                    super::Mutation::SetAttr { key, attr, op, value } => super::Mutation::SetAttr {
                        key: key.iter().map(|k| self.resolve(k)).collect(),
                        attr: self.resolve(attr),
                        op: *op,
                        value: self.resolve(value),
                    },
                    super::Mutation::Add { value } => super::Mutation::Add {
                        value: self.resolve(value),
                    },
                    super::Mutation::Delete { key } => super::Mutation::Delete {
                        key: key.iter().map(|k| self.resolve(k)).collect(),
                    },
                };
                self.session.mutate(&target, &mutation, &none)?;
                Ok(String::new())
            }
            Stmt::Expr(e) | Stmt::Show(e) => {
                let v = self.session.read(&self.resolve(e), &none, self.mode)?;
                let snap = self.session.snapshot()?;
                render_value(&v, &mut Interpreter::new(&snap))
            }
            Stmt::Explain(e) => {
                let plan = self.session.plan(&self.resolve(e), &none)?;
                Ok(optimizer::explain(&plan))
            }
            Stmt::Begin => self.session.begin().map(|_| String::new()),
            Stmt::Commit => self.session.commit().map(|_| String::new()),
            Stmt::Rollback => self.session.rollback().map(|_| String::new()),
            Stmt::Load(p) => {
                let catalog = load_file(&self.path(p))?;
                self.session.replace(catalog)?;
                Ok(String::new())
            }
            Stmt::Save(p) => {
                let snap = self.session.snapshot()?;
                store_file(&snap.catalog, &self.path(p))?;
                Ok(String::new())
            }
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Replaces script variables by their definitions.
    pub fn resolve(&self, e: &Expr) -> Expr {
        match e {
            Expr::Ref(path) => {
                let Some(def) = path.first().and_then(|h| self.vars.get(h)) else {
                    return e.clone();
                };
                match def {
                    Expr::Ref(p) => Expr::Ref(p.iter().chain(&path[1..]).cloned().collect()),
                    other => path[1..]
                        .iter()
                        .fold(other.clone(), |acc, seg| Expr::attr(acc, seg.as_str())),
                }
            }
            _ => e.clone().map_children(&mut |c| self.resolve(&c)),
        }
    }
}
