//! Versioned store, sessions and transactions.
//!
//! The store keeps every committed catalog. A session reads the head (or its
//! own working copy inside a transaction) and commits optimistically: a
//! commit fails with `WriteConflict` if anything else committed since the
//! transaction began. Outside a transaction every write statement commits
//! on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::eval::{apply_value, binop, Bindings, Interpreter};
use crate::expr::{Expr, Operator};
use crate::model::{Catalog, Entry, FunctionValue, Snapshot, Value, ViewDef, ROOT_NAME};
use crate::ops::deep_copy;
use crate::optimizer::{self, Context, Plan};
use crate::oracle::eval_naive_with;
use crate::surface::Mutation;

/// How many times an autocommit statement is retried after losing a race.
const AUTOCOMMIT_RETRIES: usize = 32;

/// Append-only list of committed catalogs; the version id is the index.
#[derive(Debug)]
pub struct Store {
    versions: Mutex<Vec<Arc<Catalog>>>,
}

impl Store {
    pub fn new(catalog: Catalog) -> Arc<Store> {
        Arc::new(Store {
            versions: Mutex::new(vec![Arc::new(catalog)]),
        })
    }

    pub fn head(&self) -> Snapshot {
        let v = self.versions.lock().unwrap();
        Snapshot {
            version: (v.len() - 1) as u64,
            catalog: v.last().unwrap().clone(),
        }
    }

    pub fn snapshot_at(&self, version: u64) -> Option<Snapshot> {
        let v = self.versions.lock().unwrap();
        v.get(version as usize).map(|c| Snapshot {
            version,
            catalog: c.clone(),
        })
    }

    pub fn session(self: &Arc<Self>) -> Session {
        Session {
            store: self.clone(),
            state: TxState::Idle,
            base: None,
        }
    }

    /// Appends `catalog` if the head is still `base`.
    fn commit(&self, base: u64, catalog: Arc<Catalog>) -> Result<u64> {
        let mut v = self.versions.lock().unwrap();
        if v.len() as u64 - 1 != base {
            return Err(Error::WriteConflict);
        }
        v.push(catalog);
        Ok(v.len() as u64 - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxState {
    Idle,
    Active,
    /// A commit failed; only `rollback` is accepted.
    Aborted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReadMode {
    /// Rewrite with the optimizer, then interpret.
    #[default]
    Optimized,
    /// Interpret as written.
    Plain,
    /// Evaluate with the naive reference evaluator.
    Oracle,
}

pub struct Session {
    store: Arc<Store>,
    state: TxState,
    /// Pinned version and working copy while a transaction is open.
    base: Option<(u64, Arc<Catalog>)>,
}

impl Session {
    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn state(&self) -> TxState {
        self.state
    }

    pub fn begin(&mut self) -> Result<()> {
        if self.state != TxState::Idle {
            return Err(Error::TxState(format!(
                "begin needs an idle session, this one is {:?}",
                self.state
            )));
        }
        let head = self.store.head();
        self.base = Some((head.version, head.catalog));
        self.state = TxState::Active;
        Ok(())
    }

    pub fn commit(&mut self) -> Result<u64> {
        if self.state != TxState::Active {
            return Err(Error::TxState(format!(
                "commit needs an active transaction, this session is {:?}",
                self.state
            )));
        }
        let (base, working) = self.base.clone().unwrap();
        match self.store.commit(base, working) {
            Ok(v) => {
                self.base = None;
                self.state = TxState::Idle;
                Ok(v)
            }
            Err(e) => {
                self.state = TxState::Aborted;
                Err(e)
            }
        }
    }

    pub fn rollback(&mut self) -> Result<()> {
        if self.state == TxState::Idle {
            return Err(Error::TxState("rollback without a transaction".into()));
        }
        self.base = None;
        self.state = TxState::Idle;
        Ok(())
    }

    /// What reads see: the working copy inside a transaction, else the head.
    pub fn snapshot(&self) -> Result<Snapshot> {
        match (&self.state, &self.base) {
            (TxState::Aborted, _) => Err(Error::TxState(
                "the transaction was aborted; roll it back".into(),
            )),
            (TxState::Active, Some((v, c))) => Ok(Snapshot {
                version: *v,
                catalog: c.clone(),
            }),
            _ => Ok(self.store.head()),
        }
    }

    pub fn read(&self, e: &Expr, b: &Bindings, mode: ReadMode) -> Result<Value> {
        let snap = self.snapshot()?;
        match mode {
            ReadMode::Optimized => {
                let plan = optimizer::rewrite(e, Some(Context { snapshot: &snap, bindings: b }));
                Interpreter::new(&snap).eval(&plan.expr, b)
            }
            ReadMode::Plain => Interpreter::new(&snap).eval(e, b),
            ReadMode::Oracle => eval_naive_with(e, &snap, b),
        }
    }

    pub fn plan(&self, e: &Expr, b: &Bindings) -> Result<Plan> {
        let snap = self.snapshot()?;
        Ok(optimizer::rewrite(e, Some(Context { snapshot: &snap, bindings: b })))
    }

    /// Applies a mutation to the relation `target` refers to. `Add` returns
    /// the key it allocated.
    pub fn mutate(&mut self, target: &Expr, m: &Mutation, b: &Bindings) -> Result<Option<Value>> {
        let path = target_path(target)?;
        self.write(|snap| {
            let mut ev = Interpreter::new(snap);
            let (name, rest) = path.split_first().unwrap();
            let mut catalog = (*snap.catalog).clone();
            let (current, rebuild): (Value, Box<dyn Fn(Value) -> Entry>) =
                match snap.catalog.entry(name) {
                    None => {
                        return Err(Error::UnknownRelation(format!("{name} is not defined")))
                    }
                    Some(Entry::View(_)) => {
                        return Err(Error::ReadOnlyTarget(format!(
                            "{name} is a dynamic view; assign to it instead"
                        )))
                    }
                    Some(Entry::Stored(v)) => (v.clone(), Box::new(Entry::Stored)),
                    Some(Entry::Materialized { def, value }) => {
                        let def = def.clone();
                        (
                            value.clone(),
                            Box::new(move |value| Entry::Materialized {
                                def: def.clone(),
                                value,
                            }),
                        )
                    }
                };
            let (updated, out) = update_at(&current, rest, &mut |rel| apply_mutation(rel, m, b, &mut ev))?;
            catalog.set_entry(name.clone(), rebuild(updated))?;
            Ok((catalog, out))
        })
    }

    /// Binds `name` to a view of `e`, replacing any previous binding. A
    /// materialized view is evaluated (and deep-copied) now; a dynamic view
    /// is re-evaluated on every read.
    pub fn assign(&mut self, name: &str, e: &Expr, materialize: bool, b: &Bindings) -> Result<()> {
        if name == ROOT_NAME || name.is_empty() {
            return Err(Error::Schema(format!("cannot assign to {name:?}")));
        }
        self.write(|snap| {
            let mut catalog = (*snap.catalog).clone();
            let def = ViewDef {
                name: name.to_string(),
                expr: e.clone(),
                materialized: materialize,
            };
            if materialize {
                let value = Interpreter::new(snap).eval(e, b)?;
                let value = match e {
                    Expr::Op(Operator::Copy | Operator::DeepCopy, _) => value,
                    _ => deep_copy(&value),
                };
                catalog.set_entry(name, Entry::Materialized { def, value })?;
            } else {
                catalog.set_entry(name, Entry::View(def))?;
                check_acyclic(&catalog, name)?;
            }
            Ok((catalog, ()))
        })
    }

    /// Replaces the whole database.
    pub fn replace(&mut self, catalog: Catalog) -> Result<()> {
        self.write(|_| Ok((catalog.clone(), ())))
    }

    /// Runs `f` against what the session currently sees and installs the
    /// catalog it returns: in the working copy inside a transaction,
    /// otherwise as a commit of its own.
    fn write<T>(&mut self, f: impl Fn(&Snapshot) -> Result<(Catalog, T)>) -> Result<T> {
        match self.state {
            TxState::Aborted => Err(Error::TxState(
                "the transaction was aborted; roll it back".into(),
            )),
            TxState::Active => {
                let snap = self.snapshot()?;
                let (catalog, out) = f(&snap)?;
                self.base.as_mut().unwrap().1 = Arc::new(catalog);
                Ok(out)
            }
            TxState::Idle => {
                for _ in 0..AUTOCOMMIT_RETRIES {
                    let head = self.store.head();
                    let (catalog, out) = f(&head)?;
                    match self.store.commit(head.version, Arc::new(catalog)) {
                        Ok(_) => return Ok(out),
                        Err(Error::WriteConflict) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Err(Error::WriteConflict)
            }
        }
    }
}

/// The catalog path a mutation target names: `r`, `DB.r`, `DB("r")`, and
/// member paths below those.
fn target_path(target: &Expr) -> Result<Vec<String>> {
    let bad = || Error::ReadOnlyTarget("mutations need a named relation as their target".into());
    let mut path = match target {
        Expr::Ref(p) => p.clone(),
        Expr::Apply(f, args) => {
            let mut p = target_path(f)?;
            match args.as_slice() {
                [Expr::Lit(Value::Text(m))] => p.push(m.clone()),
                _ => return Err(bad()),
            }
            p
        }
        _ => return Err(bad()),
    };
    if path.first().map(String::as_str) == Some(ROOT_NAME) {
        path.remove(0);
    }
    if path.is_empty() {
        return Err(bad());
    }
    Ok(path)
}

/// Rebuilds `v` with the function at member path `rest` replaced by `f`'s
/// result.
fn update_at(
    v: &Value,
    rest: &[String],
    f: &mut dyn FnMut(&FunctionValue) -> Result<(FunctionValue, Option<Value>)>,
) -> Result<(Value, Option<Value>)> {
    let Value::Func(func) = v else {
        return Err(Error::ReadOnlyTarget(format!(
            "a {} cannot be mutated",
            v.type_name()
        )));
    };
    match rest.split_first() {
        None => {
            let (updated, out) = f(func)?;
            Ok((Value::func(updated), out))
        }
        Some((seg, rest)) => {
            let key = vec![Value::text(seg.as_str())];
            let inner = func.apply(&key, &mut crate::model::StaticEval)?;
            let (inner, out) = update_at(&inner, rest, f)?;
            let updated = func.with_mapping(key, inner, &mut crate::model::StaticEval)?;
            Ok((Value::func(updated), out))
        }
    }
}

fn apply_mutation(
    rel: &FunctionValue,
    m: &Mutation,
    b: &Bindings,
    ev: &mut Interpreter<'_>,
) -> Result<(FunctionValue, Option<Value>)> {
    if !rel.is_extensional() {
        return Err(Error::ReadOnlyTarget(
            "computed functions cannot be mutated; assign a new definition instead".into(),
        ));
    }
    let eval_all = |es: &[Expr], ev: &mut Interpreter<'_>| {
        es.iter().map(|e| ev.eval(e, b)).collect::<Result<Vec<_>>>()
    };
    match m {
        Mutation::SetTuple { key, value } => {
            let key = eval_all(key, ev)?;
            let value = ev.eval(value, b)?;
            Ok((rel.with_mapping(key, value, ev)?, None))
        }
        Mutation::SetAttr {
            key,
            attr,
            op,
            value,
        } => {
            let key = eval_all(key, ev)?;
            let attr = ev.eval(attr, b)?;
            let value = ev.eval(value, b)?;
            let Value::Func(row) = rel.apply(&key, ev)? else {
                return Err(Error::TypeMismatch(
                    "attribute updates need tuple-valued rows".into(),
                ));
            };
            let value = match op {
                Some(op) => {
                    let old = apply_value(&Value::Func(row.clone()), &[attr.clone()], ev)?;
                    binop(*op, &old, &value)?
                }
                None => value,
            };
            let row = row.with_mapping(vec![attr], value, ev)?;
            Ok((rel.with_mapping(key, Value::func(row), ev)?, None))
        }
        Mutation::Add { value } => {
            if rel.sig().arity() != 1 {
                return Err(Error::Arity {
                    expected: 1,
                    got: rel.sig().arity(),
                });
            }
            let value = ev.eval(value, b)?;
            let next = rel
                .extensional_map()
                .unwrap()
                .keys()
                .filter_map(|k| k[0].as_int())
                .max()
                .map_or(Some(1), |k| k.checked_add(1))
                .ok_or(Error::Overflow)?;
            let key = Value::Int(next);
            Ok((rel.with_mapping(vec![key.clone()], value, ev)?, Some(key)))
        }
        Mutation::Delete { key } => {
            let key = eval_all(key, ev)?;
            Ok((rel.without_mapping(&key)?, None))
        }
    }
}

/// Catalog names an expression reads; `None` when it reads the whole
/// database function.
pub fn dependencies(e: &Expr) -> Option<BTreeSet<String>> {
    fn walk(e: &Expr, out: &mut BTreeSet<String>) -> bool {
        match e {
            Expr::Ref(path) => match path.as_slice() {
                [root] if root == ROOT_NAME => false,
                [root, member, ..] if root == ROOT_NAME => {
                    out.insert(member.clone());
                    true
                }
                [head, ..] => {
                    out.insert(head.clone());
                    true
                }
                [] => true,
            },
            Expr::Apply(f, args) => {
                if let (Expr::Ref(p), [Expr::Lit(Value::Text(m))]) = (f.as_ref(), args.as_slice()) {
                    if p.len() == 1 && p[0] == ROOT_NAME {
                        out.insert(m.clone());
                        return true;
                    }
                }
                e.children().into_iter().all(|c| walk(c, out))
            }
            _ => e.children().into_iter().all(|c| walk(c, out)),
        }
    }
    let mut out = BTreeSet::new();
    walk(e, &mut out).then_some(out)
}

/// Fails if the dynamic view `start` can reach itself through the
/// definitions of dynamic views.
fn check_acyclic(catalog: &Catalog, start: &str) -> Result<()> {
    let all: BTreeSet<String> = catalog.names().map(str::to_string).collect();
    let mut edges: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (name, entry) in catalog.entries() {
        if let Entry::View(def) = entry {
            edges.insert(name, dependencies(&def.expr).unwrap_or_else(|| all.clone()));
        }
    }
    let mut stack: Vec<&str> = edges
        .get(start)
        .map(|d| d.iter().map(String::as_str).collect())
        .unwrap_or_default();
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == start {
            return Err(Error::CyclicView(format!("view {start} depends on itself")));
        }
        if seen.insert(n) {
            if let Some(d) = edges.get(n) {
                stack.extend(d.iter().map(String::as_str));
            }
        }
    }
    Ok(())
}
