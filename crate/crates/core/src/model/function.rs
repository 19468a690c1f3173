//! Function values: the single representation behind tuples, relations,
//! databases and relationships.
//!
//! A function is a parameter signature, a codomain constraint and a body.
//! Bodies are either extensional (an explicit key -> value map), computed
//! (a closure over the parameters) or piecewise (ordered guarded cases with an
//! optional computed fallback). Application checks the arguments against the
//! signature, evaluates the body and checks the result against the codomain.

use std::collections::BTreeMap;
use std::fmt;

use super::domain::{DomainConstraint, ParamSig};
use super::value::Value;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Input tuple of a function, one value per parameter.
pub type Key = Vec<Value>;

/// An expression body together with its parameter names and the bindings it
/// captured from the enclosing scope.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Closure {
    pub params: Vec<String>,
    pub body: Expr,
    pub captured: BTreeMap<String, Value>,
}

impl Closure {
    pub fn new(params: Vec<String>, body: Expr) -> Self {
        Closure {
            params,
            body,
            captured: BTreeMap::new(),
        }
    }

    pub fn with_captured(mut self, name: impl Into<String>, value: Value) -> Self {
        self.captured.insert(name.into(), value);
        self
    }
}

/// Evaluates closure bodies. Implemented by the interpreter and, separately,
/// by the naive reference evaluator.
pub trait Evaluator {
    fn call(&mut self, closure: &Closure, args: &[Value]) -> Result<Value>;
}

/// Evaluator for contexts without a snapshot; refuses to run code.
pub struct StaticEval;

impl Evaluator for StaticEval {
    fn call(&mut self, _closure: &Closure, _args: &[Value]) -> Result<Value> {
        Err(Error::Predicate(
            "computed bodies need an evaluation context".into(),
        ))
    }
}

/// The level a function plays in a database. Operators use it to choose
/// parameter binding conventions; it carries no other semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FnKind {
    Plain,
    Tuple,
    Relation,
    Database,
}

impl fmt::Display for FnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FnKind::Plain => "plain",
            FnKind::Tuple => "tuple",
            FnKind::Relation => "relation",
            FnKind::Database => "database",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CaseBody {
    Extensional(BTreeMap<Key, Value>),
    Computed(Closure),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Case {
    pub guard: Closure,
    pub body: CaseBody,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Body {
    Extensional(BTreeMap<Key, Value>),
    Computed(Closure),
    Piecewise {
        cases: Vec<Case>,
        fallback: Option<Closure>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FunctionValue {
    sig: ParamSig,
    codomain: DomainConstraint,
    kind: FnKind,
    body: Body,
}

impl FunctionValue {
    /// Builds an extensional function holding exactly `mappings`. A repeated
    /// input tuple is a unique-constraint violation.
    pub fn extensional(
        sig: ParamSig,
        codomain: DomainConstraint,
        mappings: impl IntoIterator<Item = (Key, Value)>,
    ) -> Result<Self> {
        Self::extensional_with(sig, codomain, mappings, &mut StaticEval)
    }

    pub fn extensional_with(
        sig: ParamSig,
        codomain: DomainConstraint,
        mappings: impl IntoIterator<Item = (Key, Value)>,
        ev: &mut dyn Evaluator,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (key, value) in mappings {
            check_key(&sig, &key, ev)?;
            check_codomain(&codomain, &value, ev)?;
            if map.contains_key(&key) {
                return Err(Error::UniqueViolation(format!(
                    "input {} is mapped more than once",
                    show_key(&key)
                )));
            }
            map.insert(key, value);
        }
        Ok(FunctionValue {
            sig,
            codomain,
            kind: FnKind::Plain,
            body: Body::Extensional(map),
        })
    }

    pub fn computed(sig: ParamSig, codomain: DomainConstraint, body: Closure) -> Result<Self> {
        check_closure_arity(&sig, &body)?;
        Ok(FunctionValue {
            sig,
            codomain,
            kind: FnKind::Plain,
            body: Body::Computed(body),
        })
    }

    /// Ordered guarded cases; the first case whose guard holds decides the
    /// result, the fallback handles inputs no guard accepts.
    pub fn piecewise(
        sig: ParamSig,
        codomain: DomainConstraint,
        cases: Vec<Case>,
        fallback: Option<Closure>,
    ) -> Result<Self> {
        for case in &cases {
            check_closure_arity(&sig, &case.guard)?;
            match &case.body {
                CaseBody::Computed(c) => check_closure_arity(&sig, c)?,
                CaseBody::Extensional(map) => {
                    for (k, v) in map {
                        check_key(&sig, k, &mut StaticEval)?;
                        check_codomain(&codomain, v, &mut StaticEval)?;
                    }
                }
            }
        }
        if let Some(f) = &fallback {
            check_closure_arity(&sig, f)?;
        }
        Ok(FunctionValue {
            sig,
            codomain,
            kind: FnKind::Plain,
            body: Body::Piecewise { cases, fallback },
        })
    }

    /// Builds from parts that are already known to satisfy the invariants,
    /// e.g. a subset of another function's mappings.
    pub(crate) fn from_parts_unchecked(
        sig: ParamSig,
        codomain: DomainConstraint,
        kind: FnKind,
        map: BTreeMap<Key, Value>,
    ) -> Self {
        FunctionValue {
            sig,
            codomain,
            kind,
            body: Body::Extensional(map),
        }
    }

    /// A tuple function from attribute names to values.
    pub fn record<S: Into<String>>(attrs: impl IntoIterator<Item = (S, Value)>) -> Result<Self> {
        let sig = ParamSig::single("attr", DomainConstraint::of(super::domain::BaseType::Text));
        let f = Self::extensional(
            sig,
            DomainConstraint::any(),
            attrs
                .into_iter()
                .map(|(name, v)| (vec![Value::Text(name.into())], v)),
        )?;
        Ok(f.with_kind(FnKind::Tuple))
    }

    pub fn with_kind(mut self, kind: FnKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn sig(&self) -> &ParamSig {
        &self.sig
    }

    pub fn codomain(&self) -> &DomainConstraint {
        &self.codomain
    }

    pub fn kind(&self) -> FnKind {
        self.kind
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    /// The stored mappings of an extensional function.
    pub fn extensional_map(&self) -> Option<&BTreeMap<Key, Value>> {
        match &self.body {
            Body::Extensional(map) => Some(map),
            _ => None,
        }
    }

    pub fn is_extensional(&self) -> bool {
        matches!(self.body, Body::Extensional(_))
    }

    /// Applies the function to one input tuple.
    pub fn apply(&self, args: &[Value], ev: &mut dyn Evaluator) -> Result<Value> {
        if args.len() != self.sig.arity() {
            return Err(Error::Arity {
                expected: self.sig.arity(),
                got: args.len(),
            });
        }
        check_key(&self.sig, args, ev)?;
        let result = match &self.body {
            Body::Extensional(map) => lookup(map, args)?,
            Body::Computed(c) => ev.call(c, args)?,
            Body::Piecewise { cases, fallback } => {
                let mut chosen = None;
                for case in cases {
                    match ev.call(&case.guard, args)? {
                        Value::Bool(true) => {
                            chosen = Some(match &case.body {
                                CaseBody::Extensional(map) => lookup(map, args)?,
                                CaseBody::Computed(c) => ev.call(c, args)?,
                            });
                            break;
                        }
                        Value::Bool(false) => {}
                        other => {
                            return Err(Error::Predicate(format!(
                                "case guard returned {} instead of bool",
                                other.type_name()
                            )))
                        }
                    }
                }
                match (chosen, fallback) {
                    (Some(v), _) => v,
                    (None, Some(f)) => ev.call(f, args)?,
                    (None, None) => {
                        return Err(Error::UndefinedInput(format!(
                            "no case accepts input {}",
                            show_key(args)
                        )))
                    }
                }
            }
        };
        check_codomain(&self.codomain, &result, ev)?;
        Ok(result)
    }

    /// Lists the admissible input tuples in ascending structural order.
    ///
    /// Extensional functions enumerate their keys. Other bodies are
    /// enumerable when every parameter has a finite domain; piecewise
    /// functions without fallback whose cases are all extensional enumerate
    /// the union of their case keys. Some enumerated inputs of non-extensional
    /// bodies may still be undefined at application time.
    pub fn enumerate_domain(&self) -> Result<Vec<Key>> {
        match &self.body {
            Body::Extensional(map) => return Ok(map.keys().cloned().collect()),
            Body::Piecewise {
                cases,
                fallback: None,
            } if cases
                .iter()
                .all(|c| matches!(c.body, CaseBody::Extensional(_))) =>
            {
                if let Some(keys) = self.finite_product() {
                    return Ok(keys);
                }
                let mut keys: Vec<Key> = cases
                    .iter()
                    .flat_map(|c| match &c.body {
                        CaseBody::Extensional(m) => m.keys().cloned().collect::<Vec<_>>(),
                        CaseBody::Computed(_) => Vec::new(),
                    })
                    .collect();
                keys.sort();
                keys.dedup();
                return Ok(keys);
            }
            _ => {}
        }
        self.finite_product().ok_or_else(|| {
            Error::NotEnumerable(format!(
                "computed function over an unbounded domain ({})",
                self.sig
                    .params()
                    .iter()
                    .map(|p| format!("{}: {}", p.name, p.constraint))
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
    }

    fn finite_product(&self) -> Option<Vec<Key>> {
        let mut keys: Vec<Key> = vec![Vec::new()];
        for p in self.sig.params() {
            let values = p.constraint.finite_values()?;
            keys = keys
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut k = prefix.clone();
                        k.push(v.clone());
                        k
                    })
                })
                .collect();
        }
        Some(keys)
    }

    /// All defined `(input, output)` pairs in ascending input order.
    pub fn mappings(&self, ev: &mut dyn Evaluator) -> Result<Vec<(Key, Value)>> {
        if let Body::Extensional(map) = &self.body {
            return Ok(map.iter().map(|(k, v)| (k.clone(), v.clone())).collect());
        }
        let mut out = Vec::new();
        for key in self.enumerate_domain()? {
            match self.apply(&key, ev) {
                Ok(v) => out.push((key, v)),
                Err(Error::UndefinedInput(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Re-checks every stored mapping against the signature and codomain.
    pub fn validate(&self, ev: &mut dyn Evaluator) -> Result<()> {
        let check_map = |map: &BTreeMap<Key, Value>, ev: &mut dyn Evaluator| -> Result<()> {
            for (k, v) in map {
                if k.len() != self.sig.arity() {
                    return Err(Error::Arity {
                        expected: self.sig.arity(),
                        got: k.len(),
                    });
                }
                check_key(&self.sig, k, ev)?;
                check_codomain(&self.codomain, v, ev)?;
            }
            Ok(())
        };
        match &self.body {
            Body::Extensional(map) => check_map(map, ev),
            Body::Computed(c) => check_closure_arity(&self.sig, c),
            Body::Piecewise { cases, fallback } => {
                for case in cases {
                    check_closure_arity(&self.sig, &case.guard)?;
                    match &case.body {
                        CaseBody::Extensional(map) => check_map(map, ev)?,
                        CaseBody::Computed(c) => check_closure_arity(&self.sig, c)?,
                    }
                }
                fallback
                    .as_ref()
                    .map_or(Ok(()), |f| check_closure_arity(&self.sig, f))
            }
        }
    }

    /// Returns a copy with `key` mapped to `value`, inserting or replacing.
    pub fn with_mapping(&self, key: Key, value: Value, ev: &mut dyn Evaluator) -> Result<Self> {
        let Body::Extensional(map) = &self.body else {
            return Err(Error::ReadOnlyTarget(
                "only extensional functions can be updated".into(),
            ));
        };
        if key.len() != self.sig.arity() {
            return Err(Error::Arity {
                expected: self.sig.arity(),
                got: key.len(),
            });
        }
        check_key(&self.sig, &key, ev)?;
        check_codomain(&self.codomain, &value, ev)?;
        let mut map = map.clone();
        map.insert(key, value);
        Ok(FunctionValue {
            body: Body::Extensional(map),
            ..self.clone()
        })
    }

    /// Returns a copy without the mapping for `key`, which must exist.
    pub fn without_mapping(&self, key: &[Value]) -> Result<Self> {
        let Body::Extensional(map) = &self.body else {
            return Err(Error::ReadOnlyTarget(
                "only extensional functions can be updated".into(),
            ));
        };
        let mut map = map.clone();
        if map.remove(key).is_none() {
            return Err(Error::UndefinedInput(format!(
                "no mapping for input {}",
                show_key(key)
            )));
        }
        Ok(FunctionValue {
            body: Body::Extensional(map),
            ..self.clone()
        })
    }

    /// Replaces the body keeping signature, codomain and kind.
    pub(crate) fn with_body_unchecked(&self, body: Body) -> Self {
        FunctionValue {
            body,
            ..self.clone()
        }
    }
}

fn lookup(map: &BTreeMap<Key, Value>, args: &[Value]) -> Result<Value> {
    map.get(args).cloned().ok_or_else(|| {
        Error::UndefinedInput(format!("no mapping for input {}", show_key(args)))
    })
}

fn check_key(sig: &ParamSig, key: &[Value], ev: &mut dyn Evaluator) -> Result<()> {
    if key.len() != sig.arity() {
        return Err(Error::Arity {
            expected: sig.arity(),
            got: key.len(),
        });
    }
    for (param, v) in sig.params().iter().zip(key) {
        if !param.constraint.contains(v, ev)? {
            return Err(Error::Domain(format!(
                "{v} is outside the domain of parameter {} ({})",
                param.name, param.constraint
            )));
        }
    }
    Ok(())
}

fn check_codomain(codomain: &DomainConstraint, v: &Value, ev: &mut dyn Evaluator) -> Result<()> {
    if codomain.contains(v, ev)? {
        Ok(())
    } else {
        Err(Error::Domain(format!("{v} is outside the codomain {codomain}")))
    }
}

fn check_closure_arity(sig: &ParamSig, c: &Closure) -> Result<()> {
    if c.params.len() != sig.arity() {
        return Err(Error::Arity {
            expected: sig.arity(),
            got: c.params.len(),
        });
    }
    Ok(())
}

pub(crate) fn show_key(key: &[Value]) -> String {
    match key {
        [single] => single.to_string(),
        _ => format!(
            "({})",
            key.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}
