//! Expression evaluation against a snapshot.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Builtin, Expr};
use crate::model::{
    root_sig, Closure, DomainConstraint, Entry, Evaluator, FnKind, FunctionValue, Param, ParamSig,
    Snapshot, Value, ROOT_NAME,
};
use crate::ops;

/// Name → value bindings visible to an expression (lambda parameters and
/// script variables). Bindings shadow catalog names.
pub type Bindings = BTreeMap<String, Value>;

/// Dynamic views may reference other views; this bounds the nesting.
const MAX_VIEW_DEPTH: usize = 64;

/// Evaluation environment: a snapshot plus bindings.
#[derive(Clone, Debug)]
pub struct Env<'s> {
    pub snapshot: &'s Snapshot,
    pub bindings: Bindings,
}

impl<'s> Env<'s> {
    pub fn new(snapshot: &'s Snapshot) -> Self {
        Env {
            snapshot,
            bindings: Bindings::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.bindings.insert(name.into(), value);
        self
    }
}

/// Evaluates `e` in `env`.
pub fn eval(e: &Expr, env: &Env<'_>) -> Result<Value> {
    Interpreter::new(env.snapshot).eval(e, &env.bindings)
}

/// The expression interpreter. Operators delegate to [`crate::ops`];
/// application delegates to [`FunctionValue::apply`].
pub struct Interpreter<'s> {
    snapshot: &'s Snapshot,
    view_depth: usize,
}

impl<'s> Interpreter<'s> {
    pub fn new(snapshot: &'s Snapshot) -> Self {
        Interpreter {
            snapshot,
            view_depth: 0,
        }
    }

    pub fn snapshot(&self) -> &'s Snapshot {
        self.snapshot
    }

    pub fn eval(&mut self, e: &Expr, b: &Bindings) -> Result<Value> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Param(name) => b
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Name(format!("unbound parameter {name}"))),
            Expr::Ref(path) => {
                let (head, rest) = path
                    .split_first()
                    .ok_or_else(|| Error::Name("empty reference".into()))?;
                let mut rest = rest.iter();
                let mut cur = if head == ROOT_NAME && !b.contains_key(head) {
                    match rest.next() {
                        Some(member) => self.root_member(member)?,
                        None => Value::func(self.root()?),
                    }
                } else {
                    self.resolve_name(head, b)?
                };
                for seg in rest {
                    cur = apply_value(&cur, &[Value::text(seg.as_str())], self)?;
                }
                Ok(cur)
            }
            Expr::Apply(f, args) => {
                if let (Expr::Ref(path), [Expr::Lit(Value::Text(member))]) = (f.as_ref(), &args[..]) {
                    if path.len() == 1 && path[0] == ROOT_NAME && !b.contains_key(ROOT_NAME) {
                        return self.root_member(member);
                    }
                }
                let fv = self.eval(f, b)?;
                let args = args
                    .iter()
                    .map(|a| self.eval(a, b))
                    .collect::<Result<Vec<_>>>()?;
                apply_value(&fv, &args, self)
            }
            Expr::Lambda(params, body) => Ok(Value::func(make_lambda(params, body, b)?)),
            Expr::BinOp(BinOp::And, l, r) => {
                if self.eval_bool(l, b, "and")? {
                    self.eval_bool(r, b, "and").map(Value::Bool)
                } else {
                    Ok(Value::Bool(false))
                }
            }
            Expr::BinOp(BinOp::Or, l, r) => {
                if self.eval_bool(l, b, "or")? {
                    Ok(Value::Bool(true))
                } else {
                    self.eval_bool(r, b, "or").map(Value::Bool)
                }
            }
            Expr::BinOp(op, l, r) => {
                let l = self.eval(l, b)?;
                let r = self.eval(r, b)?;
                binop(*op, &l, &r)
            }
            Expr::Not(inner) => self.eval_bool(inner, b, "not").map(|v| Value::Bool(!v)),
            Expr::In(needle, haystack) => {
                let needle = self.eval(needle, b)?;
                let haystack = self.eval(haystack, b)?;
                membership(&needle, &haystack).map(Value::Bool)
            }
            Expr::Record(fields) => {
                let mut attrs = Vec::with_capacity(fields.len());
                for (name, fe) in fields {
                    attrs.push((name.clone(), self.eval(fe, b)?));
                }
                FunctionValue::record(attrs).map(Value::func)
            }
            Expr::List(items) => items
                .iter()
                .map(|i| self.eval(i, b))
                .collect::<Result<_>>()
                .map(Value::Set),
            Expr::Builtin(builtin, args) => {
                let args = args
                    .iter()
                    .map(|a| self.eval(a, b))
                    .collect::<Result<Vec<_>>>()?;
                call_builtin(*builtin, &args)
            }
            Expr::Op(op, inputs) => {
                if inputs.len() != op.arity() {
                    return Err(Error::Arity {
                        expected: op.arity(),
                        got: inputs.len(),
                    });
                }
                let inputs = inputs
                    .iter()
                    .map(|i| self.eval(i, b))
                    .collect::<Result<Vec<_>>>()?;
                let snapshot = self.snapshot;
                ops::apply_operator(op, &inputs, &snapshot.catalog, self)
            }
        }
    }

    fn eval_bool(&mut self, e: &Expr, b: &Bindings, what: &str) -> Result<bool> {
        match self.eval(e, b)? {
            Value::Bool(v) => Ok(v),
            other => Err(Error::TypeMismatch(format!(
                "`{what}` expects bool operands, got {}",
                other.type_name()
            ))),
        }
    }

    /// Resolves a top-level name: bindings, then the database function, then
    /// catalog entries.
    pub fn resolve_name(&mut self, name: &str, b: &Bindings) -> Result<Value> {
        if let Some(v) = b.get(name) {
            return Ok(v.clone());
        }
        if name == ROOT_NAME {
            return Ok(Value::func(self.root()?));
        }
        match self.snapshot.catalog.entry(name) {
            Some(entry) => self.entry_value(name, entry),
            None => Err(Error::Name(format!("{name} is not defined"))),
        }
    }

    /// `DB(name)`: undefined (not a name error) when the name is unbound.
    fn root_member(&mut self, name: &str) -> Result<Value> {
        match self.snapshot.catalog.entry(name) {
            Some(entry) => self.entry_value(name, entry),
            None => Err(Error::UndefinedInput(format!(
                "the database has no member {name:?}"
            ))),
        }
    }

    fn entry_value(&mut self, name: &str, entry: &Entry) -> Result<Value> {
        match entry {
            Entry::Stored(v) | Entry::Materialized { value: v, .. } => Ok(v.clone()),
            Entry::View(def) => {
                if self.view_depth >= MAX_VIEW_DEPTH {
                    return Err(Error::CyclicView(format!(
                        "view {name} nests deeper than {MAX_VIEW_DEPTH} levels"
                    )));
                }
                self.view_depth += 1;
                let r = self.eval(&def.expr, &Bindings::new());
                self.view_depth -= 1;
                r
            }
        }
    }

    /// The database function of the snapshot, with dynamic views evaluated.
    pub fn root(&mut self) -> Result<FunctionValue> {
        let snapshot = self.snapshot;
        let mut map = BTreeMap::new();
        for (name, entry) in snapshot.catalog.entries() {
            map.insert(vec![Value::text(name.as_str())], self.entry_value(name, entry)?);
        }
        Ok(FunctionValue::from_parts_unchecked(
            root_sig(),
            DomainConstraint::any(),
            FnKind::Database,
            map,
        ))
    }
}

impl Evaluator for Interpreter<'_> {
    fn call(&mut self, closure: &Closure, args: &[Value]) -> Result<Value> {
        if closure.params.len() != args.len() {
            return Err(Error::Arity {
                expected: closure.params.len(),
                got: args.len(),
            });
        }
        let mut b = closure.captured.clone();
        for (p, a) in closure.params.iter().zip(args) {
            b.insert(p.clone(), a.clone());
        }
        self.eval(&closure.body, &b)
    }
}

/// Builds the function value of a lambda, capturing only the bindings its
/// body actually refers to.
pub fn make_lambda(params: &[String], body: &Expr, b: &Bindings) -> Result<FunctionValue> {
    let mut captured = BTreeMap::new();
    for name in body.free_params().into_iter().chain(body.free_names()) {
        if params.contains(&name) {
            continue;
        }
        if let Some(v) = b.get(&name) {
            captured.insert(name, v.clone());
        }
    }
    let sig = ParamSig::new(
        params
            .iter()
            .map(|p| Param::new(p.as_str(), DomainConstraint::any()))
            .collect(),
    )?;
    FunctionValue::computed(
        sig,
        DomainConstraint::any(),
        Closure {
            params: params.to_vec(),
            body: body.clone(),
            captured,
        },
    )
}

pub(crate) fn apply_value(f: &Value, args: &[Value], ev: &mut dyn Evaluator) -> Result<Value> {
    match f {
        Value::Func(f) => f.apply(args, ev),
        other => Err(Error::TypeMismatch(format!(
            "cannot apply a {} value",
            other.type_name()
        ))),
    }
}

pub(crate) fn call_builtin(builtin: Builtin, args: &[Value]) -> Result<Value> {
    match (builtin, args) {
        (Builtin::RndStr, [Value::Int(seed)]) => Ok(Value::Text(crate::model::rnd_str(*seed))),
        (Builtin::RndStr, [other]) => Err(Error::TypeMismatch(format!(
            "rnd_str expects an int seed, got {}",
            other.type_name()
        ))),
        (Builtin::RndStr, _) => Err(Error::Arity {
            expected: 1,
            got: args.len(),
        }),
    }
}

/// Equality used by `==`, `!=` and `in`: structural, except that Int and
/// Float compare numerically.
pub fn values_equal(l: &Value, r: &Value) -> bool {
    match (l, r) {
        (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => *a as f64 == b.0,
        (Value::Float(a), Value::Float(b)) => a.0 == b.0 || a == b,
        _ => l == r,
    }
}

/// Ordering used by `<`-style comparisons and by Min/Max aggregates.
/// Int promotes to Float against Float; text and bools compare within their
/// type; anything else is a type mismatch.
pub fn compare_values(l: &Value, r: &Value) -> Result<Option<Ordering>> {
    Ok(match (l, r) {
        (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
        (Value::Int(a), Value::Float(b)) => (*a as f64).partial_cmp(&b.0),
        (Value::Float(a), Value::Int(b)) => a.0.partial_cmp(&(*b as f64)),
        (Value::Float(a), Value::Float(b)) => a.0.partial_cmp(&b.0),
        (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
        (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
        _ => {
            return Err(Error::TypeMismatch(format!(
                "cannot order {} against {}",
                l.type_name(),
                r.type_name()
            )))
        }
    })
}

/// Arithmetic and comparison operators. `and`/`or` are handled by the
/// caller because they short-circuit.
pub fn binop(op: BinOp, l: &Value, r: &Value) -> Result<Value> {
    use Value::{Float as F, Int as I};
    match op {
        BinOp::Eq => Ok(Value::Bool(values_equal(l, r))),
        BinOp::Ne => Ok(Value::Bool(!values_equal(l, r))),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = compare_values(l, r)?;
            Ok(Value::Bool(match (op, ord) {
                (_, None) => false,
                (BinOp::Lt, Some(o)) => o == Ordering::Less,
                (BinOp::Le, Some(o)) => o != Ordering::Greater,
                (BinOp::Gt, Some(o)) => o == Ordering::Greater,
                (_, Some(o)) => o != Ordering::Less,
            }))
        }
        BinOp::And | BinOp::Or => match (l, r) {
            (Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(if op == BinOp::And {
                *a && *b
            } else {
                *a || *b
            })),
            _ => Err(Error::TypeMismatch(format!(
                "`{}` expects bool operands",
                op.symbol()
            ))),
        },
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => match (l, r) {
            (I(a), I(b)) => {
                let v = match op {
                    BinOp::Add => a.checked_add(*b),
                    BinOp::Sub => a.checked_sub(*b),
                    BinOp::Mul => a.checked_mul(*b),
                    _ => {
                        if *b == 0 {
                            return Err(Error::DivisionByZero);
                        }
                        a.checked_div(*b)
                    }
                };
                v.map(I).ok_or(Error::Overflow)
            }
            (I(_) | F(_), I(_) | F(_)) => {
                let (a, b) = (l.as_f64().unwrap_or_default(), r.as_f64().unwrap_or_default());
                Ok(Value::float(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    _ => {
                        if b == 0.0 {
                            return Err(Error::DivisionByZero);
                        }
                        a / b
                    }
                }))
            }
            (Value::Text(a), Value::Text(b)) if op == BinOp::Add => {
                Ok(Value::Text(format!("{a}{b}")))
            }
            _ => Err(Error::TypeMismatch(format!(
                "cannot apply `{}` to {} and {}",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ))),
        },
    }
}

/// `needle in haystack`: set membership, or membership in a function's
/// domain.
pub fn membership(needle: &Value, haystack: &Value) -> Result<bool> {
    match haystack {
        Value::Set(items) => Ok(items.iter().any(|x| values_equal(needle, x))),
        Value::Func(f) => {
            if f.sig().arity() != 1 {
                return Err(Error::TypeMismatch(format!(
                    "`in` needs a one-parameter function, got arity {}",
                    f.sig().arity()
                )));
            }
            let key = [needle.clone()];
            Ok(f.enumerate_domain()?.iter().any(|k| k[..] == key))
        }
        other => Err(Error::TypeMismatch(format!(
            "`in` expects a set or function, got {}",
            other.type_name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Catalog;

    fn ev(e: &Expr) -> Result<Value> {
        let snap = Snapshot::detached(Catalog::new());
        eval(e, &Env::new(&snap))
    }

    #[test]
    fn arithmetic() {
        assert_eq!(
            ev(&Expr::bin(BinOp::Mul, Expr::lit(42), Expr::lit(10))).unwrap(),
            Value::Int(420)
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Add, Expr::lit(1), Expr::lit(0.5))).unwrap(),
            Value::float(1.5)
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Div, Expr::lit(7), Expr::lit(2))).unwrap(),
            Value::Int(3)
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Div, Expr::lit(1), Expr::lit(0))).unwrap_err(),
            Error::DivisionByZero
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Div, Expr::lit(1.0), Expr::lit(0.0))).unwrap_err(),
            Error::DivisionByZero
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Add, Expr::lit(i64::MAX), Expr::lit(1))).unwrap_err(),
            Error::Overflow
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Add, Expr::lit("a"), Expr::lit(1)))
                .unwrap_err()
                .class(),
            "TypeMismatch"
        );
    }

    #[test]
    fn mixed_numeric_comparison_promotes() {
        assert_eq!(
            ev(&Expr::bin(BinOp::Lt, Expr::lit(1), Expr::lit(1.5))).unwrap(),
            Value::Bool(true)
        );
        assert_eq!(
            ev(&Expr::bin(BinOp::Eq, Expr::lit(2), Expr::lit(2.0))).unwrap(),
            Value::Bool(true)
        );
        assert!(ev(&Expr::bin(BinOp::Lt, Expr::lit("a"), Expr::lit(1))).is_err());
    }

    #[test]
    fn short_circuit() {
        // the right operand would fail, but is never evaluated
        let boom = Expr::bin(BinOp::Div, Expr::lit(1), Expr::lit(0));
        let e = Expr::bin(BinOp::And, Expr::lit(false), boom.clone());
        assert_eq!(ev(&e).unwrap(), Value::Bool(false));
        let e = Expr::bin(BinOp::Or, Expr::lit(true), boom);
        assert_eq!(ev(&e).unwrap(), Value::Bool(true));
        let e = Expr::bin(BinOp::And, Expr::lit(1), Expr::lit(true));
        assert_eq!(ev(&e).unwrap_err().class(), "TypeMismatch");
    }

    #[test]
    fn substitution() {
        // (fn(x) => x * 2 + y)(5) with y bound equals the body under x := 5
        let body = Expr::bin(
            BinOp::Add,
            Expr::bin(BinOp::Mul, Expr::param("x"), Expr::lit(2)),
            Expr::name("y"),
        );
        let snap = Snapshot::detached(Catalog::new());
        let env = Env::new(&snap).with("y", Value::Int(1));
        let applied = Expr::apply(Expr::lambda(["x"], body.clone()), vec![Expr::lit(5)]);
        let direct = eval(&body, &env.clone().with("x", Value::Int(5))).unwrap();
        assert_eq!(eval(&applied, &env).unwrap(), direct);
        assert_eq!(direct, Value::Int(11));
    }

    #[test]
    fn unknown_name() {
        assert_eq!(ev(&Expr::name("nope")).unwrap_err().class(), "NameError");
        assert_eq!(
            ev(&Expr::path(["DB", "nope"])).unwrap_err().class(),
            "UndefinedInput"
        );
    }

    #[test]
    fn in_operator() {
        let hay = Expr::List(vec![Expr::lit(1), Expr::lit("a")]);
        assert_eq!(
            ev(&Expr::in_(Expr::lit(1.0), hay.clone())).unwrap(),
            Value::Bool(true)
        );
        assert_eq!(
            ev(&Expr::in_(Expr::lit("b"), hay)).unwrap(),
            Value::Bool(false)
        );
    }

    #[test]
    fn rnd_str_builtin() {
        assert_eq!(
            ev(&Expr::Builtin(Builtin::RndStr, vec![Expr::lit(10)])).unwrap(),
            Value::text("kelqffax")
        );
    }
}
