//! A naive reference evaluator.
//!
//! It interprets expressions directly: no rewrites, joins by nested loops
//! over every row combination, grouping by linear bucketing. It deliberately
//! shares no code with [`crate::eval`] or [`crate::ops`] beyond the data
//! model, so that agreement between the two is evidence rather than
//! tautology.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::expr::{AggKind, AggSpec, BinOp, Builtin, ColRef, Expr, GroupBy, JoinPair, Operator, SetOpKind};
use crate::model::{
    rnd_str, root_sig, BaseType, Catalog, Closure, DomainConstraint, Entry, Evaluator, FnKind,
    FunctionValue, Key, Param, ParamSig, Snapshot, Value, ROOT_NAME,
};

pub type Bindings = BTreeMap<String, Value>;

pub fn eval_naive(e: &Expr, snap: &Snapshot) -> Result<Value> {
    NaiveEval::new(snap).eval(e, &Bindings::new())
}

pub fn eval_naive_with(e: &Expr, snap: &Snapshot, b: &Bindings) -> Result<Value> {
    NaiveEval::new(snap).eval(e, b)
}

pub struct NaiveEval<'s> {
    snap: &'s Snapshot,
    depth: usize,
}

impl Evaluator for NaiveEval<'_> {
    fn call(&mut self, closure: &Closure, args: &[Value]) -> Result<Value> {
        if args.len() != closure.params.len() {
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

impl<'s> NaiveEval<'s> {
    pub fn new(snap: &'s Snapshot) -> Self {
        NaiveEval { snap, depth: 0 }
    }

    fn catalog(&self) -> &'s Catalog {
        &self.snap.catalog
    }

    pub fn eval(&mut self, e: &Expr, b: &Bindings) -> Result<Value> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Param(p) => match b.get(p) {
                Some(v) => Ok(v.clone()),
                None => Err(Error::Name(format!("parameter {p} is unbound"))),
            },
            Expr::Ref(path) => {
                let Some(head) = path.first() else {
                    return Err(Error::Name("empty path".into()));
                };
                let mut v;
                let mut rest = &path[1..];
                if head == ROOT_NAME && !b.contains_key(ROOT_NAME) && !rest.is_empty() {
                    v = self.member(&rest[0])?;
                    rest = &rest[1..];
                } else {
                    v = self.lookup(head, b)?;
                }
                for seg in rest {
                    v = self.apply(&v, vec![Value::Text(seg.clone())])?;
                }
                Ok(v)
            }
            Expr::Apply(f, args) => {
                if let Expr::Ref(p) = f.as_ref() {
                    if let [Expr::Lit(Value::Text(m))] = args.as_slice() {
                        if p.len() == 1 && p[0] == ROOT_NAME && !b.contains_key(ROOT_NAME) {
                            return self.member(m);
                        }
                    }
                }
                let fv = self.eval(f, b)?;
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.eval(a, b)?);
                }
                self.apply(&fv, vals)
            }
            Expr::Lambda(params, body) => {
                let mut captured = BTreeMap::new();
                for (k, v) in b {
                    if !params.contains(k) && mentions(body, k) {
                        captured.insert(k.clone(), v.clone());
                    }
                }
                let sig = ParamSig::new(
                    params
                        .iter()
                        .map(|p| Param::new(p.clone(), DomainConstraint::any()))
                        .collect(),
                )?;
                let f = FunctionValue::computed(
                    sig,
                    DomainConstraint::any(),
                    Closure {
                        params: params.clone(),
                        body: (**body).clone(),
                        captured,
                    },
                )?;
                Ok(Value::func(f))
            }
            Expr::BinOp(op @ (BinOp::And | BinOp::Or), l, r) => {
                let lv = self.truth(l, b, op.symbol())?;
                let short = if *op == BinOp::And { !lv } else { lv };
                if short {
                    return Ok(Value::Bool(lv));
                }
                Ok(Value::Bool(self.truth(r, b, op.symbol())?))
            }
            Expr::BinOp(op, l, r) => {
                let lv = self.eval(l, b)?;
                let rv = self.eval(r, b)?;
                scalar_op(*op, lv, rv)
            }
            Expr::Not(x) => Ok(Value::Bool(!self.truth(x, b, "not")?)),
            Expr::In(x, set) => {
                let x = self.eval(x, b)?;
                let set = self.eval(set, b)?;
                match set {
                    Value::Set(items) => Ok(Value::Bool(items.iter().any(|i| same(&x, i)))),
                    Value::Func(f) if f.sig().arity() == 1 => {
                        let keys = f.enumerate_domain()?;
                        Ok(Value::Bool(keys.iter().any(|k| k.len() == 1 && k[0] == x)))
                    }
                    Value::Func(f) => Err(Error::TypeMismatch(format!(
                        "membership in a function of arity {}",
                        f.sig().arity()
                    ))),
                    other => Err(Error::TypeMismatch(format!(
                        "membership in a {} value",
                        other.type_name()
                    ))),
                }
            }
            Expr::Record(fields) => {
                let mut attrs = Vec::new();
                for (n, fe) in fields {
                    let v = self.eval(fe, b)?;
                    attrs.push((n.clone(), v));
                }
                Ok(Value::func(FunctionValue::record(attrs)?))
            }
            Expr::List(items) => {
                let mut out = BTreeSet::new();
                for i in items {
                    out.insert(self.eval(i, b)?);
                }
                Ok(Value::Set(out))
            }
            Expr::Builtin(Builtin::RndStr, args) => {
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.eval(a, b)?);
                }
                if vals.len() != 1 {
                    return Err(Error::Arity {
                        expected: 1,
                        got: vals.len(),
                    });
                }
                match &vals[0] {
                    Value::Int(seed) => Ok(Value::Text(rnd_str(*seed))),
                    other => Err(Error::TypeMismatch(format!(
                        "rnd_str of a {} value",
                        other.type_name()
                    ))),
                }
            }
            Expr::Op(op, inputs) => {
                if inputs.len() != op.arity() {
                    return Err(Error::Arity {
                        expected: op.arity(),
                        got: inputs.len(),
                    });
                }
                let mut vals = Vec::new();
                for i in inputs {
                    vals.push(self.eval(i, b)?);
                }
                self.operator(op, vals)
            }
        }
    }

    fn truth(&mut self, e: &Expr, b: &Bindings, what: &str) -> Result<bool> {
        match self.eval(e, b)? {
            Value::Bool(x) => Ok(x),
            other => Err(Error::TypeMismatch(format!(
                "{what} applied to a {} value",
                other.type_name()
            ))),
        }
    }

    fn lookup(&mut self, name: &str, b: &Bindings) -> Result<Value> {
        if let Some(v) = b.get(name) {
            return Ok(v.clone());
        }
        if name == ROOT_NAME {
            let mut map = BTreeMap::new();
            let cat = self.catalog();
            for name in cat.names() {
                map.insert(vec![Value::text(name)], self.member(name)?);
            }
            return Ok(Value::func(FunctionValue::from_parts_unchecked(
                root_sig(),
                DomainConstraint::any(),
                FnKind::Database,
                map,
            )));
        }
        if self.catalog().entry(name).is_none() {
            return Err(Error::Name(format!("unknown name {name}")));
        }
        self.member(name)
    }

    fn member(&mut self, name: &str) -> Result<Value> {
        let cat = self.catalog();
        match cat.entry(name) {
            None => Err(Error::UndefinedInput(format!("no database member {name}"))),
            Some(Entry::Stored(v)) => Ok(v.clone()),
            Some(Entry::Materialized { value, .. }) => Ok(value.clone()),
            Some(Entry::View(def)) => {
                if self.depth == 64 {
                    return Err(Error::CyclicView(format!("view {name} does not terminate")));
                }
                self.depth += 1;
                let r = self.eval(&def.expr, &Bindings::new());
                self.depth -= 1;
                r
            }
        }
    }

    fn apply(&mut self, f: &Value, args: Vec<Value>) -> Result<Value> {
        match f {
            Value::Func(f) => f.apply(&args, self),
            other => Err(Error::TypeMismatch(format!(
                "a {} value is not a function",
                other.type_name()
            ))),
        }
    }

    fn operator(&mut self, op: &Operator, mut vals: Vec<Value>) -> Result<Value> {
        let out = match op {
            Operator::Filter => {
                let input = as_fn(&vals[1], "filter")?;
                self.filter(&vals[0], &input)?
            }
            Operator::Group(by) => {
                let input = as_fn(vals.last().unwrap(), "group")?;
                let key_fn = if vals.len() == 2 { Some(vals[0].clone()) } else { None };
                let (sig, groups) = self.buckets(by, key_fn.as_ref(), &input)?;
                let mut map = BTreeMap::new();
                for (gk, rows) in groups {
                    let sub = FunctionValue::from_parts_unchecked(
                        input.sig().clone(),
                        input.codomain().clone(),
                        input.kind(),
                        rows.into_iter().collect(),
                    );
                    map.insert(gk, Value::func(sub));
                }
                FunctionValue::from_parts_unchecked(sig, DomainConstraint::any(), FnKind::Database, map)
            }
            Operator::Aggregate(specs) => {
                let groups = as_fn(&vals[0], "aggregate")?;
                validate_specs(specs)?;
                let mut map = BTreeMap::new();
                for (gk, g) in groups.mappings(self)? {
                    let Value::Func(g) = g else {
                        return Err(Error::TypeMismatch(format!(
                            "aggregate over a {} group",
                            g.type_name()
                        )));
                    };
                    let rows: Vec<Value> = g.mappings(self)?.into_iter().map(|(_, v)| v).collect();
                    map.insert(gk.clone(), self.summary(groups.sig(), &gk, specs, &rows)?);
                }
                FunctionValue::from_parts_unchecked(
                    groups.sig().clone(),
                    DomainConstraint::any(),
                    FnKind::Relation,
                    map,
                )
            }
            Operator::GroupAndAggregate(by, specs) => {
                let input = as_fn(vals.last().unwrap(), "group_and_aggregate")?;
                let key_fn = if vals.len() == 2 { Some(vals[0].clone()) } else { None };
                self.group_agg(by, key_fn.as_ref(), specs, &input)?
            }
            Operator::GroupingSets(sets) => {
                let input = as_fn(&vals[0], "grouping_sets")?;
                let mut map = BTreeMap::new();
                for s in sets {
                    let k = vec![Value::Text(s.name.clone())];
                    if map.contains_key(&k) {
                        return Err(Error::Schema(format!("grouping set {} repeated", s.name)));
                    }
                    let rel = self.group_agg(&GroupBy::Attrs(s.by.clone()), None, &s.aggs, &input)?;
                    map.insert(k, Value::func(rel));
                }
                FunctionValue::from_parts_unchecked(
                    ParamSig::single("name", DomainConstraint::of(BaseType::Text)),
                    DomainConstraint::any(),
                    FnKind::Database,
                    map,
                )
            }
            Operator::Join(on) => {
                let db = as_fn(&vals[0], "join")?;
                self.join(&db, on.as_deref())?
            }
            Operator::ReduceDb => {
                let db = as_fn(&vals[0], "reduce_DB")?;
                let naive = Naive::new(&db, None, self.catalog(), self)?;
                let used = naive.used_rows();
                let mut map = BTreeMap::new();
                for (m, used) in naive.members.iter().zip(used) {
                    let rows: BTreeMap<Key, Value> = m
                        .rows
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| used.contains(i))
                        .map(|(_, r)| r.clone())
                        .collect();
                    map.insert(vec![Value::Text(m.name.clone())], Value::func(same_shape(&m.rel, rows)));
                }
                FunctionValue::from_parts_unchecked(db.sig().clone(), db.codomain().clone(), db.kind(), map)
            }
            Operator::OuterMark(names) => {
                let db = as_fn(&vals[0], "subdatabase")?;
                let naive = Naive::new(&db, None, self.catalog(), self)?;
                for n in names {
                    if naive.members.iter().all(|m| &m.name != n) {
                        return Err(Error::UnknownRelation(format!("no member {n} to mark")));
                    }
                }
                let used = naive.used_rows();
                let part = ParamSig::single(
                    "part",
                    DomainConstraint::finite_set(BaseType::Text, [Value::text("inner"), Value::text("outer")])?,
                );
                let mut map = BTreeMap::new();
                for (m, used) in naive.members.iter().zip(used) {
                    let v = if names.contains(&m.name) {
                        let mut inner = BTreeMap::new();
                        let mut outer = BTreeMap::new();
                        for (i, (k, v)) in m.rows.iter().enumerate() {
                            if used.contains(&i) {
                                inner.insert(k.clone(), v.clone());
                            } else {
                                outer.insert(k.clone(), v.clone());
                            }
                        }
                        let mut parts = BTreeMap::new();
                        parts.insert(vec![Value::text("inner")], Value::func(same_shape(&m.rel, inner)));
                        parts.insert(vec![Value::text("outer")], Value::func(same_shape(&m.rel, outer)));
                        Value::func(FunctionValue::from_parts_unchecked(
                            part.clone(),
                            DomainConstraint::any(),
                            FnKind::Database,
                            parts,
                        ))
                    } else {
                        Value::func(m.rel.clone())
                    };
                    map.insert(vec![Value::Text(m.name.clone())], v);
                }
                FunctionValue::from_parts_unchecked(db.sig().clone(), db.codomain().clone(), db.kind(), map)
            }
            Operator::SetOp(kind) => {
                let a = as_fn(&vals[0], kind.name())?;
                let b = as_fn(&vals[1], kind.name())?;
                self.set_op(*kind, &a, &b)?
            }
            Operator::DeepCopy | Operator::Copy => return Ok(vals.pop().unwrap()),
            Operator::MapMember(name) => {
                let db = as_fn(&vals[0], "map_member")?;
                let Value::Func(f) = &vals[1] else {
                    return Err(Error::TypeMismatch(format!(
                        "map_member with a {} value",
                        vals[1].type_name()
                    )));
                };
                let mut map: BTreeMap<Key, Value> = db.mappings(self)?.into_iter().collect();
                let k = vec![Value::text(name.as_str())];
                let Some(old) = map.get(&k).cloned() else {
                    return Err(Error::UnknownRelation(format!("no member {name}")));
                };
                map.insert(k, f.apply(&[old], self)?);
                FunctionValue::from_parts_unchecked(db.sig().clone(), db.codomain().clone(), db.kind(), map)
            }
        };
        Ok(Value::func(out))
    }

    fn filter(&mut self, pred: &Value, input: &FunctionValue) -> Result<FunctionValue> {
        let Value::Func(pred) = pred else {
            return Err(Error::TypeMismatch(format!(
                "filter with a {} predicate",
                pred.type_name()
            )));
        };
        let mut kept = BTreeMap::new();
        for (k, v) in input.mappings(self)? {
            let arg = if input.kind() == FnKind::Database {
                pair(&k, &v)
            } else {
                v.clone()
            };
            match pred.apply(&[arg], self)? {
                Value::Bool(true) => {
                    kept.insert(k, v);
                }
                Value::Bool(false) => {}
                other => {
                    return Err(Error::Predicate(format!(
                        "predicate gave a {} value",
                        other.type_name()
                    )))
                }
            }
        }
        Ok(FunctionValue::from_parts_unchecked(
            input.sig().clone(),
            input.codomain().clone(),
            input.kind(),
            kept,
        ))
    }

    #[allow(clippy::type_complexity)]
    fn buckets(
        &mut self,
        by: &GroupBy,
        key_fn: Option<&Value>,
        input: &FunctionValue,
    ) -> Result<(ParamSig, Vec<(Key, Vec<(Key, Value)>)>)> {
        let sig = match (by, key_fn) {
            (GroupBy::Attrs(names), None) => ParamSig::new(
                names
                    .iter()
                    .map(|n| Param::new(n.clone(), DomainConstraint::any()))
                    .collect(),
            )?,
            (GroupBy::KeyFn, Some(_)) => ParamSig::single("key", DomainConstraint::any()),
            (_, Some(_)) => return Err(Error::Arity { expected: 1, got: 2 }),
            (_, None) => return Err(Error::Arity { expected: 2, got: 1 }),
        };
        let mut groups: Vec<(Key, Vec<(Key, Value)>)> = Vec::new();
        for (k, row) in input.mappings(self)? {
            let gk: Key = match key_fn {
                None => {
                    let GroupBy::Attrs(names) = by else { unreachable!() };
                    let Value::Func(t) = &row else {
                        return Err(Error::TypeMismatch(format!(
                            "grouping {} rows by attribute",
                            row.type_name()
                        )));
                    };
                    let mut gk = Vec::new();
                    for n in names {
                        gk.push(t.apply(&[Value::Text(n.clone())], self)?);
                    }
                    gk
                }
                Some(Value::Func(f)) => vec![f.apply(&[row.clone()], self)?],
                Some(other) => {
                    return Err(Error::TypeMismatch(format!(
                        "group key function is a {} value",
                        other.type_name()
                    )))
                }
            };
            match groups.iter_mut().find(|(g, _)| *g == gk) {
                Some((_, rows)) => rows.push((k, row)),
                None => groups.push((gk, vec![(k, row)])),
            }
        }
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        Ok((sig, groups))
    }

    fn group_agg(
        &mut self,
        by: &GroupBy,
        key_fn: Option<&Value>,
        specs: &[AggSpec],
        input: &FunctionValue,
    ) -> Result<FunctionValue> {
        let (sig, groups) = self.buckets(by, key_fn, input)?;
        validate_specs(specs)?;
        let mut map = BTreeMap::new();
        for (gk, rows) in groups {
            let rows: Vec<Value> = rows.into_iter().map(|(_, v)| v).collect();
            let t = self.summary(&sig, &gk, specs, &rows)?;
            map.insert(gk, t);
        }
        Ok(FunctionValue::from_parts_unchecked(
            sig,
            DomainConstraint::any(),
            FnKind::Relation,
            map,
        ))
    }

    fn summary(&mut self, sig: &ParamSig, gk: &Key, specs: &[AggSpec], rows: &[Value]) -> Result<Value> {
        let mut attrs: Vec<(String, Value)> = Vec::new();
        for (p, v) in sig.params().iter().zip(gk) {
            attrs.push((p.name.clone(), v.clone()));
        }
        for s in specs {
            let v = match (&s.kind, &s.attr) {
                (AggKind::Count, _) | (_, None) => Value::Int(rows.len() as i64),
                (kind, Some(attr)) => {
                    let mut vals = Vec::new();
                    for r in rows {
                        let Value::Func(t) = r else {
                            return Err(Error::TypeMismatch(format!(
                                "aggregating over {} rows",
                                r.type_name()
                            )));
                        };
                        vals.push(t.apply(&[Value::Text(attr.clone())], self)?);
                    }
                    fold(*kind, attr, vals)?
                }
            };
            attrs.push((s.out.clone(), v));
        }
        Ok(Value::func(FunctionValue::record(attrs)?))
    }

    fn join(&mut self, db: &FunctionValue, on: Option<&[JoinPair]>) -> Result<FunctionValue> {
        let naive = Naive::new(db, on, self.catalog(), self)?;
        let members = &naive.members;
        if members.is_empty() {
            return Err(Error::UnresolvableCondition("nothing to join".into()));
        }
        if members.len() == 1 {
            return Ok(members[0].rel.clone());
        }
        // key columns: every (member, param); a column equated to an earlier
        // one by a key-to-key condition is dropped
        let mut cols: Vec<(usize, usize)> = Vec::new();
        for (m, mem) in members.iter().enumerate() {
            for i in 0..mem.rel.sig().arity() {
                cols.push((m, i));
            }
        }
        let mut class: Vec<usize> = (0..cols.len()).collect();
        for c in &naive.conds {
            if let (Side::Key(li), Side::Key(ri)) = (&c.0 .1, &c.1 .1) {
                let a = cols.iter().position(|x| *x == (c.0 .0, *li)).unwrap();
                let b = cols.iter().position(|x| *x == (c.1 .0, *ri)).unwrap();
                let (from, to) = (class[a].max(class[b]), class[a].min(class[b]));
                for x in class.iter_mut() {
                    if *x == from {
                        *x = to;
                    }
                }
            }
        }
        let keep: Vec<(usize, usize)> = (0..cols.len())
            .filter(|&i| class[i] == i)
            .map(|i| cols[i])
            .collect();
        let mut params = Vec::new();
        for &(m, i) in &keep {
            let p = &members[m].rel.sig().params()[i];
            let clash = keep
                .iter()
                .filter(|&&(m2, i2)| members[m2].rel.sig().params()[i2].name == p.name)
                .count()
                > 1;
            let name = if clash {
                format!("{}.{}", members[m].name, p.name)
            } else {
                p.name.clone()
            };
            params.push(Param::new(name, p.constraint.clone()));
        }
        let sig = ParamSig::new(params)?;

        // attribute naming over all live rows
        let mut defined: Vec<BTreeSet<String>> = Vec::new();
        for m in members {
            let mut s = BTreeSet::new();
            for &r in &m.live {
                for (a, _) in contributed(m, &m.rows[r].1, self)? {
                    s.insert(a);
                }
            }
            defined.push(s);
        }
        let label = |m: usize, a: &str| -> String {
            if defined.iter().filter(|s| s.contains(a)).count() > 1 {
                format!("{}.{a}", members[m].name)
            } else {
                a.to_string()
            }
        };

        let mut rows = Vec::new();
        for combo in naive.all_matches() {
            let key: Key = keep
                .iter()
                .map(|&(m, i)| members[m].rows[combo[m]].0[i].clone())
                .collect();
            let mut attrs = Vec::new();
            for (m, &r) in combo.iter().enumerate() {
                for (a, v) in contributed(&members[m], &members[m].rows[r].1, self)? {
                    attrs.push((label(m, &a), v));
                }
            }
            rows.push((key, Value::func(FunctionValue::record(attrs)?)));
        }
        Ok(FunctionValue::extensional_with(sig, DomainConstraint::any(), rows, self)?
            .with_kind(FnKind::Relation))
    }

    fn set_op(&mut self, kind: SetOpKind, a: &FunctionValue, b: &FunctionValue) -> Result<FunctionValue> {
        let am: BTreeMap<Key, Value> = a.mappings(self)?.into_iter().collect();
        let bm: BTreeMap<Key, Value> = b.mappings(self)?.into_iter().collect();
        let mut names: Vec<&Key> = am.keys().chain(bm.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = BTreeMap::new();
        for n in names {
            let ra = match am.get(n) {
                Some(v) => Some(as_fn(v, kind.name())?),
                None => None,
            };
            let rb = match bm.get(n) {
                Some(v) => Some(as_fn(v, kind.name())?),
                None => None,
            };
            let shape = ra.clone().or_else(|| rb.clone()).unwrap();
            let xs = match &ra {
                Some(r) => r.mappings(self)?,
                None => Vec::new(),
            };
            let ys = match &rb {
                Some(r) => r.mappings(self)?,
                None => Vec::new(),
            };
            let find = |rows: &[(Key, Value)], k: &Key| rows.iter().find(|(x, _)| x == k).map(|(_, v)| v.clone());
            let rel = match kind {
                SetOpKind::Union => {
                    let mut rows = xs.clone();
                    for (k, v) in ys {
                        match find(&rows, &k) {
                            None => rows.push((k, v)),
                            Some(w) if w == v => {}
                            Some(_) => {
                                return Err(Error::UniqueViolation(format!(
                                    "both sides define {k:?} differently"
                                )))
                            }
                        }
                    }
                    FunctionValue::extensional_with(shape.sig().clone(), shape.codomain().clone(), rows, self)?
                        .with_kind(shape.kind())
                }
                SetOpKind::Intersect | SetOpKind::Minus => {
                    let want = kind == SetOpKind::Intersect;
                    let rows: BTreeMap<Key, Value> = xs
                        .iter()
                        .filter(|(k, v)| (find(&ys, k).as_ref() == Some(v)) == want)
                        .cloned()
                        .collect();
                    same_shape(&shape, rows)
                }
                SetOpKind::Difference => {
                    let mut rows = BTreeMap::new();
                    for (k, v) in &xs {
                        let w = find(&ys, k);
                        if w.as_ref() != Some(v) {
                            rows.insert(k.clone(), Value::set(std::iter::once(v.clone()).chain(w)));
                        }
                    }
                    for (k, w) in &ys {
                        if find(&xs, k).is_none() {
                            rows.insert(k.clone(), Value::set([w.clone()]));
                        }
                    }
                    FunctionValue::from_parts_unchecked(
                        shape.sig().clone(),
                        DomainConstraint::any(),
                        shape.kind(),
                        rows,
                    )
                }
            };
            out.insert(n.clone(), Value::func(rel));
        }
        Ok(FunctionValue::from_parts_unchecked(a.sig().clone(), a.codomain().clone(), a.kind(), out))
    }
}

fn as_fn(v: &Value, op: &str) -> Result<FunctionValue> {
    match v {
        Value::Func(f) => Ok((**f).clone()),
        other => Err(Error::TypeMismatch(format!("{op} of a {} value", other.type_name()))),
    }
}

fn same_shape(rel: &FunctionValue, rows: BTreeMap<Key, Value>) -> FunctionValue {
    FunctionValue::from_parts_unchecked(rel.sig().clone(), rel.codomain().clone(), rel.kind(), rows)
}

/// Whether `name` occurs anywhere in `e` as a parameter or path head.
fn mentions(e: &Expr, name: &str) -> bool {
    match e {
        Expr::Param(p) => p == name,
        Expr::Ref(path) => path.first().is_some_and(|h| h == name),
        Expr::Lambda(ps, body) => !ps.iter().any(|p| p == name) && mentions(body, name),
        other => other.children().into_iter().any(|c| mentions(c, name)),
    }
}

fn pair(k: &Key, v: &Value) -> Value {
    let key = if k.len() == 1 {
        k[0].clone()
    } else {
        Value::Set(k.iter().cloned().collect())
    };
    let mut map = BTreeMap::new();
    map.insert(vec![Value::Int(0)], key.clone());
    map.insert(vec![Value::Int(1)], v.clone());
    map.insert(vec![Value::text("key")], key);
    map.insert(vec![Value::text("value")], v.clone());
    Value::func(FunctionValue::from_parts_unchecked(
        ParamSig::single("i", DomainConstraint::any()),
        DomainConstraint::any(),
        FnKind::Tuple,
        map,
    ))
}

fn validate_specs(specs: &[AggSpec]) -> Result<()> {
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|t| t.out == s.out) {
            return Err(Error::Schema(format!("aggregate {} repeated", s.out)));
        }
        if s.attr.is_none() && s.kind != AggKind::Count {
            return Err(Error::Schema(format!("{} needs an attribute", s.kind.name())));
        }
    }
    Ok(())
}

fn fold(kind: AggKind, attr: &str, vals: Vec<Value>) -> Result<Value> {
    let numeric = |vals: &[Value]| -> Result<f64> {
        let mut t = 0.0;
        for v in vals {
            t += match v {
                Value::Int(i) => *i as f64,
                Value::Float(x) => x.0,
                other => {
                    return Err(Error::TypeMismatch(format!(
                        "{attr} holds a {} value",
                        other.type_name()
                    )))
                }
            };
        }
        Ok(t)
    };
    match kind {
        AggKind::Count => Ok(Value::Int(vals.len() as i64)),
        AggKind::Sum => {
            if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                let mut t: i64 = 0;
                for v in &vals {
                    let Value::Int(i) = v else { unreachable!() };
                    t = t.checked_add(*i).ok_or(Error::Overflow)?;
                }
                Ok(Value::Int(t))
            } else {
                Ok(Value::float(numeric(&vals)?))
            }
        }
        AggKind::Avg => {
            if vals.is_empty() {
                return Err(Error::EmptyAggregate(format!("average of no {attr}")));
            }
            Ok(Value::float(numeric(&vals)? / vals.len() as f64))
        }
        AggKind::Min | AggKind::Max => {
            let mut best: Option<Value> = None;
            for v in vals {
                best = Some(match best {
                    None => v,
                    Some(b) => {
                        let o = order(&v, &b)?;
                        let better = if kind == AggKind::Min {
                            o == Some(Ordering::Less)
                        } else {
                            o == Some(Ordering::Greater)
                        };
                        if better {
                            v
                        } else {
                            b
                        }
                    }
                });
            }
            best.ok_or_else(|| Error::EmptyAggregate(format!("{} of no {attr}", kind.name())))
        }
    }
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(x.0),
        _ => None,
    }
}

/// `==` semantics: numbers compare by value across Int and Float.
fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(_), Value::Float(_)) | (Value::Float(_), Value::Int(_)) | (Value::Float(_), Value::Float(_)) => {
            a == b || num(a) == num(b)
        }
        _ => a == b,
    }
}

fn order(a: &Value, b: &Value) -> Result<Option<Ordering>> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(Some(x.cmp(y))),
        (Value::Text(x), Value::Text(y)) => Ok(Some(x.cmp(y))),
        (Value::Bool(x), Value::Bool(y)) => Ok(Some(x.cmp(y))),
        _ => match (num(a), num(b)) {
            (Some(x), Some(y)) => Ok(x.partial_cmp(&y)),
            _ => Err(Error::TypeMismatch(format!(
                "{} and {} are not comparable",
                a.type_name(),
                b.type_name()
            ))),
        },
    }
}

fn scalar_op(op: BinOp, a: Value, b: Value) -> Result<Value> {
    let mismatch = || {
        Error::TypeMismatch(format!(
            "{} {} {} is not defined",
            a.type_name(),
            op.symbol(),
            b.type_name()
        ))
    };
    match op {
        BinOp::Eq => Ok(Value::Bool(same(&a, &b))),
        BinOp::Ne => Ok(Value::Bool(!same(&a, &b))),
        BinOp::Lt => Ok(Value::Bool(order(&a, &b)? == Some(Ordering::Less))),
        BinOp::Gt => Ok(Value::Bool(order(&a, &b)? == Some(Ordering::Greater))),
        BinOp::Le => Ok(Value::Bool(matches!(order(&a, &b)?, Some(Ordering::Less | Ordering::Equal)))),
        BinOp::Ge => Ok(Value::Bool(matches!(
            order(&a, &b)?,
            Some(Ordering::Greater | Ordering::Equal)
        ))),
        BinOp::And | BinOp::Or => unreachable!("short-circuited by the caller"),
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
            if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
                let r = match op {
                    BinOp::Add => x.checked_add(*y),
                    BinOp::Sub => x.checked_sub(*y),
                    BinOp::Mul => x.checked_mul(*y),
                    _ if *y == 0 => return Err(Error::DivisionByZero),
                    _ => x.checked_div(*y),
                };
                return r.map(Value::Int).ok_or(Error::Overflow);
            }
            if let (Value::Text(x), Value::Text(y), BinOp::Add) = (&a, &b, op) {
                return Ok(Value::Text(x.clone() + y));
            }
            let (Some(x), Some(y)) = (num(&a), num(&b)) else {
                return Err(mismatch());
            };
            Ok(Value::float(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                _ if y == 0.0 => return Err(Error::DivisionByZero),
                _ => x / y,
            }))
        }
    }
}

// ---- naive joins ----

#[derive(Clone, Debug, PartialEq)]
enum Side {
    Key(usize),
    Attr(String),
}

struct NaiveMember {
    name: String,
    rel: FunctionValue,
    rows: Vec<(Key, Value)>,
    live: Vec<usize>,
}

struct Naive {
    members: Vec<NaiveMember>,
    conds: Vec<((usize, Side), (usize, Side))>,
    /// Resolved cell per condition side per row (None for dead rows).
    cells: Vec<(Vec<Option<Value>>, Vec<Option<Value>>)>,
}

fn contributed(m: &NaiveMember, v: &Value, ev: &mut dyn Evaluator) -> Result<Vec<(String, Value)>> {
    match v {
        Value::Bool(_) => Ok(Vec::new()),
        Value::Func(t) => {
            let mut out = Vec::new();
            for (k, x) in t.mappings(ev)? {
                match k.as_slice() {
                    [Value::Text(a)] => out.push((a.clone(), x)),
                    _ => return Err(Error::TypeMismatch("non-text attribute name".into())),
                }
            }
            Ok(out)
        }
        other => Ok(vec![(m.name.clone(), other.clone())]),
    }
}

impl Naive {
    fn new(
        db: &FunctionValue,
        on: Option<&[JoinPair]>,
        catalog: &Catalog,
        ev: &mut dyn Evaluator,
    ) -> Result<Naive> {
        let mut members = Vec::new();
        for (k, v) in db.mappings(ev)? {
            let [Value::Text(name)] = k.as_slice() else {
                return Err(Error::TypeMismatch("members are named by text".into()));
            };
            let Value::Func(rel) = &v else {
                return Err(Error::TypeMismatch(format!("member {name} is not a function")));
            };
            let rows = rel.mappings(ev)?;
            let live = (0..rows.len()).filter(|&i| rows[i].1 != Value::Bool(false)).collect();
            members.push(NaiveMember {
                name: name.clone(),
                rel: (**rel).clone(),
                rows,
                live,
            });
        }
        let find = |n: &str| members.iter().position(|m| m.name == n);
        let mut conds = Vec::new();
        if let Some(pairs) = on {
            let resolve = |c: &ColRef| -> Result<(usize, Side)> {
                let m = find(&c.relation).ok_or_else(|| {
                    Error::UnresolvableCondition(format!("{c} names no member"))
                })?;
                Ok((
                    m,
                    match members[m].rel.sig().position(&c.column) {
                        Some(i) => Side::Key(i),
                        None => Side::Attr(c.column.clone()),
                    },
                ))
            };
            for p in pairs {
                conds.push((resolve(&p.left)?, resolve(&p.right)?));
            }
        } else {
            for r in catalog.relationships() {
                let Some(rf) = find(&r.function) else { continue };
                let rf_sig = members[rf].rel.sig().clone();
                for (i, (f, p)) in r.participants.iter().enumerate() {
                    if f == ROOT_NAME {
                        continue;
                    }
                    let Some(m) = find(f) else { continue };
                    let Some(pi) = members[m].rel.sig().position(p) else {
                        return Err(Error::UnresolvableCondition(format!("{f} has no key {p}")));
                    };
                    let Some(q) = r.paired_param(&rf_sig, i) else {
                        return Err(Error::UnresolvableCondition(format!(
                            "{} has nothing paired with {f}.{p}",
                            r.function
                        )));
                    };
                    conds.push(((rf, Side::Key(q)), (m, Side::Key(pi))));
                }
            }
        }

        // connectivity
        if members.len() > 1 {
            let mut reached = BTreeSet::from([0usize]);
            loop {
                let before = reached.len();
                for ((a, _), (b, _)) in &conds {
                    if reached.contains(a) || reached.contains(b) {
                        reached.insert(*a);
                        reached.insert(*b);
                    }
                }
                if reached.len() == before {
                    break;
                }
            }
            if reached.len() != members.len() {
                return Err(Error::DisconnectedSchema(format!(
                    "{} member(s) cannot be linked",
                    members.len() - reached.len()
                )));
            }
        }

        let mut cells = Vec::new();
        for (l, r) in &conds {
            cells.push((side_cells(&members[l.0], &l.1, ev)?, side_cells(&members[r.0], &r.1, ev)?));
        }
        Ok(Naive {
            members,
            conds,
            cells,
        })
    }

    /// Every combination of live rows (one per member, in member order)
    /// satisfying every condition.
    fn all_matches(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        if self.members.is_empty() {
            return out;
        }
        let mut combo = Vec::new();
        self.extend(&mut combo, &mut out);
        out
    }

    fn extend(&self, combo: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let m = combo.len();
        if m == self.members.len() {
            out.push(combo.clone());
            return;
        }
        for &row in &self.members[m].live {
            combo.push(row);
            let ok = self.conds.iter().enumerate().all(|(c, ((a, _), (b, _)))| {
                if *a.max(b) != m {
                    return true;
                }
                match (&self.cells[c].0[combo[*a]], &self.cells[c].1[combo[*b]]) {
                    (Some(x), Some(y)) => same(x, y),
                    _ => false,
                }
            });
            if ok {
                self.extend(combo, out);
            }
            combo.pop();
        }
    }

    fn used_rows(&self) -> Vec<BTreeSet<usize>> {
        let mut used = vec![BTreeSet::new(); self.members.len()];
        for combo in self.all_matches() {
            for (m, r) in combo.into_iter().enumerate() {
                used[m].insert(r);
            }
        }
        used
    }
}

fn side_cells(m: &NaiveMember, side: &Side, ev: &mut dyn Evaluator) -> Result<Vec<Option<Value>>> {
    let mut out = Vec::new();
    for (i, (k, v)) in m.rows.iter().enumerate() {
        if !m.live.contains(&i) {
            out.push(None);
            continue;
        }
        out.push(Some(match side {
            Side::Key(p) => k[*p].clone(),
            Side::Attr(a) => match v {
                Value::Func(t) => match t.apply(&[Value::Text(a.clone())], ev) {
                    Ok(x) => x,
                    Err(Error::UndefinedInput(_) | Error::Domain(_)) => {
                        return Err(Error::UnresolvableCondition(format!(
                            "{} row without attribute {a}",
                            m.name
                        )))
                    }
                    Err(e) => return Err(e),
                },
                other => {
                    return Err(Error::TypeMismatch(format!(
                        "attribute {a} of a {} row",
                        other.type_name()
                    )))
                }
            },
        }));
    }
    Ok(out)
}
