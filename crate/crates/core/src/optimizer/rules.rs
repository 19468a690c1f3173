use std::collections::{BTreeMap, BTreeSet};

use super::{digest, Context};
use crate::eval::binop;
use crate::expr::{BinOp, Expr, GroupBy, Operator};
use crate::model::{FnKind, Value};
use crate::ops::{self, JoinGraph};

type Rule = fn(&Expr, Option<Context<'_>>) -> Option<Expr>;

const RULES: &[(&str, Rule)] = &[
    ("fold-constants", fold_constants),
    ("fuse-group-aggregate", fuse_group_aggregate),
    ("prune-subdatabase", prune_subdatabase),
    ("fuse-filters", fuse_filters),
    ("push-filter-below-aggregate", push_below_aggregate),
    ("push-filter-into-join", push_into_join),
];

pub const RULE_NAMES: [&str; 6] = [
    "fuse-filters",
    "fuse-group-aggregate",
    "push-filter-below-aggregate",
    "push-filter-into-join",
    "prune-subdatabase",
    "fold-constants",
];

/// Applies the first applicable rule at the innermost possible node.
pub(super) fn step(
    e: &Expr,
    ctx: Option<Context<'_>>,
    rejected: &mut BTreeSet<(u64, &'static str)>,
    applied: &mut Option<&'static str>,
) -> Expr {
    let rebuilt = e.clone().map_children(&mut |c| {
        if applied.is_some() {
            c
        } else {
            step(&c, ctx, rejected, applied)
        }
    });
    if applied.is_some() {
        return rebuilt;
    }
    let d = digest(e);
    for (name, rule) in RULES {
        if rejected.contains(&(d, *name)) {
            continue;
        }
        match rule(e, ctx) {
            Some(next) => {
                *applied = Some(name);
                return next;
            }
            None => {
                rejected.insert((d, name));
            }
        }
    }
    rebuilt
}

// ---- helpers ----

/// Evaluates a closed expression against the plan's snapshot.
fn dry(ctx: Option<Context<'_>>, e: &Expr) -> Option<Value> {
    let ctx = ctx?;
    if !e.free_params().is_empty() {
        return None;
    }
    ctx.interpreter().eval(e, ctx.bindings).ok()
}

fn unary_lambda(e: &Expr) -> Option<(&str, &Expr)> {
    match e {
        Expr::Lambda(ps, body) if ps.len() == 1 => Some((ps[0].as_str(), body)),
        _ => None,
    }
}

/// The attributes read from `param` when every use is `param.attr`; `None`
/// if the parameter is used any other way.
fn attr_uses(body: &Expr, param: &str) -> Option<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    collect_attr_uses(body, param, &mut out).then_some(out)
}

fn collect_attr_uses(e: &Expr, param: &str, out: &mut BTreeSet<String>) -> bool {
    match e {
        Expr::Apply(f, args) => {
            if let (Expr::Param(p), [Expr::Lit(Value::Text(a))]) = (f.as_ref(), args.as_slice()) {
                if p == param {
                    out.insert(a.clone());
                    return true;
                }
            }
            e.children().into_iter().all(|c| collect_attr_uses(c, param, out))
        }
        Expr::Param(p) => p != param,
        Expr::Ref(path) => path.first().map(String::as_str) != Some(param),
        Expr::Lambda(ps, body) => {
            ps.iter().any(|p| p == param) || collect_attr_uses(body, param, out)
        }
        other => other
            .children()
            .into_iter()
            .all(|c| collect_attr_uses(c, param, out)),
    }
}

/// Rewrites `param.a` to `param.map[a]`.
fn rename_attrs(e: &Expr, param: &str, map: &BTreeMap<String, String>) -> Expr {
    match e {
        Expr::Apply(f, args) => {
            if let (Expr::Param(p), [Expr::Lit(Value::Text(a))]) = (f.as_ref(), args.as_slice()) {
                if p == param {
                    let a = map.get(a).cloned().unwrap_or_else(|| a.clone());
                    return Expr::attr(Expr::param(p.as_str()), a);
                }
            }
            e.clone().map_children(&mut |c| rename_attrs(&c, param, map))
        }
        Expr::Lambda(ps, _) if ps.iter().any(|p| p == param) => e.clone(),
        _ => e.clone().map_children(&mut |c| rename_attrs(&c, param, map)),
    }
}

/// Whether `name` occurs anywhere in `e`: as a parameter, a lambda
/// parameter or a path head.
fn occurs(e: &Expr, name: &str) -> bool {
    match e {
        Expr::Param(p) => p == name,
        Expr::Ref(path) => path.first().is_some_and(|h| h == name),
        Expr::Lambda(ps, body) => ps.iter().any(|p| p == name) || occurs(body, name),
        other => other.children().into_iter().any(|c| occurs(c, name)),
    }
}

/// Renames the free parameter `from` to `to`, which must not occur in `e`.
fn rename_param(e: &Expr, from: &str, to: &str) -> Expr {
    match e {
        Expr::Param(p) if p == from => Expr::param(to),
        Expr::Ref(path) if path.first().is_some_and(|h| h == from) => {
            let mut path = path.clone();
            path[0] = to.to_string();
            Expr::Ref(path)
        }
        Expr::Lambda(ps, _) if ps.iter().any(|p| p == from) => e.clone(),
        _ => e.clone().map_children(&mut |c| rename_param(&c, from, to)),
    }
}

fn fresh(avoid: &[&Expr]) -> String {
    (0..)
        .map(|i| format!("_v{i}"))
        .find(|n| avoid.iter().all(|e| !occurs(e, n)))
        .unwrap()
}

// ---- rules ----

/// Arithmetic, comparison and logic over literal operands.
fn fold_constants(e: &Expr, _: Option<Context<'_>>) -> Option<Expr> {
    match e {
        Expr::BinOp(op, l, r) => {
            let (Expr::Lit(a), Expr::Lit(b)) = (l.as_ref(), r.as_ref()) else {
                return None;
            };
            match op {
                BinOp::And | BinOp::Or => match (a, b) {
                    (Value::Bool(x), Value::Bool(y)) => Some(Expr::lit(if *op == BinOp::And {
                        *x && *y
                    } else {
                        *x || *y
                    })),
                    // `false and 3` is false without ever reading the 3
                    (Value::Bool(x), _) if (*op == BinOp::And) != *x => Some(Expr::lit(*x)),
                    _ => None,
                },
                _ => binop(*op, a, b).ok().map(Expr::Lit),
            }
        }
        Expr::Not(x) => match x.as_ref() {
            Expr::Lit(Value::Bool(b)) => Some(Expr::lit(!b)),
            _ => None,
        },
        _ => None,
    }
}

/// `aggregate(specs, group(by, R))` → `group_and_aggregate(by, specs, R)`.
fn fuse_group_aggregate(e: &Expr, _: Option<Context<'_>>) -> Option<Expr> {
    let Expr::Op(Operator::Aggregate(specs), inputs) = e else {
        return None;
    };
    let [Expr::Op(Operator::Group(by), group_inputs)] = inputs.as_slice() else {
        return None;
    };
    Some(Expr::Op(
        Operator::GroupAndAggregate(by.clone(), specs.clone()),
        group_inputs.clone(),
    ))
}

/// Reading one member of a derived database skips the work spent on the
/// other members: `filter(P, D)(n)` → `D(n)` and `map_member(D, m, f)(n)` →
/// `D(n)` for `n ≠ m`, `f(D(n))` otherwise.
fn prune_subdatabase(e: &Expr, ctx: Option<Context<'_>>) -> Option<Expr> {
    let Expr::Apply(f, args) = e else {
        return None;
    };
    let out = match f.as_ref() {
        Expr::Op(Operator::Filter, inputs) => Expr::apply(inputs[..].get(1)?.clone(), args.clone()),
        Expr::Op(Operator::MapMember(m), inputs) => {
            let [Expr::Lit(Value::Text(n))] = args.as_slice() else {
                return None;
            };
            let [d, g] = inputs.as_slice() else {
                return None;
            };
            let member = Expr::apply(d.clone(), args.clone());
            if n == m {
                Expr::apply(g.clone(), vec![member])
            } else {
                member
            }
        }
        _ => return None,
    };
    dry(ctx, e)?;
    Some(out)
}

/// `filter(p, filter(q, R))` → `filter(fn(v) => q(v) and p(v), R)`.
fn fuse_filters(e: &Expr, ctx: Option<Context<'_>>) -> Option<Expr> {
    let Expr::Op(Operator::Filter, outer) = e else {
        return None;
    };
    let [p, Expr::Op(Operator::Filter, inner)] = outer.as_slice() else {
        return None;
    };
    let [q, r] = inner.as_slice() else {
        return None;
    };
    let (px, pb) = unary_lambda(p)?;
    let (qx, qb) = unary_lambda(q)?;
    // a failing or non-boolean predicate would surface differently once the
    // two are interleaved row by row
    dry(ctx, e)?;
    let v = if !occurs(pb, qx) || px == qx {
        qx.to_string()
    } else if !occurs(qb, px) {
        px.to_string()
    } else {
        fresh(&[pb, qb])
    };
    let body = Expr::bin(
        BinOp::And,
        rename_param(qb, qx, &v),
        rename_param(pb, px, &v),
    );
    Some(Expr::filter(Expr::Lambda(vec![v], Box::new(body)), r.clone()))
}

/// A filter reading only grouping attributes keeps or drops whole groups,
/// so it can run before the grouping.
fn push_below_aggregate(e: &Expr, ctx: Option<Context<'_>>) -> Option<Expr> {
    let Expr::Op(Operator::Filter, outer) = e else {
        return None;
    };
    let [p, Expr::Op(gaa @ Operator::GroupAndAggregate(GroupBy::Attrs(by), _), inner)] =
        outer.as_slice()
    else {
        return None;
    };
    let [r] = inner.as_slice() else {
        return None;
    };
    let (x, body) = unary_lambda(p)?;
    let used = attr_uses(body, x)?;
    if !used.iter().all(|a| by.contains(a)) {
        return None;
    }
    dry(ctx, e)?;
    match dry(ctx, r)? {
        Value::Func(f) if f.kind() != FnKind::Database => {}
        _ => return None,
    }
    Some(Expr::Op(
        gaa.clone(),
        vec![Expr::filter(p.clone(), r.clone())],
    ))
}

/// A filter reading attributes of a single join member runs on that
/// member's rows before the join.
fn push_into_join(e: &Expr, ctx: Option<Context<'_>>) -> Option<Expr> {
    let Expr::Op(Operator::Filter, outer) = e else {
        return None;
    };
    let [p, Expr::Op(Operator::Join(on), join_inputs)] = outer.as_slice() else {
        return None;
    };
    let [input] = join_inputs.as_slice() else {
        return None;
    };
    let (db_expr, through_reduce) = match input {
        Expr::Op(Operator::ReduceDb, inner) if on.is_none() => (inner.first()?, true),
        other => (other, false),
    };
    let (x, body) = unary_lambda(p)?;
    let used = attr_uses(body, x)?;
    if used.is_empty() {
        return None;
    }
    let c = ctx?;
    dry(ctx, e)?;
    let Value::Func(db) = dry(ctx, db_expr)? else {
        return None;
    };
    let mut interp = c.interpreter();
    let graph = JoinGraph::build(&db, on.as_deref(), &c.snapshot.catalog, &mut interp).ok()?;
    let names = graph.attribute_names(&mut interp).ok()?;
    let mut owner: Option<&str> = None;
    let mut rename = BTreeMap::new();
    for a in &used {
        let (m, orig) = names
            .iter()
            .find(|(_, shown)| *shown == a)
            .map(|((m, orig), _)| (m.as_str(), orig.clone()))?;
        if owner.is_some_and(|o| o != m) {
            return None;
        }
        owner = Some(m);
        rename.insert(a.clone(), orig);
    }
    let member = owner?.to_string();
    let members: Vec<String> = graph.member_names().map(str::to_string).collect();
    for m in &members {
        if (through_reduce || *m == member) && !graph.homogeneous(m, &mut interp).ok()? {
            return None;
        }
    }
    let rel = db.apply(&[Value::text(member.as_str())], &mut interp).ok()?;
    let Value::Func(rel) = rel else {
        return None;
    };
    if rel.kind() == FnKind::Database {
        return None;
    }
    for (_, row) in rel.mappings(&mut interp).ok()? {
        if !matches!(&row, Value::Func(t) if t.kind() == FnKind::Tuple) {
            return None;
        }
    }
    let pushed = Expr::Lambda(vec![x.to_string()], Box::new(rename_attrs(body, x, &rename)));
    // the pushed predicate also meets rows that never reach the join output
    let pred = interp.eval(&pushed, c.bindings).ok()?;
    ops::filter(&pred, &rel, &mut interp).ok()?;

    let r = fresh(&[&pushed, db_expr]);
    let mapper = Expr::lambda([r.as_str()], Expr::filter(pushed, Expr::param(r.as_str())));
    let mapped = Expr::Op(Operator::MapMember(member), vec![db_expr.clone(), mapper]);
    let join_input = if through_reduce {
        Expr::Op(Operator::ReduceDb, vec![mapped])
    } else {
        mapped
    };
    Some(Expr::Op(Operator::Join(on.clone()), vec![join_input]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::rewrite;
    use crate::surface::parse_expr;

    #[test]
    fn fusion_without_context_only_fuses_groups() {
        let e = parse_expr("aggregate(count=Count(), group(by=[\"age\"], customers))").unwrap();
        let plan = rewrite(&e, None);
        assert_eq!(
            plan.expr,
            parse_expr("group_and_aggregate(by=[\"age\"], count=Count(), customers)").unwrap()
        );
        assert_eq!(plan.trace[0].rule, "fuse-group-aggregate");
    }

    #[test]
    fn constants_fold() {
        let e = parse_expr("fn(x) => x > 2 * 21 and not false").unwrap();
        let plan = rewrite(&e, None);
        assert_eq!(plan.expr, parse_expr("fn(x) => x > 42 and true").unwrap());
        let e = parse_expr("1 / 0").unwrap();
        assert!(rewrite(&e, None).trace.is_empty());
    }

    #[test]
    fn attribute_analysis() {
        let body = parse_expr("fn(t) => t.a > 1 and (fn(t) => t.zzz)(t) == 2").unwrap();
        let Expr::Lambda(_, b) = &body else { panic!() };
        assert_eq!(attr_uses(b, "t"), None);
        let body = parse_expr("fn(t) => t.a > 1 and (fn(t) => t.zzz)(3) == t.b").unwrap();
        let Expr::Lambda(_, b) = &body else { panic!() };
        assert_eq!(
            attr_uses(b, "t"),
            Some(BTreeSet::from(["a".to_string(), "b".to_string()]))
        );
    }
}
