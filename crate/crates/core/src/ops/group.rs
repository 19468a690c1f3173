use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::eval::compare_values;
use crate::expr::{AggKind, AggSpec, GroupBy, GroupingSet};
use crate::model::{
    BaseType, DomainConstraint, Evaluator, FnKind, FunctionValue, Key, Param, ParamSig, Value,
};

type Buckets = BTreeMap<Key, BTreeMap<Key, Value>>;

/// Partitions a relation into a database function from group key to the
/// sub-relation of that group.
pub fn group(
    by: &GroupBy,
    key_fn: Option<&Value>,
    input: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let (sig, buckets) = bucket(by, key_fn, input, ev)?;
    let map = buckets
        .into_iter()
        .map(|(gk, rows)| {
            let sub = FunctionValue::from_parts_unchecked(
                input.sig().clone(),
                input.codomain().clone(),
                input.kind(),
                rows,
            );
            (gk, Value::func(sub))
        })
        .collect();
    Ok(FunctionValue::from_parts_unchecked(
        sig,
        DomainConstraint::any(),
        FnKind::Database,
        map,
    ))
}

/// One tuple per group: the grouping attributes plus one attribute per spec.
pub fn aggregate(
    specs: &[AggSpec],
    groups: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    check_specs(specs)?;
    let mut out = BTreeMap::new();
    for (gk, g) in groups.mappings(ev)? {
        let Some(g) = g.as_func() else {
            return Err(Error::TypeMismatch(format!(
                "aggregate expects groups of relations, got {}",
                g.type_name()
            )));
        };
        let rows: Vec<Value> = g.mappings(ev)?.into_iter().map(|(_, v)| v).collect();
        let tuple = group_tuple(groups.sig(), &gk, specs, &rows, ev)?;
        out.insert(gk, tuple);
    }
    Ok(FunctionValue::from_parts_unchecked(
        groups.sig().clone(),
        DomainConstraint::any(),
        FnKind::Relation,
        out,
    ))
}

/// Grouping and aggregation in one pass; equal to
/// `aggregate(specs, group(by, input))` including its failure behavior.
pub fn group_and_aggregate(
    by: &GroupBy,
    key_fn: Option<&Value>,
    specs: &[AggSpec],
    input: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let (sig, buckets) = bucket(by, key_fn, input, ev)?;
    check_specs(specs)?;
    let mut out = BTreeMap::new();
    for (gk, rows) in buckets {
        let rows: Vec<Value> = rows.into_values().collect();
        let tuple = group_tuple(&sig, &gk, specs, &rows, ev)?;
        out.insert(gk, tuple);
    }
    Ok(FunctionValue::from_parts_unchecked(
        sig,
        DomainConstraint::any(),
        FnKind::Relation,
        out,
    ))
}

/// A database function holding one aggregated relation per grouping set.
pub fn grouping_sets(
    sets: &[GroupingSet],
    input: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let mut out = BTreeMap::new();
    for set in sets {
        let key = vec![Value::text(set.name.as_str())];
        if out.contains_key(&key) {
            return Err(Error::Schema(format!(
                "grouping set name {:?} used twice",
                set.name
            )));
        }
        let rel = group_and_aggregate(&GroupBy::Attrs(set.by.clone()), None, &set.aggs, input, ev)?;
        out.insert(key, Value::func(rel));
    }
    Ok(FunctionValue::from_parts_unchecked(
        ParamSig::single("name", DomainConstraint::of(BaseType::Text)),
        DomainConstraint::any(),
        FnKind::Database,
        out,
    ))
}

fn bucket(
    by: &GroupBy,
    key_fn: Option<&Value>,
    input: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<(ParamSig, Buckets)> {
    let sig = match (by, key_fn) {
        (GroupBy::Attrs(attrs), None) => ParamSig::new(
            attrs
                .iter()
                .map(|a| Param::new(a.as_str(), DomainConstraint::any()))
                .collect(),
        )?,
        (GroupBy::KeyFn, Some(_)) => ParamSig::single("key", DomainConstraint::any()),
        _ => {
            return Err(Error::Arity {
                expected: if key_fn.is_some() { 1 } else { 2 },
                got: if key_fn.is_some() { 2 } else { 1 },
            })
        }
    };
    let mut buckets = Buckets::new();
    for (key, row) in input.mappings(ev)? {
        let gk = match (by, key_fn) {
            (GroupBy::Attrs(attrs), _) => {
                let Some(t) = row.as_func() else {
                    return Err(Error::TypeMismatch(format!(
                        "grouping by attributes needs tuple functions, got {}",
                        row.type_name()
                    )));
                };
                attrs
                    .iter()
                    .map(|a| t.apply(&[Value::text(a.as_str())], ev))
                    .collect::<Result<Key>>()?
            }
            (GroupBy::KeyFn, Some(f)) => match f {
                Value::Func(f) => vec![f.apply(&[row.clone()], ev)?],
                other => {
                    return Err(Error::TypeMismatch(format!(
                        "group key must be a function, got {}",
                        other.type_name()
                    )))
                }
            },
            (GroupBy::KeyFn, None) => unreachable!("checked above"),
        };
        buckets.entry(gk).or_default().insert(key, row);
    }
    Ok((sig, buckets))
}

fn check_specs(specs: &[AggSpec]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.out.as_str()) {
            return Err(Error::Schema(format!(
                "aggregate output {:?} defined twice",
                s.out
            )));
        }
        if s.kind != AggKind::Count && s.attr.is_none() {
            return Err(Error::Schema(format!(
                "{}() for {:?} needs a source attribute",
                s.kind.name(),
                s.out
            )));
        }
    }
    Ok(())
}

fn group_tuple(
    sig: &ParamSig,
    gk: &Key,
    specs: &[AggSpec],
    rows: &[Value],
    ev: &mut dyn Evaluator,
) -> Result<Value> {
    let mut attrs: Vec<(String, Value)> = sig
        .names()
        .zip(gk)
        .map(|(n, v)| (n.to_string(), v.clone()))
        .collect();
    for spec in specs {
        attrs.push((spec.out.clone(), compute(spec, rows, ev)?));
    }
    FunctionValue::record(attrs).map(Value::func)
}

fn compute(spec: &AggSpec, rows: &[Value], ev: &mut dyn Evaluator) -> Result<Value> {
    let Some(attr) = &spec.attr else {
        return Ok(Value::Int(rows.len() as i64));
    };
    if spec.kind == AggKind::Count {
        return Ok(Value::Int(rows.len() as i64));
    }
    let mut values = Vec::with_capacity(rows.len());
    for row in rows {
        let Some(t) = row.as_func() else {
            return Err(Error::TypeMismatch(format!(
                "{} needs tuple functions, got {}",
                spec.kind.name(),
                row.type_name()
            )));
        };
        values.push(t.apply(&[Value::text(attr.as_str())], ev)?);
    }
    match spec.kind {
        AggKind::Count => unreachable!("handled above"),
        AggKind::Sum => sum(&values, attr),
        AggKind::Avg => {
            if values.is_empty() {
                return Err(Error::EmptyAggregate(format!("Avg of {attr:?}")));
            }
            let total = float_sum(&values, attr)?;
            Ok(Value::float(total / values.len() as f64))
        }
        AggKind::Min | AggKind::Max => {
            let mut it = values.into_iter();
            let Some(mut best) = it.next() else {
                return Err(Error::EmptyAggregate(format!(
                    "{} of {attr:?}",
                    spec.kind.name()
                )));
            };
            let wanted = if spec.kind == AggKind::Min {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            };
            for v in it {
                if compare_values(&v, &best)? == Some(wanted) {
                    best = v;
                }
            }
            Ok(best)
        }
    }
}

fn sum(values: &[Value], attr: &str) -> Result<Value> {
    if values.iter().all(|v| matches!(v, Value::Int(_))) {
        let mut total: i64 = 0;
        for v in values {
            if let Value::Int(i) = v {
                total = total.checked_add(*i).ok_or(Error::Overflow)?;
            }
        }
        return Ok(Value::Int(total));
    }
    float_sum(values, attr).map(Value::float)
}

/// Sequential sum in row order, integers promoted.
fn float_sum(values: &[Value], attr: &str) -> Result<f64> {
    let mut total = 0.0;
    for v in values {
        match v {
            Value::Int(i) => total += *i as f64,
            Value::Float(f) => total += f.0,
            other => {
                return Err(Error::TypeMismatch(format!(
                    "cannot aggregate {} values of {attr:?} numerically",
                    other.type_name()
                )))
            }
        }
    }
    Ok(total)
}
