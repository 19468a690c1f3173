use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Body, Case, CaseBody, Evaluator, FunctionValue, Value};

/// A structurally equal copy sharing no function value with the original.
/// Computed bodies are immutable and are shared as expressions.
pub fn deep_copy(v: &Value) -> Value {
    match v {
        Value::Func(f) => Value::func(copy_function(f)),
        Value::Set(items) => Value::Set(items.iter().map(deep_copy).collect()),
        scalar => scalar.clone(),
    }
}

fn copy_function(f: &FunctionValue) -> FunctionValue {
    let copy_map = |m: &BTreeMap<Vec<Value>, Value>| {
        m.iter()
            .map(|(k, v)| (k.iter().map(deep_copy).collect(), deep_copy(v)))
            .collect()
    };
    let body = match f.body() {
        Body::Extensional(m) => Body::Extensional(copy_map(m)),
        Body::Computed(c) => Body::Computed(c.clone()),
        Body::Piecewise { cases, fallback } => Body::Piecewise {
            cases: cases
                .iter()
                .map(|c| Case {
                    guard: c.guard.clone(),
                    body: match &c.body {
                        CaseBody::Extensional(m) => CaseBody::Extensional(copy_map(m)),
                        CaseBody::Computed(cl) => CaseBody::Computed(cl.clone()),
                    },
                })
                .collect(),
            fallback: fallback.clone(),
        },
    };
    f.with_body_unchecked(body)
}

/// Replaces member `name` of a database function by `f` applied to it.
pub fn map_member(
    dbf: &FunctionValue,
    name: &str,
    f: &Value,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let Some(f) = f.as_func() else {
        return Err(Error::TypeMismatch(format!(
            "map_member expects a function, got {}",
            f.type_name()
        )));
    };
    let mut map: BTreeMap<_, _> = dbf.mappings(ev)?.into_iter().collect();
    let key = vec![Value::text(name)];
    let Some(member) = map.get(&key) else {
        return Err(Error::UnknownRelation(format!(
            "{name} is not a member of the database"
        )));
    };
    let replaced = f.apply(&[member.clone()], ev)?;
    map.insert(key, replaced);
    Ok(FunctionValue::from_parts_unchecked(
        dbf.sig().clone(),
        dbf.codomain().clone(),
        dbf.kind(),
        map,
    ))
}
