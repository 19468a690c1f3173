use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{DomainConstraint, Evaluator, FnKind, FunctionValue, Key, ParamSig, Value};

/// Keeps the mappings of `input` on which `pred` holds.
///
/// The predicate sees the mapped value, except for database functions where
/// it sees a key/value pair (see [`kv_pair`]).
pub fn filter(pred: &Value, input: &FunctionValue, ev: &mut dyn Evaluator) -> Result<FunctionValue> {
    let Some(pred) = pred.as_func() else {
        return Err(Error::TypeMismatch(format!(
            "filter predicate must be a function, got {}",
            pred.type_name()
        )));
    };
    let mut kept = BTreeMap::new();
    for (key, value) in input.mappings(ev)? {
        let arg = if input.kind() == FnKind::Database {
            kv_pair(&key, &value)
        } else {
            value.clone()
        };
        match pred.apply(&[arg], ev)? {
            Value::Bool(true) => {
                kept.insert(key, value);
            }
            Value::Bool(false) => {}
            other => {
                return Err(Error::Predicate(format!(
                    "filter predicate returned {} instead of bool",
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

/// The argument a database-level filter predicate receives: readable as
/// `kv[0]` / `kv.key` for the member name and `kv[1]` / `kv.value` for the
/// member itself.
pub fn kv_pair(key: &Key, value: &Value) -> Value {
    let k = match key.as_slice() {
        [single] => single.clone(),
        _ => Value::set(key.iter().cloned()),
    };
    let map = BTreeMap::from([
        (vec![Value::Int(0)], k.clone()),
        (vec![Value::Int(1)], value.clone()),
        (vec![Value::text("key")], k),
        (vec![Value::text("value")], value.clone()),
    ]);
    Value::func(FunctionValue::from_parts_unchecked(
        ParamSig::single("i", DomainConstraint::any()),
        DomainConstraint::any(),
        FnKind::Tuple,
        map,
    ))
}
