//! Operator semantics. Every operator takes function values and returns a
//! function value; configuration comes from the [`Operator`] node.

mod copy;
mod filter;
mod group;
mod join;
mod setops;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Operator;
use crate::model::{Catalog, Evaluator, FunctionValue, Value};

pub use copy::{deep_copy, map_member};
pub use filter::{filter, kv_pair};
pub use group::{aggregate, group, group_and_aggregate, grouping_sets};
pub use join::{join, outer_mark, reduce_db, JoinGraph};
pub use setops::set_op;

/// Evaluates an operator over already evaluated operands.
pub fn apply_operator(
    op: &Operator,
    inputs: &[Value],
    catalog: &Catalog,
    ev: &mut dyn Evaluator,
) -> Result<Value> {
    let out = match (op, inputs) {
        (Operator::Filter, [pred, input]) => filter(pred, function(input, "filter")?, ev)?,
        (Operator::Group(by), [input]) => group(by, None, function(input, "group")?, ev)?,
        (Operator::Group(by), [key_fn, input]) => {
            group(by, Some(key_fn), function(input, "group")?, ev)?
        }
        (Operator::Aggregate(specs), [groups]) => {
            aggregate(specs, function(groups, "aggregate")?, ev)?
        }
        (Operator::GroupAndAggregate(by, specs), [input]) => {
            group_and_aggregate(by, None, specs, function(input, "group_and_aggregate")?, ev)?
        }
        (Operator::GroupAndAggregate(by, specs), [key_fn, input]) => group_and_aggregate(
            by,
            Some(key_fn),
            specs,
            function(input, "group_and_aggregate")?,
            ev,
        )?,
        (Operator::GroupingSets(sets), [input]) => {
            grouping_sets(sets, function(input, "grouping_sets")?, ev)?
        }
        (Operator::Join(on), [db]) => join(function(db, "join")?, on.as_deref(), catalog, ev)?,
        (Operator::OuterMark(names), [db]) => {
            outer_mark(names, function(db, "subdatabase")?, catalog, ev)?
        }
        (Operator::ReduceDb, [db]) => reduce_db(function(db, "reduce_DB")?, catalog, ev)?,
        (Operator::SetOp(kind), [a, b]) => {
            set_op(*kind, function(a, kind.name())?, function(b, kind.name())?, ev)?
        }
        (Operator::DeepCopy | Operator::Copy, [v]) => return Ok(deep_copy(v)),
        (Operator::MapMember(name), [db, f]) => {
            map_member(function(db, "map_member")?, name, f, ev)?
        }
        _ => {
            return Err(Error::Arity {
                expected: op.arity(),
                got: inputs.len(),
            })
        }
    };
    Ok(Value::func(out))
}

pub(crate) fn function<'a>(v: &'a Value, op: &str) -> Result<&'a Arc<FunctionValue>> {
    v.as_func().ok_or_else(|| {
        Error::TypeMismatch(format!("{op} expects a function, got {}", v.type_name()))
    })
}

/// Name of a database member, which must be text.
pub(crate) fn member_name(key: &[Value]) -> Result<String> {
    match key {
        [Value::Text(s)] => Ok(s.clone()),
        _ => Err(Error::TypeMismatch(
            "database members must be keyed by a single text name".into(),
        )),
    }
}

/// Attribute names and values of a tuple function.
pub(crate) fn tuple_attrs(t: &FunctionValue, ev: &mut dyn Evaluator) -> Result<Vec<(String, Value)>> {
    t.mappings(ev)?
        .into_iter()
        .map(|(k, v)| match k.as_slice() {
            [Value::Text(name)] => Ok((name.clone(), v)),
            _ => Err(Error::TypeMismatch(
                "tuple attributes must be text names".into(),
            )),
        })
        .collect()
}
