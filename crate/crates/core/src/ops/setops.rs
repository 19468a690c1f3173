use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::SetOpKind;
use crate::model::{DomainConstraint, Evaluator, FunctionValue, Key, Value};

use super::function;

/// Set operations applied member by member to two database functions. A
/// member missing on one side counts as empty there.
pub fn set_op(
    kind: SetOpKind,
    a: &FunctionValue,
    b: &FunctionValue,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let am: BTreeMap<Key, Value> = a.mappings(ev)?.into_iter().collect();
    let bm: BTreeMap<Key, Value> = b.mappings(ev)?.into_iter().collect();
    let names: BTreeSet<&Key> = am.keys().chain(bm.keys()).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let ra = am.get(name).map(|v| function(v, kind.name())).transpose()?;
        let rb = bm.get(name).map(|v| function(v, kind.name())).transpose()?;
        let rel = member_op(kind, ra, rb, ev)?;
        out.insert(name.clone(), Value::func(rel));
    }
    Ok(FunctionValue::from_parts_unchecked(
        a.sig().clone(),
        a.codomain().clone(),
        a.kind(),
        out,
    ))
}

fn member_op(
    kind: SetOpKind,
    ra: Option<&Arc<FunctionValue>>,
    rb: Option<&Arc<FunctionValue>>,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let template = ra.or(rb).expect("member present on at least one side");
    let ma: BTreeMap<Key, Value> = match ra {
        Some(r) => r.mappings(ev)?.into_iter().collect(),
        None => BTreeMap::new(),
    };
    let mb: BTreeMap<Key, Value> = match rb {
        Some(r) => r.mappings(ev)?.into_iter().collect(),
        None => BTreeMap::new(),
    };
    let unchecked = |codomain: DomainConstraint, rows: BTreeMap<Key, Value>| {
        FunctionValue::from_parts_unchecked(template.sig().clone(), codomain, template.kind(), rows)
    };
    Ok(match kind {
        SetOpKind::Union => {
            let mut rows = ma.clone();
            for (k, v) in mb {
                match rows.get(&k) {
                    Some(existing) if *existing != v => {
                        return Err(Error::UniqueViolation(format!(
                            "union maps {} to two different values",
                            crate::model::function::show_key(&k)
                        )))
                    }
                    Some(_) => {}
                    None => {
                        rows.insert(k, v);
                    }
                }
            }
            FunctionValue::extensional_with(
                template.sig().clone(),
                template.codomain().clone(),
                rows,
                ev,
            )?
            .with_kind(template.kind())
        }
        SetOpKind::Intersect => unchecked(
            template.codomain().clone(),
            ma.into_iter()
                .filter(|(k, v)| mb.get(k) == Some(v))
                .collect(),
        ),
        SetOpKind::Minus => unchecked(
            template.codomain().clone(),
            ma.into_iter()
                .filter(|(k, v)| mb.get(k) != Some(v))
                .collect(),
        ),
        SetOpKind::Difference => {
            // each changed key maps to the set of its differing versions
            let keys: BTreeSet<&Key> = ma.keys().chain(mb.keys()).collect();
            let mut rows = BTreeMap::new();
            for k in keys {
                let (va, vb) = (ma.get(k), mb.get(k));
                if va == vb {
                    continue;
                }
                rows.insert(k.clone(), Value::set(va.into_iter().chain(vb).cloned()));
            }
            unchecked(DomainConstraint::any(), rows)
        }
    })
}
