//! Plain-text rendering for `show`.
//!
//! Relations print as aligned tables (key columns first, then attributes in
//! alphabetical order, rows by ascending key). Database functions print one
//! titled table per member, nesting with dotted titles.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::value::format_float;
use crate::model::{Evaluator, FnKind, FunctionValue, Value};

pub fn render_value(v: &Value, ev: &mut dyn Evaluator) -> Result<String> {
    let mut out = String::new();
    match v {
        Value::Func(f) => render_function(f, None, ev, &mut out)?,
        other => {
            out.push_str(&other.to_string());
            out.push('\n');
        }
    }
    Ok(out)
}

fn render_function(
    f: &FunctionValue,
    title: Option<&str>,
    ev: &mut dyn Evaluator,
    out: &mut String,
) -> Result<()> {
    if f.kind() == FnKind::Database {
        let members = match f.mappings(ev) {
            Ok(m) => m,
            Err(Error::NotEnumerable(_)) => return opaque(f, title, out),
            Err(e) => return Err(e),
        };
        if members.is_empty() {
            if let Some(t) = title {
                out.push_str(&format!("== {t} ==\n"));
            }
            out.push_str("(empty database)\n");
        }
        for (i, (key, member)) in members.iter().enumerate() {
            let name = key.iter().map(cell).collect::<Vec<_>>().join(", ");
            let name = match title {
                Some(t) => format!("{t}.{name}"),
                None => name,
            };
            if i > 0 {
                out.push('\n');
            }
            match member {
                Value::Func(m) => render_function(m, Some(&name), ev, out)?,
                other => {
                    out.push_str(&format!("== {name} ==\n{}\n", cell(other)));
                }
            }
        }
        return Ok(());
    }
    if let Some(t) = title {
        out.push_str(&format!("== {t} ==\n"));
    }
    let rows = match f.mappings(ev) {
        Ok(r) => r,
        Err(Error::NotEnumerable(_)) => return opaque(f, None, out),
        Err(e) => return Err(e),
    };
    if f.kind() == FnKind::Tuple {
        let header: Vec<String> = rows.iter().map(|(k, _)| key_text(k)).collect();
        let cells: Vec<String> = rows.iter().map(|(_, v)| cell(v)).collect();
        table(&header, &[cells], out);
        return Ok(());
    }

    let mut header: Vec<String> = f.sig().names().map(str::to_string).collect();
    let tuples = rows
        .iter()
        .all(|(_, v)| matches!(v, Value::Func(t) if t.kind() == FnKind::Tuple));
    let attrs: Vec<String> = if tuples && !rows.is_empty() {
        let mut set = BTreeSet::new();
        for (_, v) in &rows {
            if let Value::Func(t) = v {
                for (k, _) in t.mappings(ev)? {
                    set.insert(key_text(&k));
                }
            }
        }
        set.into_iter().collect()
    } else {
        vec!["value".to_string()]
    };
    // an attribute repeating a key column with the same values is shown once
    let mut shown = Vec::new();
    for a in &attrs {
        let Some(i) = header.iter().position(|h| h == a).filter(|_| tuples) else {
            shown.push(a.clone());
            continue;
        };
        let mut same = true;
        for (key, v) in &rows {
            if let Value::Func(t) = v {
                match t.apply(&[Value::text(a.as_str())], ev) {
                    Ok(x) if crate::eval::values_equal(&x, &key[i]) => {}
                    Ok(_) | Err(Error::UndefinedInput(_)) => same = false,
                    Err(e) => return Err(e),
                }
            }
        }
        if !same {
            header[i] = format!("{a} (key)");
            shown.push(a.clone());
        }
    }
    let attrs = shown;
    header.extend(attrs.iter().cloned());
    let mut body = Vec::with_capacity(rows.len());
    for (key, v) in &rows {
        let mut line: Vec<String> = key.iter().map(cell).collect();
        match v {
            Value::Func(t) if tuples => {
                for a in &attrs {
                    let value = match t.apply(&[Value::text(a.as_str())], ev) {
                        Ok(x) => cell(&x),
                        Err(Error::UndefinedInput(_)) => String::new(),
                        Err(e) => return Err(e),
                    };
                    line.push(value);
                }
            }
            other => line.push(cell(other)),
        }
        body.push(line);
    }
    table(&header, &body, out);
    Ok(())
}

fn opaque(f: &FunctionValue, title: Option<&str>, out: &mut String) -> Result<()> {
    if let Some(t) = title {
        out.push_str(&format!("== {t} ==\n"));
    }
    out.push_str(&Value::func(f.clone()).to_string());
    out.push('\n');
    Ok(())
}

fn key_text(k: &[Value]) -> String {
    k.iter().map(cell).collect::<Vec<_>>().join(", ")
}

fn cell(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        Value::Float(x) => format_float(x.0),
        other => inline(other),
    }
}

/// Nested values inside a cell: sets and tuples spelled out as literals.
fn inline(v: &Value) -> String {
    match v {
        Value::Set(items) => {
            let inner: Vec<String> = items.iter().map(inline).collect();
            format!("{{{}}}", inner.join(", "))
        }
        Value::Func(f) if f.kind() == FnKind::Tuple => match f.extensional_map() {
            Some(m) => {
                let inner: Vec<String> = m
                    .iter()
                    .map(|(k, x)| format!("{}: {}", key_text(k), inline(x)))
                    .collect();
                format!("({})", inner.join(", "))
            }
            None => v.to_string(),
        },
        other => other.to_string(),
    }
}

fn table(header: &[String], rows: &[Vec<String>], out: &mut String) {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            widths[i] = widths[i].max(width(c));
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - width(c))))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    out.push_str(&line(header));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    let n = rows.len();
    out.push_str(&format!("({n} {})\n", if n == 1 { "row" } else { "rows" }));
}
