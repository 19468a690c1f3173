//! Canonical text for expressions and statements. Parsing the output yields
//! the same tree.

use super::parser::{is_keyword, OPERATOR_NAMES};
use super::{Mutation, Script, Stmt};
use crate::expr::{AggSpec, BinOp, Expr, GroupBy, Operator};
use crate::model::value::{format_float, quote_text};
use crate::model::{Value, ROOT_NAME};

const LAMBDA: u8 = 0;
const OR: u8 = 1;
const AND: u8 = 2;
const NOT: u8 = 3;
const CMP: u8 = 4;
const ADD: u8 = 5;
const MUL: u8 = 6;
const UNARY: u8 = 7;
const POSTFIX: u8 = 8;

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, LAMBDA, &mut out);
    out
}

pub fn print_stmt(s: &Stmt) -> String {
    match s {
        Stmt::Let { name, expr } => format!("{name} = {}", print_expr(expr)),
        Stmt::SetMember { var, member, expr } => {
            format!("{var}.{member} = {}", print_expr(expr))
        }
        Stmt::Assign { name, expr } => {
            if is_plain_ident(name) {
                format!("{ROOT_NAME}.{name} := {}", print_expr(expr))
            } else {
                format!("{ROOT_NAME}({}) := {}", quote_text(name), print_expr(expr))
            }
        }
        Stmt::Mutate { target, mutation } => {
            let t = postfix(target);
            match mutation {
                Mutation::SetTuple { key, value } => {
                    format!("{t}[{}] = {}", list(key), print_expr(value))
                }
                Mutation::SetAttr {
                    key,
                    attr,
                    op,
                    value,
                } => {
                    let sym = match op {
                        None => "=",
                        Some(BinOp::Add) => "+=",
                        Some(BinOp::Sub) => "-=",
                        Some(other) => other.symbol(),
                    };
                    format!(
                        "{t}[{}][{}] {sym} {}",
                        list(key),
                        print_expr(attr),
                        print_expr(value)
                    )
                }
                Mutation::Add { value } => format!("{t}.add({})", print_expr(value)),
                Mutation::Delete { key } => format!("del {t}[{}]", list(key)),
            }
        }
        Stmt::Expr(e) => print_expr(e),
        Stmt::Begin => "begin".into(),
        Stmt::Commit => "commit".into(),
        Stmt::Rollback => "rollback".into(),
        Stmt::Show(e) => format!("show {}", print_expr(e)),
        Stmt::Explain(e) => format!("explain {}", print_expr(e)),
        Stmt::Load(p) => format!("load {}", quote_text(p)),
        Stmt::Save(p) => format!("save {}", quote_text(p)),
    }
}

pub fn print_script(s: &Script) -> String {
    let mut out = String::new();
    for st in &s.stmts {
        out.push_str(&print_stmt(&st.stmt));
        out.push('\n');
    }
    out
}

fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && !is_keyword(s)
}

fn postfix(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, POSTFIX, &mut out);
    out
}

fn list(items: &[Expr]) -> String {
    items.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Lambda(..) => LAMBDA,
        Expr::BinOp(op, ..) => match op {
            BinOp::Or => OR,
            BinOp::And => AND,
            BinOp::Add | BinOp::Sub => ADD,
            BinOp::Mul | BinOp::Div => MUL,
            _ => CMP,
        },
        Expr::Not(_) => NOT,
        Expr::In(..) => CMP,
        Expr::Lit(Value::Int(i)) if *i < 0 => UNARY,
        Expr::Lit(Value::Float(x)) if x.0.is_sign_negative() => UNARY,
        _ => POSTFIX,
    }
}

fn write_expr(e: &Expr, min: u8, out: &mut String) {
    let p = precedence(e);
    if p < min {
        out.push('(');
        write_expr(e, LAMBDA, out);
        out.push(')');
        return;
    }
    match e {
        Expr::Lit(v) => write_lit(v, out),
        Expr::Ref(path) => out.push_str(&path.join(".")),
        Expr::Param(p) => out.push_str(p),
        Expr::Apply(f, args) => {
            if let ([Expr::Lit(Value::Text(a))], false) =
                (args.as_slice(), matches!(f.as_ref(), Expr::Ref(_)))
            {
                if is_plain_ident(a) {
                    write_expr(f, POSTFIX, out);
                    out.push('.');
                    out.push_str(a);
                    return;
                }
            }
            write_expr(f, POSTFIX, out);
            write_args(args.iter().map(|a| (None, a)), out);
        }
        Expr::Lambda(params, body) => {
            out.push_str("fn(");
            out.push_str(&params.join(", "));
            out.push_str(") => ");
            write_expr(body, LAMBDA, out);
        }
        Expr::BinOp(op, l, r) => {
            write_expr(l, p, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(r, p + 1, out);
        }
        Expr::Not(x) => {
            out.push_str("not ");
            write_expr(x, NOT, out);
        }
        Expr::In(l, r) => {
            write_expr(l, CMP, out);
            out.push_str(" in ");
            write_expr(r, CMP + 1, out);
        }
        Expr::Record(fields) => {
            out.push('{');
            for (i, (k, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if is_plain_ident(k) {
                    out.push_str(k);
                } else {
                    out.push_str(&quote_text(k));
                }
                out.push_str(": ");
                write_expr(v, LAMBDA, out);
            }
            out.push('}');
        }
        Expr::List(items) => {
            out.push('[');
            out.push_str(&list(items));
            out.push(']');
        }
        Expr::Builtin(b, args) => {
            out.push_str(b.name());
            write_args(args.iter().map(|a| (None, a)), out);
        }
        Expr::Op(op, inputs) => write_op(op, inputs, out),
    }
}

fn write_lit(v: &Value, out: &mut String) {
    match v {
        Value::Float(x) => out.push_str(&format_float(x.0)),
        Value::Text(s) => out.push_str(&quote_text(s)),
        other => out.push_str(&other.to_string()),
    }
}

fn write_args<'a>(args: impl IntoIterator<Item = (Option<&'a str>, &'a Expr)>, out: &mut String) {
    out.push('(');
    for (i, (k, a)) in args.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        if let Some(k) = k {
            out.push_str(k);
            out.push('=');
        }
        write_expr(a, LAMBDA, out);
    }
    out.push(')');
}

fn spec_text(s: &AggSpec) -> String {
    match &s.attr {
        Some(a) => format!("{}={}({})", s.out, s.kind.name(), quote_text(a)),
        None => format!("{}={}()", s.out, s.kind.name()),
    }
}

fn names_text(names: &[String]) -> String {
    let quoted: Vec<String> = names.iter().map(|n| quote_text(n)).collect();
    format!("[{}]", quoted.join(", "))
}

fn write_op(op: &Operator, inputs: &[Expr], out: &mut String) {
    debug_assert!(OPERATOR_NAMES.contains(&op.name()));
    let mut parts: Vec<String> = Vec::new();
    let exprs: Vec<String> = inputs.iter().map(print_expr).collect();
    match op {
        Operator::Filter | Operator::SetOp(_) => parts.extend(exprs),
        Operator::Group(by) => {
            match by {
                GroupBy::Attrs(a) => parts.push(format!("by={}", names_text(a))),
                GroupBy::KeyFn => {}
            }
            parts.extend(exprs);
        }
        Operator::Aggregate(specs) => {
            parts.extend(specs.iter().map(spec_text));
            parts.extend(exprs);
        }
        Operator::GroupAndAggregate(by, specs) => {
            let mut exprs = exprs.into_iter();
            match by {
                GroupBy::Attrs(a) => parts.push(format!("by={}", names_text(a))),
                GroupBy::KeyFn => parts.extend(exprs.next()),
            }
            parts.extend(specs.iter().map(spec_text));
            parts.extend(exprs);
        }
        Operator::GroupingSets(sets) => {
            let sets: Vec<String> = sets
                .iter()
                .map(|s| {
                    let mut fields = vec![format!("by={}", names_text(&s.by))];
                    fields.extend(s.aggs.iter().map(spec_text));
                    fields.push(format!("name={}", quote_text(&s.name)));
                    format!("({})", fields.join(", "))
                })
                .collect();
            parts.push(format!("[{}]", sets.join(", ")));
            parts.extend(exprs);
        }
        Operator::Join(on) => {
            parts.extend(exprs);
            if let Some(pairs) = on {
                let pairs: Vec<String> = pairs
                    .iter()
                    .map(|p| format!("[{}, {}]", p.left, p.right))
                    .collect();
                parts.push(format!("on=[{}]", pairs.join(", ")));
            }
        }
        Operator::OuterMark(names) => {
            parts.push(format!("outer={}", names_text(names)));
            parts.extend(exprs);
        }
        Operator::ReduceDb | Operator::DeepCopy | Operator::Copy => parts.extend(exprs),
        Operator::MapMember(member) => {
            let mut exprs = exprs.into_iter();
            parts.extend(exprs.next());
            parts.push(quote_text(member));
            parts.extend(exprs);
        }
    }
    out.push_str(op.name());
    out.push('(');
    out.push_str(&parts.join(", "));
    out.push(')');
}
