//! The textual query language: scripts of statements over expressions
//! written as nested calls, with lambdas, dot access and indexing.

pub mod lexer;
pub mod parser;
pub mod printer;
pub mod render;
pub mod runner;

use crate::expr::{BinOp, Expr};

pub use parser::{parse_expr, parse_script};
pub use printer::{print_expr, print_script, print_stmt};
pub use render::render_value;
pub use runner::{Runner, ScriptError};

/// Mutation applied to a relation of the database.
#[derive(Clone, Debug, PartialEq)]
pub enum Mutation {
    /// `target[k] = value`
    SetTuple { key: Vec<Expr>, value: Expr },
    /// `target[k][attr] = value`, or `op=` when `op` is set.
    SetAttr {
        key: Vec<Expr>,
        attr: Expr,
        op: Option<BinOp>,
        value: Expr,
    },
    /// `target.add(value)`
    Add { value: Expr },
    /// `del target[k]`
    Delete { key: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    /// `name = expr`
    Let { name: String, expr: Expr },
    /// `var.member = expr`: replaces one member of a script variable.
    SetMember {
        var: String,
        member: String,
        expr: Expr,
    },
    /// `DB.name := expr`; materialized when `expr` is `copy(...)`.
    Assign { name: String, expr: Expr },
    Mutate { target: Expr, mutation: Mutation },
    Expr(Expr),
    Begin,
    Commit,
    Rollback,
    Show(Expr),
    Explain(Expr),
    Load(String),
    Save(String),
}

/// A statement and the line it starts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Spanned {
    pub line: usize,
    pub stmt: Stmt,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Script {
    pub stmts: Vec<Spanned>,
}
