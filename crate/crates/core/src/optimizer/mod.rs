//! Rule-based rewriting of expressions.
//!
//! Rules are applied one at a time, innermost first, until none applies or
//! the step budget runs out. Rules whose validity depends on data (how a
//! predicate behaves on the rows it would newly see, which member owns an
//! attribute) check it against the snapshot the plan is made for, so a plan
//! is only valid for that snapshot.

mod rules;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::eval::{Bindings, Interpreter};
use crate::expr::Expr;
use crate::model::Snapshot;
use crate::surface::print_expr;

pub use rules::RULE_NAMES;

/// Default number of rule applications before giving up.
pub const DEFAULT_BUDGET: usize = 64;

/// What data-dependent guards may consult: the snapshot plus the bindings
/// free names resolve to.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub snapshot: &'a Snapshot,
    pub bindings: &'a Bindings,
}

impl Context<'_> {
    pub(crate) fn interpreter(&self) -> Interpreter<'_> {
        Interpreter::new(self.snapshot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub rule: &'static str,
    pub before: u64,
    pub after: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub expr: Expr,
    pub trace: Vec<Step>,
    /// Set when rules still applied after the budget was spent; `expr` is
    /// then the best plan so far.
    pub budget_exceeded: bool,
}

/// FNV-1a over the canonical text.
pub fn digest(e: &Expr) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in print_expr(e).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn rewrite(e: &Expr, ctx: Option<Context<'_>>) -> Plan {
    rewrite_with_budget(e, ctx, DEFAULT_BUDGET)
}

pub fn rewrite_with_budget(e: &Expr, ctx: Option<Context<'_>>, budget: usize) -> Plan {
    let mut cur = e.clone();
    let mut trace = Vec::new();
    // (node digest, rule) pairs already known not to apply
    let mut rejected: BTreeSet<(u64, &'static str)> = BTreeSet::new();
    loop {
        let mut applied = None;
        let next = rules::step(&cur, ctx, &mut rejected, &mut applied);
        let Some(rule) = applied else {
            return Plan {
                expr: cur,
                trace,
                budget_exceeded: false,
            };
        };
        if trace.len() == budget {
            return Plan {
                expr: cur,
                trace,
                budget_exceeded: true,
            };
        }
        trace.push(Step {
            rule,
            before: digest(&cur),
            after: digest(&next),
        });
        cur = next;
    }
}

pub fn explain(plan: &Plan) -> String {
    let mut out = String::new();
    if plan.trace.is_empty() {
        out.push_str("no rewrites\n");
    }
    for s in &plan.trace {
        let _ = writeln!(out, "{} {:016x} -> {:016x}", s.rule, s.before, s.after);
    }
    if plan.budget_exceeded {
        out.push_str("rewrite budget exceeded\n");
    }
    let _ = writeln!(out, "final: {}", print_expr(&plan.expr));
    out
}
