//! The query expression tree.
//!
//! Expressions are nested applications of operators to functions. Operator
//! configuration (grouping attributes, aggregate specs, join conditions) lives
//! in [`Operator`]; operands are child expressions, with the data input always
//! in last position.

use std::collections::BTreeSet;
use std::fmt;

use crate::model::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Builtin {
    /// Seeded pseudo-random 8-letter string.
    RndStr,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::RndStr => "rnd_str",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AggKind {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggKind {
    pub fn name(self) -> &'static str {
        match self {
            AggKind::Count => "Count",
            AggKind::Sum => "Sum",
            AggKind::Min => "Min",
            AggKind::Max => "Max",
            AggKind::Avg => "Avg",
        }
    }

    pub fn from_name(name: &str) -> Option<AggKind> {
        Some(match name {
            "Count" => AggKind::Count,
            "Sum" => AggKind::Sum,
            "Min" => AggKind::Min,
            "Max" => AggKind::Max,
            "Avg" => AggKind::Avg,
            _ => return None,
        })
    }
}

/// One output attribute of an aggregation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AggSpec {
    pub out: String,
    pub kind: AggKind,
    /// Source attribute; absent for `Count`.
    pub attr: Option<String>,
}

impl AggSpec {
    pub fn count(out: impl Into<String>) -> Self {
        AggSpec {
            out: out.into(),
            kind: AggKind::Count,
            attr: None,
        }
    }

    pub fn over(out: impl Into<String>, kind: AggKind, attr: impl Into<String>) -> Self {
        AggSpec {
            out: out.into(),
            kind,
            attr: Some(attr.into()),
        }
    }
}

/// How grouping keys are derived.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupBy {
    /// One key component per named attribute.
    Attrs(Vec<String>),
    /// A key function, passed as the first operand.
    KeyFn,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupingSet {
    pub by: Vec<String>,
    pub aggs: Vec<AggSpec>,
    pub name: String,
}

/// `relation.column`, where the column is a key parameter or an attribute.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColRef {
    pub relation: String,
    pub column: String,
}

impl ColRef {
    pub fn new(relation: impl Into<String>, column: impl Into<String>) -> Self {
        ColRef {
            relation: relation.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JoinPair {
    pub left: ColRef,
    pub right: ColRef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SetOpKind {
    Union,
    Intersect,
    Minus,
    Difference,
}

impl SetOpKind {
    pub fn name(self) -> &'static str {
        match self {
            SetOpKind::Union => "union",
            SetOpKind::Intersect => "intersect",
            SetOpKind::Minus => "minus",
            SetOpKind::Difference => "difference",
        }
    }
}

/// Operator kinds without their configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperatorKind {
    Filter,
    Group,
    Aggregate,
    GroupAndAggregate,
    GroupingSets,
    Join,
    OuterMark,
    ReduceDB,
    SetOp(SetOpKind),
    DeepCopy,
    Copy,
    MapMember,
}

/// A configured operator. Operands are kept beside it in [`Expr::Op`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    /// `[predicate, input]`
    Filter,
    /// `[input]`, or `[key_fn, input]` with [`GroupBy::KeyFn`]
    Group(GroupBy),
    /// `[groups]`
    Aggregate(Vec<AggSpec>),
    /// `[input]`, or `[key_fn, input]`
    GroupAndAggregate(GroupBy, Vec<AggSpec>),
    /// `[input]`
    GroupingSets(Vec<GroupingSet>),
    /// `[database]`
    Join(Option<Vec<JoinPair>>),
    /// `[database]`
    OuterMark(Vec<String>),
    /// `[database]`
    ReduceDb,
    /// `[left, right]`
    SetOp(SetOpKind),
    /// `[value]`
    DeepCopy,
    /// `[value]`; the materialization marker for view assignment.
    Copy,
    /// `[database, function]`: replace one member by the function applied to it.
    MapMember(String),
}

impl Operator {
    pub fn kind(&self) -> OperatorKind {
        match self {
            Operator::Filter => OperatorKind::Filter,
            Operator::Group(_) => OperatorKind::Group,
            Operator::Aggregate(_) => OperatorKind::Aggregate,
            Operator::GroupAndAggregate(..) => OperatorKind::GroupAndAggregate,
            Operator::GroupingSets(_) => OperatorKind::GroupingSets,
            Operator::Join(_) => OperatorKind::Join,
            Operator::OuterMark(_) => OperatorKind::OuterMark,
            Operator::ReduceDb => OperatorKind::ReduceDB,
            Operator::SetOp(k) => OperatorKind::SetOp(*k),
            Operator::DeepCopy => OperatorKind::DeepCopy,
            Operator::Copy => OperatorKind::Copy,
            Operator::MapMember(_) => OperatorKind::MapMember,
        }
    }

    /// Number of operands the operator takes.
    pub fn arity(&self) -> usize {
        match self {
            Operator::Filter | Operator::SetOp(_) | Operator::MapMember(_) => 2,
            Operator::Group(GroupBy::KeyFn) | Operator::GroupAndAggregate(GroupBy::KeyFn, _) => 2,
            _ => 1,
        }
    }

    /// Surface name of the operator.
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Filter => "filter",
            Operator::Group(_) => "group",
            Operator::Aggregate(_) => "aggregate",
            Operator::GroupAndAggregate(..) => "group_and_aggregate",
            Operator::GroupingSets(_) => "grouping_sets",
            Operator::Join(_) => "join",
            Operator::OuterMark(_) => "subdatabase",
            Operator::ReduceDb => "reduce_DB",
            Operator::SetOp(k) => k.name(),
            Operator::DeepCopy => "deep_copy",
            Operator::Copy => "copy",
            Operator::MapMember(_) => "map_member",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Expr {
    Lit(Value),
    /// A name followed by dotted member accesses; `Ref(["DB", "customers"])`
    /// reads as `DB("customers")`.
    Ref(Vec<String>),
    /// A lambda parameter.
    Param(String),
    Apply(Box<Expr>, Vec<Expr>),
    Lambda(Vec<String>, Box<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    In(Box<Expr>, Box<Expr>),
    /// Tuple function literal.
    Record(Vec<(String, Expr)>),
    /// Finite set literal.
    List(Vec<Expr>),
    Builtin(Builtin, Vec<Expr>),
    Op(Operator, Vec<Expr>),
}

impl Expr {
    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Lit(v.into())
    }

    pub fn name(n: impl Into<String>) -> Expr {
        Expr::Ref(vec![n.into()])
    }

    pub fn path<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Expr {
        Expr::Ref(segments.into_iter().map(Into::into).collect())
    }

    pub fn param(n: impl Into<String>) -> Expr {
        Expr::Param(n.into())
    }

    pub fn apply(f: Expr, args: Vec<Expr>) -> Expr {
        Expr::Apply(Box::new(f), args)
    }

    /// `e("attr")`
    pub fn attr(e: Expr, attr: impl Into<String>) -> Expr {
        Expr::apply(e, vec![Expr::Lit(Value::Text(attr.into()))])
    }

    pub fn lambda<S: Into<String>>(params: impl IntoIterator<Item = S>, body: Expr) -> Expr {
        Expr::Lambda(params.into_iter().map(Into::into).collect(), Box::new(body))
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::BinOp(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn in_(needle: Expr, haystack: Expr) -> Expr {
        Expr::In(Box::new(needle), Box::new(haystack))
    }

    pub fn op(op: Operator, inputs: Vec<Expr>) -> Expr {
        Expr::Op(op, inputs)
    }

    pub fn filter(pred: Expr, input: Expr) -> Expr {
        Expr::Op(Operator::Filter, vec![pred, input])
    }

    /// Immediate sub-expressions, in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Lit(_) | Expr::Ref(_) | Expr::Param(_) => Vec::new(),
            Expr::Apply(f, args) => std::iter::once(f.as_ref()).chain(args).collect(),
            Expr::Lambda(_, body) | Expr::Not(body) => vec![body],
            Expr::BinOp(_, l, r) | Expr::In(l, r) => vec![l, r],
            Expr::Record(fields) => fields.iter().map(|(_, e)| e).collect(),
            Expr::List(items) | Expr::Builtin(_, items) | Expr::Op(_, items) => {
                items.iter().collect()
            }
        }
    }

    /// Rebuilds the node with each child replaced by `f(child)`.
    pub fn map_children(self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        match self {
            e @ (Expr::Lit(_) | Expr::Ref(_) | Expr::Param(_)) => e,
            Expr::Apply(fun, args) => Expr::Apply(
                Box::new(f(*fun)),
                args.into_iter().map(&mut *f).collect(),
            ),
            Expr::Lambda(ps, body) => Expr::Lambda(ps, Box::new(f(*body))),
            Expr::Not(body) => Expr::Not(Box::new(f(*body))),
            Expr::BinOp(op, l, r) => Expr::BinOp(op, Box::new(f(*l)), Box::new(f(*r))),
            Expr::In(l, r) => Expr::In(Box::new(f(*l)), Box::new(f(*r))),
            Expr::Record(fields) => {
                Expr::Record(fields.into_iter().map(|(n, e)| (n, f(e))).collect())
            }
            Expr::List(items) => Expr::List(items.into_iter().map(&mut *f).collect()),
            Expr::Builtin(b, items) => Expr::Builtin(b, items.into_iter().map(&mut *f).collect()),
            Expr::Op(op, items) => Expr::Op(op, items.into_iter().map(&mut *f).collect()),
        }
    }

    /// Names referenced but not bound inside the expression: the heads of
    /// `Ref` paths, minus lambda parameters in scope.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_free(self, &mut Vec::new(), &mut out);
        out
    }

    /// Parameter names referenced but not bound inside the expression.
    pub fn free_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_free_params(self, &mut Vec::new(), &mut out);
        out
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

fn collect_free(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match e {
        Expr::Ref(path) => {
            if let Some(head) = path.first() {
                if !bound.contains(head) {
                    out.insert(head.clone());
                }
            }
        }
        Expr::Lambda(params, body) => {
            let n = bound.len();
            bound.extend(params.iter().cloned());
            collect_free(body, bound, out);
            bound.truncate(n);
        }
        _ => {
            for c in e.children() {
                collect_free(c, bound, out);
            }
        }
    }
}

fn collect_free_params(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match e {
        Expr::Param(p) => {
            if !bound.contains(p) {
                out.insert(p.clone());
            }
        }
        Expr::Lambda(params, body) => {
            let n = bound.len();
            bound.extend(params.iter().cloned());
            collect_free_params(body, bound, out);
            bound.truncate(n);
        }
        _ => {
            for c in e.children() {
                collect_free_params(c, bound, out);
            }
        }
    }
}
