//! An embedded engine for a functional data model: tuples, relations and
//! databases are all function values, and every query operator maps
//! functions to functions.

pub mod engine;
pub mod error;
pub mod eval;
pub mod expr;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod ops;
pub mod persist;
pub mod surface;

pub use error::{Error, Result};
pub use eval::{eval, Bindings, Env, Interpreter};
pub use expr::{AggKind, AggSpec, BinOp, ColRef, Expr, GroupBy, GroupingSet, JoinPair, Operator, SetOpKind};
pub use model::{
    BaseType, Catalog, DomainConstraint, FnKind, FunctionValue, Key, Param, ParamSig, Snapshot,
    Value,
};
