//! The functional data model: values, domain constraints, function values
//! and catalogs.

pub mod catalog;
pub mod domain;
pub mod function;
pub mod rnd;
pub mod value;

pub use catalog::{root_sig, Catalog, Entry, RelationshipDecl, Snapshot, ViewDef, ROOT_NAME};
pub use domain::{BaseType, ConstraintForm, DomainConstraint, Param, ParamSig};
pub use function::{
    Body, Case, CaseBody, Closure, Evaluator, FnKind, FunctionValue, Key, StaticEval,
};
pub use rnd::rnd_str;
pub use value::{Float, ScalarType, Value};
