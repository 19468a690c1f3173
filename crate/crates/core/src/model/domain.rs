use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::function::{Closure, Evaluator};
use super::value::{format_float, Float, Value};
use crate::error::{Error, Result};

/// Base type of a domain. `Any` admits every value and is used for
/// engine-built functions whose keys are not typed by a schema, such as
/// group keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseType {
    Int,
    Float,
    Text,
    Bool,
    Function,
    Any,
}

impl BaseType {
    pub fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (BaseType::Any, _)
                | (BaseType::Int, Value::Int(_))
                | (BaseType::Float, Value::Float(_))
                | (BaseType::Text, Value::Text(_))
                | (BaseType::Bool, Value::Bool(_))
                | (BaseType::Function, Value::Func(_))
        )
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, BaseType::Int | BaseType::Float)
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseType::Int => "int",
            BaseType::Float => "float",
            BaseType::Text => "text",
            BaseType::Bool => "bool",
            BaseType::Function => "function",
            BaseType::Any => "any",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintForm {
    Any,
    FiniteSet(BTreeSet<Value>),
    ClosedInterval(Float, Float),
    /// A one-parameter boolean function evaluated per candidate value.
    Predicate(Closure),
}

/// A base type plus a membership test. Used both to type function inputs
/// and outputs and to express integrity constraints.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DomainConstraint {
    base: BaseType,
    form: ConstraintForm,
}

impl DomainConstraint {
    pub fn any() -> Self {
        Self::of(BaseType::Any)
    }

    pub fn of(base: BaseType) -> Self {
        DomainConstraint {
            base,
            form: ConstraintForm::Any,
        }
    }

    pub fn finite_set(base: BaseType, values: impl IntoIterator<Item = Value>) -> Result<Self> {
        let values: BTreeSet<Value> = values.into_iter().collect();
        if let Some(bad) = values.iter().find(|v| !base.admits(v)) {
            return Err(Error::Domain(format!(
                "finite set member {bad} is not of base type {base}"
            )));
        }
        Ok(DomainConstraint {
            base,
            form: ConstraintForm::FiniteSet(values),
        })
    }

    pub fn closed_interval(base: BaseType, lo: f64, hi: f64) -> Result<Self> {
        if !base.is_numeric() {
            return Err(Error::Domain(format!(
                "interval constraint needs a numeric base type, got {base}"
            )));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!("empty interval [{lo}; {hi}]")));
        }
        Ok(DomainConstraint {
            base,
            form: ConstraintForm::ClosedInterval(Float(lo), Float(hi)),
        })
    }

    pub fn predicate(base: BaseType, pred: Closure) -> Result<Self> {
        if pred.params.len() != 1 {
            return Err(Error::Domain(format!(
                "predicate constraint takes exactly one parameter, got {}",
                pred.params.len()
            )));
        }
        Ok(DomainConstraint {
            base,
            form: ConstraintForm::Predicate(pred),
        })
    }

    pub fn base(&self) -> BaseType {
        self.base
    }

    pub fn form(&self) -> &ConstraintForm {
        &self.form
    }

    /// Membership test. Values of the wrong base type are simply not members.
    pub fn contains(&self, v: &Value, ev: &mut dyn Evaluator) -> Result<bool> {
        if !self.base.admits(v) {
            return Ok(false);
        }
        match &self.form {
            ConstraintForm::Any => Ok(true),
            ConstraintForm::FiniteSet(values) => Ok(values.contains(v)),
            ConstraintForm::ClosedInterval(lo, hi) => Ok(v
                .as_f64()
                .is_some_and(|x| lo.0 <= x && x <= hi.0)),
            ConstraintForm::Predicate(pred) => match ev.call(pred, std::slice::from_ref(v)) {
                Ok(Value::Bool(b)) => Ok(b),
                Ok(other) => Err(Error::Predicate(format!(
                    "domain predicate returned {} instead of bool",
                    other.type_name()
                ))),
                Err(e) => Err(Error::Predicate(format!("domain predicate failed: {e}"))),
            },
        }
    }

    /// Enumerates the admissible values when there are finitely many.
    pub fn finite_values(&self) -> Option<Vec<Value>> {
        match (&self.form, self.base) {
            (ConstraintForm::FiniteSet(values), _) => Some(values.iter().cloned().collect()),
            (ConstraintForm::Any, BaseType::Bool) => {
                Some(vec![Value::Bool(false), Value::Bool(true)])
            }
            (ConstraintForm::ClosedInterval(lo, hi), BaseType::Int) => {
                let (lo, hi) = (lo.0.ceil(), hi.0.floor());
                if hi - lo > 1_000_000.0 {
                    return None;
                }
                Some(((lo as i64)..=(hi as i64)).map(Value::Int).collect())
            }
            _ => None,
        }
    }
}

impl fmt::Display for DomainConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        match &self.form {
            ConstraintForm::Any => Ok(()),
            ConstraintForm::FiniteSet(values) => {
                f.write_str(" in {")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            ConstraintForm::ClosedInterval(lo, hi) => {
                write!(f, " in [{}; {}]", format_float(lo.0), format_float(hi.0))
            }
            ConstraintForm::Predicate(_) => f.write_str(" where <predicate>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Param {
    pub name: String,
    pub constraint: DomainConstraint,
}

impl Param {
    pub fn new(name: impl Into<String>, constraint: DomainConstraint) -> Self {
        Param {
            name: name.into(),
            constraint,
        }
    }
}

/// Ordered, uniquely named parameter list of a function.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamSig(Vec<Param>);

impl ParamSig {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Schema(format!("duplicate parameter name {:?}", p.name)));
            }
        }
        Ok(ParamSig(params))
    }

    /// Single-parameter signature.
    pub fn single(name: impl Into<String>, constraint: DomainConstraint) -> Self {
        ParamSig(vec![Param::new(name, constraint)])
    }

    pub fn params(&self) -> &[Param] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|p| p.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|p| p.name == name)
    }
}
