use std::collections::BTreeMap;
use std::sync::Arc;

use super::domain::{BaseType, DomainConstraint, ParamSig};
use super::function::FunctionValue;
use super::value::Value;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Name under which the database function itself is reachable.
pub const ROOT_NAME: &str = "DB";

/// Signature of the database function: relation name to relation.
pub fn root_sig() -> ParamSig {
    ParamSig::single("name", DomainConstraint::of(BaseType::Text))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewDef {
    pub name: String,
    pub expr: Expr,
    pub materialized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Stored(Value),
    /// Re-evaluated against the reader's snapshot on every access.
    View(ViewDef),
    /// Evaluated once at assignment; the definition is kept for reference.
    Materialized { def: ViewDef, value: Value },
}

/// A relationship among functions through a relationship function whose
/// parameters share their domains with the participants' parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationshipDecl {
    pub name: String,
    /// The relationship function.
    pub function: String,
    /// `(function name, parameter name)` of each participant.
    pub participants: Vec<(String, String)>,
    pub is_predicate: bool,
}

impl RelationshipDecl {
    pub fn new(function: impl Into<String>, participants: Vec<(String, String)>) -> Self {
        let function = function.into();
        RelationshipDecl {
            name: function.clone(),
            function,
            participants,
            is_predicate: false,
        }
    }

    /// Index of the relationship function parameter paired with the
    /// `i`-th participant: the parameter of the same name if there is one,
    /// otherwise the one at the same position.
    pub fn paired_param(&self, rf_sig: &ParamSig, i: usize) -> Option<usize> {
        let (_, pname) = self.participants.get(i)?;
        rf_sig
            .position(pname)
            .or_else(|| (i < rf_sig.arity()).then_some(i))
    }
}

/// The named functions of one database version plus its relationships.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<String, Entry>,
    relationships: Vec<RelationshipDecl>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &BTreeMap<String, Entry> {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn relationships(&self) -> &[RelationshipDecl] {
        &self.relationships
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.relationships.is_empty()
    }

    /// Binds `name` to a stored value, replacing any previous binding.
    pub fn set_stored(&mut self, name: impl Into<String>, value: Value) -> Result<()> {
        let name = check_name(name.into())?;
        self.entries.insert(name, Entry::Stored(value));
        Ok(())
    }

    pub fn set_entry(&mut self, name: impl Into<String>, entry: Entry) -> Result<()> {
        let name = check_name(name.into())?;
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Entry> {
        self.entries.remove(name)
    }

    /// The stored (or materialized) function bound to `name`, if any.
    pub fn stored_function(&self, name: &str) -> Option<&Arc<FunctionValue>> {
        match self.entries.get(name)? {
            Entry::Stored(Value::Func(f)) | Entry::Materialized { value: Value::Func(f), .. } => {
                Some(f)
            }
            _ => None,
        }
    }

    /// Adds a relationship after checking that every participant parameter
    /// exists and has exactly the domain of its paired relationship function
    /// parameter.
    pub fn add_relationship(&mut self, decl: RelationshipDecl) -> Result<()> {
        self.check_relationship(&decl)?;
        self.relationships.push(decl);
        Ok(())
    }

    fn sig_of(&self, name: &str) -> Result<ParamSig> {
        if name == ROOT_NAME {
            return Ok(root_sig());
        }
        self.stored_function(name)
            .map(|f| f.sig().clone())
            .ok_or_else(|| Error::Schema(format!("relationship refers to unknown function {name:?}")))
    }

    fn check_relationship(&self, decl: &RelationshipDecl) -> Result<()> {
        let rf_sig = self.sig_of(&decl.function)?;
        if decl.participants.is_empty() {
            return Err(Error::Schema(format!(
                "relationship {:?} has no participants",
                decl.name
            )));
        }
        for (i, (fname, pname)) in decl.participants.iter().enumerate() {
            let sig = self.sig_of(fname)?;
            let pos = sig.position(pname).ok_or_else(|| {
                Error::Schema(format!("{fname} has no parameter {pname:?}"))
            })?;
            let rf_pos = decl.paired_param(&rf_sig, i).ok_or_else(|| {
                Error::Schema(format!(
                    "{} has no parameter paired with {fname}.{pname}",
                    decl.function
                ))
            })?;
            let ours = &sig.params()[pos].constraint;
            let theirs = &rf_sig.params()[rf_pos].constraint;
            if ours != theirs {
                return Err(Error::Schema(format!(
                    "{fname}.{pname} ({ours}) and {}.{} ({theirs}) do not share a domain",
                    decl.function,
                    rf_sig.params()[rf_pos].name
                )));
            }
        }
        Ok(())
    }
}

fn check_name(name: String) -> Result<String> {
    if name == ROOT_NAME {
        return Err(Error::Schema(format!("{ROOT_NAME} is reserved for the database function")));
    }
    if name.is_empty() {
        return Err(Error::Schema("empty relation name".into()));
    }
    Ok(name)
}

/// One immutable database version. Everything read through a snapshot
/// observes that version.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub version: u64,
    pub catalog: Arc<Catalog>,
}

impl Snapshot {
    pub fn new(version: u64, catalog: Catalog) -> Self {
        Snapshot {
            version,
            catalog: Arc::new(catalog),
        }
    }

    /// Snapshot of a catalog outside any store, at version 0.
    pub fn detached(catalog: Catalog) -> Self {
        Self::new(0, catalog)
    }
}
