use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// All failures raised by the engine. Evaluation paths (the interpreter and
/// the naive reference evaluator) are expected to agree on the variant for a
/// given invalid input, never on the message text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("undefined input: {0}")]
    UndefinedInput(String),
    #[error("arity error: expected {expected} argument(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("predicate error: {0}")]
    Predicate(String),
    #[error("unique violation: {0}")]
    UniqueViolation(String),
    #[error("not enumerable: {0}")]
    NotEnumerable(String),
    #[error("unknown name: {0}")]
    Name(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("empty aggregate: {0}")]
    EmptyAggregate(String),
    #[error("disconnected schema: {0}")]
    DisconnectedSchema(String),
    #[error("unresolvable join condition: {0}")]
    UnresolvableCondition(String),
    #[error("unknown relation: {0}")]
    UnknownRelation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("transaction state error: {0}")]
    TxState(String),
    #[error("write conflict: head advanced past the transaction's base version")]
    WriteConflict,
    #[error("read-only target: {0}")]
    ReadOnlyTarget(String),
    #[error("cyclic view: {0}")]
    CyclicView(String),
    #[error("parse error at {line}:{column}: {message}{}", expected_suffix(.expected))]
    Parse {
        line: usize,
        column: usize,
        message: String,
        expected: Vec<String>,
    },
    #[error("not serializable: {0}")]
    NotSerializable(String),
    #[error("rewrite budget exceeded after {0} passes")]
    RewriteBudgetExceeded(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected one of: {})", expected.join(", "))
    }
}

impl Error {
    /// Stable class name of the error, independent of its message.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::UndefinedInput(_) => "UndefinedInput",
            Error::Arity { .. } => "ArityError",
            Error::Predicate(_) => "PredicateError",
            Error::UniqueViolation(_) => "UniqueViolation",
            Error::NotEnumerable(_) => "NotEnumerable",
            Error::Name(_) => "NameError",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::DivisionByZero => "DivisionByZero",
            Error::Overflow => "Overflow",
            Error::EmptyAggregate(_) => "EmptyAggregate",
            Error::DisconnectedSchema(_) => "DisconnectedSchema",
            Error::UnresolvableCondition(_) => "UnresolvableCondition",
            Error::UnknownRelation(_) => "UnknownRelation",
            Error::Schema(_) => "SchemaError",
            Error::TxState(_) => "TxStateError",
            Error::WriteConflict => "WriteConflict",
            Error::ReadOnlyTarget(_) => "ReadOnlyTarget",
            Error::CyclicView(_) => "CyclicView",
            Error::Parse { .. } => "ParseError",
            Error::NotSerializable(_) => "NotSerializable",
            Error::RewriteBudgetExceeded(_) => "RewriteBudgetExceeded",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line,
            column,
            message: message.into(),
            expected: Vec::new(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
