use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DslErrorKind {
    Lex,
    Syntax,
    Arity,
    Unresolved,
    Duplicate,
}

impl DslErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DslErrorKind::Lex => "lex",
            DslErrorKind::Syntax => "syntax",
            DslErrorKind::Arity => "arity",
            DslErrorKind::Unresolved => "unresolved-symbol",
            DslErrorKind::Duplicate => "duplicate-name",
        }
    }
}

/// Parse failure with the 1-based position of the offending token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DslError {
    pub kind: DslErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} error at line {}, column {}: {}",
            self.kind.as_str(),
            self.line,
            self.column,
            self.message
        )
    }
}

impl std::error::Error for DslError {}
