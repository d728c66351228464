//! Declarative hybrid model specifications: syntax tree, parser, canonical
//! printer and schema validation.

mod ast;
mod canonical;
mod error;
mod lexer;
mod parser;
mod schema;
mod validate;

pub use ast::*;
pub use canonical::{canonicalize, expr_to_string, fingerprint, format_number, structural_text, Fingerprint};
pub use error::{DslError, DslErrorKind};
pub use lexer::{lex_line, Token, TokenKind};
pub use parser::parse_model_spec;
pub use schema::{SchemaError, SystemSchema, VarSpec};
pub use validate::{format_violations, validate, Violation, MAX_OPTIMIZABLE_PARAMS};
