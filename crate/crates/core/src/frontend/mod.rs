//! Lexing, parsing, printing and elaboration of the supported Verilog subset.

pub mod ast;
mod elaborate;
mod lexer;
mod parser;
pub mod printer;

use std::fmt;

pub use elaborate::{elaborate, find_top};
pub use parser::{const_value, parse, range_width};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A frontend diagnostic. Rendered as `file:line:col: severity: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Option<Pos>,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic {
            pos: Some(pos),
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn unsupported(pos: Pos, what: &str) -> Self {
        Diagnostic::error(pos, format!("unsupported feature: {what}"))
    }

    pub fn global(message: impl Into<String>) -> Self {
        Diagnostic {
            pos: None,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn render(&self, file: &str) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.pos {
            Some(p) => format!("{file}:{}:{}: {sev}: {}", p.line, p.col, self.message),
            None => format!("{file}: {sev}: {}", self.message),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("<input>"))
    }
}

impl std::error::Error for Diagnostic {}
