//! Structural validation reports.
//!
//! Validators return every violation they find rather than stopping at the
//! first, each tagged with a JSON-pointer-like path into the offending
//! document and a machine-matchable code.

use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyGraphs,
    WeightRange,
    WeightSum,
    DuplicateGraphName,
    DuplicateNodeId,
    MissingEntry,
    MissingExit,
    DanglingEdge,
    Cycle,
    Unreachable,
    InvalidField,
    UnsupportedKnob,
    EmptyDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Dotted path into the document, e.g. `graphs[0].graph.nodes[2].top_k`.
    pub path: String,
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(
        &mut self,
        path: impl Into<String>,
        code: ViolationCode,
        message: impl Into<String>,
    ) {
        self.violations.push(Violation::new(path, code, message));
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
