use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One violated invariant. `subjects` names the states, arcs, diagrams or
/// combos involved so callers can point at them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub subjects: Vec<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        if !self.subjects.is_empty() {
            write!(f, " [{}]", self.subjects.join(", "))?;
        }
        Ok(())
    }
}

/// Outcome of a structural check. Violations are data, not failures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn error(&mut self, code: &str, message: impl Into<String>, subjects: impl IntoIterator<Item = String>) {
        self.violations.push(Violation {
            severity: Severity::Error,
            code: code.to_owned(),
            message: message.into(),
            subjects: subjects.into_iter().collect(),
        });
    }

    pub fn warning(&mut self, code: &str, message: impl Into<String>, subjects: impl IntoIterator<Item = String>) {
        self.violations.push(Violation {
            severity: Severity::Warning,
            code: code.to_owned(),
            message: message.into(),
            subjects: subjects.into_iter().collect(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    /// Valid means no error-severity violations; warnings are allowed.
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    /// True when some violation message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let tag = match v.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            write!(f, "{tag}[{}]: {v}", v.code)?;
        }
        Ok(())
    }
}
