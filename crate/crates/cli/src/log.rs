//! JSON-lines output: summaries on stdout, warnings and errors on stderr.

use std::io::Write;

use serde_json::{json, Value};

/// Collects warnings and invariant failures while a subcommand runs.
#[derive(Debug, Default)]
pub struct Log {
    pub warnings: usize,
    pub failures: usize,
}

impl Log {
    pub fn summary(&mut self, value: Value) {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{value}");
    }

    pub fn warn(&mut self, code: &str, message: impl Into<String>, detail: Value) {
        self.warnings += 1;
        emit("warning", code, &message.into(), detail);
    }

    /// A hard invariant did not hold; the process exits nonzero.
    pub fn fail(&mut self, code: &str, message: impl Into<String>, detail: Value) {
        self.failures += 1;
        emit("invariant", code, &message.into(), detail);
    }
}

pub fn error(message: &str) {
    emit("error", "error", message, Value::Null);
}

fn emit(level: &str, code: &str, message: &str, detail: Value) {
    let line = json!({ "level": level, "code": code, "message": message, "detail": detail });
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}
