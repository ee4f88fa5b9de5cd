//! JSON report envelope shared by the CLI commands.

use crate::dolgopyat_harness::ConstantLedger;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// One asserted property of a command run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Assertion {
        Assertion { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub command: String,
    pub map: String,
    pub seed: u64,
    pub assertions: Vec<Assertion>,
    pub ledger: Option<ConstantLedger>,
    pub payload: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, map: String, seed: u64, ledger: Option<ConstantLedger>, payload: T) -> Report<T> {
        Report { schema_version: SCHEMA_VERSION, command: command.to_string(), map, seed, assertions: Vec::new(), ledger, payload }
    }

    pub fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, passed, detail));
    }

    pub fn first_failure(&self) -> Option<&Assertion> {
        self.assertions.iter().find(|a| !a.passed)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
