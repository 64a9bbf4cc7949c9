//! Summary envelope and file output.
//!
//! Every command builds its outputs in memory first; files are then written
//! to temporaries and renamed into place, so a failed run leaves nothing
//! behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use spreadlab::Budget;

use crate::args::{BudgetArgs, Command};
use crate::error::CliError;

pub const SCHEMA: u32 = 1;

pub const BUDGET_ENV: &str = "SPREADLAB_BUDGET";

#[derive(Serialize)]
pub struct Summary<'a> {
    pub schema: u32,
    pub command: &'a str,
    pub metadata: Metadata<'a>,
    pub checks: Checks,
    pub result: Value,
}

#[derive(Serialize)]
pub struct Metadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    /// Base of every logarithm in the report.
    pub log: &'static str,
    pub budget: BudgetView,
    pub args: &'a Command,
}

#[derive(Serialize)]
pub struct BudgetView {
    pub pairs: u128,
    pub spread_candidates: u128,
    pub enumeration_bits: u32,
    pub planted_work: u128,
    pub members: u128,
}

impl From<&Budget> for BudgetView {
    fn from(b: &Budget) -> Self {
        BudgetView {
            pairs: b.pairs,
            spread_candidates: b.spread_candidates,
            enumeration_bits: b.enumeration_bits,
            planted_work: b.planted_work,
            members: b.members,
        }
    }
}

/// Bound checks made by the command. Any violation gives exit status 2.
#[derive(Debug, Default, Serialize)]
pub struct Checks {
    pub violated: bool,
    pub violations: Vec<String>,
}

impl Checks {
    pub fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.violated = true;
            self.violations.push(what.into());
        }
    }
}

/// What a command produced, not yet written anywhere.
pub struct Output {
    pub result: Value,
    pub checks: Checks,
    pub files: Vec<(PathBuf, Vec<u8>)>,
    /// Replaces the JSON summary on standard output.
    pub stdout_override: Option<String>,
}

impl Output {
    pub fn new(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Output {
            result: serde_json::to_value(result)?,
            checks: Checks::default(),
            files: Vec::new(),
            stdout_override: None,
        })
    }
}

fn parse_cap(key: &str, value: &str) -> Result<u128, CliError> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{BUDGET_ENV}: bad value {value:?} for {key}")))?;
    if !(v.is_finite() && v >= 1.0) {
        return Err(CliError::Usage(format!("{BUDGET_ENV}: {key} must be at least 1")));
    }
    Ok(v as u128)
}

fn flag_cap(name: &str, v: Option<f64>) -> Result<Option<u128>, CliError> {
    match v {
        Some(v) if v.is_finite() && v >= 1.0 => Ok(Some(v as u128)),
        Some(v) => Err(CliError::Usage(format!("--{name} must be at least 1, got {v}"))),
        None => Ok(None),
    }
}

/// Library defaults, then `SPREADLAB_BUDGET`, then flags.
pub fn resolve_budget(flags: &BudgetArgs, env: Option<&str>) -> Result<Budget, CliError> {
    let mut b = Budget::default();
    if let Some(env) = env {
        for item in env.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{BUDGET_ENV}: expected key=value, got {item:?}")))?;
            let cap = parse_cap(key, value)?;
            match key.trim() {
                "pairs" => b.pairs = cap,
                "candidates" => b.spread_candidates = cap,
                "bits" => b.enumeration_bits = cap.min(30) as u32,
                "work" => b.planted_work = cap,
                "members" => b.members = cap,
                other => return Err(CliError::Usage(format!("{BUDGET_ENV}: unknown key {other:?}"))),
            }
        }
    }
    if let Some(v) = flag_cap("budget-pairs", flags.budget_pairs)? {
        b.pairs = v;
    }
    if let Some(v) = flag_cap("budget-candidates", flags.budget_candidates)? {
        b.spread_candidates = v;
    }
    if let Some(v) = flags.budget_bits {
        b.enumeration_bits = v.min(30);
    }
    if let Some(v) = flag_cap("budget-work", flags.budget_work)? {
        b.planted_work = v;
    }
    if let Some(v) = flag_cap("budget-members", flags.budget_members)? {
        b.members = v;
    }
    Ok(b)
}

/// RFC 4180 CSV from a header and rows.
pub fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
}

/// JSON lines, one object per item.
pub fn jsonl_bytes<R: Serialize>(items: &[R]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes all files to temporaries, then renames them into place.
pub fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let mut staged = Vec::new();
    for (path, bytes) in files {
        let tmp = temp_path(path);
        if let Err(e) = fs::write(&tmp, bytes) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(CliError::io(path, e));
        }
        staged.push(tmp);
    }
    for ((path, _), tmp) in files.iter().zip(&staged) {
        fs::rename(tmp, path).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
