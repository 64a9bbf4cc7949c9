//! Flat config files.
//!
//! ```text
//! # comment
//! command = spread-check
//! family  = matchings
//! n       = 4
//! r       = 1.7
//! ```
//!
//! One `key = value` per line. `command` names the subcommand; every other
//! key is the long name of one of its flags. `true`/`false` switch boolean
//! flags. Keys may appear once.

use std::collections::HashSet;

use crate::error::CliError;

/// Turns a config file into the argument vector of the equivalent command line.
pub fn to_argv(text: &str) -> Result<Vec<String>, CliError> {
    let mut command = None;
    let mut flags = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Usage(format!("config line {}: {msg}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(err(format!("bad key {key:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        if key == "command" {
            if value == "run" {
                return Err(err("a config cannot run another config".into()));
            }
            command = Some(value.to_string());
            continue;
        }
        flags.push((key.to_string(), value.to_string()));
    }
    let command = command.ok_or_else(|| CliError::Usage("config has no command key".into()))?;
    let mut argv = vec!["spreadlab".to_string(), command];
    for (key, value) in flags {
        argv.push(format!("--{key}"));
        argv.push(value);
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic() {
        let argv = to_argv("# k4\ncommand = spread-check\nfamily = matchings\nn = 4 # even\n\nr=1.7\n").unwrap();
        assert_eq!(
            argv,
            ["spreadlab", "spread-check", "--family", "matchings", "--n", "4", "--r", "1.7"]
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(to_argv("family = matchings\n").is_err());
        assert!(to_argv("command = moments\nn 4\n").is_err());
        assert!(to_argv("command = moments\nn = 4\nn = 6\n").is_err());
        assert!(to_argv("command = run\n").is_err());
        assert!(to_argv("command = moments\n--p = 3\n").is_err());
    }
}
