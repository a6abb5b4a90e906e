//! `key = value` configuration files.
//!
//! Each entry becomes the flag `--key value` placed ahead of the explicit
//! command-line flags, so the command line wins on conflicts. `true` turns a
//! key into a bare switch and `false` drops it.

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected 'key = value'", n + 1)))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(CliError::usage(format!("config line {}: bad key '{key}'", n + 1)));
        }
        out.push(Entry { key: key.replace('_', "-"), value: value.trim().to_owned() });
    }
    Ok(out)
}

pub fn to_args(entries: &[Entry]) -> Vec<String> {
    let mut args = Vec::new();
    for e in entries {
        match e.value.as_str() {
            "true" => args.push(format!("--{}", e.key)),
            "false" => {}
            v => {
                args.push(format!("--{}", e.key));
                args.push(v.to_owned());
            }
        }
    }
    args
}
