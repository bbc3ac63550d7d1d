//! `--config FILE`: plain `key = value` lines supplementing the flags.
//!
//! Keys are long flag names without the leading dashes. Blank lines and
//! lines starting with `#` are ignored. A key already given on the command
//! line is skipped, so flags win.

use std::fs;

fn config_path(argv: &[String]) -> Result<Option<(usize, usize, String)>, String> {
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            let path = argv.get(i + 1).ok_or("--config needs a file path")?;
            return Ok(Some((i, 2, path.clone())));
        }
        if let Some(path) = a.strip_prefix("--config=") {
            return Ok(Some((i, 1, path.to_string())));
        }
    }
    Ok(None)
}

/// Parses `key = value` lines.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", no + 1))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(format!("config line {}: empty key", no + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn given(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefixed = format!("--{key}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&prefixed))
}

/// Removes `--config FILE` from `argv` and appends the file's entries that
/// are not already present as flags.
pub fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some((at, len, path)) = config_path(&argv)? else {
        return Ok(argv);
    };
    argv.drain(at..at + len);
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    for (key, value) in parse_config(&text)? {
        if given(&argv, &key) {
            continue;
        }
        match value.as_str() {
            "true" => argv.push(format!("--{key}")),
            "false" => {}
            _ => {
                argv.push(format!("--{key}"));
                argv.push(value);
            }
        }
    }
    Ok(argv)
}
