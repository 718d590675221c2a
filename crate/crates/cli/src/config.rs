//! `--config` files: `key = value` lines mirroring long flag names.
//!
//! Values from the file are spliced into argv right after the subcommand,
//! but only for keys not already given on the command line, so flags win
//! over the file and the file wins over built-in defaults.

use std::path::Path;

use anyhow::{bail, Context};

pub const SUBCOMMANDS: [&str; 8] = [
    "degrade",
    "conceal",
    "eval",
    "rank",
    "traces",
    "mushra-build",
    "mushra-serve",
    "mushra-report",
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
/// A key may repeat for multi-valued flags.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, got {raw:?}", i + 1);
        };
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn flag_value<'a>(argv: &'a [String], name: &str) -> Option<&'a str> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    argv.iter().enumerate().find_map(|(i, a)| {
        if *a == long {
            argv.get(i + 1).map(String::as_str)
        } else {
            a.strip_prefix(&prefix)
        }
    })
}

fn has_flag(argv: &[String], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    argv.iter().any(|a| *a == long || a.starts_with(&prefix))
}

/// Returns argv with the config file's entries merged in.
pub fn expand_args(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(path) = flag_value(&argv, "config").map(str::to_string) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {path}"))?;
    let entries = parse_config(&text)?;
    let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" || has_flag(&argv, &key) {
            continue;
        }
        match value.as_str() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

/// One `key=value` token per set field, for the effective-config echo.
pub fn effective_line(command: &str, args: &impl serde::Serialize) -> String {
    let mut parts = vec![command.to_string()];
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        for (k, v) in map {
            let k = k.replace('_', "-");
            match v {
                serde_json::Value::Null => {}
                serde_json::Value::Array(items) => {
                    for item in items {
                        parts.push(format!("{k}={}", scalar(&item)));
                    }
                }
                other => parts.push(format!("{k}={}", scalar(&other))),
            }
        }
    }
    parts.join(" ")
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
