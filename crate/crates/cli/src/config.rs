//! `--config FILE` support: `key=value` lines become `--key value` flags
//! placed before the user's own, so flags given on the command line win.
//! One file can serve every subcommand: keys another subcommand owns are
//! skipped, keys no subcommand knows are errors.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};

/// Boolean switches, which take no value on the command line.
const SWITCHES: &[&str] = &["no-dynamic-window"];

/// Long flag names per subcommand.
pub type Flags<'a> = &'a [(String, Vec<String>)];

/// Rewrite `args` (program name first) with the pairs from any `--config`
/// file spliced in right after the subcommand.
pub fn expand(args: Vec<OsString>, flags: Flags) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let sub = args[1].to_string_lossy();
    let own: &[String] = flags
        .iter()
        .find(|(name, _)| *name == sub)
        .map(|(_, f)| f.as_slice())
        .unwrap_or_default();
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let pairs = parse(&text).with_context(|| format!("in config file {path}"))?;
    let mut injected = Vec::new();
    for (line, key, value) in pairs {
        if own.contains(&key) {
            injected.push(format!("--{key}"));
            injected.extend(value);
        } else if !flags.iter().any(|(_, f)| f.contains(&key)) {
            bail!("in config file {path}: line {line}: unknown key {key:?}");
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend(args.iter().take(2).cloned());
    out.extend(injected.into_iter().map(OsString::from));
    out.extend(args.into_iter().skip(2));
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<String> {
    let mut iter = args.iter().skip(2).map(|a| a.to_string_lossy());
    while let Some(arg) = iter.next() {
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            return iter.next().map(|p| p.into_owned());
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            return Some(p.to_owned());
        }
    }
    None
}

/// `(line, flag name, value)` for each `key=value` line; switches carry no
/// value and are dropped when false. Blank lines and `#` comments are
/// skipped; keys may use `-` or `_`.
pub fn parse(text: &str) -> Result<Vec<(usize, String, Option<String>)>> {
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value", i + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", i + 1);
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" | "1" | "yes" => flags.push((i + 1, key, None)),
                "false" | "0" | "no" => {}
                _ => bail!("line {}: {key} expects true or false", i + 1),
            }
        } else {
            flags.push((i + 1, key, Some(value.to_owned())));
        }
    }
    Ok(flags)
}
