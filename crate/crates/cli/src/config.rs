//! key=value settings files, spliced into the argument list so that clap
//! sees `--key value` pairs before the user's own flags.

use std::ffi::OsString;
use std::path::Path;

use crate::error::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got '{line}'", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Inserts the entries of any `--config FILE` right after the subcommand.
/// `true`/`false` values become bare switches or are dropped.
pub fn splice(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let pos = args.iter().position(|a| a == "--config" || a.to_string_lossy().starts_with("--config="));
    let Some(pos) = pos else { return Ok(args) };
    let path = match args[pos].to_string_lossy().strip_prefix("--config=") {
        Some(p) => p.to_owned(),
        None => args
            .get(pos + 1)
            .map(|p| p.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Config("--config needs a file".into()))?,
    };
    let entries = read(Path::new(&path))?;
    let mut injected = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => injected.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                injected.push(OsString::from(format!("--{k}")));
                injected.push(OsString::from(v));
            }
        }
    }
    // args[0] is the binary, args[1] the subcommand.
    let at = 2.min(args.len());
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
