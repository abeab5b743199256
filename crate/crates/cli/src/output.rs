//! Artifact writers. Every file starts with the command and the resolved
//! configuration as `# key = value` comments.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn config_header(cfg: &RunConfig, command: &str) -> String {
    let mut s = format!("# sfair {command}\n");
    for (k, v) in cfg.entries() {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

/// A CSV file with the config header, one header row and `rows`.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    cfg: &RunConfig,
    command: &str,
    header: &[&str],
    rows: &[Vec<S>],
) -> CliResult<()> {
    let mut buf = config_header(cfg, command).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::write(path, std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|s| s.as_ref())).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::write(path, e))?;
    }
    write_bytes(path, &buf)
}

/// A text artifact (edge list, label file, config echo) behind the header.
pub fn write_text(path: &Path, cfg: &RunConfig, command: &str, body: &[u8]) -> CliResult<()> {
    let mut buf = config_header(cfg, command).into_bytes();
    buf.extend_from_slice(body);
    write_bytes(path, &buf)
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}
