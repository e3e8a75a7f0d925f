//! Output formatting: CSV dialect (comma-separated, '.' decimal, header row,
//! LF line endings, floats at 17 significant digits) and JSON reports, both
//! stamped with the library version and config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{HResult, HarnessError, RunContext};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, locale-free.
pub fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        // Integers print exactly; keeps counts readable.
        format!("{x:.1}")
    } else {
        format!("{x:.16e}")
    }
}

/// CSV writer with the standard stamp header.
pub struct CsvOut {
    buf: String,
    path: PathBuf,
}

impl CsvOut {
    pub fn new(ctx: &RunContext, name: &str, columns: &[&str]) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# slslab v{VERSION} config={}", ctx.config_hash);
        let _ = writeln!(buf, "{}", columns.join(","));
        Self { buf, path: ctx.out_dir.join(name) }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }

    /// Appends a `# `-prefixed JSON footer line.
    pub fn json_footer(&mut self, value: &serde_json::Value) {
        let _ = writeln!(self.buf, "# {value}");
    }

    pub fn finish(self) -> HResult<PathBuf> {
        write_file(&self.path, &self.buf)?;
        Ok(self.path)
    }
}

/// Serializes a report as JSON with the stamp fields injected.
pub fn write_json<T: serde::Serialize>(
    ctx: &RunContext,
    name: &str,
    value: &T,
) -> HResult<PathBuf> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| HarnessError::Config(format!("serialize: {e}")))?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("version".into(), serde_json::Value::String(VERSION.into()));
        obj.insert("config_hash".into(), serde_json::Value::String(ctx.config_hash.clone()));
    }
    let path = ctx.out_dir.join(name);
    let text = serde_json::to_string_pretty(&v)
        .map_err(|e| HarnessError::Config(format!("serialize: {e}")))?;
    write_file(&path, &(text + "\n"))?;
    Ok(path)
}

fn write_file(path: &Path, text: &str) -> HResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HarnessError::Io { path: parent.display().to_string(), source: e })?;
    }
    fs::write(path, text)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}
