//! Append-only results ledger: one CSV row per emitted statistic,
//! RFC-4180 quoting, floats at 17 significant digits, guarded by an
//! advisory lock file so concurrent invocations never interleave rows.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;

pub const LEDGER_FILE: &str = "ledger.csv";
const HEADER: &str = "timestamp,subcommand,config_hash,statistic,value,stderr,pass";

/// One ledger row.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub subcommand: String,
    pub config_hash: String,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
    pub pass: bool,
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn acquire_lock(dir: &Path) -> anyhow::Result<LockGuard> {
    let path = dir.join(".ledger.lock");
    for _ in 0..2000 {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => return Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e).context("creating ledger lock"),
        }
    }
    anyhow::bail!("ledger lock at {} appears stale", path.display());
}

/// Append rows under the single-writer lock; writes the header when the
/// file is new.
pub fn append_rows(out_dir: &Path, rows: &[LedgerRow]) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let _guard = acquire_lock(out_dir)?;
    let path = out_dir.join(LEDGER_FILE);
    let fresh = !path.exists();
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(file, "{HEADER}")?;
    }
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for r in rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            ts,
            quote(&r.subcommand),
            quote(&r.config_hash),
            quote(&r.statistic),
            fmt_float(r.value),
            fmt_float(r.stderr),
            r.pass
        )?;
    }
    Ok(())
}

/// A parsed ledger entry for the summary command.
#[derive(Debug, Clone)]
pub struct LedgerEntry {
    pub subcommand: String,
    pub config_hash: String,
    pub statistic: String,
    pub value: f64,
    pub pass: bool,
}

pub fn read_ledger(out_dir: &Path) -> anyhow::Result<Vec<LedgerEntry>> {
    let path = out_dir.join(LEDGER_FILE);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .with_context(|| format!("reading ledger {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(LedgerEntry {
            subcommand: record.get(1).unwrap_or("").to_string(),
            config_hash: record.get(2).unwrap_or("").to_string(),
            statistic: record.get(3).unwrap_or("").to_string(),
            value: record.get(4).unwrap_or("0").parse().unwrap_or(f64::NAN),
            pass: record.get(6).unwrap_or("false") == "true",
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            LedgerRow {
                subcommand: "dpp".into(),
                config_hash: "abc".into(),
                statistic: "residual".into(),
                value: 0.125,
                stderr: 0.5,
                pass: true,
            },
            LedgerRow {
                subcommand: "value, with comma".into(),
                config_hash: "abc".into(),
                statistic: "mean".into(),
                value: -1.0,
                stderr: 0.0,
                pass: false,
            },
        ];
        append_rows(dir.path(), &rows[..1]).unwrap();
        append_rows(dir.path(), &rows[1..]).unwrap();
        let back = read_ledger(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].subcommand, "dpp");
        assert!(back[0].pass);
        assert_eq!(back[1].subcommand, "value, with comma");
        assert!(!back[1].pass);
        assert_eq!(back[1].value, -1.0);
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        let s = fmt_float(std::f64::consts::PI);
        // 1 leading digit + 16 decimals.
        assert!(s.starts_with("3.1415926535897931"), "{s}");
    }
}
