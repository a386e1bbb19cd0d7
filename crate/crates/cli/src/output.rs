//! Output files and the run log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.root.join(name);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_csv<I>(&self, name: &str, header: &[String], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        write_csv(&path, header, rows)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    if !header.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Appends timestamped lines to `run.log`. Timestamps appear nowhere else.
pub struct RunLog {
    path: PathBuf,
    command: String,
}

impl RunLog {
    pub fn open(dir: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(RunLog {
            path: dir.join("run.log"),
            command: command.to_string(),
        })
    }

    pub fn line(&self, msg: impl AsRef<str>) {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(&self.path) {
            let _ = writeln!(f, "{ts:.3} {} {}", self.command, msg.as_ref());
        }
    }
}

pub fn coord_header(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|a| format!("{prefix}{a}")).collect()
}

pub fn nums(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| num(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for v in [0.0, 1.0, -0.125, 1e-9, 3.0e20, 0.1 + 0.2, -1.0 / 3.0] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(num(1e-9), "1e-9");
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn csv_and_json_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(&dir.path().join("o")).unwrap();
        out.write_csv("a.csv", &["x".into(), "w".into()], vec![vec!["0.5".into(), "1".into()]])
            .unwrap();
        assert_eq!(fs::read_to_string(out.path("a.csv")).unwrap(), "x,w\n0.5,1\n");
        out.write_json("b.json", &serde_json::json!({"a": 1})).unwrap();
        assert!(fs::read_to_string(out.path("b.json")).unwrap().ends_with("}\n"));
        let log = RunLog::open(&out.path(""), "test").unwrap();
        log.line("hello");
        assert!(fs::read_to_string(out.path("run.log")).unwrap().contains("test hello"));
    }
}
