//! Output directory bookkeeping: CSV tables, key-value summaries and the run
//! manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Fixed numeric format: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Table {
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Plain-text summary: one `key = value` line per entry, in insertion order.
/// Strings are quoted, so the file is also a valid TOML document.
#[derive(Default)]
pub struct Summary {
    lines: Vec<String>,
}

impl Summary {
    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        let text = if v.is_finite() { num(v) } else if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
        self.lines.push(format!("{key} = {text}"));
        self
    }

    pub fn int(&mut self, key: &str, v: impl Into<i128>) -> &mut Self {
        self.lines.push(format!("{key} = {}", v.into()));
        self
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        self.lines.push(format!("{key} = {}", toml::Value::String(v.to_string())));
        self
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JobRecord {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub message: String,
}

#[derive(Serialize)]
struct OutputRecord {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    status: &'a str,
    started_unix: u64,
    wall_seconds: f64,
    workers: usize,
    jobs: &'a [JobRecord],
    outputs: Vec<OutputRecord>,
    config: &'a RunConfig,
}

/// Files of one run; every file is written once, by one job.
pub struct RunOutput {
    pub dir: PathBuf,
    files: Vec<String>,
    jobs: Vec<JobRecord>,
    started: SystemTime,
    clock: Instant,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            jobs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    fn claim(&mut self, name: &str) -> Result<PathBuf> {
        anyhow::ensure!(!self.files.iter().any(|f| f == name), "{name} written twice");
        self.files.push(name.to_string());
        Ok(self.dir.join(name))
    }

    pub fn table(&mut self, name: &str, header: &[&str]) -> Result<Table> {
        let path = self.claim(name)?;
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Table { writer })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.claim(name)?;
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Runs one job, recording its outcome instead of aborting the run.
    pub fn job(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        let record = match f(self) {
            Ok(()) => JobRecord {
                name: name.into(),
                ok: true,
                message: String::new(),
            },
            Err(e) => {
                eprintln!("[{name}] failed: {e:#}");
                JobRecord {
                    name: name.into(),
                    ok: false,
                    message: format!("{e:#}"),
                }
            }
        };
        self.jobs.push(record);
    }

    /// Records a failure found inside an otherwise completed job.
    pub fn fail(&mut self, name: &str, message: String) {
        eprintln!("[{name}] failed: {message}");
        self.jobs.push(JobRecord {
            name: name.into(),
            ok: false,
            message,
        });
    }

    pub fn all_ok(&self) -> bool {
        self.jobs.iter().all(|j| j.ok)
    }

    /// Writes the manifest (to a temporary name, then renamed into place).
    pub fn finish(self, command: &str, config: &RunConfig) -> Result<bool> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name)).with_context(|| format!("cannot read back {name}"))?;
            outputs.push(OutputRecord {
                file: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let ok = self.all_ok();
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            status: if ok { "ok" } else { "partial" },
            started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            workers: rayon::current_num_threads(),
            jobs: &self.jobs,
            outputs,
            config,
        };
        let text = toml::to_string(&manifest).context("manifest serialization")?;
        let tmp = self.dir.join(format!(".{MANIFEST}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(MANIFEST))?;
        Ok(ok)
    }
}

/// Reads a summary written by [`Summary`].
pub fn read_summary(path: &Path) -> Option<toml::Table> {
    toml::from_str(&fs::read_to_string(path).ok()?).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.5), "-2.5000000000000000e0");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn summary_is_toml() {
        let mut s = Summary::default();
        s.num("a", 0.25).int("n", 40u32).text("status", "crossing").num("bad", f64::NAN);
        let t: toml::Table = toml::from_str(&s.render()).unwrap();
        assert_eq!(t["a"].as_float(), Some(0.25));
        assert_eq!(t["n"].as_integer(), Some(40));
        assert!(t["bad"].as_float().unwrap().is_nan());
    }
}
