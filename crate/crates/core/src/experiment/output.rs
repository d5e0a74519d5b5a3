//! Run directories, CSV formatting and manifests.
//!
//! Files are written into a hidden staging directory under `runs/` and the
//! directory is renamed to `runs/<timestamp>-<tag>` only once the manifest is
//! complete. A run that fails midway removes its staging directory, so no
//! partial output survives; an existing run directory is never reused.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

use super::ExperimentError;

/// Formats a value with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Shortest round-trip rendering, used in file names.
pub fn label(v: f64) -> String {
    format!("{v}")
}

/// In-memory CSV table with a mandatory header.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            columns: header.len(),
            text,
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One written output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

/// Checksum over all outputs: SHA-256 of `name sha256` lines in write order.
pub fn combined_checksum(files: &[OutputFile]) -> String {
    let mut listing = String::new();
    for f in files {
        let _ = writeln!(listing, "{} {}", f.name, f.sha256);
    }
    sha256_hex(listing.as_bytes())
}

/// Metadata recorded alongside the outputs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub config_file: String,
    pub outputs: Vec<OutputFile>,
    pub checksum: String,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let ts = |t: &DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "started = {}", ts(&self.started));
        let _ = writeln!(s, "finished = {}", ts(&self.finished));
        let _ = writeln!(s, "config = {}", self.config_file);
        for f in &self.outputs {
            let _ = writeln!(s, "output = {} sha256:{}", f.name, f.sha256);
        }
        let _ = writeln!(s, "checksum = sha256:{}", self.checksum);
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const CONFIG_NAME: &str = "config.ini";

/// A run directory being filled. Dropping it without [`RunDir::finish`]
/// deletes everything written so far.
#[derive(Debug)]
pub struct RunDir {
    runs: PathBuf,
    staging: PathBuf,
    stem: String,
    started: DateTime<Utc>,
    outputs: Vec<OutputFile>,
    done: bool,
}

impl RunDir {
    pub fn create(root: &Path, tag: &str) -> Result<Self, ExperimentError> {
        let started = Utc::now();
        let runs = root.join("runs");
        fs::create_dir_all(&runs).map_err(|e| ExperimentError::io(&runs, e))?;
        let stem = format!("{}-{tag}", started.format("%Y%m%dT%H%M%S%.3fZ"));
        let staging = (0u32..)
            .map(|i| runs.join(format!(".staging-{stem}-{}-{i}", std::process::id())))
            .find(|p| !p.exists())
            .expect("unbounded search");
        fs::create_dir(&staging).map_err(|e| ExperimentError::io(&staging, e))?;
        Ok(Self {
            runs,
            staging,
            stem,
            started,
            outputs: Vec::new(),
            done: false,
        })
    }

    fn write_raw(&self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        let path = self.staging.join(name);
        fs::write(&path, contents).map_err(|e| ExperimentError::io(&path, e))
    }

    /// Writes an output file and records its checksum.
    pub fn write_output(&mut self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        self.write_raw(name, contents)?;
        self.outputs.push(OutputFile {
            name: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Writes the manifest and moves the directory to its final name.
    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        config_text: &str,
        warnings: Vec<String>,
    ) -> Result<FinishedRun, ExperimentError> {
        self.write_raw(CONFIG_NAME, config_text)?;
        let checksum = combined_checksum(&self.outputs);
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started: self.started,
            finished: Utc::now(),
            config_file: CONFIG_NAME.to_string(),
            outputs: self.outputs.clone(),
            checksum: checksum.clone(),
            warnings,
        };
        self.write_raw(MANIFEST_NAME, &manifest.render())?;

        let target = (0u32..)
            .map(|i| match i {
                0 => self.runs.join(&self.stem),
                _ => self.runs.join(format!("{}-{i}", self.stem)),
            })
            .find(|p| !p.exists())
            .expect("unbounded search");
        fs::rename(&self.staging, &target).map_err(|e| ExperimentError::io(&target, e))?;
        self.done = true;
        Ok(FinishedRun {
            dir: target,
            manifest,
        })
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// A completed run directory.
#[derive(Debug, Clone)]
pub struct FinishedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl FinishedRun {
    pub fn checksum(&self) -> &str {
        &self.manifest.checksum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{s}");
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["n", "x"]);
        csv.row(&["0".into(), fmt_f64(0.5)]);
        assert_eq!(csv.as_str(), "n,x\n0,5.0000000000000000e-1\n");
    }

    #[test]
    fn finished_run_has_manifest_and_no_staging() {
        let root = tempfile::tempdir().unwrap();
        let mut dir = RunDir::create(root.path(), "t").unwrap();
        dir.write_output("a.csv", "x\n1\n").unwrap();
        let run = dir.finish("test", 7, "[grid]\n", vec!["w".into()]).unwrap();
        let manifest = fs::read_to_string(run.dir.join(MANIFEST_NAME)).unwrap();
        assert!(manifest.contains("seed = 7"));
        assert!(manifest.contains(&format!("output = a.csv sha256:{}", sha256_hex(b"x\n1\n"))));
        assert!(manifest.contains("warning = w"));
        assert_eq!(
            fs::read_to_string(run.dir.join(CONFIG_NAME)).unwrap(),
            "[grid]\n"
        );
        let names: Vec<_> = fs::read_dir(root.path().join("runs")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn dropped_run_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        {
            let mut dir = RunDir::create(root.path(), "t").unwrap();
            dir.write_output("a.csv", "x\n").unwrap();
        }
        assert_eq!(fs::read_dir(root.path().join("runs")).unwrap().count(), 0);
    }

    #[test]
    fn never_overwrites() {
        let root = tempfile::tempdir().unwrap();
        let a = RunDir::create(root.path(), "t")
            .unwrap()
            .finish("c", 0, "", vec![])
            .unwrap();
        let b = RunDir::create(root.path(), "t")
            .unwrap()
            .finish("c", 0, "", vec![])
            .unwrap();
        assert_ne!(a.dir, b.dir);
        assert!(a.dir.exists() && b.dir.exists());
    }
}
