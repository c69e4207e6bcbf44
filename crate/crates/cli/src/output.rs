//! Artifact writing: every file lands next to a `<name>.manifest.json` describing the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aztec_corners::model::WeightConfig;
use aztec_corners::sampler::RNG_ALGORITHM;
use serde::Serialize;

use crate::CliError;

/// What is needed to rerun the command that produced an artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub subcommand: String,
    /// Full argument vector, program name excluded.
    pub argv: Vec<String>,
    pub config: Option<WeightConfig>,
    /// Verbatim config file text.
    pub config_text: Option<String>,
    pub seeds: Vec<u64>,
    pub rng: &'static str,
    pub tolerances: BTreeMap<String, f64>,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub artifact: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, threads: usize) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv,
            config: None,
            config_text: None,
            seeds: Vec::new(),
            rng: RNG_ALGORITHM,
            tolerances: BTreeMap::new(),
            threads,
            started: now(),
            finished: String::new(),
            artifact: String::new(),
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Destination of tables: stdout, or files in a directory with manifests alongside.
pub struct Output {
    dir: Option<PathBuf>,
    pub manifest: RunManifest,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, manifest: RunManifest) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
        }
        Ok(Output { dir, manifest })
    }

    pub fn to_files(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `contents` as artifact `name`, or prints it when no directory was given.
    pub fn emit(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let Some(dir) = &self.dir else {
            print!("{contents}");
            return Ok(());
        };
        let path = dir.join(name);
        write(&path, contents)?;
        let mut m = self.manifest.clone();
        m.artifact = name.to_string();
        m.finished = now();
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write(&dir.join(format!("{name}.manifest.json")), &(json + "\n"))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// 17 significant digits, enough for an exact round trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
