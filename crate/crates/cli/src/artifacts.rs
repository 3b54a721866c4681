//! Artifact files, manifests and hash checks.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stochastic_euler::domain::InitialState;
use stochastic_euler::field::VelocityField;
use stochastic_euler::generator::GeneratorCertificate;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const FIELD: &str = "field.csv";
pub const CERTIFICATES: &str = "certificates.json";

/// Values derived from the config at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub lambda0: f64,
    pub state: InitialState,
    pub window: Option<f64>,
    pub mutation: Option<String>,
}

/// Ties every artifact of one command to the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub core_version: String,
    pub config_hash: String,
    pub field_hash: String,
    /// Full config with defaults, so the run can be repeated from this file alone.
    pub config: RunConfig,
    pub resolved: Resolved,
    /// Relative path to SHA-256 of the file contents.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, resolved: Resolved) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            core_version: stochastic_euler::VERSION.into(),
            config_hash: config.hash(),
            field_hash: config.field_hash(),
            config: config.clone(),
            resolved,
            artifacts: BTreeMap::new(),
        }
    }
}

/// Writes files under one directory and records their hashes.
pub struct Writer {
    root: PathBuf,
    pub manifest: Manifest,
}

impl Writer {
    pub fn new(root: &Path, manifest: Manifest) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn bytes(&mut self, rel: &str, data: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, data)?;
        self.manifest.artifacts.insert(rel.into(), sha256(data));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_vec_pretty(value)?;
        self.bytes(rel, &text)
    }

    /// Render with a writer callback, then store.
    pub fn render(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> CliResult<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bytes(rel, &buf)
    }

    pub fn finish(self) -> CliResult<Manifest> {
        let path = self.root.join(MANIFEST);
        let mut out = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &self.manifest)?;
        out.write_all(b"\n")?;
        Ok(self.manifest)
    }
}

pub fn sha256(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let file = fs::File::open(path).map_err(|e| CliError::Artifact(format!("missing {}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Output of `generate`, checked against the current config.
pub struct Generated {
    pub manifest: Manifest,
    pub field: VelocityField,
    pub certificates: Vec<GeneratorCertificate>,
}

fn checked_bytes(root: &Path, manifest: &Manifest, rel: &str) -> CliResult<Vec<u8>> {
    let path = root.join(rel);
    let data = fs::read(&path).map_err(|e| CliError::Artifact(format!("missing {}: {e}", path.display())))?;
    match manifest.artifacts.get(rel) {
        Some(h) if *h == sha256(&data) => Ok(data),
        Some(_) => Err(CliError::Artifact(format!("{} does not match its manifest hash", path.display()))),
        None => Err(CliError::Artifact(format!("{rel} is not listed in the manifest"))),
    }
}

pub fn load_generated(root: &Path, config: &RunConfig) -> CliResult<Generated> {
    let manifest: Manifest = read_json(&root.join(MANIFEST))?;
    if manifest.command != "generate" {
        return Err(CliError::Artifact(format!(
            "{} was written by `{}`, not `generate`",
            root.display(),
            manifest.command
        )));
    }
    let hash = config.field_hash();
    if manifest.field_hash != hash {
        return Err(CliError::Artifact(format!(
            "field settings hash {hash} does not match the artifacts ({}); rerun `generate`",
            manifest.field_hash
        )));
    }
    let field = VelocityField::read_csv(BufReader::new(&checked_bytes(root, &manifest, FIELD)?[..]))?;
    let certificates = serde_json::from_slice(&checked_bytes(root, &manifest, CERTIFICATES)?)?;
    Ok(Generated { manifest, field, certificates })
}

/// A config file, or the `config` entry of a manifest written by any command.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = read_json(path)?;
        return Ok(m.config);
    }
    RunConfig::load(path)
}
