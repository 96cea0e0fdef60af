//! Output directory bookkeeping: provenance comments, JSON reports and the
//! run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use firecox::io::Table;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = "firecox";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    config: &'a RunConfig,
    count_discretization: &'static str,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
}

pub struct RunContext {
    pub config: RunConfig,
    pub provenance: Provenance,
    out_dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(config: RunConfig, command: &str, out_dir: &Path) -> Result<Self, CliError> {
        let text = config.to_toml()?;
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::Output(out_dir.display().to_string(), e))?;
        Ok(Self {
            provenance: Provenance {
                tool: TOOL.into(),
                version: VERSION.into(),
                command: command.into(),
                config_sha256: sha256_hex(text.as_bytes()),
            },
            config,
            out_dir: out_dir.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    /// Reads an input file, recording its hash in the manifest under `name`.
    pub fn read_input(&mut self, name: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Input(path.display().to_string(), e))?;
        self.inputs.insert(name.into(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_table(&mut self, name: &str, path: &Path) -> Result<Table, CliError> {
        let bytes = self.read_input(name, path)?;
        Ok(Table::read(bytes.as_slice())?)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, name: &str, path: &Path) -> Result<T, CliError> {
        let bytes = self.read_input(name, path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Output(path.display().to_string(), e))?;
        self.outputs.push(name.into());
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: Table) -> Result<PathBuf, CliError> {
        let mut comments = vec![
            ("tool".to_string(), format!("{TOOL} {VERSION}")),
            ("command".to_string(), self.provenance.command.clone()),
            ("config_sha256".to_string(), self.provenance.config_sha256.clone()),
        ];
        comments.extend(table.comments.iter().cloned());
        let text = table.with_comments(comments).to_string()?;
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let w = Wrapped {
            provenance: &self.provenance,
            body,
        };
        let mut text = serde_json::to_string_pretty(&w).map_err(firecox::Error::from)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest.json` and returns the list of files produced.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, CliError> {
        let outputs = self.outputs.clone();
        let m = Manifest {
            provenance: &self.provenance,
            config: &self.config,
            count_discretization: firecox::cox::DISCRETIZATION,
            inputs: &self.inputs,
            outputs: &outputs,
        };
        let mut text = serde_json::to_string_pretty(&m).map_err(firecox::Error::from)?;
        text.push('\n');
        self.write_bytes("manifest.json", text.as_bytes())?;
        Ok(self.outputs.iter().map(|o| self.out_dir.join(o)).collect())
    }
}
