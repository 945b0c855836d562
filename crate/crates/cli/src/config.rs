//! Config file, run manifest and provider resolution.
//!
//! The config file is TOML:
//!
//! ```toml
//! [providers.gpt-4o]
//! endpoint_url = "https://api.openai.com/v1"
//! model_id = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//! price_per_million_in = 2.5
//! price_per_million_out = 10.0
//!
//! [search]
//! trials = 10
//! iterations = 10
//!
//! [sandbox]
//! runner_command = ["python3", "-m", "policy_runner"]
//! call_timeout_ms = 2000
//!
//! [task]
//! omega = 30.0
//! ```
//!
//! Command-line flags override file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use llmsearch::provider::{OpenAiProvider, Pricing, ReplayProvider};
use llmsearch::{Provider, ProviderConfig, SandboxConfig, SearchConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCRIPTED_PREFIX: &str = "scripted:";
pub const DEFAULT_OMEGA: f64 = 30.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    pub search: Option<SearchConfig>,
    pub sandbox: Option<SandboxConfig>,
    #[serde(default)]
    pub task: TaskOverrides,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOverrides {
    pub omega: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything needed to re-execute a run, stored as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    /// Rotation speed; only meaningful for the vehicle task.
    pub omega: f64,
    pub provider: String,
    pub pricing: Pricing,
    pub search: SearchConfig,
    /// An empty `runner_command` selects the built-in stub runner.
    pub sandbox: SandboxConfig,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("config.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Label used in tables: `provider/task`, with ω for the vehicle task.
    pub fn label(&self) -> String {
        if self.task == "vehicle" {
            format!("{}/{}@{}", self.provider, self.task, self.omega)
        } else {
            format!("{}/{}", self.provider, self.task)
        }
    }
}

/// A provider plus the name and prices recorded in the manifest.
pub struct ResolvedProvider {
    pub provider: Box<dyn Provider>,
    pub name: String,
    pub pricing: Pricing,
}

/// `scripted:<path>` replays a cassette; any other value names a provider
/// table in the config file.
pub fn resolve_provider(spec: &str, file: &FileConfig) -> Result<ResolvedProvider, CliError> {
    if let Some(path) = spec.strip_prefix(SCRIPTED_PREFIX) {
        let name = Path::new(path).file_stem().map_or_else(
            || "scripted".to_string(),
            |s| format!("scripted-{}", s.to_string_lossy()),
        );
        let provider = ReplayProvider::from_file(name.clone(), Path::new(path))?;
        return Ok(ResolvedProvider {
            provider: Box::new(provider),
            name,
            pricing: Pricing::default(),
        });
    }
    let mut config = file.providers.get(spec).cloned().ok_or_else(|| {
        CliError::Config(format!(
            "provider `{spec}` is not defined in the config file"
        ))
    })?;
    config.name = spec.to_string();
    let pricing = config.pricing();
    let provider = OpenAiProvider::new(config)?;
    Ok(ResolvedProvider {
        provider: Box::new(provider),
        name: spec.to_string(),
        pricing,
    })
}
