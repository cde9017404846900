use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use geovqa_core::backends::BackendConfig;
use geovqa_core::pipeline::{RunConfig, RunMode};
use geovqa_core::tasks::GeneratorConfig;
use serde::{Deserialize, Serialize};

/// The one JSON config file. Backends are defined by name and referenced by
/// stage; API keys come only from the environment variables they name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub output: OutputRoots,
}

fn default_mode() -> RunMode {
    RunMode::Both
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    #[serde(default)]
    pub keyword_backend: Option<String>,
    #[serde(default)]
    pub caption_backend: Option<String>,
    #[serde(default)]
    pub answer_backend: Option<String>,
    #[serde(default)]
    pub direct_backend: Option<String>,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
    #[serde(default)]
    pub prompt_template_set: Option<String>,
}

/// Default locations used when a command gets no explicit path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputRoots {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub run: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field `api_key`") {
                anyhow!("{msg}; configs never hold secrets, set api_key_env to the name of an environment variable instead")
            } else {
                anyhow!(msg)
            }
        })
    }

    /// Resolves the run section's backend names into a pipeline config.
    pub fn run_config(
        &self,
        mode: Option<RunMode>,
        max_concurrency: Option<usize>,
    ) -> Result<RunConfig> {
        let section = self
            .run
            .as_ref()
            .ok_or_else(|| anyhow!("config has no \"run\" section"))?;
        let mode = mode.unwrap_or(section.mode);
        let resolve = |name: &Option<String>| -> Result<Option<BackendConfig>> {
            match name {
                None => Ok(None),
                Some(n) => match self.backends.get(n) {
                    Some(b) => Ok(Some(b.clone())),
                    None => bail!(
                        "run references backend {n:?}, which is not defined under \"backends\""
                    ),
                },
            }
        };
        let mut config = RunConfig {
            label: section.label.clone(),
            keyword_backend: resolve(&section.keyword_backend)?,
            caption_backend: resolve(&section.caption_backend)?,
            answer_backend: resolve(&section.answer_backend)?,
            direct_backend: resolve(&section.direct_backend)?,
            ..RunConfig::new(mode)
        };
        if let Some(n) = max_concurrency.or(section.max_concurrency) {
            config.max_concurrency = n;
        }
        if let Some(t) = &section.prompt_template_set {
            config.prompt_template_set = t.clone();
        }
        config.validate()?;
        Ok(config)
    }
}
