//! Run configuration: the shipped defaults, an optional user file layered on
//! top, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use summcheck::gateway::{
    Embedder, EmbedderConfig, HttpEmbedder, LanguageModel, LiveModelConfig, OpenAiCompatible, ScriptedBackend,
};
use summcheck::pipeline::PipelineConfig;
use summcheck::prompting::PromptSet;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Markdown,
    Html,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub scripted: Option<PathBuf>,
    pub live: LiveModelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    #[serde(default)]
    pub scripted: Option<PathBuf>,
    pub http: EmbedderConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub concurrency: usize,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    pub backend: BackendSection,
    pub embedder: EmbedderSection,
    pub pipeline: PipelineConfig,
    pub report: ReportSection,
}

/// Overlays `top` onto `base`, table by table.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve(dir: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = dir.join(&*path);
        }
    }
}

impl RunConfig {
    /// Defaults, optionally overlaid with the file at `path`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(DEFAULT_CONFIG).context("shipped default config")?;
        let mut dir = None;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let user: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut table, user);
            dir = path.parent().map(Path::to_path_buf);
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid config{}", path.map(|p| format!(" {}", p.display())).unwrap_or_default()))?;
        if let Some(dir) = dir {
            resolve(&dir, &mut config.backend.scripted);
            resolve(&dir, &mut config.embedder.scripted);
            resolve(&dir, &mut config.prompts_dir);
        }
        Ok(config)
    }

    /// Points both model and embedder at one scripted fixture.
    pub fn use_scripted(&mut self, path: &Path) {
        self.backend.scripted = Some(path.to_path_buf());
        self.embedder.scripted = Some(path.to_path_buf());
    }

    /// Points the model at a live endpoint, dropping any scripted model.
    pub fn use_backend_url(&mut self, url: &str) {
        self.backend.scripted = None;
        self.backend.live.base_url = url.to_string();
    }

    pub fn validate(&self) -> Result<()> {
        if self.concurrency == 0 {
            bail!("concurrency must be at least 1");
        }
        self.pipeline.validate()?;
        Ok(())
    }

    pub fn prompts(&self) -> Result<PromptSet> {
        match &self.prompts_dir {
            Some(dir) => Ok(PromptSet::load_dir(dir)?),
            None => Ok(PromptSet::default()),
        }
    }

    pub fn model(&self) -> Result<Box<dyn LanguageModel>> {
        match &self.backend.scripted {
            Some(path) => Ok(Box::new(scripted(path)?)),
            None => Ok(Box::new(OpenAiCompatible::new(self.backend.live.clone())?)),
        }
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        match &self.embedder.scripted {
            Some(path) => Ok(Box::new(scripted(path)?)),
            None => Ok(Box::new(HttpEmbedder::new(self.embedder.http.clone())?)),
        }
    }
}

fn scripted(path: &Path) -> Result<ScriptedBackend> {
    ScriptedBackend::from_path(path).with_context(|| format!("loading scripted fixture {}", path.display()))
}
