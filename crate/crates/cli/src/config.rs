//! The single JSON file capturing every knob of a run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softsql_exec::{ExecLimits, RelationshipNote};
use softsql_llm::{EmbeddingConfig, ProviderConfig};
use softsql_pipeline::DatagenConfig;

use crate::CliError;

/// An evaluation provider addressable by `--model NAME`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProvider {
    pub name: String,
    #[serde(flatten)]
    pub provider: ProviderConfig,
}

fn default_workers() -> usize {
    4
}

/// Relative paths (including `mock:` directories) are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub database: PathBuf,
    pub schema_descriptions: PathBuf,
    #[serde(default)]
    pub relationships: Vec<RelationshipNote>,
    /// Required only for `evaluate --mode few`.
    #[serde(default)]
    pub few_shot_examples: Option<PathBuf>,
    /// Dataset read by evaluate/validate/diversity when no flag is given.
    /// Defaults to `<output_dir>/dataset.jsonl`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    pub generation_provider: ProviderConfig,
    /// Sufficiency judge; the generation provider is reused when absent.
    #[serde(default)]
    pub judge_provider: Option<ProviderConfig>,
    #[serde(default)]
    pub evaluation_providers: Vec<NamedProvider>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub datagen: DatagenConfig,
    #[serde(default)]
    pub exec_limits: ExecLimits,
    #[serde(default = "default_workers")]
    pub eval_workers: usize,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_url(base: &Path, url: &mut String) {
    if let Some(dir) = url.strip_prefix("mock:") {
        if Path::new(dir).is_relative() {
            *url = format!("mock:{}", base.join(dir).display());
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        let mut cfg: AppConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.database);
        resolve(base, &mut self.schema_descriptions);
        resolve(base, &mut self.output_dir);
        for p in [&mut self.few_shot_examples, &mut self.dataset].into_iter().flatten() {
            resolve(base, p);
        }
        resolve_url(base, &mut self.generation_provider.base_url);
        if let Some(j) = &mut self.judge_provider {
            resolve_url(base, &mut j.base_url);
        }
        for n in &mut self.evaluation_providers {
            resolve_url(base, &mut n.provider.base_url);
        }
        if let EmbeddingConfig::Http { base_url, .. } = &mut self.embedding {
            resolve_url(base, base_url);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let must_exist = [("database", Some(&self.database)), ("schema_descriptions", Some(&self.schema_descriptions))]
            .into_iter()
            .chain([("few_shot_examples", self.few_shot_examples.as_ref())]);
        for (field, path) in must_exist {
            if let Some(p) = path.filter(|p| !p.exists()) {
                return Err(CliError::Config(format!("{field}: {} does not exist", p.display())));
            }
        }
        let mut names = BTreeSet::new();
        for n in &self.evaluation_providers {
            if n.name.trim().is_empty() {
                return Err(CliError::Config("evaluation provider with an empty name".into()));
            }
            if !names.insert(n.name.as_str()) {
                return Err(CliError::Config(format!("evaluation provider name `{}` is not unique", n.name)));
            }
        }
        let providers = std::iter::once(("generation_provider", &self.generation_provider))
            .chain(self.judge_provider.iter().map(|j| ("judge_provider", j)))
            .chain(self.evaluation_providers.iter().map(|n| (n.name.as_str(), &n.provider)));
        for (label, p) in providers {
            p.validate().map_err(|e| CliError::Config(format!("{label}: {e}")))?;
        }
        self.datagen.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.exec_limits.validate().map_err(|e| CliError::Config(format!("exec_limits: {e}")))?;
        if self.eval_workers == 0 {
            return Err(CliError::Config("eval_workers must be positive".into()));
        }
        Ok(())
    }

    pub fn evaluation_provider(&self, name: &str) -> Result<&ProviderConfig, CliError> {
        self.evaluation_providers.iter().find(|n| n.name == name).map(|n| &n.provider).ok_or_else(|| {
            let known: Vec<&str> = self.evaluation_providers.iter().map(|n| n.name.as_str()).collect();
            CliError::Usage(format!("unknown model `{name}`; configured: {}", known.join(", ")))
        })
    }
}
