use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::context::ContextConfig;
use crate::error::{Error, Result};
use crate::genreform::{FixtureGenerator, FixtureScorer, FusionConfig, Generator, HttpClient, RelevanceScorer};
use crate::index::Bm25Params;
use crate::prf::PrfConfig;
use crate::textproc::{default_stoplist, load_stopword_list, AnalysisConfig};
use crate::weak::FilterConfig;

/// Overrides `generation.endpoint` and clears `generation.fixture` when set.
pub const GENERATOR_URL_ENV: &str = "QREFORM_GENERATOR_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub stem: bool,
    /// Stoplist file; the bundled list when absent.
    pub stopwords: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            stem: true,
            stopwords: None,
        }
    }
}

impl AnalysisSection {
    pub fn to_config(&self) -> Result<AnalysisConfig> {
        let stopwords = match &self.stopwords {
            Some(path) => Arc::new(load_stopword_list(path)?),
            None => default_stoplist(),
        };
        Ok(AnalysisConfig { stem: self.stem, stopwords })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub endpoint: Option<String>,
    pub fixture: Option<PathBuf>,
    pub num_return: usize,
    pub beam_size: usize,
    pub max_new_tokens: usize,
    pub timeout_secs: f64,
    /// Requests allowed in flight at once across worker threads.
    pub max_in_flight: usize,
    /// Extra attempts after a transport failure.
    pub retries: u32,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            endpoint: None,
            fixture: None,
            num_return: 5,
            beam_size: 100,
            max_new_tokens: 64,
            timeout_secs: 120.0,
            max_in_flight: 4,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    pub endpoint: Option<String>,
    pub fixture: Option<PathBuf>,
    pub window: usize,
    pub stride: usize,
    pub timeout_secs: f64,
}

impl Default for ScoringSection {
    fn default() -> Self {
        ScoringSection {
            endpoint: None,
            fixture: None,
            window: 128,
            stride: 64,
            timeout_secs: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Documents retrieved per query.
    pub depth: usize,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    /// Run tag written in the sixth column; the mode name when absent.
    pub tag: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            depth: 1000,
            threads: 0,
            tag: None,
        }
    }
}

/// An experiment manifest. Every section is optional in the TOML file.
///
/// ```
/// use qreform::pipeline::PipelineConfig;
/// let cfg = PipelineConfig::from_toml_str("[bm25]\nk1 = 0.9\nb = 0.4\n[fusion]\nk_gen = 0.0\n").unwrap();
/// assert_eq!(cfg.bm25.k1, 0.9);
/// assert_eq!(cfg.fusion.k_rm3, 1.0);
/// assert_eq!(cfg.run.depth, 1000);
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub analysis: AnalysisSection,
    pub bm25: Bm25Params,
    pub prf: PrfConfig,
    pub context: ContextConfig,
    pub fusion: FusionConfig,
    pub filter: FilterConfig,
    pub generation: GenerationSection,
    pub scoring: ScoringSection,
    pub run: RunSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a manifest; relative paths inside it are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.analysis.stopwords);
        resolve(base, &mut cfg.generation.fixture);
        resolve(base, &mut cfg.scoring.fixture);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply [`GENERATOR_URL_ENV`] if it is set and non-empty.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(GENERATOR_URL_ENV) {
            if !url.trim().is_empty() {
                log::info!("generator endpoint from {GENERATOR_URL_ENV}: {url}");
                self.generation.endpoint = Some(url);
                self.generation.fixture = None;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        self.prf.validate()?;
        self.context.validate()?;
        self.fusion.validate()?;
        self.filter.validate()?;
        if self.run.depth == 0 {
            return Err(Error::Config("run depth must be >= 1".into()));
        }
        if self.generation.max_in_flight == 0 {
            return Err(Error::Config("generation max_in_flight must be >= 1".into()));
        }
        if self.scoring.window < 2 || self.scoring.stride == 0 || self.scoring.stride > self.scoring.window {
            return Err(Error::Config(format!(
                "invalid scoring passage geometry: window {}, stride {}",
                self.scoring.window, self.scoring.stride
            )));
        }
        for (name, t) in [("generation", self.generation.timeout_secs), ("scoring", self.scoring.timeout_secs)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("{name} timeout_secs must be positive")));
            }
        }
        Ok(())
    }

    /// The configured generator: an HTTP endpoint or a fixture file, never both.
    pub fn generator(&self) -> Result<Box<dyn Generator>> {
        match (&self.generation.endpoint, &self.generation.fixture) {
            (Some(url), None) => Ok(Box::new(HttpClient::new(
                url.clone(),
                Duration::from_secs_f64(self.generation.timeout_secs),
            ))),
            (None, Some(path)) => Ok(Box::new(FixtureGenerator::load(path)?)),
            (Some(_), Some(_)) => Err(Error::Config(
                "set only one of generation.endpoint and generation.fixture".into(),
            )),
            (None, None) => Err(Error::Config(format!(
                "this mode needs generation.endpoint, generation.fixture or {GENERATOR_URL_ENV}"
            ))),
        }
    }

    pub fn scorer(&self) -> Result<Box<dyn RelevanceScorer>> {
        match (&self.scoring.endpoint, &self.scoring.fixture) {
            (Some(url), None) => Ok(Box::new(HttpClient::new(
                url.clone(),
                Duration::from_secs_f64(self.scoring.timeout_secs),
            ))),
            (None, Some(path)) => Ok(Box::new(FixtureScorer::load(path)?)),
            (Some(_), Some(_)) => Err(Error::Config("set only one of scoring.endpoint and scoring.fixture".into())),
            (None, None) => Err(Error::Config("re-ranking needs scoring.endpoint or scoring.fixture".into())),
        }
    }
}
