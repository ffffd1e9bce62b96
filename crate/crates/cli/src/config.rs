use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use expsum::consistency::StarConfig;
use expsum::llm::{LlmConfig, Profile};
use expsum::metrics::MetricConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntailmentKind {
    #[default]
    Lexical,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalKind {
    #[default]
    Recorded,
    Wikipedia,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencySection {
    pub backend: EntailmentKind,
    pub nli_url: Option<String>,
    pub retrieval: RetrievalKind,
    pub retrieval_dir: Option<PathBuf>,
    pub wikipedia_api: String,
    pub request_timeout_secs: f64,
    #[serde(flatten)]
    pub star: StarConfig,
}

impl Default for ConsistencySection {
    fn default() -> Self {
        Self {
            backend: EntailmentKind::default(),
            nli_url: None,
            retrieval: RetrievalKind::default(),
            retrieval_dir: None,
            wikipedia_api: expsum_http::WIKIPEDIA_API.to_string(),
            request_timeout_secs: 30.0,
            star: StarConfig::default(),
        }
    }
}

/// Effective settings of one run: profile defaults, then the config file,
/// then environment, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub jobs: usize,
    /// Size of the `*-k` strategies; the profile's value when unset.
    pub k: Option<usize>,
    pub llm: LlmConfig,
    pub metrics: MetricConfig,
    pub consistency: ConsistencySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Scinews,
            seed: 2024,
            jobs: 1,
            k: None,
            llm: LlmConfig::default(),
            metrics: MetricConfig::default(),
            consistency: ConsistencySection::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse().with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let tokens_set = table
            .get("llm")
            .and_then(|l| l.as_table())
            .is_some_and(|l| l.contains_key("max_new_tokens"));
        let mut cfg: RunConfig = table.try_into().context("invalid configuration")?;

        if let Ok(v) = std::env::var("EXPSUM_LLM_ENDPOINT") {
            cfg.llm.endpoint = v;
        }
        if let Ok(v) = std::env::var("EXPSUM_LLM_MODEL") {
            cfg.llm.model = v;
        }
        if let Ok(v) = std::env::var("EXPSUM_NLI_URL") {
            cfg.consistency.nli_url = Some(v);
        }
        if let Some(p) = flags.profile {
            cfg.profile = p;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(j) = flags.jobs {
            cfg.jobs = j;
        }
        if cfg.jobs == 0 {
            anyhow::bail!(crate::Usage("--jobs must be at least 1".into()));
        }
        if !tokens_set {
            cfg.llm.max_new_tokens = cfg.profile.max_new_tokens();
        }
        cfg.llm.max_parallel_requests = cfg.jobs;
        cfg.consistency.star.jobs = cfg.jobs;
        cfg.llm.validate()?;
        Ok(cfg)
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| self.profile.default_k())
    }

    pub fn fingerprint(&self) -> String {
        expsum::fingerprint(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_sets_tokens_unless_file_does() {
        let flags = Overrides { profile: Some(Profile::Plos), ..Default::default() };
        let cfg = RunConfig::load(None, &flags).unwrap();
        assert_eq!((cfg.llm.max_new_tokens, cfg.k()), (256, 2));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "profile = \"elife\"\nk = 5\n[llm]\nmax_new_tokens = 100\n[consistency]\nthreshold = 0.4\n").unwrap();
        let cfg = RunConfig::load(Some(&p), &Overrides::default()).unwrap();
        assert_eq!((cfg.profile, cfg.llm.max_new_tokens, cfg.k()), (Profile::Elife, 100, 5));
        assert_eq!(cfg.consistency.star.threshold, 0.4);
    }

    #[test]
    fn fingerprint_changes_with_settings() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 7, ..RunConfig::default() };
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn unknown_keys_are_ignored_but_bad_types_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = \"x\"\n").unwrap();
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
    }
}
