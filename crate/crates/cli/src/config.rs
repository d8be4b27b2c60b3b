use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use persona_core::SamplingParams;
use serde::Deserialize;

/// Contents of the `--config` TOML file. Every field is optional; flags
/// override whatever is set here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Endpoint root, e.g. `http://localhost:8000`.
    pub base_url: Option<String>,
    #[serde(default)]
    pub models: Vec<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub workers: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub out: Option<PathBuf>,
    pub run_seed: Option<u64>,
    pub max_retries: Option<u32>,
    pub temperatures: Option<Vec<f64>>,
    pub repetitions: Option<u32>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub embeddings: EmbeddingsConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub top_p: Option<f64>,
    /// 0 means "do not send top_k".
    pub top_k: Option<u32>,
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub overrides: Vec<SamplingOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverride {
    pub temperature: f64,
    pub top_p: Option<f64>,
    pub top_k: Option<u32>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsConfig {
    /// Defaults to the chat `base_url`.
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// JSON object mapping text to vector.
    pub file: Option<PathBuf>,
}

fn apply(base: &SamplingParams, top_p: Option<f64>, top_k: Option<u32>, max_tokens: Option<u32>) -> SamplingParams {
    let mut p = base.clone();
    if let Some(v) = top_p {
        p.top_p = v;
    }
    if let Some(k) = top_k {
        p.top_k = (k > 0).then_some(k);
    }
    if let Some(m) = max_tokens {
        p.max_tokens = m;
    }
    p
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&src).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ts) = &self.temperatures {
            check_temperatures(ts)?;
        }
        for o in &self.sampling.overrides {
            check_temperatures(&[o.temperature])?;
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        if self.repetitions == Some(0) {
            bail!("repetitions must be at least 1");
        }
        if self.models.iter().any(|m| m.trim().is_empty()) {
            bail!("model ids must not be empty");
        }
        Ok(())
    }

    pub fn sampling(&self) -> Result<(SamplingParams, Vec<SamplingParams>)> {
        let s = &self.sampling;
        let base = apply(&SamplingParams::default(), s.top_p, s.top_k, s.max_tokens);
        base.validate().map_err(|e| anyhow::anyhow!("invalid [sampling]: {e}"))?;
        let mut overrides = Vec::new();
        for o in &s.overrides {
            let p = SamplingParams {
                temperature: o.temperature,
                ..apply(&base, o.top_p, o.top_k, o.max_tokens)
            };
            p.validate()
                .map_err(|e| anyhow::anyhow!("invalid sampling override for temperature {}: {e}", o.temperature))?;
            overrides.push(p);
        }
        Ok((base, overrides))
    }
}

pub fn check_temperatures(ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        bail!("at least one temperature is required");
    }
    if let Some(t) = ts.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        bail!("temperatures must be positive, got {t}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg: Config = toml::from_str(
            r#"
            base_url = "http://localhost:8000"
            models = ["a", "b"]
            api_key_env = "KEY"
            temperatures = [0.01, 0.7]
            [sampling]
            top_k = 0
            [[sampling.overrides]]
            temperature = 0.7
            top_p = 0.9
            [embeddings]
            model = "e5"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let (base, over) = cfg.sampling().unwrap();
        assert_eq!(base.top_k, None);
        assert_eq!(over[0].top_p, 0.9);
        assert_eq!(over[0].temperature, 0.7);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_temperatures() {
        assert!(toml::from_str::<Config>("base_uri = \"x\"").is_err());
        let cfg: Config = toml::from_str("temperatures = [0.0]").unwrap();
        assert!(cfg.validate().is_err());
    }
}
