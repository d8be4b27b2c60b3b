//! Does a model know what a personality looks like? Compares its own
//! description of each type or factor with the reference profile, lexically
//! (word overlap) and semantically (embedding cosine).

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{format_pm, mean, sample_std};
use crate::llm_client::{ChatBackend, ClientError, Embedder, SamplingParams};
use crate::personas::Personas;
use crate::prompting::Templates;
use crate::types::{Instrument, Target};

/// Temperature used to elicit descriptions.
pub const AWARENESS_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AwarenessError {
    #[error("nothing left after preprocessing")]
    EmptyAfterPreprocess,
    #[error("word overlap needs two non-empty sets")]
    EmptyInput,
    #[error("vectors have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Maps a lowercase token to its normalized form.
pub trait Normalizer: Send + Sync {
    fn name(&self) -> &str;
    fn normalize(&self, token: &str) -> String;
}

/// Harman's S-stemmer: strips English plural endings only.
#[derive(Debug, Clone, Copy, Default)]
pub struct SStemmer;

impl Normalizer for SStemmer {
    fn name(&self) -> &str {
        "s-stemmer"
    }

    fn normalize(&self, w: &str) -> String {
        if w.len() > 3 && w.ends_with("ies") && !w.ends_with("eies") && !w.ends_with("aies") {
            return format!("{}y", &w[..w.len() - 3]);
        }
        if w.len() > 3 && w.ends_with("es") && !w.ends_with("aes") && !w.ends_with("ees") && !w.ends_with("oes") {
            return w[..w.len() - 1].to_string();
        }
        if w.len() > 2 && w.ends_with('s') && !w.ends_with("us") && !w.ends_with("ss") {
            return w[..w.len() - 1].to_string();
        }
        w.to_string()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Normalizer for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn normalize(&self, token: &str) -> String {
        token.to_string()
    }
}

pub fn stopwords() -> &'static BTreeSet<String> {
    static WORDS: OnceLock<BTreeSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect()
    })
}

/// Lowercase, split on anything that is not a letter or digit, drop
/// stopwords, normalize, and deduplicate.
pub fn preprocess_with(text: &str, normalizer: &dyn Normalizer) -> Result<BTreeSet<String>, AwarenessError> {
    let stop = stopwords();
    let lower = text.to_lowercase();
    let set: BTreeSet<String> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stop.contains(*t))
        .map(|t| normalizer.normalize(t))
        .filter(|t| !t.is_empty())
        .collect();
    if set.is_empty() {
        Err(AwarenessError::EmptyAfterPreprocess)
    } else {
        Ok(set)
    }
}

pub fn preprocess(text: &str) -> Result<BTreeSet<String>, AwarenessError> {
    preprocess_with(text, &SStemmer)
}

/// |s1 ∩ s2| / min(|s1|, |s2|).
pub fn word_overlap<T: Ord>(s1: &BTreeSet<T>, s2: &BTreeSet<T>) -> Result<f64, AwarenessError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(AwarenessError::EmptyInput);
    }
    let common = s1.intersection(s2).count();
    Ok(common as f64 / s1.len().min(s2.len()) as f64)
}

pub fn cosine(v1: &[f64], v2: &[f64]) -> Result<f64, AwarenessError> {
    if v1.len() != v2.len() {
        return Err(AwarenessError::DimensionMismatch(v1.len(), v2.len()));
    }
    let dot: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum();
    let n1 = v1.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n2 = v2.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(AwarenessError::ZeroVector);
    }
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessResult {
    pub target: Target,
    pub wo: f64,
    pub cosine: f64,
    pub generated_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessFailure {
    pub target: Target,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessReport {
    pub model: String,
    pub instrument: Instrument,
    pub normalizer: String,
    pub results: Vec<AwarenessResult>,
    pub failures: Vec<AwarenessFailure>,
    pub wo_mean: f64,
    pub wo_std: f64,
    pub cosine_mean: f64,
    pub cosine_std: f64,
}

impl AwarenessReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// `target,wo,cosine` rows plus a `mean ± std` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,wo,cosine\n");
        for r in &self.results {
            out.push_str(&format!("{},{:.4},{:.4}\n", r.target, r.wo, r.cosine));
        }
        out.push_str(&format!(
            "mean ± std,{},{}\n",
            format_pm(self.wo_mean, self.wo_std),
            format_pm(self.cosine_mean, self.cosine_std)
        ));
        out
    }
}

fn assess(
    target: Target,
    model: &str,
    backend: &dyn ChatBackend,
    embedder: &dyn Embedder,
    normalizer: &dyn Normalizer,
    personas: &Personas,
    templates: &Templates,
) -> Result<AwarenessResult, AwarenessError> {
    let prompt = templates.awareness_prompt(target);
    let params = SamplingParams { max_tokens: 1024, ..SamplingParams::with_temperature(AWARENESS_TEMPERATURE) };
    let generated = backend.chat(model, "", &prompt, &params)?;
    let reference = personas.reference_text(target);
    let wo = word_overlap(&preprocess_with(&generated, normalizer)?, &preprocess_with(&reference, normalizer)?)?;
    let cos = cosine(&embedder.embed(&generated)?, &embedder.embed(&reference)?)?;
    Ok(AwarenessResult { target, wo, cosine: cos, generated_text: generated })
}

/// Asks `model` to describe every target of `instrument` and scores each
/// description against the reference profile. Per-target failures are
/// collected; the aggregate covers the successful targets only.
pub fn awareness_report(
    model: &str,
    instrument: Instrument,
    backend: &dyn ChatBackend,
    embedder: &dyn Embedder,
    normalizer: &dyn Normalizer,
    personas: &Personas,
    templates: &Templates,
) -> AwarenessReport {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for target in personas.targets(instrument) {
        match assess(target, model, backend, embedder, normalizer, personas, templates) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(AwarenessFailure { target, error: e.to_string() }),
        }
    }
    let wo: Vec<f64> = results.iter().map(|r| r.wo).collect();
    let cs: Vec<f64> = results.iter().map(|r| r.cosine).collect();
    let stat = |xs: &[f64]| if xs.is_empty() { (f64::NAN, f64::NAN) } else { (mean(xs), sample_std(xs)) };
    let (wo_mean, wo_std) = stat(&wo);
    let (cosine_mean, cosine_std) = stat(&cs);
    AwarenessReport {
        model: model.to_string(),
        instrument,
        normalizer: normalizer.name().to_string(),
        results,
        failures,
        wo_mean,
        wo_std,
        cosine_mean,
        cosine_std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn golden_sentence() {
        assert_eq!(preprocess("The quiet, quiet thinkers.").unwrap(), set(&["quiet", "thinker"]));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(preprocess(""), Err(AwarenessError::EmptyAfterPreprocess));
        assert_eq!(preprocess("the and of"), Err(AwarenessError::EmptyAfterPreprocess));
        assert_eq!(word_overlap(&set(&[]), &set(&["a"])), Err(AwarenessError::EmptyInput));
    }

    #[test]
    fn stemmer_rules() {
        let s = SStemmer;
        assert_eq!(s.normalize("abilities"), "ability");
        assert_eq!(s.normalize("values"), "value");
        assert_eq!(s.normalize("heroes"), "heroe");
        assert_eq!(s.normalize("focus"), "focus");
        assert_eq!(s.normalize("kindness"), "kindness");
        assert_eq!(s.normalize("is"), "is");
    }

    #[test]
    fn stopword_list_size() {
        assert_eq!(stopwords().len(), 179);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(word_overlap(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(word_overlap(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        let wo = word_overlap(&set(&["a", "b", "c"]), &set(&["b", "c", "d", "e"])).unwrap();
        assert!((wo - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), Err(AwarenessError::ZeroVector));
        assert_eq!(cosine(&[1.0], &[1.0, 1.0]), Err(AwarenessError::DimensionMismatch(1, 2)));
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(
            a in prop::collection::vec(-10.0f64..10.0, 5),
            b in prop::collection::vec(-10.0f64..10.0, 5),
        ) {
            if let (Ok(x), Ok(y)) = (cosine(&a, &b), cosine(&b, &a)) {
                prop_assert_eq!(x, y);
                prop_assert!(x.abs() <= 1.0);
            }
        }
    }
}
