use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{stable_hash, ClientError, RetryPolicy};

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError>;
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        (**self).embed(text)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        (**self).embed(text)
    }
}

/// Client for `{base_url}/v1/embeddings`.
pub struct HttpEmbedder {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: None,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_api_key_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn once(&self, text: &str) -> Result<Vec<f64>, (ClientError, bool)> {
        let url = format!("{}/v1/embeddings", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(k) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        match req.send_json(json!({"model": self.model, "input": text})) {
            Ok(resp) => {
                let v: Value = resp.into_json().map_err(|e| (ClientError::InvalidResponse(e.to_string()), false))?;
                let arr = v
                    .pointer("/data/0/embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| (ClientError::InvalidResponse("missing data[0].embedding".into()), false))?;
                arr.iter()
                    .map(|x| x.as_f64().ok_or_else(|| (ClientError::InvalidResponse("non-numeric embedding".into()), false)))
                    .collect()
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err((ClientError::Http { status, body }, status == 429 || status >= 500))
            }
            Err(ureq::Error::Transport(t)) => Err((ClientError::Network(t.to_string()), true)),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let mut rng = rand::thread_rng();
        let mut retry = 0;
        loop {
            match self.once(text) {
                Ok(v) => return Ok(v),
                Err((e, true)) if retry < self.retry.max_retries => {
                    log::debug!("embedding request failed ({e}); retrying");
                    std::thread::sleep(self.retry.delay(retry, &mut rng));
                    retry += 1;
                }
                Err((ClientError::Http { status: 429, .. }, true)) => return Err(ClientError::RateLimited { retries: retry }),
                Err((e, _)) => return Err(e),
            }
        }
    }
}

/// Vectors supplied ahead of time as a JSON object `{text: [f64, ...]}`.
pub struct PrecomputedEmbeddings {
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn from_map(vectors: HashMap<String, Vec<f64>>) -> Result<Self, ClientError> {
        let mut dim = None;
        for v in vectors.values() {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(ClientError::DimensionMismatch { expected: d, found: v.len() }),
                _ => {}
            }
        }
        Ok(Self { vectors })
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let src = std::fs::read_to_string(path).map_err(|e| ClientError::InvalidResponse(format!("{}: {e}", path.display())))?;
        let map: HashMap<String, Vec<f64>> =
            serde_json::from_str(&src).map_err(|e| ClientError::InvalidResponse(format!("{}: {e}", path.display())))?;
        Self::from_map(map)
    }
}

impl Embedder for PrecomputedEmbeddings {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        self.vectors.get(text).cloned().ok_or_else(|| ClientError::MissingVector(text.to_string()))
    }
}

/// Offline bag-of-words embedder using signed feature hashing. Useful for
/// tests and dry runs; it carries no semantics beyond shared vocabulary.
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let mut v = vec![0.0; self.dim];
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = stable_hash([tok.to_lowercase()]);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        Ok(v)
    }
}

/// Memoizes another embedder and rejects vectors whose dimension differs
/// from the first one seen.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<HashMap<String, Vec<f64>>>,
    dim: Mutex<Option<usize>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()), dim: Mutex::new(None) }
    }

    pub fn dimension(&self) -> Option<usize> {
        *self.dim.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        if let Some(v) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        {
            let mut dim = self.dim.lock().unwrap_or_else(|e| e.into_inner());
            match *dim {
                None => *dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(ClientError::DimensionMismatch { expected: d, found: v.len() }),
                _ => {}
            }
        }
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Shifting(Mutex<usize>);

    impl Embedder for Shifting {
        fn embed(&self, _: &str) -> Result<Vec<f64>, ClientError> {
            let mut n = self.0.lock().unwrap();
            *n += 1;
            Ok(vec![1.0; *n])
        }
    }

    #[test]
    fn hashing_is_stable_and_fixed_width() {
        let e = HashingEmbedder::default();
        let a = e.embed("quiet thinkers").unwrap();
        assert_eq!(a, e.embed("quiet thinkers").unwrap());
        assert_eq!(a.len(), e.embed("something else entirely").unwrap().len());
    }

    #[test]
    fn precomputed_missing_text() {
        let p = PrecomputedEmbeddings::from_map(HashMap::from([("a".to_string(), vec![1.0, 0.0])])).unwrap();
        assert_eq!(p.embed("a").unwrap(), vec![1.0, 0.0]);
        assert!(matches!(p.embed("b"), Err(ClientError::MissingVector(_))));
        let bad = HashMap::from([("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])]);
        assert!(matches!(PrecomputedEmbeddings::from_map(bad), Err(ClientError::DimensionMismatch { .. })));
    }

    #[test]
    fn cache_detects_dimension_change() {
        let c = CachedEmbedder::new(Shifting(Mutex::new(0)));
        let first = c.embed("x").unwrap();
        assert_eq!(c.embed("x").unwrap(), first);
        assert_eq!(c.embed("y"), Err(ClientError::DimensionMismatch { expected: 1, found: 2 }));
    }
}
