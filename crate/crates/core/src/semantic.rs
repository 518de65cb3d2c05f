//! Instruction-text semantic similarity over sentence embeddings.
//!
//! Embeddings come from an [`EmbeddingProvider`]: precomputed files (one per
//! model), an external HTTP embedding service, or the deterministic
//! [`FallbackEmbedder`] used for tests and demos.
//!
//! # Embedding files
//!
//! Text form: a header line `<model_tag> <dimension> <count>`, then one line
//! per recipe with the id followed by `dimension` space-separated floats.
//!
//! Binary form (little-endian): the 8-byte magic `RSEMBED1`, `u32` tag length,
//! tag bytes, `u32` dimension, `u32` count, then per record a `u32` id length,
//! id bytes and `dimension` `f32` values.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Recipe;
use crate::nutrition::clamped_cosine;

pub const BINARY_MAGIC: &[u8; 8] = b"RSEMBED1";
pub const FALLBACK_TAG: &str = "fallback";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("missing embedding for recipe {id:?} (model {model_tag})")]
    Missing { id: String, model_tag: String },
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error("embedding for {id:?} has dimension {found}, expected {expected}")]
    Dimension { id: String, expected: usize, found: usize },
    #[error("embedding has non-finite entries or zero norm")]
    Degenerate,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embeddings from different providers: {0} vs {1}")]
    ProviderMismatch(String, String),
    #[error("embedding service: {0}")]
    Service(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    model_tag: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, model_tag: impl Into<String>) -> Result<Self, EmbeddingError> {
        let finite = values.iter().all(|v| v.is_finite());
        if !finite || values.iter().all(|&v| v == 0.0) {
            return Err(EmbeddingError::Degenerate);
        }
        Ok(Self { values, model_tag: model_tag.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Cosine similarity of two embeddings from the same provider, clamped to `[0, 1]`.
pub fn semantic_similarity(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.model_tag != b.model_tag || a.dimension() != b.dimension() {
        return Err(EmbeddingError::ProviderMismatch(
            format!("{}/{}", a.model_tag, a.dimension()),
            format!("{}/{}", b.model_tag, b.dimension()),
        ));
    }
    Ok(clamped_cosine(&a.values, &b.values).expect("dimensions checked"))
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_tag(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, recipe: &Recipe) -> Result<Embedding, EmbeddingError>;

    /// Embeds many recipes; results are in input order.
    fn embed_all(&self, recipes: &[&Recipe]) -> Vec<Result<Embedding, EmbeddingError>> {
        recipes.iter().map(|r| self.embed(r)).collect()
    }
}

// ---------------------------------------------------------------------------
// File-backed provider
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    model_tag: String,
    dimension: usize,
    vectors: HashMap<String, Embedding>,
}

impl FileEmbeddings {
    pub fn new(model_tag: impl Into<String>, dimension: usize) -> Self {
        Self { model_tag: model_tag.into(), dimension, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<(), EmbeddingError> {
        let id = id.into();
        if values.len() != self.dimension {
            return Err(EmbeddingError::Dimension { id, expected: self.dimension, found: values.len() });
        }
        if self.vectors.contains_key(&id) {
            return Err(EmbeddingError::DuplicateId(id));
        }
        let e = Embedding::new(values, self.model_tag.clone())
            .map_err(|_| EmbeddingError::Format(format!("degenerate vector for {id:?}")))?;
        self.vectors.insert(id, e);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&Embedding, EmbeddingError> {
        self.vectors
            .get(id)
            .ok_or_else(|| EmbeddingError::Missing { id: id.to_string(), model_tag: self.model_tag.clone() })
    }

    fn sorted_ids(&self) -> Vec<&String> {
        let mut ids: Vec<_> = self.vectors.keys().collect();
        ids.sort();
        ids
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        writeln!(out, "{} {} {}", self.model_tag, self.dimension, self.vectors.len())?;
        for id in self.sorted_ids() {
            write!(out, "{id}")?;
            for v in self.vectors[id].values() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        out.write_all(BINARY_MAGIC)?;
        write_u32(&mut out, self.model_tag.len())?;
        out.write_all(self.model_tag.as_bytes())?;
        write_u32(&mut out, self.dimension)?;
        write_u32(&mut out, self.vectors.len())?;
        for id in self.sorted_ids() {
            write_u32(&mut out, id.len())?;
            out.write_all(id.as_bytes())?;
            for &v in self.vectors[id].values() {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads either the text or the binary form, detected by the magic bytes.
    pub fn read<R: Read>(input: R) -> Result<Self, EmbeddingError> {
        let mut reader = BufReader::new(input);
        let is_binary = reader.fill_buf()?.starts_with(BINARY_MAGIC);
        if is_binary {
            read_binary(reader)
        } else {
            read_text(reader)
        }
    }
}

/// Loads an embedding file from disk.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<FileEmbeddings, EmbeddingError> {
    FileEmbeddings::read(std::fs::File::open(path)?)
}

impl EmbeddingProvider for FileEmbeddings {
    fn model_tag(&self) -> &str {
        &self.model_tag
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, recipe: &Recipe) -> Result<Embedding, EmbeddingError> {
        self.get(&recipe.id).cloned()
    }
}

fn write_u32<W: Write>(out: &mut W, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
    out.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> Result<usize, EmbeddingError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|e| EmbeddingError::Format(format!("truncated binary file: {e}")))?;
    Ok(u32::from_le_bytes(buf) as usize)
}

fn read_string<R: Read>(input: &mut R) -> Result<String, EmbeddingError> {
    let len = read_u32(input)?;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf).map_err(|e| EmbeddingError::Format(format!("truncated binary file: {e}")))?;
    String::from_utf8(buf).map_err(|e| EmbeddingError::Format(e.to_string()))
}

fn read_binary<R: Read>(mut input: R) -> Result<FileEmbeddings, EmbeddingError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    let tag = read_string(&mut input)?;
    let dimension = read_u32(&mut input)?;
    let count = read_u32(&mut input)?;
    let mut store = FileEmbeddings::new(tag, dimension);
    let mut buf = vec![0u8; dimension * 4];
    for _ in 0..count {
        let id = read_string(&mut input)?;
        input.read_exact(&mut buf).map_err(|e| EmbeddingError::Format(format!("truncated vector for {id:?}: {e}")))?;
        let values = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        store.insert(id, values)?;
    }
    Ok(store)
}

fn read_text<R: BufRead>(input: R) -> Result<FileEmbeddings, EmbeddingError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| EmbeddingError::Format("empty file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [tag, dim, count] = fields.as_slice() else {
        return Err(EmbeddingError::Format(format!("bad header {header:?}")));
    };
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| EmbeddingError::Format(format!("bad {what} {s:?}")));
    let dimension = parse(dim, "dimension")?;
    let count = parse(count, "count")?;
    let mut store = FileEmbeddings::new(*tag, dimension);
    for line in lines {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(id) = parts.next() else { continue };
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|_| EmbeddingError::Format(format!("bad float {p:?} for {id:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        store.insert(id, values)?;
    }
    if store.len() != count {
        return Err(EmbeddingError::Format(format!("header declares {count} vectors, found {}", store.len())));
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Deterministic fallback embedder
// ---------------------------------------------------------------------------

/// Feature-hashed bag of words, L2-normalized. Stands in for a transformer
/// when no precomputed embeddings are available.
#[derive(Debug, Clone)]
pub struct FallbackEmbedder {
    dimension: usize,
    salt: u64,
}

impl FallbackEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, salt: 0 }
    }

    /// Different salts give independent hash projections, used to fill two
    /// provider slots with distinct but related views.
    pub fn with_salt(mut self, salt: u64) -> Self {
        self.salt = salt;
        self
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        if self.dimension == 0 {
            return Err(EmbeddingError::Format("dimension must be positive".into()));
        }
        let mut values = vec![0.0; self.dimension];
        let mut any = false;
        for token in tokens(text) {
            let h = fnv1a(self.salt, token.as_bytes());
            values[(h % self.dimension as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbeddingError::EmptyText);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        Embedding::new(values, FALLBACK_TAG)
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn model_tag(&self) -> &str {
        FALLBACK_TAG
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, recipe: &Recipe) -> Result<Embedding, EmbeddingError> {
        self.embed_text(&recipe.instruction_text())
    }
}

pub fn fallback_embed(text: &str, dimension: usize) -> Result<Embedding, EmbeddingError> {
    FallbackEmbedder::new(dimension).embed_text(text)
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

fn fnv1a(salt: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// External HTTP embedding service
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbeddingConfig {
    pub endpoint: String,
    pub model_tag: String,
    pub dimension: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retries() -> usize {
    2
}
fn default_batch_size() -> usize {
    32
}

impl HttpEmbeddingConfig {
    pub fn new(endpoint: impl Into<String>, model_tag: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_tag: model_tag.into(),
            dimension,
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            retries: default_retries(),
            batch_size: default_batch_size(),
        }
    }
}

/// Calls an embedding service with `{texts: [...]}` and expects
/// `{vectors: [[...]]}` back. Results are cached per recipe id so repeated
/// lookups within a run are identical.
pub struct HttpEmbeddingProvider {
    config: HttpEmbeddingConfig,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<String, Embedding>>,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpEmbeddingConfig) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| EmbeddingError::Service(e.to_string()))?;
        Ok(Self { config, client, cache: Mutex::new(HashMap::new()) })
    }

    fn request_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, (bool, EmbeddingError)> {
        let body = EmbedRequest { texts: texts.to_vec() };
        let resp = self
            .client
            .post(&self.config.endpoint)
            .json(&body)
            .send()
            .map_err(|e| (true, EmbeddingError::Service(e.to_string())))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err((retryable, EmbeddingError::Service(format!("status {status}"))));
        }
        let parsed: EmbedResponse = resp.json().map_err(|e| (false, EmbeddingError::Service(e.to_string())))?;
        if parsed.vectors.len() != texts.len() {
            return Err((
                false,
                EmbeddingError::Service(format!("sent {} texts, got {} vectors", texts.len(), parsed.vectors.len())),
            ));
        }
        Ok(parsed.vectors)
    }

    /// Posts one batch, retrying transport errors and 5xx/429 responses.
    /// Embedding is idempotent so retries are safe.
    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut attempt = 0;
        loop {
            match self.request_once(texts) {
                Ok(v) => return Ok(v),
                Err((true, e)) if attempt < self.config.retries => {
                    log::warn!("embedding request failed (attempt {}): {e}", attempt + 1);
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 * attempt as u64));
                }
                Err((_, e)) => return Err(e),
            }
        }
    }

    fn to_embedding(&self, id: &str, values: Vec<f64>) -> Result<Embedding, EmbeddingError> {
        if values.len() != self.config.dimension {
            return Err(EmbeddingError::Dimension {
                id: id.to_string(),
                expected: self.config.dimension,
                found: values.len(),
            });
        }
        Embedding::new(values, self.config.model_tag.clone())
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model_tag(&self) -> &str {
        &self.config.model_tag
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, recipe: &Recipe) -> Result<Embedding, EmbeddingError> {
        self.embed_all(&[recipe]).pop().expect("one result per input")
    }

    fn embed_all(&self, recipes: &[&Recipe]) -> Vec<Result<Embedding, EmbeddingError>> {
        let pending: Vec<usize> = {
            let cache = self.cache.lock().unwrap();
            (0..recipes.len()).filter(|&i| !cache.contains_key(&recipes[i].id)).collect()
        };
        let batches: Vec<&[usize]> = pending.chunks(self.config.batch_size.max(1)).collect();
        let failures: Mutex<HashMap<usize, String>> = Mutex::new(HashMap::new());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.max(1).min(batches.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(b) else { break };
                    let texts: Vec<String> = batch.iter().map(|&i| recipes[i].instruction_text()).collect();
                    match self.request(&texts) {
                        Ok(vectors) => {
                            for (&i, values) in batch.iter().zip(vectors) {
                                match self.to_embedding(&recipes[i].id, values) {
                                    Ok(e) => {
                                        self.cache.lock().unwrap().insert(recipes[i].id.clone(), e);
                                    }
                                    Err(e) => {
                                        failures.lock().unwrap().insert(i, e.to_string());
                                    }
                                }
                            }
                        }
                        Err(e) => {
                            let mut f = failures.lock().unwrap();
                            for &i in *batch {
                                f.insert(i, e.to_string());
                            }
                        }
                    }
                });
            }
        });
        let cache = self.cache.lock().unwrap();
        let failures = failures.into_inner().unwrap();
        (0..recipes.len())
            .map(|i| match cache.get(&recipes[i].id) {
                Some(e) => Ok(e.clone()),
                None => Err(EmbeddingError::Service(
                    failures.get(&i).cloned().unwrap_or_else(|| "no vector returned".into()),
                )),
            })
            .collect()
    }
}
