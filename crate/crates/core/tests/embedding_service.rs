mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use common::*;
use recipesim::fusion::{score_all, EmbeddingSlots, FusionWeights, MissingPolicy, ScoreOptions};
use recipesim::semantic::{
    fallback_embed, EmbedRequest, EmbedResponse, EmbeddingError, EmbeddingProvider, FallbackEmbedder, HttpEmbeddingConfig,
    HttpEmbeddingProvider,
};

#[derive(Default)]
struct Mock {
    calls: AtomicUsize,
    texts: AtomicUsize,
    /// Calls answered with 503 before the service starts working.
    fail_first: usize,
    dimension: usize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

async fn embed(State(m): State<Arc<Mock>>, Json(req): Json<EmbedRequest>) -> Result<Json<EmbedResponse>, StatusCode> {
    let now = m.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    m.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    m.in_flight.fetch_sub(1, Ordering::SeqCst);
    let call = m.calls.fetch_add(1, Ordering::SeqCst);
    if call < m.fail_first {
        return Err(StatusCode::SERVICE_UNAVAILABLE);
    }
    m.texts.fetch_add(req.texts.len(), Ordering::SeqCst);
    let vectors = req.texts.iter().map(|t| fallback_embed(t, m.dimension).unwrap().values().to_vec()).collect();
    Ok(Json(EmbedResponse { vectors }))
}

/// Starts the mock on its own runtime thread and returns its URL.
fn start(mock: Arc<Mock>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/embed", post(embed)).with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}/embed", rx.recv().unwrap())
}

fn config(url: &str, dim: usize) -> HttpEmbeddingConfig {
    HttpEmbeddingConfig { batch_size: 4, max_in_flight: 3, retries: 2, timeout_ms: 5_000, ..HttpEmbeddingConfig::new(url, "mock", dim) }
}

#[test]
fn service_vectors_match_local_computation_and_are_cached() {
    let mock = Arc::new(Mock { dimension: 32, ..Default::default() });
    let url = start(mock.clone());
    let provider = HttpEmbeddingProvider::new(config(&url, 32)).unwrap();
    let corpus = mini_corpus();
    let recipes: Vec<_> = corpus.recipes().collect();
    let got = provider.embed_all(&recipes);
    for (r, e) in recipes.iter().zip(&got) {
        let e = e.as_ref().unwrap();
        assert_eq!(e.model_tag(), "mock");
        let local = FallbackEmbedder::new(32).embed_text(&r.instruction_text()).unwrap();
        // JSON decoding may be off by one ulp.
        assert!(e.values().iter().zip(local.values()).all(|(x, y)| (x - y).abs() < 1e-15));
    }
    let calls = mock.calls.load(Ordering::SeqCst);
    assert_eq!(calls, 50_usize.div_ceil(4));
    assert!(mock.peak.load(Ordering::SeqCst) <= 3);
    provider.embed(recipes[0]).unwrap();
    provider.embed_all(&recipes);
    assert_eq!(mock.calls.load(Ordering::SeqCst), calls, "cached lookups must not hit the service");
}

#[test]
fn transient_failures_are_retried() {
    let mock = Arc::new(Mock { dimension: 16, fail_first: 2, ..Default::default() });
    let url = start(mock.clone());
    let cfg = HttpEmbeddingConfig { max_in_flight: 1, ..config(&url, 16) };
    let provider = HttpEmbeddingProvider::new(cfg).unwrap();
    let corpus = mini_corpus();
    let r = corpus.get("mojito").unwrap();
    assert!(provider.embed(r).is_ok());
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_surface_as_missing_embeddings() {
    let mock = Arc::new(Mock { dimension: 16, fail_first: usize::MAX, ..Default::default() });
    let url = start(mock.clone());
    let cfg = HttpEmbeddingConfig { retries: 1, ..config(&url, 16) };
    let corpus = mini_corpus();
    let slots = EmbeddingSlots { model_a: Box::new(HttpEmbeddingProvider::new(cfg).unwrap()), model_b: Box::new(FallbackEmbedder::new(16)) };
    let abort = ScoreOptions { missing: MissingPolicy::Abort, ..Default::default() };
    assert!(score_all(&corpus, &slots, &FusionWeights::equal(), &abort).is_err());
    let skip = score_all(&corpus, &slots, &FusionWeights::equal(), &ScoreOptions::default()).unwrap();
    assert!(skip.table.is_empty());
    assert_eq!(skip.skipped.len(), 1225);
}

#[test]
fn wrong_dimension_is_rejected() {
    let mock = Arc::new(Mock { dimension: 8, ..Default::default() });
    let url = start(mock);
    let provider = HttpEmbeddingProvider::new(config(&url, 12)).unwrap();
    let corpus = mini_corpus();
    let err = provider.embed(corpus.get("limeade").unwrap()).unwrap_err();
    assert!(matches!(err, EmbeddingError::Service(ref m) if m.contains("dimension")), "{err}");
}

#[test]
fn unreachable_service_fails_cleanly() {
    let cfg = HttpEmbeddingConfig { retries: 0, timeout_ms: 500, ..HttpEmbeddingConfig::new("http://127.0.0.1:9/embed", "none", 4) };
    let provider = HttpEmbeddingProvider::new(cfg).unwrap();
    let corpus = mini_corpus();
    assert!(provider.embed(corpus.get("limeade").unwrap()).is_err());
}
