//! A full annotation round against the HTTP API: build a task set, start the
//! server on an ephemeral port, let two scripted experts judge every pair,
//! then read agreement and the exported ground truth.

use std::sync::Arc;

use recipesim::annotation::{create_task_set, AnnotationService, JudgmentStore, ServiceOptions};
use recipesim::fusion::Selection;
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = recipesim::cli::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl").as_ref())?;
    let table = recipesim::cli::load_table(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/mini_scores.csv").as_ref())?;
    let tasks = create_task_set(&table, 5, Selection::Fraction(0.1), 42)?;
    println!("{} mains, {} pairs", tasks.mains.len(), tasks.pairs.len());

    let log = std::env::temp_dir().join(format!("recipesim-judgments-{}.jsonl", std::process::id()));
    let store = JudgmentStore::open(&log)?;
    let service = Arc::new(AnnotationService::new(corpus, tasks, store, ServiceOptions::default())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(recipesim::server::serve(listener, service, async {
        stopped.await.ok();
    }));

    // The blocking client keeps the example free of an async HTTP client.
    let report = tokio::task::spawn_blocking(move || -> Result<(Value, String), reqwest::Error> {
        let http = reqwest::blocking::Client::new();
        for (expert, contrarian_every) in [("alice", 0), ("bob", 4)] {
            let mut k = 0;
            loop {
                let next: Value = http.get(format!("{base}/api/tasks/next?expert={expert}")).send()?.json()?;
                if next["status"] == "done" {
                    break;
                }
                let even = next["main"]["ingredients"].as_array().map_or(0, |v| v.len()).is_multiple_of(2);
                let flip = contrarian_every > 0 && (k as usize).is_multiple_of(contrarian_every);
                let verdict = if even != flip { "similar" } else { "not_similar" };
                let body = json!({ "expert": expert, "main_id": next["main"]["id"], "secondary_id": next["secondary"]["id"], "verdict": verdict });
                http.post(format!("{base}/api/judgments")).json(&body).send()?.error_for_status()?;
                k += 1;
            }
        }
        let stats: Value = http.get(format!("{base}/api/stats/agreement")).send()?.json()?;
        let csv = http.get(format!("{base}/api/export/ground-truth")).send()?.text()?;
        Ok((stats, csv))
    })
    .await??;

    println!("agreement: {}", report.0);
    println!("ground truth:\n{}", report.1);
    stop.send(()).ok();
    server.await??;
    std::fs::remove_file(&log)?;
    Ok(())
}
