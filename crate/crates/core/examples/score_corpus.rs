//! Scores every pair of a corpus, writes the table and lists the top fused
//! candidates for one recipe.
//!
//! cargo run --example score_corpus -- [corpus.jsonl] [workers]

use recipesim::fusion::{score_all, top_candidates, EmbeddingSlots, FusionWeights, ScoreOptions, Selection};
use recipesim::semantic::FallbackEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl").into());
    let workers: usize = args.next().map(|w| w.parse()).transpose()?.unwrap_or(4);

    let corpus = recipesim::cli::load_corpus(path.as_ref())?;
    let slots = EmbeddingSlots::new(FallbackEmbedder::new(384).with_salt(1), FallbackEmbedder::new(256).with_salt(2));
    let options = ScoreOptions { workers, ..Default::default() };
    let start = std::time::Instant::now();
    let run = score_all(&corpus, &slots, &FusionWeights::equal(), &options)?;
    println!("{} pairs in {:.1?} ({} skipped)", run.table.len(), start.elapsed(), run.skipped.len());

    let out = std::env::temp_dir().join("recipesim-scores.csv");
    run.table.write_csv(std::fs::File::create(&out)?)?;
    println!("table written to {}", out.display());

    let main_id = corpus.ids().next().ok_or("empty corpus")?.to_string();
    println!("top 5 for {main_id}:");
    for c in top_candidates(&run.table, &main_id, Selection::TopK(5))? {
        let r = run.table.find(&main_id, &c.secondary_id).ok_or("missing row")?;
        println!("  {:<28} fused {:.4}  sem {:.3}  lex {:.3}  nutr {:.3}", c.secondary_id, c.fused, r.sem_avg, r.lexical, r.nutr_avg);
    }

    // Reweighting changes only the fused column.
    let lexical_only = FusionWeights::new(0.0, 1.0, 0.0)?;
    let first = &run.table.records()[0];
    println!("{} / {}: equal {:.4}, lexical-only {:.4}", first.main_id, first.secondary_id, first.fused, first.reweighted(&lexical_only)?.fused);
    Ok(())
}
