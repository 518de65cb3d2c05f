//! Instruction embeddings: the built-in hashing embedder, a precomputed
//! embedding file in both on-disk forms, and cosine scoring between them.

use recipesim::semantic::{load_embeddings, semantic_similarity, EmbeddingProvider, FallbackEmbedder, FileEmbeddings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = recipesim::cli::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl").as_ref())?;
    let embedder = FallbackEmbedder::new(64).with_salt(3);

    let mut store = FileEmbeddings::new(embedder.model_tag(), embedder.dimension());
    for r in corpus.recipes() {
        store.insert(r.id.clone(), embedder.embed(r)?.values().to_vec())?;
    }
    let dir = std::env::temp_dir().join("recipesim-embeddings-example");
    std::fs::create_dir_all(&dir)?;
    let text = dir.join("instructions.emb.txt");
    let binary = dir.join("instructions.emb");
    store.write_text(std::fs::File::create(&text)?)?;
    store.write_binary(std::fs::File::create(&binary)?)?;
    let from_text = load_embeddings(&text)?;
    let from_binary = load_embeddings(&binary)?;
    println!(
        "{} vectors; text {} bytes, binary {} bytes",
        from_text.len(),
        std::fs::metadata(&text)?.len(),
        std::fs::metadata(&binary)?.len()
    );

    let a = corpus.get("easy-lemonade").ok_or("missing")?;
    for id in ["lemon-granita", "texican-cocktail", "roasted-potatoes"] {
        let b = corpus.get(id).ok_or("missing")?;
        let live = semantic_similarity(&embedder.embed(a)?, &embedder.embed(b)?)?;
        let stored = semantic_similarity(&from_binary.embed(a)?, &from_binary.embed(b)?)?;
        println!("{} vs {id}: {live:.4} (binary file {stored:.4})", a.id);
    }
    Ok(())
}
