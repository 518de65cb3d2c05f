//! Prefix similarity between comma-separated ingredient descriptors, and the
//! recipe-level lexical score built on it.

use recipesim::corpus::ingredient_path;
use recipesim::lexical::{ingredient_similarity, lexical_similarity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = [
        ("spices, pepper, black", "spices, pepper, red or cayenne"),
        ("oil, olive, salad or cooking", "oil, canola"),
        ("salt, table", "salt, table"),
        ("lemon juice, raw", "lime juice, raw"),
    ];
    for (a, b) in pairs {
        let s = ingredient_similarity(&ingredient_path(a)?, &ingredient_path(b)?)?;
        println!("{s:.4}  {a:?} vs {b:?}");
    }

    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl").into());
    let corpus = recipesim::cli::load_corpus(path.as_ref())?;
    let a = corpus.get("easy-lemonade").ok_or("easy-lemonade missing")?;
    for b in ["lemon-granita", "french-dressing", "taco-seasoning"] {
        let b = corpus.get(b).ok_or("recipe missing")?;
        println!("lexical({}, {}) = {:.4}", a.id, b.id, lexical_similarity(a, b)?.value());
    }
    Ok(())
}
