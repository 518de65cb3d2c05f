//! The two nutritional views: cosine of per-100g profiles, and matched
//! ingredient vectors after pair-local standardization.

use recipesim::nutrition::{clamped_cosine, nutrition_scores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cocktail = [0.12, 0.36, 0.06, 0.01, 7.22];
    let dressing = [6.03, 0.08, 0.19, 0.83, 0.15];
    let potatoes = [2.97, 2.48, 0.49, 0.42, 0.0];
    println!("dressing vs cocktail  {:.4}", clamped_cosine(&dressing, &cocktail)?);
    println!("potatoes vs cocktail  {:.4}", clamped_cosine(&potatoes, &cocktail)?);

    let corpus = recipesim::cli::load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mini_corpus.jsonl").as_ref())?;
    println!("schema: {}", corpus.nutrient_schema().join(", "));
    let pairs = [("easy-lemonade", "lemon-granita"), ("bean-jam-anko", "taco-seasoning"), ("roasted-potatoes", "freezer-apple-pie-filling")];
    for (a, b) in pairs {
        let s = nutrition_scores(corpus.get(a).ok_or(a)?, corpus.get(b).ok_or(b)?)?;
        println!("{a} / {b}: recipe {:.4}, ingredient {:.4}", s.per_recipe, s.per_ingredient);
    }
    Ok(())
}
