#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recipesim::assignment::SimilarityMatrix;
use recipesim::corpus::{Corpus, Ingredient, NutrientVector, Recipe};
use recipesim::fusion::{EmbeddingSlots, FusionWeights, PairConvention, ScoreTable, SimilarityRecord, ViewScores};
use recipesim::semantic::FallbackEmbedder;

pub fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn mini_corpus_path() -> PathBuf {
    manifest_path("data/mini_corpus.jsonl")
}

pub fn mini_corpus() -> Corpus {
    recipesim::cli::load_corpus(&mini_corpus_path()).unwrap()
}

pub fn fallback_slots() -> EmbeddingSlots {
    EmbeddingSlots::new(FallbackEmbedder::new(384).with_salt(1), FallbackEmbedder::new(256).with_salt(2))
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Best total over all permutations, summed in row order.
pub fn brute_force_max(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    permutations(n)
        .iter()
        .map(|p| (0..n).map(|i| rows[i][p[i]]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Zero-pads to square, then brute-forces.
pub fn brute_force_padded(m: &SimilarityMatrix) -> f64 {
    let n = m.rows().max(m.cols());
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i < m.rows() && j < m.cols() { m.get(i, j) } else { 0.0 }).collect())
        .collect();
    brute_force_max(&rows)
}

pub fn oracle_prefix_similarity(a: &[String], b: &[String]) -> f64 {
    let mut k = 0;
    while k < a.len() && k < b.len() && a[k] == b[k] {
        k += 1;
    }
    k as f64 / a.len().max(b.len()) as f64
}

pub fn oracle_lexical(a: &Recipe, b: &Recipe) -> f64 {
    let m = SimilarityMatrix::from_fn(a.ingredients.len(), b.ingredients.len(), |i, j| {
        oracle_prefix_similarity(&a.ingredients[i].descriptor_path, &b.ingredients[j].descriptor_path)
    })
    .unwrap();
    brute_force_padded(&m) / a.ingredients.len().max(b.ingredients.len()) as f64
}

pub fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).max(0.0)
    }
}

/// Per-ingredient nutrition similarity computed the slow way: explicit
/// column z-scores over the union, then brute-force matching.
pub fn oracle_ingredient_nutrition(a: &Recipe, b: &Recipe) -> f64 {
    let all: Vec<&[f64]> = a.ingredients.iter().chain(&b.ingredients).map(|i| i.nutrients.values()).collect();
    let dim = all[0].len();
    let n = all.len() as f64;
    let z = |v: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|d| {
                let mean = all.iter().map(|x| x[d]).sum::<f64>() / n;
                let var = all.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    (v[d] - mean) / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    };
    let za: Vec<Vec<f64>> = a.ingredients.iter().map(|i| z(i.nutrients.values())).collect();
    let zb: Vec<Vec<f64>> = b.ingredients.iter().map(|i| z(i.nutrients.values())).collect();
    let m = SimilarityMatrix::from_fn(za.len(), zb.len(), |i, j| oracle_cosine(&za[i], &zb[j])).unwrap();
    brute_force_padded(&m) / za.len().max(zb.len()) as f64
}

// ---------------------------------------------------------------------------
// Seeded generators
// ---------------------------------------------------------------------------

const WORDS: [&str; 24] = [
    "spices", "pepper", "black", "red", "salt", "table", "sugars", "granulated", "oil", "olive", "juice", "lemon",
    "lime", "raw", "cooked", "beans", "green", "flour", "wheat", "milk", "whole", "butter", "salted", "water",
];

const VERBS: [&str; 12] = ["mix", "stir", "bake", "boil", "shake", "pour", "chop", "whisk", "simmer", "fry", "chill", "serve"];

/// Small random recipe with a shared vocabulary so paths often overlap.
pub fn random_recipe(rng: &mut ChaCha8Rng, id: &str, dim: usize) -> Recipe {
    let n = rng.random_range(1..=6);
    let ingredients = (0..n)
        .map(|_| {
            let depth = rng.random_range(1..=4);
            let path: Vec<String> = (0..depth).map(|_| WORDS[rng.random_range(0..6)].to_string()).collect();
            let nutrients = (0..dim)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { (rng.random::<f64>() * 50.0 * 100.0).round() / 100.0 })
                .collect();
            Ingredient { descriptor_path: path, nutrients: NutrientVector(nutrients), quantity: None }
        })
        .collect();
    let steps = rng.random_range(1..=3);
    let instructions = (0..steps)
        .map(|_| {
            let words = rng.random_range(2..=6);
            (0..words).map(|_| VERBS[rng.random_range(0..VERBS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let mut profile: Vec<f64> = (0..dim).map(|_| (rng.random::<f64>() * 20.0 * 100.0).round() / 100.0).collect();
    if profile.iter().all(|&v| v == 0.0) {
        profile[0] = 1.0;
    }
    Recipe {
        id: id.to_string(),
        title: id.to_string(),
        ingredients,
        instructions,
        nutrition_per_100g: NutrientVector(profile),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unordered table over ids `r0000..`, one row per listed pair.
pub fn table_from_scores(rows: Vec<(String, String, ViewScores)>) -> ScoreTable {
    let w = FusionWeights::equal();
    ScoreTable::new(
        PairConvention::Unordered,
        rows.into_iter().map(|(a, b, s)| SimilarityRecord::new(a, b, s, &w).unwrap()).collect(),
    )
}

/// Pairs labelled by `lexical > 0.5`, with a gap of `margin` on each side
/// of the boundary. The other two features are uniform noise.
pub fn lexical_separable(n: usize, margin: f64, seed: u64) -> Vec<recipesim::eval_ml::LabeledPair> {
    let mut g = rng(seed);
    (0..n)
        .map(|i| {
            let label = i % 2 == 0;
            let lo = if label { 0.5 + margin } else { 0.0 };
            let hi = if label { 1.0 } else { 0.5 - margin };
            let lex = lo + g.random::<f64>() * (hi - lo);
            let f = [g.random::<f64>(), g.random::<f64>(), lex];
            recipesim::eval_ml::LabeledPair::new(format!("m{i:04}"), format!("s{i:04}"), f, label).unwrap()
        })
        .collect()
}

/// Labels drawn by a fair coin, independent of the uniform features.
pub fn coin_flip(n: usize, seed: u64) -> Vec<recipesim::eval_ml::LabeledPair> {
    let mut g = rng(seed);
    (0..n)
        .map(|i| {
            let f = [g.random::<f64>(), g.random::<f64>(), g.random::<f64>()];
            recipesim::eval_ml::LabeledPair::new(format!("m{i:04}"), format!("s{i:04}"), f, g.random_bool(0.5)).unwrap()
        })
        .collect()
}

/// Two experts co-judge the first `pairs` rows of `table`; the first
/// `disagreements` of them get opposite verdicts.
pub fn planted_agreement_store(
    table: &ScoreTable,
    pairs: usize,
    disagreements: usize,
) -> recipesim::annotation::JudgmentStore {
    use recipesim::annotation::{Judgment, JudgmentStore, Verdict};
    let store = JudgmentStore::in_memory();
    for (k, r) in table.records().iter().take(pairs).enumerate() {
        let first = if k % 3 == 0 { Verdict::Similar } else { Verdict::NotSimilar };
        let second = match (k < disagreements, first) {
            (false, v) => v,
            (true, Verdict::Similar) => Verdict::NotSimilar,
            (true, Verdict::NotSimilar) => Verdict::Similar,
        };
        for (expert, verdict) in [("expert_a", first), ("expert_b", second)] {
            let j = Judgment {
                expert: expert.into(),
                main_id: r.main_id.clone(),
                secondary_id: r.secondary_id.clone(),
                verdict,
                timestamp: k as u64,
            };
            store.submit(j).unwrap();
        }
    }
    store
}
