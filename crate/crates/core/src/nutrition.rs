//! Nutritional similarity: whole-recipe nutrient profiles and per-ingredient
//! standardized matching.

use thiserror::Error;

use crate::assignment::{optimal_assignment, pad_square, SimilarityMatrix};
use crate::corpus::{NutrientVector, Recipe};

#[derive(Debug, Error, PartialEq)]
pub enum NutritionError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("recipe {0:?} has no ingredients")]
    NoIngredients(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutritionScores {
    pub per_recipe: f64,
    pub per_ingredient: f64,
}

/// Cosine of the angle between `u` and `v`. An all-zero vector has cosine 0
/// with everything.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, NutritionError> {
    if u.len() != v.len() {
        return Err(NutritionError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine clamped to `[0, 1]`.
pub fn clamped_cosine(u: &[f64], v: &[f64]) -> Result<f64, NutritionError> {
    cosine(u, v).map(|c| c.max(0.0))
}

pub fn recipe_nutrition_similarity(a: &Recipe, b: &Recipe) -> Result<f64, NutritionError> {
    clamped_cosine(a.nutrition_per_100g.values(), b.nutrition_per_100g.values())
}

/// Standardized ingredient vectors of one recipe.
pub type Standardized = Vec<Vec<f64>>;

/// Z-scores each nutrient dimension over the union of both ingredient lists
/// (population standard deviation). Zero-variance dimensions become 0.
pub fn standardize_pair(a: &[NutrientVector], b: &[NutrientVector]) -> Result<(Standardized, Standardized), NutritionError> {
    let dim = a.first().or(b.first()).map_or(0, NutrientVector::len);
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(NutritionError::DimensionMismatch(dim, bad.len()));
    }
    let n = (a.len() + b.len()) as f64;
    let mut mean = vec![0.0; dim];
    for v in a.iter().chain(b) {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in a.iter().chain(b) {
        for ((s, x), m) in var.iter_mut().zip(v.values()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let scale = |v: &NutrientVector| -> Vec<f64> {
        v.values()
            .iter()
            .zip(&mean)
            .zip(&std)
            .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    };
    Ok((a.iter().map(scale).collect(), b.iter().map(scale).collect()))
}

/// Mean optimally-matched cosine between standardized ingredient nutrient
/// vectors, over `max(|a|, |b|)` slots.
pub fn ingredient_vectors_similarity(a: &[NutrientVector], b: &[NutrientVector]) -> Result<f64, NutritionError> {
    // Fixed orientation makes the result exactly symmetric in floating point.
    let (a, b) = if order_key(b) < order_key(a) { (b, a) } else { (a, b) };
    let (sa, sb) = standardize_pair(a, b)?;
    let mut entries = Vec::with_capacity(sa.len() * sb.len());
    for u in &sa {
        for v in &sb {
            entries.push(clamped_cosine(u, v)?);
        }
    }
    let m = SimilarityMatrix::new(sa.len(), sb.len(), entries).expect("clamped cosines lie in [0, 1]");
    let assignment = optimal_assignment(&pad_square(&m)).expect("padded matrix is square");
    Ok((assignment.total / sa.len().max(sb.len()) as f64).clamp(0.0, 1.0))
}

fn order_key(vs: &[NutrientVector]) -> Vec<Vec<u64>> {
    vs.iter().map(|v| v.values().iter().map(|x| x.to_bits()).collect()).collect()
}

pub fn ingredient_nutrition_similarity(a: &Recipe, b: &Recipe) -> Result<f64, NutritionError> {
    for r in [a, b] {
        if r.ingredients.is_empty() {
            return Err(NutritionError::NoIngredients(r.id.clone()));
        }
    }
    let na: Vec<NutrientVector> = a.ingredients.iter().map(|i| i.nutrients.clone()).collect();
    let nb: Vec<NutrientVector> = b.ingredients.iter().map(|i| i.nutrients.clone()).collect();
    ingredient_vectors_similarity(&na, &nb)
}

pub fn nutrition_scores(a: &Recipe, b: &Recipe) -> Result<NutritionScores, NutritionError> {
    Ok(NutritionScores {
        per_recipe: recipe_nutrition_similarity(a, b)?,
        per_ingredient: ingredient_nutrition_similarity(a, b)?,
    })
}
