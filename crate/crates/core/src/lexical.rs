//! Hierarchical ingredient similarity.
//!
//! Two descriptor paths score the length of their common prefix over the
//! longer path, so `spices > pepper > black` against
//! `spices > pepper > red or cayenne` scores 2/3. Recipes are compared by an
//! optimal one-to-one matching of their ingredients, with unmatched
//! ingredients paired to null items scoring 0.

use thiserror::Error;

use crate::assignment::{optimal_assignment, pad_square, SimilarityMatrix};
use crate::corpus::Recipe;

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("empty descriptor path")]
    EmptyPath,
    #[error("recipe {0:?} has no ingredients")]
    NoIngredients(String),
}

/// Lexical similarity score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LexicalScore(f64);

impl LexicalScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn ingredient_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64, LexicalError> {
    if a.is_empty() || b.is_empty() {
        return Err(LexicalError::EmptyPath);
    }
    let common = a.iter().zip(b).take_while(|(x, y)| x.as_ref() == y.as_ref()).count();
    Ok(common as f64 / a.len().max(b.len()) as f64)
}

/// Mean matched similarity over `max(|a|, |b|)` ingredient slots.
pub fn path_set_similarity<P, S>(a: &[P], b: &[P]) -> Result<f64, LexicalError>
where
    P: AsRef<[S]>,
    S: AsRef<str>,
{
    // Fixed orientation makes the result exactly symmetric in floating point.
    let (a, b) = if cmp_paths(b, a).is_lt() { (b, a) } else { (a, b) };
    let mut entries = Vec::with_capacity(a.len() * b.len());
    for pa in a {
        for pb in b {
            entries.push(ingredient_similarity(pa.as_ref(), pb.as_ref())?);
        }
    }
    let m = SimilarityMatrix::new(a.len(), b.len(), entries).expect("lexical similarities lie in [0, 1]");
    let assignment = optimal_assignment(&pad_square(&m)).expect("padded matrix is square");
    Ok((assignment.total / a.len().max(b.len()) as f64).clamp(0.0, 1.0))
}

fn cmp_paths<P: AsRef<[S]>, S: AsRef<str>>(a: &[P], b: &[P]) -> std::cmp::Ordering {
    let flat = |paths: &[P]| -> Vec<String> {
        paths.iter().map(|p| p.as_ref().iter().map(|c| c.as_ref()).collect::<Vec<_>>().join("\u{1f}")).collect()
    };
    flat(a).cmp(&flat(b))
}

pub fn lexical_similarity(a: &Recipe, b: &Recipe) -> Result<LexicalScore, LexicalError> {
    for r in [a, b] {
        if r.ingredients.is_empty() {
            return Err(LexicalError::NoIngredients(r.id.clone()));
        }
    }
    let pa: Vec<&[String]> = a.ingredients.iter().map(|i| i.descriptor_path.as_slice()).collect();
    let pb: Vec<&[String]> = b.ingredients.iter().map(|i| i.descriptor_path.as_slice()).collect();
    path_set_similarity(&pa, &pb).map(LexicalScore)
}
