//! Pairwise scoring over a corpus and weighted fusion of the three views.
//!
//! Each pair gets five raw measures: two semantic (one per embedding
//! provider slot), one lexical and two nutritional. The semantic and
//! nutritional pairs are averaged into view scores, and the fused score is a
//! convex combination of the three views.

use std::collections::HashSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Recipe};
use crate::lexical::{lexical_similarity, LexicalError};
use crate::nutrition::{ingredient_nutrition_similarity, recipe_nutrition_similarity, NutritionError};
use crate::semantic::{semantic_similarity, Embedding, EmbeddingError, EmbeddingProvider};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub const TABLE_HEADER: [&str; 10] = [
    "main_id",
    "secondary_id",
    "sem_a",
    "sem_b",
    "lexical",
    "nutr_recipe",
    "nutr_ingredient",
    "sem_avg",
    "nutr_avg",
    "fused",
];

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("weights must be non-negative and finite, got ({0}, {1}, {2})")]
    NegativeWeight(f64, f64, f64),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("sub-score {name} = {value} is outside [0, 1]")]
    ScoreRange { name: &'static str, value: f64 },
    #[error("corpus needs at least 2 recipes, has {0}")]
    TooFewRecipes(usize),
    #[error("unknown recipe id {0:?}")]
    UnknownId(String),
    #[error("invalid selection: {0}")]
    Selection(String),
    #[error("pair ({main}, {secondary}): {reason}")]
    Pair { main: String, secondary: String, reason: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Nutrition(#[from] NutritionError),
    #[error("score table: {0}")]
    Table(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// View weights; always non-negative and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct FusionWeights {
    sem: f64,
    lex: f64,
    nutr: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    semantic: f64,
    lexical: f64,
    nutritional: f64,
}

impl TryFrom<RawWeights> for FusionWeights {
    type Error = FusionError;
    fn try_from(r: RawWeights) -> Result<Self, FusionError> {
        Self::new(r.semantic, r.lexical, r.nutritional)
    }
}

impl From<FusionWeights> for RawWeights {
    fn from(w: FusionWeights) -> Self {
        Self { semantic: w.sem, lexical: w.lex, nutritional: w.nutr }
    }
}

impl FusionWeights {
    pub fn new(semantic: f64, lexical: f64, nutritional: f64) -> Result<Self, FusionError> {
        let all = [semantic, lexical, nutritional];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FusionError::NegativeWeight(semantic, lexical, nutritional));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(FusionError::WeightSum(sum));
        }
        Ok(Self { sem: semantic, lex: lexical, nutr: nutritional })
    }

    pub fn equal() -> Self {
        Self { sem: 1.0 / 3.0, lex: 1.0 / 3.0, nutr: 1.0 / 3.0 }
    }

    pub fn semantic(&self) -> f64 {
        self.sem
    }

    pub fn lexical(&self) -> f64 {
        self.lex
    }

    pub fn nutritional(&self) -> f64 {
        self.nutr
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::equal()
    }
}

/// The five raw measures of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewScores {
    pub sem_a: f64,
    pub sem_b: f64,
    pub lexical: f64,
    pub nutr_recipe: f64,
    pub nutr_ingredient: f64,
}

impl ViewScores {
    /// All five measures equal to `s`.
    pub fn uniform(s: f64) -> Self {
        Self { sem_a: s, sem_b: s, lexical: s, nutr_recipe: s, nutr_ingredient: s }
    }

    pub fn sem_avg(&self) -> f64 {
        (self.sem_a + self.sem_b) / 2.0
    }

    pub fn nutr_avg(&self) -> f64 {
        (self.nutr_recipe + self.nutr_ingredient) / 2.0
    }

    fn validate(&self) -> Result<(), FusionError> {
        let named = [
            ("sem_a", self.sem_a),
            ("sem_b", self.sem_b),
            ("lexical", self.lexical),
            ("nutr_recipe", self.nutr_recipe),
            ("nutr_ingredient", self.nutr_ingredient),
        ];
        for (name, value) in named {
            if !(0.0..=1.0).contains(&value) {
                return Err(FusionError::ScoreRange { name, value });
            }
        }
        Ok(())
    }
}

pub fn fuse(scores: &ViewScores, weights: &FusionWeights) -> Result<f64, FusionError> {
    scores.validate()?;
    let fused = weights.sem * scores.sem_avg() + weights.lex * scores.lexical + weights.nutr * scores.nutr_avg();
    Ok(fused.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub main_id: String,
    pub secondary_id: String,
    pub sem_a: f64,
    pub sem_b: f64,
    pub lexical: f64,
    pub nutr_recipe: f64,
    pub nutr_ingredient: f64,
    pub sem_avg: f64,
    pub nutr_avg: f64,
    pub fused: f64,
}

impl SimilarityRecord {
    pub fn new(
        main_id: impl Into<String>,
        secondary_id: impl Into<String>,
        scores: ViewScores,
        weights: &FusionWeights,
    ) -> Result<Self, FusionError> {
        let fused = fuse(&scores, weights)?;
        Ok(Self {
            main_id: main_id.into(),
            secondary_id: secondary_id.into(),
            sem_a: scores.sem_a,
            sem_b: scores.sem_b,
            lexical: scores.lexical,
            nutr_recipe: scores.nutr_recipe,
            nutr_ingredient: scores.nutr_ingredient,
            sem_avg: scores.sem_avg(),
            nutr_avg: scores.nutr_avg(),
            fused,
        })
    }

    pub fn scores(&self) -> ViewScores {
        ViewScores {
            sem_a: self.sem_a,
            sem_b: self.sem_b,
            lexical: self.lexical,
            nutr_recipe: self.nutr_recipe,
            nutr_ingredient: self.nutr_ingredient,
        }
    }

    /// Same pair with main and secondary roles swapped.
    pub fn mirrored(&self) -> Self {
        Self { main_id: self.secondary_id.clone(), secondary_id: self.main_id.clone(), ..self.clone() }
    }

    /// Recomputes the fused score under new weights; raw measures are untouched.
    pub fn reweighted(&self, weights: &FusionWeights) -> Result<Self, FusionError> {
        Self::new(self.main_id.clone(), self.secondary_id.clone(), self.scores(), weights)
    }
}

/// The two semantic provider slots.
pub struct EmbeddingSlots {
    pub model_a: Box<dyn EmbeddingProvider>,
    pub model_b: Box<dyn EmbeddingProvider>,
}

impl EmbeddingSlots {
    pub fn new(model_a: impl EmbeddingProvider + 'static, model_b: impl EmbeddingProvider + 'static) -> Self {
        Self { model_a: Box::new(model_a), model_b: Box::new(model_b) }
    }
}

fn measures(a: &Recipe, b: &Recipe, ea: (&Embedding, &Embedding), eb: (&Embedding, &Embedding)) -> Result<ViewScores, FusionError> {
    Ok(ViewScores {
        sem_a: semantic_similarity(ea.0, eb.0)?,
        sem_b: semantic_similarity(ea.1, eb.1)?,
        lexical: lexical_similarity(a, b)?.value(),
        nutr_recipe: recipe_nutrition_similarity(a, b)?,
        nutr_ingredient: ingredient_nutrition_similarity(a, b)?,
    })
}

pub fn score_pair(
    a: &Recipe,
    b: &Recipe,
    providers: &EmbeddingSlots,
    weights: &FusionWeights,
) -> Result<SimilarityRecord, FusionError> {
    let ea = (providers.model_a.embed(a)?, providers.model_b.embed(a)?);
    let eb = (providers.model_a.embed(b)?, providers.model_b.embed(b)?);
    let scores = measures(a, b, (&ea.0, &ea.1), (&eb.0, &eb.1))?;
    SimilarityRecord::new(a.id.clone(), b.id.clone(), scores, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairConvention {
    /// One row per unordered pair, `main_id < secondary_id`.
    #[default]
    Unordered,
    /// Both orientations of every pair.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub convention: PairConvention,
    pub workers: usize,
    pub missing: MissingPolicy,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { convention: PairConvention::Unordered, workers: 1, missing: MissingPolicy::Skip }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedPair {
    pub main_id: String,
    pub secondary_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    convention: PairConvention,
    records: Vec<SimilarityRecord>,
}

impl ScoreTable {
    /// Wraps records as given; the caller asserts the convention.
    pub fn new(convention: PairConvention, records: Vec<SimilarityRecord>) -> Self {
        Self { convention, records }
    }

    /// Infers the convention: ordered when every row's mirror is present.
    pub fn from_records(records: Vec<SimilarityRecord>) -> Self {
        let keys: HashSet<(&str, &str)> =
            records.iter().map(|r| (r.main_id.as_str(), r.secondary_id.as_str())).collect();
        let mirrored = !records.is_empty()
            && records.iter().all(|r| keys.contains(&(r.secondary_id.as_str(), r.main_id.as_str())));
        let convention = if mirrored { PairConvention::Ordered } else { PairConvention::Unordered };
        Self { convention, records }
    }

    pub fn convention(&self) -> PairConvention {
        self.convention
    }

    pub fn records(&self) -> &[SimilarityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Expands an unordered table to both orientations, sorted by id pair.
    pub fn to_ordered(&self) -> Self {
        if self.convention == PairConvention::Ordered {
            return self.clone();
        }
        let mut records: Vec<_> = self.records.iter().flat_map(|r| [r.clone(), r.mirrored()]).collect();
        records.sort_by(|x, y| (&x.main_id, &x.secondary_id).cmp(&(&y.main_id, &y.secondary_id)));
        Self { convention: PairConvention::Ordered, records }
    }

    /// Every distinct recipe id appearing in the table, sorted.
    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .flat_map(|r| [r.main_id.clone(), r.secondary_id.clone()])
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    pub fn find(&self, a: &str, b: &str) -> Option<&SimilarityRecord> {
        self.records
            .iter()
            .find(|r| (r.main_id == a && r.secondary_id == b) || (r.main_id == b && r.secondary_id == a))
    }

    /// Delimited text with a header row; floats printed with 6 decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FusionError> {
        let mut w = csv::Writer::from_writer(out);
        let table_err = |e: csv::Error| FusionError::Table(e.to_string());
        w.write_record(TABLE_HEADER).map_err(table_err)?;
        for r in &self.records {
            let floats = [
                r.sem_a,
                r.sem_b,
                r.lexical,
                r.nutr_recipe,
                r.nutr_ingredient,
                r.sem_avg,
                r.nutr_avg,
                r.fused,
            ];
            let mut row = vec![r.main_id.clone(), r.secondary_id.clone()];
            row.extend(floats.iter().map(|v| format!("{v:.6}")));
            w.write_record(&row).map_err(table_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FusionError> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers().map_err(|e| FusionError::Table(e.to_string()))?.clone();
        if headers.iter().ne(TABLE_HEADER.iter().copied()) {
            return Err(FusionError::Table(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
        }
        let mut records = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let row = row.map_err(|e| FusionError::Table(e.to_string()))?;
            let num = |k: usize| -> Result<f64, FusionError> {
                let v: f64 = row[k]
                    .parse()
                    .map_err(|_| FusionError::Table(format!("row {}: bad value {:?} in {}", i + 2, &row[k], TABLE_HEADER[k])))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(FusionError::Table(format!("row {}: {} = {v} outside [0, 1]", i + 2, TABLE_HEADER[k])));
                }
                Ok(v)
            };
            records.push(SimilarityRecord {
                main_id: row[0].to_string(),
                secondary_id: row[1].to_string(),
                sem_a: num(2)?,
                sem_b: num(3)?,
                lexical: num(4)?,
                nutr_recipe: num(5)?,
                nutr_ingredient: num(6)?,
                sem_avg: num(7)?,
                nutr_avg: num(8)?,
                fused: num(9)?,
            });
        }
        Ok(Self::from_records(records))
    }
}

#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub table: ScoreTable,
    pub skipped: Vec<SkippedPair>,
}

/// Scores every distinct pair of the corpus.
///
/// Pairs are computed on a pool of `options.workers` threads and collected in
/// canonical id order, so the table is identical for any worker count.
pub fn score_all(
    corpus: &Corpus,
    providers: &EmbeddingSlots,
    weights: &FusionWeights,
    options: &ScoreOptions,
) -> Result<ScoreRun, FusionError> {
    if corpus.len() < 2 {
        return Err(FusionError::TooFewRecipes(corpus.len()));
    }
    let recipes: Vec<&Recipe> = corpus.recipes().collect();
    let emb_a = providers.model_a.embed_all(&recipes);
    let emb_b = providers.model_b.embed_all(&recipes);

    let mut missing: Vec<Option<String>> = vec![None; recipes.len()];
    for (i, r) in recipes.iter().enumerate() {
        let reason = match (&emb_a[i], &emb_b[i]) {
            (Err(e), _) | (_, Err(e)) => e.to_string(),
            _ => continue,
        };
        if options.missing == MissingPolicy::Abort {
            return Err(FusionError::Pair { main: r.id.clone(), secondary: "*".into(), reason });
        }
        log::warn!("skipping pairs with {}: {reason}", r.id);
        missing[i] = Some(reason);
    }

    let n = recipes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| FusionError::Pool(e.to_string()))?;

    let compute = |&(i, j): &(usize, usize)| -> Result<Result<SimilarityRecord, SkippedPair>, FusionError> {
        let (a, b) = (recipes[i], recipes[j]);
        if let Some(reason) = missing[i].as_ref().or(missing[j].as_ref()) {
            return Ok(Err(SkippedPair { main_id: a.id.clone(), secondary_id: b.id.clone(), reason: reason.clone() }));
        }
        let ea = (emb_a[i].as_ref().unwrap(), emb_b[i].as_ref().unwrap());
        let eb = (emb_a[j].as_ref().unwrap(), emb_b[j].as_ref().unwrap());
        let scores = measures(a, b, ea, eb)?;
        Ok(Ok(SimilarityRecord::new(a.id.clone(), b.id.clone(), scores, weights)?))
    };
    let results: Vec<_> = pool.install(|| pairs.par_iter().map(compute).collect::<Result<Vec<_>, _>>())?;

    let mut records = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(s) => skipped.push(s),
        }
    }
    let table = ScoreTable::new(PairConvention::Unordered, records);
    let table = match options.convention {
        PairConvention::Unordered => table,
        PairConvention::Ordered => table.to_ordered(),
    };
    Ok(ScoreRun { table, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// `ceil(fraction * candidates)` rows, `0 < fraction <= 1`.
    Fraction(f64),
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub secondary_id: String,
    pub fused: f64,
}

/// Secondary recipes for `main_id`, best fused score first, ties by id.
pub fn top_candidates(table: &ScoreTable, main_id: &str, selection: Selection) -> Result<Vec<Candidate>, FusionError> {
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    let mut known = false;
    for r in table.records() {
        let other = if r.main_id == main_id {
            &r.secondary_id
        } else if r.secondary_id == main_id {
            &r.main_id
        } else {
            continue;
        };
        known = true;
        if other != main_id && seen.insert(other.clone()) {
            candidates.push(Candidate { secondary_id: other.clone(), fused: r.fused });
        }
    }
    if !known {
        return Err(FusionError::UnknownId(main_id.to_string()));
    }
    candidates.sort_by(|x, y| y.fused.total_cmp(&x.fused).then_with(|| x.secondary_id.cmp(&y.secondary_id)));
    let keep = match selection {
        Selection::Fraction(f) if f > 0.0 && f <= 1.0 => {
            // Guard against products like 0.7 * 10 = 7.000000000000001.
            ((f * candidates.len() as f64) - 1e-9).ceil().max(0.0) as usize
        }
        Selection::Fraction(f) => return Err(FusionError::Selection(format!("fraction {f} not in (0, 1]"))),
        Selection::TopK(k) => k,
    };
    candidates.truncate(keep);
    Ok(candidates)
}
