//! Recipe corpus ingestion.
//!
//! The corpus file is line-delimited JSON. The first non-blank line is a
//! header declaring the nutrient schema:
//!
//! ```text
//! {"nutrient_schema": ["fat", "protein", "salt", "saturates", "sugars"]}
//! {"id": "r1", "title": "...", "ingredients": [...], "instructions": [...], "nutrition_per_100g": [...]}
//! ```
//!
//! Declared nutrient names are reordered into the canonical order
//! ([`CANONICAL_NUTRIENTS`]) on ingestion, so two files listing the same
//! nutrients in different orders produce identical corpora.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical nutrient order. A corpus may declare any non-empty subset.
pub const CANONICAL_NUTRIENTS: [&str; 6] = ["fat", "energy", "protein", "saturates", "salt", "sugars"];

/// Separator used to join instruction steps into one document.
pub const INSTRUCTION_SEPARATOR: &str = ". ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty descriptor")]
    EmptyDescriptor,
    #[error("line {line}: duplicate recipe id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: nutrient vector has {found} values, schema declares {expected}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid header: {reason}")]
    InvalidHeader { line: usize, reason: String },
    #[error("line {line}: recipe record before nutrient schema header")]
    MissingHeader { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Fixed-order nutrient amounts per 100 g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NutrientVector(pub Vec<f64>);

impl NutrientVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub amount: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingredient {
    /// General-to-specific descriptor components, lowercased and trimmed.
    pub descriptor_path: Vec<String>,
    pub nutrients: NutrientVector,
    pub quantity: Option<Quantity>,
}

impl Ingredient {
    /// The descriptor as written in the corpus file.
    pub fn descriptor(&self) -> String {
        self.descriptor_path.join(", ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub id: String,
    pub title: String,
    pub ingredients: Vec<Ingredient>,
    pub instructions: Vec<String>,
    pub nutrition_per_100g: NutrientVector,
}

impl Recipe {
    /// Instruction steps joined into the single document used for embedding.
    pub fn instruction_text(&self) -> String {
        self.instructions.join(INSTRUCTION_SEPARATOR)
    }
}

/// Per-100 g nutrient vector of a recipe. The corpus stores it directly; no
/// aggregation from ingredients happens here.
pub fn recipe_nutrient_vector(recipe: &Recipe) -> &NutrientVector {
    &recipe.nutrition_per_100g
}

/// Splits a comma-separated descriptor into its normalized hierarchy.
pub fn ingredient_path(descriptor: &str) -> Result<Vec<String>, CorpusError> {
    let path: Vec<String> = descriptor
        .split(',')
        .map(|c| c.trim().to_lowercase())
        .filter(|c| !c.is_empty())
        .collect();
    if path.is_empty() {
        return Err(CorpusError::EmptyDescriptor);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    recipes: BTreeMap<String, Recipe>,
    nutrient_schema: Vec<String>,
    rejected: Vec<RejectedLine>,
}

impl Corpus {
    /// Builds a corpus from already-validated recipes.
    pub fn from_recipes(
        nutrient_schema: Vec<String>,
        recipes: impl IntoIterator<Item = Recipe>,
    ) -> Result<Self, CorpusError> {
        let dim = nutrient_schema.len();
        let mut map = BTreeMap::new();
        for (i, recipe) in recipes.into_iter().enumerate() {
            check_dimensions(&recipe, dim, i + 1)?;
            if map.contains_key(&recipe.id) {
                return Err(CorpusError::DuplicateId { line: i + 1, id: recipe.id });
            }
            map.insert(recipe.id.clone(), recipe);
        }
        Ok(Self { recipes: map, nutrient_schema, rejected: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Recipe> {
        self.recipes.get(id)
    }

    /// Recipes in ascending id order.
    pub fn recipes(&self) -> impl Iterator<Item = &Recipe> {
        self.recipes.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.recipes.keys().map(String::as_str)
    }

    pub fn nutrient_schema(&self) -> &[String] {
        &self.nutrient_schema
    }

    pub fn rejected(&self) -> &[RejectedLine] {
        &self.rejected
    }
}

fn check_dimensions(recipe: &Recipe, dim: usize, line: usize) -> Result<(), CorpusError> {
    let found = std::iter::once(recipe.nutrition_per_100g.len())
        .chain(recipe.ingredients.iter().map(|i| i.nutrients.len()))
        .find(|&n| n != dim);
    match found {
        Some(found) => Err(CorpusError::DimensionMismatch { line, expected: dim, found }),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    nutrient_schema: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct IngredientRecord {
    descriptor: String,
    nutrients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantity: Option<Quantity>,
}

#[derive(Serialize, Deserialize)]
struct RecipeRecord {
    id: String,
    title: String,
    ingredients: Vec<IngredientRecord>,
    instructions: Vec<String>,
    nutrition_per_100g: Vec<f64>,
}

/// Maps declared nutrient names to canonical order. Returns the canonical
/// schema and, for each canonical slot, the index in the declared order.
fn canonical_schema(declared: &[String], line: usize) -> Result<(Vec<String>, Vec<usize>), CorpusError> {
    let invalid = |reason: String| CorpusError::InvalidHeader { line, reason };
    if declared.is_empty() {
        return Err(invalid("nutrient_schema is empty".into()));
    }
    let mut positions = Vec::with_capacity(declared.len());
    let mut seen = HashSet::new();
    for name in declared {
        let name = name.trim().to_lowercase();
        let Some(pos) = CANONICAL_NUTRIENTS.iter().position(|&c| c == name) else {
            return Err(invalid(format!("unknown nutrient {name:?}")));
        };
        if !seen.insert(pos) {
            return Err(invalid(format!("nutrient {name:?} declared twice")));
        }
        positions.push(pos);
    }
    let mut order: Vec<usize> = (0..declared.len()).collect();
    order.sort_by_key(|&i| positions[i]);
    let schema = order.iter().map(|&i| CANONICAL_NUTRIENTS[positions[i]].to_string()).collect();
    Ok((schema, order))
}

fn permute(values: &[f64], order: &[usize]) -> Vec<f64> {
    order.iter().map(|&i| values[i]).collect()
}

fn validate_nutrients(values: &[f64], what: &str) -> Result<(), String> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(format!("non-finite nutrient in {what}: {v}"));
    }
    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
        return Err(format!("negative nutrient in {what}: {v}"));
    }
    Ok(())
}

enum LineOutcome {
    Accepted(Recipe),
    Rejected(String),
}

fn convert_record(
    line: usize,
    raw: &str,
    dim: usize,
    order: &[usize],
) -> Result<LineOutcome, CorpusError> {
    let record: RecipeRecord = match serde_json::from_str(raw) {
        Ok(r) => r,
        Err(e) => return Ok(LineOutcome::Rejected(format!("malformed record: {e}"))),
    };
    if record.nutrition_per_100g.len() != dim {
        return Err(CorpusError::DimensionMismatch { line, expected: dim, found: record.nutrition_per_100g.len() });
    }
    if let Some(bad) = record.ingredients.iter().find(|i| i.nutrients.len() != dim) {
        return Err(CorpusError::DimensionMismatch { line, expected: dim, found: bad.nutrients.len() });
    }
    let reject = |reason: String| Ok(LineOutcome::Rejected(reason));
    if record.id.trim().is_empty() {
        return reject("empty id".into());
    }
    if record.ingredients.is_empty() {
        return reject("no ingredients".into());
    }
    if record.instructions.is_empty() {
        return reject("no instructions".into());
    }
    if let Err(reason) = validate_nutrients(&record.nutrition_per_100g, "nutrition_per_100g") {
        return reject(reason);
    }
    let mut ingredients = Vec::with_capacity(record.ingredients.len());
    for (k, ing) in record.ingredients.into_iter().enumerate() {
        let Ok(descriptor_path) = ingredient_path(&ing.descriptor) else {
            return reject(format!("ingredient {k}: empty descriptor"));
        };
        if let Err(reason) = validate_nutrients(&ing.nutrients, &format!("ingredient {k}")) {
            return reject(reason);
        }
        if let Some(q) = &ing.quantity {
            if !(q.amount.is_finite() && q.amount >= 0.0) {
                return reject(format!("ingredient {k}: invalid quantity {}", q.amount));
            }
        }
        ingredients.push(Ingredient {
            descriptor_path,
            nutrients: NutrientVector(permute(&ing.nutrients, order)),
            quantity: ing.quantity,
        });
    }
    Ok(LineOutcome::Accepted(Recipe {
        id: record.id,
        title: record.title,
        ingredients,
        instructions: record.instructions,
        nutrition_per_100g: NutrientVector(permute(&record.nutrition_per_100g, order)),
    }))
}

/// Parses a line-delimited corpus. Malformed records are skipped and listed in
/// [`Corpus::rejected`]; duplicate ids and dimension mismatches abort.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut header: Option<(usize, Vec<usize>)> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let raw = line.trim();
        if raw.is_empty() {
            continue;
        }
        let Some((dim, order)) = &header else {
            let parsed: HeaderRecord = serde_json::from_str(raw).map_err(|e| {
                if raw.contains("\"id\"") {
                    CorpusError::MissingHeader { line: line_no }
                } else {
                    CorpusError::InvalidHeader { line: line_no, reason: e.to_string() }
                }
            })?;
            let (schema, order) = canonical_schema(&parsed.nutrient_schema, line_no)?;
            corpus.nutrient_schema = schema;
            header = Some((order.len(), order));
            continue;
        };
        match convert_record(line_no, raw, *dim, order)? {
            LineOutcome::Accepted(recipe) => {
                if corpus.recipes.contains_key(&recipe.id) {
                    return Err(CorpusError::DuplicateId { line: line_no, id: recipe.id });
                }
                corpus.recipes.insert(recipe.id.clone(), recipe);
            }
            LineOutcome::Rejected(reason) => corpus.rejected.push(RejectedLine { line: line_no, reason }),
        }
    }
    Ok(corpus)
}

/// Writes the corpus in the same line-delimited format, canonical nutrient
/// order, recipes sorted by id.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    let header = serde_json::json!({ "nutrient_schema": corpus.nutrient_schema });
    writeln!(out, "{header}")?;
    for recipe in corpus.recipes() {
        let record = RecipeRecord {
            id: recipe.id.clone(),
            title: recipe.title.clone(),
            ingredients: recipe
                .ingredients
                .iter()
                .map(|i| IngredientRecord {
                    descriptor: i.descriptor(),
                    nutrients: i.nutrients.0.clone(),
                    quantity: i.quantity.clone(),
                })
                .collect(),
            instructions: recipe.instructions.clone(),
            nutrition_per_100g: recipe.nutrition_per_100g.0.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("recipe record serializes"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER5: &str = r#"{"nutrient_schema": ["fat", "protein", "saturates", "salt", "sugars"]}"#;

    fn line(id: &str, n100: &str) -> String {
        format!(
            r#"{{"id": "{id}", "title": "T {id}", "ingredients": [{{"descriptor": "Salt, table", "nutrients": [0,0,0,38.7,0]}}], "instructions": ["Mix", "Serve"], "nutrition_per_100g": {n100}}}"#
        )
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let c = parse_corpus("".as_bytes()).unwrap();
        assert_eq!(c.len(), 0);
        assert!(c.rejected().is_empty());
    }

    #[test]
    fn three_records() {
        let text = [HEADER5.to_string(), line("a", "[1,2,3,4,5]"), line("b", "[0,0,0,0,0]"), line("c", "[1,1,1,1,1]")]
            .join("\n");
        let c = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get("a").unwrap().ingredients[0].descriptor_path, vec!["salt", "table"]);
        assert_eq!(c.get("a").unwrap().instruction_text(), "Mix. Serve");
    }

    #[test]
    fn negative_nutrient_rejected() {
        let text = format!("{HEADER5}\n{}", line("a", "[1,-2,3,4,5]"));
        let c = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.rejected().len(), 1);
        assert_eq!(c.rejected()[0].line, 2);
        assert!(c.rejected()[0].reason.contains("negative nutrient"), "{:?}", c.rejected());
    }

    #[test]
    fn malformed_lines_counted() {
        let text = format!("{HEADER5}\n{}\nnot json\n{{\"id\": \"x\"}}\n", line("a", "[1,2,3,4,5]"));
        let c = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        let lines: Vec<_> = c.rejected().iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn duplicate_id_is_hard_error() {
        let text = format!("{HEADER5}\n{}\n{}", line("a", "[1,2,3,4,5]"), line("a", "[1,2,3,4,5]"));
        assert!(matches!(parse_corpus(text.as_bytes()), Err(CorpusError::DuplicateId { line: 3, .. })));
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let text = format!("{HEADER5}\n{}", line("a", "[1,2,3,4]"));
        assert!(matches!(parse_corpus(text.as_bytes()), Err(CorpusError::DimensionMismatch { .. })));
    }

    #[test]
    fn record_before_header() {
        assert!(matches!(parse_corpus(line("a", "[1]").as_bytes()), Err(CorpusError::MissingHeader { line: 1 })));
    }

    #[test]
    fn schema_permutation_normalized() {
        let permuted = r#"{"nutrient_schema": ["sugars", "salt", "fat", "protein", "saturates"]}"#;
        let text = format!("{permuted}\n{}", line("a", "[5,4,1,2,3]").replace("[0,0,0,38.7,0]", "[0,38.7,0,0,0]"));
        let c = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.nutrient_schema(), ["fat", "protein", "saturates", "salt", "sugars"]);
        let r = c.get("a").unwrap();
        assert_eq!(recipe_nutrient_vector(r).values(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(r.ingredients[0].nutrients.values(), &[0.0, 0.0, 0.0, 38.7, 0.0]);
    }

    #[test]
    fn ingredient_path_examples() {
        assert_eq!(ingredient_path("spices, pepper, black").unwrap(), vec!["spices", "pepper", "black"]);
        assert_eq!(ingredient_path("Salt").unwrap(), vec!["salt"]);
        assert_eq!(ingredient_path("wheat flour, white, all-purpose, unenriched").unwrap().len(), 4);
        assert_eq!(ingredient_path(" A ,, b ,").unwrap(), vec!["a", "b"]);
        assert!(matches!(ingredient_path(" , ,"), Err(CorpusError::EmptyDescriptor)));
    }

    #[test]
    fn accessor_returns_stored_vector() {
        let v = vec![6.03, 0.08, 0.19, 0.83, 0.15];
        let recipe = Recipe {
            id: "x".into(),
            title: "x".into(),
            ingredients: vec![],
            instructions: vec![],
            nutrition_per_100g: NutrientVector(v.clone()),
        };
        assert_eq!(recipe_nutrient_vector(&recipe).values(), v.as_slice());
    }
}
