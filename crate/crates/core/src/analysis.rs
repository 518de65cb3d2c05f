//! Score-table analytics: descriptive statistics, correlations, failure-case
//! rules, lexical-bin agreement and semantic model comparison.
//!
//! All reductions run serially in row order so results are bit-reproducible.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{PairConvention, ScoreTable, SimilarityRecord};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("not enough values for {statistic}: need {needed}, have {have}")]
    InsufficientData { statistic: &'static str, needed: usize, have: usize },
    #[error("unknown metric column {0:?}")]
    UnknownMetric(String),
    #[error("rule syntax: {0}")]
    RuleSyntax(String),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("score table is empty")]
    EmptyTable,
}

/// Score-table columns usable in analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SemA,
    SemB,
    Lexical,
    NutrRecipe,
    NutrIngredient,
    SemAvg,
    NutrAvg,
    Fused,
}

impl Metric {
    /// The five raw measures, in report order.
    pub const CORE: [Metric; 5] = [Metric::SemA, Metric::SemB, Metric::NutrRecipe, Metric::Lexical, Metric::NutrIngredient];

    pub fn column(self) -> &'static str {
        match self {
            Metric::SemA => "sem_a",
            Metric::SemB => "sem_b",
            Metric::Lexical => "lexical",
            Metric::NutrRecipe => "nutr_recipe",
            Metric::NutrIngredient => "nutr_ingredient",
            Metric::SemAvg => "sem_avg",
            Metric::NutrAvg => "nutr_avg",
            Metric::Fused => "fused",
        }
    }

    pub fn value(self, r: &SimilarityRecord) -> f64 {
        match self {
            Metric::SemA => r.sem_a,
            Metric::SemB => r.sem_b,
            Metric::Lexical => r.lexical,
            Metric::NutrRecipe => r.nutr_recipe,
            Metric::NutrIngredient => r.nutr_ingredient,
            Metric::SemAvg => r.sem_avg,
            Metric::NutrAvg => r.nutr_avg,
            Metric::Fused => r.fused,
        }
    }

    pub fn values(self, table: &ScoreTable) -> Vec<f64> {
        table.records().iter().map(|r| self.value(r)).collect()
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;

    /// Accepts column names plus the short names used in failure rules
    /// (`roberta`, `minilm`, `jaccard`, `nutr`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_lowercase().as_str() {
            "sem_a" | "roberta" => Metric::SemA,
            "sem_b" | "minilm" => Metric::SemB,
            "lexical" | "jaccard" => Metric::Lexical,
            "nutr_recipe" | "nutr" => Metric::NutrRecipe,
            "nutr_ingredient" => Metric::NutrIngredient,
            "sem_avg" => Metric::SemAvg,
            "nutr_avg" => Metric::NutrAvg,
            "fused" => Metric::Fused,
            other => return Err(AnalysisError::UnknownMetric(other.to_string())),
        })
    }
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStats {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    /// Adjusted Fisher-Pearson skewness; 0 for constant columns.
    pub skew: f64,
    pub min: f64,
    pub max: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn descriptive_stats(xs: &[f64]) -> Result<MetricStats, AnalysisError> {
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData { statistic: "std_dev", needed: 2, have: n });
    }
    if n < 3 {
        return Err(AnalysisError::InsufficientData { statistic: "skew", needed: 3, have: n });
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = mean(xs);
    let med = median(xs);
    if min == max {
        return Ok(MetricStats { mean: m, median: med, std_dev: 0.0, skew: 0.0, min, max });
    }
    let nf = n as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / nf;
    let std_dev = (m2 * nf / (nf - 1.0)).sqrt();
    let g1 = m3 / m2.powf(1.5);
    let skew = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    Ok(MetricStats { mean: m, median: med, std_dev, skew, min, max })
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Pearson correlation; `None` when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal-length columns");
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if x.len() < 2 || constant(x) || constant(y) {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub metrics: Vec<Metric>,
    /// `None` marks an undefined entry (constant column).
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(table: &ScoreTable, metrics: &[Metric]) -> Result<CorrelationMatrix, AnalysisError> {
    if table.len() < 3 {
        return Err(AnalysisError::InsufficientData { statistic: "correlation", needed: 3, have: table.len() });
    }
    let columns: Vec<Vec<f64>> = metrics.iter().map(|m| m.values(table)).collect();
    let k = metrics.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = pearson(&columns[i], &columns[j]).map(|r| if i == j { 1.0 } else { r });
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { metrics: metrics.to_vec(), values })
}

// ---------------------------------------------------------------------------
// Failure-case rules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Comparator {
    fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
        }
    }

    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl Clause {
    pub fn new(metric: Metric, comparator: Comparator, threshold: f64) -> Result<Self, AnalysisError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(AnalysisError::Threshold(threshold));
        }
        Ok(Self { metric, comparator, threshold })
    }

    pub fn matches(&self, r: &SimilarityRecord) -> bool {
        self.comparator.holds(self.metric.value(r), self.threshold)
    }
}

/// A conjunction of clauses flagging a misleading metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRule {
    pub name: String,
    pub clauses: Vec<Clause>,
}

impl FailureRule {
    pub fn matches(&self, r: &SimilarityRecord) -> bool {
        self.clauses.iter().all(|c| c.matches(r))
    }

    pub fn criteria(&self) -> String {
        self.clauses
            .iter()
            .map(|c| format!("{} {} {}", c.metric.column(), c.comparator.symbol(), c.threshold))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FromStr for FailureRule {
    type Err = AnalysisError;

    /// `name: metric > 0.95, metric < 0.6, ...`
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let (name, body) = line
            .split_once(':')
            .ok_or_else(|| AnalysisError::RuleSyntax(format!("missing ':' in {line:?}")))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(AnalysisError::RuleSyntax(format!("missing rule name in {line:?}")));
        }
        let mut clauses = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            // Two-character operators first.
            let (op, cmp) = [(">=", Comparator::Ge), ("<=", Comparator::Le), (">", Comparator::Gt), ("<", Comparator::Lt)]
                .into_iter()
                .find(|(op, _)| part.contains(op))
                .ok_or_else(|| AnalysisError::RuleSyntax(format!("no comparator in {part:?}")))?;
            let (lhs, rhs) = part.split_once(op).expect("operator present");
            let metric: Metric = lhs.parse()?;
            let threshold: f64 = rhs
                .trim()
                .parse()
                .map_err(|_| AnalysisError::RuleSyntax(format!("bad threshold in {part:?}")))?;
            clauses.push(Clause::new(metric, cmp, threshold)?);
        }
        if clauses.is_empty() {
            return Err(AnalysisError::RuleSyntax(format!("rule {name:?} has no clauses")));
        }
        Ok(Self { name: name.to_string(), clauses })
    }
}

/// Parses a rules file: one rule per line, `#` comments and blank lines ignored.
pub fn parse_rules(text: &str) -> Result<Vec<FailureRule>, AnalysisError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

/// The three single-metric failure rules: nutritional, semantic and lexical.
pub fn default_rules() -> Vec<FailureRule> {
    parse_rules(
        "nutritional: nutr_recipe > 0.95, sem_a < 0.6, lexical < 0.1\n\
         semantic: sem_a > 0.85, lexical < 0.1, nutr_recipe < 0.2\n\
         lexical: lexical > 0.3, sem_a < 0.6\n",
    )
    .expect("built-in rules parse")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReport {
    pub rule: String,
    pub criteria: String,
    pub count: usize,
    pub percentage: f64,
    /// Matching pairs as `(main_id, secondary_id)` in the requested convention.
    pub pairs: Vec<(String, String)>,
}

/// Counts rows matching each rule. Counts and the percentage denominator use
/// `convention`: an unordered table viewed as ordered counts every pair twice.
pub fn failure_cases(table: &ScoreTable, rules: &[FailureRule], convention: PairConvention) -> Vec<FailureReport> {
    let view = match (table.convention(), convention) {
        (PairConvention::Unordered, PairConvention::Ordered) => table.to_ordered(),
        (PairConvention::Ordered, PairConvention::Unordered) => ScoreTable::new(
            PairConvention::Unordered,
            table.records().iter().filter(|r| r.main_id < r.secondary_id).cloned().collect(),
        ),
        _ => table.clone(),
    };
    rules
        .iter()
        .map(|rule| {
            let pairs: Vec<(String, String)> = view
                .records()
                .iter()
                .filter(|r| rule.matches(r))
                .map(|r| (r.main_id.clone(), r.secondary_id.clone()))
                .collect();
            let percentage = if view.is_empty() { 0.0 } else { 100.0 * pairs.len() as f64 / view.len() as f64 };
            FailureReport { rule: rule.name.clone(), criteria: rule.criteria(), count: pairs.len(), percentage, pairs }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Lexical-bin agreement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub avg_semantic: Option<f64>,
    pub avg_nutritional: Option<f64>,
    pub avg_fused: Option<f64>,
    pub count: usize,
}

pub const BIN_COUNT: usize = 10;

/// Index of the lexical bin: `[k/10, (k+1)/10)`, last bin closed at 1.
pub fn lexical_bin(lexical: f64) -> usize {
    ((lexical * BIN_COUNT as f64).floor() as usize).min(BIN_COUNT - 1)
}

pub fn jaccard_bin_agreement(table: &ScoreTable) -> Result<Vec<BinRow>, AnalysisError> {
    if table.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    let mut sums = [[0.0f64; 3]; BIN_COUNT];
    let mut counts = [0usize; BIN_COUNT];
    for r in table.records() {
        let b = lexical_bin(r.lexical);
        sums[b][0] += r.sem_avg;
        sums[b][1] += r.nutr_avg;
        sums[b][2] += r.fused;
        counts[b] += 1;
    }
    Ok((0..BIN_COUNT)
        .map(|b| {
            let avg = |k: usize| (counts[b] > 0).then(|| sums[b][k] / counts[b] as f64);
            BinRow {
                bin_lower: b as f64 / BIN_COUNT as f64,
                bin_upper: (b + 1) as f64 / BIN_COUNT as f64,
                avg_semantic: avg(0),
                avg_nutritional: avg(1),
                avg_fused: avg(2),
                count: counts[b],
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Semantic model comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelComparison {
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    pub pearson_r: Option<f64>,
}

pub fn model_comparison(table: &ScoreTable) -> Result<ModelComparison, AnalysisError> {
    if table.len() < 3 {
        return Err(AnalysisError::InsufficientData { statistic: "model_comparison", needed: 3, have: table.len() });
    }
    let a = Metric::SemA.values(table);
    let b = Metric::SemB.values(table);
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    Ok(ModelComparison {
        mean_abs_diff: mean(&diffs),
        max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
        pearson_r: pearson(&a, &b),
    })
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Descriptive,
    Correlation,
    Failures,
    JaccardBins,
    ModelComparison,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] = [
        ReportKind::Descriptive,
        ReportKind::Correlation,
        ReportKind::Failures,
        ReportKind::JaccardBins,
        ReportKind::ModelComparison,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportKind::Descriptive => "descriptive_stats.csv",
            ReportKind::Correlation => "correlation_matrix.csv",
            ReportKind::Failures => "failure_cases.csv",
            ReportKind::JaccardBins => "jaccard_bins.csv",
            ReportKind::ModelComparison => "model_comparison.csv",
        }
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => "NA".to_string(),
    }
}

pub fn descriptive_report(table: &ScoreTable) -> Result<String, AnalysisError> {
    let mut out = String::from("metric,mean,median,std_dev,skew,min,max\n");
    for m in Metric::CORE {
        let s = descriptive_stats(&m.values(table))?;
        writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            m.column(),
            s.mean,
            s.median,
            s.std_dev,
            s.skew,
            s.min,
            s.max
        )
        .unwrap();
    }
    Ok(out)
}

pub fn correlation_report(table: &ScoreTable) -> Result<String, AnalysisError> {
    let cm = correlation_matrix(table, &Metric::CORE)?;
    let mut out = String::from("metric");
    for m in &cm.metrics {
        write!(out, ",{}", m.column()).unwrap();
    }
    out.push('\n');
    for (m, row) in cm.metrics.iter().zip(&cm.values) {
        out.push_str(m.column());
        for v in row {
            write!(out, ",{}", fmt_opt(*v, 2)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn failure_report(table: &ScoreTable, rules: &[FailureRule], convention: PairConvention) -> String {
    let mut out = String::from("metric,criteria,count,percentage\n");
    for r in failure_cases(table, rules, convention) {
        writeln!(out, "{},\"{}\",{},{:.2}", r.rule, r.criteria, r.count, r.percentage).unwrap();
    }
    out
}

pub fn jaccard_bins_report(table: &ScoreTable) -> Result<String, AnalysisError> {
    let mut out = String::from("lexical_bin,avg_semantic,avg_nutritional,avg_fused,count\n");
    for b in jaccard_bin_agreement(table)? {
        writeln!(
            out,
            "{:.1}-{:.1},{},{},{},{}",
            b.bin_lower,
            b.bin_upper,
            fmt_opt(b.avg_semantic, 2),
            fmt_opt(b.avg_nutritional, 2),
            fmt_opt(b.avg_fused, 2),
            b.count
        )
        .unwrap();
    }
    Ok(out)
}

pub fn model_comparison_report(table: &ScoreTable) -> Result<String, AnalysisError> {
    let c = model_comparison(table)?;
    Ok(format!(
        "statistic,value\nmean_abs_diff,{:.4}\nmax_abs_diff,{:.4}\ncorrelation,{}\n",
        c.mean_abs_diff,
        c.max_abs_diff,
        fmt_opt(c.pearson_r, 2)
    ))
}

/// Renders one report as CSV text.
pub fn render_report(
    kind: ReportKind,
    table: &ScoreTable,
    rules: &[FailureRule],
    convention: PairConvention,
) -> Result<String, AnalysisError> {
    if table.is_empty() {
        return Err(AnalysisError::EmptyTable);
    }
    match kind {
        ReportKind::Descriptive => descriptive_report(table),
        ReportKind::Correlation => correlation_report(table),
        ReportKind::Failures => Ok(failure_report(table, rules, convention)),
        ReportKind::JaccardBins => jaccard_bins_report(table),
        ReportKind::ModelComparison => model_comparison_report(table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionWeights, ViewScores};

    fn table(rows: &[(f64, f64, f64, f64, f64)]) -> ScoreTable {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(sem_a, sem_b, lexical, nutr_recipe, nutr_ingredient))| {
                SimilarityRecord::new(
                    format!("a{i:04}"),
                    format!("b{i:04}"),
                    ViewScores { sem_a, sem_b, lexical, nutr_recipe, nutr_ingredient },
                    &FusionWeights::equal(),
                )
                .unwrap()
            })
            .collect();
        ScoreTable::new(PairConvention::Unordered, records)
    }

    #[test]
    fn constant_column_stats() {
        let s = descriptive_stats(&[0.1, 0.1, 0.1, 0.1]).unwrap();
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.skew, 0.0);
        assert_eq!((s.min, s.max, s.median), (0.1, 0.1, 0.1));
    }

    #[test]
    fn symmetric_sample_stats() {
        let s = descriptive_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert!(s.skew.abs() < 1e-12);
        assert!((s.std_dev - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn skew_of_single_spike() {
        let s = descriptive_stats(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((s.skew - 2.0).abs() < 1e-12, "{}", s.skew);
        assert_eq!(s.median, 0.0);
    }

    #[test]
    fn insufficient_data_names_statistic() {
        assert!(matches!(descriptive_stats(&[1.0]), Err(AnalysisError::InsufficientData { statistic: "std_dev", .. })));
        assert!(matches!(descriptive_stats(&[1.0, 2.0]), Err(AnalysisError::InsufficientData { statistic: "skew", .. })));
    }

    #[test]
    fn pearson_self_and_negation() {
        let x = [0.1, 0.5, 0.3, 0.9];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[0.2; 4]), None);
    }

    #[test]
    fn correlation_marks_constant_columns_undefined() {
        let t = table(&[(0.1, 0.2, 0.5, 0.3, 0.4), (0.4, 0.3, 0.5, 0.9, 0.1), (0.6, 0.7, 0.5, 0.2, 0.2)]);
        let cm = correlation_matrix(&t, &Metric::CORE).unwrap();
        let lex = Metric::CORE.iter().position(|&m| m == Metric::Lexical).unwrap();
        assert!(cm.values[lex].iter().all(Option::is_none));
        assert_eq!(cm.values[0][0], Some(1.0));
        assert_eq!(cm.values[0][1], cm.values[1][0]);
    }

    #[test]
    fn rule_parsing() {
        let r: FailureRule = "nutritional: nutr > 0.95, roberta < 0.6, jaccard < 0.1".parse().unwrap();
        assert_eq!(r.clauses.len(), 3);
        assert_eq!(r.clauses[0].metric, Metric::NutrRecipe);
        assert_eq!(r.clauses[1].metric, Metric::SemA);
        assert_eq!(r.clauses[2].comparator, Comparator::Lt);
        assert_eq!(r, default_rules()[0]);
        let ge: FailureRule = "x: fused >= 0.5".parse().unwrap();
        assert_eq!(ge.clauses[0].comparator, Comparator::Ge);
        assert_eq!(
            "x: bogus > 0.5".parse::<FailureRule>(),
            Err(AnalysisError::UnknownMetric("bogus".into()))
        );
        assert!("x: fused > 1.5".parse::<FailureRule>().is_err());
        assert!("no colon".parse::<FailureRule>().is_err());
        assert!("x: fused = 0.5".parse::<FailureRule>().is_err());
    }

    #[test]
    fn failure_cases_on_empty_table() {
        let t = ScoreTable::new(PairConvention::Unordered, vec![]);
        let reports = failure_cases(&t, &default_rules(), PairConvention::Ordered);
        assert!(reports.iter().all(|r| r.count == 0 && r.percentage == 0.0));
    }

    #[test]
    fn ordered_view_doubles_counts_not_percentages() {
        let t = table(&[(0.5, 0.5, 0.0, 0.99, 0.5), (0.9, 0.9, 0.9, 0.9, 0.9)]);
        let un = &failure_cases(&t, &default_rules(), PairConvention::Unordered)[0];
        let or = &failure_cases(&t, &default_rules(), PairConvention::Ordered)[0];
        assert_eq!((un.count, or.count), (1, 2));
        assert_eq!(un.percentage, 50.0);
        assert_eq!(or.percentage, 50.0);
        let back = &failure_cases(&t.to_ordered(), &default_rules(), PairConvention::Unordered)[0];
        assert_eq!(back.count, 1);
    }

    #[test]
    fn bins_constant_low_lexical() {
        let t = table(&[(0.05, 0.05, 0.05, 0.05, 0.05); 4]);
        let bins = jaccard_bin_agreement(&t).unwrap();
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[0].count, 4);
        assert!((bins[0].avg_fused.unwrap() - 0.05).abs() < 1e-12);
        assert!(bins[1..].iter().all(|b| b.count == 0 && b.avg_fused.is_none()));
    }

    #[test]
    fn bin_edges() {
        assert_eq!(lexical_bin(0.0), 0);
        assert_eq!(lexical_bin(0.1), 1);
        assert_eq!(lexical_bin(0.7), 7);
        assert_eq!(lexical_bin(0.9999), 9);
        assert_eq!(lexical_bin(1.0), 9);
        assert!(jaccard_bin_agreement(&ScoreTable::new(PairConvention::Unordered, vec![])).is_err());
    }

    #[test]
    fn model_comparison_shift() {
        let t = table(&[(0.1, 0.15, 0.0, 0.0, 0.0), (0.5, 0.55, 0.0, 0.0, 0.0), (0.8, 0.85, 0.0, 0.0, 0.0)]);
        let c = model_comparison(&t).unwrap();
        assert!((c.mean_abs_diff - 0.05).abs() < 1e-12);
        assert!((c.max_abs_diff - 0.05).abs() < 1e-12);
        assert!((c.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        let same = table(&[(0.3, 0.3, 0.0, 0.0, 0.0); 3]);
        let c = model_comparison(&same).unwrap();
        assert_eq!((c.mean_abs_diff, c.max_abs_diff, c.pearson_r), (0.0, 0.0, None));
    }

    #[test]
    fn reports_render() {
        let t = table(&[(0.1, 0.2, 0.0, 0.3, 0.4), (0.4, 0.3, 0.25, 0.9, 0.1), (0.6, 0.7, 1.0, 0.2, 0.2)]);
        for kind in ReportKind::ALL {
            let text = render_report(kind, &t, &default_rules(), PairConvention::Ordered).unwrap();
            assert!(text.lines().count() >= 2, "{kind:?}: {text}");
        }
        let empty = ScoreTable::new(PairConvention::Unordered, vec![]);
        assert_eq!(render_report(ReportKind::Failures, &empty, &[], PairConvention::Ordered), Err(AnalysisError::EmptyTable));
    }
}
