//! Descriptive statistics, correlations, failure rules and lexical-bin
//! agreement over a score table.
//!
//! cargo run --example analyze_scores -- [scores.csv]

use recipesim::analysis::{
    correlation_matrix, descriptive_stats, failure_cases, jaccard_bin_agreement, model_comparison, parse_rules, Metric,
};
use recipesim::fusion::PairConvention;

const RULES: &str = "\
# name: clause, clause, ...
nutritional: nutr > 0.95, roberta < 0.6, jaccard < 0.1
semantic: roberta > 0.85, jaccard < 0.1, nutr < 0.2
lexical: jaccard > 0.3, roberta < 0.6
agreeing: sem_avg > 0.5, lexical > 0.5, nutr_avg > 0.5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/mini_scores.csv").into());
    let table = recipesim::cli::load_table(path.as_ref())?;
    println!("{} rows ({:?})\n", table.len(), table.convention());

    println!("{:<16} {:>7} {:>7} {:>7} {:>7}", "metric", "mean", "median", "std", "skew");
    for m in Metric::CORE.iter().chain(&[Metric::Fused]) {
        let s = descriptive_stats(&m.values(&table))?;
        println!("{:<16} {:>7.4} {:>7.4} {:>7.4} {:>7.4}", m.column(), s.mean, s.median, s.std_dev, s.skew);
    }

    let corr = correlation_matrix(&table, &Metric::CORE)?;
    println!("\nr(sem_a, lexical) = {:?}", corr.values[0][3]);

    let rules = parse_rules(RULES)?;
    for convention in [PairConvention::Unordered, PairConvention::Ordered] {
        println!("\nfailure cases, {convention:?}:");
        for r in failure_cases(&table, &rules, convention) {
            println!("  {:<12} {:>5} ({:.2}%)  {}", r.rule, r.count, r.percentage, r.criteria);
        }
    }

    println!("\nlexical bins:");
    for b in jaccard_bin_agreement(&table)? {
        let fmt = |v: Option<f64>| v.map_or("  -   ".to_string(), |v| format!("{v:.4}"));
        println!("  [{:.1}, {:.1}) n={:<5} sem {} nutr {}", b.bin_lower, b.bin_upper, b.count, fmt(b.avg_semantic), fmt(b.avg_nutritional));
    }
    let cmp = model_comparison(&table)?;
    println!("\nembedding models: mean |diff| {:.4}, max {:.4}, r {:?}", cmp.mean_abs_diff, cmp.max_abs_diff, cmp.pearson_r);
    Ok(())
}
