//! Trains both classifiers on labelled pairs and prints cross-validated
//! accuracy and feature importance.
//!
//! With a ground-truth file and score table the real features are used;
//! otherwise labels are synthesized from the bundled table.
//!
//! cargo run --example train_classifiers -- [ground_truth.csv scores.csv]

use recipesim::eval_ml::{attach_features, evaluate, read_ground_truth, ForestConfig, GroundTruthRow, LogisticConfig, ModelKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (rows, table) = if let [gt, scores] = &args[..] {
        (read_ground_truth(std::fs::File::open(gt)?)?, recipesim::cli::load_table(scores.as_ref())?)
    } else {
        let table = recipesim::cli::load_table(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/mini_scores.csv").as_ref())?;
        // Stand-in judgments: similar when ingredients overlap and profiles agree.
        let rows = table
            .records()
            .iter()
            .map(|r| GroundTruthRow {
                main_id: r.main_id.clone(),
                secondary_id: r.secondary_id.clone(),
                label: (r.lexical > 0.2 && r.nutr_recipe > 0.5) as u8,
            })
            .collect::<Vec<_>>();
        (rows, table)
    };
    let (data, excluded) = attach_features(&rows, &table);
    println!("{} labelled pairs, {} excluded", data.len(), excluded.len());

    let kinds = [
        ModelKind::Logistic(LogisticConfig::default()),
        ModelKind::Forest(ForestConfig { trees: 100, seed: 1, ..Default::default() }),
    ];
    for kind in kinds {
        let report = evaluate(&kind, &data, 5, 1)?;
        println!("\n{}: accuracy {:.3} +/- {:.3}", report.model, report.cv.accuracy_mean, report.cv.accuracy_std);
        for (c, m) in report.cv.classes.iter().enumerate() {
            println!("  class {c}: precision {:.3} recall {:.3} f1 {:.3} (n={})", m.precision, m.recall, m.f1, m.support);
        }
        for f in &report.importance.features {
            println!("  {:<9} raw {:>9.4}  {:>5.1}%", f.name, f.raw, f.percent);
        }
    }
    Ok(())
}
