mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use recipesim::analysis::{default_rules, ReportKind};
use recipesim::cli::{analyze_table, cmd_score, load_rules, load_table, ScoreArgs};
use recipesim::fusion::{PairConvention, ScoreTable};
use recipesim::semantic::FileEmbeddings;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recipesim"))
}

fn score_to(out: &Path, workers: usize) -> recipesim::fusion::ScoreRun {
    cmd_score(&ScoreArgs {
        corpus: Some(mini_corpus_path()),
        workers: Some(workers),
        out: Some(out.to_path_buf()),
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn mini_corpus_table_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scores.csv");
    let run = score_to(&out, 4);
    assert_eq!(run.table.len(), 50 * 49 / 2);
    assert!(run.skipped.is_empty());
    let golden = std::fs::read(manifest_path("tests/golden/mini_scores.csv")).unwrap();
    assert!(std::fs::read(&out).unwrap() == golden, "score table drifted from golden file");
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    let eight = dir.path().join("eight.csv");
    score_to(&one, 1);
    score_to(&eight, 8);
    assert_eq!(std::fs::read(one).unwrap(), std::fs::read(eight).unwrap());
}

#[test]
fn golden_reports_regenerate() {
    let table = load_table(&manifest_path("tests/golden/mini_scores.csv")).unwrap();
    let reports = analyze_table(&table, &default_rules(), PairConvention::Ordered, &ReportKind::ALL).unwrap();
    for (kind, text) in reports {
        let golden = std::fs::read_to_string(manifest_path(&format!("tests/golden/reports/{}", kind.file_name()))).unwrap();
        assert_eq!(text, golden, "{kind:?}");
    }
}

#[test]
fn table_csv_round_trips() {
    let path = manifest_path("tests/golden/mini_scores.csv");
    let table = load_table(&path).unwrap();
    assert_eq!(table.convention(), PairConvention::Unordered);
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(buf, std::fs::read(&path).unwrap());
    let ordered = table.to_ordered();
    let mut buf = Vec::new();
    ordered.write_csv(&mut buf).unwrap();
    let back = ScoreTable::read_csv(&buf[..]).unwrap();
    assert_eq!(back.convention(), PairConvention::Ordered);
    assert_eq!(back.len(), 2 * table.len());
}

#[test]
fn ordered_convention_mirrors_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let run = cmd_score(&ScoreArgs {
        corpus: Some(mini_corpus_path()),
        convention: Some(recipesim::cli::ConventionArg::Ordered),
        out: Some(dir.path().join("o.csv")),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(run.table.len(), 50 * 49);
    for r in run.table.records() {
        let m = run.table.records().iter().find(|x| x.main_id == r.secondary_id && x.secondary_id == r.main_id).unwrap();
        assert_eq!(m.fused, r.fused);
    }
}

#[test]
fn missing_embeddings_are_skipped_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = mini_corpus();
    let emb_path = dir.path().join("a.emb");
    let mut store = FileEmbeddings::new("model-a", 8);
    for (k, r) in corpus.recipes().enumerate() {
        if r.id == "hot-cocoa" {
            continue;
        }
        let v: Vec<f64> = (0..8).map(|i| 1.0 + ((k * 7 + i * 3) % 11) as f64).collect();
        store.insert(r.id.clone(), v).unwrap();
    }
    store.write_binary(std::fs::File::create(&emb_path).unwrap()).unwrap();
    let skipped = dir.path().join("skipped.csv");
    let out = bin()
        .args(["score", "--corpus"])
        .arg(mini_corpus_path())
        .arg("--embeddings-a")
        .arg(&emb_path)
        .arg("--out")
        .arg(dir.path().join("t.csv"))
        .arg("--skipped-report")
        .arg(&skipped)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(&skipped).unwrap();
    assert_eq!(report.lines().count(), 1 + 49);
    let table = load_table(&dir.path().join("t.csv")).unwrap();
    assert_eq!(table.len(), 49 * 48 / 2);

    let abort = bin()
        .args(["score", "--missing", "abort", "--corpus"])
        .arg(mini_corpus_path())
        .arg("--embeddings-a")
        .arg(&emb_path)
        .arg("--out")
        .arg(dir.path().join("t2.csv"))
        .output()
        .unwrap();
    assert_eq!(abort.status.code(), Some(1));
}

#[test]
fn ingest_exit_codes() {
    let ok = bin().arg("ingest").arg(mini_corpus_path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("accepted: 50"));

    let rejects = bin().arg("ingest").arg(manifest_path("tests/fixtures/rejects_corpus.jsonl")).output().unwrap();
    assert_eq!(rejects.status.code(), Some(0));
    let text = String::from_utf8_lossy(&rejects.stdout).to_string();
    for line in ["line 3:", "line 5:", "line 6:", "line 8:"] {
        assert!(text.contains(line), "{text}");
    }
    let strict = bin().args(["ingest", "--strict"]).arg(manifest_path("tests/fixtures/rejects_corpus.jsonl")).output().unwrap();
    assert_eq!(strict.status.code(), Some(1));

    let dup = bin().arg("ingest").arg(manifest_path("tests/fixtures/duplicate_corpus.jsonl")).output().unwrap();
    assert_eq!(dup.status.code(), Some(1));
    let missing = bin().arg("ingest").arg("/nonexistent/corpus.jsonl").output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn analyze_writes_reports_and_honors_custom_rules() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("analyze")
        .arg(manifest_path("tests/golden/mini_scores.csv"))
        .arg("--out-dir")
        .arg(dir.path())
        .arg("--rules")
        .arg(manifest_path("tests/fixtures/custom_rules.txt"))
        .arg("--report")
        .arg("failures")
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.path().join("failure_cases.csv")).unwrap();
    let rules = load_rules(Some(&manifest_path("tests/fixtures/custom_rules.txt"))).unwrap();
    let table = load_table(&manifest_path("tests/golden/mini_scores.csv")).unwrap().to_ordered();
    let expected: Vec<usize> = rules.iter().map(|r| table.records().iter().filter(|x| r.matches(x)).count()).collect();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("nutrition_only,") && lines[1].contains(&format!(",{},", expected[0])), "{text}");
    assert!(lines[2].starts_with("cocktail_like,") && lines[2].contains(&format!(",{},", expected[1])), "{text}");
    assert!(!dir.path().join("descriptive_stats.csv").exists());
}

#[test]
fn analyze_rejects_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "main_id,secondary_id,sem_a,sem_b,lexical,nutr_recipe,nutr_ingredient,sem_avg,nutr_avg,fused\n").unwrap();
    let out = bin().arg("analyze").arg(&empty).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let bad_rules = dir.path().join("rules.txt");
    std::fs::write(&bad_rules, "oops: nothing > 0.3\n").unwrap();
    let out = bin()
        .arg("analyze")
        .arg(manifest_path("tests/golden/mini_scores.csv"))
        .arg("--rules")
        .arg(&bad_rules)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn score_run_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "corpus = {:?}\nworkers = 2\n[weights]\nsemantic = 0.5\nlexical = 0.25\nnutritional = 0.25\n[model_a]\nkind = \"fallback\"\ndimension = 64\nsalt = 9\n",
            mini_corpus_path().display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("t.csv");
    let run = cmd_score(&ScoreArgs { config: Some(cfg.clone()), out: Some(out.clone()), ..Default::default() }).unwrap();
    let r = &run.table.records()[0];
    assert!((r.fused - (0.5 * r.sem_avg + 0.25 * r.lexical + 0.25 * r.nutr_avg)).abs() < 1e-12);

    let bad = bin()
        .args(["score", "--weights", "0.5,0.5,0.5", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_command_reports_and_rejects_missing_features() {
    let dir = tempfile::tempdir().unwrap();
    let table = load_table(&manifest_path("tests/golden/mini_scores.csv")).unwrap();
    let gt = dir.path().join("gt.csv");
    let mut body = String::from("main_id,secondary_id,label\n");
    for r in table.records() {
        body.push_str(&format!("{},{},{}\n", r.main_id, r.secondary_id, (r.lexical > 0.3) as u8));
    }
    std::fs::write(&gt, &body).unwrap();
    let report = dir.path().join("model.csv");
    let run = |model: &str, out: &Path| {
        bin()
            .args(["train", "--model", model, "--seed", "7", "--trees", "20", "--ground-truth"])
            .arg(&gt)
            .arg("--table")
            .arg(manifest_path("tests/golden/mini_scores.csv"))
            .arg("--out")
            .arg(out)
            .status()
            .unwrap()
    };
    assert!(run("forest", &report).success());
    let first = std::fs::read_to_string(&report).unwrap();
    assert!(run("forest", &report).success());
    assert_eq!(first, std::fs::read_to_string(&report).unwrap());
    assert!(first.contains("importance_pct,lexical,"));
    assert!(run("logistic", &report).success());

    body.push_str("not-a-recipe,hot-cocoa,1\n");
    std::fs::write(&gt, &body).unwrap();
    assert_eq!(run("logistic", &report).code(), Some(1));
}
