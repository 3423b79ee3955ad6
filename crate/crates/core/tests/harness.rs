// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Cursor;
use std::path::Path;

use xattrib::harness::{
    aggregate, derive_seed, ingest, ingest_reader, run_ablation, run_experiment, run_pr_vs_k, token_hash,
    write_ablation_csv, write_aggregate_csv, write_pr_vs_k_csv, write_results_jsonl, AblationRow, AggregateRow,
    CurvePoint, ExperimentConfig, IngestOptions, Method, PromptInstance, ResultRecord, ABLATION_CHECKPOINTS,
};
use xattrib::model::{ModelRegistry, ModelSpec};
use xattrib::suite::synthetic_dataset_lines;
use xattrib::{AttribError, ScoredGenerator};

fn toy() -> Box<dyn ScoredGenerator> {
    ModelRegistry::with_builtins().build(&ModelSpec::new("toy-controlled", 7)).unwrap()
}

fn instances(model: &dyn ScoredGenerator, count: usize, min: usize, max: usize) -> Vec<PromptInstance> {
    let text = synthetic_dataset_lines(count, min, max, 5).join("\n");
    let options = IngestOptions { min_prompt_length: min, max_new_tokens: 8 };
    ingest_reader(Cursor::new(text), Path::new("mem.jsonl"), model, options).unwrap().instances
}

fn config(methods: Vec<Method>, k_values: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig { methods, k_values, max_new_tokens: 8, ..ExperimentConfig::new("unused.jsonl") }
}

#[test]
fn ingest_filters_short_prompts() {
    let model = toy();
    let mut lines = synthetic_dataset_lines(108, 15, 40, 1);
    for (i, line) in synthetic_dataset_lines(12, 3, 14, 2).into_iter().enumerate() {
        lines.push(line.replace("\"s00", &format!("\"short{i}_")));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prompts.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();
    let data = ingest(&path, model.as_ref(), IngestOptions::default()).unwrap();
    assert_eq!(lines.len(), 120);
    assert_eq!(data.instances.len(), 108);
    assert_eq!(data.skipped_short, 12);
    assert_eq!(data.skipped_long, 0);
    let first = &data.instances[0];
    assert_eq!(first.id, "s0000");
    assert!(!first.target_tokens.is_empty() && first.target_tokens.len() <= 64);
}

#[test]
fn ingest_accepts_explicit_targets_and_reports_bad_lines() {
    let model = toy();
    let opts = IngestOptions { min_prompt_length: 2, max_new_tokens: 4 };
    let read = |text: &str| ingest_reader(Cursor::new(text.to_string()), Path::new("d.jsonl"), model.as_ref(), opts);
    let data = read(
        "{\"id\":\"a1\",\"prompt\":\"explain why the sky is blue\",\"target\":[3,4,5]}\n\n\
         {\"id\":\"a2\",\"prompt\":\"give three tips\",\"target\":\"stay healthy\"}\n",
    )
    .unwrap();
    assert_eq!(data.instances[0].target_tokens.ids(), &[3, 4, 5]);
    assert_eq!(data.instances[1].target_tokens.len(), 2);

    let line_of = |text: &str| match read(text) {
        Err(AttribError::MalformedLine { line, .. }) => line,
        other => panic!("expected malformed line, got {other:?}"),
    };
    assert_eq!(line_of("{\"id\":\"a\",\"prompt\":\"x y\"}\n{\"id\":\"b\"}"), 2);
    assert_eq!(line_of("{\"id\":\"a\",\"prompt\":\"x y\"}\n{\"id\":\"a\",\"prompt\":\"x y\"}"), 2);
    assert_eq!(line_of("{\"id\":\"a\",\"prompt\":\"x y\",\"extra\":1}"), 1);
    assert_eq!(line_of("not json"), 1);
    assert!(matches!(read("{\"id\":\"a\",\"prompt\":\"x\"}"), Err(AttribError::EmptyDataset(_))));
    assert!(matches!(ingest(Path::new("/nonexistent/x.jsonl"), model.as_ref(), opts), Err(AttribError::Io { .. })));
}

#[test]
fn zero_k_gives_identity_metrics() {
    let model = toy();
    let insts = instances(model.as_ref(), 6, 15, 20);
    let out = run_experiment(model.as_ref(), &insts, &config(vec![Method::Random], vec![0])).unwrap();
    assert_eq!(out.records.len(), 6);
    for r in &out.records {
        assert_eq!(r.metrics.pr, 1.0);
        assert_eq!(r.metrics.kl, 0.0);
        assert_eq!(r.regenerated, r.target);
    }
    let row = out.table.row("random", 0).unwrap();
    assert_eq!((row.pr, row.kl, row.instances), (1.0, 0.0, 6));
}

#[test]
fn experiment_is_deterministic_and_records_everything() {
    let model = toy();
    let insts = instances(model.as_ref(), 8, 15, 22);
    let mut cfg = config(vec![Method::Xprompt, Method::Random, Method::Loo, Method::Ig], vec![2, 3]);
    cfg.seeds = vec![0, 1];
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let out = run_experiment(model.as_ref(), &insts, &cfg).unwrap();
        assert_eq!(out.records.len(), 8 * 4 * 2 * 2);
        assert!(out.failures.is_empty());
        let path = dir.path().join(format!("r{run}.jsonl"));
        write_results_jsonl(&path, &out.records).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);

    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    let records: Vec<ResultRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for r in &records {
        assert_eq!(r.indices.len(), r.k);
        assert_eq!(r.target_hash, token_hash(&r.target));
        assert_eq!(r.trace.is_empty(), r.method != "xprompt");
        assert!((0..2).any(|g| derive_seed(g, &r.instance_id, &r.method, r.k) == r.seed));
        let prompt_len = insts.iter().find(|i| i.id == r.instance_id).unwrap().prompt_tokens.len();
        match r.method.as_str() {
            "xprompt" => assert_eq!(r.gradient_calls, 1),
            "loo" => assert_eq!(r.forward_calls as usize, prompt_len + 1),
            _ => {}
        }
    }
}

#[test]
fn failures_are_recorded_not_fatal() {
    let model = ModelRegistry::with_builtins().build(&ModelSpec::new("toy-keyword", 1)).unwrap();
    let insts = instances(model.as_ref(), 4, 15, 20);
    let out = run_experiment(model.as_ref(), &insts, &config(vec![Method::Xprompt, Method::Loo], vec![2])).unwrap();
    assert_eq!(out.failures.len(), 4);
    assert!(out.failures.iter().all(|f| f.method == "xprompt"));
    assert_eq!(out.table.failures, 4);
    assert!(out.table.row("xprompt", 2).is_none());
    assert_eq!(out.table.row("loo", 2).unwrap().instances, 4);
}

#[test]
fn aggregate_round_trips_through_csv() {
    let model = toy();
    let insts = instances(model.as_ref(), 5, 15, 20);
    let out = run_experiment(model.as_ref(), &insts, &config(vec![Method::Xprompt, Method::Loo], vec![1, 3])).unwrap();
    let recomputed = aggregate(&out.records, None);
    for (a, b) in out.table.rows.iter().zip(&recomputed.rows) {
        assert_eq!((a.pr, a.kl, a.bleu, a.instances), (b.pr, b.kl, b.bleu, b.instances));
    }
    let mean_pr: f64 =
        out.records.iter().filter(|r| r.method == "loo" && r.k == 3).map(|r| r.metrics.pr).sum::<f64>() / 5.0;
    assert!((out.table.row("loo", 3).unwrap().pr - mean_pr).abs() <= 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aggregate.csv");
    write_aggregate_csv(&path, &out.table).unwrap();
    let rows: Vec<AggregateRow> = csv::Reader::from_path(&path).unwrap().deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows, out.table.rows);
    assert!(out.table.to_text().lines().count() == rows.len() + 1);
}

#[test]
fn oracle_curve_is_nonincreasing_in_k() {
    let model = toy();
    let insts = instances(model.as_ref(), 6, 15, 16);
    let cfg = config(vec![Method::Oracle, Method::Random], vec![0, 1, 2, 3]);
    let (points, _) = run_pr_vs_k(model.as_ref(), &insts, &cfg).unwrap();
    assert_eq!(points.len(), 8);
    let oracle: Vec<f64> = points.iter().filter(|p| p.method == "oracle").map(|p| p.mean_pr).collect();
    assert_eq!(oracle[0], 1.0);
    assert!(oracle.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{oracle:?}");
    assert_eq!(points.iter().find(|p| p.method == "random" && p.k == 0).unwrap().mean_pr, 1.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pr_vs_k.csv");
    write_pr_vs_k_csv(&path, &points).unwrap();
    let back: Vec<CurvePoint> = csv::Reader::from_path(&path).unwrap().deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(back, points);

    let unsorted = config(vec![Method::Random], vec![3, 1]);
    assert!(matches!(run_pr_vs_k(model.as_ref(), &insts, &unsorted), Err(AttribError::Config { .. })));
}

#[test]
fn ablation_writes_three_variants_by_eight_checkpoints() {
    let model = toy();
    let insts = instances(model.as_ref(), 3, 15, 20);
    let mut cfg = config(vec![Method::Xprompt], vec![0, 2]);
    cfg.seeds = vec![0, 1];
    let out = run_ablation(model.as_ref(), &insts, &cfg).unwrap();
    assert_eq!(out.runs.len(), 3 * 3 * 2);
    assert!(out.runs.iter().all(|r| r.trace.len() == 51 && r.trace.windows(2).all(|w| w[1] <= w[0])));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ablation.csv");
    write_ablation_csv(&path, &out.rows).unwrap();
    let rows: Vec<AblationRow> = csv::Reader::from_path(&path).unwrap().deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 24);
    let variants: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(variants.len(), 3);
    for v in &variants {
        let cps: Vec<usize> = rows.iter().filter(|r| r.variant == *v).map(|r| r.checkpoint).collect();
        assert_eq!(cps, ABLATION_CHECKPOINTS.to_vec());
    }
}

#[test]
fn config_round_trips_from_toml_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        "dataset = \"prompts.jsonl\"\nmethods = [\"xprompt\", \"ig\"]\nk_values = [1, 2]\nseeds = [3]\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.dataset, dir.path().join("prompts.jsonl"));
    assert_eq!(cfg.methods, vec![Method::Xprompt, Method::Ig]);
    assert_eq!(cfg.seeds, vec![3]);
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text, None).unwrap(), cfg);
}
