// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::PromptInstance;
use super::{derive_seed, run_method, token_hash, Method};
use crate::error::{AttribError, Result};
use crate::metrics::{evaluate_mask, BagOfWordsEncoder, MetricsReport, SentenceEncoder};
use crate::model::{generate, Concurrency, ScoredGenerator};
use crate::search::{xprompt_search, SearchConfig, SearchVariant};

/// Iteration checkpoints reported by the ablation.
pub const ABLATION_CHECKPOINTS: [usize; 8] = [1, 5, 10, 15, 20, 30, 40, 50];

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance_id: String,
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub trace: Vec<f64>,
    pub metrics: MetricsReport,
    pub gradient_calls: u64,
    pub forward_calls: u64,
    /// Frozen original output `y`.
    pub target: Vec<u32>,
    pub target_hash: String,
    /// Output regenerated from the masked prompt.
    pub regenerated: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub instance_id: String,
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub k: usize,
    pub instances: usize,
    pub bleu: f64,
    pub rouge_l_precision: f64,
    pub rouge_l_recall: f64,
    pub rouge_l_f1: f64,
    pub embedding_similarity: Option<f64>,
    pub pr: f64,
    pub kl: f64,
    pub forward_calls: f64,
    pub gradient_calls: f64,
    pub seconds_per_instance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
    pub failures: usize,
}

impl AggregateTable {
    pub fn row(&self, method: &str, k: usize) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.method == method && r.k == k)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<10} {:>3} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>6} {:>9}\n",
            "method", "k", "n", "bleu", "rl_p", "rl_r", "rl_f1", "emb", "pr", "kl", "fwd", "grad", "sec/inst"
        );
        for r in &self.rows {
            let emb = r.embedding_similarity.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<10} {:>3} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7} {:>7.3} {:>7.3} {:>8.1} {:>6.1} {:>9.4}",
                r.method,
                r.k,
                r.instances,
                r.bleu,
                r.rouge_l_precision,
                r.rouge_l_recall,
                r.rouge_l_f1,
                emb,
                r.pr,
                r.kl,
                r.forward_calls,
                r.gradient_calls,
                r.seconds_per_instance
            );
        }
        if self.failures > 0 {
            let _ = writeln!(out, "failures: {}", self.failures);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<FailureRecord>,
    pub table: AggregateTable,
}

struct Unit<'a> {
    instance: &'a PromptInstance,
    method: Method,
    k: usize,
    seed: u64,
}

fn units<'a>(instances: &'a [PromptInstance], config: &ExperimentConfig) -> Vec<Unit<'a>> {
    let mut out = Vec::new();
    for instance in instances {
        for &k in &config.k_values {
            for &method in &config.methods {
                for &global in &config.seeds {
                    out.push(Unit { instance, method, k, seed: derive_seed(global, &instance.id, method.name(), k) });
                }
            }
        }
    }
    out
}

/// Maps `f` over the work units, in parallel when the adapter allows it.
/// Output order always matches input order.
fn map_units<T, U, F>(model: &dyn ScoredGenerator, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match model.concurrency() {
        Concurrency::Shared => items.par_iter().map(f).collect(),
        Concurrency::Exclusive => items.iter().map(f).collect(),
    }
}

fn run_unit(
    model: &dyn ScoredGenerator,
    encoder: &dyn SentenceEncoder,
    unit: &Unit<'_>,
    config: &ExperimentConfig,
) -> Result<ResultRecord> {
    let inst = unit.instance;
    let result = run_method(
        model,
        &inst.prompt_tokens,
        &inst.target_tokens,
        unit.method,
        unit.k,
        unit.seed,
        &config.method_settings(),
    )?;
    let mask = result.final_mask(inst.prompt_tokens.len())?;
    let regenerated = generate(model, &inst.prompt_tokens, Some(&mask), config.max_new_tokens)?;
    let metrics = evaluate_mask(model, encoder, &inst.prompt_tokens, &inst.target_tokens, &regenerated, &mask)?;
    Ok(ResultRecord {
        instance_id: inst.id.clone(),
        method: result.method,
        k: unit.k,
        seed: unit.seed,
        indices: result.indices,
        trace: result.trace,
        metrics,
        gradient_calls: result.gradient_calls,
        forward_calls: result.forward_calls,
        target: inst.target_tokens.ids().to_vec(),
        target_hash: token_hash(&inst.target_tokens),
        regenerated: regenerated.into_ids(),
    })
}

/// Runs every (instance, k, method, seed) unit, computes metrics against the
/// frozen targets, and aggregates. Unit failures are recorded and skipped.
pub fn run_experiment(
    model: &dyn ScoredGenerator,
    instances: &[PromptInstance],
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    config.validate()?;
    let encoder = BagOfWordsEncoder::new(model.vocabulary_size());
    let work = units(instances, config);
    let outcomes = map_units(model, &work, |unit| {
        let start = Instant::now();
        let outcome = run_unit(model, &encoder, unit, config);
        (outcome, start.elapsed().as_secs_f64())
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut seconds = Vec::new();
    for (unit, (outcome, secs)) in work.iter().zip(outcomes) {
        match outcome {
            Ok(record) => {
                records.push(record);
                seconds.push(secs);
            }
            Err(e) => {
                log::warn!("{} / {} / k={}: {e}", unit.instance.id, unit.method, unit.k);
                failures.push(FailureRecord {
                    instance_id: unit.instance.id.clone(),
                    method: unit.method.name().into(),
                    k: unit.k,
                    seed: unit.seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let mut table = aggregate(&records, Some(&seconds));
    table.failures = failures.len();
    Ok(ExperimentOutput { records, failures, table })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-(method, k) means over the instances on which every method at that
/// `k` succeeded. `seconds`, when given, is parallel to `records`.
pub fn aggregate(records: &[ResultRecord], seconds: Option<&[f64]>) -> AggregateTable {
    // (k) -> instance keys per method
    let mut per_k: BTreeMap<usize, BTreeMap<&str, BTreeSet<&str>>> = BTreeMap::new();
    for r in records {
        per_k.entry(r.k).or_default().entry(&r.method).or_default().insert(&r.instance_id);
    }
    let mut method_order: Vec<&str> = Vec::new();
    for r in records {
        if !method_order.contains(&r.method.as_str()) {
            method_order.push(&r.method);
        }
    }

    let mut rows = Vec::new();
    for (&k, by_method) in &per_k {
        let mut common: Option<BTreeSet<&str>> = None;
        for ids in by_method.values() {
            common = Some(match common {
                None => ids.clone(),
                Some(c) => c.intersection(ids).copied().collect(),
            });
        }
        let common = common.unwrap_or_default();
        for &method in &method_order {
            if !by_method.contains_key(method) {
                continue;
            }
            let selected: Vec<(usize, &ResultRecord)> = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.k == k && r.method == method && common.contains(r.instance_id.as_str()))
                .collect();
            let m = |f: fn(&MetricsReport) -> f64| mean(selected.iter().map(|(_, r)| f(&r.metrics)));
            let emb: Vec<f64> = selected.iter().filter_map(|(_, r)| r.metrics.embedding_similarity).collect();
            let instances: BTreeSet<&str> = selected.iter().map(|(_, r)| r.instance_id.as_str()).collect();
            let total_secs: f64 = seconds.map(|s| selected.iter().map(|(i, _)| s[*i]).sum()).unwrap_or(0.0);
            rows.push(AggregateRow {
                method: method.to_string(),
                k,
                instances: instances.len(),
                bleu: m(|r| r.bleu),
                rouge_l_precision: m(|r| r.rouge_l_precision),
                rouge_l_recall: m(|r| r.rouge_l_recall),
                rouge_l_f1: m(|r| r.rouge_l_f1),
                embedding_similarity: (!emb.is_empty()).then(|| mean(emb.iter().copied())),
                pr: m(|r| r.pr),
                kl: m(|r| r.kl),
                forward_calls: mean(selected.iter().map(|(_, r)| r.forward_calls as f64)),
                gradient_calls: mean(selected.iter().map(|(_, r)| r.gradient_calls as f64)),
                seconds_per_instance: if instances.is_empty() { 0.0 } else { total_secs / instances.len() as f64 },
            });
        }
    }
    AggregateTable { rows, failures: 0 }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| AttribError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| AttribError::io(path, e))?))
}

pub fn write_results_jsonl(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut out = create(path)?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| AttribError::io(path, e))?;
    }
    out.flush().map_err(|e| AttribError::io(path, e))
}

pub fn write_aggregate_csv(path: &Path, table: &AggregateTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "method",
        "k",
        "instances",
        "bleu",
        "rouge_l_precision",
        "rouge_l_recall",
        "rouge_l_f1",
        "embedding_similarity",
        "pr",
        "kl",
        "forward_calls",
        "gradient_calls",
        "seconds_per_instance",
    ])?;
    for r in &table.rows {
        w.write_record([
            r.method.clone(),
            r.k.to_string(),
            r.instances.to_string(),
            r.bleu.to_string(),
            r.rouge_l_precision.to_string(),
            r.rouge_l_recall.to_string(),
            r.rouge_l_f1.to_string(),
            r.embedding_similarity.map(|v| v.to_string()).unwrap_or_default(),
            r.pr.to_string(),
            r.kl.to_string(),
            r.forward_calls.to_string(),
            r.gradient_calls.to_string(),
            r.seconds_per_instance.to_string(),
        ])?;
    }
    w.flush().map_err(|e| AttribError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub k: usize,
    pub mean_pr: f64,
    pub instances: usize,
}

/// Mean probability ratio per method at each `k` (which must be ascending).
pub fn run_pr_vs_k(
    model: &dyn ScoredGenerator,
    instances: &[PromptInstance],
    config: &ExperimentConfig,
) -> Result<(Vec<CurvePoint>, ExperimentOutput)> {
    if !config.k_values.windows(2).all(|w| w[0] < w[1]) {
        return Err(AttribError::Config {
            key: "k_values".into(),
            message: "must be strictly ascending for curves".into(),
        });
    }
    let output = run_experiment(model, instances, config)?;
    let mut points = Vec::new();
    for method in &config.methods {
        for &k in &config.k_values {
            if let Some(row) = output.table.row(method.name(), k) {
                points.push(CurvePoint { method: row.method.clone(), k, mean_pr: row.pr, instances: row.instances });
            }
        }
    }
    Ok((points, output))
}

pub fn write_pr_vs_k_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| AttribError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: String,
    pub instance_id: String,
    pub seed: u64,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub checkpoint: usize,
    pub mean_log_likelihood: f64,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
    pub failures: Vec<FailureRecord>,
}

impl AblationOutput {
    pub fn mean_at(&self, variant: SearchVariant, checkpoint: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant.label() && r.checkpoint == checkpoint)
            .map(|r| r.mean_log_likelihood)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<20}", "variant");
        for c in ABLATION_CHECKPOINTS {
            let _ = write!(out, " {c:>9}");
        }
        out.push('\n');
        for variant in VARIANTS {
            let _ = write!(out, "{:<20}", variant.label());
            for c in ABLATION_CHECKPOINTS {
                match self.mean_at(variant, c) {
                    Some(v) => {
                        let _ = write!(out, " {v:>9.3}");
                    }
                    None => out.push_str(&format!(" {:>9}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

const VARIANTS: [SearchVariant; 3] = [SearchVariant::Full, SearchVariant::RandomInit, SearchVariant::UniformSampling];

/// Full search against the two gradient-free variants, reporting the mean
/// accepted log-likelihood at each checkpoint. Uses the first nonzero `k`
/// and at least 50 iterations.
pub fn run_ablation(
    model: &dyn ScoredGenerator,
    instances: &[PromptInstance],
    config: &ExperimentConfig,
) -> Result<AblationOutput> {
    config.validate()?;
    if !model.supports_gradient() {
        return Err(AttribError::UnsupportedCapability("mask gradients"));
    }
    let k =
        config.k_values.iter().copied().find(|&k| k > 0).ok_or_else(|| AttribError::Config {
            key: "k_values".into(),
            message: "ablation needs a nonzero k".into(),
        })?;
    let iterations = config.iterations.max(*ABLATION_CHECKPOINTS.last().expect("nonempty"));

    let mut work = Vec::new();
    for inst in instances {
        for variant in VARIANTS {
            for &global in &config.seeds {
                work.push((inst, variant, derive_seed(global, &inst.id, variant.label(), k)));
            }
        }
    }
    let outcomes = map_units(model, &work, |(inst, variant, seed)| {
        let search = SearchConfig {
            iterations,
            seed: *seed,
            temperature: config.temperature,
            variant: *variant,
            ..SearchConfig::default()
        };
        xprompt_search(model, &inst.prompt_tokens, &inst.target_tokens, k, &search)
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((inst, variant, seed), outcome) in work.iter().zip(outcomes) {
        match outcome {
            Ok(result) => runs.push(AblationRun {
                variant: variant.label().into(),
                instance_id: inst.id.clone(),
                seed: *seed,
                trace: result.trace,
            }),
            Err(e) => failures.push(FailureRecord {
                instance_id: inst.id.clone(),
                method: variant.label().into(),
                k,
                seed: *seed,
                error: e.to_string(),
            }),
        }
    }

    let mut rows = Vec::new();
    for variant in VARIANTS {
        let traces: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == variant.label()).collect();
        for checkpoint in ABLATION_CHECKPOINTS {
            rows.push(AblationRow {
                variant: variant.label().into(),
                checkpoint,
                mean_log_likelihood: mean(traces.iter().map(|r| r.trace[checkpoint])),
                runs: traces.len(),
            });
        }
    }
    Ok(AblationOutput { rows, runs, failures })
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| AttribError::io(path, e))
}
