// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xattrib::harness::{
    ingest, run_ablation, run_experiment, run_method, run_pr_vs_k, write_ablation_csv, write_aggregate_csv,
    write_pr_vs_k_csv, write_results_jsonl, ExperimentConfig, IngestOptions, Method, PromptInstance,
};
use xattrib::model::{generate, MaskMode, ModelRegistry, ModelSpec};
use xattrib::render::HighlightRendering;
use xattrib::suite::synthetic_dataset_lines;
use xattrib::{AttribError, SearchConfig};

#[derive(Parser)]
#[command(name = "xattrib", version, about = "Prompt-token attribution for scored generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one prompt and render the explanatory tokens.
    Explain(ExplainArgs),
    /// Run the method grid over a dataset and write results.jsonl + aggregate.csv.
    Evaluate(GridArgs),
    /// Gradient-guidance ablation; writes ablation.csv.
    Ablate(GridArgs),
    /// Mean probability ratio per method over k; writes pr_vs_k.csv.
    Curves(GridArgs),
    /// Write a synthetic JSONL prompt dataset.
    DemoDataset(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExplainMethod {
    Xprompt,
    Random,
    Loo,
    Ig,
}

impl From<ExplainMethod> for Method {
    fn from(m: ExplainMethod) -> Self {
        match m {
            ExplainMethod::Xprompt => Method::Xprompt,
            ExplainMethod::Random => Method::Random,
            ExplainMethod::Loo => Method::Loo,
            ExplainMethod::Ig => Method::Ig,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ansi,
    Html,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskModeArg {
    ZeroEmbedding,
    Removal,
}

impl From<MaskModeArg> for MaskMode {
    fn from(m: MaskModeArg) -> Self {
        match m {
            MaskModeArg::ZeroEmbedding => MaskMode::ZeroEmbedding,
            MaskModeArg::Removal => MaskMode::Removal,
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long, default_value = "toy-controlled")]
    model: String,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, value_enum)]
    mask_mode: Option<MaskModeArg>,
    #[arg(long, conflicts_with = "prompt_file", required_unless_present = "prompt_file")]
    prompt: Option<String>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "xprompt")]
    method: ExplainMethod,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = xattrib::search::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ansi")]
    format: Format,
    /// Write the rendering here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    max_new_tokens: usize,
}

/// Grid settings: a TOML config, flags, or both (flags win).
#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long, value_enum)]
    mask_mode: Option<MaskModeArg>,
    /// Comma-separated, e.g. `xprompt,loo`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long = "k", value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    min_prompt_length: Option<usize>,
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 120)]
    count: usize,
    #[arg(long, default_value_t = 15)]
    min_words: usize,
    #[arg(long, default_value_t = 30)]
    max_words: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Explain(args) => explain(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Ablate(args) => ablate(args),
        Command::Curves(args) => curves(args),
        Command::DemoDataset(args) => demo_dataset(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_environmental() { 3 } else { 2 })
        }
    }
}

fn explain(args: ExplainArgs) -> xattrib::Result<()> {
    let mut spec = ModelSpec::new(args.model.clone(), args.model_seed);
    if let Some(mode) = args.mask_mode {
        spec.mask_mode = mode.into();
    }
    let model = ModelRegistry::with_builtins().build(&spec)?;
    let text = match (&args.prompt, &args.prompt_file) {
        (Some(text), _) => text.clone(),
        (None, Some(path)) => fs::read_to_string(path).map_err(|e| io_error(path, e))?,
        (None, None) => unreachable!("clap requires one of --prompt/--prompt-file"),
    };
    if args.max_new_tokens == 0 {
        return Err(AttribError::InvalidArgument("--max-new-tokens must be at least 1".into()));
    }
    let instance = PromptInstance::from_text(model.as_ref(), "prompt", text.trim(), args.max_new_tokens)?;
    let len = instance.prompt_tokens.len();
    if args.k == 0 || args.k >= len {
        return Err(AttribError::InvalidCardinality { k: args.k, len });
    }
    let settings = xattrib::harness::MethodSettings {
        iterations: args.iterations,
        temperature: SearchConfig::default().temperature,
        ..Default::default()
    };
    let result = run_method(
        model.as_ref(),
        &instance.prompt_tokens,
        &instance.target_tokens,
        args.method.into(),
        args.k,
        args.seed,
        &settings,
    )?
    .with_id(instance.id.clone());
    let render_ids = |ids: &[u32]| ids.iter().map(|&t| model.render_token(t)).collect::<Vec<_>>().join(" ");
    let json = serde_json::to_string(&result)?;

    match args.format {
        Format::Json => emit(args.output.as_deref(), &format!("{json}\n")),
        Format::Ansi | Format::Html => {
            let masked = result.final_mask(len)?;
            let regenerated = generate(model.as_ref(), &instance.prompt_tokens, Some(&masked), args.max_new_tokens)?;
            let output_text =
                format!("{}  |  masked: {}", render_ids(&instance.target_tokens), render_ids(&regenerated));
            let rendering = HighlightRendering::new(instance.token_labels(model.as_ref()), output_text, &result)?;
            match args.format {
                Format::Html => {
                    emit(args.output.as_deref(), &rendering.to_html())?;
                    if args.output.is_some() {
                        println!("{json}");
                    }
                    Ok(())
                }
                _ => emit(args.output.as_deref(), &format!("{}{json}\n", rendering.to_ansi())),
            }
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> xattrib::Result<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> AttribError {
    AttribError::Io { path: path.to_path_buf(), source }
}

fn grid_config(args: &GridArgs) -> xattrib::Result<ExperimentConfig> {
    let mut config = match (&args.config, &args.dataset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(dataset)) => ExperimentConfig::new(dataset),
        (None, None) => {
            return Err(AttribError::Config { key: "dataset".into(), message: "pass --config or --dataset".into() })
        }
    };
    if let (Some(_), Some(dataset)) = (&args.config, &args.dataset) {
        config.dataset = dataset.clone();
    }
    if let Some(v) = &args.model {
        config.model = v.clone();
    }
    if let Some(v) = args.model_seed {
        config.model_seed = v;
    }
    if let Some(v) = args.mask_mode {
        config.mask_mode = v.into();
    }
    if let Some(v) = &args.methods {
        config.methods = v.clone();
    }
    if let Some(v) = &args.k_values {
        config.k_values = v.clone();
    }
    if let Some(v) = &args.seeds {
        config.seeds = v.clone();
    }
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.max_new_tokens {
        config.max_new_tokens = v;
    }
    if let Some(v) = args.min_prompt_length {
        config.min_prompt_length = v;
    }
    config.validate()?;
    Ok(config)
}

struct Prepared {
    config: ExperimentConfig,
    model: Box<dyn xattrib::ScoredGenerator>,
    instances: Vec<PromptInstance>,
}

fn prepare(args: &GridArgs) -> xattrib::Result<Prepared> {
    let config = grid_config(args)?;
    let model = ModelRegistry::with_builtins().build(&config.model_spec())?;
    let dataset = ingest(
        &config.dataset,
        model.as_ref(),
        IngestOptions { min_prompt_length: config.min_prompt_length, max_new_tokens: config.max_new_tokens },
    )?;
    log::info!(
        "{} instances ({} too short, {} too long)",
        dataset.instances.len(),
        dataset.skipped_short,
        dataset.skipped_long
    );
    fs::create_dir_all(&args.output_dir).map_err(|e| io_error(&args.output_dir, e))?;
    Ok(Prepared { config, model, instances: dataset.instances })
}

fn evaluate(args: GridArgs) -> xattrib::Result<()> {
    let p = prepare(&args)?;
    let out = run_experiment(p.model.as_ref(), &p.instances, &p.config)?;
    write_results_jsonl(&args.output_dir.join("results.jsonl"), &out.records)?;
    write_aggregate_csv(&args.output_dir.join("aggregate.csv"), &out.table)?;
    print!("{}", out.table.to_text());
    Ok(())
}

fn ablate(args: GridArgs) -> xattrib::Result<()> {
    let p = prepare(&args)?;
    let out = run_ablation(p.model.as_ref(), &p.instances, &p.config)?;
    write_ablation_csv(&args.output_dir.join("ablation.csv"), &out.rows)?;
    print!("{}", out.to_text());
    if !out.failures.is_empty() {
        println!("failures: {}", out.failures.len());
    }
    Ok(())
}

fn curves(args: GridArgs) -> xattrib::Result<()> {
    let p = prepare(&args)?;
    let (points, out) = run_pr_vs_k(p.model.as_ref(), &p.instances, &p.config)?;
    write_pr_vs_k_csv(&args.output_dir.join("pr_vs_k.csv"), &points)?;
    write_results_jsonl(&args.output_dir.join("results.jsonl"), &out.records)?;
    print!("{}", out.table.to_text());
    Ok(())
}

fn demo_dataset(args: DemoArgs) -> xattrib::Result<()> {
    if args.min_words == 0 || args.min_words > args.max_words {
        return Err(AttribError::InvalidArgument("need 1 <= --min-words <= --max-words".into()));
    }
    let mut text = synthetic_dataset_lines(args.count, args.min_words, args.max_words, args.seed).join("\n");
    text.push('\n');
    fs::write(&args.output, text).map_err(|e| io_error(&args.output, e))
}
