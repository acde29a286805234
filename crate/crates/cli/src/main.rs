//! `dgzsl`: synthetic data, training runs, ablation sweeps and gradient
//! checks.
//!
//! Exit codes: 0 success, 1 every ablation run failed, 2 usage,
//! 3 validation (bad config, data or manifest), 4 I/O, 5 numeric failure
//! (including a failed gradient check).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use decoupled_gzsl::data::{load_dataset, make_synthetic, parse_manifest, save_dataset, SyntheticSpec, MANIFEST_VERSION};
use decoupled_gzsl::evalcls::{metrics_csv, summary_line, GzslMetrics};
use decoupled_gzsl::gradcheck::run_gradcheck;
use decoupled_gzsl::model::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
use decoupled_gzsl::trainer::{
    evaluate_trained, records_csv, run_ablations, run_pipeline_with, summarize, summary_csv, Ablation, StageMask,
    TrainConfig,
};
use decoupled_gzsl::ErrorKind;

#[derive(Parser)]
#[command(name = "dgzsl", version, about = "Decoupled GAN feature generation for transductive GZSL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset plus a matching training config.
    SynthData {
        /// SyntheticSpec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one configuration and evaluate it.
    Train(TrainArgs),
    /// Run every ablation for every seed and aggregate.
    Ablate(AblateArgs),
    /// Re-evaluate a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of first- and second-order gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TrainConfig JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Accepted for scripting; execution is always serial and seeded.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// full, Stg1, Stg3, -Stg1, -Stg2, -Stg3 or baseline.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "stages")]
    ablation: Option<Ablation>,
    /// Stage list such as `1,3`.
    #[arg(long)]
    stages: Option<StageMask>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    /// Subset of configurations; all seven by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ablations: Vec<Ablation>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Supplies the evaluation settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the seed stored in the checkpoint.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] decoupled_gzsl::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("gradient check failed in {0} case(s)")]
    GradcheckFailed(usize),
    #[error("all {0} ablation runs failed")]
    AllRunsFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Validation => 3,
                ErrorKind::Io => 4,
                ErrorKind::Numeric => 5,
            },
            CliError::AllRunsFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Json { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::GradcheckFailed(_) => 5,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the manifest and every file it names.
fn dataset_hash(manifest_path: &Path) -> Result<String> {
    let manifest_bytes = read(manifest_path)?;
    let m = parse_manifest(&String::from_utf8_lossy(&manifest_bytes))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut files = vec![manifest_bytes];
    for name in [&m.features, &m.labels, &m.embeddings, &m.splits] {
        files.push(read(&dir.join(name))?);
    }
    let parts: Vec<&[u8]> = files.iter().map(Vec::as_slice).collect();
    Ok(sha256_hex(&parts))
}

#[derive(Serialize)]
struct Versions {
    dgzsl: &'static str,
    library: &'static str,
    checkpoint_format: u32,
    manifest_format: u32,
}

#[derive(Serialize)]
struct Summary {
    a_u: f64,
    a_s: f64,
    #[serde(rename = "H")]
    h: f64,
}

/// Everything needed to reproduce a training run.
#[derive(Serialize)]
struct RunRecord {
    seed: u64,
    config_sha256: String,
    dataset_sha256: String,
    ablation: Option<String>,
    stages: Vec<u8>,
    baseline_mode: bool,
    deterministic: bool,
    versions: Versions,
    metrics: Summary,
}

fn versions() -> Versions {
    Versions {
        dgzsl: env!("CARGO_PKG_VERSION"),
        library: decoupled_gzsl::VERSION,
        checkpoint_format: CHECKPOINT_VERSION,
        manifest_format: MANIFEST_VERSION,
    }
}

fn summary(m: &GzslMetrics) -> Summary {
    Summary {
        a_u: m.a_u,
        a_s: m.a_s,
        h: m.h,
    }
}

fn synth_data(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec: SyntheticSpec = match spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dataset = make_synthetic(&spec)?;
    create_dir(out)?;
    let manifest = save_dataset(&dataset, out)?;
    write(&out.join("spec.json"), pretty(&spec))?;
    write(&out.join("config.json"), pretty(&TrainConfig::synthetic_benchmark()))?;
    println!(
        "{}: {} seen classes ({} train / {} test rows), {} unseen classes ({} pool rows), feature_dim {}, embed_dim {}",
        manifest.display(),
        dataset.seen_classes().len(),
        dataset.seen_train().len(),
        dataset.seen_test().len(),
        dataset.unseen_classes().len(),
        dataset.unseen_pool().rows(),
        dataset.feature_dim(),
        dataset.embed_dim()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(args.run.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    match (args.ablation, args.stages) {
        (Some(_), Some(_)) => return Err(CliError::Usage("--ablation and --stages are exclusive".into())),
        (Some(a), None) => config = a.apply(&config),
        (None, Some(mask)) => config.stage_mask = mask,
        (None, None) => {}
    }
    config.validate()?;
    let dataset = load_dataset(&args.run.data)?;
    let dataset_sha256 = dataset_hash(&args.run.data)?;

    let out = &args.run.out;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let output = run_pipeline_with(&dataset, &config, |stage, st| {
        eprintln!("stage {stage} done");
        let ckpt = Checkpoint {
            seed: config.seed,
            models: st.models.clone(),
            regressor: Some(st.regressor.clone()),
        };
        save_checkpoint(&ckpt_dir.join(format!("stage{stage}.ckpt")), &ckpt)
    })?;

    if let Some(last) = config.stage_mask.stages().last() {
        let from = ckpt_dir.join(format!("stage{last}.ckpt"));
        let to = out.join("model.ckpt");
        fs::copy(&from, &to).map_err(|source| CliError::Io { path: to, source })?;
    }
    let metrics = &output.evaluation.metrics;
    let config_json = serde_json::to_string(&config).expect("config serializes");
    write(&out.join("config.json"), pretty(&config))?;
    write(&out.join("telemetry.csv"), output.telemetry().to_csv())?;
    write(&out.join("metrics.csv"), metrics_csv(metrics, dataset.seen_classes()))?;
    let record = RunRecord {
        seed: config.seed,
        config_sha256: sha256_hex(&[config_json.as_bytes()]),
        dataset_sha256,
        ablation: args.ablation.map(|a| a.name().to_owned()),
        stages: config.stage_mask.stages(),
        baseline_mode: config.baseline_mode,
        deterministic: args.run.deterministic,
        versions: versions(),
        metrics: summary(metrics),
    };
    write(&out.join("run.json"), pretty(&record))?;
    if !output.evaluation.empty_classes.is_empty() {
        eprintln!("warning: classes without classifier rows: {:?}", output.evaluation.empty_classes);
    }
    println!("{}", summary_line(metrics));
    Ok(())
}

fn ablate(args: &AblateArgs) -> Result<()> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    let base = load_config(args.run.config.as_deref())?;
    let dataset = load_dataset(&args.run.data)?;
    let ablations: Vec<Ablation> = if args.ablations.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        args.ablations.clone()
    };
    let records = run_ablations(&dataset, &base, &ablations, &args.seeds, |r| match &r.outcome {
        Ok((u, s, h)) => eprintln!("{:<8} seed {:<3} a_u={u:.4} a_s={s:.4} H={h:.4}", r.ablation.name(), r.seed),
        Err(e) => eprintln!("{:<8} seed {:<3} failed: {e}", r.ablation.name(), r.seed),
    });
    let rows = summarize(&records);
    create_dir(&args.run.out)?;
    write(&args.run.out.join("records.csv"), records_csv(&records))?;
    let table = summary_csv(&rows);
    write(&args.run.out.join("summary.csv"), &table)?;
    print!("{table}");
    if records.iter().all(|r| r.outcome.is_err()) {
        return Err(CliError::AllRunsFailed(records.len()));
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut config = load_config(args.config.as_deref())?;
    config.seed = args.seed.unwrap_or(ckpt.seed);
    let dataset = load_dataset(&args.data)?;
    let e = evaluate_trained(&ckpt.models, &dataset, &config)?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write(&out.join("metrics.csv"), metrics_csv(&e.metrics, dataset.seen_classes()))?;
    }
    println!("{}", summary_line(&e.metrics));
    Ok(())
}

fn gradcheck(seed: u64) -> Result<()> {
    let report = run_gradcheck(seed)?;
    println!("{report}");
    match report.failures().count() {
        0 => Ok(()),
        n => Err(CliError::GradcheckFailed(n)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { spec, out, seed } => synth_data(spec.as_deref(), &out, seed),
        Command::Train(args) => train(&args),
        Command::Ablate(args) => ablate(&args),
        Command::Evaluate(args) => evaluate(&args),
        Command::Gradcheck { seed } => gradcheck(seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
