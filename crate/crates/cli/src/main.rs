//! `mmsense`: synthetic multisensory data, two-stage training, evaluation and
//! the three-arm ablation.
//!
//! Flags override the `--config` TOML file, which overrides the desk defaults.
//! The output directory comes from `--out`, then `MMSENSE_OUT`, then
//! `./mmsense-out`; no other setting reads the environment.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmsense_core::run::{self, OutDir};
use mmsense_core::{Corpus, RunConfig, Seeds, TrainError};
use mmsense_data::{generate_synthetic, split, DataError, DatasetSpec, HeldOut, ModalityKind, NoiseProfile, Setting};
use mmsense_eval::Task;
use mmsense_model::Arm;
use sha2::{Digest, Sha256};

const OUT_ENV: &str = "MMSENSE_OUT";
const DEFAULT_OUT: &str = "mmsense-out";

#[derive(Debug, Parser)]
#[command(
    name = "mmsense",
    version,
    about = "Multisensory recognition and captioning pipeline"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset tree.
    Synth(SynthArgs),
    /// Run stage 1, stage 2 or both.
    Train(TrainArgs),
    /// Evaluate stage-2 checkpoints.
    Eval(EvalArgs),
    /// Train and evaluate every arm on one split.
    Ablate(Common),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Run config (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset: desk, mmfi-like or xrf55-like.
    #[arg(long)]
    preset: Option<String>,
    /// Model preset: desk, full-mmfi or full-xrf55.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_parser = parse_setting)]
    setting: Option<Setting>,
    /// Restrict to these modalities (repeatable).
    #[arg(long = "modality", value_parser = parse_modality)]
    modalities: Vec<ModalityKind>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stage1_epochs: Option<usize>,
    #[arg(long)]
    stage2_epochs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Dataset spec (JSON, as written to `dataset.json`); replaces `--preset`.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_parser = parse_setting, default_value = "cross-env")]
    setting: Setting,
    /// Generator noise multiplier.
    #[arg(long, default_value_t = 1.0)]
    noise: f32,
    /// Write manifest and text files only.
    #[arg(long)]
    no_payloads: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
    /// Stage-2 arms (repeatable); defaults to the config's arms.
    #[arg(long = "arm", value_parser = parse_arm)]
    arms: Vec<Arm>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Arms to evaluate (repeatable); defaults to the config's arms.
    #[arg(long = "arm", value_parser = parse_arm)]
    arms: Vec<Arm>,
    /// Report sections to keep, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_task)]
    tasks: Vec<Task>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        TrainError::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: DataError| e.to_string())
}

fn parse_modality(s: &str) -> Result<ModalityKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_arm(s: &str) -> Result<Arm, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn out_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, OutDir), Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::from_toml_unchecked(&text)?
            }
            None => RunConfig::desk(),
        };
        if let Some(p) = &self.preset {
            cfg.data.preset = p.clone();
        }
        if let Some(m) = &self.model {
            cfg.model.preset = m.clone();
            cfg.model.custom = None;
        }
        if let Some(s) = self.setting {
            cfg.data.setting = s;
        }
        if !self.modalities.is_empty() {
            cfg.data.modalities = self.modalities.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed.root = s;
        }
        if let Some(e) = self.stage1_epochs {
            cfg.schedule.stage1.epochs = e;
        }
        if let Some(e) = self.stage2_epochs {
            cfg.schedule.stage2.epochs = e;
        }
        cfg.validate()?;
        Ok((cfg, OutDir::new(out_dir(self.out.as_deref()))))
    }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            let spec: DatasetSpec =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            spec.validate()?;
            spec
        }
        None => DatasetSpec::preset(&args.preset)?,
    };
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(Failure::Usage(format!(
            "noise {} must be finite and non-negative",
            args.noise
        )));
    }
    let out = out_dir(args.out.as_deref());
    // Same derivation as training, so `train --seed N` sees this tree.
    let seeds = Seeds::new(args.seed);
    let mut data = generate_synthetic(&spec, NoiseProfile { scale: args.noise }, seeds.data)?;
    let assignment = split(&data.manifest, args.setting, &HeldOut::from_spec(&spec), seeds.split)?;
    data.write_tree(&out, !args.no_payloads)?;
    std::fs::write(
        out.join("split.json"),
        serde_json::to_string_pretty(&assignment).map_err(rt)? + "\n",
    )?;
    let mut sums = String::new();
    for name in [
        "dataset.json",
        "manifest.jsonl",
        "qa.jsonl",
        "captions.jsonl",
        "vocab.txt",
        "split.json",
    ] {
        sums.push_str(&format!("{}  {name}\n", sha256_file(&out.join(name))?));
    }
    std::fs::write(out.join("SHA256SUMS"), &sums)?;
    println!(
        "{} sequences, {} train / {} test ({})",
        data.manifest.len(),
        assignment.train.len(),
        assignment.test.len(),
        args.setting.name()
    );
    print!("{sums}");
    Ok(())
}

fn rt(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn arms_or_default(flag: &[Arm], cfg: &RunConfig) -> Vec<Arm> {
    if flag.is_empty() {
        cfg.train.arms.clone()
    } else {
        flag.to_vec()
    }
}

fn train(args: &TrainArgs) -> Result<(), Failure> {
    let (cfg, out) = args.common.resolve()?;
    let arms = arms_or_default(&args.arms, &cfg);
    let corpus = Corpus::build(&cfg)?;
    run::write_snapshot(&cfg, &out)?;
    if args.stage != Stage::Two {
        run::train_stage1(&cfg, &corpus, &out)?;
        for kind in cfg.modalities()? {
            println!("stage 1 {kind}: {}", out.stage1_ckpt(kind).display());
        }
    }
    if args.stage != Stage::One {
        for arm in arms {
            run::train_stage2(&cfg, &corpus, arm, &out)?;
            for kind in cfg.modalities()? {
                println!("stage 2 {arm} {kind}: {}", out.stage2_ckpt(arm, kind).display());
            }
        }
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let (cfg, out) = args.common.resolve()?;
    let arms = arms_or_default(&args.arms, &cfg);
    let tasks = (!args.tasks.is_empty()).then_some(args.tasks.as_slice());
    let corpus = Corpus::build(&cfg)?;
    run::write_snapshot(&cfg, &out)?;
    for arm in arms {
        let report = run::eval_arm(&cfg, &corpus, arm, &out, tasks)?;
        println!("# {}", arm.label());
        print!("{}", report.to_csv().map_err(rt)?);
    }
    Ok(())
}

fn ablate(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = common.resolve()?;
    run::write_snapshot(&cfg, &out)?;
    let result = run::ablate(&cfg, &out)?;
    print!("{}", result.table.to_csv().map_err(rt)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
