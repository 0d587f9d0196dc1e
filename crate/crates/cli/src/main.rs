use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use gait_core::evaluation::evaluate_classifier;
use gait_core::experiment::{
    attention_summary, ensure_dir, extract_fused, gallery_matching, load_models, parse_tasks, prepare_dataset,
    prepare_loaded, run, sweep, sweep_csv, synthesize, train_all, write_attention, write_config_echo,
    write_metrics, write_run, write_training_artifacts, RunConfig, SweepAxis,
};
use gait_core::features::{read_encodings, train_recognizer, write_encodings, FeatureSource, Strategy};
use gait_core::seq2seq::{AttentionMode, GaitModel};
use gait_core::skeleton_io::{save_dataset, Dataset, PretextTask, SkeletonSequence, Split};
use gait_core::{Error, Result};

/// Comma-separated pretext tasks, or `plus` for all three.
#[derive(Clone, Debug)]
struct TaskList(Vec<PretextTask>);

impl FromStr for TaskList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_tasks(s).map(TaskList)
    }
}

// One optional global flag per config key; a flag that is present wins over
// the config file.
macro_rules! overrides {
    (
        set { $($f:ident: $t:ty),* $(,)? }
        some { $($g:ident: $u:ty),* $(,)? }
    ) => {
        #[derive(clap::Args, Clone, Debug, Default)]
        struct Overrides {
            $(#[arg(long, global = true)] $f: Option<$t>,)*
            $(#[arg(long, global = true)] $g: Option<$u>,)*
            #[arg(long, global = true)]
            tasks: Option<TaskList>,
        }

        impl Overrides {
            fn apply(&self, cfg: &mut RunConfig) {
                $(if let Some(v) = &self.$f { cfg.$f = v.clone(); })*
                $(if let Some(v) = &self.$g { cfg.$g = Some(v.clone()); })*
                if let Some(t) = &self.tasks {
                    cfg.tasks = t.0.clone();
                }
            }
        }
    };
}

overrides! {
    set {
        out: PathBuf,
        seed: u64,
        seq_len: usize,
        head_tail_discard: usize,
        hidden: usize,
        window: usize,
        attention: AttentionMode,
        lambda_s: f64,
        lambda_a: f64,
        lambda_c: f64,
        beta: f64,
        temperature: f64,
        batch_size: usize,
        interval: usize,
        epochs: usize,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        clip_norm: f64,
        strategy: Strategy,
        feature_source: FeatureSource,
        recognizer_hidden: usize,
        recognizer_epochs: usize,
        recognizer_batch_size: usize,
        recognizer_lr: f64,
        identities: usize,
        recordings_per_identity: usize,
        frames_per_recording: usize,
        noise: f64,
        test_recordings: usize,
        random_recording_phase: bool,
    }
    some {
        dataset: PathBuf,
        joints: usize,
        step: usize,
        root_joint: usize,
        projection_hidden: usize,
    }
}

/// Self-supervised gait encoding from 3D skeleton sequences and person
/// re-identification on top of it.
#[derive(Parser, Debug)]
#[command(name = "gait", version)]
struct Cli {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (manifest.json + recordings.jsonl).
    Synth,
    /// Train one gait model per pretext task; writes checkpoints and loss curves.
    Train,
    /// Encode a dataset with trained checkpoints.
    Extract {
        /// One checkpoint per task; several are fused.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        /// Defaults to `<out>/encodings.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the recognizer on one encoding file and score another.
    Evaluate {
        #[arg(long)]
        train_encodings: PathBuf,
        #[arg(long)]
        test_encodings: PathBuf,
    },
    /// Mean attention matrix per dimension, plus its in-window mass.
    AttnDump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// One full run per value of `tau` or `interval`.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Train, extract, fit the recognizer and evaluate in one go.
    Run,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// The configured dataset, or the synthetic one when none is given.
fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.dataset {
        Some(_) => prepare_dataset(cfg),
        None => {
            log::info!("no dataset configured; generating the synthetic one");
            prepare_loaded(cfg, synthesize(cfg)?)
        }
    }
}

fn sequences(cfg: &RunConfig, ds: &Dataset, split: SplitArg) -> Result<Vec<SkeletonSequence>> {
    let recs = match split {
        SplitArg::Train => ds.recordings_in(Split::Train),
        SplitArg::Test => ds.recordings_in(Split::Test),
        SplitArg::All => (0..ds.recordings.len()).collect(),
    };
    ds.sequences(&recs, &cfg.split_config())
}

/// Aligns the window length with the checkpoints so the dataset is cut the
/// way the models expect.
fn adopt_models(cfg: &mut RunConfig, models: &[GaitModel]) -> Result<()> {
    let first = models[0].config();
    if let Some(m) = models.iter().find(|m| m.config().seq_len != first.seq_len) {
        return Err(Error::Config(format!(
            "checkpoints disagree on seq-len: {} vs {}",
            first.seq_len,
            m.config().seq_len
        )));
    }
    if cfg.seq_len != first.seq_len {
        log::info!("using seq-len {} from the checkpoint", first.seq_len);
        cfg.seq_len = first.seq_len;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let out = cfg.out.clone();
    match &cli.command {
        Command::Synth => {
            let ds = synthesize(&cfg)?;
            let manifest = out.join("manifest.json");
            save_dataset(&ds, &manifest)?;
            write_config_echo(&cfg.resolved(Some(ds.num_joints())), &out)?;
            println!("{}", manifest.display());
        }
        Command::Train => {
            let ds = dataset(&cfg)?;
            let trained = train_all(&cfg, &ds)?;
            write_config_echo(&cfg.resolved(Some(ds.num_joints())), &out)?;
            write_training_artifacts(&trained, &out)?;
            for t in &trained {
                for c in &t.curves {
                    log::info!(
                        "{} {}: L_S {:.5} -> {:.5}",
                        t.task,
                        c.dim.name(),
                        c.initial().reconstruction,
                        c.last().reconstruction
                    );
                }
            }
        }
        Command::Extract {
            checkpoint,
            split,
            output,
        } => {
            let models = load_models(checkpoint)?;
            adopt_models(&mut cfg, &models)?;
            let ds = dataset(&cfg)?;
            let encs = extract_fused(&models, &sequences(&cfg, &ds, *split)?, cfg.feature_source)?;
            ensure_dir(&out)?;
            let path = output.clone().unwrap_or_else(|| out.join("encodings.jsonl"));
            write_encodings(&path, &encs)?;
            write_config_echo(&cfg.resolved(Some(ds.num_joints())), &out)?;
            log::info!("{} encodings written to {}", encs.len(), path.display());
        }
        Command::Evaluate {
            train_encodings,
            test_encodings,
        } => evaluate(&cfg, train_encodings, test_encodings)?,
        Command::AttnDump { checkpoint, split } => {
            let models = load_models(std::slice::from_ref(checkpoint))?;
            adopt_models(&mut cfg, &models)?;
            let ds = dataset(&cfg)?;
            let summaries = attention_summary(&models[0], &sequences(&cfg, &ds, *split)?)?;
            write_attention(&summaries, &out)?;
            write_config_echo(&cfg.resolved(Some(ds.num_joints())), &out)?;
            for s in &summaries {
                println!("{} window mass {:.4}", s.dim.name(), s.window_mass);
            }
        }
        Command::Sweep { axis, values } => {
            let ds = dataset(&cfg)?;
            write_config_echo(&cfg.resolved(Some(ds.num_joints())), &out)?;
            let rows = sweep(&cfg, &ds, *axis, values, Some(&out))?;
            let text = sweep_csv(*axis, &rows)?;
            let path = out.join(format!("sweep-{}.csv", axis.name()));
            std::fs::write(&path, &text).map_err(|e| Error::Io { path, source: e })?;
            print!("{text}");
            if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
                return Err(Error::InvalidArgument(format!(
                    "sweep value {} failed: {}",
                    r.value,
                    r.error.as_deref().unwrap_or_default()
                )));
            }
        }
        Command::Run => {
            let ds = dataset(&cfg)?;
            let outcome = run(&cfg, &ds)?;
            write_run(&outcome, &out)?;
            println!(
                "rank-1 {:.1}%  nAUC {:.1}%",
                100.0 * outcome.metrics.rank1,
                100.0 * outcome.metrics.nauc
            );
        }
    }
    Ok(())
}

fn evaluate(cfg: &RunConfig, train_path: &Path, test_path: &Path) -> Result<()> {
    let train = read_encodings(train_path)?;
    let test = read_encodings(test_path)?;
    let classes = train
        .iter()
        .chain(&test)
        .filter_map(|e| e.label)
        .max()
        .ok_or_else(|| Error::InvalidArgument("encodings carry no identity labels".into()))?;
    let (net, _) = train_recognizer(&train, classes, cfg.strategy, &cfg.recognizer_config())?;
    let metrics = evaluate_classifier(&net, &test)?;
    write_metrics(&metrics, &cfg.out, "metrics")?;
    if cfg.dataset.is_some() {
        let ds = prepare_dataset(cfg)?;
        let all: Vec<_> = train.into_iter().chain(test).collect();
        write_metrics(&gallery_matching(&ds, &all)?, &cfg.out, "matching")?;
    }
    write_config_echo(cfg, &cfg.out)?;
    println!("rank-1 {:.1}%  nAUC {:.1}%", 100.0 * metrics.rank1, 100.0 * metrics.nauc);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
