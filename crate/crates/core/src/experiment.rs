//! Run configuration and the end-to-end pipeline: pretext training,
//! feature extraction, recognizer training, evaluation and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_classifier, match_gallery, LabeledVector, ReidMetrics};
use crate::features::{
    extract_encodings, fuse_all, train_recognizer, write_encodings, FeatureSource, GaitEncoding, RecognitionNet,
    RecognizerConfig, Strategy,
};
use crate::numerics::{AdamConfig, Checkpoint};
use crate::seq2seq::{
    matrix_to_csv, mean_alignment, train, window_mass, AttentionMode, GaitModel, LossCurve, LossWeights,
    ModelConfig, TrainConfig, TrainingSet,
};
use crate::skeleton_io::{
    generate_synthetic, load_dataset, Dataset, Dim, PretextTask, Role, SkeletonSequence, Split, SplitConfig,
    SynthConfig,
};

/// Every knob of an experiment. Keys are kebab-case in the TOML file and on
/// the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest.
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,

    pub seq_len: usize,
    /// Joints per skeleton; taken from the dataset when absent.
    pub joints: Option<usize>,
    pub head_tail_discard: usize,
    /// Window step; `seq-len / 2` when absent.
    pub step: Option<usize>,
    /// Center every frame at this joint before encoding.
    pub root_joint: Option<usize>,

    pub hidden: usize,
    pub window: usize,
    pub attention: AttentionMode,
    pub tasks: Vec<PretextTask>,
    pub projection_hidden: Option<usize>,

    pub lambda_s: f64,
    pub lambda_a: f64,
    pub lambda_c: f64,
    pub beta: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub interval: usize,

    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub clip_norm: f64,

    pub strategy: Strategy,
    pub feature_source: FeatureSource,
    pub recognizer_hidden: usize,
    pub recognizer_epochs: usize,
    pub recognizer_batch_size: usize,
    pub recognizer_lr: f64,

    pub identities: usize,
    pub recordings_per_identity: usize,
    pub frames_per_recording: usize,
    pub noise: f64,
    pub test_recordings: usize,
    pub random_recording_phase: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossWeights::default();
        let adam = AdamConfig::default();
        let contrast = ContrastConfig::default();
        let rn = RecognizerConfig::default();
        let synth = SynthConfig::default();
        Self {
            dataset: None,
            out: PathBuf::from("runs/default"),
            seed: 0,
            seq_len: 6,
            joints: None,
            head_tail_discard: 10,
            step: None,
            root_joint: None,
            hidden: 128,
            window: 2,
            attention: AttentionMode::Las,
            tasks: vec![PretextTask::ReverseReconstruction],
            projection_hidden: None,
            lambda_s: loss.lambda_s,
            lambda_a: loss.lambda_a,
            lambda_c: loss.lambda_c,
            beta: loss.beta,
            temperature: contrast.temperature,
            batch_size: contrast.batch_size,
            interval: contrast.interval,
            epochs: 50,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            clip_norm: adam.clip_norm.unwrap_or(0.0),
            strategy: Strategy::Ap,
            feature_source: FeatureSource::Context,
            recognizer_hidden: rn.hidden,
            recognizer_epochs: rn.epochs,
            recognizer_batch_size: rn.batch_size,
            recognizer_lr: rn.lr,
            identities: synth.identities,
            recordings_per_identity: synth.recordings_per_identity,
            frames_per_recording: synth.frames_per_recording,
            noise: synth.noise,
            test_recordings: synth.test_recordings,
            random_recording_phase: synth.random_recording_phase,
        }
    }
}

fn rule(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses a comma-separated task list; `plus` stands for all three tasks.
pub fn parse_tasks(s: &str) -> Result<Vec<PretextTask>> {
    let s = s.trim();
    if matches!(s, "plus" | "rev-rec-plus") {
        return Ok(vec![
            PretextTask::ReverseReconstruction,
            PretextTask::HalfPrediction,
            PretextTask::Sorting,
        ]);
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills derived values so the echo shows what actually ran.
    pub fn resolved(&self, joints: Option<usize>) -> Self {
        let mut c = self.clone();
        c.step = Some(self.split_config().step);
        if c.joints.is_none() {
            c.joints = joints;
        }
        c
    }

    /// Checks every rule that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.hidden == 0 {
            return Err(rule("seq-len and hidden must be positive"));
        }
        if self.window == 0 {
            return Err(rule("window must be >= 1"));
        }
        if self.step == Some(0) {
            return Err(rule("step must be >= 1"));
        }
        if self.joints.is_some_and(|j| j < 2) {
            return Err(rule("joints must be >= 2"));
        }
        if self.tasks.is_empty() {
            return Err(rule("at least one pretext task is required"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(t) {
                return Err(rule(format!("task {t} listed twice")));
            }
        }
        if self.tasks.contains(&PretextTask::HalfPrediction) && !self.seq_len.is_multiple_of(2) {
            return Err(rule(format!(
                "half-prediction requires an even seq-len, got {}",
                self.seq_len
            )));
        }
        let single = self.tasks.len() == 1;
        if single
            && self.tasks[0] != PretextTask::ReverseReconstruction
            && matches!(self.attention, AttentionMode::Las | AttentionMode::Mbas)
        {
            return Err(rule(format!(
                "attention = {} requires the reverse-reconstruction task; prediction and sorting allow none or bas",
                self.attention
            )));
        }
        if self.lambda_a > 0.0 && self.attention != AttentionMode::Las {
            return Err(rule(format!("lambda-a > 0 requires attention = las, got {}", self.attention)));
        }
        for (name, v) in [
            ("lambda-s", self.lambda_s),
            ("lambda-a", self.lambda_a),
            ("lambda-c", self.lambda_c),
            ("beta", self.beta),
            ("noise", self.noise),
            ("clip-norm", self.clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(rule(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if self.lambda_c > 0.0 {
            if !self.attention.has_attention() {
                return Err(rule("lambda-c > 0 requires an attention mode"));
            }
            if self.batch_size < 2 {
                return Err(rule("lambda-c > 0 requires batch-size >= 2"));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(rule(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.batch_size == 0 || self.interval == 0 {
            return Err(rule("batch-size and interval must be >= 1"));
        }
        if !(self.lr > 0.0) || !(self.recognizer_lr > 0.0) {
            return Err(rule("learning rates must be > 0"));
        }
        if self.feature_source == FeatureSource::Context && !self.attention.has_attention() {
            return Err(rule("feature-source = context requires an attention mode"));
        }
        if self.recognizer_hidden == 0 {
            return Err(rule("recognizer-hidden must be >= 1"));
        }
        Ok(())
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            length: self.seq_len,
            head_tail_discard: self.head_tail_discard,
            step: self.step.unwrap_or((self.seq_len / 2).max(1)),
        }
    }

    /// Attention used for `task`. Masked modes only fit reversed targets, so
    /// the other tasks of a multi-task run fall back to plain scores.
    pub fn attention_for(&self, task: PretextTask) -> AttentionMode {
        match self.attention {
            AttentionMode::Las | AttentionMode::Mbas if task != PretextTask::ReverseReconstruction => {
                AttentionMode::Bas
            }
            mode => mode,
        }
    }

    pub fn model_config(&self, task: PretextTask, joints: usize) -> ModelConfig {
        ModelConfig {
            joints,
            hidden: self.hidden,
            seq_len: self.seq_len,
            window: self.window,
            attention: self.attention_for(task),
            projection_hidden: self.projection_hidden,
        }
    }

    pub fn train_config(&self, task: PretextTask) -> TrainConfig {
        let lambda_a = if self.attention_for(task) == AttentionMode::Las {
            self.lambda_a
        } else {
            0.0
        };
        TrainConfig {
            epochs: self.epochs,
            seed: self.seed,
            weights: LossWeights {
                lambda_s: self.lambda_s,
                lambda_a,
                lambda_c: self.lambda_c,
                beta: self.beta,
            },
            optimizer: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            },
            contrast: ContrastConfig {
                batch_size: self.batch_size,
                interval: self.interval,
                temperature: self.temperature,
            },
        }
    }

    pub fn recognizer_config(&self) -> RecognizerConfig {
        RecognizerConfig {
            hidden: self.recognizer_hidden,
            epochs: self.recognizer_epochs,
            batch_size: self.recognizer_batch_size,
            lr: self.recognizer_lr,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            identities: self.identities,
            recordings_per_identity: self.recordings_per_identity,
            frames_per_recording: self.frames_per_recording,
            joints: self.joints.unwrap_or(SynthConfig::default().joints),
            noise: self.noise,
            test_recordings: self.test_recordings,
            sequence_length: self.seq_len,
            random_recording_phase: self.random_recording_phase,
            seed: self.seed,
        }
    }
}

/// Loads the configured dataset and applies root centering when requested.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| rule("no dataset given (set `dataset` or pass --dataset)"))?;
    let ds = load_dataset(path)?;
    prepare_loaded(cfg, ds)
}

/// Checks a dataset against the configuration and applies preprocessing.
pub fn prepare_loaded(cfg: &RunConfig, mut ds: Dataset) -> Result<Dataset> {
    if let Some(j) = cfg.joints {
        if j != ds.num_joints() {
            return Err(rule(format!("joints = {j} but the dataset has {}", ds.num_joints())));
        }
    }
    if let Some(root) = cfg.root_joint {
        if root >= ds.num_joints() {
            return Err(rule(format!("root-joint {root} out of range")));
        }
        ds.manifest.root_joint = Some(root);
    }
    Ok(ds.preprocessed())
}

/// A gait model trained on one pretext task.
#[derive(Clone, Debug)]
pub struct TrainedTask {
    pub task: PretextTask,
    pub model: GaitModel,
    pub curves: Vec<LossCurve>,
}

pub fn train_task(cfg: &RunConfig, ds: &Dataset, task: PretextTask) -> Result<TrainedTask> {
    let tc = cfg.train_config(task);
    let mut model = GaitModel::init(&cfg.model_config(task, ds.num_joints()), task, cfg.seed)?;
    let recs = ds.recordings_in(Split::Train);
    let data = TrainingSet::new(ds, &recs, &cfg.split_config(), task, &tc.contrast)?;
    log::info!(
        "training {task}: {} sequences in {} batches, {} epochs",
        data.sequences.len(),
        data.batches.len(),
        tc.epochs
    );
    let curves = train(&mut model, &data, &tc)?;
    Ok(TrainedTask { task, model, curves })
}

pub fn train_all(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<TrainedTask>> {
    cfg.validate()?;
    cfg.tasks.iter().map(|&t| train_task(cfg, ds, t)).collect()
}

/// Encodes `sequences` with every model and fuses the per-task features.
pub fn extract_fused(models: &[GaitModel], sequences: &[SkeletonSequence], source: FeatureSource) -> Result<Vec<GaitEncoding>> {
    let per_task = models
        .iter()
        .map(|m| extract_encodings(m, sequences, source))
        .collect::<Result<Vec<_>>>()?;
    fuse_all(&per_task)
}

pub fn split_sequences(cfg: &RunConfig, ds: &Dataset, split: Split) -> Result<Vec<SkeletonSequence>> {
    ds.sequences(&ds.recordings_in(split), &cfg.split_config())
}

/// Rank-1 matching of probe against gallery encodings using the roles in the
/// dataset manifest.
pub fn gallery_matching(ds: &Dataset, encodings: &[GaitEncoding]) -> Result<ReidMetrics> {
    let mut probes = Vec::new();
    let mut gallery = Vec::new();
    for e in encodings {
        let role = ds.split_of(&e.identity, e.rec).and_then(|s| s.role);
        match role {
            Some(Role::Probe) => probes.push(LabeledVector::from_encoding(e)?),
            Some(Role::Gallery) => gallery.push(LabeledVector::from_encoding(e)?),
            None => {}
        }
    }
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probe sequences in the dataset manifest".into()));
    }
    match_gallery(&probes, &gallery)
}

/// Everything a full run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub trained: Vec<TrainedTask>,
    pub train_encodings: Vec<GaitEncoding>,
    pub test_encodings: Vec<GaitEncoding>,
    pub recognizer: RecognitionNet,
    pub recognizer_losses: Vec<f64>,
    pub metrics: ReidMetrics,
    pub matching: ReidMetrics,
}

impl RunOutcome {
    pub fn models(&self) -> Vec<GaitModel> {
        self.trained.iter().map(|t| t.model.clone()).collect()
    }
}

/// Trains the gait models, extracts features, trains the recognizer on the
/// training split and evaluates it on the test split.
pub fn run(cfg: &RunConfig, ds: &Dataset) -> Result<RunOutcome> {
    cfg.validate()?;
    let config = cfg.resolved(Some(ds.num_joints()));
    let trained = train_all(cfg, ds)?;
    let models: Vec<GaitModel> = trained.iter().map(|t| t.model.clone()).collect();
    let train_encodings = extract_fused(&models, &split_sequences(cfg, ds, Split::Train)?, cfg.feature_source)?;
    let test_encodings = extract_fused(&models, &split_sequences(cfg, ds, Split::Test)?, cfg.feature_source)?;
    let (recognizer, recognizer_losses) = train_recognizer(
        &train_encodings,
        ds.num_identities(),
        cfg.strategy,
        &cfg.recognizer_config(),
    )?;
    let metrics = evaluate_classifier(&recognizer, &test_encodings)?;
    let all: Vec<GaitEncoding> = train_encodings.iter().chain(&test_encodings).cloned().collect();
    let matching = gallery_matching(ds, &all)?;
    log::info!(
        "rank-1 {:.1}%, nAUC {:.1}%, gallery rank-1 {:.1}%",
        100.0 * metrics.rank1,
        100.0 * metrics.nauc,
        100.0 * matching.rank1
    );
    Ok(RunOutcome {
        config,
        trained,
        train_encodings,
        test_encodings,
        recognizer,
        recognizer_losses,
        metrics,
        matching,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_config_echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write(&dir.join("config.toml"), &cfg.to_toml()?)
}

pub fn checkpoint_path(dir: &Path, task: PretextTask) -> PathBuf {
    dir.join(format!("checkpoint-{}.json", task.name()))
}

pub fn loss_curve_path(dir: &Path, task: PretextTask, dim: Dim) -> PathBuf {
    dir.join(format!("loss-{}-{}.csv", task.name(), dim.name()))
}

/// Writes the checkpoints and loss curves of trained models.
pub fn write_training_artifacts(trained: &[TrainedTask], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for t in trained {
        t.model.to_checkpoint()?.save(&checkpoint_path(dir, t.task))?;
        for c in &t.curves {
            write(&loss_curve_path(dir, t.task, c.dim), &c.to_csv())?;
        }
    }
    Ok(())
}

pub fn write_metrics(metrics: &ReidMetrics, dir: &Path, stem: &str) -> Result<()> {
    ensure_dir(dir)?;
    write(&dir.join(format!("{stem}.json")), &metrics.to_json()?)?;
    write(&dir.join(format!("{stem}.csv")), &metrics.to_csv())
}

/// Writes every artifact of a run under `dir`.
pub fn write_run(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    write_config_echo(&outcome.config, dir)?;
    write_training_artifacts(&outcome.trained, dir)?;
    write_encodings(&dir.join("encodings-train.jsonl"), &outcome.train_encodings)?;
    write_encodings(&dir.join("encodings-test.jsonl"), &outcome.test_encodings)?;
    outcome.recognizer.to_checkpoint()?.save(&dir.join("recognizer.json"))?;
    write_metrics(&outcome.metrics, dir, "metrics")?;
    write_metrics(&outcome.matching, dir, "matching")
}

/// Mean attention matrix and in-window mass for one dimension model.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSummary {
    pub dim: Dim,
    pub matrix: Vec<Vec<f64>>,
    pub window_mass: f64,
}

pub fn attention_summary(model: &GaitModel, sequences: &[SkeletonSequence]) -> Result<Vec<AttentionSummary>> {
    model
        .dims
        .iter()
        .map(|d| {
            let matrix = mean_alignment(d, sequences)?;
            Ok(AttentionSummary {
                dim: d.dim,
                window_mass: window_mass(&matrix, d.config.window),
                matrix,
            })
        })
        .collect()
}

pub fn write_attention(summaries: &[AttentionSummary], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut mass = String::from("dim,window_mass\n");
    for s in summaries {
        write(&dir.join(format!("attention-{}.csv", s.dim.name())), &matrix_to_csv(&s.matrix))?;
        mass.push_str(&format!("{},{:?}\n", s.dim.name(), s.window_mass));
    }
    write(&dir.join("attention-window-mass.csv"), &mass)
}

pub fn load_models(paths: &[PathBuf]) -> Result<Vec<GaitModel>> {
    paths
        .iter()
        .map(|p| GaitModel::from_checkpoint(&Checkpoint::load(p)?))
        .collect()
}

/// Swept hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Tau,
    Interval,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" | "temperature" => Ok(SweepAxis::Tau),
            "interval" => Ok(SweepAxis::Interval),
            other => Err(rule(format!("unknown sweep axis {other:?}"))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Interval => "interval",
        }
    }

    pub fn apply(self, cfg: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Tau => c.temperature = value,
            SweepAxis::Interval => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(rule(format!("interval must be a positive integer, got {value}")));
                }
                c.interval = value as usize;
            }
        }
        Ok(c)
    }
}

/// One sweep point; `error` is set when the run failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub rank1: Option<f64>,
    pub nauc: Option<f64>,
    pub error: Option<String>,
}

/// Runs one full experiment per value with the same seed. A failing value is
/// recorded and the sweep moves on. Each run's artifacts go to
/// `dir/<axis>-<value>` when `dir` is given.
pub fn sweep(cfg: &RunConfig, ds: &Dataset, axis: SweepAxis, values: &[f64], dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(rule("a sweep needs at least two values"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let result = axis.apply(cfg, v).and_then(|c| {
            let out = run(&c, ds)?;
            if let Some(d) = dir {
                write_run(&out, &d.join(format!("{}-{v}", axis.name())))?;
            }
            Ok(out)
        });
        rows.push(match result {
            Ok(out) => SweepRow {
                value: v,
                rank1: Some(out.metrics.rank1),
                nauc: Some(out.metrics.nauc),
                error: None,
            },
            Err(e) => {
                log::warn!("{} = {v} failed: {e}", axis.name());
                SweepRow {
                    value: v,
                    rank1: None,
                    nauc: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    Ok(rows)
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([axis.name(), "rank1", "nauc", "error"])?;
    for r in rows {
        let pct = |x: Option<f64>| x.map(|v| format!("{:?}", 100.0 * v)).unwrap_or_default();
        w.write_record([format!("{:?}", r.value), pct(r.rank1), pct(r.nauc), r.error.clone().unwrap_or_default()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Generates the synthetic dataset described by the configuration.
pub fn synthesize(cfg: &RunConfig) -> Result<Dataset> {
    if cfg.identities == 0 {
        return Err(rule("identities must be >= 1"));
    }
    generate_synthetic(&cfg.synth_config(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("sed = 1").is_err());
        let c = RunConfig::from_toml_str("seq-len = 4\nattention = \"bas\"\nlambda-a = 0.0").unwrap();
        assert_eq!(c.seq_len, 4);
        assert_eq!(c.hidden, 128);
    }

    #[test]
    fn rules_name_the_violation() {
        let bad = |f: &dyn Fn(&mut RunConfig), needle: &str| {
            let mut c = RunConfig::default();
            f(&mut c);
            let msg = c.validate().unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg}");
        };
        bad(&|c| c.attention = AttentionMode::Mbas, "lambda-a");
        bad(
            &|c| {
                c.attention = AttentionMode::Las;
                c.tasks = vec![PretextTask::Sorting];
            },
            "reverse-reconstruction",
        );
        bad(
            &|c| {
                c.seq_len = 5;
                c.tasks = vec![PretextTask::HalfPrediction];
                c.attention = AttentionMode::Bas;
                c.lambda_a = 0.0;
            },
            "even",
        );
        bad(&|c| c.temperature = 0.0, "temperature");
        bad(
            &|c| {
                c.attention = AttentionMode::None;
                c.lambda_a = 0.0;
            },
            "lambda-c",
        );
    }

    #[test]
    fn plus_downgrades_masked_attention() {
        let c = RunConfig {
            tasks: parse_tasks("plus").unwrap(),
            ..RunConfig::default()
        };
        c.validate().unwrap();
        assert_eq!(c.attention_for(PretextTask::Sorting), AttentionMode::Bas);
        assert_eq!(c.train_config(PretextTask::Sorting).weights.lambda_a, 0.0);
        assert_eq!(c.attention_for(PretextTask::ReverseReconstruction), AttentionMode::Las);
        assert_eq!(parse_tasks("sorting, rev-rec").unwrap().len(), 2);
    }

    #[test]
    fn sweep_needs_two_values() {
        let c = RunConfig::default();
        let ds = Dataset::from_recordings(Vec::new(), 2, 6, 1).unwrap();
        assert!(sweep(&c, &ds, SweepAxis::Tau, &[0.1], None).is_err());
        assert!(SweepAxis::Interval.apply(&c, 1.5).is_err());
    }
}
