use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{lcl_loss_node, lcl_representations, make_all_batches, project, ContrastBatch, ContrastConfig};
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, NodeId, Tape};
use crate::skeleton_io::{
    build_pretext, Dataset, Dim, PretextOutcome, PretextTask, SkeletonSequence, SplitConfig,
};

use super::decode::{decode, encode, DimSample, Phase};
use super::loss::{alignment_loss_node_with, reconstruction_loss_node, total_loss_node, LossWeights};
use super::model::{AttentionMode, GaitModel, GaitModelDim};

/// Optimization settings for the gait models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub optimizer: AdamConfig,
    pub contrast: ContrastConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            seed: 0,
            weights: LossWeights::default(),
            optimizer: AdamConfig::default(),
            contrast: ContrastConfig::default(),
        }
    }
}

/// Loss nodes of one training step.
#[derive(Clone, Copy, Debug)]
pub struct StepLoss {
    /// Batch mean of the reconstruction loss.
    pub reconstruction: NodeId,
    /// Batch mean of the alignment loss, LAS only.
    pub alignment: Option<NodeId>,
    pub contrastive: Option<NodeId>,
    pub total: NodeId,
}

/// Builds the combined loss for a batch of temporally ordered samples.
///
/// The contrastive term is added when `λ_C > 0` and the batch holds at least
/// two sequences.
pub fn batch_loss(
    tape: &mut Tape,
    model: &GaitModelDim,
    batch: &[DimSample],
    weights: &LossWeights,
    temperature: f64,
) -> Result<StepLoss> {
    batch_loss_frozen(tape, model, batch, weights, temperature, None)
}

/// Alignment targets `ã = l ⊙ a` of every sample at the current parameters.
pub fn alignment_targets(model: &GaitModelDim, batch: &[DimSample]) -> Result<Vec<Vec<Vec<f64>>>> {
    batch
        .iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (encoded, last) = encode(&mut tape, model, &s.input)?;
            let graph = decode(&mut tape, model, &encoded, last, Some(&s.target), s.aux_rule, Phase::Train)?;
            Ok(graph
                .alignment
                .iter()
                .zip(&graph.masks)
                .map(|(&a, l)| tape.value(a).data().iter().zip(l).map(|(x, m)| x * m).collect())
                .collect())
        })
        .collect()
}

/// [`batch_loss`] with the alignment targets held at given values, which
/// makes the objective whose gradient the tape computes an explicit function
/// of the parameters.
pub fn batch_loss_frozen(
    tape: &mut Tape,
    model: &GaitModelDim,
    batch: &[DimSample],
    weights: &LossWeights,
    temperature: f64,
    targets: Option<&[Vec<Vec<f64>>]>,
) -> Result<StepLoss> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mode = model.config.attention;
    let mut ls = Vec::with_capacity(batch.len());
    let mut la = Vec::new();
    let mut encodings = Vec::new();
    if targets.is_some_and(|t| t.len() != batch.len()) {
        return Err(Error::shape("batch_loss", "one target set per sample required"));
    }
    for (i, sample) in batch.iter().enumerate() {
        let (encoded, last) = encode(tape, model, &sample.input)?;
        let graph = decode(tape, model, &encoded, last, Some(&sample.target), sample.aux_rule, Phase::Train)?;
        ls.push(reconstruction_loss_node(tape, &graph, &sample.target)?);
        if mode == AttentionMode::Las {
            la.push(alignment_loss_node_with(tape, &graph, targets.map(|t| t[i].as_slice()))?);
        }
        if weights.lambda_c > 0.0 && batch.len() >= 2 {
            encodings.push(graph.sequence_encoding(tape)?);
        }
    }
    let ls = tape.add_all(&ls)?;
    let ls = tape.scale(ls, inv_n)?;
    let la = if la.is_empty() {
        None
    } else {
        let s = tape.add_all(&la)?;
        Some(tape.scale(s, inv_n)?)
    };
    let lc = if encodings.is_empty() {
        None
    } else {
        let head = model
            .head
            .as_ref()
            .ok_or_else(|| Error::Config("contrastive loss needs a projection head".into()))?;
        let z = encodings
            .iter()
            .map(|&v| project(tape, &model.store, head, v))
            .collect::<Result<Vec<_>>>()?;
        Some(lcl_loss_node(tape, &lcl_representations(&z), temperature)?)
    };
    let total = total_loss_node(tape, ls, la, lc, weights, &model.store)?;
    Ok(StepLoss {
        reconstruction: ls,
        alignment: la,
        contrastive: lc,
        total,
    })
}

/// Epoch means of the loss terms; absent terms are reported as zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub alignment: f64,
    pub contrastive: f64,
    pub total: f64,
}

/// Per-epoch losses of one dimension model. Epoch 0 is measured at
/// initialization without updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub dim: Dim,
    pub records: Vec<LossRecord>,
}

impl LossCurve {
    pub fn initial(&self) -> &LossRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &LossRecord {
        self.records.last().expect("loss curve has the initial record")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L_S,L_A,L_C,total\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.reconstruction, r.alignment, r.contrastive, r.total
            );
        }
        out
    }
}

/// Training sequences with the batches drawn from them.
#[derive(Clone, Debug)]
pub struct TrainingSet<'a> {
    pub dataset: &'a Dataset,
    pub split: SplitConfig,
    pub sequences: Vec<SkeletonSequence>,
    pub batches: Vec<ContrastBatch>,
}

impl<'a> TrainingSet<'a> {
    /// Cuts the given recordings into windows usable for `task` and groups
    /// them into contrast batches.
    pub fn new(
        dataset: &'a Dataset,
        recordings: &[usize],
        split: &SplitConfig,
        task: PretextTask,
        contrast: &ContrastConfig,
    ) -> Result<Self> {
        let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
        let mut sequences = Vec::new();
        for seq in dataset.sequences(recordings, split)? {
            match build_pretext(task, &seq, &dataset.recordings[seq.recording], split, &mut probe_rng)? {
                PretextOutcome::Ready(_) => sequences.push(seq),
                PretextOutcome::Skipped(reason) => log::debug!("{reason}"),
            }
        }
        let batches = make_all_batches(&sequences, contrast.batch_size, contrast.interval)?;
        if batches.is_empty() {
            return Err(Error::Config(format!(
                "no training batches: {} usable sequences, batch size {}, interval {}",
                sequences.len(),
                contrast.batch_size,
                contrast.interval
            )));
        }
        Ok(Self {
            dataset,
            split: split.clone(),
            sequences,
            batches,
        })
    }

    fn samples<R: rand::Rng>(
        &self,
        batch: &ContrastBatch,
        task: PretextTask,
        dim: Dim,
        rng: &mut R,
    ) -> Result<Vec<DimSample>> {
        batch
            .members
            .iter()
            .map(|&i| {
                let seq = &self.sequences[i];
                let rec = &self.dataset.recordings[seq.recording];
                match build_pretext(task, seq, rec, &self.split, rng)? {
                    PretextOutcome::Ready(s) => Ok(DimSample::from_pretext(&s, dim)),
                    PretextOutcome::Skipped(reason) => Err(Error::InvalidArgument(reason)),
                }
            })
            .collect()
    }
}

fn diverged(e: Error, dim: Dim, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged {
            dim: dim.name(),
            epoch,
            step,
        },
        other => other,
    }
}

/// Trains one dimension model and returns its loss curve.
pub fn train_dim(
    model: &mut GaitModelDim,
    task: PretextTask,
    data: &TrainingSet<'_>,
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    let dim = model.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(16 + dim.index() as u64);
    let mut adam = Adam::new(cfg.optimizer.clone(), &model.store)?;
    let tau = cfg.contrast.temperature;
    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let mut order: Vec<usize> = (0..data.batches.len()).collect();

    for epoch in 0..=cfg.epochs {
        if epoch > 0 {
            order.shuffle(&mut rng);
        }
        let mut sums = [0.0f64; 4];
        for (step, &b) in order.iter().enumerate() {
            let samples = data.samples(&data.batches[b], task, dim, &mut rng)?;
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, model, &samples, &cfg.weights, tau)
                .map_err(|e| diverged(e, dim, epoch, step))?;
            let total = tape.scalar(loss.total);
            if !total.is_finite() {
                return Err(Error::Diverged {
                    dim: dim.name(),
                    epoch,
                    step,
                });
            }
            sums[0] += tape.scalar(loss.reconstruction);
            sums[1] += loss.alignment.map_or(0.0, |n| tape.scalar(n));
            sums[2] += loss.contrastive.map_or(0.0, |n| tape.scalar(n));
            sums[3] += total;
            if epoch > 0 {
                model.store.zero_grad();
                let grads = tape.backward(loss.total).map_err(|e| diverged(e, dim, epoch, step))?;
                grads.accumulate_into(&mut model.store);
                adam.step(&mut model.store).map_err(|e| diverged(e, dim, epoch, step))?;
            }
        }
        let n = order.len() as f64;
        records.push(LossRecord {
            epoch,
            reconstruction: sums[0] / n,
            alignment: sums[1] / n,
            contrastive: sums[2] / n,
            total: sums[3] / n,
        });
        log::debug!(
            "{dim} epoch {epoch}: L_S {:.5} L_A {:.5} L_C {:.5}",
            sums[0] / n,
            sums[1] / n,
            sums[2] / n
        );
    }
    Ok(LossCurve { dim, records })
}

/// Trains the X, Y and Z models on three threads.
pub fn train(model: &mut GaitModel, data: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<Vec<LossCurve>> {
    cfg.weights.validate(model.config().attention)?;
    let task = model.task();
    let curves: Vec<Result<LossCurve>> = std::thread::scope(|s| {
        let handles: Vec<_> = model
            .dims
            .iter_mut()
            .map(|dim_model| s.spawn(move || train_dim(dim_model, task, data, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    if cfg.epochs > 0 {
        model.meta.contrastive = cfg.weights.lambda_c > 0.0;
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::ModelConfig;
    use crate::skeleton_io::{generate_synthetic, SynthConfig};

    fn setup() -> (Dataset, ModelConfig, SplitConfig) {
        let ds = generate_synthetic(
            &SynthConfig {
                identities: 2,
                recordings_per_identity: 2,
                frames_per_recording: 36,
                joints: 4,
                sequence_length: 4,
                ..SynthConfig::default()
            },
            None,
        )
        .unwrap();
        let cfg = ModelConfig {
            joints: 4,
            hidden: 4,
            seq_len: 4,
            window: 2,
            attention: AttentionMode::Las,
            projection_hidden: None,
        };
        let split = SplitConfig::new(4);
        (ds, cfg, split)
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            seed: 3,
            contrast: ContrastConfig {
                batch_size: 3,
                ..ContrastConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leave_model_untouched() {
        let (ds, cfg, split) = setup();
        let tc = quick(0);
        let recs: Vec<usize> = (0..ds.recordings.len()).collect();
        let data = TrainingSet::new(&ds, &recs, &split, PretextTask::ReverseReconstruction, &tc.contrast).unwrap();
        let mut m = GaitModel::init(&cfg, PretextTask::ReverseReconstruction, 1).unwrap();
        let before = m.checksum();
        let curves = train(&mut m, &data, &tc).unwrap();
        assert_eq!(m.checksum(), before);
        assert_eq!(curves.len(), 3);
        assert_eq!(curves[0].records.len(), 1);
    }

    #[test]
    fn training_is_reproducible_and_reduces_loss() {
        let (ds, cfg, split) = setup();
        let tc = quick(4);
        let recs: Vec<usize> = (0..ds.recordings.len()).collect();
        let data = TrainingSet::new(&ds, &recs, &split, PretextTask::ReverseReconstruction, &tc.contrast).unwrap();
        let mut a = GaitModel::init(&cfg, PretextTask::ReverseReconstruction, 1).unwrap();
        let mut b = a.clone();
        let ca = train(&mut a, &data, &tc).unwrap();
        let cb = train(&mut b, &data, &tc).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.checksum(), b.checksum());
        assert!(a.meta.contrastive);
        for c in &ca {
            assert_eq!(c.records.len(), 5);
            assert!(c.last().reconstruction < c.initial().reconstruction);
            assert!(c.records.iter().all(|r| r.contrastive > 0.0 && r.alignment > 0.0));
        }
        assert!(ca[0].to_csv().starts_with("epoch,L_S,L_A,L_C,total\n0,"));
    }

    #[test]
    fn invalid_weights_rejected() {
        let (ds, mut cfg, split) = setup();
        cfg.attention = AttentionMode::Mbas;
        let tc = quick(1);
        let recs: Vec<usize> = (0..ds.recordings.len()).collect();
        let data = TrainingSet::new(&ds, &recs, &split, PretextTask::ReverseReconstruction, &tc.contrast).unwrap();
        let mut m = GaitModel::init(&cfg, PretextTask::ReverseReconstruction, 1).unwrap();
        assert!(matches!(train(&mut m, &data, &tc), Err(Error::Config(_))));
    }

    #[test]
    fn overflow_reports_divergence() {
        let (ds, mut cfg, split) = setup();
        cfg.attention = AttentionMode::None;
        let mut tc = quick(2);
        tc.weights = LossWeights {
            lambda_a: 0.0,
            lambda_c: 0.0,
            ..LossWeights::default()
        };
        let recs: Vec<usize> = (0..ds.recordings.len()).collect();
        let data = TrainingSet::new(&ds, &recs, &split, PretextTask::ReverseReconstruction, &tc.contrast).unwrap();
        let mut m = GaitModel::init(&cfg, PretextTask::ReverseReconstruction, 1).unwrap();
        let w = m.dims[1].w_out;
        m.dims[1].store.get_mut(w).value.fill(1e200);
        match train(&mut m, &data, &tc) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
