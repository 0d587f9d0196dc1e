//! Helpers shared by the gradient suite and the acceptance runner.
#![allow(dead_code)]

use gait_core::numerics::grad_check;
use gait_core::seq2seq::{
    alignment_targets, batch_loss, batch_loss_frozen, AttentionMode, DimSample, GaitModel, GaitModelDim, LossWeights,
    ModelConfig,
};
use gait_core::skeleton_io::{build_pretext, generate_synthetic, Dim, PretextTask, SplitConfig, SynthConfig};
use gait_core::numerics::Tape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Three consecutive windows of one synthetic recording, as pretext samples
/// for the X dimension.
pub fn tiny_batch(task: PretextTask, f: usize, joints: usize) -> Vec<DimSample> {
    let cfg = SynthConfig {
        identities: 1,
        recordings_per_identity: 1,
        frames_per_recording: 40,
        joints,
        sequence_length: f,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&cfg, None).unwrap();
    let split = SplitConfig {
        length: f,
        head_tail_discard: 2,
        step: f / 2,
    };
    let seqs = ds.sequences(&[0], &split).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    seqs.iter()
        .take(3)
        .map(|s| {
            let sample = build_pretext(task, s, &ds.recordings[0], &split, &mut rng)
                .unwrap()
                .ready()
                .unwrap();
            DimSample::from_pretext(&sample, Dim::X)
        })
        .collect()
}

fn model_dim(attention: AttentionMode, task: PretextTask) -> GaitModelDim {
    let cfg = ModelConfig {
        joints: 5,
        hidden: 8,
        seq_len: 4,
        window: 1,
        attention,
        projection_hidden: None,
    };
    GaitModel::init(&cfg, task, 21).unwrap().dims[0].clone()
}

/// Finite-difference check of the complete training objective on a K=8,
/// f=4, J=5 model and a batch of three windows. Returns the worst relative
/// error, or a description of the failure.
pub fn check_full_loss(attention: AttentionMode, task: PretextTask) -> Result<f64, String> {
    let dim = model_dim(attention, task);
    let batch = tiny_batch(task, 4, 5);
    let weights = LossWeights {
        lambda_s: 1.0,
        lambda_a: if attention == AttentionMode::Las { 0.5 } else { 0.0 },
        lambda_c: if attention.has_attention() { 0.5 } else { 0.0 },
        beta: 1e-3,
    };
    // The alignment target is a constant of the objective, so the finite
    // differences hold it at its value for the unperturbed parameters.
    let targets = (attention == AttentionMode::Las).then(|| alignment_targets(&dim, &batch).unwrap());
    let mut tape = Tape::new();
    let plain = batch_loss(&mut tape, &dim, &batch, &weights, 0.5).unwrap().total;
    let plain = tape.scalar(plain);
    let mut tape = Tape::new();
    let frozen = batch_loss_frozen(&mut tape, &dim, &batch, &weights, 0.5, targets.as_deref()).unwrap().total;
    if tape.scalar(frozen) != plain {
        return Err(format!("{attention}/{task}: frozen targets change the loss value"));
    }

    let mut store = dim.store.clone();
    let r = grad_check(&mut store, EPS, TOL, |tape, st| {
        let mut m = dim.clone();
        m.store = st.clone();
        Ok(batch_loss_frozen(tape, &m, &batch, &weights, 0.5, targets.as_deref())?.total)
    })
    .map_err(|e| e.to_string())?;
    if r.passed() {
        Ok(r.max_relative_error())
    } else {
        Err(format!("{attention}/{task}: worst {:?}", r.worst()))
    }
}

/// Full-loss combinations: every mode for reverse reconstruction, the
/// unmasked modes for the other tasks.
pub fn full_loss_cases() -> Vec<(AttentionMode, PretextTask)> {
    let mut v: Vec<_> = AttentionMode::ALL
        .iter()
        .map(|&m| (m, PretextTask::ReverseReconstruction))
        .collect();
    for task in [PretextTask::Prediction, PretextTask::HalfPrediction, PretextTask::Sorting] {
        for mode in [AttentionMode::None, AttentionMode::Bas] {
            v.push((mode, task));
        }
    }
    v
}

/// Position (1-based) of `truth` when identities are ordered by `key`
/// ascending with ties broken by label, counted pairwise.
pub fn brute_rank(keys: &[(usize, f64)], truth: usize) -> usize {
    let t = keys.iter().find(|(l, _)| *l == truth).unwrap().1;
    1 + keys
        .iter()
        .filter(|(l, k)| *k < t || (*k == t && *l < truth))
        .count()
}

pub fn brute_cmc(ranks: &[usize], g: usize) -> Vec<f64> {
    (1..=g)
        .map(|k| ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
        .collect()
}
