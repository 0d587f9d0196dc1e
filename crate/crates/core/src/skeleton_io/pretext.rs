use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::SplitConfig;
use super::types::{Recording, SkeletonFrame, SkeletonSequence};
use crate::error::{Error, Result};

/// Self-supervised objective that defines input and target sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PretextTask {
    ReverseReconstruction,
    Prediction,
    HalfPrediction,
    Sorting,
}

impl PretextTask {
    pub fn name(self) -> &'static str {
        match self {
            PretextTask::ReverseReconstruction => "reverse-reconstruction",
            PretextTask::Prediction => "prediction",
            PretextTask::HalfPrediction => "half-prediction",
            PretextTask::Sorting => "sorting",
        }
    }

    /// Auxiliary decoder input used while training on this task.
    pub fn aux_rule(self) -> AuxRule {
        match self {
            PretextTask::ReverseReconstruction => AuxRule::GroundTruthTarget,
            _ => AuxRule::ModelOutput,
        }
    }

    /// Canonical order used when features of several tasks are fused.
    pub fn canonical_rank(self) -> usize {
        match self {
            PretextTask::ReverseReconstruction => 0,
            PretextTask::Prediction | PretextTask::HalfPrediction => 1,
            PretextTask::Sorting => 2,
        }
    }
}

impl std::fmt::Display for PretextTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PretextTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse-reconstruction" | "rev-rec" => Ok(PretextTask::ReverseReconstruction),
            "prediction" => Ok(PretextTask::Prediction),
            "half-prediction" => Ok(PretextTask::HalfPrediction),
            "sorting" => Ok(PretextTask::Sorting),
            other => Err(Error::Config(format!("unknown pretext task {other:?}"))),
        }
    }
}

/// Which skeleton the decoder receives from the previous step during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxRule {
    GroundTruthTarget,
    ModelOutput,
}

/// Input/target pair for one training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PretextSample {
    pub input: Vec<SkeletonFrame>,
    pub target: Vec<SkeletonFrame>,
    pub task: PretextTask,
    pub aux_rule: AuxRule,
    /// For sorting: `input[t] == target[shuffle[t]]`.
    pub shuffle_indices: Option<Vec<usize>>,
}

/// Result of building a pretext sample.
#[derive(Clone, Debug, PartialEq)]
pub enum PretextOutcome {
    Ready(PretextSample),
    /// The window cannot serve this task, e.g. no future frames to predict.
    Skipped(String),
}

impl PretextOutcome {
    pub fn ready(self) -> Option<PretextSample> {
        match self {
            PretextOutcome::Ready(s) => Some(s),
            PretextOutcome::Skipped(_) => None,
        }
    }
}

/// Builds the task-specific input and target for `seq`.
///
/// `recording` must be the source of `seq`; prediction targets are read from
/// the frames that follow the window inside the retained part of it.
pub fn build_pretext<R: Rng + ?Sized>(
    task: PretextTask,
    seq: &SkeletonSequence,
    recording: &Recording,
    split: &SplitConfig,
    rng: &mut R,
) -> Result<PretextOutcome> {
    let f = seq.len();
    if f == 0 {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let aux_rule = task.aux_rule();
    let sample = match task {
        PretextTask::ReverseReconstruction => PretextSample {
            input: seq.frames.clone(),
            target: seq.frames.iter().rev().cloned().collect(),
            task,
            aux_rule,
            shuffle_indices: None,
        },
        PretextTask::Prediction | PretextTask::HalfPrediction => {
            let offset = if task == PretextTask::HalfPrediction {
                if !f.is_multiple_of(2) {
                    return Err(Error::Config(format!(
                        "half-prediction needs an even sequence length, got {f}"
                    )));
                }
                f / 2
            } else {
                f
            };
            let begin = seq.start + offset;
            let end = begin + f;
            let kept = split.retained(recording.frames.len());
            if end > kept.end {
                return Ok(PretextOutcome::Skipped(format!(
                    "{} window {}: needs frames up to {end}, recording retains {}",
                    recording.name(),
                    seq.seq_index,
                    kept.end
                )));
            }
            PretextSample {
                input: seq.frames.clone(),
                target: recording.frames[begin..end].to_vec(),
                task,
                aux_rule,
                shuffle_indices: None,
            }
        }
        PretextTask::Sorting => {
            let mut order: Vec<usize> = (0..f).collect();
            order.shuffle(rng);
            PretextSample {
                input: order.iter().map(|&r| seq.frames[r].clone()).collect(),
                target: seq.frames.clone(),
                task,
                aux_rule,
                shuffle_indices: Some(order),
            }
        }
    };
    Ok(PretextOutcome::Ready(sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton_io::split_recording;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(v: f64) -> SkeletonFrame {
        SkeletonFrame::new(vec![[v, 0.0, 0.0], [0.0, v, 0.0]]).unwrap()
    }

    fn recording(len: usize) -> Recording {
        Recording {
            identity: "a".into(),
            rec: 1,
            frames: (0..len).map(|t| frame(t as f64)).collect(),
        }
    }

    fn split_cfg() -> SplitConfig {
        SplitConfig {
            length: 6,
            head_tail_discard: 0,
            step: 3,
        }
    }

    #[test]
    fn reverse_target() {
        let rec = recording(3);
        let cfg = SplitConfig {
            length: 3,
            head_tail_discard: 0,
            step: 1,
        };
        let seq = &split_recording(&rec, &cfg).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = build_pretext(PretextTask::ReverseReconstruction, seq, &rec, &cfg, &mut rng)
            .unwrap()
            .ready()
            .unwrap();
        assert_eq!(s.target, vec![frame(2.0), frame(1.0), frame(0.0)]);
        assert_eq!(s.aux_rule, AuxRule::GroundTruthTarget);
    }

    #[test]
    fn half_prediction_targets_frames_four_to_nine() {
        let rec = recording(12);
        let seq = &split_recording(&rec, &split_cfg()).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = build_pretext(PretextTask::HalfPrediction, seq, &rec, &split_cfg(), &mut rng)
            .unwrap()
            .ready()
            .unwrap();
        // 1-based frames 4..=9 are indices 3..9.
        let want: Vec<_> = (3..9).map(|t| frame(t as f64)).collect();
        assert_eq!(s.target, want);
        assert_eq!(s.aux_rule, AuxRule::ModelOutput);
    }

    #[test]
    fn prediction_at_tail_is_skipped() {
        let rec = recording(12);
        let seqs = split_recording(&rec, &split_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let first = build_pretext(PretextTask::Prediction, &seqs[0], &rec, &split_cfg(), &mut rng).unwrap();
        assert!(matches!(first, PretextOutcome::Ready(_)));
        let last = build_pretext(PretextTask::Prediction, &seqs[1], &rec, &split_cfg(), &mut rng).unwrap();
        assert!(matches!(last, PretextOutcome::Skipped(_)));
    }

    #[test]
    fn half_prediction_rejects_odd_length() {
        let rec = recording(20);
        let cfg = SplitConfig {
            length: 5,
            head_tail_discard: 0,
            step: 2,
        };
        let seq = &split_recording(&rec, &cfg).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_pretext(PretextTask::HalfPrediction, seq, &rec, &cfg, &mut rng).is_err());
    }

    #[test]
    fn sorting_permutation_reproduces_input() {
        let rec = recording(6);
        let seq = &split_recording(&rec, &split_cfg()).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = build_pretext(PretextTask::Sorting, seq, &rec, &split_cfg(), &mut rng)
            .unwrap()
            .ready()
            .unwrap();
        let perm = s.shuffle_indices.clone().unwrap();
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        let rebuilt: Vec<_> = perm.iter().map(|&r| s.target[r].clone()).collect();
        assert_eq!(rebuilt, s.input);
    }

    #[test]
    fn identity_permutation_leaves_input_equal_to_target() {
        let rec = recording(6);
        let seq = &split_recording(&rec, &split_cfg()).unwrap()[0];
        let sample = PretextSample {
            input: (0..6).map(|r| seq.frames[r].clone()).collect(),
            target: seq.frames.clone(),
            task: PretextTask::Sorting,
            aux_rule: AuxRule::ModelOutput,
            shuffle_indices: Some((0..6).collect()),
        };
        assert_eq!(sample.input, sample.target);
    }

    #[test]
    fn task_names_round_trip() {
        for t in [
            PretextTask::ReverseReconstruction,
            PretextTask::Prediction,
            PretextTask::HalfPrediction,
            PretextTask::Sorting,
        ] {
            assert_eq!(t.name().parse::<PretextTask>().unwrap(), t);
        }
    }
}
