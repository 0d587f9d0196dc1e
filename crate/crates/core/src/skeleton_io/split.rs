use serde::{Deserialize, Serialize};

use super::types::{Recording, SkeletonSequence};
use crate::error::{Error, Result};

/// How raw recordings are trimmed and cut into fixed-length windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Window length `f`.
    pub length: usize,
    /// Frames dropped at each end of a recording before windowing.
    pub head_tail_discard: usize,
    /// Offset between consecutive window starts.
    pub step: usize,
}

impl SplitConfig {
    /// Trims 10 frames per end and steps by `f / 2`.
    pub fn new(length: usize) -> Self {
        Self {
            length,
            head_tail_discard: 10,
            step: (length / 2).max(1),
        }
    }

    /// Range of frame indices kept after trimming.
    pub fn retained(&self, total: usize) -> std::ops::Range<usize> {
        let start = self.head_tail_discard.min(total);
        let end = total.saturating_sub(self.head_tail_discard).max(start);
        start..end
    }
}

/// Cuts a recording into overlapping windows of `cfg.length` frames.
///
/// The returned sequences carry `label: None` and `recording: 0`; dataset
/// level callers fill those in.
pub fn split_recording(recording: &Recording, cfg: &SplitConfig) -> Result<Vec<SkeletonSequence>> {
    if cfg.length == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    if cfg.step == 0 {
        return Err(Error::InvalidArgument("window step must be at least 1".into()));
    }
    let kept = cfg.retained(recording.frames.len());
    if kept.len() < cfg.length {
        return Err(Error::InsufficientFrames {
            recording: recording.name(),
            available: kept.len(),
            needed: cfg.length,
        });
    }
    let count = (kept.len() - cfg.length) / cfg.step + 1;
    Ok((0..count)
        .map(|i| {
            let start = kept.start + i * cfg.step;
            SkeletonSequence {
                frames: recording.frames[start..start + cfg.length].to_vec(),
                identity: recording.identity.clone(),
                label: None,
                rec: recording.rec,
                seq_index: i,
                recording: 0,
                start,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton_io::SkeletonFrame;

    fn recording(len: usize) -> Recording {
        Recording {
            identity: "p1".into(),
            rec: 0,
            frames: (0..len)
                .map(|t| SkeletonFrame::new(vec![[t as f64, 0.0, 0.0], [0.0, t as f64, 0.0]]).unwrap())
                .collect(),
        }
    }

    fn cfg() -> SplitConfig {
        SplitConfig {
            length: 6,
            head_tail_discard: 10,
            step: 3,
        }
    }

    #[test]
    fn forty_frames_give_five_windows() {
        let seqs = split_recording(&recording(40), &cfg()).unwrap();
        assert_eq!(seqs.len(), (20 - 6) / 3 + 1);
        let starts: Vec<usize> = seqs.iter().map(|s| s.start - 10).collect();
        assert_eq!(starts, vec![0, 3, 6, 9, 12]);
        for (i, s) in seqs.iter().enumerate() {
            assert_eq!(s.seq_index, i);
            assert_eq!(s.len(), 6);
            assert_eq!(s.frames[0].joints[0][0], s.start as f64);
        }
    }

    #[test]
    fn exactly_f_retained_gives_one_window() {
        assert_eq!(split_recording(&recording(26), &cfg()).unwrap().len(), 1);
    }

    #[test]
    fn too_short_names_recording() {
        let err = split_recording(&recording(25), &cfg()).unwrap_err();
        match err {
            Error::InsufficientFrames {
                recording,
                available,
                ..
            } => {
                assert_eq!(recording, "p1#0");
                assert_eq!(available, 5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_step_rejected() {
        let mut c = cfg();
        c.step = 0;
        assert!(split_recording(&recording(40), &c).is_err());
    }

    #[test]
    fn default_step_is_half_length() {
        let c = SplitConfig::new(6);
        assert_eq!((c.head_tail_discard, c.step), (10, 3));
    }
}
