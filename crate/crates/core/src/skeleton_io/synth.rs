use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::types::{Recording, SkeletonFrame};
use crate::error::{Error, Result};

/// Walking-style parameters that distinguish one synthetic identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Forward swing amplitude of the lowest joints, in meters.
    pub stride: f64,
    /// Gait cycles per frame.
    pub frequency: f64,
    /// Cycle phase at frame 0, in radians.
    pub phase: f64,
    /// Body height, in meters.
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthConfig {
    pub identities: usize,
    pub recordings_per_identity: usize,
    pub frames_per_recording: usize,
    pub joints: usize,
    /// Half-width of the uniform noise added to every coordinate.
    pub noise: f64,
    /// Trailing recordings per identity tagged as test/probe.
    pub test_recordings: usize,
    pub sequence_length: usize,
    /// Give each recording a random cycle offset.
    pub random_recording_phase: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 5,
            recordings_per_identity: 4,
            frames_per_recording: 60,
            joints: 10,
            noise: 0.01,
            test_recordings: 1,
            sequence_length: 6,
            random_recording_phase: true,
            seed: 7,
        }
    }
}

/// Evenly spread, shuffled parameter tuples; distinct for distinct identities.
pub fn default_gait_params(count: usize, rng: &mut impl Rng) -> Vec<GaitParams> {
    let grid = |rng: &mut dyn rand::RngCore| {
        let mut v: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) / count as f64).collect();
        v.shuffle(rng);
        v
    };
    let heights = grid(rng);
    let strides = grid(rng);
    let freqs = grid(rng);
    (0..count)
        .map(|i| GaitParams {
            stride: 0.25 + 0.4 * strides[i],
            frequency: 0.03 + 0.04 * freqs[i],
            phase: rng.random_range(0.0..2.0 * PI),
            height: 1.5 + 0.4 * heights[i],
        })
        .collect()
}

/// Joint positions of the synthetic walker at cycle angle `theta`.
///
/// Joints come in left/right pairs stacked from the feet (level 0) upward;
/// the two sides swing in antiphase with amplitude shrinking toward the top.
fn pose(p: &GaitParams, joints: usize, theta: f64) -> Vec<[f64; 3]> {
    let levels = joints.div_ceil(2);
    (0..joints)
        .map(|j| {
            let level = j / 2;
            let side = if j % 2 == 0 { -1.0 } else { 1.0 };
            let frac = if levels > 1 {
                level as f64 / (levels - 1) as f64
            } else {
                0.0
            };
            let swing = theta + if side < 0.0 { 0.0 } else { PI };
            let x = side * 0.12 * p.height * (1.0 - 0.4 * frac) + 0.02 * theta.sin();
            let y = p.height * (0.05 + 0.9 * frac) + 0.04 * p.stride * (2.0 * theta).cos();
            let z = p.stride * (1.0 - 0.7 * frac) * swing.sin();
            [x, y, z]
        })
        .collect()
}

/// Deterministic sinusoidal gait recordings for `cfg.identities` people.
///
/// When `params` is `None`, identity parameters are drawn from the seed.
pub fn generate_synthetic(cfg: &SynthConfig, params: Option<Vec<GaitParams>>) -> Result<Dataset> {
    if cfg.identities == 0 {
        return Err(Error::InvalidArgument("need at least one identity".into()));
    }
    if cfg.recordings_per_identity == 0 || cfg.frames_per_recording == 0 {
        return Err(Error::InvalidArgument("recordings and frames must be positive".into()));
    }
    if cfg.joints < 2 {
        return Err(Error::InvalidArgument("need at least two joints".into()));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = match params {
        Some(p) if p.len() != cfg.identities => {
            return Err(Error::InvalidArgument(format!(
                "{} parameter sets for {} identities",
                p.len(),
                cfg.identities
            )))
        }
        Some(p) => p,
        None => default_gait_params(cfg.identities, &mut rng),
    };

    let mut recordings = Vec::new();
    for (i, p) in params.iter().enumerate() {
        for r in 0..cfg.recordings_per_identity {
            let offset = if cfg.random_recording_phase {
                rng.random_range(0.0..2.0 * PI)
            } else {
                0.0
            };
            let frames = (0..cfg.frames_per_recording)
                .map(|t| {
                    let theta = 2.0 * PI * p.frequency * t as f64 + p.phase + offset;
                    let mut joints = pose(p, cfg.joints, theta);
                    if cfg.noise > 0.0 {
                        for c in joints.iter_mut().flatten() {
                            *c += rng.random_range(-cfg.noise..=cfg.noise);
                        }
                    }
                    SkeletonFrame { joints }
                })
                .collect();
            recordings.push(Recording {
                identity: format!("person{:03}", i + 1),
                rec: r as u32,
                frames,
            });
        }
    }
    Dataset::from_recordings(
        recordings,
        cfg.joints,
        cfg.sequence_length,
        cfg.test_recordings.min(cfg.recordings_per_identity),
    )
}
