use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::skeleton_io::{AuxRule, SkeletonSequence};

use super::decode::{decode_sequence, Phase};
use super::model::GaitModelDim;

/// Mean `f × f` alignment matrix over `sequences`, decoded without teacher
/// forcing. Row `t` holds the scores of decoding step `t + 1`.
pub fn mean_alignment(model: &GaitModelDim, sequences: &[SkeletonSequence]) -> Result<Vec<Vec<f64>>> {
    if !model.config.attention.has_attention() {
        return Err(Error::InvalidArgument("a model without attention has no alignment scores".into()));
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no sequences to average".into()));
    }
    let f = model.config.seq_len;
    let mut sum = vec![vec![0.0; f]; f];
    for s in sequences {
        let tr = decode_sequence(model, &s.slice(model.dim), None, AuxRule::ModelOutput, Phase::Test)?;
        for (acc, row) in sum.iter_mut().zip(&tr.alignment) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    let n = sequences.len() as f64;
    for row in &mut sum {
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(sum)
}

/// Mean over steps of the attention mass within `window` of the reversed
/// position: `1/f Σ_t Σ_{|j − p_t| ≤ D} a_t(j)`.
pub fn window_mass(matrix: &[Vec<f64>], window: usize) -> f64 {
    let f = matrix.len();
    if f == 0 {
        return 0.0;
    }
    let total: f64 = matrix
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let p = f - 1 - t;
            row.iter()
                .enumerate()
                .filter(|(j, _)| j.abs_diff(p) <= window)
                .map(|(_, v)| v)
                .sum::<f64>()
        })
        .sum();
    total / f as f64
}

pub fn matrix_to_csv(matrix: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}
