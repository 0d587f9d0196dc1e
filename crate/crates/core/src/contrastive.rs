//! Locality-aware contrastive learning between temporally adjacent sequences.
//!
//! Sequences of one identity are drawn in temporal order; each window and the
//! window `interval` steps later form a positive pair, every other member of
//! the batch is a negative. Sequence encodings are mapped to the contrasting
//! space by a one-hidden-layer projection head before the cosine-similarity
//! cross-entropy is applied.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Tape};
use crate::skeleton_io::SkeletonSequence;

pub use crate::numerics::cosine_similarity as cosine_sim;

/// Norm floor used inside the loss so a collapsed projection stays finite.
const COSINE_EPS: f64 = 1e-8;

/// `z = W² relu(W¹ V)`.
#[derive(Clone, Debug)]
pub struct ProjectionHead {
    pub w1: ParamId,
    pub w2: ParamId,
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl ProjectionHead {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::InvalidArgument("projection sizes must be positive".into()));
        }
        let w1 = store.add_uniform(
            format!("{prefix}.w1"),
            &[hidden, input],
            1.0 / (input as f64).sqrt(),
            rng,
        )?;
        let w2 = store.add_uniform(
            format!("{prefix}.w2"),
            &[output, hidden],
            1.0 / (hidden as f64).sqrt(),
            rng,
        )?;
        Ok(Self {
            w1,
            w2,
            input,
            hidden,
            output,
        })
    }
}

/// Maps a sequence encoding into the contrasting space.
pub fn project(tape: &mut Tape, store: &ParamStore, head: &ProjectionHead, v: NodeId) -> Result<NodeId> {
    let len = tape.value(v).len();
    if len != head.input {
        return Err(Error::shape(
            "project",
            format!("encoding length {len}, head expects {}", head.input),
        ));
    }
    let w1 = tape.param(store, head.w1);
    let w2 = tape.param(store, head.w2);
    let h = tape.matvec(w1, v)?;
    let h = tape.relu(h)?;
    tape.matvec(w2, h)
}

pub fn project_values(store: &ParamStore, head: &ProjectionHead, v: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant_vec(v.to_vec())?;
    let z = project(&mut tape, store, head, x)?;
    Ok(tape.value(z).data().to_vec())
}

/// Orders projections of `n` consecutive sequences as
/// `[z(1), …, z(n-1), z(2), …, z(n)]`, so entry `k` and entry `k + n - 1`
/// are a positive pair.
pub fn lcl_representations<T: Clone>(projections: &[T]) -> Vec<T> {
    let n = projections.len();
    if n < 2 {
        return Vec::new();
    }
    projections[..n - 1]
        .iter()
        .chain(&projections[1..])
        .cloned()
        .collect()
}

fn check_lcl_args(count: usize, temperature: f64) -> Result<()> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
    }
    if count < 2 || !count.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "contrastive loss needs 2n-2 representations with n >= 2, got {count}"
        )));
    }
    Ok(())
}

/// Contrastive loss over `2n - 2` representations ordered as by
/// [`lcl_representations`]:
///
/// ```text
/// ℓ(i, j) = -log( exp(α_ij) / Σ_{k≠i} exp(α_ik) ),   α_ij = cos(z_i, z_j) / τ
/// L_C = 1/(2n-2) · Σ_{k=1}^{n-1} [ ℓ(k, k+n-1) + ℓ(k+n-1, k) ]
/// ```
pub fn lcl_loss_node(tape: &mut Tape, z: &[NodeId], temperature: f64) -> Result<NodeId> {
    check_lcl_args(z.len(), temperature)?;
    let m = z.len();
    let half = m / 2;
    let inv_tau = 1.0 / temperature;

    let unit = z
        .iter()
        .map(|&v| tape.normalize(v, COSINE_EPS))
        .collect::<Result<Vec<_>>>()?;
    let mut sims = vec![vec![None; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let c = tape.dot(unit[i], unit[j])?;
            let a = tape.scale(c, inv_tau)?;
            sims[i][j] = Some(a);
            sims[j][i] = Some(a);
        }
    }
    let mut terms = Vec::with_capacity(m);
    let ell = |tape: &mut Tape, i: usize, j: usize| -> Result<NodeId> {
        let row: Vec<NodeId> = (0..m).filter(|&k| k != i).map(|k| sims[i][k].unwrap()).collect();
        let row = tape.concat(&row)?;
        let lse = tape.log_sum_exp(row)?;
        tape.sub(lse, sims[i][j].unwrap())
    };
    for k in 0..half {
        terms.push(ell(tape, k, k + half)?);
        terms.push(ell(tape, k + half, k)?);
    }
    let total = tape.add_all(&terms)?;
    tape.scale(total, 1.0 / m as f64)
}

/// Value-level contrastive loss, see [`lcl_loss_node`].
pub fn lcl_loss(z: &[Vec<f64>], temperature: f64) -> Result<f64> {
    check_lcl_args(z.len(), temperature)?;
    let mut tape = Tape::new();
    let nodes = z
        .iter()
        .map(|v| tape.constant_vec(v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = lcl_loss_node(&mut tape, &nodes, temperature)?;
    Ok(tape.scalar(loss))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ContrastConfig {
    /// Sequences per batch, `n`.
    pub batch_size: usize,
    /// `seq_index` gap between positive pairs.
    pub interval: usize,
    pub temperature: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            interval: 1,
            temperature: 0.1,
        }
    }
}

/// `n` sequences of one identity, `interval` windows apart, in temporal order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContrastBatch {
    pub identity: String,
    /// Indices into the sequence list the batch was built from.
    pub members: Vec<usize>,
}

/// Batches for one identity. Chains never cross recordings; a trailing
/// remainder shorter than `n` is dropped.
pub fn make_batches(
    sequences: &[SkeletonSequence],
    identity: &str,
    n: usize,
    interval: usize,
) -> Result<Vec<ContrastBatch>> {
    if n == 0 || interval == 0 {
        return Err(Error::InvalidArgument("batch size and interval must be positive".into()));
    }
    let mut by_recording: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in sequences.iter().enumerate().filter(|(_, s)| s.identity == identity) {
        by_recording.entry(s.recording).or_default().push(i);
    }
    let total: usize = by_recording.values().map(Vec::len).sum();
    if total < n {
        log::warn!("identity {identity}: {total} sequences, fewer than batch size {n}; skipped");
        return Ok(Vec::new());
    }

    let mut batches = Vec::new();
    for members in by_recording.values_mut() {
        members.sort_by_key(|&i| sequences[i].seq_index);
        for residue in 0..interval {
            let mut chain: Vec<usize> = Vec::new();
            let flush = |chain: &mut Vec<usize>, batches: &mut Vec<ContrastBatch>| {
                for chunk in chain.chunks_exact(n) {
                    batches.push(ContrastBatch {
                        identity: identity.to_string(),
                        members: chunk.to_vec(),
                    });
                }
                chain.clear();
            };
            for &i in members.iter().filter(|&&i| sequences[i].seq_index % interval == residue) {
                if let Some(&last) = chain.last() {
                    if sequences[i].seq_index != sequences[last].seq_index + interval {
                        flush(&mut chain, &mut batches);
                    }
                }
                chain.push(i);
            }
            flush(&mut chain, &mut batches);
        }
    }
    batches.sort_by_key(|b| {
        let s = &sequences[b.members[0]];
        (s.recording, s.seq_index)
    });
    Ok(batches)
}

/// Batches for every identity, in order of first appearance.
pub fn make_all_batches(sequences: &[SkeletonSequence], n: usize, interval: usize) -> Result<Vec<ContrastBatch>> {
    let mut identities: Vec<&str> = Vec::new();
    for s in sequences {
        if !identities.contains(&s.identity.as_str()) {
            identities.push(&s.identity);
        }
    }
    let mut out = Vec::new();
    for id in identities {
        out.extend(make_batches(sequences, id, n, interval)?);
    }
    Ok(out)
}
