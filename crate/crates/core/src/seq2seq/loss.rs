use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamStore, Tape};
use crate::skeleton_io::DimensionSlice;

use super::decode::{DecodeGraph, DecodeTrace};
use super::model::AttentionMode;

/// Coefficients of the combined objective
/// `λ_S L_S + λ_A L_A + λ_C L_C + β ‖Θ‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_a: f64,
    pub lambda_c: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_a: 0.5,
            lambda_c: 0.5,
            beta: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self, attention: AttentionMode) -> Result<()> {
        for (name, v) in [
            ("lambda-s", self.lambda_s),
            ("lambda-a", self.lambda_a),
            ("lambda-c", self.lambda_c),
            ("beta", self.beta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if self.lambda_a > 0.0 && attention != AttentionMode::Las {
            return Err(Error::Config(format!(
                "lambda-a > 0 requires attention = las, got {attention}"
            )));
        }
        if self.lambda_c > 0.0 && !attention.has_attention() {
            return Err(Error::Config(
                "lambda-c > 0 requires an attention mode: the contrastive loss uses context vectors".into(),
            ));
        }
        Ok(())
    }
}

/// `Σ_{t,j} (S̄_tj − Ŝ_tj)²`.
pub fn reconstruction_loss(outputs: &[Vec<f64>], target: &DimensionSlice) -> Result<f64> {
    if outputs.len() != target.len() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{} outputs for {} target frames", outputs.len(), target.len()),
        ));
    }
    let mut total = 0.0;
    for (o, t) in outputs.iter().zip(&target.values) {
        if o.len() != t.len() {
            return Err(Error::shape("reconstruction_loss", "joint count differs"));
        }
        total += o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

pub fn reconstruction_loss_node(tape: &mut Tape, graph: &DecodeGraph, target: &DimensionSlice) -> Result<NodeId> {
    if graph.outputs.len() != target.len() {
        return Err(Error::shape("reconstruction_loss", "output and target lengths differ"));
    }
    let mut terms = Vec::with_capacity(target.len());
    for (&o, row) in graph.outputs.iter().zip(&target.values) {
        let t = tape.constant_vec(row.clone())?;
        let d = tape.sub(o, t)?;
        terms.push(tape.sum_squares(d)?);
    }
    tape.add_all(&terms)
}

/// `Σ_{t,j} (a_t(j) − l_t(j)·a_t(j))²` from alignment rows and masks.
pub fn alignment_loss_values(alignment: &[Vec<f64>], masks: &[Vec<f64>]) -> Result<f64> {
    if alignment.len() != masks.len() {
        return Err(Error::shape("alignment_loss", "alignment and mask row counts differ"));
    }
    let mut total = 0.0;
    for (a, l) in alignment.iter().zip(masks) {
        if a.len() != l.len() {
            return Err(Error::shape("alignment_loss", "alignment and mask widths differ"));
        }
        total += a.iter().zip(l).map(|(x, m)| (x - m * x).powi(2)).sum::<f64>();
    }
    Ok(total)
}

/// Alignment loss of a decoded trace; defined only for LAS.
pub fn alignment_loss(trace: &DecodeTrace) -> Result<f64> {
    if trace.attention != AttentionMode::Las {
        return Err(Error::InvalidArgument(format!(
            "alignment loss needs attention = las, got {}",
            trace.attention
        )));
    }
    alignment_loss_values(&trace.alignment, &trace.masks)
}

/// Tape version of [`alignment_loss`]. The target `l ⊙ a` is a constant, so
/// gradient reaches the alignment scores only through the first term.
pub fn alignment_loss_node(tape: &mut Tape, graph: &DecodeGraph) -> Result<NodeId> {
    alignment_loss_node_with(tape, graph, None)
}

/// [`alignment_loss_node`] with the targets `ã` supplied instead of read
/// off the current alignment; one `f`-vector per decoding step.
pub fn alignment_loss_node_with(tape: &mut Tape, graph: &DecodeGraph, targets: Option<&[Vec<f64>]>) -> Result<NodeId> {
    if graph.attention != AttentionMode::Las {
        return Err(Error::InvalidArgument(format!(
            "alignment loss needs attention = las, got {}",
            graph.attention
        )));
    }
    if let Some(t) = targets {
        if t.len() != graph.alignment.len() {
            return Err(Error::shape(
                "alignment_loss",
                format!("{} targets for {} steps", t.len(), graph.alignment.len()),
            ));
        }
    }
    let mut terms = Vec::with_capacity(graph.alignment.len());
    for (t, (&a, mask)) in graph.alignment.iter().zip(&graph.masks).enumerate() {
        let target: Vec<f64> = match targets {
            Some(given) => given[t].clone(),
            None => tape.value(a).data().iter().zip(mask).map(|(x, l)| x * l).collect(),
        };
        let target = tape.constant_vec(target)?;
        let d = tape.sub(a, target)?;
        terms.push(tape.sum_squares(d)?);
    }
    tape.add_all(&terms)
}

/// Combined objective from already computed loss values.
pub fn total_loss(ls: f64, la: f64, lc: f64, weights: &LossWeights, theta_sq_norm: f64) -> f64 {
    weights.lambda_s * ls + weights.lambda_a * la + weights.lambda_c * lc + weights.beta * theta_sq_norm
}

/// `Σ ‖W‖²` over every parameter of `store`.
pub fn l2_node(tape: &mut Tape, store: &ParamStore) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(store.len());
    for id in store.ids() {
        let p = tape.param(store, id);
        terms.push(tape.sum_squares(p)?);
    }
    tape.add_all(&terms)
}

/// Combined objective on the tape; absent terms count as zero.
pub fn total_loss_node(
    tape: &mut Tape,
    ls: NodeId,
    la: Option<NodeId>,
    lc: Option<NodeId>,
    weights: &LossWeights,
    store: &ParamStore,
) -> Result<NodeId> {
    let mut terms = vec![tape.scale(ls, weights.lambda_s)?];
    if let Some(la) = la {
        terms.push(tape.scale(la, weights.lambda_a)?);
    }
    if let Some(lc) = lc {
        terms.push(tape.scale(lc, weights.lambda_c)?);
    }
    if weights.beta > 0.0 {
        let l2 = l2_node(tape, store)?;
        terms.push(tape.scale(l2, weights.beta)?);
    }
    tape.add_all(&terms)
}
