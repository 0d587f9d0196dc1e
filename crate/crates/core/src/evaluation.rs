//! Multi-shot re-identification metrics: CMC, Rank-1, nAUC and
//! nearest-neighbour gallery matching.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{predict_sequence, GaitEncoding, RecognitionNet};

/// `CMC(k)` for `k = 1..=G`: fraction of probes whose identity is ranked
/// within the top `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub values: Vec<f64>,
}

impl CmcCurve {
    pub fn rank1(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Labels ordered by descending score; equal scores keep ascending label order.
pub fn rank_by_score(scores: &[(usize, f64)]) -> Vec<usize> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(l, _)| l).collect()
}

/// Labels ordered by ascending distance; ties keep ascending label order.
pub fn rank_by_distance(distances: &[(usize, f64)]) -> Vec<usize> {
    let mut v = distances.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(l, _)| l).collect()
}

/// Builds the CMC curve from one full identity ranking per probe.
pub fn cmc(rankings: &[Vec<usize>], truth: &[usize]) -> Result<CmcCurve> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("no probes".into()));
    }
    if rankings.len() != truth.len() {
        return Err(Error::InvalidArgument("one true label per probe required".into()));
    }
    let g = rankings[0].len();
    let mut hits = vec![0usize; g];
    for (r, &t) in rankings.iter().zip(truth) {
        if r.len() != g {
            return Err(Error::InvalidArgument("rankings differ in gallery size".into()));
        }
        let pos = r
            .iter()
            .position(|&l| l == t)
            .ok_or_else(|| Error::InvalidArgument(format!("probe identity {t} absent from gallery")))?;
        hits[pos] += 1;
    }
    let n = rankings.len() as f64;
    let mut acc = 0usize;
    let values = hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { values })
}

/// Area under the CMC normalized by the number of ranks.
pub fn nauc(curve: &CmcCurve) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("empty CMC curve".into()));
    }
    Ok(neumaier_sum(&curve.values) / curve.len() as f64)
}

/// Compensated summation; keeps the area exact for curves such as `k / G`.
fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        comp += if f64::abs(sum) >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Rank-1, nAUC and CMC of one evaluation, all as fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct ReidMetrics {
    pub rank1: f64,
    pub nauc: f64,
    pub cmc: CmcCurve,
    pub probes: usize,
}

#[derive(Serialize, Deserialize)]
struct MetricsJson {
    rank1: f64,
    nauc: f64,
    cmc: Vec<f64>,
    probes: usize,
}

impl ReidMetrics {
    pub fn from_rankings(rankings: &[Vec<usize>], truth: &[usize]) -> Result<Self> {
        let curve = cmc(rankings, truth)?;
        Ok(Self {
            rank1: curve.rank1(),
            nauc: nauc(&curve)?,
            cmc: curve,
            probes: rankings.len(),
        })
    }

    /// JSON with Rank-1 and nAUC in percent and the CMC as fractions.
    pub fn to_json(&self) -> Result<String> {
        let j = MetricsJson {
            rank1: 100.0 * self.rank1,
            nauc: 100.0 * self.nauc,
            cmc: self.cmc.values.clone(),
            probes: self.probes,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("rank1,{:?}\nnauc,{:?}\n", 100.0 * self.rank1, 100.0 * self.nauc);
        for (k, v) in self.cmc.values.iter().enumerate() {
            let _ = writeln!(out, "cmc{},{v:?}", k + 1);
        }
        out
    }
}

/// Ranks class probabilities (index `c` is label `c + 1`) for each probe.
pub fn evaluate_probabilities(probabilities: &[Vec<f64>], truth: &[usize]) -> Result<ReidMetrics> {
    let rankings: Vec<Vec<usize>> = probabilities
        .iter()
        .map(|p| rank_by_score(&p.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect::<Vec<_>>()))
        .collect();
    ReidMetrics::from_rankings(&rankings, truth)
}

/// Classifies every probe sequence with the recognizer and scores the
/// resulting identity rankings.
pub fn evaluate_classifier(net: &RecognitionNet, encodings: &[GaitEncoding]) -> Result<ReidMetrics> {
    let mut probs = Vec::with_capacity(encodings.len());
    let mut truth = Vec::with_capacity(encodings.len());
    for e in encodings {
        let label = e
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("probe {} has no label", e.identity)))?;
        if label == 0 || label > net.classes {
            return Err(Error::InvalidArgument(format!(
                "probe label {label} outside the recognizer's {} classes",
                net.classes
            )));
        }
        probs.push(predict_sequence(net, e)?);
        truth.push(label);
    }
    evaluate_probabilities(&probs, &truth)
}

/// A labelled sequence-level feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVector {
    pub label: usize,
    pub vector: Vec<f64>,
}

impl LabeledVector {
    pub fn from_encoding(e: &GaitEncoding) -> Result<Self> {
        Ok(Self {
            label: e
                .label
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no label", e.identity)))?,
            vector: e.sequence_vector(),
        })
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Matches each probe against the gallery by Euclidean distance. An
/// identity's distance is the smallest over its gallery vectors.
pub fn match_gallery(probes: &[LabeledVector], gallery: &[LabeledVector]) -> Result<ReidMetrics> {
    let width = gallery
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty gallery".into()))?
        .vector
        .len();
    if gallery.iter().chain(probes).any(|v| v.vector.len() != width) {
        return Err(Error::shape("match_gallery", "probe and gallery widths differ"));
    }
    let mut rankings = Vec::with_capacity(probes.len());
    for p in probes {
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        for g in gallery {
            let d = euclidean(&p.vector, &g.vector);
            let e = best.entry(g.label).or_insert(f64::INFINITY);
            if d < *e {
                *e = d;
            }
        }
        rankings.push(rank_by_distance(&best.into_iter().collect::<Vec<_>>()));
    }
    let truth: Vec<usize> = probes.iter().map(|p| p.label).collect();
    ReidMetrics::from_rankings(&rankings, &truth)
}
