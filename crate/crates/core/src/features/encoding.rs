use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq2seq::{decode_sequence, GaitModel, Phase};
use crate::skeleton_io::{AuxRule, Dim, PretextTask, SkeletonSequence};

/// Which per-step vectors become features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Attention context vectors `c_t`.
    Context,
    /// Encoder hidden states `h_t`, for models without attention.
    EncoderState,
}

impl std::str::FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(FeatureSource::Context),
            "encoder-state" => Ok(FeatureSource::EncoderState),
            other => Err(Error::Config(format!("unknown feature source {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// Features of a model trained without the contrastive loss.
    Age,
    /// Features of a model trained with it.
    Cage,
}

/// Per-sequence gait features: one row of `3K` (times the number of fused
/// tasks) per skeleton. The sequence-level vector is the rows concatenated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitEncoding {
    pub identity: String,
    pub label: Option<usize>,
    pub rec: u32,
    pub seq_index: usize,
    pub variant: Variant,
    pub source: FeatureSource,
    /// Producing tasks in canonical order.
    pub tasks: Vec<PretextTask>,
    pub skeleton: Vec<Vec<f64>>,
}

impl GaitEncoding {
    pub fn skeleton_width(&self) -> usize {
        self.skeleton.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.skeleton.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeleton.is_empty()
    }

    pub fn sequence_vector(&self) -> Vec<f64> {
        self.skeleton.concat()
    }

    fn same_sequence(&self, other: &GaitEncoding) -> bool {
        self.identity == other.identity && self.rec == other.rec && self.seq_index == other.seq_index
    }
}

fn encode_one(model: &GaitModel, seq: &SkeletonSequence, source: FeatureSource) -> Result<GaitEncoding> {
    let f = seq.len();
    let mut rows = vec![Vec::with_capacity(3 * model.config().hidden); f];
    for dim in Dim::ALL {
        let trace = decode_sequence(model.dim(dim), &seq.slice(dim), None, AuxRule::ModelOutput, Phase::Test)?;
        let per_step = match source {
            FeatureSource::Context => trace.contexts,
            FeatureSource::EncoderState => trace.encoded,
        };
        for (row, v) in rows.iter_mut().zip(per_step) {
            row.extend(v);
        }
    }
    Ok(GaitEncoding {
        identity: seq.identity.clone(),
        label: seq.label,
        rec: seq.rec,
        seq_index: seq.seq_index,
        variant: if model.meta.contrastive { Variant::Cage } else { Variant::Age },
        source,
        tasks: vec![model.task()],
        skeleton: rows,
    })
}

/// Encodes every sequence with the frozen model, decoding without teacher
/// forcing. Work is spread over threads; output order follows the input.
pub fn extract_encodings(
    model: &GaitModel,
    sequences: &[SkeletonSequence],
    source: FeatureSource,
) -> Result<Vec<GaitEncoding>> {
    let cfg = model.config();
    if source == FeatureSource::Context && !cfg.attention.has_attention() {
        return Err(Error::InvalidArgument(
            "context vectors are undefined for a model without attention".into(),
        ));
    }
    for s in sequences {
        if s.num_joints() != cfg.joints {
            return Err(Error::shape(
                "extract_encodings",
                format!("sequence has {} joints, model expects {}", s.num_joints(), cfg.joints),
            ));
        }
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = sequences.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Vec<GaitEncoding>>> = std::thread::scope(|s| {
        let handles: Vec<_> = sequences
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|q| encode_one(model, q, source)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("extraction thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(sequences.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Concatenates the per-skeleton features of one sequence from several
/// pretext tasks, in canonical task order regardless of input order.
pub fn fuse_encodings(parts: &[GaitEncoding]) -> Result<GaitEncoding> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to fuse".into()))?;
    for p in parts {
        if !p.same_sequence(first) {
            return Err(Error::InvalidArgument(format!(
                "cannot fuse {}#{}/{} with {}#{}/{}",
                first.identity, first.rec, first.seq_index, p.identity, p.rec, p.seq_index
            )));
        }
        if p.len() != first.len() {
            return Err(Error::InvalidArgument("fused encodings differ in length".into()));
        }
    }
    let mut ordered: Vec<&GaitEncoding> = parts.iter().collect();
    ordered.sort_by_key(|p| p.tasks.iter().map(|t| t.canonical_rank()).min().unwrap_or(usize::MAX));
    let mut skeleton = vec![Vec::new(); first.len()];
    for p in &ordered {
        for (row, v) in skeleton.iter_mut().zip(&p.skeleton) {
            row.extend_from_slice(v);
        }
    }
    Ok(GaitEncoding {
        identity: first.identity.clone(),
        label: first.label,
        rec: first.rec,
        seq_index: first.seq_index,
        variant: if ordered.iter().all(|p| p.variant == Variant::Cage) {
            Variant::Cage
        } else {
            Variant::Age
        },
        source: first.source,
        tasks: ordered.iter().flat_map(|p| p.tasks.iter().copied()).collect(),
        skeleton,
    })
}

/// Fuses aligned encoding lists, one list per task.
pub fn fuse_all(per_task: &[Vec<GaitEncoding>]) -> Result<Vec<GaitEncoding>> {
    let Some(first) = per_task.first() else {
        return Ok(Vec::new());
    };
    if per_task.iter().any(|v| v.len() != first.len()) {
        return Err(Error::InvalidArgument("task encoding lists differ in length".into()));
    }
    (0..first.len())
        .map(|i| {
            let parts: Vec<GaitEncoding> = per_task.iter().map(|v| v[i].clone()).collect();
            fuse_encodings(&parts)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EncodingLine {
    id: String,
    #[serde(default)]
    label: Option<usize>,
    rec: u32,
    seq_index: usize,
    level: String,
    variant: Variant,
    source: FeatureSource,
    tasks: Vec<PretextTask>,
    skeleton_width: usize,
    vector: Vec<f64>,
}

/// Writes sequence-level encodings as JSON Lines.
pub fn write_encodings(path: &Path, encodings: &[GaitEncoding]) -> Result<()> {
    let mut out = Vec::new();
    for e in encodings {
        let line = EncodingLine {
            id: e.identity.clone(),
            label: e.label,
            rec: e.rec,
            seq_index: e.seq_index,
            level: "sequence".into(),
            variant: e.variant,
            source: e.source,
            tasks: e.tasks.clone(),
            skeleton_width: e.skeleton_width(),
            vector: e.sequence_vector(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_encodings(path: &Path) -> Result<Vec<GaitEncoding>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let rec: EncodingLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if rec.level != "sequence" {
            return Err(parse(format!("unsupported level {:?}", rec.level)));
        }
        if rec.skeleton_width == 0 || !rec.vector.len().is_multiple_of(rec.skeleton_width) {
            return Err(parse("vector length is not a multiple of skeleton_width".into()));
        }
        out.push(GaitEncoding {
            identity: rec.id,
            label: rec.label,
            rec: rec.rec,
            seq_index: rec.seq_index,
            variant: rec.variant,
            source: rec.source,
            tasks: rec.tasks,
            skeleton: rec.vector.chunks(rec.skeleton_width).map(<[f64]>::to_vec).collect(),
        });
    }
    Ok(out)
}
