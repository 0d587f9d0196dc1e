use crate::error::{Error, Result};
use crate::numerics::{lstm_step, LstmState, NodeId, Tape, Tensor};
use crate::skeleton_io::{AuxRule, DimensionSlice, PretextSample};

use super::model::{AttentionMode, GaitModelDim};

/// Decoding regime. Teacher forcing is only possible while training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

/// Gaussian locality weights for decoding step `t` (1-based):
/// `l_t(j) = exp(-(j - p_t)² / (2σ²))` with `p_t = f - t + 1` and `σ = D / 2`.
pub fn locality_mask(t: usize, f: usize, window: usize) -> Result<Vec<f64>> {
    if t == 0 || t > f {
        return Err(Error::InvalidArgument(format!("step {t} outside 1..={f}")));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("attention window must be >= 1".into()));
    }
    let sigma = window as f64 / 2.0;
    let p = (f - t + 1) as f64;
    Ok((1..=f)
        .map(|j| {
            let d = j as f64 - p;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect())
}

/// One coordinate's input and target, cut from a [`PretextSample`].
#[derive(Clone, Debug, PartialEq)]
pub struct DimSample {
    pub input: DimensionSlice,
    pub target: DimensionSlice,
    pub aux_rule: AuxRule,
}

impl DimSample {
    pub fn from_pretext(sample: &PretextSample, dim: crate::skeleton_io::Dim) -> Self {
        Self {
            input: DimensionSlice::from_frames(&sample.input, dim),
            target: DimensionSlice::from_frames(&sample.target, dim),
            aux_rule: sample.aux_rule,
        }
    }
}

/// Tape nodes of one encoded and decoded sequence.
#[derive(Clone, Debug)]
pub struct DecodeGraph {
    pub encoded: Vec<NodeId>,
    pub decoded: Vec<NodeId>,
    /// Softmax alignment rows `a_t`.
    pub alignment: Vec<NodeId>,
    /// `l_t ⊙ a_t`, for the masked modes.
    pub masked: Vec<NodeId>,
    pub masks: Vec<Vec<f64>>,
    pub contexts: Vec<NodeId>,
    pub attentional: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub attention: AttentionMode,
}

/// Values of a [`DecodeGraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeTrace {
    pub attention: AttentionMode,
    pub encoded: Vec<Vec<f64>>,
    pub decoded: Vec<Vec<f64>>,
    /// `f × f`; empty without attention.
    pub alignment: Vec<Vec<f64>>,
    /// `f × f` for MBAS and LAS, empty otherwise.
    pub masked: Vec<Vec<f64>>,
    pub masks: Vec<Vec<f64>>,
    pub contexts: Vec<Vec<f64>>,
    pub attentional: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl DecodeGraph {
    pub fn trace(&self, tape: &Tape) -> DecodeTrace {
        let vals = |ids: &[NodeId]| -> Vec<Vec<f64>> {
            ids.iter().map(|&n| tape.value(n).data().to_vec()).collect()
        };
        DecodeTrace {
            attention: self.attention,
            encoded: vals(&self.encoded),
            decoded: vals(&self.decoded),
            alignment: vals(&self.alignment),
            masked: vals(&self.masked),
            masks: self.masks.clone(),
            contexts: vals(&self.contexts),
            attentional: vals(&self.attentional),
            outputs: vals(&self.outputs),
        }
    }

    /// `[c_1; …; c_f]`, the sequence encoding used by the contrastive loss.
    pub fn sequence_encoding(&self, tape: &mut Tape) -> Result<NodeId> {
        if self.contexts.is_empty() {
            return Err(Error::InvalidArgument("context vectors need an attention mode".into()));
        }
        tape.concat(&self.contexts)
    }
}

fn slice_rows(slice: &DimensionSlice, joints: usize, op: &'static str) -> Result<()> {
    if slice.values.iter().any(|r| r.len() != joints) {
        return Err(Error::shape(op, format!("expected {joints} joints per frame")));
    }
    Ok(())
}

/// Runs the encoder over the frames of `slice` from a zero state.
pub fn encode(tape: &mut Tape, model: &GaitModelDim, slice: &DimensionSlice) -> Result<(Vec<NodeId>, LstmState)> {
    let cfg = &model.config;
    if slice.len() != cfg.seq_len {
        return Err(Error::shape(
            "encode",
            format!("sequence has {} frames, model expects {}", slice.len(), cfg.seq_len),
        ));
    }
    slice_rows(slice, cfg.joints, "encode")?;
    let mut state = LstmState::zeros(tape, cfg.hidden)?;
    let mut states = Vec::with_capacity(slice.len());
    for row in &slice.values {
        let x = tape.constant_vec(row.clone())?;
        state = lstm_step(tape, &model.store, &model.encoder, x, state)?;
        states.push(state.hidden);
    }
    Ok((states, state))
}

/// Decodes `f` skeletons from the encoder states.
///
/// The decoder starts from the encoder's final state and an all-zero
/// skeleton. Each later step receives the previous skeleton (the target under
/// teacher forcing, otherwise the model output) concatenated with the
/// previous attentional state.
pub fn decode(
    tape: &mut Tape,
    model: &GaitModelDim,
    encoded: &[NodeId],
    final_state: LstmState,
    target: Option<&DimensionSlice>,
    aux_rule: AuxRule,
    phase: Phase,
) -> Result<DecodeGraph> {
    let cfg = &model.config;
    let (f, j, k) = (cfg.seq_len, cfg.joints, cfg.hidden);
    if encoded.len() != f {
        return Err(Error::shape("decode", format!("{} encoder states for f={f}", encoded.len())));
    }
    let teacher = phase == Phase::Train && aux_rule == AuxRule::GroundTruthTarget;
    if let Some(t) = target {
        if t.len() != f {
            return Err(Error::shape("decode", format!("target has {} frames for f={f}", t.len())));
        }
        slice_rows(t, j, "decode")?;
    } else if teacher {
        return Err(Error::InvalidArgument("teacher forcing needs a target".into()));
    }

    let mode = cfg.attention;
    let memory = if mode.has_attention() { Some(tape.stack(encoded)?) } else { None };
    let w_out = tape.param(&model.store, model.w_out);
    let w_att = model.w_att.map(|id| tape.param(&model.store, id));

    let mut graph = DecodeGraph {
        encoded: encoded.to_vec(),
        decoded: Vec::with_capacity(f),
        alignment: Vec::new(),
        masked: Vec::new(),
        masks: Vec::new(),
        contexts: Vec::new(),
        attentional: Vec::new(),
        outputs: Vec::with_capacity(f),
        attention: mode,
    };

    let mut state = final_state;
    let mut prev_skeleton = tape.constant(Tensor::zeros(&[j]))?;
    let mut prev_attentional = tape.constant(Tensor::zeros(&[k]))?;
    for t in 0..f {
        let input = if mode.has_attention() {
            tape.concat(&[prev_skeleton, prev_attentional])?
        } else {
            prev_skeleton
        };
        state = lstm_step(tape, &model.store, &model.decoder, input, state)?;
        let h_dec = state.hidden;
        graph.decoded.push(h_dec);

        let output = match (memory, w_att) {
            (Some(memory), Some(w_att)) => {
                let scores = tape.matvec(memory, h_dec)?;
                let a = tape.softmax(scores)?;
                graph.alignment.push(a);
                let weights = if matches!(mode, AttentionMode::Mbas | AttentionMode::Las) {
                    let mask = locality_mask(t + 1, f, cfg.window)?;
                    let l = tape.constant_vec(mask.clone())?;
                    graph.masks.push(mask);
                    let masked = tape.mul(a, l)?;
                    graph.masked.push(masked);
                    if mode == AttentionMode::Mbas {
                        masked
                    } else {
                        a
                    }
                } else {
                    a
                };
                let c = tape.mat_t_vec(memory, weights)?;
                graph.contexts.push(c);
                let joined = tape.concat(&[c, h_dec])?;
                let pre = tape.matvec(w_att, joined)?;
                let h_att = tape.tanh(pre)?;
                graph.attentional.push(h_att);
                prev_attentional = h_att;
                tape.matvec(w_out, h_att)?
            }
            _ => tape.matvec(w_out, h_dec)?,
        };
        graph.outputs.push(output);
        prev_skeleton = match (teacher, target) {
            (true, Some(tg)) => tape.constant_vec(tg.values[t].clone())?,
            _ => output,
        };
    }
    Ok(graph)
}

/// Encodes and decodes one sequence on a private tape and returns the values.
pub fn decode_sequence(
    model: &GaitModelDim,
    input: &DimensionSlice,
    target: Option<&DimensionSlice>,
    aux_rule: AuxRule,
    phase: Phase,
) -> Result<DecodeTrace> {
    let mut tape = Tape::new();
    let (encoded, last) = encode(&mut tape, model, input)?;
    let graph = decode(&mut tape, model, &encoded, last, target, aux_rule, phase)?;
    Ok(graph.trace(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::seq2seq::ModelConfig;
    use crate::skeleton_io::Dim;

    fn config(attention: AttentionMode, j: usize, k: usize, f: usize) -> ModelConfig {
        ModelConfig {
            joints: j,
            hidden: k,
            seq_len: f,
            window: 2,
            attention,
            projection_hidden: None,
        }
    }

    fn slice(f: usize, j: usize, seed: f64) -> DimensionSlice {
        DimensionSlice {
            dim: Dim::X,
            values: (0..f)
                .map(|t| (0..j).map(|i| ((t * j + i) as f64 * 0.37 + seed).sin()).collect())
                .collect(),
        }
    }

    #[test]
    fn mask_peaks_at_reversed_position() {
        let l = locality_mask(1, 6, 2).unwrap();
        assert_eq!(l[5], 1.0);
        assert!((l[3] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((l[3] - 0.13534).abs() < 1e-5);
        for t in 1..=6 {
            let l = locality_mask(t, 6, 2).unwrap();
            let p = 6 - t + 1;
            for k in 1..6 {
                if p > k && p + k <= 6 {
                    assert_eq!(l[p - k - 1], l[p + k - 1]);
                }
            }
        }
        assert!(locality_mask(0, 6, 2).is_err());
        assert!(locality_mask(7, 6, 2).is_err());
        assert!(locality_mask(1, 6, 0).is_err());
    }

    #[test]
    fn encode_shapes() {
        let m = GaitModelDim::init(Dim::X, &config(AttentionMode::Las, 3, 5, 4), 1).unwrap();
        let mut tape = Tape::new();
        let (h, _) = encode(&mut tape, &m, &slice(4, 3, 0.0)).unwrap();
        assert_eq!(h.len(), 4);
        assert!(h.iter().all(|&n| tape.value(n).len() == 5));
        assert!(encode(&mut tape, &m, &slice(3, 3, 0.0)).is_err());
        assert!(encode(&mut tape, &m, &slice(4, 2, 0.0)).is_err());
    }

    #[test]
    fn zero_weights_give_zero_states_and_outputs() {
        let mut m = GaitModelDim::init(Dim::X, &config(AttentionMode::None, 3, 4, 4), 1).unwrap();
        m.zero_weights();
        let tr = decode_sequence(&m, &slice(4, 3, 0.4), None, AuxRule::ModelOutput, Phase::Test).unwrap();
        assert!(tr.encoded.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.outputs.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.alignment.is_empty());
    }

    #[test]
    fn alignment_rows_sum_to_one_and_mask_shrinks() {
        for mode in [AttentionMode::Bas, AttentionMode::Mbas, AttentionMode::Las] {
            let m = GaitModelDim::init(Dim::X, &config(mode, 3, 4, 5), 9).unwrap();
            let tr = decode_sequence(&m, &slice(5, 3, 0.1), Some(&slice(5, 3, 0.9)), AuxRule::GroundTruthTarget, Phase::Train)
                .unwrap();
            assert_eq!(tr.alignment.len(), 5);
            for row in &tr.alignment {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for (a, m) in tr.alignment.iter().zip(&tr.masked) {
                for (x, y) in a.iter().zip(m) {
                    assert!(y <= x);
                }
            }
            assert_eq!(tr.masked.is_empty(), mode == AttentionMode::Bas);
        }
    }

    #[test]
    fn equal_encoder_states_give_uniform_alignment() {
        // Zero input weights and zero recurrent weights make every encoder
        // state the same.
        let mut m = GaitModelDim::init(Dim::X, &config(AttentionMode::Bas, 3, 4, 4), 3).unwrap();
        for name in ["encoder.w_x", "encoder.w_h"] {
            let id = m.store.id(name).unwrap();
            m.store.get_mut(id).value.fill(0.0);
        }
        let id = m.store.id("encoder.bias").unwrap();
        m.store.get_mut(id).value = Tensor::vector((0..16).map(|i| 0.1 * i as f64 - 0.5).collect());
        // A saturated-off forget gate stops the cell from accumulating.
        let b = m.store.get_mut(id).value.data_mut();
        for v in &mut b[4..8] {
            *v = -800.0;
        }
        let tr = decode_sequence(&m, &slice(4, 3, 0.0), None, AuxRule::ModelOutput, Phase::Test).unwrap();
        for h in &tr.encoded[1..] {
            for (x, y) in h.iter().zip(&tr.encoded[0]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        for (row, c) in tr.alignment.iter().zip(&tr.contexts) {
            for v in row {
                assert!((v - 0.25).abs() < 1e-9);
            }
            for (x, y) in c.iter().zip(&tr.encoded[0]) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn teacher_forcing_requires_target() {
        let m = GaitModelDim::init(Dim::X, &config(AttentionMode::Las, 3, 4, 4), 1).unwrap();
        let err = decode_sequence(&m, &slice(4, 3, 0.0), None, AuxRule::GroundTruthTarget, Phase::Train);
        assert!(err.is_err());
        let short = slice(3, 3, 0.0);
        assert!(decode_sequence(&m, &slice(4, 3, 0.0), Some(&short), AuxRule::ModelOutput, Phase::Test).is_err());
    }

    #[test]
    fn test_phase_ignores_target_values() {
        let m = GaitModelDim::init(Dim::X, &config(AttentionMode::Las, 3, 4, 4), 1).unwrap();
        let input = slice(4, 3, 0.0);
        let a = decode_sequence(&m, &input, Some(&slice(4, 3, 1.0)), AuxRule::GroundTruthTarget, Phase::Test).unwrap();
        let b = decode_sequence(&m, &input, Some(&slice(4, 3, 2.0)), AuxRule::GroundTruthTarget, Phase::Test).unwrap();
        assert_eq!(a, b);
        let c = decode_sequence(&m, &input, Some(&slice(4, 3, 2.0)), AuxRule::GroundTruthTarget, Phase::Train).unwrap();
        assert_ne!(a.outputs, c.outputs);
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    struct ScalarCell {
        wx: [f64; 4],
        wh: [f64; 4],
        b: [f64; 4],
    }

    impl ScalarCell {
        fn step(&self, x: &[f64], wx_extra: &[[f64; 4]], h: f64, c: f64) -> (f64, f64) {
            let mut z = [0.0; 4];
            for g in 0..4 {
                z[g] = self.wx[g] * x[0] + self.wh[g] * h + self.b[g];
                for (xi, w) in x[1..].iter().zip(wx_extra) {
                    z[g] += w[g] * xi;
                }
            }
            let (i, f, o, g) = (sig(z[0]), sig(z[1]), sig(z[2]), z[3].tanh());
            let c2 = f * c + i * g;
            (o * c2.tanh(), c2)
        }
    }

    #[test]
    fn scalar_mbas_pipeline_matches_oracle() {
        // K = 1, J = 1, f = 2, D = 2 (σ = 1).
        let cfg = ModelConfig {
            joints: 1,
            hidden: 1,
            seq_len: 2,
            window: 2,
            attention: AttentionMode::Mbas,
            projection_hidden: None,
        };
        let mut m = GaitModelDim::init(Dim::X, &cfg, 0).unwrap();
        let enc = ScalarCell {
            wx: [0.5, -0.3, 0.8, 1.1],
            wh: [0.2, 0.4, -0.6, 0.7],
            b: [0.1, 1.0, -0.2, 0.05],
        };
        let dec = ScalarCell {
            wx: [-0.4, 0.9, 0.3, -0.7],
            wh: [0.6, -0.1, 0.5, 0.2],
            b: [0.0, 1.0, 0.1, -0.3],
        };
        // Decoder input is [x; h̄], so w_x has a second column.
        let dec_bar = [[0.25, -0.35, 0.45, 0.15]];
        let w_att = [0.8, -0.6];
        let w_f = 1.3;
        let set = |m: &mut GaitModelDim, name: &str, shape: &[usize], v: Vec<f64>| {
            let id = m.store.id(name).unwrap();
            m.store.get_mut(id).value = Tensor::new(shape.to_vec(), v).unwrap();
        };
        set(&mut m, "encoder.w_x", &[4, 1], enc.wx.to_vec());
        set(&mut m, "encoder.w_h", &[4, 1], enc.wh.to_vec());
        set(&mut m, "encoder.bias", &[4], enc.b.to_vec());
        let mut dwx = Vec::new();
        for g in 0..4 {
            dwx.push(dec.wx[g]);
            dwx.push(dec_bar[0][g]);
        }
        set(&mut m, "decoder.w_x", &[4, 2], dwx);
        set(&mut m, "decoder.w_h", &[4, 1], dec.wh.to_vec());
        set(&mut m, "decoder.bias", &[4], dec.b.to_vec());
        set(&mut m, "attention.w_att", &[1, 2], w_att.to_vec());
        set(&mut m, "output.w_f", &[1, 1], vec![w_f]);

        let xs = [0.7, -1.2];
        let target = [-1.2, 0.7];

        // Oracle, train phase with ground-truth feedback.
        let (h1, c1) = enc.step(&[xs[0]], &[], 0.0, 0.0);
        let (h2, c2) = enc.step(&[xs[1]], &[], h1, c1);
        let hs = [h1, h2];
        let (mut h, mut c) = (h2, c2);
        let (mut x_prev, mut bar_prev) = (0.0, 0.0);
        let mut outs = Vec::new();
        let mut ctxs = Vec::new();
        for t in 1..=2usize {
            let (hn, cn) = dec.step(&[x_prev, bar_prev], &dec_bar, h, c);
            h = hn;
            c = cn;
            let e: Vec<f64> = hs.iter().map(|hj| (hj * h).exp()).collect();
            let s: f64 = e.iter().sum();
            let a: Vec<f64> = e.iter().map(|v| v / s).collect();
            let p = (2 - t + 1) as f64;
            let l: Vec<f64> = (1..=2).map(|j| (-(j as f64 - p).powi(2) / 2.0).exp()).collect();
            let ctx = hs[0] * a[0] * l[0] + hs[1] * a[1] * l[1];
            let bar = (w_att[0] * ctx + w_att[1] * h).tanh();
            outs.push(w_f * bar);
            ctxs.push(ctx);
            x_prev = target[t - 1];
            bar_prev = bar;
        }

        let input = DimensionSlice {
            dim: Dim::X,
            values: xs.iter().map(|&v| vec![v]).collect(),
        };
        let tgt = DimensionSlice {
            dim: Dim::X,
            values: target.iter().map(|&v| vec![v]).collect(),
        };
        let tr = decode_sequence(&m, &input, Some(&tgt), AuxRule::GroundTruthTarget, Phase::Train).unwrap();
        assert!((tr.encoded[0][0] - h1).abs() < 1e-12);
        assert!((tr.encoded[1][0] - h2).abs() < 1e-12);
        for t in 0..2 {
            assert!((tr.outputs[t][0] - outs[t]).abs() < 1e-12, "step {t}");
            assert!((tr.contexts[t][0] - ctxs[t]).abs() < 1e-12, "step {t}");
        }
    }
}
