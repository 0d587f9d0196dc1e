use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::GaitEncoding;
use crate::error::{Error, Result};
use crate::numerics::{softmax, Adam, AdamConfig, Checkpoint, NodeId, ParamId, ParamStore, Tape, Tensor};

/// How a sequence is classified from its features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Average the class distributions of the skeleton-level features.
    Ap,
    /// Classify the sequence-level feature once.
    Sc,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ap => "ap",
            Strategy::Sc => "sc",
        }
    }

    fn inputs(self, enc: &GaitEncoding) -> Vec<Vec<f64>> {
        match self {
            Strategy::Ap => enc.skeleton.clone(),
            Strategy::Sc => vec![enc.sequence_vector()],
        }
    }

    fn width(self, enc: &GaitEncoding) -> usize {
        match self {
            Strategy::Ap => enc.skeleton_width(),
            Strategy::Sc => enc.skeleton_width() * enc.len(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ap" => Ok(Strategy::Ap),
            "sc" => Ok(Strategy::Sc),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct RecognizerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            epochs: 60,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// One rectified hidden layer followed by a softmax over `C` identities.
#[derive(Clone, Debug)]
pub struct RecognitionNet {
    pub store: ParamStore,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub strategy: Strategy,
    pub input_width: usize,
    pub classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct NetMeta {
    strategy: Strategy,
    input_width: usize,
    hidden: usize,
    classes: usize,
}

impl RecognitionNet {
    pub fn init(input_width: usize, hidden: usize, classes: usize, strategy: Strategy, seed: u64) -> Result<Self> {
        if input_width == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidArgument("recognizer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let w1 = store.add_uniform("w1", &[hidden, input_width], 1.0 / (input_width as f64).sqrt(), &mut rng)?;
        let b1 = store.add("b1", Tensor::zeros(&[hidden]))?;
        let w2 = store.add_uniform("w2", &[classes, hidden], 1.0 / (hidden as f64).sqrt(), &mut rng)?;
        let b2 = store.add("b2", Tensor::zeros(&[classes]))?;
        Ok(Self {
            store,
            w1,
            b1,
            w2,
            b2,
            strategy,
            input_width,
            classes,
        })
    }

    pub fn hidden(&self) -> usize {
        self.store.value(self.w1).rows()
    }

    fn logits_node(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let w1 = tape.param(&self.store, self.w1);
        let b1 = tape.param(&self.store, self.b1);
        let w2 = tape.param(&self.store, self.w2);
        let b2 = tape.param(&self.store, self.b2);
        let h = tape.matvec(w1, x)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h)?;
        let o = tape.matvec(w2, h)?;
        tape.add(o, b2)
    }

    /// Class distribution for one input vector.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width {
            return Err(Error::shape(
                "recognizer",
                format!("input width {}, network expects {}", x.len(), self.input_width),
            ));
        }
        let w1 = self.store.value(self.w1);
        let b1 = self.store.value(self.b1).data();
        let w2 = self.store.value(self.w2);
        let b2 = self.store.value(self.b2).data();
        let h: Vec<f64> = (0..w1.rows())
            .map(|r| {
                let z: f64 = w1.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[r];
                z.max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..w2.rows())
            .map(|r| w2.row(r).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b2[r])
            .collect();
        softmax(&logits)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = NetMeta {
            strategy: self.strategy,
            input_width: self.input_width,
            hidden: self.hidden(),
            classes: self.classes,
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta)?);
        ck.push_store("", &self.store);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: NetMeta = serde_json::from_value(ck.config.clone())?;
        let mut net = Self::init(meta.input_width, meta.hidden, meta.classes, meta.strategy, 0)?;
        ck.restore_into("", &mut net.store)?;
        Ok(net)
    }
}

fn class_index(enc: &GaitEncoding, classes: usize) -> Result<usize> {
    match enc.label {
        Some(l) if (1..=classes).contains(&l) => Ok(l - 1),
        Some(l) => Err(Error::InvalidArgument(format!(
            "label {l} of {} outside 1..={classes}",
            enc.identity
        ))),
        None => Err(Error::InvalidArgument(format!("{} has no label", enc.identity))),
    }
}

/// Trains the recognizer on frozen encodings with minibatch cross-entropy.
/// Under AP every skeleton is a sample carrying its sequence's label.
/// Returns the network and the mean training loss of each epoch.
pub fn train_recognizer(
    encodings: &[GaitEncoding],
    classes: usize,
    strategy: Strategy,
    cfg: &RecognizerConfig,
) -> Result<(RecognitionNet, Vec<f64>)> {
    let first = encodings
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training encodings".into()))?;
    let width = strategy.width(first);
    let mut samples = Vec::new();
    for e in encodings {
        if strategy.width(e) != width {
            return Err(Error::shape("train_recognizer", "encodings differ in width"));
        }
        let y = class_index(e, classes)?;
        samples.extend(strategy.inputs(e).into_iter().map(|x| (x, y)));
    }
    let mut net = RecognitionNet::init(width, cfg.hidden, classes, strategy, cfg.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &net.store,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(1);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut tape = Tape::new();
            let mut terms = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (x, y) = &samples[i];
                let x = tape.constant_vec(x.clone())?;
                let logits = net.logits_node(&mut tape, x)?;
                let lse = tape.log_sum_exp(logits)?;
                let picked = tape.slice(logits, *y, 1)?;
                let picked = tape.sum(picked)?;
                terms.push(tape.sub(lse, picked)?);
            }
            let sum = tape.add_all(&terms)?;
            let loss = tape.scale(sum, 1.0 / chunk.len() as f64)?;
            epoch_loss += tape.scalar(sum);
            net.store.zero_grad();
            tape.backward(loss)?.accumulate_into(&mut net.store);
            adam.step(&mut net.store)?;
        }
        losses.push(epoch_loss / samples.len() as f64);
    }
    Ok((net, losses))
}

/// Class distribution of one sequence: the mean of the skeleton-level
/// distributions under AP, a single distribution under SC.
pub fn predict_sequence(net: &RecognitionNet, enc: &GaitEncoding) -> Result<Vec<f64>> {
    let inputs = net.strategy.inputs(enc);
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty encoding".into()));
    }
    let mut mean = vec![0.0; net.classes];
    for x in &inputs {
        for (m, p) in mean.iter_mut().zip(net.probabilities(x)?) {
            *m += p;
        }
    }
    let n = inputs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSource, Variant};
    use crate::skeleton_io::PretextTask;
    use rand::Rng;

    fn enc(label: usize, rows: Vec<Vec<f64>>) -> GaitEncoding {
        GaitEncoding {
            identity: format!("id{label}"),
            label: Some(label),
            rec: 0,
            seq_index: 0,
            variant: Variant::Age,
            source: FeatureSource::Context,
            tasks: vec![PretextTask::ReverseReconstruction],
            skeleton: rows,
        }
    }

    fn clusters(per_class: usize, classes: usize, seed: u64) -> Vec<GaitEncoding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for c in 1..=classes {
            for _ in 0..per_class {
                let rows = (0..3)
                    .map(|_| {
                        (0..6)
                            .map(|d| if d == c { 3.0 } else { 0.0 } + rng.random_range(-0.3..0.3))
                            .collect()
                    })
                    .collect();
                out.push(enc(c, rows));
            }
        }
        out
    }

    fn accuracy(net: &RecognitionNet, data: &[GaitEncoding]) -> f64 {
        let hits = data
            .iter()
            .filter(|e| {
                let p = predict_sequence(net, e).unwrap();
                let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                best + 1 == e.label.unwrap()
            })
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn separable_clusters_are_learned() {
        let data = clusters(20, 5, 1);
        for strategy in [Strategy::Ap, Strategy::Sc] {
            let cfg = RecognizerConfig {
                hidden: 32,
                epochs: 30,
                lr: 5e-3,
                ..RecognizerConfig::default()
            };
            let before: Vec<_> = data.iter().map(|e| e.skeleton.clone()).collect();
            let (net, losses) = train_recognizer(&data, 5, strategy, &cfg).unwrap();
            assert!(accuracy(&net, &data) >= 0.99);
            assert!(losses.last().unwrap() < &losses[0]);
            let after: Vec<_> = data.iter().map(|e| e.skeleton.clone()).collect();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn zero_epochs_is_near_uniform() {
        let data = clusters(4, 5, 2);
        let cfg = RecognizerConfig {
            epochs: 0,
            ..RecognizerConfig::default()
        };
        let (net, losses) = train_recognizer(&data, 5, Strategy::Ap, &cfg).unwrap();
        assert!(losses.is_empty());
        let p = predict_sequence(&net, &data[0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 0.15));
    }

    #[test]
    fn training_is_deterministic() {
        let data = clusters(5, 3, 3);
        let cfg = RecognizerConfig {
            hidden: 8,
            epochs: 3,
            ..RecognizerConfig::default()
        };
        let (a, la) = train_recognizer(&data, 3, Strategy::Sc, &cfg).unwrap();
        let (b, lb) = train_recognizer(&data, 3, Strategy::Sc, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.store.checksum(), b.store.checksum());
    }

    #[test]
    fn label_out_of_range_rejected() {
        let data = clusters(2, 3, 4);
        assert!(train_recognizer(&data, 2, Strategy::Ap, &RecognizerConfig::default()).is_err());
    }

    #[test]
    fn ap_averages_and_is_order_free() {
        let net = RecognitionNet::init(4, 6, 3, Strategy::Ap, 9).unwrap();
        let row = vec![0.3, -0.2, 0.5, 1.0];
        let same = enc(1, vec![row.clone(); 4]);
        let single = net.probabilities(&row).unwrap();
        let p = predict_sequence(&net, &same).unwrap();
        for (a, b) in p.iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let rows = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, -1.0, 3.0]];
        let fwd = predict_sequence(&net, &enc(1, rows.clone())).unwrap();
        let rev = predict_sequence(&net, &enc(1, rows.iter().rev().cloned().collect())).unwrap();
        for (a, b) in fwd.iter().zip(&rev) {
            assert!((a - b).abs() < 1e-12);
        }

        let sc = RecognitionNet::init(12, 6, 3, Strategy::Sc, 9).unwrap();
        let f = predict_sequence(&sc, &enc(1, rows.clone())).unwrap();
        let r = predict_sequence(&sc, &enc(1, rows.into_iter().rev().collect())).unwrap();
        assert_ne!(f, r);
        assert!(predict_sequence(&sc, &same).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = RecognitionNet::init(4, 6, 3, Strategy::Sc, 1).unwrap();
        let back = RecognitionNet::from_checkpoint(&net.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.store.checksum(), net.store.checksum());
        assert_eq!(back.strategy, Strategy::Sc);
    }
}
