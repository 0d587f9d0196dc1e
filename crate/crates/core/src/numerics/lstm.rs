use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights of one LSTM cell.
///
/// Gate blocks are stacked row-wise in the order input, forget, output,
/// candidate, so `w_x` is `[4K, D_in]`, `w_h` is `[4K, K]` and `bias` is `[4K]`.
#[derive(Clone, Debug)]
pub struct LstmCellParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmCellParams {
    /// Registers a fresh cell under `prefix`: uniform(-1/√K, 1/√K) weights,
    /// zero biases except +1 on the forget gate.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::InvalidArgument("LSTM sizes must be positive".into()));
        }
        let k = hidden_size;
        let bound = 1.0 / (k as f64).sqrt();
        let w_x = store.add_uniform(format!("{prefix}.w_x"), &[4 * k, input_size], bound, rng)?;
        let w_h = store.add_uniform(format!("{prefix}.w_h"), &[4 * k, k], bound, rng)?;
        let mut b = vec![0.0; 4 * k];
        b[k..2 * k].iter_mut().for_each(|v| *v = 1.0);
        let bias = store.add(format!("{prefix}.bias"), Tensor::vector(b))?;
        Ok(Self {
            w_x,
            w_h,
            bias,
            input_size,
            hidden_size,
        })
    }
}

/// Recurrent state `(hidden, cell)`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, hidden_size: usize) -> Result<Self> {
        let hidden = tape.constant(Tensor::zeros(&[hidden_size]))?;
        let cell = tape.constant(Tensor::zeros(&[hidden_size]))?;
        Ok(Self { hidden, cell })
    }
}

/// One LSTM recurrence step.
///
/// ```text
/// i = σ(W_xi x + W_hi h + b_i)    f = σ(W_xf x + W_hf h + b_f)
/// o = σ(W_xo x + W_ho h + b_o)    g = tanh(W_xg x + W_hg h + b_g)
/// c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &LstmCellParams,
    input: NodeId,
    state: LstmState,
) -> Result<LstmState> {
    let k = params.hidden_size;
    let in_len = tape.value(input).len();
    if in_len != params.input_size {
        return Err(Error::shape(
            "lstm_step",
            format!("input length {in_len}, cell expects {}", params.input_size),
        ));
    }
    if tape.value(state.hidden).len() != k || tape.value(state.cell).len() != k {
        return Err(Error::shape("lstm_step", format!("state size differs from K={k}")));
    }
    let w_x = tape.param(store, params.w_x);
    let w_h = tape.param(store, params.w_h);
    let b = tape.param(store, params.bias);

    let zx = tape.matvec(w_x, input)?;
    let zh = tape.matvec(w_h, state.hidden)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add(z, b)?;

    let zi = tape.slice(z, 0, k)?;
    let zf = tape.slice(z, k, k)?;
    let zo = tape.slice(z, 2 * k, k)?;
    let zg = tape.slice(z, 3 * k, k)?;
    let i = tape.sigmoid(zi)?;
    let f = tape.sigmoid(zf)?;
    let o = tape.sigmoid(zo)?;
    let g = tape.tanh(zg)?;

    let keep = tape.mul(f, state.cell)?;
    let write = tape.mul(i, g)?;
    let cell = tape.add(keep, write)?;
    let squashed = tape.tanh(cell)?;
    let hidden = tape.mul(o, squashed)?;
    Ok(LstmState { hidden, cell })
}
