use super::params::ParamStore;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so entries whose true gradient
/// is numerically zero are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Worst-case agreement for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamGradError {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub params: Vec<ParamGradError>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamGradError> {
        self.params
            .iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
    }
}

/// Compares reverse-mode gradients against central finite differences.
///
/// `loss_fn` builds the scalar loss on a fresh tape from the current store.
/// Every non-frozen parameter entry is perturbed by `±epsilon`; frozen
/// parameters are left out of the report.
pub fn grad_check<F>(
    store: &mut ParamStore,
    epsilon: f64,
    tolerance: f64,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tolerance}")));
    }

    store.zero_grad();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss)?.accumulate_into(store);
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        Ok(tape.scalar(loss))
    };

    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::new();
    for id in ids {
        if store.get(id).frozen {
            continue;
        }
        let n = store.get(id).value.len();
        let mut worst_rel: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + epsilon;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - epsilon;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[id.index()][i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            worst_abs = worst_abs.max(abs);
            worst_rel = worst_rel.max(rel);
        }
        params.push(ParamGradError {
            name: store.get(id).name.clone(),
            entries: n,
            max_relative_error: worst_rel,
            max_abs_error: worst_abs,
        });
    }
    store.zero_grad();
    Ok(GradCheckReport {
        epsilon,
        tolerance,
        params,
    })
}
