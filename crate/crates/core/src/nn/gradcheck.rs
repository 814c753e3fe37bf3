//! Central finite-difference gradient checking against the tape's
//! reverse-mode adjoints. The numeric side only reruns the forward closure,
//! so it stays independent of the backward implementation it validates.

use crate::error::Result;
use crate::nn::params::ParamStore;
use crate::nn::tensor::{Tape, Tid};

/// Worst observed comparison across all checked parameter scalars.
#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Compares analytic gradients of `forward`'s scalar loss with central
/// finite differences over every parameter scalar in `store`.
///
/// `forward` must be deterministic in the parameter values; it may mutate
/// auxiliary state (like running statistics) as long as that state does not
/// feed back into the same call's output.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    mut forward: F,
    fd_step: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Tid>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = forward(store, &mut tape)?;
    tape.backward(loss)?;
    tape.write_param_grads(store);

    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.clone()).collect();
    let mut report = GradCheckReport::default();
    for idx in 0..store.len() {
        for i in 0..store.entry(idx).data.len() {
            let original = store.entry(idx).data[i];
            let h = fd_step * original.abs().max(1.0);
            store.entry_mut(idx).data[i] = original + h;
            let up = eval_loss(store, &mut forward)?;
            store.entry_mut(idx).data[i] = original - h;
            let down = eval_loss(store, &mut forward)?;
            store.entry_mut(idx).data[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[idx][i];
            let abs_err = (a - numeric).abs();
            let rel = abs_err / a.abs().max(numeric.abs()).max(1e-6);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = format!("{}[{}]", store.entry(idx).name, i);
            }
        }
    }
    Ok(report)
}

fn eval_loss<F>(store: &ParamStore, forward: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Tid>,
{
    let mut tape = Tape::new();
    let loss = forward(store, &mut tape)?;
    Ok(tape.data(loss)[0])
}
