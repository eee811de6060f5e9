use super::TrainConfig;
use crate::error::{Error, Result};
use crate::head::HeadParams;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: HeadParams,
    pub v: HeadParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &HeadParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
///
/// Gradients are checked before anything is touched, so on error both the
/// parameters and the state are unchanged.
pub fn adam_step(
    params: &mut HeadParams,
    grads: &HeadParams,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::InvalidTrainConfig(
            "parameter, gradient and state shapes differ".into(),
        ));
    }
    // finite g and g^2 keep m, v and the step finite
    let ok = grads
        .tensors()
        .iter()
        .all(|t| t.iter().all(|g| g.is_finite() && (g * g).is_finite()));
    if !ok || !config.learning_rate.is_finite() {
        return Err(Error::NonFiniteValue("update"));
    }

    let (b1, b2) = (config.beta1, config.beta2);
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;

    let mut m_all = state.m.tensors_mut();
    let mut v_all = state.v.tensors_mut();
    for (k, (theta, g)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .enumerate()
    {
        let m = &mut *m_all[k];
        let v = &mut *v_all[k];
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
