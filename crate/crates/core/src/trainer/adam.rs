//! Bias-corrected adaptive-moment optimizer.

use crate::error::{Error, Result};
use crate::model::Network;
use crate::numcore::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Moment accumulators for one parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn for_shapes(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let m: Vec<Matrix> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        OptimizerState {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::for_shapes(net.params().map(Matrix::shape))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.m, &self.v)
    }
}

/// One update of `params` in place. `names` label parameters in errors.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut OptimizerState,
    hp: &AdamParams,
    names: &dyn Fn(usize) -> String,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Usage(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient for {}", names(i))));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - hp.beta1.powf(t);
    let c2 = 1.0 - hp.beta2.powf(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

/// Applies [`adam_step`] to all of a network's parameters.
pub fn adam_step_network(
    net: &mut Network,
    grads: &[Matrix],
    state: &mut OptimizerState,
    hp: &AdamParams,
    name: &str,
) -> Result<()> {
    let mut params: Vec<&mut Matrix> = net.params_mut().collect();
    let label = |i: usize| format!("{name}.layer{}.{}", i / 2, if i % 2 == 0 { "weight" } else { "bias" });
    adam_step(&mut params, grads, state, hp, &label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64) -> AdamParams {
        AdamParams {
            learning_rate: lr,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }

    fn none(_: usize) -> String {
        "w".into()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Matrix::from_rows(&[[1.5, -2.0]]);
        let before = w.clone();
        let mut s = OptimizerState::for_shapes([(1, 2)]);
        for _ in 0..3 {
            adam_step(&mut [&mut w], &[Matrix::zeros(1, 2)], &mut s, &hp(0.1), &none).unwrap();
        }
        assert!(w.bitwise_eq(&before));
        assert_eq!(s.step(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Matrix::scalar(0.0);
        let mut s = OptimizerState::for_shapes([(1, 1)]);
        adam_step(&mut [&mut w], &[Matrix::scalar(1.0)], &mut s, &hp(1e-3), &none).unwrap();
        assert!((w.get(0, 0) + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = Matrix::scalar(0.0);
        let mut s = OptimizerState::for_shapes([(1, 1)]);
        for _ in 0..50 {
            let g = Matrix::scalar(2.0 * (w.get(0, 0) - 3.0));
            adam_step(&mut [&mut w], &[g], &mut s, &hp(0.1), &none).unwrap();
        }
        let err = (w.get(0, 0) - 3.0).abs();
        assert!(err < 0.1, "|w - 3| = {err}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut w = Matrix::scalar(0.0);
        let mut s = OptimizerState::for_shapes([(1, 1)]);
        let err = adam_step(&mut [&mut w], &[Matrix::scalar(f64::NAN)], &mut s, &hp(0.1), &|_| "gc.layer0.bias".into())
            .unwrap_err();
        assert!(err.to_string().contains("gc.layer0.bias"));
        assert_eq!(s.step(), 0);
        assert!(adam_step(&mut [&mut w], &[Matrix::zeros(1, 2)], &mut s, &hp(0.1), &none).is_err());
    }
}
