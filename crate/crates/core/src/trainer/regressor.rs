//! Closed-form ridge fit of the attribute regressor.

use crate::error::{Error, Result};
use crate::model::{regressor_network, Network};
use crate::numcore::linalg::solve_spd;
use crate::numcore::Matrix;

/// Minimizes `sum_i |c_i - (x_i W + b)|^2 + ridge * |W|_F^2` with an
/// unpenalized bias, via the normal equations on centered data.
pub fn pretrain_regressor(features: &Matrix, embeddings: &Matrix, ridge: f64) -> Result<Network> {
    if features.rows() != embeddings.rows() {
        return Err(Error::dim("pretrain_regressor", features.shape(), embeddings.shape()));
    }
    if features.rows() == 0 {
        return Err(Error::Config("cannot fit the regressor on zero rows".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge {ridge} must be finite and >= 0")));
    }
    let x_mean = features.mean_rows();
    let c_mean = embeddings.mean_rows();
    let xc = features.sub(&x_mean.broadcast_rows(features.rows())?)?;
    let cc = embeddings.sub(&c_mean.broadcast_rows(embeddings.rows())?)?;
    let mut gram = xc.matmul_t(true, &xc, false)?;
    for i in 0..gram.rows() {
        gram.set(i, i, gram.get(i, i) + ridge);
    }
    let rhs = xc.matmul_t(true, &cc, false)?;
    let weight = solve_spd(&gram, &rhs).map_err(|e| match e {
        Error::Numeric(msg) if ridge == 0.0 => Error::Numeric(format!(
            "{msg}; the features are rank deficient, use ridge > 0"
        )),
        other => other,
    })?;
    let bias = c_mean.sub(&x_mean.matmul(&weight)?)?;
    regressor_network(weight, bias)
}

/// Value of the ridge objective for a linear regressor.
pub fn regressor_objective(a: &Network, features: &Matrix, embeddings: &Matrix, ridge: f64) -> Result<f64> {
    let pred = a.forward(features)?;
    let residual = embeddings.sub(&pred)?;
    Ok(residual.norm_sq() + ridge * a.layers()[0].weight.norm_sq())
}
