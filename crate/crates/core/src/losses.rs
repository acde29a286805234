//! Wasserstein critic/generator objectives with gradient penalty, plus the
//! attribute reconstruction term.
//!
//! Every function records onto a caller-owned [`Tape`] and returns scalar
//! nodes in minimization form. Fake batches passed as plain matrices are
//! detached from their generator by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundNetwork, Network};
use crate::numcore::{Matrix, NodeId, Rng, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Gradient-penalty coefficient.
    pub gp_lambda: f64,
    /// Weight of the attribute reconstruction term.
    pub rec_beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gp_lambda: 10.0,
            rec_beta: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gp_lambda >= 0.0 && self.gp_lambda.is_finite()) {
            return Err(Error::Config(format!("gp_lambda {} must be >= 0", self.gp_lambda)));
        }
        if !(self.rec_beta >= 0.0 && self.rec_beta.is_finite()) {
            return Err(Error::Config(format!("rec_beta {} must be >= 0", self.rec_beta)));
        }
        Ok(())
    }
}

/// Components of a critic objective.
#[derive(Clone, Copy, Debug)]
pub struct CriticLoss {
    /// `-(wasserstein) + gp_lambda * penalty`, the quantity minimized.
    pub total: NodeId,
    /// `mean D(real) - mean D(fake)`.
    pub wasserstein: NodeId,
    /// Unweighted gradient penalty.
    pub penalty: NodeId,
}

/// `alpha_i * real_i + (1 - alpha_i) * fake_i` for given per-row weights.
pub fn interpolate_with(real: &Matrix, fake: &Matrix, alphas: &[f64]) -> Result<Matrix> {
    if real.shape() != fake.shape() {
        return Err(Error::dim("interpolate", real.shape(), fake.shape()));
    }
    if alphas.len() != real.rows() {
        return Err(Error::dim("interpolate alphas", real.shape(), (alphas.len(), 1)));
    }
    let mut out = fake.clone();
    for (i, &a) in alphas.iter().enumerate() {
        for (o, &r) in out.row_mut(i).iter_mut().zip(real.row(i)) {
            *o = a * r + (1.0 - a) * *o;
        }
    }
    Ok(out)
}

/// Random interpolates with one `alpha ~ U(0,1)` per row.
pub fn interpolate(real: &Matrix, fake: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    if real.shape() != fake.shape() {
        return Err(Error::dim("interpolate", real.shape(), fake.shape()));
    }
    let alphas: Vec<f64> = (0..real.rows()).map(|_| rng.uniform()).collect();
    interpolate_with(real, fake, &alphas)
}

/// `mean_i (|grad_x D(x_i)| - 1)^2`, with the gradient taken over the
/// critic's whole input row. The result stays differentiable with respect
/// to the critic parameters.
pub fn gradient_penalty(tape: &mut Tape, critic: &BoundNetwork, x_hat: &Matrix) -> Result<NodeId> {
    let x = tape.leaf(x_hat.clone());
    let scores = critic.forward(tape, x)?;
    // Rows are independent, so d(sum)/dx_i is the per-row input gradient.
    let total = tape.sum_all(scores)?;
    let grad = tape.backward(total, &[x])?[0];
    let norms = tape.l2_norm_rows(grad)?;
    let dev = tape.shift(norms, -1.0)?;
    let sq = tape.square(dev)?;
    tape.mean_all(sq)
}

fn critic_objective(
    tape: &mut Tape,
    critic: &BoundNetwork,
    real_in: &Matrix,
    fake_in: &Matrix,
    x_hat: &Matrix,
    weights: &LossWeights,
) -> Result<CriticLoss> {
    let real = tape.leaf(real_in.clone());
    let fake = tape.leaf(fake_in.clone());
    let real_scores = critic.forward(tape, real)?;
    let fake_scores = critic.forward(tape, fake)?;
    let real_mean = tape.mean_all(real_scores)?;
    let fake_mean = tape.mean_all(fake_scores)?;
    let wasserstein = tape.sub(real_mean, fake_mean)?;
    let penalty = gradient_penalty(tape, critic, x_hat)?;
    let neg_w = tape.scale(wasserstein, -1.0)?;
    let weighted = tape.scale(penalty, weights.gp_lambda)?;
    let total = tape.add(neg_w, weighted)?;
    Ok(CriticLoss {
        total,
        wasserstein,
        penalty,
    })
}

/// Unconditional critic objective on detached fakes.
pub fn critic_loss_unconditional(
    tape: &mut Tape,
    d0: &BoundNetwork,
    real: &Matrix,
    fake: &Matrix,
    weights: &LossWeights,
    rng: &mut Rng,
) -> Result<CriticLoss> {
    let x_hat = interpolate(real, fake, rng)?;
    critic_objective(tape, d0, real, fake, &x_hat, weights)
}

/// `-mean D(fake)`; `fake` should carry gradients to the generator.
pub fn generator_loss_unconditional(tape: &mut Tape, d0: &BoundNetwork, fake: NodeId) -> Result<NodeId> {
    let scores = d0.forward(tape, fake)?;
    let mean = tape.mean_all(scores)?;
    tape.scale(mean, -1.0)
}

/// Conditional critic objective. Rows of `real_x`, `fake_x` and `c` are
/// aligned; only the feature block is interpolated, the embedding block is
/// carried through unchanged.
pub fn critic_loss_conditional(
    tape: &mut Tape,
    dc: &BoundNetwork,
    real_x: &Matrix,
    fake_x: &Matrix,
    c: &Matrix,
    weights: &LossWeights,
    rng: &mut Rng,
) -> Result<CriticLoss> {
    if real_x.rows() != c.rows() {
        return Err(Error::dim("critic_loss_conditional", real_x.shape(), c.shape()));
    }
    let mixed = interpolate(real_x, fake_x, rng)?;
    let x_hat = mixed.concat_cols(c)?;
    let real_in = real_x.concat_cols(c)?;
    let fake_in = fake_x.concat_cols(c)?;
    critic_objective(tape, dc, &real_in, &fake_in, &x_hat, weights)
}

/// `-mean Dc(fake || c)`.
pub fn generator_loss_conditional(tape: &mut Tape, dc: &BoundNetwork, fake: NodeId, c: &Matrix) -> Result<NodeId> {
    let c = tape.leaf(c.clone());
    let input = tape.concat_cols(fake, c)?;
    let scores = dc.forward(tape, input)?;
    let mean = tape.mean_all(scores)?;
    tape.scale(mean, -1.0)
}

/// `rec_beta * mean_i |c_i - A(x_i)|^2`. The regressor is bound as fresh
/// leaves that are never differentiated, so it stays frozen.
pub fn reconstruction_loss(
    tape: &mut Tape,
    regressor: &Network,
    x_gen: NodeId,
    c: &Matrix,
    weights: &LossWeights,
) -> Result<NodeId> {
    let a = regressor.bind(tape);
    let recon = a.forward(tape, x_gen)?;
    if tape.value(recon).shape() != c.shape() {
        return Err(Error::dim("reconstruction_loss", tape.value(recon).shape(), c.shape()));
    }
    let target = tape.leaf(c.clone());
    let diff = tape.sub(target, recon)?;
    let sq = tape.square(diff)?;
    let per_row = tape.sum_cols(sq)?;
    let mean = tape.mean_all(per_row)?;
    tape.scale(mean, weights.rec_beta)
}

/// Critic and generator sides of the cross branch: conditional fakes judged
/// by the unconditional critic.
#[derive(Clone, Copy, Debug)]
pub struct CrossBranchLosses {
    pub critic: CriticLoss,
    /// Wasserstein generator term only; callers add the reconstruction term.
    pub generator: NodeId,
}

/// Cross-branch critic objective; same functional form as the
/// unconditional one, with fakes from Gc.
pub fn cross_branch_critic_loss(
    tape: &mut Tape,
    d0: &BoundNetwork,
    real_unseen: &Matrix,
    fake_cond: &Matrix,
    weights: &LossWeights,
    rng: &mut Rng,
) -> Result<CriticLoss> {
    critic_loss_unconditional(tape, d0, real_unseen, fake_cond, weights, rng)
}

pub fn cross_branch_generator_loss(tape: &mut Tape, d0: &BoundNetwork, fake_cond: NodeId) -> Result<NodeId> {
    generator_loss_unconditional(tape, d0, fake_cond)
}

/// Both cross-branch objectives for one batch. The critic side sees a
/// detached copy of `fake_cond`.
pub fn cross_branch_losses(
    tape: &mut Tape,
    d0: &BoundNetwork,
    real_unseen: &Matrix,
    fake_cond: NodeId,
    weights: &LossWeights,
    rng: &mut Rng,
) -> Result<CrossBranchLosses> {
    let detached = tape.value(fake_cond).clone();
    let critic = cross_branch_critic_loss(tape, d0, real_unseen, &detached, weights, rng)?;
    let generator = cross_branch_generator_loss(tape, d0, fake_cond)?;
    Ok(CrossBranchLosses { critic, generator })
}
