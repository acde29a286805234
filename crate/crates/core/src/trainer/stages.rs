//! The three training stages and their single-network update steps.
//!
//! Every generator step is preceded by `k` critic steps, each on a fresh
//! batch. A stage runs `batches_per_epoch` generator steps per epoch.

use super::adam::{adam_step_network, AdamParams, OptimizerState};
use super::config::{RecTarget, TrainConfig};
use super::telemetry::{Net, Telemetry};
use crate::data::{BatchSampler, ClassId, TrainingView};
use crate::error::{Error, Result};
use crate::losses::{
    critic_loss_conditional, critic_loss_unconditional, cross_branch_critic_loss, cross_branch_generator_loss,
    generator_loss_conditional, generator_loss_unconditional, reconstruction_loss,
};
use crate::model::{generate_conditional, generate_unconditional, DecGan, Network};
use crate::numcore::{Matrix, NodeId, Rng, Tape};

/// Moment state for each trainable network, kept across stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub g1: OptimizerState,
    pub g2: OptimizerState,
    pub gc: OptimizerState,
    pub d0: OptimizerState,
    pub dc: OptimizerState,
}

impl Optimizers {
    pub fn new(m: &DecGan) -> Self {
        Optimizers {
            g1: OptimizerState::for_network(&m.g1),
            g2: OptimizerState::for_network(&m.g2),
            gc: OptimizerState::for_network(&m.gc),
            d0: OptimizerState::for_network(&m.d0),
            dc: OptimizerState::for_network(&m.dc),
        }
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub models: DecGan,
    /// Frozen attribute regressor used by the reconstruction term.
    pub regressor: Network,
    pub optimizers: Optimizers,
    pub telemetry: Telemetry,
}

impl TrainState {
    pub fn new(models: DecGan, regressor: Network) -> Self {
        TrainState {
            optimizers: Optimizers::new(&models),
            models,
            regressor,
            telemetry: Telemetry::new(),
        }
    }
}

/// Critic that judges the conditional generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Judge {
    Dc,
    D0,
}

fn adam_params(config: &TrainConfig, stage: u8) -> AdamParams {
    AdamParams {
        learning_rate: config.stage_learning_rate(stage),
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
    }
}

fn gradients(tape: &mut Tape, root: NodeId, wrt: &[NodeId]) -> Result<Vec<Matrix>> {
    let ids = tape.backward(root, wrt)?;
    Ok(ids.into_iter().map(|id| tape.value(id).clone()).collect())
}

/// One D0 update against unconditional fakes. Returns (wasserstein, penalty).
fn d0_step(st: &mut TrainState, real: &Matrix, config: &TrainConfig, stage: u8, rng: &mut Rng) -> Result<(f64, f64)> {
    let z = st.models.sample_noise(real.rows(), rng);
    let fake = generate_unconditional(&st.models.g1, &st.models.g2, &z)?;
    let mut tape = Tape::new();
    let d0 = st.models.d0.bind(&mut tape);
    let loss = critic_loss_unconditional(&mut tape, &d0, real, &fake, &config.loss, rng)?;
    let grads = gradients(&mut tape, loss.total, &d0.param_nodes())?;
    adam_step_network(&mut st.models.d0, &grads, &mut st.optimizers.d0, &adam_params(config, stage), "d0")?;
    st.telemetry.count_update(stage, Net::D0);
    Ok((tape.scalar(loss.wasserstein), tape.scalar(loss.penalty)))
}

/// One joint update of G1 and G2 through D0.
fn g0_step(st: &mut TrainState, batch: usize, config: &TrainConfig, stage: u8, rng: &mut Rng) -> Result<f64> {
    let z = st.models.sample_noise(batch, rng);
    let mut tape = Tape::new();
    let g1 = st.models.g1.bind(&mut tape);
    let g2 = st.models.g2.bind(&mut tape);
    let d0 = st.models.d0.bind(&mut tape);
    let z = tape.leaf(z);
    let s = g1.forward(&mut tape, z)?;
    let x = g2.forward(&mut tape, s)?;
    let loss = generator_loss_unconditional(&mut tape, &d0, x)?;
    let (p1, p2) = (g1.param_nodes(), g2.param_nodes());
    let mut grads = gradients(&mut tape, loss, &[p1.as_slice(), p2.as_slice()].concat())?;
    let grads2 = grads.split_off(p1.len());
    let hp = adam_params(config, stage);
    adam_step_network(&mut st.models.g1, &grads, &mut st.optimizers.g1, &hp, "g1")?;
    adam_step_network(&mut st.models.g2, &grads2, &mut st.optimizers.g2, &hp, "g2")?;
    st.telemetry.count_update(stage, Net::G0);
    Ok(tape.scalar(loss))
}

/// Conditional fakes `Gc(prior(z) || c)` with no gradient.
fn conditional_fakes(models: &DecGan, c: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    let z = models.sample_noise(c.rows(), rng);
    let s = models.prior_from_noise(&z)?;
    generate_conditional(&models.gc, &s, c)
}

/// One Dc update on a labeled real batch.
fn dc_step(
    st: &mut TrainState,
    real: &Matrix,
    c: &Matrix,
    config: &TrainConfig,
    stage: u8,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let fake = conditional_fakes(&st.models, c, rng)?;
    let mut tape = Tape::new();
    let dc = st.models.dc.bind(&mut tape);
    let loss = critic_loss_conditional(&mut tape, &dc, real, &fake, c, &config.loss, rng)?;
    let grads = gradients(&mut tape, loss.total, &dc.param_nodes())?;
    adam_step_network(&mut st.models.dc, &grads, &mut st.optimizers.dc, &adam_params(config, stage), "dc")?;
    st.telemetry.count_update(stage, Net::Dc);
    Ok((tape.scalar(loss.wasserstein), tape.scalar(loss.penalty)))
}

/// One D0 update against conditional fakes for the given embeddings.
fn d0_cross_step(
    st: &mut TrainState,
    real: &Matrix,
    c: &Matrix,
    config: &TrainConfig,
    stage: u8,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let fake = conditional_fakes(&st.models, c, rng)?;
    let mut tape = Tape::new();
    let d0 = st.models.d0.bind(&mut tape);
    let loss = cross_branch_critic_loss(&mut tape, &d0, real, &fake, &config.loss, rng)?;
    let grads = gradients(&mut tape, loss.total, &d0.param_nodes())?;
    adam_step_network(&mut st.models.d0, &grads, &mut st.optimizers.d0, &adam_params(config, stage), "d0")?;
    st.telemetry.count_update(stage, Net::D0);
    Ok((tape.scalar(loss.wasserstein), tape.scalar(loss.penalty)))
}

/// Gradient of the conditional generator objective with respect to Gc (and
/// G1 when `train_prior`). Returns (gc grads, g1 grads, adversarial, reconstruction).
#[allow(clippy::too_many_arguments)]
fn gc_gradients(
    st: &TrainState,
    c: &Matrix,
    real: Option<&Matrix>,
    judge: Judge,
    train_prior: bool,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<(Vec<Matrix>, Vec<Matrix>, f64, f64)> {
    let m = &st.models;
    let z = m.sample_noise(c.rows(), rng);
    let mut tape = Tape::new();
    let gc = m.gc.bind(&mut tape);
    let (s, g1_params) = if train_prior {
        let g1 = m.g1.bind(&mut tape);
        let z = tape.leaf(z);
        (g1.forward(&mut tape, z)?, g1.param_nodes())
    } else {
        (tape.leaf(m.prior_from_noise(&z)?), Vec::new())
    };
    let c_node = tape.leaf(c.clone());
    let input = tape.concat_cols(s, c_node)?;
    let x = gc.forward(&mut tape, input)?;
    let adv = match judge {
        Judge::Dc => {
            let dc = m.dc.bind(&mut tape);
            generator_loss_conditional(&mut tape, &dc, x, c)?
        }
        Judge::D0 => {
            let d0 = m.d0.bind(&mut tape);
            cross_branch_generator_loss(&mut tape, &d0, x)?
        }
    };
    let rec_input = match (config.rec_target, real) {
        (RecTarget::Interpolated, Some(real)) => {
            let alphas: Vec<f64> = (0..real.rows()).map(|_| rng.uniform()).collect();
            let a = Matrix::from_fn(real.rows(), real.cols(), |i, _| alphas[i]);
            let real_part = tape.leaf(real.hadamard(&a)?);
            let one_minus = tape.leaf(a.map(|a| 1.0 - a));
            let fake_part = tape.mul(x, one_minus)?;
            tape.add(real_part, fake_part)?
        }
        _ => x,
    };
    let rec = reconstruction_loss(&mut tape, &st.regressor, rec_input, c, &config.loss)?;
    let total = tape.add(adv, rec)?;
    let gc_params = gc.param_nodes();
    let mut grads = gradients(&mut tape, total, &[gc_params.as_slice(), g1_params.as_slice()].concat())?;
    let g1_grads = grads.split_off(gc_params.len());
    Ok((grads, g1_grads, tape.scalar(adv), tape.scalar(rec)))
}

#[allow(clippy::too_many_arguments)]
fn gc_step(
    st: &mut TrainState,
    c: &Matrix,
    real: Option<&Matrix>,
    judge: Judge,
    train_prior: bool,
    config: &TrainConfig,
    stage: u8,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let (gc_grads, g1_grads, adv, rec) = gc_gradients(st, c, real, judge, train_prior, config, rng)?;
    let hp = adam_params(config, stage);
    adam_step_network(&mut st.models.gc, &gc_grads, &mut st.optimizers.gc, &hp, "gc")?;
    if train_prior {
        adam_step_network(&mut st.models.g1, &g1_grads, &mut st.optimizers.g1, &hp, "g1")?;
    }
    st.telemetry.count_update(stage, Net::Gc);
    Ok((adv, rec))
}

fn record_critic(t: &mut Telemetry, stage: u8, prefix: Net, sums: (f64, f64), k: usize) {
    let (w, p) = (sums.0 / k as f64, sums.1 / k as f64);
    match prefix {
        Net::D0 => {
            t.record(stage, "d0_wasserstein", w);
            t.record(stage, "d0_penalty", p);
        }
        _ => {
            t.record(stage, "dc_wasserstein", w);
            t.record(stage, "dc_penalty", p);
        }
    }
}

fn add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0, a.1 + b.1)
}

/// Uniform draws over `classes`.
fn draw_classes(classes: &[ClassId], n: usize, rng: &mut Rng) -> Vec<ClassId> {
    (0..n).map(|_| classes[rng.below(classes.len())]).collect()
}

/// Unconditional then conditional adversarial games on labeled seen data.
/// In baseline mode only the conditional game runs.
pub fn stage1(st: &mut TrainState, view: &TrainingView<'_>, config: &TrainConfig, rng: &mut Rng) -> Result<()> {
    const STAGE: u8 = 1;
    let seen = view.seen_train;
    if seen.is_empty() {
        return Err(Error::Config("stage 1 needs labeled seen features".into()));
    }
    let mut sampler = if config.balanced_batches {
        BatchSampler::balanced(&seen.labels, config.batch_size, rng.fork(1))?
    } else {
        BatchSampler::shuffled(seen.len(), config.batch_size, rng.fork(1))?
    };
    let mut rng = rng.fork(2);
    let k = config.k;
    let unconditional = st.models.is_decoupled();
    let train_prior = unconditional && !config.block_prior_grad;
    for _ in 0..config.epochs.e1 {
        for _ in 0..sampler.batches_per_epoch() {
            if unconditional {
                let mut sums = (0.0, 0.0);
                for _ in 0..k {
                    let real = seen.features.select_rows(&sampler.next_batch());
                    sums = add(sums, d0_step(st, &real, config, STAGE, &mut rng)?);
                }
                record_critic(&mut st.telemetry, STAGE, Net::D0, sums, k);
                let g = g0_step(st, config.batch_size, config, STAGE, &mut rng)?;
                st.telemetry.record(STAGE, "g0_loss", g);
            }
            let mut sums = (0.0, 0.0);
            for _ in 0..k {
                let idx = sampler.next_batch();
                let real = seen.features.select_rows(&idx);
                let labels: Vec<ClassId> = idx.iter().map(|&i| seen.labels[i]).collect();
                let c = view.embeddings.rows_for(&labels)?;
                sums = add(sums, dc_step(st, &real, &c, config, STAGE, &mut rng)?);
            }
            record_critic(&mut st.telemetry, STAGE, Net::Dc, sums, k);
            let idx = sampler.next_batch();
            let real = seen.features.select_rows(&idx);
            let labels: Vec<ClassId> = idx.iter().map(|&i| seen.labels[i]).collect();
            let c = view.embeddings.rows_for(&labels)?;
            let (adv, rec) = gc_step(st, &c, Some(&real), Judge::Dc, train_prior, config, STAGE, &mut rng)?;
            st.telemetry.record(STAGE, "gc_adversarial", adv);
            st.telemetry.record(STAGE, "gc_reconstruction", rec);
            st.telemetry.next_step();
        }
        st.telemetry.checkpoint_counts(STAGE);
    }
    Ok(())
}

/// Unconditional game on the unlabeled unseen pool. Only D0, G1 and G2 change.
pub fn stage2(st: &mut TrainState, view: &TrainingView<'_>, config: &TrainConfig, rng: &mut Rng) -> Result<()> {
    const STAGE: u8 = 2;
    if !st.models.is_decoupled() {
        return Err(Error::Config("stage 2 needs the decoupled architecture".into()));
    }
    let pool = view.unseen_pool;
    if pool.rows() == 0 {
        return Err(Error::Config("stage 2 needs unseen pool features".into()));
    }
    let mut sampler = BatchSampler::shuffled(pool.rows(), config.batch_size, rng.fork(1))?;
    let mut rng = rng.fork(2);
    let k = config.k;
    for _ in 0..config.epochs.e2 {
        for _ in 0..sampler.batches_per_epoch() {
            let mut sums = (0.0, 0.0);
            for _ in 0..k {
                let real = pool.select_rows(&sampler.next_batch());
                sums = add(sums, d0_step(st, &real, config, STAGE, &mut rng)?);
            }
            record_critic(&mut st.telemetry, STAGE, Net::D0, sums, k);
            let g = g0_step(st, config.batch_size, config, STAGE, &mut rng)?;
            st.telemetry.record(STAGE, "g0_loss", g);
            st.telemetry.next_step();
        }
        st.telemetry.checkpoint_counts(STAGE);
    }
    Ok(())
}

/// Cross-branch game: D0 judges Gc's unseen-class fakes against the unseen
/// pool. Only D0 and Gc change.
pub fn stage3(st: &mut TrainState, view: &TrainingView<'_>, config: &TrainConfig, rng: &mut Rng) -> Result<()> {
    const STAGE: u8 = 3;
    let pool = view.unseen_pool;
    if pool.rows() == 0 {
        return Err(Error::Config("stage 3 needs unseen pool features".into()));
    }
    if view.unseen_classes.is_empty() {
        return Err(Error::Config("stage 3 needs unseen classes".into()));
    }
    if let Some(y) = view.unseen_classes.iter().find(|&&y| !view.embeddings.contains(y)) {
        return Err(Error::Config(format!("unseen class {y} has no embedding")));
    }
    let mut sampler = BatchSampler::shuffled(pool.rows(), config.batch_size, rng.fork(1))?;
    let mut rng = rng.fork(2);
    let k = config.k;
    let b = config.batch_size;
    for _ in 0..config.epochs.e3 {
        for _ in 0..sampler.batches_per_epoch() {
            let mut sums = (0.0, 0.0);
            for _ in 0..k {
                let real = pool.select_rows(&sampler.next_batch());
                let c = view.embeddings.rows_for(&draw_classes(view.unseen_classes, b, &mut rng))?;
                sums = add(sums, d0_cross_step(st, &real, &c, config, STAGE, &mut rng)?);
            }
            record_critic(&mut st.telemetry, STAGE, Net::D0, sums, k);
            let c = view.embeddings.rows_for(&draw_classes(view.unseen_classes, b, &mut rng))?;
            let (adv, rec) = gc_step(st, &c, None, Judge::D0, false, config, STAGE, &mut rng)?;
            st.telemetry.record(STAGE, "gc_adversarial", adv);
            st.telemetry.record(STAGE, "gc_reconstruction", rec);
            st.telemetry.next_step();
        }
        st.telemetry.checkpoint_counts(STAGE);
    }
    Ok(())
}
