//! Central finite-difference checks of the tape's gradients.
//!
//! Every case is a scalar function of a few input matrices recorded on a
//! fresh tape. First-order cases differentiate once; second-order cases
//! already call [`Tape::backward`] inside the function (gradient penalties,
//! gradient norms), so checking them exercises double backward.

use std::fmt;

use crate::error::{Error, Result};
use crate::losses::{
    critic_loss_conditional, cross_branch_critic_loss, generator_loss_unconditional, gradient_penalty,
    reconstruction_loss, LossWeights,
};
use crate::model::{regressor_network, LayerShape, ModelDims, Network, Topology, DEFAULT_LEAKY_SLOPE};
use crate::numcore::{Matrix, NodeId, Rng, Tape};

/// Central-difference step.
pub const STEP: f64 = 1e-5;
pub const FIRST_ORDER_TOL: f64 = 1e-5;
pub const SECOND_ORDER_TOL: f64 = 1e-4;
/// Sampled points must keep every activation input and gradient norm at
/// least this far from its kink.
pub const KINK_MARGIN: f64 = 1e-3;
/// Random points per case.
pub const POINTS: usize = 10;
/// Relative errors divide by `max(|analytic|, |numeric|, REL_FLOOR)`, so
/// entries that are themselves near zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

const MAX_SAMPLE_TRIES: usize = 1000;

type Sample = dyn Fn(&mut Rng) -> Vec<Matrix>;
type Build = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>;

/// A scalar function of some input matrices, with a point sampler.
pub struct Case {
    pub name: String,
    /// 1 for plain gradients, 2 when the function itself holds a gradient.
    pub order: u8,
    pub tolerance: f64,
    sample: Box<Sample>,
    build: Box<Build>,
}

impl Case {
    pub fn new(
        name: impl Into<String>,
        order: u8,
        sample: impl Fn(&mut Rng) -> Vec<Matrix> + 'static,
        build: impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + 'static,
    ) -> Self {
        Case {
            name: name.into(),
            order,
            tolerance: if order >= 2 { SECOND_ORDER_TOL } else { FIRST_ORDER_TOL },
            sample: Box::new(sample),
            build: Box::new(build),
        }
    }

    fn record(&self, inputs: &[Matrix]) -> Result<(Tape, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = (self.build)(&mut tape, &ids)?;
        if tape.value(root).shape() != (1, 1) {
            return Err(Error::Usage(format!("case {} does not produce a scalar", self.name)));
        }
        Ok((tape, ids, root))
    }

    /// Function value and the kink margin of the forward computation.
    pub fn value(&self, inputs: &[Matrix]) -> Result<(f64, f64)> {
        let (tape, _, root) = self.record(inputs)?;
        Ok((tape.scalar(root), tape.kink_margin()))
    }

    /// Reverse-mode gradient with respect to every input.
    pub fn tape_gradient(&self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        let (mut tape, ids, root) = self.record(inputs)?;
        let grads = tape.backward(root, &ids)?;
        Ok(grads.into_iter().map(|g| tape.value(g).clone()).collect())
    }

    /// Draws points until one is finite and clear of every kink.
    pub fn sample_point(&self, rng: &mut Rng) -> Result<Vec<Matrix>> {
        for _ in 0..MAX_SAMPLE_TRIES {
            let inputs = (self.sample)(rng);
            let (v, margin) = self.value(&inputs)?;
            if v.is_finite() && margin > KINK_MARGIN {
                return Ok(inputs);
            }
        }
        Err(Error::Numeric(format!(
            "case {}: no kink-free point in {MAX_SAMPLE_TRIES} draws",
            self.name
        )))
    }
}

/// Location of the largest discrepancy in a case.
#[derive(Clone, Debug, PartialEq)]
pub struct Discrepancy {
    pub point: usize,
    pub input: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub op: String,
    pub order: u8,
    pub points: usize,
    /// Gradient entries compared over all points.
    pub entries: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub worst: Option<Discrepancy>,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    let e = (analytic - numeric).abs() / denom;
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Compares `gradient` against central differences of the case's value at
/// `points` sampled points.
pub fn check_with(
    case: &Case,
    gradient: &dyn Fn(&[Matrix]) -> Result<Vec<Matrix>>,
    points: usize,
    rng: &mut Rng,
) -> Result<OpReport> {
    let mut report = OpReport {
        op: case.name.clone(),
        order: case.order,
        points,
        entries: 0,
        max_rel_err: 0.0,
        tolerance: case.tolerance,
        worst: None,
    };
    for point in 0..points {
        let inputs = case.sample_point(rng)?;
        let analytic = gradient(&inputs)?;
        if analytic.len() != inputs.len() {
            return Err(Error::Usage(format!(
                "case {}: {} gradients for {} inputs",
                case.name,
                analytic.len(),
                inputs.len()
            )));
        }
        for (input, (x, g)) in inputs.iter().zip(&analytic).enumerate() {
            if g.shape() != x.shape() {
                return Err(Error::dim("gradcheck", x.shape(), g.shape()));
            }
            for k in 0..x.len() {
                let eval = |delta: f64| {
                    let mut moved = inputs.clone();
                    moved[input].data_mut()[k] += delta;
                    case.value(&moved).map(|v| v.0)
                };
                let numeric = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
                let a = g.data()[k];
                let e = relative_error(a, numeric);
                report.entries += 1;
                if e > report.max_rel_err || report.worst.is_none() {
                    report.max_rel_err = report.max_rel_err.max(e);
                    report.worst = Some(Discrepancy {
                        point,
                        input,
                        row: k / x.cols().max(1),
                        col: k % x.cols().max(1),
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Checks the tape's own gradient.
pub fn check(case: &Case, points: usize, rng: &mut Rng) -> Result<OpReport> {
    check_with(case, &|x| case.tape_gradient(x), points, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub ops: Vec<OpReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(OpReport::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OpReport> {
        self.ops.iter().filter(|r| !r.passed())
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.ops {
            writeln!(
                f,
                "{} {:<34} order={} entries={:<5} max_rel_err={:.3e} tol={:.0e}",
                if r.passed() { "PASS" } else { "FAIL" },
                r.op,
                r.order,
                r.entries,
                r.max_rel_err,
                r.tolerance
            )?;
            if let (false, Some(w)) = (r.passed(), &r.worst) {
                writeln!(
                    f,
                    "     worst at point {} input {} [{},{}]: analytic {:e} numeric {:e}",
                    w.point, w.input, w.row, w.col, w.analytic, w.numeric
                )?;
            }
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed (seed {})", self.ops.len(), failed, self.seed)
    }
}

/// Full first- and second-order suite on miniature inputs.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let root = Rng::new(seed);
    let ops = suite()
        .iter()
        .enumerate()
        .map(|(i, case)| check(case, POINTS, &mut root.fork(i as u64)))
        .collect::<Result<_>>()?;
    Ok(GradcheckReport { seed, ops })
}

/// `sum(y * R)` for a fixed pseudo-random `R` of `y`'s shape, so every
/// output entry gets a distinct weight.
fn weighted_sum(tape: &mut Tape, y: NodeId) -> Result<NodeId> {
    let (r, c) = tape.value(y).shape();
    let w = tape.leaf(Rng::new(0x5EED ^ (r * 131 + c) as u64).normal_matrix(r, c, 1.0));
    let p = tape.mul(y, w)?;
    tape.sum_all(p)
}

fn normal_inputs(shapes: &[(usize, usize)], std: f64) -> impl Fn(&mut Rng) -> Vec<Matrix> + 'static {
    let shapes = shapes.to_vec();
    move |rng| shapes.iter().map(|&(r, c)| rng.normal_matrix(r, c, std)).collect()
}

fn primitive(
    name: &str,
    shapes: &[(usize, usize)],
    op: impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + 'static,
) -> Case {
    Case::new(name, 1, normal_inputs(shapes, 1.0), move |t, x| {
        let y = op(t, x)?;
        weighted_sum(t, y)
    })
}

fn primitives() -> Vec<Case> {
    vec![
        primitive("matmul", &[(3, 4), (4, 2)], |t, x| t.matmul(x[0], x[1])),
        primitive("matmul_t(a'b)", &[(4, 3), (4, 2)], |t, x| t.matmul_t(x[0], true, x[1], false)),
        primitive("matmul_t(ab')", &[(3, 4), (2, 4)], |t, x| t.matmul_t(x[0], false, x[1], true)),
        primitive("matmul_t(a'b')", &[(4, 3), (2, 4)], |t, x| t.matmul_t(x[0], true, x[1], true)),
        primitive("add_row", &[(3, 4), (1, 4)], |t, x| t.add_row(x[0], x[1])),
        primitive("affine", &[(3, 4), (4, 2), (1, 2)], |t, x| t.affine(x[0], x[1], x[2])),
        primitive("add", &[(3, 4), (3, 4)], |t, x| t.add(x[0], x[1])),
        primitive("sub", &[(3, 4), (3, 4)], |t, x| t.sub(x[0], x[1])),
        primitive("mul", &[(3, 4), (3, 4)], |t, x| t.mul(x[0], x[1])),
        primitive("scale", &[(3, 4)], |t, x| t.scale(x[0], -1.7)),
        primitive("shift", &[(3, 4)], |t, x| t.shift(x[0], 0.3)),
        primitive("leaky_relu", &[(3, 4)], |t, x| t.leaky_relu(x[0], DEFAULT_LEAKY_SLOPE)),
        primitive("relu", &[(3, 4)], |t, x| t.relu(x[0])),
        primitive("square", &[(3, 4)], |t, x| t.square(x[0])),
        primitive("concat_cols", &[(3, 2), (3, 3)], |t, x| t.concat_cols(x[0], x[1])),
        primitive("slice_cols", &[(3, 5)], |t, x| t.slice_cols(x[0], 1, 3)),
        primitive("sum_rows", &[(3, 4)], |t, x| t.sum_rows(x[0])),
        primitive("broadcast_rows", &[(1, 4)], |t, x| t.broadcast_rows(x[0], 3)),
        primitive("sum_cols", &[(3, 4)], |t, x| t.sum_cols(x[0])),
        primitive("broadcast_cols", &[(3, 1)], |t, x| t.broadcast_cols(x[0], 4)),
        primitive("sum_all", &[(3, 4)], |t, x| t.sum_all(x[0])),
        primitive("mean_all", &[(3, 4)], |t, x| t.mean_all(x[0])),
        primitive("l2_norm_rows", &[(3, 4)], |t, x| t.l2_norm_rows(x[0])),
    ]
}

/// Random expression over `x[0]`, `x[1]` (both `n x 4`) and a `4 x 4`
/// weight `x[2]`, at most `depth` ops deep. The structure depends only on
/// `rng`, so a fresh rng with the same seed rebuilds the same graph.
fn expression(t: &mut Tape, x: &[NodeId], depth: usize, rng: &mut Rng) -> Result<NodeId> {
    if depth == 0 {
        // A random affine map per leaf keeps sibling subtrees distinct, so
        // nothing like relu(a - a) pins an activation at its kink.
        let leaf = x[rng.below(2)];
        let scaled = t.scale(leaf, 0.5 + rng.uniform())?;
        return t.shift(scaled, rng.normal() * 0.3);
    }
    let d = depth - 1;
    Ok(match rng.below(10) {
        0 => {
            let a = expression(t, x, d, rng)?;
            t.leaky_relu(a, DEFAULT_LEAKY_SLOPE)?
        }
        1 => {
            let a = expression(t, x, d, rng)?;
            let r = t.relu(a)?;
            t.add(r, a)?
        }
        2 => {
            let a = expression(t, x, d, rng)?;
            let s = t.square(a)?;
            t.scale(s, 0.5)?
        }
        3 => {
            let (a, b) = (expression(t, x, d, rng)?, expression(t, x, d, rng)?);
            t.add(a, b)?
        }
        4 => {
            let (a, b) = (expression(t, x, d, rng)?, expression(t, x, d, rng)?);
            t.sub(a, b)?
        }
        5 => {
            let (a, b) = (expression(t, x, d, rng)?, expression(t, x, d, rng)?);
            t.mul(a, b)?
        }
        6 => {
            let a = expression(t, x, d, rng)?;
            t.matmul(a, x[2])?
        }
        7 => {
            let a = expression(t, x, d, rng)?;
            let n = t.l2_norm_rows(a)?;
            let wide = t.broadcast_cols(n, 4)?;
            t.mul(wide, a)?
        }
        8 => {
            let a = expression(t, x, d, rng)?;
            let rows = t.value(a).rows();
            let s = t.sum_rows(a)?;
            let b = t.broadcast_rows(s, rows)?;
            let b = t.scale(b, 0.3)?;
            t.add(a, b)?
        }
        _ => {
            let (a, b) = (expression(t, x, d, rng)?, expression(t, x, d, rng)?);
            let left = t.slice_cols(a, 0, 2)?;
            let right = t.slice_cols(b, 2, 2)?;
            let c = t.concat_cols(left, right)?;
            t.shift(c, -0.1)?
        }
    })
}

const GRAPH_SHAPES: [(usize, usize); 3] = [(3, 4), (3, 4), (4, 4)];

fn composed(seed: u64) -> Case {
    Case::new(format!("composed[{seed}]"), 1, normal_inputs(&GRAPH_SHAPES, 0.7), move |t, x| {
        let y = expression(t, x, 4, &mut Rng::new(seed))?;
        weighted_sum(t, y)
    })
}

/// Weighted sum of the input gradients of a composed graph.
fn composed_double(seed: u64) -> Case {
    Case::new(
        format!("double_backward[{seed}]"),
        2,
        normal_inputs(&GRAPH_SHAPES, 0.7),
        move |t, x| {
            let y = expression(t, x, 4, &mut Rng::new(seed))?;
            let f = weighted_sum(t, y)?;
            let grads = t.backward(f, x)?;
            let mut acc = weighted_sum(t, grads[0])?;
            for &g in &grads[1..] {
                let s = weighted_sum(t, g)?;
                acc = t.add(acc, s)?;
            }
            Ok(acc)
        },
    )
}

fn mini_dims() -> ModelDims {
    ModelDims {
        noise_dim: 3,
        prior_dim: 4,
        hidden_dim: 5,
        feature_dim: 4,
        embed_dim: 2,
    }
}

fn template(shapes: &[LayerShape], seed: u64, scale: f64) -> Network {
    Network::init(shapes, &mut Rng::new(seed), scale, DEFAULT_LEAKY_SLOPE).expect("valid mini shapes")
}

/// Sampler for a network's parameters (biases included, so no kink sits at
/// a structurally zero pre-activation).
fn param_inputs(nets: &[Network], std: f64) -> impl Fn(&mut Rng) -> Vec<Matrix> + 'static {
    let shapes: Vec<(usize, usize)> = nets.iter().flat_map(|n| n.params().map(Matrix::shape)).collect();
    normal_inputs(&shapes, std)
}

fn network_cases() -> Vec<Case> {
    let topo = Topology::new(&mini_dims());
    let dims = mini_dims();
    let mut out = Vec::new();

    let net = template(&topo.d0, 1, 0.5);
    let p = net.params().count();
    let sample = {
        let params = param_inputs(std::slice::from_ref(&net), 0.7);
        move |rng: &mut Rng| {
            let mut v = vec![rng.normal_matrix(5, 4, 1.0)];
            v.extend(params(rng));
            v
        }
    };
    out.push(Case::new("network(2-layer leaky)", 1, sample, move |t, x| {
        let bound = net.bind_nodes(t, &x[1..1 + p])?;
        let y = bound.forward(t, x[0])?;
        weighted_sum(t, y)
    }));

    let (g1, g2) = (template(&topo.g1, 2, 0.5), template(&topo.g2, 3, 0.5));
    let d0 = template(&topo.d0, 4, 0.5);
    let z = Rng::new(5).normal_matrix(6, dims.noise_dim, 1.0);
    let n1 = g1.params().count();
    let sample = param_inputs(&[g1.clone(), g2.clone()], 0.7);
    out.push(Case::new("generator_loss(G2.G1)", 1, sample, move |t, x| {
        let b1 = g1.bind_nodes(t, &x[..n1])?;
        let b2 = g2.bind_nodes(t, &x[n1..])?;
        let zn = t.leaf(z.clone());
        let s = b1.forward(t, zn)?;
        let fake = b2.forward(t, s)?;
        let critic = d0.bind(t);
        generator_loss_unconditional(t, &critic, fake)
    }));

    let mut rng = Rng::new(6);
    let regressor = regressor_network(
        rng.normal_matrix(dims.feature_dim, dims.embed_dim, 0.5),
        rng.normal_matrix(1, dims.embed_dim, 0.5),
    )
    .expect("finite regressor");
    let c = rng.uniform_matrix(4, dims.embed_dim);
    out.push(Case::new(
        "reconstruction_loss",
        1,
        normal_inputs(&[(4, dims.feature_dim)], 1.0),
        move |t, x| {
            let weights = LossWeights { gp_lambda: 10.0, rec_beta: 0.7 };
            reconstruction_loss(t, &regressor, x[0], &c, &weights)
        },
    ));
    out
}

fn penalty_cases() -> Vec<Case> {
    let topo = Topology::new(&mini_dims());
    let dims = mini_dims();
    let weights = LossWeights::default();
    let mut out = Vec::new();

    let d0 = template(&topo.d0, 7, 0.5);
    let x_hat = Rng::new(8).normal_matrix(5, dims.feature_dim, 1.0);
    let net = d0.clone();
    out.push(Case::new(
        "gradient_penalty",
        2,
        param_inputs(std::slice::from_ref(&d0), 0.7),
        move |t, x| {
            let bound = net.bind_nodes(t, x)?;
            gradient_penalty(t, &bound, &x_hat)
        },
    ));

    let dc = template(&topo.dc, 9, 0.5);
    let mut rng = Rng::new(10);
    let real = rng.uniform_matrix(4, dims.feature_dim);
    let fake = rng.uniform_matrix(4, dims.feature_dim);
    let c = rng.uniform_matrix(4, dims.embed_dim);
    let net = dc.clone();
    out.push(Case::new(
        "critic_loss_conditional",
        2,
        param_inputs(std::slice::from_ref(&dc), 0.7),
        move |t, x| {
            let bound = net.bind_nodes(t, x)?;
            Ok(critic_loss_conditional(t, &bound, &real, &fake, &c, &weights, &mut Rng::new(11))?.total)
        },
    ));

    let real = rng.uniform_matrix(4, dims.feature_dim);
    let fake = rng.uniform_matrix(4, dims.feature_dim);
    let net = d0.clone();
    out.push(Case::new(
        "cross_branch_critic_loss",
        2,
        param_inputs(std::slice::from_ref(&d0), 0.7),
        move |t, x| {
            let bound = net.bind_nodes(t, x)?;
            Ok(cross_branch_critic_loss(t, &bound, &real, &fake, &weights, &mut Rng::new(12))?.total)
        },
    ));
    out
}

/// Every case run by [`run_gradcheck`].
pub fn suite() -> Vec<Case> {
    let mut cases = primitives();
    cases.extend((0..5).map(composed));
    cases.extend(network_cases());
    cases.extend(penalty_cases());
    cases.extend((0..3).map(composed_double));
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes() {
        let report = run_gradcheck(0).unwrap();
        assert!(report.passed(), "{report}");
        for r in &report.ops {
            assert_eq!(r.points, POINTS);
            assert!(r.entries > 0);
        }
    }

    #[test]
    fn report_lists_every_case() {
        let report = run_gradcheck(1).unwrap();
        let names: Vec<String> = suite().into_iter().map(|c| c.name).collect();
        let reported: Vec<String> = report.ops.iter().map(|r| r.op.clone()).collect();
        assert_eq!(names, reported);
        let text = report.to_string();
        for n in &names {
            assert!(text.contains(n.as_str()), "{n} missing from report");
        }
        for op in ["matmul", "leaky_relu", "relu", "concat_cols", "l2_norm_rows", "gradient_penalty"] {
            assert!(names.iter().any(|n| n == op), "{op}");
        }
    }

    #[test]
    fn corrupted_leaky_relu_backward_is_detected() {
        let case = suite().into_iter().find(|c| c.name == "leaky_relu").unwrap();
        // Uses slope 0.3 on the negative side instead of the forward's 0.2.
        let corrupted = |x: &[Matrix]| -> Result<Vec<Matrix>> {
            let (r, c) = x[0].shape();
            let w = Rng::new(0x5EED ^ (r * 131 + c) as u64).normal_matrix(r, c, 1.0);
            let slope = x[0].map(|v| if v >= 0.0 { 1.0 } else { 0.3 });
            Ok(vec![w.hadamard(&slope)?])
        };
        let bad = check_with(&case, &corrupted, POINTS, &mut Rng::new(3)).unwrap();
        assert!(!bad.passed());
        let w = bad.worst.unwrap();
        assert!((w.analytic - w.numeric).abs() > 1e-3);
        // A correct hand-written rule passes through the same harness.
        let honest = |x: &[Matrix]| -> Result<Vec<Matrix>> {
            let (r, c) = x[0].shape();
            let w = Rng::new(0x5EED ^ (r * 131 + c) as u64).normal_matrix(r, c, 1.0);
            let slope = x[0].map(|v| if v >= 0.0 { 1.0 } else { DEFAULT_LEAKY_SLOPE });
            Ok(vec![w.hadamard(&slope)?])
        };
        assert!(check_with(&case, &honest, POINTS, &mut Rng::new(3)).unwrap().passed());
    }

    #[test]
    fn dropped_second_order_term_is_detected() {
        let case = suite().into_iter().find(|c| c.name == "gradient_penalty").unwrap();
        let half = |x: &[Matrix]| -> Result<Vec<Matrix>> {
            Ok(case.tape_gradient(x)?.into_iter().map(|g| g.scale(0.5)).collect())
        };
        assert!(!check_with(&case, &half, 2, &mut Rng::new(4)).unwrap().passed());
    }

    #[test]
    fn sampled_points_avoid_kinks() {
        let case = suite().into_iter().find(|c| c.name == "relu").unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let p = case.sample_point(&mut rng).unwrap();
            assert!(p[0].data().iter().all(|v| v.abs() > KINK_MARGIN));
        }
    }

    #[test]
    fn relative_error_floor_and_nan() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-6).abs() < 1e-18);
        assert_eq!(relative_error(f64::NAN, 0.0), f64::INFINITY);
    }

    #[test]
    fn kink_margin_tracks_activation_inputs() {
        let mut t = Tape::new();
        assert_eq!(t.kink_margin(), f64::INFINITY);
        let x = t.leaf(Matrix::from_rows(&[[0.5, -0.01]]));
        t.relu(x).unwrap();
        assert_eq!(t.kink_margin(), 0.01);
        let y = t.leaf(Matrix::from_rows(&[[0.0, 0.004]]));
        t.l2_norm_rows(y).unwrap();
        assert_eq!(t.kink_margin(), 0.004);
    }
}
