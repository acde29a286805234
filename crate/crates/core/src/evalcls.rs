//! GZSL evaluation: synthesize unseen-class features, fit a softmax
//! classifier on real seen plus synthetic unseen features, and score
//! per-class top-1 accuracy on both sides.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ClassEmbeddingTable, ClassId, GzslDataset};
use crate::error::{Error, Result};
use crate::model::{generate_conditional, DecGan};
use crate::numcore::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Synthetic features per unseen class.
    pub n_per_class: usize,
    pub softmax_lr: f64,
    pub softmax_epochs: usize,
    pub softmax_l2: f64,
    /// Report raw pooled accuracy for a_s and a_u instead of per-class means.
    pub pooled_accuracy: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_per_class: 400,
            softmax_lr: 0.5,
            softmax_epochs: 300,
            softmax_l2: 1e-4,
            pooled_accuracy: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Config("n_per_class must be at least 1".into()));
        }
        if !(self.softmax_lr > 0.0 && self.softmax_lr.is_finite()) {
            return Err(Error::Config(format!("softmax_lr {} must be positive", self.softmax_lr)));
        }
        if !(self.softmax_l2 >= 0.0) {
            return Err(Error::Config(format!("softmax_l2 {} must be >= 0", self.softmax_l2)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GzslMetrics {
    pub per_class_acc: BTreeMap<ClassId, f64>,
    pub a_s: f64,
    pub a_u: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

/// `2 a_s a_u / (a_s + a_u)`, zero when both are zero.
pub fn harmonic_mean(a_s: f64, a_u: f64) -> Result<f64> {
    for (name, v) in [("a_s", a_s), ("a_u", a_u)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    if a_s + a_u == 0.0 {
        return Ok(0.0);
    }
    if a_s == a_u {
        return Ok(a_s);
    }
    Ok(2.0 * a_s * a_u / (a_s + a_u))
}

/// Fraction correct for each class of `class_set` that has samples.
/// Predictions must fall in `universe`.
pub fn per_class_top1(
    predictions: &[ClassId],
    labels: &[ClassId],
    class_set: &[ClassId],
    universe: &[ClassId],
) -> Result<BTreeMap<ClassId, f64>> {
    if predictions.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let universe: BTreeSet<ClassId> = universe.iter().copied().collect();
    if let Some(p) = predictions.iter().find(|p| !universe.contains(p)) {
        return Err(Error::Validation(format!("prediction {p} is outside the label universe")));
    }
    let wanted: BTreeSet<ClassId> = class_set.iter().copied().collect();
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (&p, &y) in predictions.iter().zip(labels) {
        if wanted.contains(&y) {
            let t = tally.entry(y).or_default();
            t.0 += (p == y) as usize;
            t.1 += 1;
        }
    }
    Ok(tally.into_iter().map(|(y, (c, n))| (y, c as f64 / n as f64)).collect())
}

/// Mean over classes; zero for an empty map.
pub fn mean_accuracy(per_class: &BTreeMap<ClassId, f64>) -> f64 {
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.values().sum::<f64>() / per_class.len() as f64
}

/// Source of synthetic features for a class.
pub trait UnseenSynthesizer {
    fn synthesize(&self, class: ClassId, embedding: &[f64], n: usize, rng: &mut Rng) -> Result<Matrix>;
}

impl UnseenSynthesizer for DecGan {
    /// `Gc(G1(z) || c)`, or `Gc(z || c)` for the non-decoupled variant.
    fn synthesize(&self, _class: ClassId, embedding: &[f64], n: usize, rng: &mut Rng) -> Result<Matrix> {
        let z = self.sample_noise(n, rng);
        let s = self.prior_from_noise(&z)?;
        let c = Matrix::from_fn(n, embedding.len(), |_, j| embedding[j]);
        generate_conditional(&self.gc, &s, &c)
    }
}

/// Emits a fixed row per class, e.g. the true class mean.
#[derive(Clone, Debug)]
pub struct FixedRows(pub BTreeMap<ClassId, Vec<f64>>);

impl UnseenSynthesizer for FixedRows {
    fn synthesize(&self, class: ClassId, _embedding: &[f64], n: usize, _rng: &mut Rng) -> Result<Matrix> {
        let row = self
            .0
            .get(&class)
            .ok_or_else(|| Error::Validation(format!("no fixed row for class {class}")))?;
        Ok(Matrix::from_fn(n, row.len(), |_, j| row[j]))
    }
}

/// Emits all-zero features.
#[derive(Clone, Copy, Debug)]
pub struct ZeroFeatures(pub usize);

impl UnseenSynthesizer for ZeroFeatures {
    fn synthesize(&self, _: ClassId, _: &[f64], n: usize, _: &mut Rng) -> Result<Matrix> {
        Ok(Matrix::zeros(n, self.0))
    }
}

/// `n_per_class` rows for each class, labeled by class, in class order.
pub fn synthesize_unseen(
    generator: &dyn UnseenSynthesizer,
    embeddings: &ClassEmbeddingTable,
    classes: &[ClassId],
    n_per_class: usize,
    rng: &mut Rng,
) -> Result<(Matrix, Vec<ClassId>)> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be at least 1".into()));
    }
    let mut out: Option<Matrix> = None;
    let mut labels = Vec::with_capacity(classes.len() * n_per_class);
    for &y in classes {
        let c = embeddings
            .get(y)
            .ok_or_else(|| Error::Validation(format!("class {y} has no embedding")))?;
        let rows = generator.synthesize(y, c, n_per_class, rng)?;
        out = Some(match out {
            None => rows,
            Some(acc) => acc.vstack(&rows)?,
        });
        labels.extend(std::iter::repeat(y).take(n_per_class));
    }
    Ok((out.unwrap_or_else(|| Matrix::zeros(0, 0)), labels))
}

/// Affine softmax classifier over class indices `0..n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxClassifier {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl SoftmaxClassifier {
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }

    /// Argmax per row; ties go to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.row_iter().map(argmax).collect())
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Mean cross-entropy plus `l2/2 (|W|^2 + |b|^2)`, with its gradient.
pub fn softmax_objective(
    model: &SoftmaxClassifier,
    x: &Matrix,
    labels: &[usize],
    l2: f64,
) -> Result<(f64, Matrix, Matrix)> {
    let n = x.rows();
    let logits = model.logits(x)?;
    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
        loss -= row[y].ln();
        row[y] -= 1.0;
    }
    let inv_n = 1.0 / n.max(1) as f64;
    let delta = probs.scale(inv_n);
    let gw = x.matmul_t(true, &delta, false)?.add(&model.weight.scale(l2))?;
    let gb = delta.sum_rows().add(&model.bias.scale(l2))?;
    let reg = 0.5 * l2 * (model.weight.norm_sq() + model.bias.norm_sq());
    Ok((loss * inv_n + reg, gw, gb))
}

/// Result of [`train_softmax`].
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxFit {
    pub model: SoftmaxClassifier,
    /// Class indices with no training rows. They stay in the output space.
    pub empty_classes: Vec<usize>,
}

/// Full-batch gradient descent from zero. Inputs are standardized per
/// feature internally and the scaling is folded back into the returned
/// weights. The penalty step is applied implicitly,
/// `w <- (w - lr * g) / (1 + lr * l2)`, which stays stable for any `l2`.
pub fn train_softmax(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    lr: f64,
    epochs: usize,
    l2: f64,
) -> Result<SoftmaxFit> {
    if features.rows() != labels.len() {
        return Err(Error::dim("train_softmax", features.shape(), (labels.len(), 1)));
    }
    if features.rows() == 0 || n_classes == 0 {
        return Err(Error::Config("softmax needs rows and classes".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Validation(format!("label index {y} outside 0..{n_classes}")));
    }
    let mut present = vec![false; n_classes];
    for &y in labels {
        present[y] = true;
    }
    let empty_classes = (0..n_classes).filter(|&c| !present[c]).collect();

    let d = features.cols();
    let mean = features.mean_rows();
    let mut std = Matrix::zeros(1, d);
    for row in features.row_iter() {
        for j in 0..d {
            let dv = row[j] - mean.get(0, j);
            std.set(0, j, std.get(0, j) + dv * dv);
        }
    }
    let n = features.rows() as f64;
    let std = std.map(|v| {
        let s = (v / n).sqrt();
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    let xs = Matrix::from_fn(features.rows(), d, |i, j| (features.get(i, j) - mean.get(0, j)) / std.get(0, j));

    let mut model = SoftmaxClassifier {
        weight: Matrix::zeros(d, n_classes),
        bias: Matrix::zeros(1, n_classes),
    };
    let shrink = 1.0 / (1.0 + lr * l2);
    for _ in 0..epochs {
        let (_, gw, gb) = softmax_objective(&model, &xs, labels, 0.0)?;
        model.weight = model.weight.sub(&gw.scale(lr))?.scale(shrink);
        model.bias = model.bias.sub(&gb.scale(lr))?.scale(shrink);
    }
    if !model.weight.is_finite() || !model.bias.is_finite() {
        return Err(Error::Numeric("softmax training diverged".into()));
    }
    // logits = ((x - mean) / std) W + b = x W' + (b - (mean / std) W)
    let weight = Matrix::from_fn(d, n_classes, |j, c| model.weight.get(j, c) / std.get(0, j));
    let bias = model.bias.sub(&mean.matmul(&weight)?)?;
    Ok(SoftmaxFit {
        model: SoftmaxClassifier { weight, bias },
        empty_classes,
    })
}

/// Metrics plus warnings from one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: GzslMetrics,
    /// Classes with no classifier training rows.
    pub empty_classes: Vec<ClassId>,
}

/// Trains the final classifier on real seen features and synthetic unseen
/// features, then scores seen test rows and the unseen evaluation rows.
pub fn evaluate_gzsl(
    generator: &dyn UnseenSynthesizer,
    dataset: &GzslDataset,
    config: &EvalConfig,
    rng: &mut Rng,
) -> Result<Evaluation> {
    config.validate()?;
    let mut classes: Vec<ClassId> = dataset.seen_classes().iter().chain(dataset.unseen_classes()).copied().collect();
    classes.sort_unstable();
    let index: BTreeMap<ClassId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let (syn_x, syn_y) =
        synthesize_unseen(generator, dataset.embeddings(), dataset.unseen_classes(), config.n_per_class, rng)?;
    if syn_x.cols() != dataset.feature_dim() {
        return Err(Error::dim("synthesized features", syn_x.shape(), (syn_x.rows(), dataset.feature_dim())));
    }
    if !syn_x.is_finite() {
        return Err(Error::Numeric("synthesized features are not finite".into()));
    }
    let train_x = dataset.seen_train().features.vstack(&syn_x)?;
    let train_y: Vec<usize> = dataset.seen_train().labels.iter().chain(&syn_y).map(|y| index[y]).collect();
    let fit = train_softmax(
        &train_x,
        &train_y,
        classes.len(),
        config.softmax_lr,
        config.softmax_epochs,
        config.softmax_l2,
    )?;

    let predict = |x: &Matrix| -> Result<Vec<ClassId>> {
        Ok(fit.model.predict(x)?.into_iter().map(|i| classes[i]).collect())
    };
    let seen_test = dataset.seen_test();
    let unseen_eval = dataset.unseen_evaluation();
    let seen_pred = predict(&seen_test.features)?;
    let unseen_pred = predict(&unseen_eval.features)?;
    let seen_acc = per_class_top1(&seen_pred, &seen_test.labels, dataset.seen_classes(), &classes)?;
    let unseen_acc = per_class_top1(&unseen_pred, &unseen_eval.labels, dataset.unseen_classes(), &classes)?;
    let pooled = |p: &[ClassId], y: &[ClassId]| {
        if y.is_empty() {
            0.0
        } else {
            p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
        }
    };
    let (a_s, a_u) = if config.pooled_accuracy {
        (pooled(&seen_pred, &seen_test.labels), pooled(&unseen_pred, &unseen_eval.labels))
    } else {
        (mean_accuracy(&seen_acc), mean_accuracy(&unseen_acc))
    };
    let h = harmonic_mean(a_s, a_u)?;
    let mut per_class_acc = seen_acc;
    per_class_acc.extend(unseen_acc);
    Ok(Evaluation {
        metrics: GzslMetrics {
            per_class_acc,
            a_s,
            a_u,
            h,
        },
        empty_classes: fit.empty_classes.into_iter().map(|i| classes[i]).collect(),
    })
}

/// `class,split,accuracy` rows, seen classes first.
pub fn metrics_csv(metrics: &GzslMetrics, seen_classes: &[ClassId]) -> String {
    let seen: BTreeSet<ClassId> = seen_classes.iter().copied().collect();
    let mut out = String::from("class,split,accuracy\n");
    for split in ["seen", "unseen"] {
        for (&c, &a) in &metrics.per_class_acc {
            if (split == "seen") == seen.contains(&c) {
                writeln!(out, "{c},{split},{a:?}").unwrap();
            }
        }
    }
    out
}

/// One-line summary.
pub fn summary_line(metrics: &GzslMetrics) -> String {
    format!("a_u={:.4} a_s={:.4} H={:.4}", metrics.a_u, metrics.a_s, metrics.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::numcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn harmonic_mean_values() {
        assert!((harmonic_mean(0.922, 0.730).unwrap() - 0.815).abs() < 0.0005);
        assert!((harmonic_mean(0.353, 0.020).unwrap() - 0.0379).abs() < 0.0005);
        assert_eq!(harmonic_mean(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(harmonic_mean(0.4, 0.4).unwrap(), 0.4);
        assert!(harmonic_mean(1.1, 0.5).is_err());
        assert!(harmonic_mean(0.5, -0.1).is_err());
        assert!(harmonic_mean(f64::NAN, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let h = harmonic_mean(a, b).unwrap();
            let lo = a.min(b);
            prop_assert!(h >= lo - 1e-15);
            prop_assert!(h <= 2.0 * lo + 1e-15);
            prop_assert!(h <= a.max(b) + 1e-15);
        }

        #[test]
        fn per_class_metrics_ignore_order(seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let labels: Vec<ClassId> = (0..40).map(|_| rng.below(4) as ClassId).collect();
            let preds: Vec<ClassId> = labels.iter().map(|&y| if rng.uniform() < 0.7 { y } else { rng.below(4) as ClassId }).collect();
            let a = per_class_top1(&preds, &labels, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
            let mut idx: Vec<usize> = (0..40).collect();
            rng.shuffle(&mut idx);
            let p2: Vec<ClassId> = idx.iter().map(|&i| preds[i]).collect();
            let l2: Vec<ClassId> = idx.iter().map(|&i| labels[i]).collect();
            let b = per_class_top1(&p2, &l2, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn per_class_counts() {
        let labels = [1, 1, 1, 1, 2, 2];
        let preds = [1, 1, 1, 2, 2, 2];
        let acc = per_class_top1(&preds, &labels, &[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!(acc[&1], 0.75);
        assert_eq!(acc[&2], 1.0);
        assert!(!acc.contains_key(&3), "classes without samples are excluded");
        let all = per_class_top1(&labels, &labels, &[1, 2], &[1, 2]).unwrap();
        assert!(all.values().all(|&a| a == 1.0));
        assert!(per_class_top1(&[9], &[1], &[1], &[1, 2]).is_err());
        assert!(per_class_top1(&[1], &[1, 2], &[1], &[1, 2]).is_err());
    }

    #[test]
    fn class_mean_is_invariant_to_duplicating_rows() {
        let labels = vec![0, 0, 1, 1, 1];
        let preds = vec![0, 1, 1, 1, 0];
        let a = mean_accuracy(&per_class_top1(&preds, &labels, &[0, 1], &[0, 1]).unwrap());
        let labels2: Vec<ClassId> = labels.iter().chain(&labels[..2]).copied().collect();
        let preds2: Vec<ClassId> = preds.iter().chain(&preds[..2]).copied().collect();
        let b = mean_accuracy(&per_class_top1(&preds2, &labels2, &[0, 1], &[0, 1]).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let x = rng.normal_matrix(7, 4, 1.0);
        let labels = vec![0, 1, 2, 1, 0, 2, 2];
        let model = SoftmaxClassifier {
            weight: rng.normal_matrix(4, 3, 0.5),
            bias: rng.normal_matrix(1, 3, 0.5),
        };
        let l2 = 0.3;
        let (_, gw, gb) = softmax_objective(&model, &x, &labels, l2).unwrap();
        let h = 1e-5;
        let f = |m: &SoftmaxClassifier| softmax_objective(m, &x, &labels, l2).unwrap().0;
        for i in 0..4 {
            for j in 0..3 {
                let (mut p, mut q) = (model.clone(), model.clone());
                p.weight.set(i, j, model.weight.get(i, j) + h);
                q.weight.set(i, j, model.weight.get(i, j) - h);
                let fd = (f(&p) - f(&q)) / (2.0 * h);
                assert!((fd - gw.get(i, j)).abs() < 1e-6, "w[{i},{j}]");
            }
        }
        for j in 0..3 {
            let (mut p, mut q) = (model.clone(), model.clone());
            p.bias.set(0, j, model.bias.get(0, j) + h);
            q.bias.set(0, j, model.bias.get(0, j) - h);
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            assert!((fd - gb.get(0, j)).abs() < 1e-6, "b[{j}]");
        }
    }

    #[test]
    fn separable_clusters_fit_exactly() {
        let mut rng = Rng::new(4);
        let mut x = rng.normal_matrix(100, 2, 0.3);
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        for (i, &y) in labels.iter().enumerate() {
            let shift = if y == 0 { -2.0 } else { 2.0 };
            x.set(i, 0, x.get(i, 0) + shift);
        }
        let fit = train_softmax(&x, &labels, 2, 0.5, 200, 0.0).unwrap();
        assert_eq!(fit.model.predict(&x).unwrap(), labels);
        assert!(fit.empty_classes.is_empty());
    }

    #[test]
    fn huge_penalty_gives_uniform_predictions() {
        let mut rng = Rng::new(5);
        let x = rng.normal_matrix(30, 3, 1.0);
        let labels: Vec<usize> = (0..30).map(|i| 1 + i % 2).collect();
        let fit = train_softmax(&x, &labels, 3, 0.5, 50, 1e12).unwrap();
        assert!(fit.model.weight.norm_sq() < 1e-20);
        let logits = fit.model.logits(&x).unwrap();
        let spread = logits.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(spread < 1e-9, "logits are not uniform: {spread:e}");
        assert_eq!(fit.empty_classes, vec![0]);
        let zero = SoftmaxClassifier {
            weight: Matrix::zeros(3, 3),
            bias: Matrix::zeros(1, 3),
        };
        assert!(zero.predict(&x).unwrap().iter().all(|&p| p == 0), "ties go to the lowest class");
    }

    #[test]
    fn synthesis_counts_and_zero_generator() {
        let d = make_synthetic(&SyntheticSpec::default()).unwrap();
        let (x, y) = synthesize_unseen(&ZeroFeatures(64), d.embeddings(), d.unseen_classes(), 400, &mut Rng::new(0)).unwrap();
        assert_eq!(x.shape(), (2000, 64));
        for c in d.unseen_classes() {
            assert_eq!(y.iter().filter(|&&v| v == *c).count(), 400);
        }
        assert!(x.data().iter().all(|&v| v == 0.0));
        assert!(synthesize_unseen(&ZeroFeatures(64), d.embeddings(), &[99], 1, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_weight_generator_emits_zeros() {
        use crate::model::{Architecture, DecGan, ModelDims, DEFAULT_LEAKY_SLOPE};
        let dims = ModelDims {
            noise_dim: 4,
            prior_dim: 5,
            hidden_dim: 6,
            feature_dim: 64,
            embed_dim: 16,
        };
        let mut m = DecGan::init(&dims, Architecture::Decoupled, &mut Rng::new(0), 0.1, DEFAULT_LEAKY_SLOPE).unwrap();
        for p in m.gc.params_mut() {
            p.data_mut().fill(0.0);
        }
        let d = make_synthetic(&SyntheticSpec::default()).unwrap();
        let (x, _) = synthesize_unseen(&m, d.embeddings(), d.unseen_classes(), 10, &mut Rng::new(1)).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        m.gc = DecGan::init(&dims, Architecture::Decoupled, &mut Rng::new(2), 0.5, DEFAULT_LEAKY_SLOPE).unwrap().gc;
        let (x, _) = synthesize_unseen(&m, d.embeddings(), d.unseen_classes(), 10, &mut Rng::new(1)).unwrap();
        assert!(x.data().iter().all(|&v| v >= 0.0));
    }

    fn oracle(spec: &SyntheticSpec) -> FixedRows {
        let means = spec.class_means().unwrap();
        FixedRows(
            (spec.n_seen_classes..spec.n_classes())
                .map(|c| (c as ClassId, means.row(c).to_vec()))
                .collect(),
        )
    }

    #[test]
    fn oracle_generator_is_near_perfect() {
        let spec = SyntheticSpec::default();
        let d = make_synthetic(&spec).unwrap();
        let e = evaluate_gzsl(&oracle(&spec), &d, &EvalConfig::default(), &mut Rng::new(0)).unwrap();
        assert!(e.metrics.h >= 0.99, "{}", summary_line(&e.metrics));
        let again = evaluate_gzsl(&oracle(&spec), &d, &EvalConfig::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn zero_generator_is_near_chance_on_unseen() {
        let d = make_synthetic(&SyntheticSpec::default()).unwrap();
        let e = evaluate_gzsl(&ZeroFeatures(64), &d, &EvalConfig::default(), &mut Rng::new(0)).unwrap();
        assert!(e.metrics.a_u <= 2.0 / 5.0, "{}", summary_line(&e.metrics));
    }

    #[test]
    fn metrics_csv_layout() {
        let m = GzslMetrics {
            per_class_acc: [(0, 1.0), (1, 0.5), (2, 0.25)].into_iter().collect(),
            a_s: 0.75,
            a_u: 0.25,
            h: 0.375,
        };
        assert_eq!(metrics_csv(&m, &[0, 2]), "class,split,accuracy\n0,seen,1.0\n2,seen,0.25\n1,unseen,0.5\n");
        assert_eq!(summary_line(&m), "a_u=0.2500 a_s=0.7500 H=0.3750");
    }
}
