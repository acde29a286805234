//! Gaussian-cluster benchmark whose semantic-to-visual map is known.

use serde::{Deserialize, Serialize};

use super::{ClassEmbeddingTable, ClassId, DatasetParts, GzslDataset, LabeledFeatures};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Benchmark recipe. Seen classes get ids `0..n_seen_classes`, unseen
/// classes the next `n_unseen_classes` ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    /// `embed_dim x feature_dim`. Drawn from the seed with entries
    /// N(0, 1/embed_dim) when absent.
    pub mixing: Option<Matrix>,
    pub cluster_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_seen_classes: 10,
            n_unseen_classes: 5,
            samples_per_class: 200,
            feature_dim: 64,
            embed_dim: 16,
            mixing: None,
            cluster_std: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_seen_classes == 0 || self.n_unseen_classes == 0 {
            return Err(Error::Config("need at least one seen and one unseen class".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config("samples_per_class must be at least 2".into()));
        }
        if self.feature_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Config("feature_dim and embed_dim must be positive".into()));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::Config(format!("cluster_std must be positive, got {}", self.cluster_std)));
        }
        if let Some(m) = &self.mixing {
            if m.shape() != (self.embed_dim, self.feature_dim) {
                return Err(Error::Config(format!(
                    "mixing is {:?}, expected ({}, {})",
                    m.shape(),
                    self.embed_dim,
                    self.feature_dim
                )));
            }
            if !m.is_finite() {
                return Err(Error::Config("mixing has non-finite entries".into()));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_seen_classes + self.n_unseen_classes
    }

    /// Mixing matrix actually used.
    pub fn resolved_mixing(&self) -> Matrix {
        match &self.mixing {
            Some(m) => m.clone(),
            None => Rng::new(self.seed)
                .fork(0)
                .normal_matrix(self.embed_dim, self.feature_dim, (1.0 / self.embed_dim as f64).sqrt()),
        }
    }

    /// Class embeddings, one row per class in id order.
    pub fn class_embeddings(&self) -> Matrix {
        Rng::new(self.seed).fork(1).uniform_matrix(self.n_classes(), self.embed_dim)
    }

    /// relu(c(y) * mixing) for every class, one row per class in id order.
    pub fn class_means(&self) -> Result<Matrix> {
        Ok(self.class_embeddings().matmul(&self.resolved_mixing())?.map(|v| v.max(0.0)))
    }
}

/// Builds the benchmark. Seen classes are split 80/20 into train/test per
/// class; all unseen samples form the transductive pool.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<GzslDataset> {
    spec.validate()?;
    let embeds = spec.class_embeddings();
    let means = spec.class_means()?;
    let mut noise_rng = Rng::new(spec.seed).fork(2);
    let mut split_rng = Rng::new(spec.seed).fork(3);

    let n = spec.samples_per_class;
    let n_train = ((n as f64) * 0.8).round() as usize;
    let (mut train_rows, mut train_y) = (Vec::new(), Vec::new());
    let (mut test_rows, mut test_y) = (Vec::new(), Vec::new());
    let (mut pool_rows, mut pool_y) = (Vec::new(), Vec::new());
    for class in 0..spec.n_classes() {
        let mu = means.row(class);
        let mut samples: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                mu.iter()
                    .map(|&m| (m + spec.cluster_std * noise_rng.normal()).max(0.0))
                    .collect()
            })
            .collect();
        let y = class as ClassId;
        if class < spec.n_seen_classes {
            split_rng.shuffle(&mut samples);
            for (i, s) in samples.into_iter().enumerate() {
                if i < n_train {
                    train_rows.push(s);
                    train_y.push(y);
                } else {
                    test_rows.push(s);
                    test_y.push(y);
                }
            }
        } else {
            pool_rows.extend(samples);
            pool_y.extend(std::iter::repeat(y).take(n));
        }
    }
    let to_matrix = |rows: Vec<Vec<f64>>| {
        let r = rows.len();
        Matrix::new(r, spec.feature_dim, rows.concat())
    };

    let mut embeddings = ClassEmbeddingTable::new(spec.embed_dim);
    for class in 0..spec.n_classes() {
        embeddings.insert(class as ClassId, embeds.row(class).to_vec())?;
    }
    GzslDataset::new(
        DatasetParts {
            seen_train: LabeledFeatures::new(to_matrix(train_rows)?, train_y)?,
            seen_test: LabeledFeatures::new(to_matrix(test_rows)?, test_y)?,
            seen_validation: None,
            unseen_pool: LabeledFeatures::new(to_matrix(pool_rows)?, pool_y)?,
            unseen_test: None,
            embeddings,
            seen_classes: (0..spec.n_seen_classes as ClassId).collect(),
            unseen_classes: (spec.n_seen_classes as ClassId..spec.n_classes() as ClassId).collect(),
        },
        spec.feature_dim,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec {
            seed: 3,
            ..Default::default()
        };
        let a = make_synthetic(&spec).unwrap();
        let b = make_synthetic(&spec).unwrap();
        assert!(a.seen_train().features.bitwise_eq(&b.seen_train().features));
        assert!(a.unseen_pool().bitwise_eq(b.unseen_pool()));
        assert_eq!(a, b);
        let c = make_synthetic(&SyntheticSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shapes_of_default_benchmark() {
        let d = make_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(d.seen_train().len(), 10 * 160);
        assert_eq!(d.seen_test().len(), 10 * 40);
        assert_eq!(d.unseen_pool().shape(), (5 * 200, 64));
        assert_eq!(d.embed_dim(), 16);
        assert_eq!(d.unseen_classes(), &[10, 11, 12, 13, 14]);
    }

    #[test]
    fn tiny_noise_reproduces_class_means() {
        let spec = SyntheticSpec {
            cluster_std: 1e-300,
            samples_per_class: 5,
            ..Default::default()
        };
        let means = spec.class_means().unwrap();
        let d = make_synthetic(&spec).unwrap();
        let check = |f: &Matrix, ys: &[ClassId]| {
            for (row, &y) in f.row_iter().zip(ys) {
                for (a, b) in row.iter().zip(means.row(y as usize)) {
                    assert!((a - b).abs() < 1e-200, "{a} vs {b}");
                }
            }
        };
        check(&d.seen_train().features, &d.seen_train().labels);
        check(&d.seen_test().features, &d.seen_test().labels);
        check(d.unseen_pool(), d.unseen_pool_labels());
    }

    #[test]
    fn identical_embeddings_give_identical_means() {
        let spec = SyntheticSpec::default();
        let mut e = spec.class_embeddings();
        let first = e.row(0).to_vec();
        e.row_mut(7).copy_from_slice(&first);
        let means = e.matmul(&spec.resolved_mixing()).unwrap().map(|v| v.max(0.0));
        assert_eq!(means.row(0), means.row(7));
    }

    #[test]
    fn explicit_mixing_is_used() {
        let mixing = Matrix::identity(4);
        let spec = SyntheticSpec {
            feature_dim: 4,
            embed_dim: 4,
            mixing: Some(mixing),
            ..Default::default()
        };
        assert_eq!(spec.class_means().unwrap(), spec.class_embeddings());
        let bad = SyntheticSpec {
            feature_dim: 5,
            ..spec
        };
        assert!(make_synthetic(&bad).is_err());
    }

    #[test]
    fn nearest_class_mean_oracle_is_near_perfect() {
        let spec = SyntheticSpec::default();
        let d = make_synthetic(&spec).unwrap();
        let means = spec.class_means().unwrap();
        let classify = |x: &[f64]| {
            (0..means.rows())
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(means.row(a)).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = x.iter().zip(means.row(b)).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap() as ClassId
        };
        let mut correct = vec![0usize; spec.n_classes()];
        let mut total = vec![0usize; spec.n_classes()];
        let all = [
            (&d.seen_test().features, &d.seen_test().labels[..]),
            (d.unseen_pool(), d.unseen_pool_labels()),
        ];
        for (f, ys) in all {
            for (row, &y) in f.row_iter().zip(ys) {
                total[y as usize] += 1;
                correct[y as usize] += (classify(row) == y) as usize;
            }
        }
        for c in 0..spec.n_classes() {
            let acc = correct[c] as f64 / total[c] as f64;
            assert!(acc >= 0.99, "class {c}: {acc}");
        }
    }

    #[test]
    fn spec_validation() {
        for bad in [
            SyntheticSpec { n_seen_classes: 0, ..Default::default() },
            SyntheticSpec { n_unseen_classes: 0, ..Default::default() },
            SyntheticSpec { cluster_std: 0.0, ..Default::default() },
            SyntheticSpec { cluster_std: f64::NAN, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let json = r#"{"n_seen_classes": 3, "seed": 9}"#;
        let spec: SyntheticSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.n_unseen_classes, 5);
        assert_eq!(spec.seed, 9);
    }
}
