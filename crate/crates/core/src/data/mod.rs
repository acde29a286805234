//! Transductive GZSL datasets: seen labeled features, an unlabeled pool of
//! unseen-class features, and one embedding per class.
//!
//! Unseen pool labels are held for evaluation only. Training code receives
//! a [`TrainingView`], which has no way to reach them.

mod batch;
mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

pub use batch::{batch_iter, BatchSampler};
pub use io::{
    load_dataset, parse_embeddings_csv, parse_labels_csv, parse_manifest, parse_matrix_csv, parse_splits,
    save_dataset, DatasetFiles, Manifest, Splits, MANIFEST_VERSION,
};
pub use synthetic::{make_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub type ClassId = u32;

/// Feature rows with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub features: Matrix,
    pub labels: Vec<ClassId>,
}

impl LabeledFeatures {
    pub fn new(features: Matrix, labels: Vec<ClassId>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledFeatures { features, labels })
    }

    pub fn empty(width: usize) -> Self {
        LabeledFeatures {
            features: Matrix::zeros(0, width),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Class id to embedding row, all rows the same width.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbeddingTable {
    width: usize,
    rows: BTreeMap<ClassId, Vec<f64>>,
}

impl ClassEmbeddingTable {
    pub fn new(width: usize) -> Self {
        ClassEmbeddingTable {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, class: ClassId, row: Vec<f64>) -> Result<()> {
        if row.len() != self.width {
            return Err(Error::Validation(format!(
                "embedding for class {class} has width {}, expected {}",
                row.len(),
                self.width
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("embedding for class {class} is not finite")));
        }
        if self.rows.insert(class, row).is_some() {
            return Err(Error::Validation(format!("class {class} has two embeddings")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, class: ClassId) -> Option<&[f64]> {
        self.rows.get(&class).map(Vec::as_slice)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.rows.contains_key(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.rows.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One embedding row per label.
    pub fn rows_for(&self, labels: &[ClassId]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(labels.len() * self.width);
        for &y in labels {
            let row = self
                .get(y)
                .ok_or_else(|| Error::Validation(format!("class {y} has no embedding")))?;
            data.extend_from_slice(row);
        }
        Matrix::new(labels.len(), self.width, data)
    }
}

/// A validated transductive dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GzslDataset {
    seen_train: LabeledFeatures,
    seen_test: LabeledFeatures,
    seen_validation: Option<LabeledFeatures>,
    unseen_pool: Matrix,
    unseen_pool_labels: Vec<ClassId>,
    unseen_test: Option<LabeledFeatures>,
    embeddings: ClassEmbeddingTable,
    seen_classes: Vec<ClassId>,
    unseen_classes: Vec<ClassId>,
}

/// Parts of a dataset prior to validation.
#[derive(Clone, Debug)]
pub struct DatasetParts {
    pub seen_train: LabeledFeatures,
    pub seen_test: LabeledFeatures,
    pub seen_validation: Option<LabeledFeatures>,
    pub unseen_pool: LabeledFeatures,
    pub unseen_test: Option<LabeledFeatures>,
    pub embeddings: ClassEmbeddingTable,
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
}

fn check_class_list(name: &str, classes: &[ClassId]) -> Result<BTreeSet<ClassId>> {
    let set: BTreeSet<ClassId> = classes.iter().copied().collect();
    if set.len() != classes.len() {
        return Err(Error::Validation(format!("{name} class list has duplicates")));
    }
    Ok(set)
}

fn check_split(name: &str, split: &LabeledFeatures, allowed: &BTreeSet<ClassId>, width: usize) -> Result<()> {
    if split.features.rows() != split.labels.len() {
        return Err(Error::Validation(format!("{name}: rows and labels disagree")));
    }
    if split.features.cols() != width && split.features.rows() > 0 {
        return Err(Error::Validation(format!(
            "{name}: feature width {} does not match {width}",
            split.features.cols()
        )));
    }
    if !split.features.is_finite() {
        return Err(Error::Validation(format!("{name}: non-finite feature values")));
    }
    if let Some(bad) = split.labels.iter().find(|y| !allowed.contains(y)) {
        return Err(Error::Validation(format!("{name}: label {bad} is outside its class set")));
    }
    Ok(())
}

impl GzslDataset {
    /// Validates every dataset invariant.
    pub fn new(parts: DatasetParts, feature_dim: usize) -> Result<Self> {
        let seen = check_class_list("seen", &parts.seen_classes)?;
        let unseen = check_class_list("unseen", &parts.unseen_classes)?;
        let overlap: Vec<ClassId> = seen.intersection(&unseen).copied().collect();
        if !overlap.is_empty() {
            return Err(Error::Validation(format!(
                "disjointness violated: classes {overlap:?} are both seen and unseen"
            )));
        }
        if seen.is_empty() || unseen.is_empty() {
            return Err(Error::Validation("need at least one seen and one unseen class".into()));
        }
        for y in seen.iter().chain(&unseen) {
            if !parts.embeddings.contains(*y) {
                return Err(Error::Validation(format!("class {y} has no embedding")));
            }
        }
        check_split("seen_train", &parts.seen_train, &seen, feature_dim)?;
        check_split("seen_test", &parts.seen_test, &seen, feature_dim)?;
        if let Some(v) = &parts.seen_validation {
            check_split("seen_validation", v, &seen, feature_dim)?;
        }
        check_split("unseen_pool", &parts.unseen_pool, &unseen, feature_dim)?;
        if let Some(t) = &parts.unseen_test {
            check_split("unseen_test", t, &unseen, feature_dim)?;
        }
        let fix = |mut s: LabeledFeatures| {
            if s.features.rows() == 0 {
                s.features = Matrix::zeros(0, feature_dim);
            }
            s
        };
        Ok(GzslDataset {
            seen_train: fix(parts.seen_train),
            seen_test: fix(parts.seen_test),
            seen_validation: parts.seen_validation.map(fix),
            unseen_pool: fix(parts.unseen_pool.clone()).features,
            unseen_pool_labels: parts.unseen_pool.labels,
            unseen_test: parts.unseen_test.map(fix),
            embeddings: parts.embeddings,
            seen_classes: parts.seen_classes,
            unseen_classes: parts.unseen_classes,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.unseen_pool.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.width()
    }

    pub fn seen_classes(&self) -> &[ClassId] {
        &self.seen_classes
    }

    pub fn unseen_classes(&self) -> &[ClassId] {
        &self.unseen_classes
    }

    pub fn embeddings(&self) -> &ClassEmbeddingTable {
        &self.embeddings
    }

    pub fn seen_train(&self) -> &LabeledFeatures {
        &self.seen_train
    }

    pub fn seen_test(&self) -> &LabeledFeatures {
        &self.seen_test
    }

    pub fn seen_validation(&self) -> Option<&LabeledFeatures> {
        self.seen_validation.as_ref()
    }

    pub fn unseen_pool(&self) -> &Matrix {
        &self.unseen_pool
    }

    /// Unseen-side evaluation set: the disjoint unseen test split when the
    /// dataset has one, else the transductive pool with its held-out labels.
    pub fn unseen_evaluation(&self) -> LabeledFeatures {
        match &self.unseen_test {
            Some(t) => t.clone(),
            None => LabeledFeatures {
                features: self.unseen_pool.clone(),
                labels: self.unseen_pool_labels.clone(),
            },
        }
    }

    /// Held-out labels of the unseen pool. Evaluation only.
    pub fn unseen_pool_labels(&self) -> &[ClassId] {
        &self.unseen_pool_labels
    }

    pub fn unseen_test(&self) -> Option<&LabeledFeatures> {
        self.unseen_test.as_ref()
    }

    /// Everything a training stage may look at.
    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            seen_train: &self.seen_train,
            unseen_pool: &self.unseen_pool,
            embeddings: &self.embeddings,
            seen_classes: &self.seen_classes,
            unseen_classes: &self.unseen_classes,
        }
    }

    /// Same dataset with the unseen pool labels replaced. Used to show that
    /// training never depends on them.
    pub fn with_unseen_pool_labels(&self, labels: Vec<ClassId>) -> Result<Self> {
        let unseen: BTreeSet<ClassId> = self.unseen_classes.iter().copied().collect();
        if labels.len() != self.unseen_pool.rows() || labels.iter().any(|y| !unseen.contains(y)) {
            return Err(Error::Validation("replacement pool labels do not fit the pool".into()));
        }
        Ok(GzslDataset {
            unseen_pool_labels: labels,
            ..self.clone()
        })
    }
}

/// Training-facing access surface. Carries no unseen labels.
#[derive(Clone, Copy, Debug)]
pub struct TrainingView<'a> {
    pub seen_train: &'a LabeledFeatures,
    pub unseen_pool: &'a Matrix,
    pub embeddings: &'a ClassEmbeddingTable,
    pub seen_classes: &'a [ClassId],
    pub unseen_classes: &'a [ClassId],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(classes: &[ClassId], width: usize) -> ClassEmbeddingTable {
        let mut t = ClassEmbeddingTable::new(width);
        for &c in classes {
            t.insert(c, vec![c as f64; width]).unwrap();
        }
        t
    }

    fn parts() -> DatasetParts {
        DatasetParts {
            seen_train: LabeledFeatures::new(Matrix::from_rows(&[[1.0, 2.0]]), vec![0]).unwrap(),
            seen_test: LabeledFeatures::new(Matrix::from_rows(&[[1.5, 2.5]]), vec![0]).unwrap(),
            seen_validation: None,
            unseen_pool: LabeledFeatures::new(Matrix::from_rows(&[[3.0, 1.0], [3.5, 1.5]]), vec![1, 1]).unwrap(),
            unseen_test: None,
            embeddings: table(&[0, 1], 3),
            seen_classes: vec![0],
            unseen_classes: vec![1],
        }
    }

    #[test]
    fn accepts_minimal_dataset() {
        let d = GzslDataset::new(parts(), 2).unwrap();
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.embed_dim(), 3);
        assert_eq!(d.unseen_evaluation().labels, vec![1, 1]);
    }

    #[test]
    fn rejects_overlapping_classes() {
        let mut p = parts();
        p.unseen_classes = vec![1, 0];
        let err = GzslDataset::new(p, 2).unwrap_err();
        assert!(err.to_string().contains("disjointness violated"), "{err}");
    }

    #[test]
    fn rejects_label_outside_its_set() {
        let mut p = parts();
        p.seen_train.labels = vec![1];
        assert!(GzslDataset::new(p, 2).is_err());
    }

    #[test]
    fn rejects_missing_embedding() {
        let mut p = parts();
        p.embeddings = table(&[0], 3);
        let err = GzslDataset::new(p, 2).unwrap_err();
        assert!(err.to_string().contains("no embedding"));
    }

    #[test]
    fn rejects_width_mismatch() {
        assert!(GzslDataset::new(parts(), 3).is_err());
        let mut t = ClassEmbeddingTable::new(2);
        assert!(t.insert(0, vec![1.0]).is_err());
        assert!(t.insert(0, vec![1.0, f64::NAN]).is_err());
        t.insert(0, vec![1.0, 2.0]).unwrap();
        assert!(t.insert(0, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn embedding_rows_follow_labels() {
        let t = table(&[0, 1, 2], 2);
        let m = t.rows_for(&[2, 0, 2]).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[2.0, 2.0], [0.0, 0.0], [2.0, 2.0]]));
        assert!(t.rows_for(&[9]).is_err());
    }

    #[test]
    fn relabelled_pool_must_stay_unseen() {
        let d = GzslDataset::new(parts(), 2).unwrap();
        assert!(d.with_unseen_pool_labels(vec![0, 1]).is_err());
        assert!(d.with_unseen_pool_labels(vec![1]).is_err());
        assert!(d.with_unseen_pool_labels(vec![1, 1]).is_ok());
    }
}
