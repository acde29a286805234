//! On-disk dataset format.
//!
//! A JSON manifest names four sibling files, resolved relative to the
//! manifest's directory:
//!
//! * `features` - headerless CSV, one sample per row, `feature_dim` floats
//! * `labels` - headerless CSV, one integer class id per row, aligned with features
//! * `embeddings` - headerless CSV, `class_id, v_1, ..., v_embed_dim`
//! * `splits` - JSON with the class lists and per-split row indices
//!
//! Widths are declared in the manifest and checked, never inferred.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassEmbeddingTable, ClassId, DatasetParts, GzslDataset, LabeledFeatures};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub features: String,
    pub labels: String,
    pub embeddings: String,
    pub splits: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Transductive pool of unseen-class rows.
    pub unseen_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_indices: Option<Vec<usize>>,
    /// Disjoint unseen evaluation rows; when absent the pool is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen_test_indices: Option<Vec<usize>>,
}

/// Parsed contents of all dataset files.
#[derive(Clone, Debug)]
pub struct DatasetFiles {
    pub feature_dim: usize,
    pub features: Matrix,
    pub labels: Vec<ClassId>,
    pub embeddings: ClassEmbeddingTable,
    pub splits: Splits,
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
    }
    if m.feature_dim == 0 || m.embed_dim == 0 {
        return Err(Error::Validation("manifest widths must be positive".into()));
    }
    Ok(m)
}

pub fn parse_splits(text: &str) -> Result<Splits> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("splits: {e}")))
}

fn csv_records(bytes: &[u8]) -> impl Iterator<Item = Result<csv::StringRecord>> + '_ {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
        .into_records()
        .map(|r| r.map_err(|e| Error::Format(format!("csv: {e}"))))
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Validation(format!("line {line}: non-finite value {field:?}")));
    }
    Ok(v)
}

/// Headerless numeric CSV with exactly `width` columns per row.
pub fn parse_matrix_csv(bytes: &[u8], width: usize) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in csv_records(bytes).enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Validation(format!(
                "line {}: {} columns, expected width {width}",
                i + 1,
                rec.len()
            )));
        }
        for f in rec.iter() {
            data.push(parse_float(f, i + 1)?);
        }
        rows += 1;
    }
    Matrix::new(rows, width, data)
}

pub fn parse_labels_csv(bytes: &[u8]) -> Result<Vec<ClassId>> {
    csv_records(bytes)
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            if rec.len() != 1 {
                return Err(Error::Validation(format!("line {}: expected one label", i + 1)));
            }
            rec[0]
                .parse()
                .map_err(|_| Error::Format(format!("line {}: {:?} is not a class id", i + 1, &rec[0])))
        })
        .collect()
}

pub fn parse_embeddings_csv(bytes: &[u8], width: usize) -> Result<ClassEmbeddingTable> {
    let mut table = ClassEmbeddingTable::new(width);
    for (i, rec) in csv_records(bytes).enumerate() {
        let rec = rec?;
        if rec.len() != width + 1 {
            return Err(Error::Validation(format!(
                "line {}: embedding has {} values, expected width {width}",
                i + 1,
                rec.len().saturating_sub(1)
            )));
        }
        let class: ClassId = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: {:?} is not a class id", i + 1, &rec[0])))?;
        let row = rec.iter().skip(1).map(|f| parse_float(f, i + 1)).collect::<Result<Vec<_>>>()?;
        table.insert(class, row)?;
    }
    Ok(table)
}

impl DatasetFiles {
    /// Cross-checks the files and builds the dataset.
    pub fn assemble(self) -> Result<GzslDataset> {
        let n = self.features.rows();
        if self.labels.len() != n {
            return Err(Error::Validation(format!("{n} feature rows but {} labels", self.labels.len())));
        }
        if self.features.cols() != self.feature_dim {
            return Err(Error::Validation(format!(
                "features have width {}, manifest declares {}",
                self.features.cols(),
                self.feature_dim
            )));
        }
        let s = &self.splits;
        let mut used = BTreeSet::new();
        let mut take = |name: &str, idx: &[usize]| -> Result<LabeledFeatures> {
            for &i in idx {
                if i >= n {
                    return Err(Error::Validation(format!("{name}: row index {i} out of range ({n} rows)")));
                }
                if !used.insert(i) {
                    return Err(Error::Validation(format!("{name}: row {i} appears in more than one split")));
                }
            }
            LabeledFeatures::new(
                self.features.select_rows(idx),
                idx.iter().map(|&i| self.labels[i]).collect(),
            )
        };
        let seen_train = take("train_indices", &s.train_indices)?;
        let seen_test = take("test_indices", &s.test_indices)?;
        let seen_validation = s.validation_indices.as_deref().map(|v| take("validation_indices", v)).transpose()?;
        let unseen_pool = take("unseen_indices", &s.unseen_indices)?;
        let unseen_test = s.unseen_test_indices.as_deref().map(|v| take("unseen_test_indices", v)).transpose()?;
        GzslDataset::new(
            DatasetParts {
                seen_train,
                seen_test,
                seen_validation,
                unseen_pool,
                unseen_test,
                embeddings: self.embeddings,
                seen_classes: s.seen_classes.clone(),
                unseen_classes: s.unseen_classes.clone(),
            },
            self.feature_dim,
        )
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a dataset from its manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<GzslDataset> {
    let text = String::from_utf8(read(manifest_path)?).map_err(|_| Error::Format("manifest is not utf-8".into()))?;
    let manifest = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let features = parse_matrix_csv(&read(&base.join(&manifest.features))?, manifest.feature_dim)?;
    let labels = parse_labels_csv(&read(&base.join(&manifest.labels))?)?;
    let embeddings = parse_embeddings_csv(&read(&base.join(&manifest.embeddings))?, manifest.embed_dim)?;
    let splits_text =
        String::from_utf8(read(&base.join(&manifest.splits))?).map_err(|_| Error::Format("splits are not utf-8".into()))?;
    let splits = parse_splits(&splits_text)?;
    DatasetFiles {
        feature_dim: manifest.feature_dim,
        features,
        labels,
        embeddings,
        splits,
    }
    .assemble()
}

fn push_rows(out: &mut String, m: &Matrix) {
    use std::fmt::Write;
    for row in m.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // Debug formatting is the shortest representation that parses back
            // to the same bits.
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `dataset` into `dir` and returns the manifest path. Rows are
/// stored as train, test, validation, unseen pool, unseen test.
pub fn save_dataset(dataset: &GzslDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut features = String::new();
    let mut labels = String::new();
    let mut next = 0usize;
    let mut emit = |m: &Matrix, ys: &[ClassId]| -> Vec<usize> {
        push_rows(&mut features, m);
        for y in ys {
            labels.push_str(&y.to_string());
            labels.push('\n');
        }
        let idx = (next..next + ys.len()).collect();
        next += ys.len();
        idx
    };
    let train_indices = emit(&dataset.seen_train().features, &dataset.seen_train().labels);
    let test_indices = emit(&dataset.seen_test().features, &dataset.seen_test().labels);
    let validation_indices = dataset.seen_validation().map(|v| emit(&v.features, &v.labels));
    let unseen_indices = emit(dataset.unseen_pool(), dataset.unseen_pool_labels());
    let unseen_test_indices = dataset.unseen_test().map(|t| emit(&t.features, &t.labels));

    let mut embeddings = String::new();
    for class in dataset.embeddings().classes() {
        embeddings.push_str(&class.to_string());
        for v in dataset.embeddings().get(class).unwrap() {
            embeddings.push_str(&format!(",{v:?}"));
        }
        embeddings.push('\n');
    }

    let splits = Splits {
        seen_classes: dataset.seen_classes().to_vec(),
        unseen_classes: dataset.unseen_classes().to_vec(),
        train_indices,
        test_indices,
        unseen_indices,
        validation_indices,
        unseen_test_indices,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        feature_dim: dataset.feature_dim(),
        embed_dim: dataset.embed_dim(),
        features: "features.csv".into(),
        labels: "labels.csv".into(),
        embeddings: "embeddings.csv".into(),
        splits: "splits.json".into(),
    };
    write(&dir.join("features.csv"), features.as_bytes())?;
    write(&dir.join("labels.csv"), labels.as_bytes())?;
    write(&dir.join("embeddings.csv"), embeddings.as_bytes())?;
    write(&dir.join("splits.json"), json(&splits).as_bytes())?;
    let manifest_path = dir.join("manifest.json");
    write(&manifest_path, json(&manifest).as_bytes())?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_files() -> DatasetFiles {
        let mut embeddings = ClassEmbeddingTable::new(2);
        embeddings.insert(7, vec![0.5, 0.25]).unwrap();
        embeddings.insert(9, vec![1.0, 0.0]).unwrap();
        DatasetFiles {
            feature_dim: 3,
            features: Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [1.1, 1.2, 1.3], [1.4, 1.5, 1.6]]),
            labels: vec![7, 7, 9, 9],
            embeddings,
            splits: Splits {
                seen_classes: vec![7],
                unseen_classes: vec![9],
                train_indices: vec![0],
                test_indices: vec![1],
                unseen_indices: vec![2, 3],
                validation_indices: None,
                unseen_test_indices: None,
            },
        }
    }

    #[test]
    fn minimal_manifest_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let d = minimal_files().assemble().unwrap();
        let manifest = save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back, d);
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset(&back, dir2.path()).unwrap();
        for f in ["manifest.json", "features.csv", "labels.csv", "embeddings.csv", "splits.json"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn awkward_floats_survive_round_trip() {
        let mut files = minimal_files();
        files.features = Matrix::from_rows(&[
            [0.1 + 0.2, 1e-300, -0.0],
            [std::f64::consts::PI, 5e-324, 1.7976931348623157e308],
            [1.0 / 3.0, 2.0 / 3.0, 123456789.123456789],
            [0.0, 1.0, 2.0],
        ]);
        let d = files.assemble().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let back = load_dataset(&save_dataset(&d, dir.path()).unwrap()).unwrap();
        assert!(back.seen_train().features.bitwise_eq(&d.seen_train().features));
        assert!(back.unseen_pool().bitwise_eq(d.unseen_pool()));
    }

    #[test]
    fn overlapping_classes_rejected() {
        let mut files = minimal_files();
        files.splits.unseen_classes = vec![9, 7];
        let err = files.assemble().unwrap_err();
        assert!(err.to_string().contains("disjointness violated"));
    }

    #[test]
    fn index_errors() {
        let mut files = minimal_files();
        files.splits.test_indices = vec![0];
        assert!(files.assemble().is_err());
        let mut files = minimal_files();
        files.splits.unseen_indices = vec![2, 30];
        assert!(files.assemble().is_err());
        let mut files = minimal_files();
        files.labels.pop();
        assert!(files.assemble().is_err());
    }

    #[test]
    fn csv_width_is_enforced() {
        assert!(parse_matrix_csv(b"1,2,3\n4,5\n", 3).is_err());
        assert!(parse_matrix_csv(b"1,2,nan\n", 3).is_err());
        assert!(parse_matrix_csv(b"1,2,x\n", 3).is_err());
        let m = parse_matrix_csv(b"1, 2 ,3\n4,5,6\n", 3).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert!(parse_embeddings_csv(b"0,1.0\n", 2).is_err());
        assert!(parse_embeddings_csv(b"-1,1.0,2.0\n", 2).is_err());
        assert!(parse_labels_csv(b"1,2\n").is_err());
        assert_eq!(parse_labels_csv(b"3\n4\n").unwrap(), vec![3, 4]);
    }

    #[test]
    fn manifest_schema() {
        let ok = r#"{"version":1,"feature_dim":2048,"embed_dim":312,"features":"f.csv","labels":"l.csv","embeddings":"e.csv","splits":"s.json"}"#;
        assert_eq!(parse_manifest(ok).unwrap().embed_dim, 312);
        assert!(parse_manifest(&ok.replace("\"version\":1", "\"version\":2")).is_err());
        assert!(parse_manifest(&ok.replace("}", ",\"extra\":1}")).is_err());
        assert!(parse_manifest("{").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(&dir.path().join("manifest.json")), Err(Error::Io { .. })));
        let d = minimal_files().assemble().unwrap();
        let manifest = save_dataset(&d, dir.path()).unwrap();
        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_dataset(&manifest), Err(Error::Io { .. })));
    }

    #[test]
    fn label_without_embedding_rejected() {
        let mut files = minimal_files();
        files.labels[0] = 8;
        files.splits.seen_classes = vec![7, 8];
        let err = files.assemble().unwrap_err();
        assert!(err.to_string().contains("no embedding"), "{err}");
    }
}
