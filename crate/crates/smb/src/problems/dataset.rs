//! In-memory dataset with a fixed train/test split, plus loaders for the IDX
//! image format, headered CSV, and libsvm text files.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x} at byte 0, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: truncated at byte {offset}: {detail}")]
    Truncated { path: String, offset: usize, detail: String },
    #[error("{path}:{line}: {detail}")]
    Parse { path: String, line: usize, detail: String },
    #[error("{path}: dataset is empty")]
    Empty { path: String },
    #[error("dataset is inconsistent: {detail}")]
    Inconsistent { detail: String },
}

/// How features were normalized at load time.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    None,
    /// Byte pixels scaled to [0, 1].
    PixelScale,
    /// Per-column standardization with the recorded statistics.
    Standardized { means: Vec<f64>, stds: Vec<f64> },
}

/// Dense feature matrix with labels and a disjoint, exhaustive train/test
/// split.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    d: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        d: usize,
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
        normalization: Normalization,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::Inconsistent { detail: "no samples".into() });
        }
        if features.len() != n * d {
            return Err(DataError::Inconsistent {
                detail: format!("{} feature values for {n} samples of dim {d}", features.len()),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Inconsistent { detail: "non-finite feature value".into() });
        }
        if train_idx.len() + test_idx.len() != n {
            return Err(DataError::Inconsistent {
                detail: "train/test split is not exhaustive".into(),
            });
        }
        let mut seen = vec![false; n];
        for &i in train_idx.iter().chain(&test_idx) {
            if i >= n || seen[i] {
                return Err(DataError::Inconsistent {
                    detail: format!("split index {i} out of range or duplicated"),
                });
            }
            seen[i] = true;
        }
        let classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        Ok(Self { n, d, classes, features, labels, train_idx, test_idx, normalization })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.classes
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_idx
    }

    /// Keeps only the first `subset` training samples (test split untouched).
    pub fn with_train_subset(mut self, subset: usize) -> Self {
        if subset > 0 && subset < self.train_idx.len() {
            self.train_idx.truncate(subset);
        }
        self
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn read_be_u32(reader: &mut impl Read, path: &Path, offset: usize) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|_| DataError::Truncated {
        path: path.display().to_string(),
        offset,
        detail: "expected 4-byte big-endian integer".into(),
    })?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses an IDX image file: magic `0x00000803`, then big-endian counts
/// `(n, rows, cols)`, then `n*rows*cols` pixel bytes scaled to [0, 1].
pub fn load_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<f64>), DataError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let magic = read_be_u32(&mut reader, path, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = read_be_u32(&mut reader, path, 4)? as usize;
    let rows = read_be_u32(&mut reader, path, 8)? as usize;
    let cols = read_be_u32(&mut reader, path, 12)? as usize;
    let mut bytes = vec![0u8; n * rows * cols];
    reader.read_exact(&mut bytes).map_err(|_| DataError::Truncated {
        path: path.display().to_string(),
        offset: 16,
        detail: format!("expected {} pixel bytes", n * rows * cols),
    })?;
    let pixels = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, rows, cols, pixels))
}

/// Parses an IDX label file: magic `0x00000801`, big-endian count, label
/// bytes.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u32>, DataError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let magic = read_be_u32(&mut reader, path, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = read_be_u32(&mut reader, path, 4)? as usize;
    let mut bytes = vec![0u8; n];
    reader.read_exact(&mut bytes).map_err(|_| DataError::Truncated {
        path: path.display().to_string(),
        offset: 8,
        detail: format!("expected {n} label bytes"),
    })?;
    Ok(bytes.into_iter().map(u32::from).collect())
}

/// Loads a directory holding the conventional four IDX files
/// (`train-images-idx3-ubyte`, `train-labels-idx1-ubyte`, `t10k-...`).
pub fn load_idx_dir(dir: &Path) -> Result<Dataset, DataError> {
    let (n_train, rows, cols, mut features) =
        load_idx_images(&dir.join("train-images-idx3-ubyte"))?;
    let mut labels = load_idx_labels(&dir.join("train-labels-idx1-ubyte"))?;
    let (n_test, t_rows, t_cols, test_features) =
        load_idx_images(&dir.join("t10k-images-idx3-ubyte"))?;
    let test_labels = load_idx_labels(&dir.join("t10k-labels-idx1-ubyte"))?;
    if (rows, cols) != (t_rows, t_cols) {
        return Err(DataError::Inconsistent {
            detail: format!("train images are {rows}x{cols} but test images are {t_rows}x{t_cols}"),
        });
    }
    if labels.len() != n_train || test_labels.len() != n_test {
        return Err(DataError::Inconsistent {
            detail: "image and label counts disagree".into(),
        });
    }
    features.extend_from_slice(&test_features);
    labels.extend_from_slice(&test_labels);
    Dataset::new(
        features,
        labels,
        rows * cols,
        (0..n_train).collect(),
        (n_train..n_train + n_test).collect(),
        Normalization::PixelScale,
    )
}

/// Deterministic split used by the text loaders: every fifth sample goes to
/// the test split.
fn stride_split(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n / 5 + 1);
    for i in 0..n {
        if i % 5 == 4 {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Loads a headered CSV file with numeric columns; `label_column` names the
/// label. Features are standardized per column (statistics recorded in the
/// dataset's normalization metadata).
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let pstr = path.display().to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| io_err(path, e))?,
        None => return Err(DataError::Empty { path: pstr }),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_pos = columns.iter().position(|c| *c == label_column).ok_or_else(|| {
        DataError::Parse {
            path: pstr.clone(),
            line: 1,
            detail: format!("no column named `{label_column}` in header"),
        }
    })?;
    let d = columns.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(DataError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                detail: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        for (i, field) in fields.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| DataError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                detail: format!("`{field}` is not numeric"),
            })?;
            if i == label_pos {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(DataError::Parse {
                        path: pstr.clone(),
                        line: lineno + 1,
                        detail: format!("label `{field}` is not a non-negative integer"),
                    });
                }
                labels.push(value as u32);
            } else {
                features.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty { path: pstr });
    }

    // Standardize columns; constant columns keep std 1 to stay finite.
    let n = labels.len();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let mean = (0..n).map(|i| features[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (features[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        means[j] = mean;
        stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    for i in 0..n {
        for j in 0..d {
            features[i * d + j] = (features[i * d + j] - means[j]) / stds[j];
        }
    }

    let (train_idx, test_idx) = stride_split(n);
    Dataset::new(features, labels, d, train_idx, test_idx, Normalization::Standardized {
        means,
        stds,
    })
}

/// Loads a libsvm text file (`label idx:value ...`, 1-based indices). The
/// dimension is `dim` when given, otherwise the largest index seen. Labels
/// `-1` map to class 0.
pub fn load_libsvm(path: &Path, dim: Option<usize>) -> Result<Dataset, DataError> {
    let pstr = path.display().to_string();
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);

    let mut rows: Vec<(u32, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_str = parts.next().unwrap();
        let label_val: f64 = label_str.parse().map_err(|_| DataError::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            detail: format!("label `{label_str}` is not numeric"),
        })?;
        let label = if label_val == -1.0 { 0 } else { label_val as u32 };
        let mut entries = Vec::new();
        for part in parts {
            let (idx_str, val_str) = part.split_once(':').ok_or_else(|| DataError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                detail: format!("`{part}` is not an index:value pair"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| DataError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                detail: format!("index `{idx_str}` is not an integer"),
            })?;
            if idx == 0 {
                return Err(DataError::Parse {
                    path: pstr.clone(),
                    line: lineno + 1,
                    detail: "indices are 1-based".into(),
                });
            }
            let val: f64 = val_str.parse().map_err(|_| DataError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                detail: format!("value `{val_str}` is not numeric"),
            })?;
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push((label, entries));
    }
    if rows.is_empty() {
        return Err(DataError::Empty { path: pstr });
    }
    let d = dim.unwrap_or(max_index);
    if max_index > d {
        return Err(DataError::Inconsistent {
            detail: format!("feature index {max_index} exceeds declared dimension {d}"),
        });
    }

    let n = rows.len();
    let mut features = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for (i, (label, entries)) in rows.into_iter().enumerate() {
        labels.push(label);
        for (j, v) in entries {
            features[i * d + j] = v;
        }
    }
    let (train_idx, test_idx) = stride_split(n);
    Dataset::new(features, labels, d, train_idx, test_idx, Normalization::None)
}
