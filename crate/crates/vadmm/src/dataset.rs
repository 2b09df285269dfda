//! LIBSVM ingestion, label mapping, vertical partitioning and per-shard
//! spectral quantities.
//!
//! A dataset is split by *columns*: every party holds the same sample rows
//! but a disjoint, contiguous block of features. [`PartyShard`] is the unit
//! of partitioning and lazily caches its Gram matrix and the extreme
//! eigenvalues needed by the penalty-feasibility checks.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Shards this wide (or narrower) get their extreme eigenvalues from a dense
/// symmetric eigensolve; wider shards use power/inverse-power iteration.
const DENSE_EIGEN_MAX: usize = 512;
/// Iteration cap for the power/inverse-power paths.
const EIGEN_MAX_ITERS: usize = 10_000;
/// Relative accuracy target for iterative eigenvalue estimates.
const EIGEN_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: feature indices must be strictly ascending (index {index} after {previous})")]
    NonAscending { line: usize, previous: usize, index: usize },
    #[error("expected exactly two distinct label values, found {found:?}")]
    LabelCardinality { found: Vec<f64> },
    #[error("partition widths sum to {got} but the dataset has {expected} columns")]
    BoundaryMismatch { expected: usize, got: usize },
    #[error("partition widths must all be at least 1")]
    EmptyPartition,
    #[error("eigenvalue iteration did not converge within {EIGEN_MAX_ITERS} steps (best estimates: min {best_min:.6e}, max {best_max:.6e})")]
    EigenNoConvergence { best_min: f64, best_max: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major sample matrix plus one label per row.
///
/// Labels are kept exactly as parsed until [`relabel`] maps them onto
/// {-1, +1}; everything downstream assumes the mapped form.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Self {
        assert_eq!(features.nrows(), labels.len(), "one label per sample row");
        Self { features, labels }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// First `n` sample rows as a new dataset.
    pub fn head(&self, n: usize) -> LabeledDataset {
        assert!(n <= self.n_samples());
        LabeledDataset {
            features: self.features.rows(0, n).into_owned(),
            labels: self.labels.rows(0, n).into_owned(),
        }
    }
}

/// How the mapped {-1, +1} labels relate to the raw file values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelMap {
    pub negative: f64,
    pub positive: f64,
}

/// Parse LIBSVM text (`label idx:val idx:val ...`, 1-based ascending
/// indices) into a dense-logical dataset.
///
/// The feature count is the largest index seen unless `forced_dim` pins it
/// (used to align train/test files that omit trailing columns). Raw labels
/// are preserved for [`relabel`].
pub fn parse_libsvm<R: BufRead>(reader: R, forced_dim: Option<usize>) -> Result<LabeledDataset, DatasetError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_tok.parse().map_err(|_| DatasetError::Parse {
            line: line_no,
            msg: format!("malformed label {label_tok:?}"),
        })?;
        if !label.is_finite() {
            return Err(DatasetError::Parse {
                line: line_no,
                msg: format!("non-finite label {label_tok:?}"),
            });
        }

        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut previous = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| DatasetError::Parse {
                line: line_no,
                msg: format!("malformed token {tok:?}, expected index:value"),
            })?;
            let index: usize = idx_str.parse().map_err(|_| DatasetError::Parse {
                line: line_no,
                msg: format!("malformed feature index {idx_str:?}"),
            })?;
            if index == 0 {
                return Err(DatasetError::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".to_string(),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| DatasetError::Parse {
                line: line_no,
                msg: format!("malformed feature value {val_str:?}"),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value {val_str:?}"),
                });
            }
            if index <= previous {
                return Err(DatasetError::NonAscending { line: line_no, previous, index });
            }
            previous = index;
            max_index = max_index.max(index);
            entries.push((index - 1, value));
        }
        raw_labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(DatasetError::Parse { line: 0, msg: "no samples in stream".to_string() });
    }

    let dim = match forced_dim {
        Some(d) if d < max_index => {
            return Err(DatasetError::Parse {
                line: 0,
                msg: format!("forced dimension {d} is smaller than max index {max_index}"),
            })
        }
        Some(d) => d,
        None => max_index,
    };

    let mut features = DMatrix::<f64>::zeros(rows.len(), dim);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[(i, j)] = v;
        }
    }
    Ok(LabeledDataset::new(features, DVector::from_vec(raw_labels)))
}

/// Write a dataset back out in LIBSVM text form (zeros omitted).
pub fn serialize_libsvm<W: Write>(ds: &LabeledDataset, mut w: W) -> Result<(), DatasetError> {
    let mut line = String::new();
    for i in 0..ds.n_samples() {
        line.clear();
        line.push_str(&format!("{}", ds.labels[i]));
        for j in 0..ds.n_features() {
            let v = ds.features[(i, j)];
            if v != 0.0 {
                line.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Map two-valued raw labels onto {-1, +1}: the smaller raw value becomes -1.
pub fn relabel(ds: &LabeledDataset) -> Result<(LabeledDataset, LabelMap), DatasetError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in ds.labels.iter() {
        if !distinct.iter().any(|&d| d == v) {
            distinct.push(v);
        }
        if distinct.len() > 2 {
            break;
        }
    }
    if distinct.len() != 2 {
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return Err(DatasetError::LabelCardinality { found: distinct });
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let map = LabelMap { negative: distinct[0], positive: distinct[1] };
    let labels = ds.labels.map(|v| if v == map.negative { -1.0 } else { 1.0 });
    Ok((LabeledDataset::new(ds.features.clone(), labels), map))
}

/// Ordered list of per-party column counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    widths: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self, DatasetError> {
        if widths.is_empty() || widths.iter().any(|&w| w == 0) {
            return Err(DatasetError::EmptyPartition);
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_parties(&self) -> usize {
        self.widths.len()
    }

    pub fn total_features(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Column offset where party `m`'s block starts.
    pub fn offset(&self, m: usize) -> usize {
        self.widths[..m].iter().sum()
    }
}

/// One party's contiguous feature block, with lazily cached Gram data.
pub struct PartyShard {
    party_id: usize,
    block: DMatrix<f64>,
    gram: OnceLock<DMatrix<f64>>,
    extremes: OnceLock<(f64, f64)>,
}

impl fmt::Debug for PartyShard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartyShard")
            .field("party_id", &self.party_id)
            .field("n_samples", &self.block.nrows())
            .field("width", &self.block.ncols())
            .finish()
    }
}

impl Clone for PartyShard {
    fn clone(&self) -> Self {
        let shard = PartyShard::new(self.party_id, self.block.clone());
        if let Some(g) = self.gram.get() {
            let _ = shard.gram.set(g.clone());
        }
        if let Some(e) = self.extremes.get() {
            let _ = shard.extremes.set(*e);
        }
        shard
    }
}

impl PartyShard {
    pub fn new(party_id: usize, block: DMatrix<f64>) -> Self {
        assert!(block.ncols() > 0 && block.nrows() > 0, "shard block must be non-empty");
        Self { party_id, block, gram: OnceLock::new(), extremes: OnceLock::new() }
    }

    pub fn party_id(&self) -> usize {
        self.party_id
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn width(&self) -> usize {
        self.block.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.block.nrows()
    }

    /// `block * x` — the party's share of the aggregate.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.block * x
    }

    /// `blockᵀ * v` without materializing the transpose.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        self.block.tr_mul(v)
    }

    /// `blockᵀ · block`, computed on first use.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| self.block.tr_mul(&self.block))
    }

    /// Smallest and largest eigenvalues of the Gram matrix.
    pub fn gram_extremes(&self) -> Result<(f64, f64), DatasetError> {
        if let Some(&e) = self.extremes.get() {
            return Ok(e);
        }
        let gram = self.gram();
        let e = if self.width() <= DENSE_EIGEN_MAX {
            dense_extremes(gram)
        } else {
            iterative_extremes(gram)?
        };
        let _ = self.extremes.set(e);
        Ok(e)
    }
}

fn dense_extremes(gram: &DMatrix<f64>) -> (f64, f64) {
    let eig = gram.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Gram matrices are PSD; tiny negative eigenvalues are roundoff.
    (lo.max(0.0), hi.max(0.0))
}

/// Power iteration with Rayleigh-quotient convergence on the matrix itself
/// (largest) and on a Cholesky-backed inverse (smallest).
pub(crate) fn iterative_extremes(gram: &DMatrix<f64>) -> Result<(f64, f64), DatasetError> {
    let d = gram.nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5641_0001);
    let start = DVector::<f64>::from_fn(d, |_, _| rng.random::<f64>() - 0.5);

    let hi = power_iterate(start.clone(), |v| gram * v);
    let hi_val = match hi {
        Ok(v) => v,
        Err(best) => return Err(DatasetError::EigenNoConvergence { best_min: 0.0, best_max: best }),
    };

    // Inverse iteration; shift slightly if the Gram matrix is singular.
    let mut shift = 0.0;
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            shift = hi_val.max(1.0) * 1e-12;
            let mut shifted = gram.clone();
            for i in 0..d {
                shifted[(i, i)] += shift;
            }
            match shifted.cholesky() {
                Some(c) => c,
                // Numerically rank-deficient beyond repair at this scale.
                None => return Ok((0.0, hi_val)),
            }
        }
    };
    let lo = power_iterate(start, |v| chol.solve(v));
    let lo_val = match lo {
        Ok(v) => (1.0 / v - shift).max(0.0),
        Err(best) => {
            return Err(DatasetError::EigenNoConvergence {
                best_min: (1.0 / best - shift).max(0.0),
                best_max: hi_val,
            })
        }
    };
    Ok((lo_val, hi_val))
}

fn power_iterate<F>(mut v: DVector<f64>, apply: F) -> Result<f64, f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v /= norm;
    let mut rq_prev = f64::NAN;
    for _ in 0..EIGEN_MAX_ITERS {
        let w = apply(&v);
        let rq = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
        if rq_prev.is_finite() && (rq - rq_prev).abs() <= EIGEN_REL_TOL * rq.abs().max(1e-300) {
            return Ok(rq);
        }
        rq_prev = rq;
    }
    Err(rq_prev)
}

/// Split a dataset into contiguous per-party shards.
pub fn vertical_split(ds: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<PartyShard>, DatasetError> {
    if spec.total_features() != ds.n_features() {
        return Err(DatasetError::BoundaryMismatch {
            expected: ds.n_features(),
            got: spec.total_features(),
        });
    }
    let mut shards = Vec::with_capacity(spec.n_parties());
    let mut offset = 0;
    for (m, &w) in spec.widths().iter().enumerate() {
        let block = ds.features.columns(offset, w).into_owned();
        shards.push(PartyShard::new(m, block));
        offset += w;
    }
    Ok(shards)
}

/// Split a bare matrix the same way (used for test-set blocks).
pub fn split_matrix(features: &DMatrix<f64>, spec: &PartitionSpec) -> Result<Vec<DMatrix<f64>>, DatasetError> {
    if spec.total_features() != features.ncols() {
        return Err(DatasetError::BoundaryMismatch {
            expected: features.ncols(),
            got: spec.total_features(),
        });
    }
    let mut blocks = Vec::with_capacity(spec.n_parties());
    let mut offset = 0;
    for &w in spec.widths() {
        blocks.push(features.columns(offset, w).into_owned());
        offset += w;
    }
    Ok(blocks)
}

/// Indices of rows that could not be normalized because they are all zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizeReport {
    pub zero_rows: Vec<usize>,
}

/// Rescale every nonzero row of the shard block to unit l2 norm.
/// Zero rows are left alone and reported.
pub fn normalize_rows(shard: &PartyShard) -> (PartyShard, NormalizeReport) {
    let (block, report) = normalize_matrix_rows(shard.block());
    (PartyShard::new(shard.party_id(), block), report)
}

pub fn normalize_matrix_rows(m: &DMatrix<f64>) -> (DMatrix<f64>, NormalizeReport) {
    let mut out = m.clone();
    let mut report = NormalizeReport::default();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm == 0.0 {
            report.zero_rows.push(i);
        } else {
            let mut row = out.row_mut(i);
            row /= norm;
        }
    }
    (out, report)
}

/// Rescale full dataset rows (across all parties) to unit l2 norm.
pub fn normalize_dataset_rows(ds: &LabeledDataset) -> (LabeledDataset, NormalizeReport) {
    let (features, report) = normalize_matrix_rows(ds.features());
    (LabeledDataset::new(features, ds.labels().clone()), report)
}
