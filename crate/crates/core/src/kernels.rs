//! Similarity kernels: the random-forest proximity kernel, the Laplace
//! kernel, the Mantel matrix correlation, and kernel import/export.

use std::io::{BufRead, BufReader, Read, Write};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::forest::Forest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rf,
    Laplace,
    Custom,
}

impl KernelKind {
    fn code(self) -> u8 {
        match self {
            KernelKind::Rf => 0,
            KernelKind::Laplace => 1,
            KernelKind::Custom => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(KernelKind::Rf),
            1 => Ok(KernelKind::Laplace),
            2 => Ok(KernelKind::Custom),
            other => Err(Error::Schema(format!("unknown kernel kind code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Rf => "rf",
            KernelKind::Laplace => "laplace",
            KernelKind::Custom => "custom",
        }
    }

    fn from_name(name: &str) -> Self {
        match name.trim() {
            "rf" => KernelKind::Rf,
            "laplace" => KernelKind::Laplace,
            _ => KernelKind::Custom,
        }
    }
}

/// Dense kernel matrix between a set of row samples and a set of column
/// samples. Square train-by-train kernels share `row_ids` and `col_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: Array2<f64>,
    pub row_ids: Vec<usize>,
    pub col_ids: Vec<usize>,
    pub kind: KernelKind,
}

impl KernelMatrix {
    /// Wraps `values` with ids `0..rows` and `0..cols`.
    pub fn new(values: Array2<f64>, kind: KernelKind) -> Self {
        let (r, c) = values.dim();
        Self {
            values,
            row_ids: (0..r).collect(),
            col_ids: (0..c).collect(),
            kind,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.nrows().min(self.ncols());
        if n == 0 {
            return 0.0;
        }
        self.values.diag().sum() / n as f64
    }

    /// Sub-kernel on the given row and column positions.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows).select(Axis(1), cols),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
            col_ids: cols.iter().map(|&j| self.col_ids[j]).collect(),
            kind: self.kind,
        }
    }
}

/// RF proximity kernel: entry `(i, j)` is the fraction of trees in which
/// `a[i]` and `b[j]` land in the same terminal node.
///
/// Counts are accumulated as integers, so `rf_kernel(f, x, x)` is exactly
/// symmetric with a unit diagonal and every entry is `k / M`.
pub fn rf_kernel(forest: &Forest, a: &FeatureMatrix, b: &FeatureMatrix) -> Result<KernelMatrix> {
    let ids_a = forest.terminal_leaf_ids(a)?;
    let ids_b = forest.terminal_leaf_ids(b)?;
    let m = forest.n_trees();
    let (na, nb) = (a.nrows(), b.nrows());

    // Per tree, bucket the columns by leaf id (a counting sort).
    let buckets: Vec<(Vec<usize>, Vec<u32>)> = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let leaves = tree.n_leaves();
            let mut start = vec![0usize; leaves + 1];
            for j in 0..nb {
                start[ids_b[[j, t]] as usize + 1] += 1;
            }
            for l in 0..leaves {
                start[l + 1] += start[l];
            }
            let mut fill = start.clone();
            let mut members = vec![0u32; nb];
            for j in 0..nb {
                let leaf = ids_b[[j, t]] as usize;
                members[fill[leaf]] = j as u32;
                fill[leaf] += 1;
            }
            (start, members)
        })
        .collect();

    let rows: Vec<Vec<u32>> = (0..na)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u32; nb];
            for (t, (start, members)) in buckets.iter().enumerate() {
                let leaf = ids_a[[i, t]] as usize;
                for &j in &members[start[leaf]..start[leaf + 1]] {
                    counts[j as usize] += 1;
                }
            }
            counts
        })
        .collect();

    let m = m as f64;
    let mut values = Array2::zeros((na, nb));
    for (i, counts) in rows.iter().enumerate() {
        for (j, &c) in counts.iter().enumerate() {
            values[[i, j]] = f64::from(c) / m;
        }
    }
    Ok(KernelMatrix::new(values, KernelKind::Rf))
}

/// Distance inside the Laplace kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplaceNorm {
    /// Manhattan distance `||a - b||_1`.
    #[default]
    L1,
    /// Euclidean distance `||a - b||_2`.
    L2,
}

/// Laplace kernel `exp(-||a_i - b_j||_1 / sigma)`.
pub fn laplace_kernel(a: &FeatureMatrix, b: &FeatureMatrix, sigma: f64) -> Result<KernelMatrix> {
    laplace_kernel_with(a, b, sigma, LaplaceNorm::L1)
}

/// Laplace kernel `exp(-||a_i - b_j|| / sigma)` under the chosen norm.
pub fn laplace_kernel_with(a: &FeatureMatrix, b: &FeatureMatrix, sigma: f64, norm: LaplaceNorm) -> Result<KernelMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    let (na, nb) = (a.nrows(), b.nrows());
    let rows: Vec<Vec<f64>> = (0..na)
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            (0..nb)
                .map(|j| {
                    let d = match norm {
                        LaplaceNorm::L1 => ai.iter().zip(b.row(j)).map(|(x, y)| (x - y).abs()).sum::<f64>(),
                        LaplaceNorm::L2 => ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
                    };
                    (-d / sigma).exp()
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((na, nb), flat).expect("kernel shape");
    Ok(KernelMatrix::new(values, KernelKind::Laplace))
}

/// Pearson correlation between the strictly-lower-triangular entries of
/// two square kernels over the same samples.
pub fn mantel_statistic(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    if !k1.is_square() || k1.values.dim() != k2.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "Mantel statistic needs two square kernels of equal size, got {:?} and {:?}",
            k1.values.dim(),
            k2.values.dim()
        )));
    }
    if k1.row_ids != k2.row_ids {
        return Err(Error::ShapeMismatch("kernels are over different samples".into()));
    }
    let n = k1.nrows();
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs < 2 {
        return Err(Error::ZeroVariance("fewer than two off-diagonal entries".into()));
    }
    let lower = |k: &KernelMatrix| -> Vec<f64> {
        (1..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| k.values[[i, j]]).collect()
    };
    let (x, y) = (lower(k1), lower(k2));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&x), mean(&y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("kernel is constant off the diagonal".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Equal-width histogram over `[lo, hi]`; values equal to `hi` fall in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Self {
        let width = (hi - lo) / bins as f64;
        Self {
            edges: (0..=bins).map(|k| lo + width * k as f64).collect(),
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the fullest bin (lowest index on ties), or `None` when empty.
    pub fn mode_bin(&self) -> Option<usize> {
        if self.total() == 0 {
            return None;
        }
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        Some(best)
    }
}

/// Kernel values of same-class and cross-class pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPairHistograms {
    pub same_class: Histogram,
    pub cross_class: Histogram,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Histograms of off-diagonal kernel entries (each unordered pair once),
/// split by whether the two samples share a label.
pub fn kernel_value_histogram<L: PartialEq>(k: &KernelMatrix, labels: &[L], bins: usize) -> Result<ClassPairHistograms> {
    if !k.is_square() || labels.len() != k.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "kernel {:?} with {} labels",
            k.values.dim(),
            labels.len()
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let mut same = Histogram::new(bins, 0.0, 1.0);
    let mut cross = Histogram::new(bins, 0.0, 1.0);
    for i in 1..k.nrows() {
        for j in 0..i {
            let v = k.values[[i, j]];
            if labels[i] == labels[j] {
                same.add(v);
            } else {
                cross.add(v);
            }
        }
    }
    Ok(ClassPairHistograms {
        same_class: same,
        cross_class: cross,
    })
}

/// On-disk kernel encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFormat {
    /// Header `<kind>,<col ids...>` (kind is `rf`, `laplace` or `custom`),
    /// then one line per row starting with its id; values printed with
    /// round-trip precision.
    Csv,
    /// Magic `RFKM`, `u32` version, `u8` kind, `u64` rows, `u64` cols,
    /// row ids and col ids as `u64`, then `f64` values row-major; all
    /// little-endian.
    Binary,
}

const MAGIC: &[u8; 4] = b"RFKM";
const BINARY_VERSION: u32 = 1;

pub fn write_kernel<W: Write>(k: &KernelMatrix, format: KernelFormat, mut w: W) -> Result<()> {
    match format {
        KernelFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            let mut header = vec![k.kind.name().to_string()];
            header.extend(k.col_ids.iter().map(|c| c.to_string()));
            out.write_record(&header)?;
            for (i, row) in k.values.rows().into_iter().enumerate() {
                let mut rec = vec![k.row_ids[i].to_string()];
                rec.extend(row.iter().map(|v| format!("{v:?}")));
                out.write_record(&rec)?;
            }
            out.flush()?;
        }
        KernelFormat::Binary => {
            w.write_all(MAGIC)?;
            w.write_all(&BINARY_VERSION.to_le_bytes())?;
            w.write_all(&[k.kind.code()])?;
            w.write_all(&(k.nrows() as u64).to_le_bytes())?;
            w.write_all(&(k.ncols() as u64).to_le_bytes())?;
            for &id in k.row_ids.iter().chain(&k.col_ids) {
                w.write_all(&(id as u64).to_le_bytes())?;
            }
            for v in &k.values {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_kernel<R: Read>(format: KernelFormat, r: R) -> Result<KernelMatrix> {
    match format {
        KernelFormat::Csv => read_kernel_csv(r),
        KernelFormat::Binary => read_kernel_binary(r),
    }
}

fn read_kernel_csv<R: Read>(r: R) -> Result<KernelMatrix> {
    let mut reader = csv::Reader::from_reader(r);
    let parse_id = |s: &str, line: u64| {
        s.trim().parse::<usize>().map_err(|e| Error::Parse {
            line,
            message: format!("bad id `{s}`: {e}"),
        })
    };
    let header = reader.headers()?.clone();
    let kind = KernelKind::from_name(header.get(0).unwrap_or(""));
    let col_ids = header.iter().skip(1).map(|s| parse_id(s, 1)).collect::<Result<Vec<_>>>()?;
    let mut row_ids = Vec::new();
    let mut flat = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != col_ids.len() + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", col_ids.len() + 1, rec.len()),
            });
        }
        row_ids.push(parse_id(&rec[0], line)?);
        for field in rec.iter().skip(1) {
            flat.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad value `{field}`: {e}"),
            })?);
        }
    }
    let values = Array2::from_shape_vec((row_ids.len(), col_ids.len()), flat)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(KernelMatrix {
        values,
        row_ids,
        col_ids,
        kind,
    })
}

fn read_kernel_binary<R: Read>(r: R) -> Result<KernelMatrix> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Schema("not a binary kernel file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != BINARY_VERSION {
        return Err(Error::Schema(format!("unsupported kernel file version {version}")));
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let kind = KernelKind::from_code(b1[0])?;
    let mut b8 = [0u8; 8];
    let mut next_u64 = |r: &mut BufReader<R>| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let rows = next_u64(&mut r)? as usize;
    let cols = next_u64(&mut r)? as usize;
    let row_ids = (0..rows).map(|_| next_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let col_ids = (0..cols).map(|_| next_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let flat = (0..rows * cols)
        .map(|_| next_u64(&mut r).map(f64::from_bits))
        .collect::<Result<Vec<_>>>()?;
    if !r.fill_buf()?.is_empty() {
        return Err(Error::Schema("trailing bytes after kernel values".into()));
    }
    let values = Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(KernelMatrix {
        values,
        row_ids,
        col_ids,
        kind,
    })
}
