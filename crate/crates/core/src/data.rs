//! Feature matrices and target containers shared by every module.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x p` table of real-valued features with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    names: Vec<String>,
}

impl FeatureMatrix {
    /// Wraps a matrix, naming the columns `x1..xp`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(values, names)
    }

    pub fn with_names(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                got: names.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Self { values, names })
    }

    /// Builds a matrix from row vectors; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), indices),
            names: self.names.clone(),
        }
    }
}

/// Which kind of response a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Continuous,
    Binary,
    Survival,
    /// Multi-class labels; only used to grow forests for proximity kernels.
    Class,
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TargetKind::Continuous => "continuous",
            TargetKind::Binary => "binary",
            TargetKind::Survival => "survival",
            TargetKind::Class => "class",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" | "regression" => Ok(TargetKind::Continuous),
            "binary" | "classification" => Ok(TargetKind::Binary),
            "survival" => Ok(TargetKind::Survival),
            "class" | "multiclass" => Ok(TargetKind::Class),
            other => Err(Error::InvalidParameter(format!("unknown target kind `{other}`"))),
        }
    }
}

/// Right-censored survival outcomes: observed time and event indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalData {
    pub time: Vec<f64>,
    /// `true` when the event was observed, `false` when right-censored.
    pub event: Vec<bool>,
}

impl SurvivalData {
    pub fn new(time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        if time.len() != event.len() {
            return Err(Error::DimensionMismatch {
                expected: time.len(),
                got: event.len(),
            });
        }
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "survival times must be finite and positive, got {t}"
            )));
        }
        Ok(Self { time, event })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Event indicator as 0.0 / 1.0.
    #[inline]
    pub fn delta(&self, i: usize) -> f64 {
        if self.event[i] {
            1.0
        } else {
            0.0
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            time: indices.iter().map(|&i| self.time[i]).collect(),
            event: indices.iter().map(|&i| self.event[i]).collect(),
        }
    }
}

/// Response vector, tagged by kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Continuous(Vec<f64>),
    /// Labels in {-1, +1}.
    Binary(Vec<i8>),
    Survival(SurvivalData),
    /// Class indices `0..k`.
    Class(Vec<u32>),
}

impl Target {
    /// Validates binary labels.
    pub fn binary(labels: Vec<i8>) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidLabel(f64::from(l)));
        }
        Ok(Target::Binary(labels))
    }

    pub fn len(&self) -> usize {
        match self {
            Target::Continuous(y) => y.len(),
            Target::Binary(y) => y.len(),
            Target::Survival(s) => s.len(),
            Target::Class(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Continuous(_) => TargetKind::Continuous,
            Target::Binary(_) => TargetKind::Binary,
            Target::Survival(_) => TargetKind::Survival,
            Target::Class(_) => TargetKind::Class,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Target::Continuous(y) => Target::Continuous(indices.iter().map(|&i| y[i]).collect()),
            Target::Binary(y) => Target::Binary(indices.iter().map(|&i| y[i]).collect()),
            Target::Survival(s) => Target::Survival(s.select(indices)),
            Target::Class(y) => Target::Class(indices.iter().map(|&i| y[i]).collect()),
        }
    }

    /// Numeric view used by the linear kernel models: the response for
    /// continuous targets and +/-1 for binary targets.
    pub fn as_regression_target(&self) -> Option<Vec<f64>> {
        match self {
            Target::Continuous(y) => Some(y.clone()),
            Target::Binary(y) => Some(y.iter().map(|&l| f64::from(l)).collect()),
            _ => None,
        }
    }
}
