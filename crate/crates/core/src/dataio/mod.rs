//! Cohort records, manifest and matrix files, and the synthetic cohort
//! generator.
//!
//! A cohort on disk is a directory holding `manifest.csv` and one CSV file
//! per connectivity matrix. The manifest header is
//! `subject_id,label,age,sex,site,func_path,struct_path`; matrix paths are
//! resolved relative to the manifest. An optional first line
//! `# func_regions=<R> struct_regions=<R>` pins the expected matrix sizes.

mod files;
mod synth;

pub use files::{load_cohort, load_cohort_with, read_matrix_csv, save_cohort, write_matrix_csv, LoadOptions};
pub use synth::{generate_synthetic_cohort, SyntheticSpec};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::Mat;

pub const DEFAULT_FUNC_REGIONS: usize = 111;
pub const DEFAULT_STRUCT_REGIONS: usize = 116;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("subject {subject}: {path} holds a {found}x{found_cols} matrix, expected {expected}x{expected}")]
    Shape {
        subject: String,
        path: PathBuf,
        expected: usize,
        found: usize,
        found_cols: usize,
    },
    #[error("subject {subject}: {path} is not symmetric at ({row}, {col}): |{a} - {b}| > {tolerance}")]
    Asymmetric {
        subject: String,
        path: PathBuf,
        row: usize,
        col: usize,
        a: f64,
        b: f64,
        tolerance: f64,
    },
    #[error("subject {subject}: functional matrix entry {value} at ({row}, {col}) outside [-1, 1]")]
    OutOfRange {
        subject: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("duplicate subject id {0}")]
    DuplicateId(String),
    #[error("subject {subject}: unknown sex code `{code}` (expected F or M)")]
    UnknownSex { subject: String, code: String },
    #[error("subject {subject}: invalid label `{value}` (expected 0 = TD or 1 = ASD)")]
    InvalidLabel { subject: String, value: String },
    #[error("subject {subject}: invalid field {field}: {message}")]
    InvalidField {
        subject: String,
        field: &'static str,
        message: String,
    },
    #[error("region {region} has a constant time series")]
    DegenerateSeries { region: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Diagnostic class. TD is the negative class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Td = 0,
    Asd = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Td),
            1 => Some(Label::Asd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn code(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        match code.trim() {
            "F" => Some(Sex::Female),
            "M" => Some(Sex::Male),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Square region-by-region connectivity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    values: Mat,
}

impl ConnectivityMatrix {
    /// Wraps a square matrix. Symmetry is checked separately.
    pub fn new(values: Mat) -> Result<Self, DataError> {
        if values.nrows() != values.ncols() {
            return Err(DataError::Param(format!(
                "connectivity matrix must be square, got {:?}",
                values.dim()
            )));
        }
        Ok(Self { values })
    }

    pub fn n_regions(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }

    /// First `(i, j, |m_ij - m_ji|)` exceeding `tolerance`.
    pub fn asymmetry(&self, tolerance: f64) -> Option<(usize, usize, f64)> {
        let n = self.n_regions();
        for i in 0..n {
            for j in i + 1..n {
                let d = (self.values[[i, j]] - self.values[[j, i]]).abs();
                if d > tolerance || d.is_nan() {
                    return Some((i, j, d));
                }
            }
        }
        None
    }

    pub fn is_symmetric(&self, tolerance: f64) -> bool {
        self.asymmetry(tolerance).is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: Label,
    pub age: f64,
    pub sex: Sex,
    pub site: String,
    pub func_matrix: ConnectivityMatrix,
    pub struct_matrix: ConnectivityMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub subjects: Vec<SubjectRecord>,
    pub func_regions: usize,
    pub struct_regions: usize,
}

impl CohortManifest {
    /// Checks every cohort invariant.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(DataError::DuplicateId(s.subject_id.clone()));
            }
            if !(s.age > 0.0 && s.age.is_finite()) {
                return Err(DataError::InvalidField {
                    subject: s.subject_id.clone(),
                    field: "age",
                    message: format!("age must be positive, got {}", s.age),
                });
            }
            if s.site.trim().is_empty() {
                return Err(DataError::InvalidField {
                    subject: s.subject_id.clone(),
                    field: "site",
                    message: "site code is empty".into(),
                });
            }
            for (m, expected, path) in [
                (&s.func_matrix, self.func_regions, "func_matrix"),
                (&s.struct_matrix, self.struct_regions, "struct_matrix"),
            ] {
                if m.n_regions() != expected {
                    return Err(DataError::Shape {
                        subject: s.subject_id.clone(),
                        path: PathBuf::from(path),
                        expected,
                        found: m.n_regions(),
                        found_cols: m.n_regions(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    pub fn sites(&self) -> Vec<&str> {
        self.subjects.iter().map(|s| s.site.as_str()).collect()
    }
}

/// Pearson correlation between the columns of a `T×R` time-series matrix.
pub fn pearson_connectivity(timeseries: &Mat) -> Result<ConnectivityMatrix, DataError> {
    let (t, r) = timeseries.dim();
    if t < 3 {
        return Err(DataError::Param(format!(
            "need at least 3 time points, got {t}"
        )));
    }
    let mut centered = timeseries.clone();
    let mut norms = Vec::with_capacity(r);
    for (region, mut col) in centered.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / t as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(DataError::DegenerateSeries { region });
        }
        col.mapv_inplace(|v| v / norm);
        norms.push(norm);
    }
    let mut corr = centered.t().dot(&centered);
    for i in 0..r {
        corr[[i, i]] = 1.0;
        for j in i + 1..r {
            let v = corr[[i, j]].clamp(-1.0, 1.0);
            corr[[i, j]] = v;
            corr[[j, i]] = v;
        }
    }
    ConnectivityMatrix::new(corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_and_negated_columns() {
        let base = [0.3, -1.0, 2.0, 0.5, 1.5, -0.7];
        let ts = Array2::from_shape_fn((6, 3), |(t, c)| match c {
            0 | 1 => base[t],
            _ => -base[t],
        });
        let m = pearson_connectivity(&ts).unwrap();
        assert!((m.values()[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((m.values()[[0, 2]] + 1.0).abs() < 1e-12);
        assert_eq!(m.values()[[2, 2]], 1.0);
    }

    #[test]
    fn white_noise_is_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ts = Array2::from_shape_simple_fn((10_000, 3), || StandardNormal.sample(&mut rng));
        let m = pearson_connectivity(&ts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(m.values()[[i, j]].abs() < 0.05);
                }
            }
        }
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn constant_column_is_rejected() {
        let ts = Array2::from_shape_fn((5, 2), |(t, c)| if c == 1 { 4.0 } else { t as f64 });
        assert!(matches!(
            pearson_connectivity(&ts),
            Err(DataError::DegenerateSeries { region: 1 })
        ));
    }

    #[test]
    fn too_few_time_points() {
        let ts = Array2::from_shape_fn((2, 2), |(t, c)| (t + c) as f64);
        assert!(pearson_connectivity(&ts).is_err());
    }

    #[test]
    fn sex_codes() {
        assert_eq!(Sex::parse("F"), Some(Sex::Female));
        assert_eq!(Sex::parse("M"), Some(Sex::Male));
        assert_eq!(Sex::parse("X"), None);
        assert_eq!(Sex::Male.to_string(), "M");
    }
}
