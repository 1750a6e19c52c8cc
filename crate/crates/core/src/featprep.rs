//! Per-modality feature extraction fitted on training subjects only:
//! upper-triangle vectorization, recursive feature elimination driven by
//! ridge weights, and z-scoring.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::ConnectivityMatrix;
use crate::numcore::Mat;

pub const DEFAULT_TARGET_DIM: usize = 2400;
pub const DEFAULT_RIDGE_ALPHA: f64 = 1.0;
pub const DEFAULT_DROP_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("selected feature {index} has zero variance on the training set")]
    ZeroVariance { index: usize },
    #[error("ridge system is not positive definite")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Functional,
    Structural,
}

/// Fitted selection plus standardization for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub modality: Modality,
    /// Length of the raw vectorized feature space.
    pub input_dim: usize,
    pub selected_indices: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub ridge_alpha: f64,
    pub drop_fraction: f64,
    pub target_dim: usize,
}

/// `R(R-1)/2` row-major upper-triangle entries, diagonal excluded.
pub fn vectorize_upper_triangular(m: &ConnectivityMatrix) -> Result<Vec<f64>, FeatureError> {
    if let Some((i, j, _)) = m.asymmetry(1e-9) {
        return Err(FeatureError::Asymmetric(i, j));
    }
    let r = m.n_regions();
    let v = m.values();
    let mut out = Vec::with_capacity(r * r.saturating_sub(1) / 2);
    for i in 0..r {
        for j in i + 1..r {
            out.push(v[[i, j]]);
        }
    }
    Ok(out)
}

/// Inverse of [`vectorize_upper_triangular`] for zero-diagonal matrices.
pub fn devectorize_upper_triangular(features: &[f64]) -> Result<Mat, FeatureError> {
    // solve r(r-1)/2 = len
    let len = features.len();
    let r = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    if r * (r - 1) / 2 != len {
        return Err(FeatureError::Param(format!(
            "{len} is not a triangular number of pairs"
        )));
    }
    let mut m = Mat::zeros((r, r));
    let mut k = 0;
    for i in 0..r {
        for j in i + 1..r {
            m[[i, j]] = features[k];
            m[[j, i]] = features[k];
            k += 1;
        }
    }
    Ok(m)
}

/// Stacks vectorized matrices into an `n×d` design matrix.
pub fn vectorize_all<'a, I>(matrices: I) -> Result<Mat, FeatureError>
where
    I: IntoIterator<Item = &'a ConnectivityMatrix>,
{
    let rows: Vec<Vec<f64>> = matrices
        .into_iter()
        .map(vectorize_upper_triangular)
        .collect::<Result<_, _>>()?;
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(FeatureError::Param("matrices differ in size".into()));
    }
    let n = rows.len();
    Ok(Mat::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .expect("row lengths checked"))
}

fn cholesky_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, FeatureError> {
    let chol = a.cholesky().ok_or(FeatureError::Singular)?;
    Ok(chol.solve(&b))
}

/// Ridge weights `(XᵀX + αI)⁻¹Xᵀy` on column-centered `X` and centered `y`.
///
/// Uses the equivalent `Xᵀ(XXᵀ + αI)⁻¹y` form when `n < d`.
pub fn ridge_fit(x: &Mat, y: &[f64], alpha: f64) -> Result<Vec<f64>, FeatureError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(FeatureError::Param(format!("ridge alpha must be positive, got {alpha}")));
    }
    let (n, d) = x.dim();
    if n < 2 || y.len() != n {
        return Err(FeatureError::Param(format!(
            "ridge needs n >= 2 rows matching {} targets, got {n}",
            y.len()
        )));
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    let col_means = x.mean_axis(Axis(0)).expect("n >= 2");
    let xc = x - &col_means;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc = Array1::from_iter(y.iter().map(|v| v - y_mean));

    let w = if n < d {
        let mut gram = xc.dot(&xc.t());
        gram.diag_mut().mapv_inplace(|v| v + alpha);
        let a = DMatrix::from_row_iterator(n, n, gram.iter().copied());
        let c = cholesky_solve(a, DVector::from_iterator(n, yc.iter().copied()))?;
        let c = Array1::from_iter(c.iter().copied());
        xc.t().dot(&c)
    } else {
        let mut gram = xc.t().dot(&xc);
        gram.diag_mut().mapv_inplace(|v| v + alpha);
        let rhs = xc.t().dot(&yc);
        let a = DMatrix::from_row_iterator(d, d, gram.iter().copied());
        let w = cholesky_solve(a, DVector::from_iterator(d, rhs.iter().copied()))?;
        Array1::from_iter(w.iter().copied())
    };
    Ok(w.to_vec())
}

/// Population standard deviation of each column.
fn column_stats(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let stds = x
        .columns()
        .into_iter()
        .zip(means.iter())
        .map(|(c, m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
        .collect();
    (means.to_vec(), stds)
}

/// Number of columns with non-zero variance.
pub fn count_varying(x: &Mat) -> usize {
    column_stats(x).1.iter().filter(|&&s| s > 0.0).count()
}

/// Feature indices surviving recursive elimination, in original order.
///
/// Zero-variance columns are discarded before the first fit. Each round
/// drops `ceil(drop_fraction * surviving)` features of smallest `|w|`
/// (never overshooting `target_dim`), ties going to the lower index.
pub fn rfe_select(
    x_train: &Mat,
    y_train: &[f64],
    target_dim: usize,
    alpha: f64,
    drop_fraction: f64,
) -> Result<Vec<usize>, FeatureError> {
    let d = x_train.ncols();
    if x_train.nrows() < 2 || y_train.len() != x_train.nrows() {
        return Err(FeatureError::Param(format!(
            "rfe needs at least 2 training rows matching the targets, got {}",
            x_train.nrows()
        )));
    }
    if target_dim == 0 || target_dim > d {
        return Err(FeatureError::Param(format!(
            "target_dim must lie in 1..={d}, got {target_dim}"
        )));
    }
    if !(drop_fraction > 0.0 && drop_fraction <= 1.0) {
        return Err(FeatureError::Param(format!(
            "drop_fraction must lie in (0, 1], got {drop_fraction}"
        )));
    }
    let (_, stds) = column_stats(x_train);
    let mut surviving: Vec<usize> = (0..d).filter(|&j| stds[j] > 0.0).collect();
    if surviving.len() < target_dim {
        return Err(FeatureError::Param(format!(
            "only {} non-constant features for target_dim {target_dim}",
            surviving.len()
        )));
    }
    if surviving.len() == target_dim {
        return Ok(surviving);
    }
    while surviving.len() > target_dim {
        let sub = x_train.select(Axis(1), &surviving);
        let w = ridge_fit(&sub, y_train, alpha)?;
        let excess = surviving.len() - target_dim;
        let drop = ((drop_fraction * surviving.len() as f64).ceil() as usize).clamp(1, excess);
        let mut order: Vec<usize> = (0..surviving.len()).collect();
        order.sort_by(|&a, &b| {
            w[a].abs()
                .total_cmp(&w[b].abs())
                .then(surviving[a].cmp(&surviving[b]))
        });
        let mut removed = vec![false; surviving.len()];
        for &k in &order[..drop] {
            removed[k] = true;
        }
        surviving = surviving
            .into_iter()
            .zip(removed)
            .filter_map(|(j, r)| (!r).then_some(j))
            .collect();
    }
    Ok(surviving)
}

impl FeaturePipeline {
    /// Runs selection and fits z-score statistics on the training rows.
    pub fn fit(
        modality: Modality,
        x_train: &Mat,
        y_train: &[f64],
        target_dim: usize,
        ridge_alpha: f64,
        drop_fraction: f64,
    ) -> Result<Self, FeatureError> {
        let selected_indices = rfe_select(x_train, y_train, target_dim, ridge_alpha, drop_fraction)?;
        Self::from_selection(
            modality,
            x_train,
            selected_indices,
            ridge_alpha,
            drop_fraction,
            target_dim,
        )
    }

    pub fn from_selection(
        modality: Modality,
        x_train: &Mat,
        selected_indices: Vec<usize>,
        ridge_alpha: f64,
        drop_fraction: f64,
        target_dim: usize,
    ) -> Result<Self, FeatureError> {
        if x_train.nrows() == 0 {
            return Err(FeatureError::Param("no training rows".into()));
        }
        if let Some(&bad) = selected_indices.iter().find(|&&j| j >= x_train.ncols()) {
            return Err(FeatureError::Param(format!("index {bad} out of range")));
        }
        let sub = x_train.select(Axis(1), &selected_indices);
        let (means, stds) = column_stats(&sub);
        if let Some(k) = stds.iter().position(|&s| s <= 0.0) {
            return Err(FeatureError::ZeroVariance {
                index: selected_indices[k],
            });
        }
        Ok(Self {
            modality,
            input_dim: x_train.ncols(),
            selected_indices,
            means,
            stds,
            ridge_alpha,
            drop_fraction,
            target_dim,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.selected_indices.len()
    }

    /// Restricts to the selected columns and applies the fitted z-score.
    pub fn transform(&self, x: &Mat) -> Result<Mat, FeatureError> {
        if x.ncols() != self.input_dim {
            return Err(FeatureError::Param(format!(
                "pipeline expects {} raw features, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        let mut out = x.select(Axis(1), &self.selected_indices);
        for (mut col, (m, s)) in out.columns_mut().into_iter().zip(self.means.iter().zip(&self.stds)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Fits on `x_train` and returns both transformed matrices.
pub fn standardize_fit_apply(
    pipeline: &FeaturePipeline,
    x_train: &Mat,
    x_other: &Mat,
) -> Result<(FeaturePipeline, Mat, Mat), FeatureError> {
    let fitted = FeaturePipeline::from_selection(
        pipeline.modality,
        x_train,
        pipeline.selected_indices.clone(),
        pipeline.ridge_alpha,
        pipeline.drop_fraction,
        pipeline.target_dim,
    )?;
    let a = fitted.transform(x_train)?;
    let b = fitted.transform(x_other)?;
    Ok((fitted, a, b))
}

/// `±1` targets for the ridge ranking.
pub fn signed_targets(labels: &[crate::dataio::Label]) -> Vec<f64> {
    labels
        .iter()
        .map(|l| match l {
            crate::dataio::Label::Asd => 1.0,
            crate::dataio::Label::Td => -1.0,
        })
        .collect()
}
