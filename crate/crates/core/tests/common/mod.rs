//! Independent reference implementations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use connfuse::dataio::{CohortManifest, Label};
use connfuse::numcore::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

pub fn to_dmatrix(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat {
    Mat::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn eigenvalues(m: &Mat) -> Vec<f64> {
    SymmetricEigen::new(to_dmatrix(m)).eigenvalues.iter().copied().collect()
}

/// `Σ_k U T_k(Λ) Uᵀ X θ_k + bias`, with `T_k(λ) = cos(k·arccos λ)`.
pub fn spectral_filter(lap: &Mat, x: &Mat, thetas: &[Mat], bias: &Mat) -> Mat {
    let eig = SymmetricEigen::new(to_dmatrix(lap));
    let u = &eig.eigenvectors;
    let xd = to_dmatrix(x);
    let mut out = DMatrix::<f64>::zeros(x.nrows(), thetas[0].ncols());
    for (k, theta) in thetas.iter().enumerate() {
        let diag = DMatrix::from_diagonal(
            &eig.eigenvalues.map(|l| (k as f64 * l.clamp(-1.0, 1.0).acos()).cos()),
        );
        out += u * diag * u.transpose() * &xd * to_dmatrix(theta);
    }
    let mut out = from_dmatrix(&out);
    for mut row in out.rows_mut() {
        row += &bias.row(0);
    }
    out
}

/// Random weighted graph: each pair present with probability `density`,
/// weight uniform on `[0, 1]`.
pub fn random_graph<R: Rng>(n: usize, density: f64, rng: &mut R) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                edges.push((i, j));
                weights.push(rng.random::<f64>());
            }
        }
    }
    (edges, weights)
}

pub fn random_mat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Literal pairwise AUC over every positive-negative pair.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            total += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    total / pairs as f64
}

/// Trapezoidal area under the ROC curve swept over every distinct
/// threshold, highest first.
pub fn trapezoid_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut prev = (0.0, 0.0);
    let mut area = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &y)| y && s >= t).count() as f64;
        let fp = scores.iter().zip(labels).filter(|(&s, &y)| !y && s >= t).count() as f64;
        let point = (fp / neg, tp / pos);
        area += (point.0 - prev.0) * (point.1 + prev.1) / 2.0;
        prev = point;
    }
    area + (1.0 - prev.0) * (1.0 + prev.1) / 2.0
}

pub fn label_vec(cohort: &CohortManifest) -> Vec<bool> {
    cohort.subjects.iter().map(|s| s.label == Label::Asd).collect()
}
