//! Synthetic two-modality cohorts.
//!
//! Entries are generated in Fisher-z space and mapped through `tanh`, so
//! every matrix is symmetric with unit diagonal and off-diagonal values in
//! (-1, 1). Each modality gets its own random set of signature region pairs
//! whose means differ between classes; on those pairs the class means sit
//! `SIGNAL_GAIN * class_separation * informativeness` noise-standard-deviations
//! apart in Mahalanobis distance. Every site adds a fixed per-pair offset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CohortManifest, ConnectivityMatrix, DataError, Label, Sex, SubjectRecord};
use crate::numcore::Mat;

const SIGNAL_GAIN: f64 = 3.0;
const BASE_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_sites: usize,
    pub func_regions: usize,
    pub struct_regions: usize,
    pub class_separation: f64,
    pub func_informativeness: f64,
    pub struct_informativeness: f64,
    /// Fraction of region pairs carrying class signal.
    pub signature_fraction: f64,
    /// Standard deviation of the per-site additive offsets.
    pub site_effect: f64,
    /// Per-entry subject noise in Fisher-z units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            n_sites: 4,
            func_regions: 24,
            struct_regions: 26,
            class_separation: 2.0,
            func_informativeness: 1.0,
            struct_informativeness: 0.5,
            signature_fraction: 0.05,
            site_effect: 0.3,
            noise: 0.35,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Param(m));
        if self.n_sites == 0 {
            return bad("n_sites must be at least 1".into());
        }
        if self.n_subjects < 2 * self.n_sites {
            return bad(format!(
                "n_subjects ({}) must be at least 2 * n_sites ({})",
                self.n_subjects, self.n_sites
            ));
        }
        if self.func_regions < 2 || self.struct_regions < 2 {
            return bad("region counts must be at least 2".into());
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("func_informativeness", self.func_informativeness),
            ("struct_informativeness", self.struct_informativeness),
            ("site_effect", self.site_effect),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be positive, got {}", self.noise));
        }
        if !(self.signature_fraction > 0.0 && self.signature_fraction <= 1.0) {
            return bad(format!(
                "signature_fraction must lie in (0, 1], got {}",
                self.signature_fraction
            ));
        }
        Ok(())
    }
}

struct ModalityModel {
    regions: usize,
    base: Vec<f64>,
    site_offsets: Vec<Vec<f64>>,
    /// (pair index, signed half-shift)
    signature: Vec<(usize, f64)>,
}

impl ModalityModel {
    fn new(
        regions: usize,
        informativeness: f64,
        spec: &SyntheticSpec,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pairs = regions * (regions - 1) / 2;
        let base_dist = Normal::new(0.0, BASE_SPREAD).expect("positive spread");
        let base: Vec<f64> = (0..pairs).map(|_| base_dist.sample(rng)).collect();
        let site_dist = Normal::new(0.0, spec.site_effect.max(f64::MIN_POSITIVE)).expect("sd");
        let site_offsets = (0..spec.n_sites)
            .map(|_| {
                (0..pairs)
                    .map(|_| if spec.site_effect > 0.0 { site_dist.sample(rng) } else { 0.0 })
                    .collect()
            })
            .collect();
        let n_sig = ((spec.signature_fraction * pairs as f64).round() as usize).clamp(1, pairs);
        let mut idx: Vec<usize> = (0..pairs).collect();
        idx.shuffle(rng);
        let mut chosen: Vec<usize> = idx[..n_sig].to_vec();
        chosen.sort_unstable();
        let shift =
            SIGNAL_GAIN * spec.class_separation * informativeness * spec.noise / (n_sig as f64).sqrt();
        let signature = chosen
            .into_iter()
            .map(|p| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (p, sign * shift / 2.0)
            })
            .collect();
        Self {
            regions,
            base,
            site_offsets,
            signature,
        }
    }

    fn sample(&self, label: Label, site: usize, noise: f64, rng: &mut ChaCha8Rng) -> Mat {
        let noise_dist = Normal::new(0.0, noise).expect("positive noise");
        let class_sign = match label {
            Label::Asd => 1.0,
            Label::Td => -1.0,
        };
        let mut z: Vec<f64> = self
            .base
            .iter()
            .zip(&self.site_offsets[site])
            .map(|(b, o)| b + o + noise_dist.sample(rng))
            .collect();
        for &(p, half) in &self.signature {
            z[p] += class_sign * half;
        }
        let r = self.regions;
        let mut m = Mat::eye(r);
        let mut k = 0;
        for i in 0..r {
            for j in i + 1..r {
                let v = z[k].tanh();
                m[[i, j]] = v;
                m[[j, i]] = v;
                k += 1;
            }
        }
        m
    }
}

/// Deterministic synthetic cohort described by `spec`.
pub fn generate_synthetic_cohort(spec: &SyntheticSpec) -> Result<CohortManifest, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_subjects;

    let func_model = ModalityModel::new(spec.func_regions, spec.func_informativeness, spec, &mut rng);
    let struct_model =
        ModalityModel::new(spec.struct_regions, spec.struct_informativeness, spec, &mut rng);

    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Td } else { Label::Asd })
        .collect();
    labels.shuffle(&mut rng);
    let mut site_order: Vec<usize> = (0..n).collect();
    site_order.shuffle(&mut rng);
    let mut sites = vec![0usize; n];
    for (k, &subject) in site_order.iter().enumerate() {
        sites[subject] = k % spec.n_sites;
    }
    let mut sexes: Vec<Sex> = (0..n)
        .map(|i| if i % 2 == 0 { Sex::Female } else { Sex::Male })
        .collect();
    sexes.shuffle(&mut rng);

    let width = spec.n_sites.to_string().len().max(2);
    let id_width = n.to_string().len().max(3);
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let age = 6.0 + 34.0 * rng.random::<f64>();
        let age = (age * 100.0).round() / 100.0;
        let func = func_model.sample(labels[i], sites[i], spec.noise, &mut rng);
        let structural = struct_model.sample(labels[i], sites[i], spec.noise, &mut rng);
        subjects.push(SubjectRecord {
            subject_id: format!("sub-{:0id_width$}", i + 1),
            label: labels[i],
            age,
            sex: sexes[i],
            site: format!("SITE{:0width$}", sites[i] + 1),
            func_matrix: ConnectivityMatrix::new(func)?,
            struct_matrix: ConnectivityMatrix::new(structural)?,
        });
    }
    let cohort = CohortManifest {
        subjects,
        func_regions: spec.func_regions,
        struct_regions: spec.struct_regions,
    };
    cohort.validate()?;
    Ok(cohort)
}
