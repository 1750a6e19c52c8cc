//! Cross-validation plans.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Sorted cohort indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out site for leave-one-site-out plans.
    pub site: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    StratifiedKFold { k: usize, seed: u64 },
    Loso,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub folds: Vec<Fold>,
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    (0..n).filter(|&i| !in_test[i]).collect()
}

/// Shuffles each class with `seed` and deals it round-robin into `k` folds.
/// The dealing position carries over from one class to the next so fold
/// sizes differ by at most one.
pub fn stratified_kfold<L: Ord + Copy>(labels: &[L], k: usize, seed: u64) -> Result<SplitPlan, HarnessError> {
    if k < 2 {
        return Err(HarnessError::Param(format!("k must be at least 2, got {k}")));
    }
    let mut classes: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    if let Some(small) = classes.values().find(|m| m.len() < k) {
        return Err(HarnessError::Param(format!(
            "a class has {} members, fewer than k = {k}",
            small.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); k];
    let mut slot = 0;
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            tests[slot].push(i);
            slot = (slot + 1) % k;
        }
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            Fold {
                train: complement(labels.len(), &test),
                test,
                site: None,
            }
        })
        .collect();
    Ok(SplitPlan {
        scheme: SplitScheme::StratifiedKFold { k, seed },
        folds,
    })
}

/// One fold per distinct site, in lexicographic site order.
pub fn loso_split<S: AsRef<str>>(sites: &[S]) -> Result<SplitPlan, HarnessError> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in sites.iter().enumerate() {
        groups.entry(s.as_ref()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(HarnessError::Param(format!(
            "leave-one-site-out needs at least 2 sites, got {}",
            groups.len()
        )));
    }
    let folds = groups
        .into_iter()
        .map(|(site, test)| Fold {
            train: complement(sites.len(), &test),
            test,
            site: Some(site.to_string()),
        })
        .collect();
    Ok(SplitPlan {
        scheme: SplitScheme::Loso,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five() {
        let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let plan = stratified_kfold(&labels, 5, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.test.iter().filter(|&&i| labels[i] == 1).count(), 1);
            assert_eq!(f.train.len(), 8);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(stratified_kfold(&labels, 4, 1).unwrap(), stratified_kfold(&labels, 4, 1).unwrap());
        assert_ne!(stratified_kfold(&labels, 4, 1).unwrap(), stratified_kfold(&labels, 4, 2).unwrap());
    }

    #[test]
    fn small_class_rejected() {
        assert!(stratified_kfold(&[0, 0, 0, 1], 2, 0).is_err());
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    }

    #[test]
    fn loso_groups() {
        let sites = ["UM", "NYU", "UM", "KKI", "NYU"];
        let plan = loso_split(&sites).unwrap();
        let names: Vec<_> = plan.folds.iter().map(|f| f.site.clone().unwrap()).collect();
        assert_eq!(names, ["KKI", "NYU", "UM"]);
        assert_eq!(plan.folds[1].test, vec![1, 4]);
        assert_eq!(plan.folds[1].train, vec![0, 2, 3]);
        assert!(loso_split(&["A", "A"]).is_err());
        let many: Vec<String> = (0..34).map(|i| format!("S{:02}", i % 17)).collect();
        assert_eq!(loso_split(&many).unwrap().folds.len(), 17);
    }
}
