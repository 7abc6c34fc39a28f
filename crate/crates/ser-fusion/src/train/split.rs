//! Subject-level train/test splitting with optional five-fold CV.
//!
//! Segments never cross a boundary: the split is over subject ids, and a
//! segment follows its subject. The test side takes a rounded fifth of the
//! subjects (the 4:1 ratio); the remaining training side either donates a
//! fixed validation fraction or is partitioned into five near-equal folds.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SerError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitPlan {
    pub train_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<Fold>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValScheme {
    /// No validation subjects.
    None,
    /// Carve this fraction of the training side into a fixed validation set.
    Fraction(f64),
    /// Five (train, val) partitions of the training side, sizes within 1.
    FiveFold,
}

impl SplitPlan {
    /// No subject on two sides.
    pub fn assert_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in self
            .train_subjects
            .iter()
            .chain(&self.val_subjects)
            .chain(&self.test_subjects)
        {
            if !seen.insert(s) {
                return Err(SerError::Data(format!("subject {s} appears on two sides")));
            }
        }
        Ok(())
    }

    /// Training side including validation subjects.
    pub fn train_side_len(&self) -> usize {
        self.train_subjects.len() + self.val_subjects.len()
    }
}

pub fn make_split(subjects: &[String], seed: u64, scheme: ValScheme) -> Result<SplitPlan> {
    let mut unique: Vec<String> = subjects.to_vec();
    unique.sort();
    unique.dedup();
    let n = unique.len();
    if n < 5 {
        return Err(SerError::Data(format!(
            "need at least 5 subjects for a 4:1 split, got {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..unique.len()).rev() {
        unique.swap(i, rng.gen_range(0..=i));
    }

    let n_test = (((n as f64) / 5.0).round() as usize).max(1);
    let test: Vec<String> = unique[..n_test].to_vec();
    let rest: Vec<String> = unique[n_test..].to_vec();

    let (train, val, folds) = match scheme {
        ValScheme::None => (rest, Vec::new(), None),
        ValScheme::Fraction(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(SerError::Usage(format!("validation fraction {f} outside [0,1)")));
            }
            let n_val = ((rest.len() as f64) * f).round() as usize;
            let val = rest[..n_val].to_vec();
            let train = rest[n_val..].to_vec();
            if train.is_empty() {
                return Err(SerError::Usage("validation fraction leaves no training subjects".into()));
            }
            (train, val, None)
        }
        ValScheme::FiveFold => {
            let k = 5usize;
            if rest.len() < k {
                return Err(SerError::Data(format!(
                    "five-fold CV needs at least 5 training subjects, got {}",
                    rest.len()
                )));
            }
            let mut folds = Vec::with_capacity(k);
            // Fold f takes indices f, f+5, f+10, ... so sizes differ by <= 1.
            for f in 0..k {
                let val: Vec<String> = rest
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % k == f)
                    .map(|(_, s)| s.clone())
                    .collect();
                let train: Vec<String> = rest
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % k != f)
                    .map(|(_, s)| s.clone())
                    .collect();
                folds.push(Fold { train: sorted(train), val: sorted(val) });
            }
            (rest, Vec::new(), Some(folds))
        }
    };

    let plan = SplitPlan {
        train_subjects: sorted(train),
        val_subjects: sorted(val),
        test_subjects: sorted(test),
        folds,
    };
    plan.assert_disjoint()?;
    Ok(plan)
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subjects(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn splits_105_subjects_84_to_21() {
        let plan = make_split(&subjects(105), 7, ValScheme::None).unwrap();
        assert_eq!(plan.test_subjects.len(), 21);
        assert_eq!(plan.train_side_len(), 84);
        plan.assert_disjoint().unwrap();
    }

    #[test]
    fn splits_10_subjects_8_to_2() {
        let plan = make_split(&subjects(10), 7, ValScheme::None).unwrap();
        assert_eq!(plan.test_subjects.len(), 2);
        assert_eq!(plan.train_subjects.len(), 8);
    }

    #[test]
    fn same_seed_gives_identical_plans() {
        let a = make_split(&subjects(30), 5, ValScheme::FiveFold).unwrap();
        let b = make_split(&subjects(30), 5, ValScheme::FiveFold).unwrap();
        assert_eq!(a, b);
        let c = make_split(&subjects(30), 6, ValScheme::FiveFold).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn five_folds_partition_training_subjects_evenly() {
        let plan = make_split(&subjects(28), 3, ValScheme::FiveFold).unwrap();
        // 28 -> 6 test (round(5.6)), 22 train.
        let folds = plan.folds.as_ref().unwrap();
        assert_eq!(folds.len(), 5);
        let mut all_val: Vec<String> = Vec::new();
        let sizes: Vec<usize> = folds.iter().map(|f| f.val.len()).collect();
        let (mn, mx) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(mx - mn <= 1, "fold sizes {sizes:?}");
        for f in folds {
            assert_eq!(f.train.len() + f.val.len(), plan.train_subjects.len());
            all_val.extend(f.val.clone());
        }
        all_val.sort();
        assert_eq!(all_val, plan.train_subjects);
    }

    #[test]
    fn fixed_fraction_carves_validation_from_train_side() {
        let plan = make_split(&subjects(105), 7, ValScheme::Fraction(0.2)).unwrap();
        assert_eq!(plan.test_subjects.len(), 21);
        assert_eq!(plan.val_subjects.len(), 17); // round(0.2 * 84)
        assert_eq!(plan.train_subjects.len(), 67);
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        assert!(make_split(&subjects(4), 1, ValScheme::None).is_err());
    }

    #[test]
    fn duplicate_subjects_are_collapsed() {
        let mut subs = subjects(10);
        subs.extend(subjects(10)); // duplicates
        let plan = make_split(&subs, 2, ValScheme::None).unwrap();
        assert_eq!(plan.train_side_len() + plan.test_subjects.len(), 10);
    }
}
