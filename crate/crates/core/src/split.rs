//! Stratified labeled / unlabeled / validation / test splits.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::rng;

/// Index lists into `Dataset::graphs`. Graphs in `unlabeled_train` keep their
/// labels in the dataset but training never reads them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub labeled_train: Vec<usize>,
    pub unlabeled_train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub const DEFAULT_RATIOS: [u32; 4] = [2, 5, 1, 2];

const LABELED: usize = 0;
const UNLABELED: usize = 1;
const VALIDATION: usize = 2;
const TEST: usize = 3;

impl SplitDataset {
    pub fn parts(&self) -> [&[usize]; 4] {
        [&self.labeled_train, &self.unlabeled_train, &self.validation, &self.test]
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.parts().map(<[usize]>::len)
    }

    /// Keeps `ceil(ratio * |labeled|)` labeled graphs (stratified, at least
    /// one per class present) and moves the rest to `unlabeled_train`.
    pub fn restrict_labeled(&self, dataset: &Dataset, ratio: f64) -> Result<SplitDataset> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidArgument(alloc::format!("label ratio {ratio} outside (0, 1]")));
        }
        let total = self.labeled_train.len();
        let keep_total = ceil_count(ratio * total as f64).min(total);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
        for &i in &self.labeled_train {
            if let Some(c) = dataset.graphs[i].label() {
                by_class[c].push(i);
            }
        }
        let mut rng = rng::stream(&[self.seed, 0x4C52_4154, total as u64]);
        for members in &mut by_class {
            members.shuffle(&mut rng);
        }
        // Largest-remainder apportionment of keep_total across classes.
        let present = by_class.iter().filter(|m| !m.is_empty()).count();
        let keep_total = keep_total.max(present);
        let mut keep: Vec<usize> = by_class.iter().map(|m| m.len() * keep_total / total.max(1)).collect();
        for (k, m) in keep.iter_mut().zip(&by_class) {
            if *k == 0 && !m.is_empty() {
                *k = 1;
            }
        }
        let mut order: Vec<usize> = (0..by_class.len()).collect();
        order.sort_by_key(|&c| (core::cmp::Reverse((by_class[c].len() * keep_total) % total.max(1)), c));
        let mut assigned: usize = keep.iter().sum();
        for &c in order.iter().cycle().take(order.len() * 2) {
            if assigned >= keep_total {
                break;
            }
            if keep[c] < by_class[c].len() {
                keep[c] += 1;
                assigned += 1;
            }
        }
        let mut labeled = Vec::new();
        let mut moved = Vec::new();
        for (members, &k) in by_class.iter().zip(&keep) {
            labeled.extend_from_slice(&members[..k]);
            moved.extend_from_slice(&members[k..]);
        }
        labeled.sort_unstable();
        let mut unlabeled = self.unlabeled_train.clone();
        unlabeled.extend(moved);
        unlabeled.sort_unstable();
        Ok(SplitDataset {
            labeled_train: labeled,
            unlabeled_train: unlabeled,
            validation: self.validation.clone(),
            test: self.test.clone(),
            seed: self.seed,
        })
    }
}

/// `ceil(x)` that ignores floating noise just above an integer.
pub(crate) fn ceil_count(x: f64) -> usize {
    libm::ceil(x - 1e-9).max(0.0) as usize
}

/// `floor(x)` that ignores floating noise just below an integer.
pub(crate) fn floor_count(x: f64) -> usize {
    libm::floor(x + 1e-9).max(0.0) as usize
}

/// Stratified random split with proportions `ratios / sum(ratios)`.
///
/// Part totals are `floor(n * r_k / S)` for the labeled, validation and test
/// parts; the remainder goes to the unlabeled part. Within each class every
/// part receives the floor or ceiling of its quota. Graphs without a label
/// go to `unlabeled_train`.
pub fn split_dataset(dataset: &Dataset, ratios: [u32; 4], seed: u64) -> Result<SplitDataset> {
    if ratios.iter().any(|&r| r == 0) {
        return Err(Error::InvalidArgument("split ratios must be positive".into()));
    }
    let s: usize = ratios.iter().map(|&r| r as usize).sum();
    let classes = dataset.num_classes;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    let mut unlabeled_only = Vec::new();
    for (i, g) in dataset.graphs.iter().enumerate() {
        match g.label() {
            Some(c) => by_class[c].push(i),
            None => unlabeled_only.push(i),
        }
    }
    let n: usize = by_class.iter().map(Vec::len).sum();
    let mut totals = [0usize; 4];
    for k in [LABELED, VALIDATION, TEST] {
        totals[k] = n * ratios[k] as usize / s;
    }
    totals[UNLABELED] = n - totals[LABELED] - totals[VALIDATION] - totals[TEST];
    if totals[LABELED] < classes {
        return Err(Error::DatasetTooSmall { graphs: dataset.len(), classes });
    }

    // counts[c][k]: how many graphs of class c go to part k.
    let mut counts = vec![[0usize; 4]; classes];
    let mut frac = vec![[0usize; 4]; classes];
    let mut pool = vec![0usize; classes];
    for c in 0..classes {
        let nc = by_class[c].len();
        for k in 0..4 {
            counts[c][k] = nc * ratios[k] as usize / s;
            frac[c][k] = nc * ratios[k] as usize % s;
        }
        pool[c] = nc - counts[c].iter().sum::<usize>();
    }
    for k in [LABELED, VALIDATION, TEST] {
        let given: usize = counts.iter().map(|row| row[k]).sum();
        for _ in given..totals[k] {
            let pick = (0..classes)
                .filter(|&c| pool[c] > 0)
                .max_by_key(|&c| (k == LABELED && counts[c][LABELED] == 0, frac[c][k], pool[c], core::cmp::Reverse(c)));
            match pick {
                Some(c) => {
                    pool[c] -= 1;
                    counts[c][k] += 1;
                    frac[c][k] = 0;
                }
                None => {
                    // Every class's remainder is used up: borrow from the
                    // unlabeled floor instead.
                    let Some(c) = (0..classes).filter(|&c| counts[c][UNLABELED] > 0).max_by_key(|&c| counts[c][UNLABELED])
                    else {
                        break;
                    };
                    counts[c][UNLABELED] -= 1;
                    counts[c][k] += 1;
                }
            }
        }
    }
    for c in 0..classes {
        counts[c][UNLABELED] += pool[c];
        if counts[c][LABELED] == 0 && !by_class[c].is_empty() {
            let donor = [UNLABELED, TEST, VALIDATION].into_iter().find(|&k| counts[c][k] > 0).expect("class has graphs");
            counts[c][donor] -= 1;
            counts[c][LABELED] += 1;
        }
    }

    let mut rng = rng::stream(&[seed, 0x5350_4C54]);
    let mut parts: [Vec<usize>; 4] = Default::default();
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let mut start = 0;
        for k in 0..4 {
            parts[k].extend_from_slice(&members[start..start + counts[c][k]]);
            start += counts[c][k];
        }
    }
    parts[UNLABELED].extend(unlabeled_only);
    for p in &mut parts {
        p.sort_unstable();
    }
    let [labeled_train, unlabeled_train, validation, test] = parts;
    Ok(SplitDataset { labeled_train, unlabeled_train, validation, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn dataset(class_sizes: &[usize]) -> Dataset {
        let mut graphs = Vec::new();
        for (c, &n) in class_sizes.iter().enumerate() {
            for _ in 0..n {
                graphs.push(Graph::unattributed(1, vec![], Some(c)).unwrap());
            }
        }
        Dataset::new("t", graphs).unwrap()
    }

    #[test]
    fn hundred_graphs_two_five_one_two() {
        let s = split_dataset(&dataset(&[50, 50]), DEFAULT_RATIOS, 7).unwrap();
        assert_eq!(s.sizes(), [20, 50, 10, 20]);
        let s = split_dataset(&dataset(&[34, 33, 33]), DEFAULT_RATIOS, 7).unwrap();
        assert_eq!(s.sizes(), [20, 50, 10, 20]);
    }

    #[test]
    fn ten_graphs() {
        let s = split_dataset(&dataset(&[5, 5]), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(s.sizes(), [2, 5, 1, 2]);
    }

    #[test]
    fn same_seed_same_split() {
        let d = dataset(&[30, 20, 10]);
        assert_eq!(split_dataset(&d, DEFAULT_RATIOS, 3).unwrap(), split_dataset(&d, DEFAULT_RATIOS, 3).unwrap());
        assert_ne!(split_dataset(&d, DEFAULT_RATIOS, 3).unwrap(), split_dataset(&d, DEFAULT_RATIOS, 4).unwrap());
    }

    #[test]
    fn too_small_for_labeled_classes() {
        let d = dataset(&[2, 2, 1]);
        assert!(matches!(split_dataset(&d, DEFAULT_RATIOS, 0), Err(Error::DatasetTooSmall { .. })));
    }

    #[test]
    fn restrict_labeled_keeps_every_class() {
        let d = dataset(&[100, 100, 100]);
        let s = split_dataset(&d, DEFAULT_RATIOS, 5).unwrap();
        let r = s.restrict_labeled(&d, 1.0 / 6.0).unwrap();
        assert_eq!(r.labeled_train.len(), 10);
        let classes: BTreeSet<_> = r.labeled_train.iter().map(|&i| d.graphs[i].label()).collect();
        assert_eq!(classes.len(), 3);
        assert_eq!(r.unlabeled_train.len(), s.unlabeled_train.len() + 50);
        assert_eq!(r.validation, s.validation);
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(sizes in proptest::collection::vec(3usize..40, 1..5), seed in any::<u64>()) {
            let d = dataset(&sizes);
            prop_assume!(d.len() * 2 / 10 >= sizes.len());
            let s = split_dataset(&d, DEFAULT_RATIOS, seed).unwrap();
            let mut all: Vec<usize> = s.parts().iter().flat_map(|p| p.iter().copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
            for (c, &nc) in sizes.iter().enumerate() {
                for (k, part) in s.parts().iter().enumerate() {
                    let got = part.iter().filter(|&&i| d.graphs[i].label() == Some(c)).count() as f64;
                    let target = nc as f64 * DEFAULT_RATIOS[k] as f64 / 10.0;
                    // unlabeled absorbs remainders of the other three parts
                    let slack = if k == UNLABELED { 3.0 } else { 1.0 };
                    prop_assert!((got - target).abs() <= slack, "class {} part {} got {} target {}", c, k, got, target);
                }
            }
        }
    }
}
