//! Experiment protocol: splits, class balancing, accuracy statistics and
//! the street-classification benchmark.

pub mod benchmark;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// `(train, val, test)` sizes: 50/25/25 with the remainder handed out one
/// at a time to train, then validation, then test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let q = n / 4;
    let r = n % 4;
    (2 * q + usize::from(r >= 1), q + usize::from(r >= 2), q + usize::from(r >= 3))
}

pub fn split_dataset(n: usize, seed: u64) -> Result<Split> {
    if n < 4 {
        return Err(Error::TooFew { need: 4, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let (a, b, _) = split_sizes(n);
    let test = idx.split_off(a + b);
    let val = idx.split_off(a);
    Ok(Split {
        train: idx,
        val,
        test,
        seed,
    })
}

/// Indices that oversample every class up to the largest class count.
/// Original indices come first, in order, followed by the extra draws.
pub fn balance_classes(labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    let n_classes = labels.iter().max().expect("non-empty") + 1;
    let mut members = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(k));
    }
    let target = members.iter().map(Vec::len).max().expect("non-empty");
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for (k, m) in members.iter().enumerate() {
        let mut r = rng::stream(seed, &[tag::BALANCE, k as u64]);
        out.extend((m.len()..target).map(|_| m[r.random_range(0..m.len())]));
    }
    Ok(out)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
}

pub fn run_stats(accs: &[f64]) -> Result<RunStats> {
    if accs.len() < 2 {
        return Err(Error::TooFew {
            need: 2,
            got: accs.len(),
        });
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    Ok(RunStats {
        accuracies: accs.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

/// `m[truth][pred]` counts.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::ShapeMismatch(format!(
                "label {} outside {n_classes} classes",
                p.max(t)
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub aug_level: u32,
    pub stats: RunStats,
}

pub const RESULTS_HEADER: &str = "method,aug_level,mean_acc,std_acc";

/// `method,aug_level,mean_acc,std_acc`, preceded by `#` metadata lines.
pub fn results_csv(rows: &[ResultRow], metadata: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in metadata {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4}",
            r.method, r.aug_level, r.stats.mean, r.stats.std
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        let s = split_dataset(100, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (50, 25, 25));
        let s = split_dataset(101, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (51, 25, 25));
        assert_eq!(split_sizes(102), (51, 26, 25));
        assert_eq!(split_sizes(103), (51, 26, 26));
        assert_eq!(split_dataset(30, 9).unwrap(), split_dataset(30, 9).unwrap());
        assert!(matches!(split_dataset(3, 0), Err(Error::TooFew { need: 4, got: 3 })));
    }

    #[test]
    fn balance_example() {
        let labels: Vec<usize> = [vec![0; 10], vec![1; 4], vec![2; 6]].concat();
        let idx = balance_classes(&labels, 3).unwrap();
        let mut counts = [0; 3];
        for &i in &idx {
            counts[labels[i]] += 1;
        }
        assert_eq!(counts, [10, 10, 10]);
        assert_eq!(&idx[..20], (0..20).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn balanced_input_unchanged() {
        let labels = [0, 1, 2, 2, 1, 0];
        assert_eq!(balance_classes(&labels, 0).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(matches!(balance_classes(&[0, 2], 0), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn stats_examples() {
        let s = run_stats(&[0.9; 5]).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-12 && s.std.abs() < 1e-12);
        // mean 0.8, squared deviations 0.04 + 0 + 0.04 = 0.08, / 2 = 0.04
        let s = run_stats(&[0.6, 0.8, 1.0]).unwrap();
        assert!((s.mean - 0.8).abs() < 1e-12);
        assert!((s.std - 0.2).abs() < 1e-12);
    }

    #[test]
    fn confusion_examples() {
        let m = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = confusion_matrix(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
        assert!(m.iter().all(|row| row[1] == 0 && row[2] == 0));
    }

    #[test]
    fn results_layout() {
        let rows = [ResultRow {
            method: "CNN".into(),
            aug_level: 2,
            stats: run_stats(&[0.5, 0.7]).unwrap(),
        }];
        let csv = results_csv(&rows, &[("runs", "2".into())]);
        assert_eq!(csv, "# runs: 2\nmethod,aug_level,mean_acc,std_acc\nCNN,2,0.6000,0.1414\n");
    }
}
