//! Independent oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

use xmart::{Label, Observation, RandomSource};

/// Nearest same-label and other-label distances by a full O(n²) scan.
pub fn brute_force_minima(prefix: &[Observation]) -> Vec<(f64, f64)> {
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for k in 0..a.len() {
            let d = a[k] - b[k];
            acc += d * d;
        }
        acc.sqrt()
    };
    (0..prefix.len())
        .map(|i| {
            let mut same = f64::INFINITY;
            let mut other = f64::INFINITY;
            for j in 0..prefix.len() {
                if j == i {
                    continue;
                }
                let d = dist(prefix[i].object.features(), prefix[j].object.features());
                if prefix[j].label == prefix[i].label {
                    if d < same {
                        same = d;
                    }
                } else if d < other {
                    other = d;
                }
            }
            (same, other)
        })
        .collect()
}

/// Conformal p-value by explicit counting.
pub fn naive_conformal(scores: &[f64], tau: f64) -> f64 {
    let last = scores[scores.len() - 1];
    let less = scores.iter().filter(|&&a| a < last).count() as f64;
    let equal = scores.iter().filter(|&&a| a == last).count() as f64;
    (less + tau * equal) / scores.len() as f64
}

/// Label-conditional p-value by explicit counting.
pub fn naive_label_conditional(scores: &[f64], labels: &[Label], tau: f64) -> f64 {
    let n = scores.len();
    let (last, y) = (scores[n - 1], labels[n - 1]);
    let same: Vec<f64> = (0..n).filter(|&i| labels[i] == y).map(|i| scores[i]).collect();
    let less = same.iter().filter(|&&a| a < last).count() as f64;
    let equal = same.iter().filter(|&&a| a == last).count() as f64;
    (less + tau * equal) / same.len() as f64
}

/// Random prefix; with `grid` the coordinates are small integers, so exact
/// duplicates and distance ties are common.
pub fn random_prefix(src: &mut RandomSource, n: usize, dim: usize, classes: u32, grid: bool) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let y = (src.uniform() * classes as f64) as u32;
            let x: Vec<f64> = (0..dim)
                .map(|_| {
                    if grid {
                        (src.uniform() * 3.0).floor()
                    } else {
                        src.standard_normal()
                    }
                })
                .collect();
            Observation::from_parts(x, y)
        })
        .collect()
}

/// Uniformly random permutation of `0..n` (Fisher–Yates).
pub fn permutation(src: &mut RandomSource, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((src.uniform() * (i + 1) as f64) as usize).min(i);
        p.swap(i, j);
    }
    p
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
