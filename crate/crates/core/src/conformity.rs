//! Nearest-neighbour conformity measures and the incremental distance cache.
//!
//! Every measure here is a function of two per-point minima: the distance to
//! the nearest other point with the same label, and the distance to the
//! nearest point with a different label. [`NnCache`] keeps both current as the
//! stream grows, at `O(n·d)` per insertion.
//!
//! Degenerate minima follow fixed extended-real conventions: the minimum over
//! an empty set is `+∞`, `finite/∞ = 0`, `positive/0 = ∞`, `0/0 = 1` and
//! `∞/∞ = 1`. Higher scores mean more conforming.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, Observation};

/// Conformity scores `α₁…αₙ` for a prefix. Entries are finite or `+∞`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return Err(Error::Invariant(format!("score {bad} is not finite or +inf")));
        }
        Ok(ScoreVector(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// The four nearest-neighbour conformity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NnVariant {
    /// `d_other / d_same`.
    Ratio,
    /// `d_other / d_same²`.
    RatioSquaredDenominator,
    /// `1 / d_same`.
    SameClass,
    /// `1 / min(d_same, d_other)`.
    NearestObject,
}

impl NnVariant {
    pub const ALL: [NnVariant; 4] = [
        NnVariant::Ratio,
        NnVariant::RatioSquaredDenominator,
        NnVariant::SameClass,
        NnVariant::NearestObject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NnVariant::Ratio => "ratio",
            NnVariant::RatioSquaredDenominator => "ratio-squared-denominator",
            NnVariant::SameClass => "same-class",
            NnVariant::NearestObject => "nearest-object",
        }
    }
}

impl fmt::Display for NnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NnVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown conformity measure {s:?}")))
    }
}

/// Division over `[0, ∞]` with the conventions listed in the module docs.
pub fn ext_div(num: f64, den: f64) -> f64 {
    debug_assert!(num >= 0.0 && den >= 0.0, "ext_div({num}, {den})");
    if den == f64::INFINITY {
        if num == f64::INFINITY {
            1.0
        } else {
            0.0
        }
    } else if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Stored objects and labels with each point's nearest same-label and
/// other-label distances.
///
/// Minima are kept as squared distances; `sqrt` is monotone and correctly
/// rounded, so `sqrt(min d²) == min sqrt(d²)` bit for bit.
#[derive(Debug, Clone, Default)]
pub struct NnCache {
    dim: Option<usize>,
    objects: Vec<f64>,
    labels: Vec<Label>,
    same_sq: Vec<f64>,
    other_sq: Vec<f64>,
}

impl NnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn object(&self, i: usize) -> &[f64] {
        let d = self.dim.unwrap_or(0);
        &self.objects[i * d..(i + 1) * d]
    }

    /// Distance from point `i` to its nearest same-label neighbour `j ≠ i`.
    pub fn d_same(&self, i: usize) -> f64 {
        self.same_sq[i].sqrt()
    }

    /// Distance from point `i` to its nearest other-label neighbour.
    pub fn d_other(&self, i: usize) -> f64 {
        self.other_sq[i].sqrt()
    }

    /// Adds `z` and refreshes the minima of every stored point.
    pub fn insert(&mut self, z: &Observation) -> Result<()> {
        let x = z.object.features();
        match self.dim {
            Some(d) if d != x.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                })
            }
            Some(_) => {}
            None => self.dim = Some(x.len()),
        }
        let d = x.len();
        let mut own_same = f64::INFINITY;
        let mut own_other = f64::INFINITY;
        for j in 0..self.labels.len() {
            let dist = squared_distance(x, &self.objects[j * d..(j + 1) * d]);
            if self.labels[j] == z.label {
                own_same = own_same.min(dist);
                self.same_sq[j] = self.same_sq[j].min(dist);
            } else {
                own_other = own_other.min(dist);
                self.other_sq[j] = self.other_sq[j].min(dist);
            }
        }
        self.objects.extend_from_slice(x);
        self.labels.push(z.label);
        self.same_sq.push(own_same);
        self.other_sq.push(own_other);
        Ok(())
    }

    /// Conformity scores of every stored point under `variant`.
    pub fn score(&self, variant: NnVariant) -> ScoreVector {
        let scores = (0..self.len())
            .map(|i| match variant {
                NnVariant::Ratio => ext_div(self.d_other(i), self.d_same(i)),
                NnVariant::RatioSquaredDenominator => ext_div(self.d_other(i), self.same_sq[i]),
                NnVariant::SameClass => ext_div(1.0, self.d_same(i)),
                NnVariant::NearestObject => ext_div(1.0, self.d_same(i).min(self.d_other(i))),
            })
            .collect();
        ScoreVector(scores)
    }
}

/// Scores the cache's current prefix.
pub fn score_nn(variant: NnVariant, cache: &NnCache) -> ScoreVector {
    cache.score(variant)
}

/// Builds a fresh cache over `prefix` and scores it.
pub fn score_prefix(variant: NnVariant, prefix: &[Observation]) -> Result<ScoreVector> {
    let mut cache = NnCache::new();
    for z in prefix {
        cache.insert(z)?;
    }
    Ok(cache.score(variant))
}

/// Replaces every score by the mean score of its label's class.
///
/// `+∞` entries are first clamped to twice the largest finite score (or to
/// `max + 1` when that is not positive, and to 1 when nothing is finite).
/// Each class sum runs over the class's scores in ascending order, so the
/// result does not depend on the order of the prefix.
pub fn label_average(scores: &ScoreVector, labels: &[Label]) -> Result<ScoreVector> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let max_finite = scores
        .as_slice()
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |m| m.max(s))));
    let cap = match max_finite {
        None => 1.0,
        Some(m) if m > 0.0 => 2.0 * m,
        Some(m) => m + 1.0,
    };

    let mut classes: BTreeMap<Label, Vec<f64>> = BTreeMap::new();
    for (&s, &y) in scores.as_slice().iter().zip(labels) {
        let s = if s.is_finite() { s } else { cap };
        classes.entry(y).or_default().push(s);
    }
    let means: BTreeMap<Label, f64> = classes
        .into_iter()
        .map(|(y, mut members)| {
            members.sort_by(f64::total_cmp);
            let n = members.len() as f64;
            (y, members.iter().sum::<f64>() / n)
        })
        .collect();
    Ok(ScoreVector(labels.iter().map(|y| means[y]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(x: f64, y: u32) -> Observation {
        Observation::from_parts(vec![x], y)
    }

    const A: u32 = 0;
    const B: u32 = 1;

    #[test]
    fn single_point_has_empty_minima() {
        let mut c = NnCache::new();
        c.insert(&obs(0.0, A)).unwrap();
        assert_eq!(c.d_same(0), f64::INFINITY);
        assert_eq!(c.d_other(0), f64::INFINITY);
    }

    #[test]
    fn second_same_label_point_updates_both() {
        let mut c = NnCache::new();
        c.insert(&obs(0.0, A)).unwrap();
        c.insert(&obs(1.0, A)).unwrap();
        for i in 0..2 {
            assert_eq!(c.d_same(i), 1.0);
            assert_eq!(c.d_other(i), f64::INFINITY);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut c = NnCache::new();
        c.insert(&obs(0.0, A)).unwrap();
        let err = c.insert(&Observation::from_parts(vec![0.0, 1.0], A)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn ratio_and_same_class_by_hand() {
        let prefix = [obs(0.0, A), obs(1.0, A), obs(3.0, B)];
        let ratio = score_prefix(NnVariant::Ratio, &prefix).unwrap();
        assert_eq!(ratio.as_slice(), &[3.0, 2.0, 0.0]);
        let same = score_prefix(NnVariant::SameClass, &prefix).unwrap();
        assert_eq!(same.as_slice(), &[1.0, 1.0, 0.0]);
        // d_same = (1, 1, inf), d_other = (3, 2, 2)
        let sq = score_prefix(NnVariant::RatioSquaredDenominator, &prefix).unwrap();
        assert_eq!(sq.as_slice(), &[3.0, 2.0, 0.0]);
        let nearest = score_prefix(NnVariant::NearestObject, &prefix).unwrap();
        assert_eq!(nearest.as_slice(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn duplicate_points_score_infinite() {
        let prefix = [obs(0.0, A), obs(0.0, A), obs(1.0, B)];
        let ratio = score_prefix(NnVariant::Ratio, &prefix).unwrap();
        assert_eq!(ratio.as_slice(), &[f64::INFINITY, f64::INFINITY, 0.0]);
    }

    #[test]
    fn extended_real_conventions() {
        assert_eq!(ext_div(2.0, f64::INFINITY), 0.0);
        assert_eq!(ext_div(2.0, 0.0), f64::INFINITY);
        assert_eq!(ext_div(0.0, 0.0), 1.0);
        assert_eq!(ext_div(f64::INFINITY, f64::INFINITY), 1.0);
        assert_eq!(ext_div(f64::INFINITY, 2.0), f64::INFINITY);
        assert_eq!(ext_div(0.0, 3.0), 0.0);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in NnVariant::ALL {
            assert_eq!(v.as_str().parse::<NnVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!("tangent".parse::<NnVariant>().is_err());
    }

    #[test]
    fn label_average_by_hand() {
        let s = ScoreVector::new(vec![3.0, 2.0, 0.0]).unwrap();
        let out = label_average(&s, &[Label(A), Label(A), Label(B)]).unwrap();
        assert_eq!(out.as_slice(), &[2.5, 2.5, 0.0]);
    }

    #[test]
    fn label_average_single_class_is_global_mean() {
        let s = ScoreVector::new(vec![1.0, 2.0, 6.0]).unwrap();
        let out = label_average(&s, &[Label(4); 3]).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn label_average_clamps_infinity() {
        let s = ScoreVector::new(vec![f64::INFINITY, 2.0, 1.0]).unwrap();
        let out = label_average(&s, &[Label(A), Label(A), Label(B)]).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 3.0, 1.0]);

        let all_inf = ScoreVector::new(vec![f64::INFINITY; 2]).unwrap();
        let out = label_average(&all_inf, &[Label(A), Label(B)]).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn label_average_length_mismatch() {
        let s = ScoreVector::new(vec![1.0]).unwrap();
        assert!(label_average(&s, &[]).is_err());
    }

    #[test]
    fn score_vector_rejects_nan() {
        assert!(ScoreVector::new(vec![f64::NAN]).is_err());
        assert!(ScoreVector::new(vec![f64::NEG_INFINITY]).is_err());
        assert!(ScoreVector::new(vec![f64::INFINITY, 0.0]).is_ok());
    }
}
