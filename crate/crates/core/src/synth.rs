//! Synthetic labelled streams and uniformity statistics.
//!
//! Class-conditional objects are Gaussian with unit covariance. Class `k` is
//! centred at `c·e_k` with `c = separation/√2`, so every pair of class means
//! is `separation` apart.
//!
//! | scenario        | labels                          | objects given labels         |
//! |-----------------|---------------------------------|------------------------------|
//! | `iid`           | uniform                         | fixed                        |
//! | `concept-shift` | uniform                         | all means move after `t*`    |
//! | `label-shift`   | uniform, then skewed after `t*` | fixed                        |
//! | `markov-labels` | Markov chain                    | fixed                        |
//!
//! Every scenario spends the same draws per step (one uniform for the label,
//! `dim` normals for the object), so a zero shift reproduces `iid` exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::random::RandomSource;
use crate::types::{Label, Object, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Iid,
    ConceptShift,
    LabelShift,
    MarkovLabels,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Iid,
        Scenario::ConceptShift,
        Scenario::LabelShift,
        Scenario::MarkovLabels,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Iid => "iid",
            Scenario::ConceptShift => "concept-shift",
            Scenario::LabelShift => "label-shift",
            Scenario::MarkovLabels => "markov-labels",
        }
    }

    fn has_changepoint(self) -> bool {
        matches!(self, Scenario::ConceptShift | Scenario::LabelShift)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario {s:?}")))
    }
}

fn default_classes() -> usize {
    2
}

fn default_dim() -> usize {
    2
}

fn default_separation() -> f64 {
    4.0
}

/// Generator parameters. Distances are in units of the within-class standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_steps: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Last step before the change (`t*`); shift scenarios only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changepoint: Option<usize>,
    #[serde(default)]
    pub shift_magnitude: f64,
    /// Row-stochastic matrix for `markov-labels`; defaults to a cycle `k → k+1` with probability 0.9.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_transition: Option<Vec<Vec<f64>>>,
    /// Label marginals after `t*` for `label-shift`; defaults to 0.8 on class 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted_label_probs: Option<Vec<f64>>,
    #[serde(default = "default_separation")]
    pub class_separation: f64,
    /// Overrides the experiment seed for the generator stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n_steps: usize) -> Self {
        ScenarioConfig {
            scenario,
            n_steps,
            n_classes: default_classes(),
            dim: default_dim(),
            changepoint: None,
            shift_magnitude: 0.0,
            label_transition: None,
            shifted_label_probs: None,
            class_separation: default_separation(),
            seed: None,
        }
    }

    pub fn with_shift(mut self, changepoint: usize, magnitude: f64) -> Self {
        self.changepoint = Some(changepoint);
        self.shift_magnitude = magnitude;
        self
    }

    pub fn with_classes(mut self, n_classes: usize, dim: usize) -> Self {
        self.n_classes = n_classes;
        self.dim = dim;
        self
    }

    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        self.label_transition.clone().unwrap_or_else(|| {
            let k = self.n_classes;
            (0..k)
                .map(|i| {
                    let mut row = vec![if k > 1 { 0.1 / (k - 1) as f64 } else { 1.0 }; k];
                    if k > 1 {
                        row[(i + 1) % k] = 0.9;
                    }
                    row
                })
                .collect()
        })
    }

    pub fn post_shift_probs(&self) -> Vec<f64> {
        self.shifted_label_probs.clone().unwrap_or_else(|| {
            let k = self.n_classes;
            if k == 1 {
                return vec![1.0];
            }
            let mut probs = vec![0.2 / (k - 1) as f64; k];
            probs[0] = 0.8;
            probs
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_steps == 0 {
            return bad("n_steps must be positive".into());
        }
        if self.n_classes == 0 {
            return bad("n_classes must be positive".into());
        }
        if self.dim < self.n_classes {
            return bad(format!(
                "dim {} must be at least n_classes {}",
                self.dim, self.n_classes
            ));
        }
        if !(self.shift_magnitude >= 0.0 && self.shift_magnitude.is_finite()) {
            return bad(format!(
                "shift_magnitude {} must be finite and non-negative",
                self.shift_magnitude
            ));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad(format!(
                "class_separation {} must be finite and non-negative",
                self.class_separation
            ));
        }
        if self.scenario.has_changepoint() {
            match self.changepoint {
                Some(t) if t > 0 && t <= self.n_steps => {}
                other => return bad(format!("changepoint {other:?} must lie in 1..={}", self.n_steps)),
            }
        }
        check_distribution("shifted_label_probs", &self.post_shift_probs(), self.n_classes)?;
        let matrix = self.transition_matrix();
        if matrix.len() != self.n_classes {
            return bad(format!(
                "label_transition has {} rows, expected {}",
                matrix.len(),
                self.n_classes
            ));
        }
        for (i, row) in matrix.iter().enumerate() {
            check_distribution(&format!("label_transition row {i}"), row, self.n_classes)?;
        }
        Ok(())
    }

    fn class_mean(&self, label: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        mean[label] = self.class_separation / std::f64::consts::SQRT_2;
        mean
    }
}

fn check_distribution(name: &str, probs: &[f64], k: usize) -> Result<()> {
    if probs.len() != k {
        return Err(Error::InvalidConfig(format!(
            "{name} has {} entries, expected {k}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(Error::InvalidConfig(format!("{name} has a negative entry")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Draws a stream for `config` from `source`.
pub fn generate(config: &ScenarioConfig, source: &mut RandomSource) -> Result<Vec<Observation>> {
    config.validate()?;
    let k = config.n_classes;
    let uniform = vec![1.0 / k as f64; k];
    let shifted = config.post_shift_probs();
    let transition = config.transition_matrix();
    let means: Vec<Vec<f64>> = (0..k).map(|y| config.class_mean(y)).collect();
    let offset = config.shift_magnitude / (config.dim as f64).sqrt();
    let changepoint = config.changepoint.unwrap_or(config.n_steps);

    let mut stream = Vec::with_capacity(config.n_steps);
    let mut previous: Option<usize> = None;
    for step in 1..=config.n_steps {
        let after = step > changepoint;
        let probs = match config.scenario {
            Scenario::LabelShift if after => &shifted,
            Scenario::MarkovLabels => previous.map_or(&uniform, |y| &transition[y]),
            _ => &uniform,
        };
        let y = source.categorical(probs);
        previous = Some(y);

        let shift = if config.scenario == Scenario::ConceptShift && after {
            offset
        } else {
            0.0
        };
        let features: Vec<f64> = means[y].iter().map(|m| m + shift + source.standard_normal()).collect();
        stream.push(Observation::new(Object::new(features)?, Label(y as u32)));
    }
    Ok(stream)
}

/// 2-D chi-square uniformity test on a `bins × bins` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairChiSquare {
    pub bins: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub ks_distance: f64,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_chisq: Option<PairChiSquare>,
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and U[0, 1].
pub fn ks_distance(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

pub fn uniformity_report(samples: &[f64]) -> Result<UniformityReport> {
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(UniformityReport {
        ks_distance: ks_distance(samples),
        sample_count: samples.len(),
        pair_chisq: None,
    })
}

/// Chi-square test that `(xs[i], ys[i])` are uniform on the unit square.
pub fn pair_chi_square(xs: &[f64], ys: &[f64], bins: usize) -> Result<PairChiSquare> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() || bins < 2 {
        return Err(Error::InvalidConfig(
            "pair test needs samples and at least 2 bins".into(),
        ));
    }
    let cell = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
    let mut counts = vec![0usize; bins * bins];
    for (&x, &y) in xs.iter().zip(ys) {
        counts[cell(x) * bins + cell(y)] += 1;
    }
    let expected = xs.len() as f64 / (bins * bins) as f64;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = bins * bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(PairChiSquare {
        bins,
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// KS report over `xs`, plus a paired chi-square over `(xs, ys)`.
pub fn paired_uniformity_report(xs: &[f64], ys: &[f64], bins: usize) -> Result<UniformityReport> {
    let mut report = uniformity_report(xs)?;
    report.pair_chisq = Some(pair_chi_square(xs, ys, bins)?);
    Ok(report)
}
