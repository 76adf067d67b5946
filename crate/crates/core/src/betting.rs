//! Betting martingales and the test martingales they induce.
//!
//! A betting martingale `F` maps a finite sequence of p-values to a capital
//! in `[0, ∞]` with `F(□) = 1` and `∫₀¹ F(u₁, …, uₙ₋₁, u) du = F(u₁, …, uₙ₋₁)`.
//! Feeding it the p-values of a transducer yields a test martingale. Capital
//! is tracked as `log₁₀` because trajectories on real data reach `10⁴⁰` and
//! beyond.
//!
//! Jumper strategies split capital across three linear bets
//! `f_ε(p) = 1 + ε(p − ½)`, `ε ∈ {−1, 0, 1}`, and before each step move a
//! fraction `J` of capital evenly across all three. The sleepy variant takes
//! the same parameters plus a reluctance `R`, which is recorded but does not
//! change the bets; its `ε = 0` share plays the part of the asleep state.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::random::StreamId;
use crate::transducer::PValue;

const EPSILONS: [f64; 3] = [-1.0, 0.0, 1.0];
const MIXTURE_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyTag {
    SimpleJumper,
    SleepyJumper,
    MixturePower,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 3] = [
        StrategyTag::SimpleJumper,
        StrategyTag::SleepyJumper,
        StrategyTag::MixturePower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyTag::SimpleJumper => "simple-jumper",
            StrategyTag::SleepyJumper => "sleepy-jumper",
            StrategyTag::MixturePower => "mixture-power",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown betting strategy {s:?}")))
    }
}

fn default_jump() -> f64 {
    0.001
}

fn default_reluctance() -> f64 {
    0.01
}

/// Strategy parameters. `j` is the jumping rate, `r` the reluctance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub tag: StrategyTag,
    #[serde(default = "default_jump")]
    pub j: f64,
    #[serde(default = "default_reluctance")]
    pub r: f64,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::sleepy_jumper(default_jump(), default_reluctance())
    }
}

impl Strategy {
    pub fn simple_jumper(j: f64) -> Self {
        Strategy {
            tag: StrategyTag::SimpleJumper,
            j,
            r: default_reluctance(),
        }
    }

    pub fn sleepy_jumper(j: f64, r: f64) -> Self {
        Strategy {
            tag: StrategyTag::SleepyJumper,
            j,
            r,
        }
    }

    pub fn mixture_power() -> Self {
        Strategy {
            tag: StrategyTag::MixturePower,
            j: default_jump(),
            r: default_reluctance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j > 0.0 && self.j <= 1.0) {
            return Err(Error::InvalidConfig(format!("jumping rate {} outside (0, 1]", self.j)));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::InvalidConfig(format!("reluctance {} outside [0, 1]", self.r)));
        }
        Ok(())
    }
}

fn mixture_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_on(MIXTURE_NODES, 0.0, 1.0))
}

/// `ln ∫₀¹ ε^n exp((ε − 1)·Σ ln p) dε` by 64-node Gauss–Legendre, via log-sum-exp.
fn mixture_ln_capital(steps: usize, sum_ln_p: f64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let n = steps as f64;
    let terms: Vec<f64> = mixture_rule()
        .iter()
        .map(|&(eps, w)| w.ln() + n * eps.ln() + (eps - 1.0) * sum_ln_p)
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::INFINITY {
        return f64::INFINITY;
    }
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

/// Running capital of one strategy. Single owner per run.
#[derive(Debug, Clone, PartialEq)]
pub struct BettingState {
    strategy: Strategy,
    /// Jumper shares of total capital, indexed like `EPSILONS`; sum to 1.
    shares: [f64; 3],
    steps: usize,
    sum_ln_p: f64,
    log10_capital: f64,
}

impl BettingState {
    pub fn new(strategy: Strategy) -> Result<Self> {
        strategy.validate()?;
        Ok(BettingState {
            strategy,
            shares: [1.0 / 3.0; 3],
            steps: 0,
            sum_ln_p: 0.0,
            log10_capital: 0.0,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn log10_capital(&self) -> f64 {
        self.log10_capital
    }

    /// Jumper capital split (relative shares, summing to 1).
    pub fn shares(&self) -> [f64; 3] {
        self.shares
    }

    /// Bets on `p` and updates the capital.
    pub fn step(&mut self, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidPValue(p));
        }
        // p = 0 only arises from τ = 0; keep the capital finite there.
        let ln_p = if p == 0.0 { f64::MIN_POSITIVE.ln() } else { p.ln() };
        self.step_inner(p, ln_p);
        Ok(())
    }

    pub fn bet(&mut self, p: PValue) {
        self.step(p.value()).expect("PValue is in [0, 1]");
    }

    fn step_inner(&mut self, p: f64, ln_p: f64) {
        self.steps += 1;
        match self.strategy.tag {
            StrategyTag::SimpleJumper | StrategyTag::SleepyJumper => {
                let j = self.strategy.j;
                let mut next = [0.0; 3];
                for (k, eps) in EPSILONS.iter().enumerate() {
                    let mixed = (1.0 - j) * self.shares[k] + j / 3.0;
                    next[k] = mixed * (1.0 + eps * (p - 0.5));
                }
                let total: f64 = next.iter().sum();
                for (share, v) in self.shares.iter_mut().zip(next) {
                    *share = v / total;
                }
                self.log10_capital += total.log10();
            }
            StrategyTag::MixturePower => {
                self.sum_ln_p += ln_p;
                self.log10_capital = mixture_ln_capital(self.steps, self.sum_ln_p) / std::f64::consts::LN_10;
            }
        }
    }
}

/// `bet_step`: one step of `state` on `p`.
pub fn bet_step(mut state: BettingState, p: f64) -> Result<BettingState> {
    state.step(p)?;
    Ok(state)
}

/// Capital path `S₀ … Sₙ` in `log₁₀`, with the randomization that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTrajectory {
    pub log10_values: Vec<f64>,
    #[serde(default)]
    pub randomization: Option<StreamId>,
}

impl MartingaleTrajectory {
    pub fn with_randomization(mut self, id: StreamId) -> Self {
        self.randomization = Some(id);
        self
    }

    pub fn len(&self) -> usize {
        self.log10_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log10_values.is_empty()
    }

    pub fn final_log10(&self) -> f64 {
        *self.log10_values.last().unwrap_or(&0.0)
    }

    pub fn max_log10(&self) -> f64 {
        self.log10_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn run_martingale(strategy: Strategy, p_values: &[PValue]) -> Result<MartingaleTrajectory> {
    let mut state = BettingState::new(strategy)?;
    let mut log10_values = Vec::with_capacity(p_values.len() + 1);
    log10_values.push(0.0);
    for &p in p_values {
        state.bet(p);
        log10_values.push(state.log10_capital());
    }
    Ok(MartingaleTrajectory {
        log10_values,
        randomization: None,
    })
}

/// Pointwise product of two martingales (a sum in `log₁₀`).
///
/// Refuses trajectories recorded with the same randomization stream unless
/// `allow_shared` is set.
pub fn product_martingale(
    a: &MartingaleTrajectory,
    b: &MartingaleTrajectory,
    allow_shared: bool,
) -> Result<MartingaleTrajectory> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if let (Some(ra), Some(rb)) = (&a.randomization, &b.randomization) {
        if ra == rb && !allow_shared {
            return Err(Error::SharedRandomization(ra.to_string()));
        }
    }
    Ok(MartingaleTrajectory {
        log10_values: a.log10_values.iter().zip(&b.log10_values).map(|(x, y)| x + y).collect(),
        randomization: None,
    })
}

/// A betting martingale evaluated on natural logs of its p-value arguments.
///
/// Taking `ln u` rather than `u` lets the validity check reach arguments far
/// below the smallest positive `f64`.
pub trait BettingFunction {
    fn log10_value(&self, ln_prefix: &[f64]) -> f64;
}

impl BettingFunction for Strategy {
    fn log10_value(&self, ln_prefix: &[f64]) -> f64 {
        let mut state = BettingState::new(*self).expect("validated strategy");
        for &ln_p in ln_prefix {
            state.step_inner(ln_p.exp(), ln_p);
        }
        state.log10_capital()
    }
}

impl<F: Fn(&[f64]) -> f64> BettingFunction for F {
    fn log10_value(&self, ln_prefix: &[f64]) -> f64 {
        self(ln_prefix)
    }
}

/// How the integral over the next p-value is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Gauss–Legendre in `u` on `[0, 1]`; exact for polynomial bets of degree `< 2·points`.
    GaussLegendre { points: usize },
    /// Gauss–Legendre in `s = −ln u` on the octaves `[0, 1], [1, 2], …, [2^(k−1), 2^k]`.
    LogScale { points: usize, octaves: u32 },
}

impl Quadrature {
    pub fn for_strategy(tag: StrategyTag) -> Self {
        match tag {
            StrategyTag::SimpleJumper | StrategyTag::SleepyJumper => Quadrature::GaussLegendre { points: 2 },
            StrategyTag::MixturePower => Quadrature::LogScale {
                points: 16,
                octaves: 50,
            },
        }
    }

    /// `(ln u, weight)` pairs such that `∫₀¹ g(u) du ≈ Σ weight · g(u)`.
    fn nodes(&self) -> Vec<(f64, f64)> {
        match *self {
            Quadrature::GaussLegendre { points } => gauss_legendre_on(points, 0.0, 1.0)
                .into_iter()
                .map(|(u, w)| (u.ln(), w))
                .collect(),
            Quadrature::LogScale { points, octaves } => {
                let mut nodes = gauss_legendre_on(points, 0.0, 1.0);
                for k in 0..octaves.saturating_sub(1) {
                    let a = 2f64.powi(k as i32);
                    nodes.extend(gauss_legendre_on(points, a, 2.0 * a));
                }
                // du = e^{-s} ds
                nodes.into_iter().map(|(s, w)| (-s, w * (-s).exp())).collect()
            }
        }
    }
}

/// Largest `|∫₀¹ F(prefix, u) du − F(prefix)|` over the given prefixes.
///
/// Prefixes hold p-values in `(0, 1]`.
pub fn check_betting_validity(f: &dyn BettingFunction, prefixes: &[Vec<f64>], grid: Quadrature) -> f64 {
    let nodes = grid.nodes();
    let mut worst: f64 = 0.0;
    for prefix in prefixes {
        let mut ln_prefix: Vec<f64> = prefix.iter().map(|p| p.ln()).collect();
        let current = 10f64.powf(f.log10_value(&ln_prefix));
        let base = ln_prefix.len();
        ln_prefix.push(0.0);
        let mut integral = 0.0;
        for &(ln_u, w) in &nodes {
            ln_prefix[base] = ln_u;
            integral += w * 10f64.powf(f.log10_value(&ln_prefix));
        }
        worst = worst.max((integral - current).abs());
    }
    worst
}
