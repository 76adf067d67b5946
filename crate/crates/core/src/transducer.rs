//! Conformal transducers: rank counts over the current prefix turned into
//! randomized p-values.
//!
//! The concept leg feeds a nearest-neighbour measure into the
//! label-conditional transducer, comparing the newest observation only with
//! earlier observations of the same label. The label leg averages scores per
//! class first and feeds them into the plain conformal transducer. With
//! independent tie-breaking draws the two legs interleave into one stream of
//! independent uniform p-values under exchangeability.

use serde::{Deserialize, Serialize};

use crate::conformity::{label_average, NnCache, NnVariant, ScoreVector};
use crate::error::{Error, Result};
use crate::random::{RandomSource, StreamId};
use crate::types::{Label, Observation};

/// A p-value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue(f64);

impl PValue {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(PValue(value))
        } else {
            Err(Error::InvalidPValue(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<PValue> for f64 {
    fn from(p: PValue) -> f64 {
        p.0
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("tau {tau} outside [0, 1]")))
    }
}

fn rank_p_value(less: usize, equal: usize, total: usize, tau: f64) -> Result<PValue> {
    if equal == total {
        // full tie: the ratio is exactly τ
        return PValue::new(tau);
    }
    PValue::new(((less as f64 + tau * equal as f64) / total as f64).min(1.0))
}

/// Conformal transducer: `(#{αᵢ < αₙ} + τ·#{αᵢ = αₙ}) / n`.
pub fn p_conformal(scores: &ScoreVector, tau: f64) -> Result<PValue> {
    check_tau(tau)?;
    let s = scores.as_slice();
    let last = *s.last().ok_or(Error::EmptyStream)?;
    let (mut less, mut equal) = (0usize, 0usize);
    for &a in s {
        if a < last {
            less += 1;
        } else if a == last {
            equal += 1;
        }
    }
    rank_p_value(less, equal, s.len(), tau)
}

/// Label-conditional transducer: counts restricted to `yᵢ = yₙ`.
pub fn p_label_conditional(scores: &ScoreVector, labels: &[Label], tau: f64) -> Result<PValue> {
    check_tau(tau)?;
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let s = scores.as_slice();
    let last = *s.last().ok_or(Error::EmptyStream)?;
    let y = labels[labels.len() - 1];
    let (mut less, mut equal, mut class) = (0usize, 0usize, 0usize);
    for (&a, &yi) in s.iter().zip(labels) {
        if yi != y {
            continue;
        }
        class += 1;
        if a < last {
            less += 1;
        } else if a == last {
            equal += 1;
        }
    }
    rank_p_value(less, equal, class, tau)
}

/// Where the label leg's tie-breaking draws come from.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum LegRandomness {
    /// Disjoint substreams for `τₙ` and `τ′ₙ`.
    Independent { tau: RandomSource, tau_prime: RandomSource },
    /// Compatibility mode: `τ′ₙ = τₙ`.
    Shared(RandomSource),
}

impl LegRandomness {
    /// Independent `"tau"` and `"tau-prime"` substreams of `seed`.
    pub fn independent(seed: u64) -> Self {
        LegRandomness::Independent {
            tau: RandomSource::new(seed, "tau"),
            tau_prime: RandomSource::new(seed, "tau-prime"),
        }
    }

    pub fn shared(seed: u64) -> Self {
        LegRandomness::Shared(RandomSource::new(seed, "tau"))
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, LegRandomness::Shared(_))
    }

    fn concept_id(&self) -> StreamId {
        match self {
            LegRandomness::Independent { tau, .. } | LegRandomness::Shared(tau) => tau.id().clone(),
        }
    }

    fn label_id(&self) -> StreamId {
        match self {
            LegRandomness::Independent { tau_prime, .. } => tau_prime.id().clone(),
            LegRandomness::Shared(tau) => tau.id().clone(),
        }
    }

    fn draw_pair(&mut self) -> (f64, f64) {
        match self {
            LegRandomness::Independent { tau, tau_prime } => (tau.uniform(), tau_prime.uniform()),
            LegRandomness::Shared(tau) => {
                let t = tau.uniform();
                (t, t)
            }
        }
    }
}

/// P-values emitted for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPValues {
    /// `Pₙ`, label-conditional transducer over the concept measure.
    pub concept: PValue,
    /// `P′ₙ`, conformal transducer over class-averaged label-measure scores.
    pub label: Option<PValue>,
    /// The `τₙ` used for the concept leg.
    pub tau: f64,
}

/// Streaming form of the interleaved two-leg transducer.
///
/// Both legs read the same [`NnCache`]; the concept leg must be a full
/// conformity measure, which every [`NnVariant`] is.
#[derive(Debug, Clone)]
pub struct Interleaver {
    cache: NnCache,
    concept_measure: NnVariant,
    label_measure: Option<NnVariant>,
    randomness: LegRandomness,
    concept_scores: ScoreVector,
}

impl Interleaver {
    pub fn new(concept_measure: NnVariant, label_measure: Option<NnVariant>, randomness: LegRandomness) -> Self {
        Interleaver {
            cache: NnCache::new(),
            concept_measure,
            label_measure,
            randomness,
            concept_scores: ScoreVector::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn cache(&self) -> &NnCache {
        &self.cache
    }

    /// Concept-measure scores of the prefix after the latest push.
    pub fn concept_scores(&self) -> &ScoreVector {
        &self.concept_scores
    }

    pub fn concept_stream(&self) -> StreamId {
        self.randomness.concept_id()
    }

    pub fn label_stream(&self) -> StreamId {
        self.randomness.label_id()
    }

    pub fn push(&mut self, z: &Observation) -> Result<StepPValues> {
        self.cache.insert(z)?;
        let (tau, tau_prime) = self.randomness.draw_pair();
        self.concept_scores = self.cache.score(self.concept_measure);
        let concept = p_label_conditional(&self.concept_scores, self.cache.labels(), tau)?;
        let label = match self.label_measure {
            Some(measure) => {
                let raw = if measure == self.concept_measure {
                    self.concept_scores.clone()
                } else {
                    self.cache.score(measure)
                };
                let averaged = label_average(&raw, self.cache.labels())?;
                Some(p_conformal(&averaged, tau_prime)?)
            }
            None => None,
        };
        Ok(StepPValues { concept, label, tau })
    }
}

/// Interleaved p-value stream `P₁, P′₁, P₂, P′₂, …` over a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedPValues {
    pub concept: Vec<PValue>,
    pub label: Vec<PValue>,
    pub concept_stream: StreamId,
    pub label_stream: StreamId,
}

pub fn interleave(
    stream: &[Observation],
    concept_measure: NnVariant,
    label_measure: NnVariant,
    randomness: LegRandomness,
) -> Result<InterleavedPValues> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut engine = Interleaver::new(concept_measure, Some(label_measure), randomness);
    let mut concept = Vec::with_capacity(stream.len());
    let mut label = Vec::with_capacity(stream.len());
    for z in stream {
        let step = engine.push(z)?;
        concept.push(step.concept);
        label.push(step.label.expect("label leg configured"));
    }
    Ok(InterleavedPValues {
        concept,
        label,
        concept_stream: engine.concept_stream(),
        label_stream: engine.label_stream(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec()).unwrap()
    }

    fn labels(v: &[u32]) -> Vec<Label> {
        v.iter().map(|&y| Label(y)).collect()
    }

    #[test]
    fn conformal_singleton_is_tau() {
        assert_eq!(p_conformal(&sv(&[4.2]), 0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn conformal_by_hand() {
        let s = sv(&[1.0, 2.0, 2.0]);
        assert_eq!(p_conformal(&s, 0.25).unwrap().value(), 0.5);
        assert_eq!(p_conformal(&s, 1.0).unwrap().value(), 1.0);
        assert_eq!(p_conformal(&s, 0.0).unwrap().value(), 1.0 / 3.0);
    }

    #[test]
    fn label_conditional_singleton_class_is_tau() {
        let s = sv(&[1.0, 5.0, 2.0, 9.0]);
        let p = p_label_conditional(&s, &labels(&[0, 0, 0, 1]), 0.5).unwrap();
        assert_eq!(p.value(), 0.5);
    }

    #[test]
    fn label_conditional_by_hand() {
        let p = p_label_conditional(&sv(&[1.0, 2.0, 2.0]), &labels(&[0, 0, 0]), 0.5).unwrap();
        assert_eq!(p.value(), 2.0 / 3.0);
        let p = p_label_conditional(&sv(&[5.0, 99.0, 3.0]), &labels(&[0, 1, 0]), 0.0).unwrap();
        assert_eq!(p.value(), 0.0);
    }

    #[test]
    fn infinite_scores_tie() {
        let s = sv(&[f64::INFINITY, 1.0, f64::INFINITY]);
        assert_eq!(p_conformal(&s, 0.5).unwrap().value(), (1.0 + 0.5 * 2.0) / 3.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(p_conformal(&sv(&[]), 0.5), Err(Error::EmptyStream)));
        assert!(p_conformal(&sv(&[1.0]), 1.5).is_err());
        assert!(p_label_conditional(&sv(&[1.0]), &labels(&[0, 1]), 0.5).is_err());
        assert!(PValue::new(-0.1).is_err());
        assert!(PValue::new(f64::NAN).is_err());
    }

    #[test]
    fn distinct_labels_give_tau_and_equal_labels_give_tau_prime() {
        let stream: Vec<Observation> = (0..6)
            .map(|i| Observation::from_parts(vec![i as f64 * 0.7, (i * i) as f64], i))
            .collect();
        let out = interleave(
            &stream,
            NnVariant::Ratio,
            NnVariant::Ratio,
            LegRandomness::independent(5),
        )
        .unwrap();
        let mut tau = RandomSource::new(5, "tau");
        for p in &out.concept {
            assert_eq!(p.value(), tau.uniform());
        }

        let same: Vec<Observation> = (0..6)
            .map(|i| Observation::from_parts(vec![i as f64, 1.0 / (1.0 + i as f64)], 3))
            .collect();
        let out = interleave(
            &same,
            NnVariant::Ratio,
            NnVariant::SameClass,
            LegRandomness::independent(5),
        )
        .unwrap();
        let mut tau_prime = RandomSource::new(5, "tau-prime");
        for p in &out.label {
            assert_eq!(p.value(), tau_prime.uniform());
        }
        assert_ne!(out.concept_stream, out.label_stream);
    }

    #[test]
    fn shared_mode_reuses_draws() {
        let stream: Vec<Observation> = (0..5).map(|i| Observation::from_parts(vec![i as f64], i)).collect();
        let out = interleave(&stream, NnVariant::Ratio, NnVariant::Ratio, LegRandomness::shared(1)).unwrap();
        assert_eq!(out.concept_stream, out.label_stream);
        let mut tau = RandomSource::new(1, "tau");
        for p in &out.concept {
            assert_eq!(p.value(), tau.uniform());
        }
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(matches!(
            interleave(&[], NnVariant::Ratio, NnVariant::Ratio, LegRandomness::independent(1)),
            Err(Error::EmptyStream)
        ));
    }
}
