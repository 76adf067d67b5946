mod common;

use common::permutation;
use xmart::betting::{check_betting_validity, run_martingale, Quadrature, Strategy, StrategyTag};
use xmart::conformity::NnVariant;
use xmart::experiment::{run_experiment, ExperimentConfig};
use xmart::synth::{uniformity_report, Scenario, ScenarioConfig};
use xmart::transducer::PValue;
use xmart::RandomSource;

fn random_prefixes(seed: u64, count: usize, max_len: usize) -> Vec<Vec<f64>> {
    let mut src = RandomSource::new(seed, "prefixes");
    (0..count)
        .map(|_| {
            let len = (src.uniform() * (max_len + 1) as f64) as usize;
            (0..len).map(|_| 1.0 - src.uniform()).collect()
        })
        .collect()
}

#[test]
fn jumper_bets_integrate_exactly() {
    let prefixes = random_prefixes(1, 100, 40);
    for strategy in [
        Strategy::simple_jumper(0.001),
        Strategy::simple_jumper(0.5),
        Strategy::sleepy_jumper(0.001, 0.01),
    ] {
        let err = check_betting_validity(&strategy, &prefixes, Quadrature::GaussLegendre { points: 2 });
        assert!(err < 1e-9, "{strategy:?}: {err}");
    }
}

#[test]
fn mixture_is_a_betting_martingale_beyond_first_step() {
    let prefixes = random_prefixes(2, 40, 12);
    let err = check_betting_validity(
        &Strategy::mixture_power(),
        &prefixes,
        Quadrature::for_strategy(StrategyTag::MixturePower),
    );
    assert!(err < 1e-6, "{err}");
    let n1 = check_betting_validity(
        &Strategy::mixture_power(),
        &[vec![]],
        Quadrature::for_strategy(StrategyTag::MixturePower),
    );
    assert!(n1 < 1e-6, "{n1}");
}

#[test]
fn checker_detects_invalid_bet() {
    // F(u₁…uₙ) = 2uₙ integrates to F(□) = 1 at n = 1 but not to F(u₁) afterwards.
    let last_only = |ln_prefix: &[f64]| match ln_prefix.last() {
        None => 0.0,
        Some(ln_u) => (2.0 * ln_u.exp()).log10(),
    };
    let first = check_betting_validity(&last_only, &[vec![]], Quadrature::GaussLegendre { points: 4 });
    assert!(first < 1e-12, "{first}");
    let later = check_betting_validity(
        &last_only,
        &random_prefixes(3, 100, 5)[..]
            .iter()
            .filter(|p| !p.is_empty())
            .cloned()
            .collect::<Vec<_>>(),
        Quadrature::GaussLegendre { points: 4 },
    );
    assert!(later > 0.1, "{later}");
}

#[test]
fn quadrature_too_coarse_for_curved_bet_is_visible() {
    // a quadratic bet with unit integral: F(u) = 3u²; 1-point rule misses it
    let quad = |ln_prefix: &[f64]| match ln_prefix.last() {
        None => 0.0,
        Some(ln_u) => (3.0 * (2.0 * ln_u).exp()).log10(),
    };
    assert!(check_betting_validity(&quad, &[vec![]], Quadrature::GaussLegendre { points: 1 }) > 0.1);
    assert!(check_betting_validity(&quad, &[vec![]], Quadrature::GaussLegendre { points: 2 }) < 1e-12);
}

#[test]
fn ville_for_uniform_p_values() {
    let mut exceed = 0;
    for run in 0..1000u64 {
        let mut src = RandomSource::new(run, "ville");
        let ps: Vec<PValue> = (0..1000).map(|_| PValue::new(src.uniform()).unwrap()).collect();
        let t = run_martingale(Strategy::simple_jumper(0.001), &ps).unwrap();
        if t.max_log10() >= 1.0 {
            exceed += 1;
        }
    }
    assert!(exceed <= 100, "{exceed} of 1000 runs reached 10");
}

#[test]
fn iid_runs_rarely_reach_a_hundred() {
    let mut calm = 0;
    for seed in 0..100u64 {
        let mut c = ExperimentConfig::scenario(ScenarioConfig::new(Scenario::Iid, 500));
        c.seed = seed;
        let last = *run_experiment(&c).unwrap().last().unwrap();
        if [last.log10_black, last.log10_red, last.log10_green, last.log10_blue]
            .iter()
            .all(|&v| v < 2.0)
        {
            calm += 1;
        }
    }
    assert!(calm >= 90, "{calm} of 100");
}

#[test]
fn mixed_measures_per_leg() {
    let mut c = ExperimentConfig::scenario(ScenarioConfig::new(Scenario::ConceptShift, 400).with_shift(200, 3.0));
    c.concept_measure = NnVariant::SameClass;
    c.label_measure = Some(NnVariant::Ratio);
    let t = run_experiment(&c).unwrap();
    assert_eq!(t.decomposition_error(), 0.0);
    let mut same = c.clone();
    same.label_measure = Some(NnVariant::SameClass);
    let t2 = run_experiment(&same).unwrap();
    assert_eq!(t.column(|r| r.log10_red), t2.column(|r| r.log10_red));
    assert_ne!(t.column(|r| r.log10_green), t2.column(|r| r.log10_green));
}

#[test]
fn shuffled_concept_shift_looks_exchangeable() {
    // shuffling destroys the changepoint; the label-conditional p-values become uniform again
    let cfg = ScenarioConfig::new(Scenario::ConceptShift, 60).with_shift(30, 3.0);
    let mut pooled = Vec::new();
    for run in 0..500u64 {
        let stream = xmart::synth::generate(&cfg, &mut RandomSource::new(run, "scenario")).unwrap();
        let perm = permutation(&mut RandomSource::new(run, "shuffle"), stream.len());
        let shuffled: Vec<_> = perm.iter().map(|&i| stream[i].clone()).collect();
        let out = xmart::transducer::interleave(
            &shuffled,
            NnVariant::SameClass,
            NnVariant::Ratio,
            xmart::transducer::LegRandomness::independent(run),
        )
        .unwrap();
        pooled.extend(out.concept.iter().map(|p| p.value()));
    }
    let r = uniformity_report(&pooled).unwrap();
    assert!(r.ks_distance < 1.95 / (pooled.len() as f64).sqrt() + 0.005, "{r:?}");
}
