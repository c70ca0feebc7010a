mod common;

use common::conjugate;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use snl_core::diagnostics::{
    gaussian_baseline_gof, kde_log_prob, likelihood_gof, median_distance, mmd, sbc_ranks, Bandwidth,
    SimulatorSampler,
};
use snl_core::flow::{ConditionalMaf, FlowConfig};
use snl_core::rng::{seeded, Rng};
use snl_core::simulators::toy::TOY_TRUE_PARAMS;
use snl_core::simulators::{Simulator, ToyModel};
use snl_core::{Error, SimulationStore};

fn gaussian_cloud(n: usize, dim: usize, shift: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Plain double loops, no parallelism, no shortcuts.
fn reference_mmd(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
    let mut pairs = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            pairs.push(dist(pooled[i], pooled[j]));
        }
    }
    pairs.sort_by(f64::total_cmp);
    let m = pairs.len();
    let h = if m % 2 == 1 { pairs[m / 2] } else { 0.5 * (pairs[m / 2 - 1] + pairs[m / 2]) };
    let k = |p: &[f64], q: &[f64]| (-dist(p, q).powi(2) / (2.0 * h * h)).exp();
    let within = |s: &[Vec<f64>]| {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j {
                    acc += k(&s[i], &s[j]);
                }
            }
        }
        acc / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for p in a {
        for q in b {
            cross += k(p, q);
        }
    }
    cross /= (a.len() * b.len()) as f64;
    (within(a) + within(b) - 2.0 * cross).max(0.0).sqrt()
}

#[test]
fn mmd_matches_a_direct_estimator() {
    let mut rng = seeded(1);
    let a = gaussian_cloud(1000, 2, 0.0, &mut rng);
    let b = gaussian_cloud(1000, 2, 5.0, &mut rng);
    let fast = mmd(&a, &b).unwrap();
    let slow = reference_mmd(&a, &b);
    assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
}

#[test]
fn mmd_of_one_distribution_is_small() {
    let mut rng = seeded(2);
    let a = gaussian_cloud(1000, 1, 0.0, &mut rng);
    let b = gaussian_cloud(1000, 1, 0.0, &mut rng);
    assert!(mmd(&a, &b).unwrap() < 0.1);
}

#[test]
fn mmd_is_symmetric_and_permutation_invariant() {
    let mut rng = seeded(3);
    let a = gaussian_cloud(300, 3, 0.0, &mut rng);
    let b = gaussian_cloud(200, 3, 0.4, &mut rng);
    let ab = mmd(&a, &b).unwrap();
    assert_eq!(ab.to_bits(), mmd(&b, &a).unwrap().to_bits());
    let mut shuffled = a.clone();
    shuffled.shuffle(&mut rng);
    assert!((mmd(&shuffled, &b).unwrap() - ab).abs() < 1e-12);
    assert!(ab >= 0.0);
}

#[test]
fn kde_recovers_the_standard_normal_at_the_origin() {
    let mut rng = seeded(4);
    let samples = gaussian_cloud(100_000, 2, 0.0, &mut rng);
    let lp = kde_log_prob(&samples, &[0.0, 0.0], &Bandwidth::Scott).unwrap();
    let expected = -(2.0 * std::f64::consts::PI).ln();
    assert!((lp - expected).abs() < 0.05, "{lp} vs {expected}");
}

#[test]
fn kde_is_translation_equivariant_and_exchangeable() {
    let mut rng = seeded(5);
    let samples = gaussian_cloud(500, 3, 0.0, &mut rng);
    let point = [0.2, -0.4, 1.1];
    let base = kde_log_prob(&samples, &point, &Bandwidth::Scott).unwrap();
    let offset = [3.0, -7.5, 0.25];
    let moved: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&offset).map(|(a, b)| a + b).collect())
        .collect();
    let moved_point: Vec<f64> = point.iter().zip(&offset).map(|(a, b)| a + b).collect();
    let shifted = kde_log_prob(&moved, &moved_point, &Bandwidth::Scott).unwrap();
    assert!((shifted - base).abs() < 1e-12);
    let mut permuted = samples.clone();
    permuted.shuffle(&mut rng);
    let again = kde_log_prob(&permuted, &point, &Bandwidth::Scott).unwrap();
    assert_eq!(again.to_bits(), base.to_bits());
}

#[test]
fn median_distance_matches_direct_median_of_norms() {
    let mut rng = seeded(6);
    let observed: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut store = SimulationStore::new(2, 4);
    for round in 1..=2 {
        for _ in 0..(100 + round) {
            let theta = vec![0.0, 0.0];
            let x: Vec<f64> = (0..4).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            store.push(round, theta, x).unwrap();
        }
    }
    for round in 1..=2 {
        let mut norms: Vec<f64> = store
            .round(round)
            .map(|r| r.x.iter().zip(&observed).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        norms.sort_by(f64::total_cmp);
        let n = norms.len();
        let direct = if n % 2 == 1 { norms[n / 2] } else { 0.5 * (norms[n / 2 - 1] + norms[n / 2]) };
        let got = median_distance(&store, &observed, round).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }
    assert!(median_distance(&store, &observed, 3).is_err());
}

#[test]
fn calibrated_oracle_gives_uniform_ranks() {
    let noise = 1.0;
    let prior = conjugate::prior(2);
    let simulator = conjugate::simulator(2, noise);
    let exact = |x: &[f64], seed: u64| Ok(conjugate::posterior_draws(x, noise, 9, &mut seeded(seed)));
    let result = sbc_ranks(&prior, &simulator, exact, 200, 9, 7).unwrap();
    assert_eq!(result.records.len(), 200);
    for param in 0..2 {
        let hist = result.histogram(param);
        assert_eq!(hist.len(), 10);
        assert_eq!(hist.iter().sum::<usize>(), 200);
        let p = result.chi_square_p_value(param);
        assert!(p > 0.01, "parameter {param}: p = {p}, histogram {hist:?}");
    }
}

#[test]
fn prior_mean_oracle_is_detected() {
    let prior = conjugate::prior(2);
    let simulator = conjugate::simulator(2, 1.0);
    let collapsed = |_: &[f64], _: u64| Ok(vec![vec![0.0, 0.0]; 9]);
    let result = sbc_ranks(&prior, &simulator, collapsed, 200, 9, 8).unwrap();
    for param in 0..2 {
        let hist = result.histogram(param);
        assert_eq!(hist[0] + hist[9], 200, "{hist:?}");
        assert!(hist[0] > 50 && hist[9] > 50);
        assert!(result.chi_square_p_value(param) < 1e-10);
    }
}

#[test]
fn failed_trials_are_skipped_and_counted() {
    let prior = conjugate::prior(1);
    let simulator = conjugate::simulator(1, 1.0);
    let flaky = |x: &[f64], seed: u64| {
        if x[0] > 1.0 {
            Err(Error::Inference("refused".into()))
        } else {
            Ok(conjugate::posterior_draws(x, 1.0, 9, &mut seeded(seed)))
        }
    };
    let result = sbc_ranks(&prior, &simulator, flaky, 100, 9, 9).unwrap();
    assert!(!result.skipped.is_empty());
    assert_eq!(result.skipped.len() + result.records.len(), 100);
}

/// Fraction of label permutations of the pooled batches whose MMD is at
/// least `observed`.
fn permutation_p_value(a: &[Vec<f64>], b: &[Vec<f64>], observed: f64, rounds: usize, rng: &mut Rng) -> f64 {
    let mut pooled: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let mut exceed = 0;
    for _ in 0..rounds {
        pooled.shuffle(rng);
        let (x, y) = pooled.split_at(a.len());
        if mmd(x, y).unwrap() >= observed {
            exceed += 1;
        }
    }
    (exceed + 1) as f64 / (rounds + 1) as f64
}

#[test]
fn simulator_against_itself_is_a_null_comparison() {
    let theta = TOY_TRUE_PARAMS;
    let n = 300;
    let value = likelihood_gof(&SimulatorSampler(&ToyModel), &ToyModel, &theta, n, 10).unwrap();
    let mut rng = seeded(11);
    let a: Vec<Vec<f64>> = (0..n).map(|_| ToyModel.simulate(&theta, &mut rng).unwrap()).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| ToyModel.simulate(&theta, &mut rng).unwrap()).collect();
    let p = permutation_p_value(&a, &b, value, 200, &mut rng);
    assert!(p > 0.05, "p = {p}");
}

#[test]
fn untrained_flow_fits_worse_than_a_gaussian() {
    let flow = ConditionalMaf::new(8, 5, FlowConfig::default(), &mut seeded(12)).unwrap();
    let theta = TOY_TRUE_PARAMS;
    let untrained = likelihood_gof(&flow, &ToyModel, &theta, 1000, 13).unwrap();
    let gaussian = gaussian_baseline_gof(&ToyModel, &theta, 1000, 13).unwrap();
    assert!(untrained > gaussian, "{untrained} vs {gaussian}");
    let again = likelihood_gof(&flow, &ToyModel, &theta, 1000, 13).unwrap();
    assert_eq!(again.to_bits(), untrained.to_bits());
}
