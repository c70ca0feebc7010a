mod common;

use common::conjugate;
use snl_core::diagnostics::mmd;
use snl_core::engine::{run_snl, SnlConfig};
use snl_core::rng::seeded;
use snl_core::simulators::CountingSimulator;

fn config(rounds: usize, n: usize, seed: u64) -> SnlConfig {
    SnlConfig {
        rounds,
        sims_per_round: n,
        seed,
        ..SnlConfig::default()
    }
}

#[test]
fn snl_concentrates_on_the_conjugate_posterior() {
    let noise = 0.3;
    let observed = [0.9, -0.4];
    let prior = conjugate::prior(2);
    let sim = CountingSimulator::new(conjugate::simulator(2, noise));
    let run = run_snl(&prior, &sim, &observed, &config(2, 300, 1)).unwrap();
    assert_eq!(sim.calls(), 600);
    assert_eq!(run.simulator_calls(), 600);

    let approx = run.posterior.sample(500, 200, 1, 2).unwrap();
    let exact = conjugate::posterior_draws(&observed, noise, 500, &mut seeded(3));
    let mut rng = seeded(4);
    let prior_draws: Vec<Vec<f64>> = (0..500).map(|_| prior.sample(&mut rng)).collect();
    let to_exact = mmd(&approx, &exact).unwrap();
    let prior_to_exact = mmd(&prior_draws, &exact).unwrap();
    assert!(to_exact < 0.5 * prior_to_exact, "{to_exact} vs prior {prior_to_exact}");
}

#[test]
fn same_seed_same_run() {
    let prior = conjugate::prior(1);
    let sim = conjugate::simulator(1, 0.5);
    let a = run_snl(&prior, &sim, &[0.4], &config(2, 100, 7)).unwrap();
    let b = run_snl(&prior, &sim, &[0.4], &config(2, 100, 7)).unwrap();
    assert_eq!(a.store, b.store);
    assert_eq!(a.posterior.flow, b.posterior.flow);
    let sa = a.posterior.sample(50, 20, 1, 8).unwrap();
    let sb = b.posterior.sample(50, 20, 1, 8).unwrap();
    assert_eq!(sa, sb);
}
