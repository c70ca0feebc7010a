//! Measurements behind the flow correctness checks. Each function returns
//! the worst observed error so callers can apply their own tolerance.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use snl_core::flow::{train_arrays, ConditionalMaf, FlowConfig, MadeParams, Mode, TrainConfig};
use snl_core::rng::{seeded, Rng};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients which vanish
/// analytically are judged on absolute error.
pub const GRAD_FLOOR: f64 = 1e-5;

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Small flow with every trainable entry perturbed and random running
/// moments, so no layer is the identity.
pub fn randomized_flow(data_dim: usize, cond_dim: usize, seed: u64) -> ConditionalMaf {
    let mut rng = seeded(seed);
    let config = FlowConfig {
        n_layers: 3,
        hidden_sizes: vec![6, 5],
        batch_norm: true,
    };
    let mut flow = ConditionalMaf::new(data_dim, cond_dim, config, &mut rng).unwrap();
    for layer in flow.layers.iter_mut() {
        let mask = MadeParams::trainable(&layer.masks);
        for (s, m) in layer.params.slices_mut().into_iter().zip(mask.slices()) {
            for (v, &keep) in s.iter_mut().zip(m) {
                *v += keep * 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    for norm in flow.norms.iter_mut() {
        for s in norm.params.slices_mut() {
            for v in s.iter_mut() {
                *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mean = Array1::from_shape_simple_fn(data_dim, || 0.5 * rng.sample::<f64, _>(StandardNormal));
        let var = Array1::from_shape_simple_fn(data_dim, || (0.5 * rng.sample::<f64, _>(StandardNormal)).exp());
        norm.set_running(mean, var);
    }
    flow
}

fn nudge(flow: &mut ConditionalMaf, mut index: usize, delta: f64) {
    for s in flow.param_slices_mut() {
        if index < s.len() {
            s[index] += delta;
            return;
        }
        index -= s.len();
    }
    panic!("parameter index out of range");
}

fn trainable_flags(flow: &ConditionalMaf) -> Vec<bool> {
    let mut flags = Vec::new();
    for layer in &flow.layers {
        for s in MadeParams::trainable(&layer.masks).slices() {
            flags.extend(s.iter().map(|&v| v != 0.0));
        }
    }
    for norm in &flow.norms {
        for s in norm.params.slices() {
            flags.extend(std::iter::repeat(true).take(s.len()));
        }
    }
    flags
}

fn mean_log_prob(flow: &ConditionalMaf, xs: &Array2<f64>, thetas: &Array2<f64>, mode: Mode) -> f64 {
    flow.log_prob_batch(xs.view(), thetas.view(), mode).unwrap().mean().unwrap()
}

/// Largest relative error between the analytic gradient of the mean
/// log-density and central differences, over every trainable parameter at
/// `points` random flows and batches. Masked entries must have an exactly
/// zero gradient.
pub fn max_gradient_error(mode: Mode, points: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..points as u64 {
        let mut flow = randomized_flow(3, 2, seed.wrapping_add(p));
        let mut rng = seeded(seed.wrapping_add(p) ^ 0xfd);
        let xs = normal_matrix(8, 3, &mut rng);
        let thetas = normal_matrix(8, 2, &mut rng);
        let (_, grads, _) = flow.mean_log_prob_and_grad(xs.view(), thetas.view(), mode).unwrap();
        let analytic = grads.slices().concat();
        let flags = trainable_flags(&flow);
        assert_eq!(analytic.len(), flags.len());
        for (k, (&a, &free)) in analytic.iter().zip(&flags).enumerate() {
            if !free {
                assert_eq!(a, 0.0, "masked parameter {k} has gradient {a}");
                continue;
            }
            nudge(&mut flow, k, FD_STEP);
            let up = mean_log_prob(&flow, &xs, &thetas, mode);
            nudge(&mut flow, k, -2.0 * FD_STEP);
            let down = mean_log_prob(&flow, &xs, &thetas, mode);
            nudge(&mut flow, k, FD_STEP);
            let fd = (up - down) / (2.0 * FD_STEP);
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// `|log q(x) - log N(x; 0, I)|` at zero and random points for a freshly
/// initialized 8-dimensional flow.
pub fn identity_error(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let flow = ConditionalMaf::new(8, 5, FlowConfig::default(), &mut rng).unwrap();
    let half_log_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut worst = 0.0f64;
    for k in 0..20 {
        let x: Vec<f64> = if k == 0 {
            vec![0.0; 8]
        } else {
            (0..8).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let theta: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let expected = -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 8.0 * half_log_two_pi;
        worst = worst.max((flow.log_prob(&x, &theta).unwrap() - expected).abs());
    }
    worst
}

/// Linear-Gaussian pairs: `theta ~ U(-1, 1)`, `x | theta ~ N(theta, 1)`.
pub fn linear_gaussian_pairs(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = seeded(seed);
    let thetas = Array2::from_shape_simple_fn((n, 1), || rng.random_range(-1.0..1.0));
    let xs = &thetas + &normal_matrix(n, 1, &mut rng);
    (thetas, xs)
}

pub fn train_linear_gaussian(n: usize, seed: u64) -> ConditionalMaf {
    let (thetas, xs) = linear_gaussian_pairs(n, seed);
    fit_linear_gaussian(thetas, xs, seed)
}

pub fn fit_linear_gaussian(thetas: Array2<f64>, xs: Array2<f64>, seed: u64) -> ConditionalMaf {
    let flow = ConditionalMaf::new(1, 1, FlowConfig::default(), &mut seeded(seed ^ 0x1)).unwrap();
    let config = TrainConfig {
        seed: seed ^ 0x2,
        ..TrainConfig::default()
    };
    train_arrays(thetas.view(), xs.view(), &config, flow).unwrap().0
}

/// Largest `max |x - x'|` over density-then-generative and
/// generative-then-density round trips.
pub fn round_trip_error(flow: &ConditionalMaf, n: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let xs = 1.5 * normal_matrix(n, flow.data_dim, &mut rng);
    let thetas = normal_matrix(n, flow.cond_dim, &mut rng);
    let (u, _) = flow.to_base(xs.view(), thetas.view(), Mode::Eval).unwrap();
    let back = flow.from_base(u.view(), thetas.view()).unwrap();
    let z = normal_matrix(n, flow.data_dim, &mut rng);
    let x = flow.from_base(z.view(), thetas.view()).unwrap();
    let (z_back, _) = flow.to_base(x.view(), thetas.view(), Mode::Eval).unwrap();
    let a = (&back - &xs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let b = (&z_back - &z).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.max(b)
}

/// Midpoint-rule grid over `[-half_width, half_width]`.
pub fn grid(half_width: f64, cells: usize) -> (Vec<f64>, f64) {
    let step = 2.0 * half_width / cells as f64;
    ((0..cells).map(|i| -half_width + (i as f64 + 0.5) * step).collect(), step)
}

/// Log-densities of a 1-D flow over `points` at a fixed conditioner.
pub fn log_density_1d(flow: &ConditionalMaf, points: &[f64], theta: &[f64]) -> Vec<f64> {
    let xs = Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
    let thetas = Array2::from_shape_fn((points.len(), theta.len()), |(_, j)| theta[j]);
    flow.log_prob_batch(xs.view(), thetas.view(), Mode::Eval).unwrap().to_vec()
}

/// Integral of `q(x | theta)` by the midpoint rule over a wide grid.
pub fn quadrature_mass(flow: &ConditionalMaf, theta: &[f64], half_width: f64, cells: usize) -> f64 {
    let (points, step) = grid(half_width, cells);
    match flow.data_dim {
        1 => log_density_1d(flow, &points, theta).iter().map(|l| l.exp()).sum::<f64>() * step,
        2 => {
            let n = points.len();
            let xs = Array2::from_shape_fn((n * n, 2), |(r, c)| if c == 0 { points[r / n] } else { points[r % n] });
            let thetas = Array2::from_shape_fn((n * n, theta.len()), |(_, j)| theta[j]);
            let lp = flow.log_prob_batch(xs.view(), thetas.view(), Mode::Eval).unwrap();
            lp.iter().map(|l| l.exp()).sum::<f64>() * step * step
        }
        d => panic!("quadrature over {d} dimensions"),
    }
}

/// Mean and standard deviation of a 1-D conditional by quadrature.
pub fn quadrature_moments(flow: &ConditionalMaf, theta: &[f64]) -> (f64, f64) {
    let (points, step) = grid(20.0, 8_000);
    let dens: Vec<f64> = log_density_1d(flow, &points, theta).iter().map(|l| l.exp()).collect();
    let mass: f64 = dens.iter().sum::<f64>() * step;
    let mean = points.iter().zip(&dens).map(|(x, p)| x * p).sum::<f64>() * step / mass;
    let var = points.iter().zip(&dens).map(|(x, p)| (x - mean).powi(2) * p).sum::<f64>() * step / mass;
    (mean, var.sqrt())
}

/// Analytic `KL(N(theta, 1) || N(mean, sd^2))`.
pub fn gaussian_kl(theta: f64, mean: f64, sd: f64) -> f64 {
    sd.ln() + (1.0 + (theta - mean).powi(2)) / (2.0 * sd * sd) - 0.5
}

/// Nonlinear 3-D conditional: x2 bends with x1, x3 with x2.
pub fn curved_pairs(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = seeded(seed);
    let thetas = normal_matrix(n, 2, &mut rng);
    let mut xs = Array2::zeros((n, 3));
    for r in 0..n {
        let e: [f64; 3] = std::array::from_fn(|_| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let x1 = thetas[[r, 0]] + e[0];
        let x2 = 0.5 * x1 * x1 + thetas[[r, 1]] + e[1];
        xs[[r, 0]] = x1;
        xs[[r, 1]] = x2;
        xs[[r, 2]] = x2.sin() + e[2];
    }
    (thetas, xs)
}

pub fn trained_curved_flow() -> (ConditionalMaf, Array2<f64>, Array2<f64>) {
    let (thetas, xs) = curved_pairs(600, 11);
    let flow = ConditionalMaf::new(3, 2, FlowConfig::default(), &mut seeded(12)).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: Some(40),
        seed: 13,
        ..TrainConfig::default()
    };
    let (flow, _) = train_arrays(thetas.view(), xs.view(), &config, flow).unwrap();
    (flow, thetas, xs)
}
