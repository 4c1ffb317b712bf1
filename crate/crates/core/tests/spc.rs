use gpc_core::spc::*;
use gpc_core::tasks::{State, Task, TaskConfig};
use gpc_core::Error;
use rand_distr::{Distribution, StandardNormal};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;

fn scalar_knots(values: &[f64]) -> ControlKnots {
    ControlKnots::from_flat(values.len(), 1, values.to_vec(), Interpolation::Linear, 1.0).unwrap()
}

fn dist_of(values: &[f64], var: f64) -> SamplingDistribution {
    SamplingDistribution::new(scalar_knots(values), var).unwrap()
}

#[test]
fn zero_variance_samples_equal_mean() {
    let d = ControlKnots::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], Interpolation::CubicSpline, 3.0).unwrap();
    let dist = SamplingDistribution::new(d.clone(), 0.0).unwrap();
    for c in sample_candidates(&dist, 5, 1.0, 9) {
        assert_eq!(c, d);
    }
}

#[test]
fn annealing_schedule_values() {
    let a: Vec<f64> = (0..4).map(|k| annealing_scale(1.0, k, 4)).collect();
    let want = [1.0, (4.0f64 / 3.0).powi(2), (5.0f64 / 3.0).powi(2), 4.0];
    for (g, w) in a.iter().zip(want) {
        assert_relative_eq!(*g, w, epsilon = 1e-12);
    }
}

#[test]
fn annealing_widens_later_knots() {
    let dist = dist_of(&[0.0; 4], 1.0);
    let samples = sample_candidates(&dist, 20_000, 1.0, 3);
    let var = |k: usize| samples.iter().map(|c| c.values()[k].powi(2)).sum::<f64>() / samples.len() as f64;
    assert!((var(0) - 1.0).abs() < 0.05);
    assert!((var(3) - 4.0).abs() < 0.2);
}

#[test]
fn large_sample_moments() {
    let dist = SamplingDistribution::new(
        ControlKnots::from_flat(4, 2, vec![0.0; 8], Interpolation::CubicSpline, 3.0).unwrap(),
        1.0,
    )
    .unwrap();
    let samples = sample_candidates(&dist, 100_000, 0.0, 42);
    let n = samples.len() as f64;
    for d in 0..8 {
        let mean = samples.iter().map(|c| c.values()[d]).sum::<f64>() / n;
        let var = samples.iter().map(|c| (c.values()[d] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "dim {d} mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "dim {d} var {var}");
    }
}

#[test]
fn sampling_is_seeded() {
    let dist = dist_of(&[0.0, 1.0, 2.0], 2.0);
    assert_eq!(sample_candidates(&dist, 4, 0.5, 1), sample_candidates(&dist, 4, 0.5, 1));
    assert_ne!(sample_candidates(&dist, 4, 0.5, 1), sample_candidates(&dist, 4, 0.5, 2));
}

#[test]
fn cem_update_small_example() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let cands: Vec<_> = [0.0, 2.0, 10.0].iter().map(|&v| scalar_knots(&[v, v])).collect();
    let next = cem_update(&dist, &cands, &[1.0, 2.0, 3.0], 2).unwrap();
    assert_eq!(next.mean.values(), &[1.0, 1.0]);
    assert_eq!(next.variances, vec![1.0, 1.0]);
}

#[test]
fn cem_update_all_elites_is_sample_moments() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let vals = [1.0, 4.0, -2.0, 5.0];
    let cands: Vec<_> = vals.iter().map(|&v| scalar_knots(&[v, -v])).collect();
    let next = cem_update(&dist, &cands, &[3.0, 1.0, 2.0, 0.5], 4).unwrap();
    let mean = vals.iter().sum::<f64>() / 4.0;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    assert_relative_eq!(next.mean.values()[0], mean);
    assert_relative_eq!(next.mean.values()[1], -mean);
    assert_relative_eq!(next.variances[0], var);
}

#[test]
fn cem_nan_excluded_and_all_nan_error() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let cands: Vec<_> = [0.0, 2.0, 10.0].iter().map(|&v| scalar_knots(&[v, v])).collect();
    let next = cem_update(&dist, &cands, &[f64::NAN, 2.0, 3.0], 1).unwrap();
    assert_eq!(next.mean.values(), &[2.0, 2.0]);
    assert!(matches!(cem_update(&dist, &cands, &[f64::NAN; 3], 1), Err(Error::NoFiniteCosts)));
}

#[test]
fn cem_ties_break_to_lower_index() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let cands: Vec<_> = [5.0, 7.0, 9.0].iter().map(|&v| scalar_knots(&[v, v])).collect();
    let next = cem_update(&dist, &cands, &[1.0, 0.0, 0.0], 1).unwrap();
    assert_eq!(next.mean.values(), &[7.0, 7.0]);
}

/// Brute force: sort (cost, index) pairs, average, two-pass variance.
fn brute_force_cem(cands: &[Vec<f64>], costs: &[f64], n_elite: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<(f64, usize)> = costs.iter().copied().zip(0..).collect();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let chosen: Vec<&Vec<f64>> = order[..n_elite].iter().map(|&(_, i)| &cands[i]).collect();
    let d = cands[0].len();
    let mean: Vec<f64> = (0..d).map(|j| chosen.iter().map(|c| c[j]).sum::<f64>() / n_elite as f64).collect();
    let var: Vec<f64> =
        (0..d).map(|j| chosen.iter().map(|c| (c[j] - mean[j]).powi(2)).sum::<f64>() / n_elite as f64).collect();
    (mean, var)
}

#[test]
fn cem_matches_brute_force_on_random_instances() {
    let mut rng = gpc_core::seed::rng(2024);
    for _ in 0..20 {
        let n = rng.gen_range(5..40);
        let n_elite = rng.gen_range(1..=n);
        let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let cands: Vec<ControlKnots> = raw
            .iter()
            .map(|v| ControlKnots::from_flat(4, 2, v.clone(), Interpolation::CubicSpline, 3.0).unwrap())
            .collect();
        let dist = SamplingDistribution::new(cands[0].clone(), 1.0).unwrap();
        let next = cem_update(&dist, &cands, &costs, n_elite).unwrap();
        let (mean, var) = brute_force_cem(&raw, &costs, n_elite);
        for j in 0..8 {
            assert_relative_eq!(next.mean.values()[j], mean[j], epsilon = 1e-10);
            assert_relative_eq!(next.variances[j], var[j], epsilon = 1e-10);
        }
    }
}

#[test]
fn mppi_equal_costs_uniform() {
    let w = mppi_weights(&[3.0; 4], 1.0).unwrap();
    for x in w {
        assert_relative_eq!(x, 0.25);
    }
}

#[test]
fn mppi_two_candidate_softmax() {
    let w = mppi_weights(&[0.0, 1.0], 1.0).unwrap();
    let e = (-1.0f64).exp();
    assert_relative_eq!(w[0], 1.0 / (1.0 + e), epsilon = 1e-12);
    assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
}

#[test]
fn mppi_zero_temperature_picks_argmin() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let cands: Vec<_> = [3.0, -1.0, 8.0].iter().map(|&v| scalar_knots(&[v, 2.0 * v])).collect();
    let next = mppi_update(&dist, &cands, &[5.0, 4.0, 4.5], 1e-6).unwrap();
    assert!((next.mean.values()[0] + 1.0).abs() < 1e-3);
    assert_eq!(next.variances, dist.variances);
}

#[test]
fn mppi_errors() {
    let dist = dist_of(&[0.0, 0.0], 1.0);
    let cands = vec![scalar_knots(&[1.0, 1.0]); 2];
    assert!(matches!(mppi_update(&dist, &cands, &[f64::INFINITY; 2], 1.0), Err(Error::NoFiniteCosts)));
    assert!(mppi_update(&dist, &cands, &[1.0, 2.0], 0.0).is_err());
}

#[test]
fn variance_reset_rules() {
    let mut dist = dist_of(&[0.0, 0.0], 4.0);
    dist.variances = vec![0.5, 0.25];
    let decreasing: Vec<f64> = (0..10).map(|i| 100.0 - 5.0 * i as f64).collect();
    assert_eq!(variance_reset(&dist, &decreasing, 10, 4.0), dist);
    let constant = vec![50.0; 10];
    assert_eq!(variance_reset(&dist, &constant, 10, 4.0).variances, vec![4.0, 4.0]);
    assert_eq!(variance_reset(&dist, &constant[..9], 10, 4.0), dist);
}

#[test]
fn point_mass_already_at_goal() {
    let task = Task::new(TaskConfig::point_mass()).unwrap();
    let g = task.config().goal_pose.pos;
    let x0 = State::at_rest(g, g, 0.0);
    let trace = spc_plan_episode(&task, &SpcConfig::default(), SpcAlgorithm::Cem, &x0).unwrap();
    assert!(trace.success);
    assert_eq!(trace.success_step, Some(0));
    assert!(trace.controls.is_empty());
    assert_eq!(trace.replans.len(), 1);
}

#[test]
fn point_mass_reaches_goal() {
    let task = Task::new(TaskConfig::point_mass()).unwrap();
    let x0 = task.sample_initial_state(5);
    let cfg = SpcConfig { initial_std: 60.0, ..SpcConfig::default() };
    let trace = spc_plan_episode(&task, &cfg, SpcAlgorithm::Cem, &x0).unwrap();
    assert!(trace.success, "final {:?}", trace.states.last());
    // fixed-variance MPPI is too noisy for the 1-unit tolerance; it must still approach
    let trace = spc_plan_episode(&task, &cfg, SpcAlgorithm::Mppi, &x0).unwrap();
    let d0 = task.goal_distance(&x0);
    let end = trace.states.last().unwrap();
    assert!(task.goal_distance(end) < 0.75 * d0, "{} -> {}", d0, task.goal_distance(end));
}

#[test]
fn identical_seeds_identical_traces() {
    let task = Task::new(TaskConfig::push_t()).unwrap();
    let x0 = task.sample_initial_state(1);
    let mut cfg = SpcConfig { seed: 77, ..SpcConfig::default() };
    let mut small = task.config().clone();
    small.max_steps = 200;
    let task = Task::new(small).unwrap();
    let a = spc_plan_episode(&task, &cfg, SpcAlgorithm::Cem, &x0).unwrap();
    let b = spc_plan_episode(&task, &cfg, SpcAlgorithm::Cem, &x0).unwrap();
    assert_eq!(a, b);
    cfg.seed = 78;
    let c = spc_plan_episode(&task, &cfg, SpcAlgorithm::Cem, &x0).unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn config_validation() {
    assert!(SpcConfig { n_elite: 0, ..SpcConfig::default() }.validate().is_err());
    assert!(SpcConfig { n_elite: 40, ..SpcConfig::default() }.validate().is_err());
    assert!(SpcConfig { replan_interval: 0, ..SpcConfig::default() }.validate().is_err());
    assert!(SpcConfig::default().validate().is_ok());
}

fn arb_batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..20).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::collection::vec(-50.0..50.0f64, 4), n),
            proptest::collection::vec(0.0..1000.0f64, n),
        )
    })
}

fn to_knots(raw: &[Vec<f64>]) -> Vec<ControlKnots> {
    raw.iter().map(|v| ControlKnots::from_flat(2, 2, v.clone(), Interpolation::Linear, 1.0).unwrap()).collect()
}

proptest! {
    #[test]
    fn cem_variances_are_elite_population_variance((raw, costs) in arb_batch(), frac in 0.0..1.0f64) {
        let n_elite = 1 + ((raw.len() - 1) as f64 * frac) as usize;
        let cands = to_knots(&raw);
        let dist = SamplingDistribution::new(cands[0].clone(), 1.0).unwrap();
        let next = cem_update(&dist, &cands, &costs, n_elite).unwrap();
        let elites = select_elites(&costs, n_elite).unwrap();
        let (_, var) = elite_statistics(&cands, &elites);
        prop_assert!(next.variances.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(next.variances, var);
    }

    #[test]
    fn cem_permutation_equivariant((raw, costs) in arb_batch(), rot in 0usize..20) {
        // distinct costs so the elite set does not depend on index order
        let costs: Vec<f64> = costs.iter().enumerate().map(|(i, c)| c + i as f64 * 1e-6).collect();
        let n = raw.len();
        let k = rot % n;
        let n_elite = (n / 2).max(1);
        let cands = to_knots(&raw);
        let dist = SamplingDistribution::new(cands[0].clone(), 1.0).unwrap();
        let a = cem_update(&dist, &cands, &costs, n_elite).unwrap();
        let mut pc = cands.clone();
        pc.rotate_left(k);
        let mut pcost = costs.clone();
        pcost.rotate_left(k);
        let b = cem_update(&dist, &pc, &pcost, n_elite).unwrap();
        for (x, y) in a.mean.values().iter().zip(b.mean.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.variances.iter().zip(&b.variances) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn mppi_weights_normalized_mean_in_hull((raw, costs) in arb_batch(), lambda in 0.01..100.0f64) {
        let w = mppi_weights(&costs, lambda).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cands = to_knots(&raw);
        let dist = SamplingDistribution::new(cands[0].clone(), 1.0).unwrap();
        let next = mppi_update(&dist, &cands, &costs, lambda).unwrap();
        for d in 0..4 {
            let lo = raw.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(next.mean.values()[d] >= lo - 1e-12 && next.mean.values()[d] <= hi + 1e-12);
        }
    }

    #[test]
    fn zero_alpha_is_plain_gaussian_sampling(seed in any::<u64>(), var in 0.1..10.0f64) {
        let dist = SamplingDistribution::new(
            ControlKnots::from_flat(4, 2, (0..8).map(f64::from).collect(), Interpolation::CubicSpline, 3.0).unwrap(),
            var,
        ).unwrap();
        let annealed = sample_candidates(&dist, 3, 0.0, seed);
        // plain diagonal Gaussian with the same stream
        let mut rng = gpc_core::seed::rng(seed);
        for c in annealed {
            for (j, v) in c.values().iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                prop_assert_eq!(*v, j as f64 + var.sqrt() * z);
            }
        }
    }
}
