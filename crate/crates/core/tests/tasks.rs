use gpc_core::tasks::*;
use approx::assert_relative_eq;
use gpc_core::geometry::*;
use gpc_core::Error;
use std::f64::consts::PI;
use proptest::prelude::*;

fn square_task(side: f64) -> Task {
    let h = side / 2.0;
    Task::new(TaskConfig {
        block_polygon: vec![rectangle(-h, -h, h, h)],
        goal_pose: Pose::new(256.0, 256.0, 0.0),
        ..TaskConfig::push_t()
    })
    .unwrap()
}

fn push_t() -> Task {
    Task::new(TaskConfig::push_t()).unwrap()
}

#[test]
fn point_mass_integrates_velocity() {
    let task = Task::new(TaskConfig::point_mass()).unwrap();
    let s = State::at_rest([0.0, 0.0], [0.0, 0.0], 0.0);
    let next = task.step(&s, [1.0, 0.0]).unwrap();
    assert_relative_eq!(next.robot_pos[0], 0.01);
    assert_eq!(next.robot_pos[1], 0.0);
    assert_eq!(next.step_index, 1);
}

#[test]
fn step_rejects_non_finite() {
    let task = push_t();
    let s = State::at_rest([20.0, 20.0], [256.0, 256.0], 0.0);
    assert!(matches!(task.step(&s, [f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
    let mut bad = s;
    bad.block_vel[0] = f64::INFINITY;
    assert!(task.step(&bad, [0.0, 0.0]).is_err());
}

#[test]
fn far_robot_leaves_block_and_damps_velocity() {
    let task = push_t();
    let s = State::at_rest([20.0, 20.0], [300.0, 300.0], 0.3);
    let next = task.step(&s, [30.0, 20.0]).unwrap();
    assert_eq!(next.block_pos, s.block_pos);
    assert_eq!(next.block_yaw, s.block_yaw);

    let mut moving = s;
    moving.block_vel = [10.0, -5.0];
    moving.block_yaw_rate = 0.5;
    let next = task.step(&moving, [20.0, 20.0]).unwrap();
    let before = Vec2::from(moving.block_vel).norm();
    let after = Vec2::from(next.block_vel).norm();
    assert!(after < before);
    assert!(next.block_yaw_rate.abs() < 0.5);
}

/// Brute force: nearest point of the densely sampled block outline.
fn brute_force_push_direction(task: &Task, block: &Pose, robot: Vec2) -> Option<Vec2> {
    let r = task.config().robot_radius;
    let mut best: Option<(f64, Vec2)> = None;
    let local = block.inverse_apply(robot);
    for part in task.parts() {
        let v = part.vertices();
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            for k in 0..=2000 {
                let q = a + (b - a) * (k as f64 / 2000.0);
                let d = (local - q).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
    }
    let (d, q) = best?;
    // robot center outside the footprint here, so overlap iff d < r
    (d < r).then(|| block.apply(q) - robot)
}

#[test]
fn push_on_left_bar_edge_moves_block_right() {
    let task = push_t();
    let cfg = task.config();
    // left end of the T bar, block unrotated
    let bar = &cfg.block_polygon[0];
    let left_x = bar.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let bar_mid_y = bar.iter().map(|v| v[1]).sum::<f64>() / 4.0;
    let block = Pose::new(256.0, 256.0, 0.0);
    let robot = Vec2::new(256.0 + left_x - cfg.robot_radius + 2.0, 256.0 + bar_mid_y);
    let oracle = brute_force_push_direction(&task, &block, robot).expect("overlap");
    assert!(oracle.x > 0.0 && oracle.x.abs() > 10.0 * oracle.y.abs());

    let s = State::at_rest(robot.into(), block.pos, 0.0);
    let next = task.step(&s, [robot.x + 3.0, robot.y]).unwrap();
    assert!(next.block_vel[0] > 0.0, "block_vel {:?}", next.block_vel);
    assert!(next.block_vel[0] * oracle.x > 0.0);
}

#[test]
fn sustained_push_translates_block() {
    let task = push_t();
    let cfg = task.config();
    let bar = &cfg.block_polygon[0];
    let left_x = bar.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let bar_mid_y = bar.iter().map(|v| v[1]).sum::<f64>() / 4.0;
    let mut s = State::at_rest([256.0 + left_x - 20.0, 256.0 + bar_mid_y], [256.0, 256.0], 0.0);
    for i in 0..100 {
        s = task.step(&s, [s.robot_pos[0] + 1.0 + i as f64 * 0.0, s.robot_pos[1]]).unwrap();
    }
    assert!(s.block_pos[0] > 256.0 + 50.0, "{s:?}");
    assert!(s.is_finite());
    // bar pushed off-center: the T turns
    assert!(s.block_yaw.abs() > 1e-3);
}

#[test]
fn stage_cost_vanishes_at_goal() {
    let task = push_t();
    let g = task.config().goal_pose;
    // robot and block centers coincide, so the proximity distance is zero
    let s = State::at_rest(g.pos, g.pos, g.yaw);
    let d = task.goal_distance(&s);
    assert_eq!(task.stage_cost(&s, [0.0, 0.0], Some(d)), 0.0);
}

#[test]
fn stage_cost_proximity_only() {
    let mut cfg = TaskConfig::push_t();
    cfg.cost_weights = [("proximity".to_string(), 1.0)].into_iter().collect();
    let task = Task::new(cfg).unwrap();
    let s = State::at_rest([0.0, 0.0], [3.0, 4.0], 0.0);
    assert_relative_eq!(task.stage_cost(&s, [0.0, 0.0], None), 5.0);
}

#[test]
fn stage_cost_full_weights_hand_sum() {
    let task = push_t();
    let g = task.config().goal_pose;
    let s = State {
        robot_pos: [120.0, 200.0],
        block_pos: [180.0, 240.0],
        block_yaw: -2.5,
        robot_vel: [30.0, -40.0],
        block_vel: [1.0, 0.5],
        block_yaw_rate: 0.1,
        step_index: 430,
    };
    let prev = 60.0;
    let prox = ((180.0f64 - 120.0).powi(2) + 40.0f64.powi(2)).sqrt();
    let vel = 50.0;
    let d = ((180.0 - g.pos[0]).powi(2) + (240.0 - g.pos[1]).powi(2)).sqrt();
    // -2.5 - pi/4 = -3.285 wraps to 2.998
    let yaw_err = 2.0 * PI - 2.5 - PI / 4.0;
    let progress = (d - prev).max(0.0);
    assert!(progress > 0.0);
    let expected = 0.2 * prox + 0.002 * vel + 1.0 * d + 60.0 * yaw_err + 2.0 * progress;
    assert_relative_eq!(task.stage_cost(&s, [0.0, 0.0], Some(prev)), expected, max_relative = 1e-12);
}

#[test]
fn unknown_or_negative_weight_rejected() {
    let mut cfg = TaskConfig::push_t();
    cfg.cost_weights.insert("bogus".into(), 1.0);
    assert!(Task::new(cfg).is_err());
    let mut cfg = TaskConfig::push_t();
    cfg.cost_weights.insert("proximity".into(), -1.0);
    assert!(Task::new(cfg).is_err());
}

#[test]
fn invalid_config_rejected() {
    let mut cfg = TaskConfig::push_t();
    cfg.dt = 0.0;
    assert!(Task::new(cfg).is_err());
    let mut cfg = TaskConfig::push_t();
    cfg.block_polygon.push(vec![[0.0, 0.0], [1.0, 0.0]]);
    assert!(Task::new(cfg).is_err());
    let mut cfg = TaskConfig::push_t();
    cfg.max_steps = 0;
    assert!(Task::new(cfg).is_err());
}

#[test]
fn empty_rollout_is_terminal_cost() {
    let task = push_t();
    let s = task.sample_initial_state(3);
    let r = task.rollout(&s, &[], None).unwrap();
    assert_eq!(r.total_cost, task.terminal_cost(&s, None));
    assert_eq!(r.states.len(), 1);
}

#[test]
fn point_mass_rollout_matches_closed_form() {
    let mut cfg = TaskConfig::point_mass();
    cfg.goal_pose = Pose::new(1.0, 0.0, 0.0);
    cfg.cost_weights = [("goal_position".to_string(), 2.0)].into_iter().collect();
    let task = Task::new(cfg).unwrap();
    let (c, h) = (0.7, 40usize);
    let a = c * task.dt();
    let controls = vec![[c, 0.0]; h];
    let x0 = State::at_rest([0.0, 0.0], [1.0, 0.0], 0.0);
    let got = task.rollout_cost(&x0, &controls, None).unwrap();
    // sum_{t=0}^{H} (t a - 1)^2
    let hf = h as f64;
    let s1 = hf * (hf + 1.0) / 2.0;
    let s2 = hf * (hf + 1.0) * (2.0 * hf + 1.0) / 6.0;
    let expected = 2.0 * (a * a * s2 - 2.0 * a * s1 + (hf + 1.0));
    assert_relative_eq!(got, expected, max_relative = 1e-12);
}

#[test]
fn rollout_is_bit_identical() {
    let task = push_t();
    let x0 = task.sample_initial_state(11);
    let controls: Vec<[f64; 2]> = (0..200)
        .map(|i| [x0.block_pos[0] + (i as f64 * 0.1).sin() * 60.0, x0.block_pos[1] - 40.0])
        .collect();
    let a = task.rollout(&x0, &controls, Some(10.0)).unwrap();
    let b = task.rollout(&x0, &controls, Some(10.0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.states.len(), controls.len() + 1);
    assert_eq!(a.total_cost.to_bits(), task.rollout_cost(&x0, &controls, Some(10.0)).unwrap().to_bits());
}

#[test]
fn coverage_identity_and_disjoint() {
    let task = push_t();
    let g = task.config().goal_pose;
    assert_eq!(task.coverage(&g), 1.0);
    let far = Pose::new(g.pos[0] + 3.0 * task.bounding_radius(), g.pos[1], g.yaw);
    assert_eq!(task.coverage(&far), 0.0);
    // just outside the goal's bounding circle, inside the quick-reject radius
    let near = Pose::new(g.pos[0] + 1.9 * task.bounding_radius(), g.pos[1], g.yaw);
    assert_eq!(task.coverage(&near), 0.0);
}

/// Independent raster of the true overlap on a 4x finer grid.
fn fine_overlap(task: &Task, a: &Pose, b: &Pose, lo: Vec2, hi: Vec2) -> f64 {
    let n = 4 * COVERAGE_GRID;
    let (w, h) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
    let (mut both, mut in_b) = (0usize, 0usize);
    for j in 0..n {
        for i in 0..n {
            let c = Vec2::new(lo.x + (i as f64 + 0.5) * w, lo.y + (j as f64 + 0.5) * h);
            let ib = task.footprint_contains(b, c);
            in_b += ib as usize;
            both += (ib && task.footprint_contains(a, c)) as usize;
        }
    }
    both as f64 / in_b as f64
}

#[test]
fn coverage_half_shifted_square() {
    let task = square_task(40.0);
    let g = task.config().goal_pose;
    let shifted = Pose::new(g.pos[0] + 20.0, g.pos[1], 0.0);
    let cov = task.coverage(&shifted);
    let oracle = fine_overlap(&task, &shifted, &g, Vec2::new(236.0, 236.0), Vec2::new(276.0, 276.0));
    assert!((cov - 0.5).abs() < 0.02, "{cov}");
    assert!((oracle - 0.5).abs() < 0.01, "{oracle}");
}

#[test]
fn coverage_of_rotated_t_against_fine_raster() {
    let task = push_t();
    let g = task.config().goal_pose;
    let p = Pose::new(g.pos[0] + 7.0, g.pos[1] - 4.0, g.yaw + 0.2);
    let r = task.bounding_radius();
    let lo = Vec2::new(g.pos[0] - r, g.pos[1] - r);
    let hi = Vec2::new(g.pos[0] + r, g.pos[1] + r);
    let oracle = fine_overlap(&task, &p, &g, lo, hi);
    assert!((task.coverage(&p) - oracle).abs() < 0.02);
}

#[test]
fn success_predicate() {
    let task = square_task(40.0);
    let g = task.config().goal_pose;
    // 2 units of 40 along x: about 0.95 coverage
    let mut s = State::at_rest([100.0, 100.0], [g.pos[0] + 2.0, g.pos[1]], 0.0);
    s.step_index = 100;
    let cov = task.coverage(&s.block_pose());
    assert!(cov > 0.93 && cov < 0.97, "{cov}");
    assert!(task.is_success(&s));
    s.step_index = 2501;
    assert!(!task.is_success(&s));
    let mut low = State::at_rest([100.0, 100.0], [g.pos[0] + 4.5, g.pos[1]], 0.0);
    low.step_index = 100;
    let cov = task.coverage(&low.block_pose());
    assert!(cov < 0.9 && cov > 0.86, "{cov}");
    assert!(!task.is_success(&low));
}

#[test]
fn initial_states_are_valid_and_seeded() {
    let task = push_t();
    for seed in 0..50 {
        let s = task.sample_initial_state(seed);
        assert_eq!(s, task.sample_initial_state(seed));
        assert!(s.block_pos.iter().all(|&v| (102.4..=409.6).contains(&v)));
        let local = s.block_pose().inverse_apply(Vec2::from(s.robot_pos));
        assert!(task.parts().iter().all(|p| p.circle_contact(local, 15.0).is_none()));
    }
    assert_ne!(task.sample_initial_state(0), task.sample_initial_state(1));
}

#[test]
fn push_k_is_valid() {
    let task = Task::new(TaskConfig::push_k()).unwrap();
    assert_eq!(task.parts().len(), 3);
    assert_eq!(task.coverage(&task.config().goal_pose), 1.0);
}

fn mirror(s: &State, c: f64) -> State {
    State {
        robot_pos: [s.robot_pos[0], 2.0 * c - s.robot_pos[1]],
        block_pos: [s.block_pos[0], 2.0 * c - s.block_pos[1]],
        block_yaw: -s.block_yaw,
        robot_vel: [s.robot_vel[0], -s.robot_vel[1]],
        block_vel: [s.block_vel[0], -s.block_vel[1]],
        block_yaw_rate: -s.block_yaw_rate,
        step_index: s.step_index,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stage_cost_nonnegative(
        rx in 0.0..512.0f64, ry in 0.0..512.0f64, bx in 0.0..512.0f64, by in 0.0..512.0f64,
        yaw in -3.2..3.2f64, vx in -300.0..300.0f64, pref in proptest::option::of(0.0..400.0f64),
    ) {
        let task = push_t();
        let mut s = State::at_rest([rx, ry], [bx, by], yaw);
        s.robot_vel = [vx, -vx];
        prop_assert!(task.stage_cost(&s, [0.0, 0.0], pref) >= 0.0);
    }

    #[test]
    fn coverage_rigid_invariance(
        dx in -30.0..30.0f64, dy in -30.0..30.0f64, dyaw in -0.5..0.5f64,
        tx in -100.0..100.0f64, ty in -100.0..100.0f64, rot in -3.1..3.1f64,
    ) {
        let base = TaskConfig::push_t();
        let g = base.goal_pose;
        let pose = Pose::new(g.pos[0] + dx, g.pos[1] + dy, g.yaw + dyaw);
        let a = Task::new(base.clone()).unwrap().coverage(&pose);
        // same rigid motion applied to both goal and block
        let centre = Vec2::from(g.pos);
        let move_pose = |p: &Pose| {
            let q = (Vec2::from(p.pos) - centre).rotate(rot) + centre + Vec2::new(tx, ty);
            Pose { pos: q.into(), yaw: p.yaw + rot }
        };
        let moved = Task::new(TaskConfig { goal_pose: move_pose(&g), ..base }).unwrap();
        let b = moved.coverage(&move_pose(&pose));
        prop_assert!((a - b).abs() <= 0.02, "{} vs {}", a, b);
    }

    #[test]
    fn free_block_speed_non_increasing(vx in -50.0..50.0f64, vy in -50.0..50.0f64, w in -2.0..2.0f64) {
        let task = push_t();
        let mut s = State::at_rest([20.0, 20.0], [300.0, 300.0], 0.0);
        s.block_vel = [vx, vy];
        s.block_yaw_rate = w;
        let mut speed = Vec2::from(s.block_vel).norm();
        for _ in 0..50 {
            s = task.step(&s, [20.0, 20.0]).unwrap();
            let now = Vec2::from(s.block_vel).norm();
            prop_assert!(now <= speed);
            speed = now;
        }
    }

    #[test]
    fn contact_mirror_symmetry(ox in -80.0..-40.0f64, oy in -20.0..20.0f64, ux in 0.0..40.0f64, uy in -20.0..20.0f64) {
        let h = 30.0;
        let task = Task::new(TaskConfig {
            block_polygon: vec![rectangle(-h, -h / 2.0, h, h / 2.0)],
            ..TaskConfig::push_t()
        }).unwrap();
        let c = 256.0;
        let mut s = State::at_rest([256.0 + ox, 256.0 + oy], [256.0, 256.0], 0.1);
        let mut m = mirror(&s, c);
        // short horizon: rounding differences grow through corner contacts
        for _ in 0..15 {
            let u = [s.robot_pos[0] + ux, s.robot_pos[1] + uy];
            s = task.step(&s, u).unwrap();
            m = task.step(&m, [u[0], 2.0 * c - u[1]]).unwrap();
        }
        let back = mirror(&m, c);
        prop_assert!((back.block_pos[0] - s.block_pos[0]).abs() < 1e-7, "{:?} vs {:?}", back, s);
        prop_assert!((back.block_pos[1] - s.block_pos[1]).abs() < 1e-7);
        prop_assert!((back.block_yaw - s.block_yaw).abs() < 1e-9);
        prop_assert!((back.block_vel[1] - s.block_vel[1]).abs() < 1e-7 * (1.0 + s.block_vel[1].abs()),
            "{} vs {}", back.block_vel[1], s.block_vel[1]);
    }
}
