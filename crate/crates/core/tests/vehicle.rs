use llmsearch::env::vehicle::{
    drive_episode, episode_set, evaluate_driver, sweep_markdown, sweep_omega, vehicle_step,
    Physics, ShipState, SweepError, Vec2, VehicleTask, ACTIONS,
};
use llmsearch::stub::StubRunner;
use llmsearch::ProgramRunner;
use proptest::prelude::*;

fn runner(body: &str) -> StubRunner {
    let mut r = StubRunner::new();
    r.load("d", &format!("def policy\n{body}"), "policy")
        .unwrap();
    r
}

#[test]
fn constant_thrust_follows_the_geometric_series() {
    let physics = Physics::with_omega(30.0);
    let mut s = ShipState::at_rest(Vec2::ZERO, 0.0);
    let mut x = 0.0;
    for k in 1..=60 {
        s = vehicle_step(&s, "THRUST", &physics).unwrap();
        // v_k = 19 (1 - 0.95^k), x_k = sum of v_1..v_k
        let v = 19.0 * (1.0 - 0.95f64.powi(k));
        x += v;
        assert!((s.velocity.x - v).abs() < 1e-9, "step {k}");
        assert!((s.position.x - x).abs() < 1e-7, "step {k}");
        assert!(s.velocity.y.abs() < 1e-12);
    }
    assert!((physics.speed_bound() - 19.0).abs() < 1e-12);
}

#[test]
fn rotation_wraps_and_does_not_move() {
    let physics = Physics::with_omega(90.0);
    let mut s = ShipState::at_rest(Vec2::new(3.0, 4.0), 0.0);
    s = vehicle_step(&s, "ROTATE_LEFT", &physics).unwrap();
    assert_eq!(s.heading, 270.0);
    for _ in 0..4 {
        s = vehicle_step(&s, "ROTATE_RIGHT", &physics).unwrap();
    }
    assert_eq!(s.heading, 270.0);
    assert_eq!(s.position, Vec2::new(3.0, 4.0));
    assert!(vehicle_step(&s, "FIRE", &physics).is_err());
}

#[test]
fn starting_on_the_target_is_a_stop() {
    let target = Vec2::new(5.0, -5.0);
    let task = VehicleTask::new(
        Physics::with_omega(15.0),
        ShipState::at_rest(target, 45.0),
        target,
    );
    let mut r = runner("act const NO_OP");
    let (ep, fault) = drive_episode(&task, &mut r);
    assert!(fault.is_none());
    assert_eq!(ep.min_distance, 0.0);
    assert!(ep.stopped);
    assert_eq!(ep.distances.len(), 101);
}

#[test]
fn fly_by_is_close_but_not_a_stop() {
    let mut start = ShipState::at_rest(Vec2::ZERO, 0.0);
    start.velocity = Vec2::new(10.0, 0.0);
    let target = Vec2::new(50.0, 1.0);
    let task = VehicleTask::new(Physics::with_omega(15.0), start, target);
    let mut r = runner("act const NO_OP");
    let (ep, _) = drive_episode(&task, &mut r);
    // Coasting from speed 10 with 5% drag: x_k = 190 (1 - 0.95^k).
    let expected = (1..=101)
        .map(|k| {
            let x = 190.0 * (1.0 - 0.95f64.powi(k));
            ((x - 50.0).powi(2) + 1.0).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    assert!((ep.min_distance - expected).abs() < 1e-9);
    assert!(ep.min_distance < 2.0, "{}", ep.min_distance);
    assert!(!ep.stopped);
    assert!(*ep.distances.last().unwrap() > 100.0);
}

#[test]
fn idle_ship_keeps_its_distance() {
    let task = VehicleTask::new(
        Physics::with_omega(30.0),
        ShipState::at_rest(Vec2::ZERO, 90.0),
        Vec2::new(60.0, 80.0),
    );
    let mut r = runner("act const NO_OP");
    let report = evaluate_driver(&mut r, 30.0, &[task]).unwrap();
    assert_eq!(report.min_distances, vec![100.0]);
    assert!(!report.success);
    assert!((report.fitness() - 1.0 / 101.0).abs() < 1e-15);
}

#[test]
fn invalid_first_action_is_a_load_time_failure() {
    let mut r = runner("act const JUMP");
    assert!(evaluate_driver(&mut r, 30.0, &episode_set(30.0)).is_err());
}

#[test]
fn episode_set_is_fixed_per_omega() {
    let a = episode_set(15.0);
    let b = episode_set(15.0);
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    for t in &a {
        let d = t.start.position.dist(t.target);
        assert!((80.0..=200.0 + 1e-9).contains(&d), "{d}");
        assert_eq!(t.start.velocity, Vec2::ZERO);
    }
    // Only the rotation speed differs between omegas.
    let c = episode_set(45.0);
    assert!(a
        .iter()
        .zip(&c)
        .all(|(x, y)| x.start == y.start && x.target == y.target));
}

#[test]
fn greedy_steering_beats_idling() {
    let tasks = episode_set(30.0);
    let idle = evaluate_driver(&mut runner("act const NO_OP"), 30.0, &tasks).unwrap();
    let steer = evaluate_driver(&mut runner("act steer"), 30.0, &tasks).unwrap();
    assert!(
        steer.d_avg < idle.d_avg,
        "{} vs {}",
        steer.d_avg,
        idle.d_avg
    );
}

#[test]
fn sweep_rows_and_table() {
    let row = sweep_omega("m", &[15.0, 30.0, 45.0], |w| {
        Ok::<_, String>(if w == 30.0 { None } else { Some(w / 3.0) })
    })
    .unwrap();
    assert_eq!(row.distances, vec![Some(5.0), None, Some(15.0)]);
    assert_eq!(row.d_avg, Some(10.0));
    let table = sweep_markdown(&[row]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].matches('|').count(), 6);
    assert!(lines[2].contains("| 5.00 | - | 15.00 | 10.00 |"), "{table}");

    let err = sweep_omega("m", &[], |_| Ok::<_, String>(None)).unwrap_err();
    assert!(matches!(err, SweepError::Empty(_)));
    let err = sweep_omega("m", &[1.0], |_| Err::<Option<f64>, _>("boom")).unwrap_err();
    assert!(matches!(err, SweepError::Search("boom")));
}

proptest! {
    #[test]
    fn speed_never_exceeds_the_bound(
        omega in 1.0f64..90.0,
        heading in 0.0f64..360.0,
        actions in prop::collection::vec(0usize..4, 1..300),
    ) {
        let physics = Physics::with_omega(omega);
        let mut s = ShipState::at_rest(Vec2::ZERO, heading);
        for a in actions {
            s = vehicle_step(&s, ACTIONS[a], &physics).unwrap();
            prop_assert!(s.speed() <= 19.0 + 1e-6, "{}", s.speed());
            prop_assert!((0.0..360.0).contains(&s.heading));
        }
    }
}
