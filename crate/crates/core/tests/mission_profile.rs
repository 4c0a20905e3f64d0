use nalgebra::Vector3;
use proptest::prelude::*;
use quadrcac::mission::{hilbert_waypoints, MissionConfig, MissionPlan};
use quadrcac::ScenarioConfig;

#[test]
fn default_mission_fits_the_default_duration() {
    let cfg = ScenarioConfig::default();
    let plan = cfg.mission.build().unwrap();
    assert_eq!(plan.waypoints().len(), 16);
    assert!(plan.total_duration() <= cfg.duration_s);
    let last = *plan.waypoints().last().unwrap();
    let end = plan.setpoints_at(cfg.duration_s);
    assert_eq!(end.position_sp, last);
    assert_eq!(end.velocity_sp, Vector3::zeros());
}

#[test]
fn hilbert_legs_are_axis_aligned_and_equal() {
    let w = hilbert_waypoints(3, 7.0, 2.0).unwrap();
    let step = 7.0 / 7.0;
    for pair in w.windows(2) {
        let d = pair[1] - pair[0];
        assert!((d.norm() - step).abs() < 1e-12);
        assert!(d.iter().filter(|v| v.abs() > 1e-12).count() == 1);
        assert_eq!(d.z, 0.0);
    }
}

#[test]
fn explicit_waypoints_replace_the_curve() {
    let cfg = MissionConfig {
        waypoints: Some(vec![[0.0, 0.0, -1.0], [3.0, 0.0, -1.0]]),
        ..MissionConfig::default()
    };
    let plan = cfg.build().unwrap();
    assert_eq!(plan.waypoints().len(), 2);
    assert!((plan.path_length() - 3.0).abs() < 1e-12);
}

fn waypoint() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-5.0f64..5.0)
}

proptest! {
    #[test]
    fn setpoints_are_continuous_and_speed_limited(
        pts in prop::collection::vec(waypoint(), 2..8),
        speed in 0.2f64..3.0,
        hold in 0.0f64..3.0,
    ) {
        let plan = MissionPlan::new(pts.iter().map(|p| Vector3::from(*p)).collect(), speed, hold).unwrap();
        let dt = 1e-3;
        let n = (plan.total_duration() / dt) as usize;
        let mut prev = plan.setpoints_at(0.0);
        for k in 1..=n {
            let sp = plan.setpoints_at(k as f64 * dt);
            prop_assert!(sp.velocity_sp.norm() <= speed * (1.0 + 1e-9));
            prop_assert!((sp.position_sp - prev.position_sp).norm() <= speed * dt * (1.0 + 1e-6) + 1e-12);
            prev = sp;
        }
        prop_assert_eq!(plan.setpoints_at(plan.total_duration()).position_sp, Vector3::from(*pts.last().unwrap()));
    }
}
