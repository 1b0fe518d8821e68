use beamsim_core::config::GridSpec;
use beamsim_core::controller::{run_strategy, Strategy};
use beamsim_core::geometry::Pose;
use beamsim_core::landscape::{build_landscape, energy_at, EnergyLandscape};
use beamsim_core::planner::{astar, path_cost, plan, GridNode};
use beamsim_core::sim::{episode_csv, read_episode_csv};
use beamsim_core::WorldConfig;
use proptest::prelude::*;

fn coarse() -> GridSpec {
    GridSpec {
        x_step: 0.01,
        alpha_step: 6f64.to_radians(),
        beta_step: 6f64.to_radians(),
        ..GridSpec::default()
    }
}

#[test]
fn landscape_survives_save_and_load() {
    let cfg = WorldConfig::default();
    let land = build_landscape(0.2, 0.1, &coarse(), &cfg);
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("l");
    land.save(&stem).unwrap();
    let back = EnergyLandscape::load(&stem).unwrap();
    assert_eq!(back.dims(), land.dims());
    assert_eq!(back.k, land.k);
    assert!(back
        .values
        .iter()
        .zip(&land.values)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn stiff_beams_plan_a_roll_soft_beams_get_pushed() {
    let cfg = WorldConfig::default();
    let start = Pose::centred(-0.12, 0.0, 0.0, &cfg.body);
    let stiff = plan(
        &build_landscape(0.2, 0.2, &coarse(), &cfg),
        &start,
        &cfg,
        0.0,
    )
    .unwrap();
    assert!(stiff.max_abs_alpha() > stiff.max_abs_beta());
    let soft = plan(
        &build_landscape(0.01, 0.01, &coarse(), &cfg),
        &start,
        &cfg,
        0.0,
    )
    .unwrap();
    // Soft beams are cheaper to bend over than to slip past.
    assert!(soft.max_abs_alpha() < 1e-9);
    assert!(soft.cost < stiff.cost);
    for p in [&stiff, &soft] {
        assert!(p.times.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn episode_log_parses_back() {
    let cfg = WorldConfig::default().with_stiffness(0.01, 0.01);
    let log = run_strategy(&Strategy::parse("ff", &cfg).unwrap(), &cfg, 0).unwrap();
    let (force, poses) = read_episode_csv(&episode_csv(&log)).unwrap();
    assert_eq!(force.len(), log.rows.len());
    assert_eq!(poses.len(), log.rows.len());
    let peak = force.iter().map(|s| s.force.norm()).fold(0.0, f64::max);
    assert!((peak - log.max_contact_force()).abs() < 1e-4 * peak.max(1.0));
}

fn small(values: Vec<u8>) -> EnergyLandscape {
    let spec = GridSpec {
        x_min: 0.0,
        x_max: 0.008,
        x_step: 0.002,
        alpha_min: 0.0,
        alpha_max: 0.4,
        alpha_step: 0.1,
        beta_min: 0.0,
        beta_max: 0.4,
        beta_step: 0.1,
    };
    let values = values
        .into_iter()
        .map(|v| {
            if v >= 240 {
                f64::INFINITY
            } else {
                v as f64 / 32.0
            }
        })
        .collect();
    EnergyLandscape {
        spec,
        k: [0.0; 2],
        values,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn astar_path_is_legal_and_priced(values in prop::collection::vec(any::<u8>(), 125), s in 0usize..125, g in 0usize..125) {
        let land = small(values);
        let node = |i: usize| GridNode::new(i / 25, (i / 5) % 5, i % 5);
        if let Ok(p) = astar(&land, node(s), node(g)) {
            prop_assert_eq!(p.path.first(), Some(&node(s)));
            prop_assert_eq!(p.path.last(), Some(&node(g)));
            prop_assert_eq!(path_cost(&land, &p.path), Some(p.cost));
            // No path can beat the net climb.
            prop_assert!(p.cost >= land.values[g] - land.values[s]);
        }
    }

    #[test]
    fn energy_is_mirror_symmetric_and_bounded(x in -0.12f64..0.12, a in -1.5f64..1.5, b in -1.5f64..1.5, k in 0.0f64..2.0) {
        let cfg = WorldConfig::default();
        let e = energy_at(x, a, b, k, k, &cfg);
        let m = energy_at(x, -a, b, k, k, &cfg);
        prop_assert!(e == m || (e - m).abs() < 1e-6);
        let floor = cfg.body.mass * cfg.gravity * (cfg.body.height - cfg.body.h_c);
        prop_assert!(e >= floor);
    }
}
