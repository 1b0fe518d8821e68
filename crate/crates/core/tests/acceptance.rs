//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_FAILURES` are still checked at full tolerance and
//! reported as FAIL; they only stop counting towards the exit status.
//! Set `ACCEPTANCE_STRICT=1` to make every FAIL fatal.

use std::collections::BTreeMap;
use std::time::Instant;

use beamsim_core::config::GridSpec;
use beamsim_core::controller::{run_strategy, Strategy, TraversalMode};
use beamsim_core::estimator::{estimate_stiffness, Objective};
use beamsim_core::experiments::{run_sweep, Reproduction, SweepResult};
use beamsim_core::geometry::Pose;
use beamsim_core::landscape::{
    build_landscape, critical_stiffness, energy_at, mode_barriers, EnergyLandscape, PreferredMode,
};
use beamsim_core::planner::{astar, path_cost, GridNode};
use beamsim_core::quasistatic::{predict_force_series, PoseSample};
use beamsim_core::sim::{
    beam_energy, episode_csv, step, BeamState, ControlInput, ForceSample, RobotState,
};
use beamsim_core::WorldConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: &[usize] = &[4, 7];
const TRIALS: usize = 5;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn critical_stiffness_value() -> Outcome {
    let cfg = WorldConfig::default();
    let k0 = critical_stiffness(&cfg).map_err(|e| e.to_string())?;
    let rel = (k0 - 0.146).abs() / 0.146;
    check(
        rel <= 0.05,
        format!("k0 = {k0:.5} N m/rad, {:.2}% from 0.146", rel * 100.0),
    )
}

fn mode_barrier_crossing() -> Outcome {
    let cfg = WorldConfig::default();
    let k0 = critical_stiffness(&cfg).map_err(|e| e.to_string())?;
    let stiff = mode_barriers(0.2, &cfg);
    let soft = mode_barriers(0.01, &cfg);
    let at = mode_barriers(k0, &cfg);
    let gap = (at.pitch - at.roll).abs() / at.roll;
    check(
        stiff.roll < stiff.pitch
            && stiff.preferred == PreferredMode::Roll
            && soft.pitch < soft.roll
            && soft.preferred == PreferredMode::Pitch
            && gap <= 1e-12,
        format!(
            "k=0.2 roll {:.4} < pitch {:.4} J; k=0.01 pitch {:.4} < roll {:.4} J; relative gap at k0 {gap:.1e}",
            stiff.roll, stiff.pitch, soft.pitch, soft.roll
        ),
    )
}

/// Runs every strategy at both stiffnesses once. Oscillation is off by
/// default, so the episodes do not depend on the seed.
type Runs = BTreeMap<(&'static str, u32), (TraversalMode, f64)>;

fn strategy_runs() -> Result<Runs, String> {
    let mut runs = BTreeMap::new();
    for name in ["ff", "ff-limited", "avoid", "force-feedback"] {
        for k in [0.01, 0.2] {
            let cfg = WorldConfig::default().with_stiffness(k, k);
            let strategy = Strategy::parse(name, &cfg).map_err(|e| e.to_string())?;
            let log = run_strategy(&strategy, &cfg, 0).map_err(|e| e.to_string())?;
            runs.insert(
                (name, (k * 100.0).round() as u32),
                (log.outcome, log.energy_mj),
            );
        }
    }
    Ok(runs)
}

fn outcome_matrix(runs: &Runs) -> Outcome {
    use TraversalMode::*;
    let get = |name: &'static str, k: u32| runs[&(name, k)].0;
    type Expect = (&'static str, u32, fn(TraversalMode) -> bool, &'static str);
    let expected: [Expect; 8] = [
        ("ff", 1, |m| m.traversed(), "traversed"),
        ("ff", 20, |m| m.traversed(), "traversed"),
        ("ff-limited", 1, |m| m.traversed(), "traversed"),
        ("ff-limited", 20, |m| m == Stuck, "stuck"),
        ("avoid", 1, |m| m == TraversedRoll, "roll"),
        ("avoid", 20, |m| m == TraversedRoll, "roll"),
        ("force-feedback", 1, |m| m == TraversedPitch, "pitch"),
        ("force-feedback", 20, |m| m == TraversedRoll, "roll"),
    ];
    let mut ok = true;
    let mut cells = Vec::new();
    for (name, k, pred, want) in expected {
        let got = get(name, k);
        ok &= pred(got);
        cells.push(format!(
            "{name}@{:.2}={} (want {want})",
            k as f64 / 100.0,
            got.as_str()
        ));
    }
    check(ok, cells.join(", "))
}

fn within_half(value: f64, reference: f64) -> bool {
    (value - reference).abs() <= 0.5 * reference
}

fn energy_ordering(runs: &Runs) -> Outcome {
    let e = |name: &'static str, k: u32| runs[&(name, k)].1;
    let (ff, av, fb) = (e("ff", 20), e("avoid", 20), e("force-feedback", 20));
    let (ff_soft, av_soft, fb_soft) = (e("ff", 1), e("avoid", 1), e("force-feedback", 1));
    let mut failed = Vec::new();
    let mut require = |ok: bool, what: &str| {
        if !ok {
            failed.push(what.to_string());
        }
    };
    require(ff > av, "ff > avoid at k=0.2");
    require(av > fb, "avoid > force-feedback at k=0.2");
    require(
        (fb_soft - ff_soft).abs() <= 0.15 * ff_soft,
        "force-feedback within 15% of ff at k=0.01",
    );
    require(av_soft > ff_soft, "avoid > ff at k=0.01");
    require(within_half(ff, 185.2), "ff@0.2 within 50% of 185.2");
    require(within_half(av, 35.8), "avoid@0.2 within 50% of 35.8");
    require(
        within_half(fb, 17.4),
        "force-feedback@0.2 within 50% of 17.4",
    );
    require(within_half(ff_soft, 14.8), "ff@0.01 within 50% of 14.8");
    require(
        within_half(fb_soft, 15.0),
        "force-feedback@0.01 within 50% of 15.0",
    );
    let detail = format!(
        "k=0.2: ff {ff:.1}, avoid {av:.1}, force-feedback {fb:.1} mJ; k=0.01: ff {ff_soft:.1}, avoid {av_soft:.1}, force-feedback {fb_soft:.1} mJ"
    );
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; violated: {}", failed.join("; ")))
    }
}

fn estimator_self_consistency() -> Outcome {
    let cfg = WorldConfig::default();
    let truth = [0.5, 0.5];
    // Centre moving through the beam plane while pitching up and wobbling.
    let poses: Vec<PoseSample> = (0..9)
        .map(|i| {
            let t = i as f64 * cfg.sensor.period();
            let mut pose = Pose::centred(
                -0.045 + 0.06 * t,
                0.01 * (3.0 * t).sin(),
                0.02 + 0.25 * t,
                &cfg.body,
            );
            pose.y = 5e-4 * (7.0 * t).sin();
            PoseSample { t, pose }
        })
        .collect();
    let force: Vec<ForceSample> = predict_force_series(&poses, truth[0], truth[1], &cfg)
        .into_iter()
        .zip(&poses)
        .map(|(force, p)| ForceSample { t: p.t, force })
        .collect();
    let touching = force
        .iter()
        .filter(|s| s.force.norm() > cfg.sensor.contact_threshold)
        .count();
    let truth_residual = Objective::new(&force, &poses, &cfg).residual(truth);
    let est = estimate_stiffness(&force, &poses, &cfg, 11);
    let errs = est.relative_errors(truth);
    check(
        touching >= 3 && truth_residual == 0.0 && errs.iter().all(|e| *e < 0.01),
        format!(
            "{touching} contact samples, k_hat = ({:.6}, {:.6}), errors {:.2e} / {:.2e}",
            est.k[0], est.k[1], errs[0], errs[1]
        ),
    )
}

fn sweep(target: Reproduction, trials: usize) -> Result<SweepResult, String> {
    run_sweep(&target.spec(&WorldConfig::default(), trials, 0)).map_err(|e| e.to_string())
}

fn cell_error(result: &SweepResult, key: &str) -> Result<f64, String> {
    let c = result
        .cell(key)
        .ok_or_else(|| format!("missing cell {key}"))?;
    if c.failures > 0 {
        return Err(format!(
            "{key}: {} of {} trials failed",
            c.failures, c.trials
        ));
    }
    c.mean_rel_error
        .ok_or_else(|| format!("{key}: no estimate"))
}

fn estimation_under_oscillation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (target, keys) in [
        (
            Reproduction::Table1,
            ["frequency=2Hz", "frequency=4Hz", "frequency=6Hz"],
        ),
        (
            Reproduction::Table2,
            ["amplitude=1mm", "amplitude=2mm", "amplitude=3mm"],
        ),
    ] {
        let result = sweep(target, TRIALS)?;
        for key in keys {
            let e = cell_error(&result, key)?;
            ok &= e < 0.10;
            parts.push(format!("{key} {:.2}%", e * 100.0));
        }
    }
    check(ok, parts.join(", "))
}

fn position_corruption_trend() -> Outcome {
    let result = sweep(Reproduction::Fig6, TRIALS)?;
    let e: Vec<f64> = ["amplitude=1mm", "amplitude=2mm", "amplitude=3mm"]
        .iter()
        .map(|k| cell_error(&result, k))
        .collect::<Result<_, _>>()?;
    let monotone = e.windows(2).all(|w| w[1] >= w[0]);
    check(
        monotone && e[2] < 0.15,
        format!(
            "Y reported as 0, f = 6 Hz: {:.2}%, {:.2}%, {:.2}% at 1, 2, 3 mm (non-decreasing: {monotone})",
            e[0] * 100.0,
            e[1] * 100.0,
            e[2] * 100.0
        ),
    )
}

fn sensing_time_trend() -> Outcome {
    let result = sweep(Reproduction::Table3, TRIALS)?;
    let short = cell_error(&result, "sensing_time=25ms")?;
    let long = cell_error(&result, "sensing_time=100ms")?;
    check(
        short > long,
        format!(
            "T_s 25 ms {:.2}% vs 100 ms {:.2}%",
            short * 100.0,
            long * 100.0
        ),
    )
}

fn delay_trend() -> Outcome {
    let result = sweep(Reproduction::Fig8, 1)?;
    let mut energies = Vec::new();
    for key in ["delay=320ms", "delay=480ms", "delay=640ms"] {
        let c = result
            .cell(key)
            .ok_or_else(|| format!("missing cell {key}"))?;
        energies.push(c.energy_mean.ok_or_else(|| format!("{key}: no energy"))?);
    }
    check(
        energies.windows(2).all(|w| w[1] >= w[0]),
        format!(
            "{:.1}, {:.1}, {:.1} mJ at 320, 480, 640 ms",
            energies[0], energies[1], energies[2]
        ),
    )
}

fn random_landscape(rng: &mut ChaCha8Rng) -> EnergyLandscape {
    let n = 7;
    let spec = GridSpec {
        x_min: 0.0,
        x_max: 0.012,
        x_step: 0.002,
        alpha_min: -0.3,
        alpha_max: 0.3,
        alpha_step: 0.1,
        beta_min: -0.3,
        beta_max: 0.3,
        beta_step: 0.1,
    };
    // Dyadic energies keep every path sum exact.
    let values = (0..n * n * n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                f64::INFINITY
            } else {
                rng.gen_range(0..256) as f64 / 64.0
            }
        })
        .collect();
    EnergyLandscape {
        spec,
        k: [0.0; 2],
        values,
    }
}

/// Plain O(V^2) Dijkstra over the same six-neighbour grid.
fn dijkstra(land: &EnergyLandscape, start: usize, goal: usize) -> f64 {
    let [nx, na, nb] = land.dims();
    let total = nx * na * nb;
    let mut dist = vec![f64::INFINITY; total];
    let mut done = vec![false; total];
    dist[start] = 0.0;
    while let Some(u) = (0..total)
        .filter(|&i| !done[i] && dist[i].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[u] = true;
        if u == goal {
            break;
        }
        let (ix, ia, ib) = (u / (na * nb), (u / nb) % na, u % nb);
        let mut next = Vec::new();
        if ix > 0 {
            next.push(u - na * nb);
        }
        if ix + 1 < nx {
            next.push(u + na * nb);
        }
        if ia > 0 {
            next.push(u - nb);
        }
        if ia + 1 < na {
            next.push(u + nb);
        }
        if ib > 0 {
            next.push(u - 1);
        }
        if ib + 1 < nb {
            next.push(u + 1);
        }
        for v in next {
            let (eu, ev) = (land.values[u], land.values[v]);
            if !ev.is_finite() {
                continue;
            }
            let d = dist[u] + (ev - eu).max(0.0);
            if d < dist[v] {
                dist[v] = d;
            }
        }
    }
    dist[goal]
}

fn planner_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solved, mut unreachable) = (0, 0);
    for trial in 0..100 {
        let land = random_landscape(&mut rng);
        let finite: Vec<usize> = (0..land.values.len())
            .filter(|&i| land.values[i].is_finite())
            .collect();
        let s = finite[rng.gen_range(0..finite.len())];
        let g = finite[rng.gen_range(0..finite.len())];
        let node = |i: usize| GridNode::new(i / 49, (i / 7) % 7, i % 7);
        let oracle = dijkstra(&land, s, g);
        match astar(&land, node(s), node(g)) {
            Ok(p) => {
                if p.cost != oracle {
                    return Err(format!(
                        "landscape {trial}: A* {} vs Dijkstra {oracle}",
                        p.cost
                    ));
                }
                if path_cost(&land, &p.path) != Some(p.cost) {
                    return Err(format!(
                        "landscape {trial}: returned path does not cost {}",
                        p.cost
                    ));
                }
                solved += 1;
            }
            Err(_) if oracle.is_infinite() => unreachable += 1,
            Err(e) => {
                return Err(format!(
                    "landscape {trial}: A* failed ({e}) but Dijkstra found {oracle}"
                ))
            }
        }
    }
    Ok(format!(
        "100 landscapes: {solved} equal costs, {unreachable} unreachable in both"
    ))
}

fn physics_sanity() -> Outcome {
    // Undamped beam swinging alone for 2 s.
    let mut cfg = WorldConfig::default();
    for b in &mut cfg.beams {
        b.damping = 0.0;
    }
    let mut far = RobotState::start(&cfg);
    far.velocity.x = 0.0;
    let hold = ControlInput {
        y_des: far.pose.y,
        z_des: far.pose.z,
        ..Default::default()
    };
    let mut beams = [
        BeamState {
            theta: 0.4,
            omega: 0.0,
        },
        BeamState {
            theta: -0.2,
            omega: 1.0,
        },
    ];
    let e0: Vec<f64> = (0..2).map(|i| beam_energy(&beams[i], i, &cfg)).collect();
    let steps = (2.0 / cfg.dt_physics).round() as usize;
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        beams = step(&far, &beams, &hold, &cfg, cfg.dt_physics).beams;
        for i in 0..2 {
            drift = drift.max((beam_energy(&beams[i], i, &cfg) - e0[i]).abs() / e0[i]);
        }
    }

    // Push into the beams and check every contact pair on every substep.
    let cfg = WorldConfig::default().with_stiffness(0.2, 0.2);
    let mut s = RobotState::start(&cfg);
    let mut beams = [BeamState::default(); 2];
    let (mut pairs, mut broken) = (0usize, 0usize);
    for _ in 0..(6.0 / cfg.dt_physics) as usize {
        let u = ControlInput {
            force_x: 20.0 * (cfg.forward_speed - s.velocity.x),
            y_des: 0.0,
            z_des: s.pose.z,
            ..Default::default()
        };
        let out = step(&s, &beams, &u, &cfg, cfg.dt_physics);
        for c in &out.contacts {
            pairs += 1;
            if c.on_body + c.on_beam() != nalgebra::Vector3::zeros() {
                broken += 1;
            }
        }
        s = out.state;
        beams = out.beams;
    }

    // Identical seeded runs with oscillation on.
    let mut osc = WorldConfig::default().with_stiffness(0.5, 0.5);
    osc.oscillation.enabled = true;
    let strategy = Strategy::parse("force-feedback", &osc).map_err(|e| e.to_string())?;
    let a = run_strategy(&strategy, &osc, 42).map_err(|e| e.to_string())?;
    let b = run_strategy(&strategy, &osc, 42).map_err(|e| e.to_string())?;
    let same = a == b
        && episode_csv(&a) == episode_csv(&b)
        && a.energy_mj.to_bits() == b.energy_mj.to_bits();

    check(
        drift < 0.005 && pairs > 0 && broken == 0 && same,
        format!(
            "beam energy drift {:.2e} over 2 s; {pairs} contact pairs, {broken} unbalanced; repeated seeded runs identical: {same}",
            drift
        ),
    )
}

fn landscape_properties() -> Outcome {
    let cfg = WorldConfig::default();
    let body = &cfg.body;
    let floor = body.mass * cfg.gravity * (body.height - body.h_c);
    let land = build_landscape(0.2, 0.2, &GridSpec::default(), &cfg);
    let below = land.values.iter().filter(|&&e| e < floor).count();
    let [nx, na, nb] = land.dims();
    let mut worst_mirror: f64 = 0.0;
    for ix in 0..nx {
        for ia in 0..na {
            for ib in 0..nb {
                let (e, m) = (land.get(ix, ia, ib), land.get(ix, na - 1 - ia, ib));
                if e != m {
                    worst_mirror = worst_mirror.max((e - m).abs());
                }
            }
        }
    }
    let beams_upright: f64 = cfg
        .beams
        .iter()
        .map(|b| b.mass * cfg.gravity * b.length / 2.0)
        .sum();
    let flat_expected = floor + beams_upright;
    let flat = energy_at(cfg.landscape.x_min, 0.0, 0.0, 0.2, 0.2, &cfg);
    let flat_err = (flat - flat_expected).abs();
    check(
        below == 0 && worst_mirror <= 1e-6 && flat_err <= 1e-9,
        format!(
            "{} cells, {below} below Mg(H-h_c); worst roll-mirror gap {worst_mirror:.1e} J; flat pose off by {flat_err:.1e} J",
            land.values.len()
        ),
    )
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let started = Instant::now();
    let runs = strategy_runs();
    let from_runs = |f: fn(&Runs) -> Outcome| runs.as_ref().map_err(Clone::clone).and_then(f);
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("critical stiffness", Box::new(critical_stiffness_value)),
        ("mode barriers", Box::new(mode_barrier_crossing)),
        (
            "strategy outcome matrix",
            Box::new(move || from_runs(outcome_matrix)),
        ),
        (
            "energy ordering",
            Box::new(move || from_runs(energy_ordering)),
        ),
        (
            "estimator self-consistency",
            Box::new(estimator_self_consistency),
        ),
        (
            "estimation under oscillation",
            Box::new(estimation_under_oscillation),
        ),
        (
            "position-corruption trend",
            Box::new(position_corruption_trend),
        ),
        ("sensing-time trend", Box::new(sensing_time_trend)),
        ("delay trend", Box::new(delay_trend)),
        ("planner oracle", Box::new(planner_oracle)),
        ("physics sanity", Box::new(physics_sanity)),
        ("landscape properties", Box::new(landscape_properties)),
    ];
    let mut fatal = Vec::new();
    let mut passed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        let t = Instant::now();
        let result = run();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                passed += 1;
                println!("PASS {n:>2} {name} [{secs:.1} s]: {detail}");
            }
            Err(detail) => {
                let known = KNOWN_FAILURES.contains(&n);
                println!(
                    "FAIL {n:>2} {name} [{secs:.1} s]: {detail}{}",
                    if known {
                        " (known failure, see README)"
                    } else {
                        ""
                    }
                );
                if strict || !known {
                    fatal.push(n);
                }
            }
        }
    }
    println!(
        "acceptance: {passed}/{} passed in {:.0} s",
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if !fatal.is_empty() {
        println!("acceptance: unexpected failures in criteria {fatal:?}");
        std::process::exit(1);
    }
}
