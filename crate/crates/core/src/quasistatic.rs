//! Quasistatic contact-force model.
//!
//! Each beam is assumed to sit exactly at the deflection that just clears the
//! body and to be in torque balance: spring, damping and beam weight about the
//! hinge are carried by a single normal force at the touch point.

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geometry::{BeamShape, BodyFrame, Pose, Vec3};

/// Lever arms below this (m per N) make the force unobservable.
pub const SINGULAR_LEVER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub pose: Pose,
}

/// Pose-only geometry of one beam in contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub theta: f64,
    /// Touch point on the beam (world frame).
    pub point: Vec3,
    /// Outward body normal at the touch point (world frame).
    pub normal: Vec3,
    /// Hinge torque per newton of force on the beam along `normal`.
    pub lever: f64,
}

impl BeamGeometry {
    pub fn is_singular(&self) -> bool {
        self.lever.abs() < SINGULAR_LEVER
    }

    /// Force on the body for stiffness `k`, damping `damping` and beam rate `omega`.
    pub fn force(&self, k: f64, damping: f64, omega: f64, gravity_moment: f64) -> Vec3 {
        if self.is_singular() {
            return Vec3::zeros();
        }
        let torque = k * self.theta + damping * omega - gravity_moment * self.theta.sin();
        let magnitude = (torque / self.lever).max(0.0);
        -self.normal * magnitude
    }
}

/// Geometry of beam `i` at `pose`, or `None` when the beam stays upright.
pub fn beam_geometry(pose: &Pose, i: usize, config: &WorldConfig) -> Option<BeamGeometry> {
    let beam = &config.beams[i];
    let frame = BodyFrame::new(pose, &config.body);
    let theta = frame.required_deflection(beam, BeamShape::Solid).theta;
    if theta == 0.0 {
        return None;
    }
    let w = frame.witness(theta, beam, BeamShape::Solid);
    let r = w.beam_point - Vec3::new(0.0, beam.y_hinge, 0.0);
    Some(BeamGeometry {
        theta,
        point: w.beam_point,
        normal: w.normal,
        lever: r.cross(&w.normal).y,
    })
}

/// Force on the body from beam `i`, or `None` for a singular lever arm.
pub fn beam_force(
    pose: &Pose,
    k: f64,
    damping: f64,
    omega: f64,
    i: usize,
    config: &WorldConfig,
) -> Option<Vec3> {
    match beam_geometry(pose, i, config) {
        None => Some(Vec3::zeros()),
        Some(g) if g.is_singular() => None,
        Some(g) => Some(g.force(
            k,
            damping,
            omega,
            config.beams[i].gravity_moment(config.gravity),
        )),
    }
}

/// Per-sample geometry of a pose series, computed once and reused for any stiffness.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub times: Vec<f64>,
    geometry: Vec<[Option<BeamGeometry>; 2]>,
    rates: Vec<[f64; 2]>,
    damping: [f64; 2],
    gravity_moment: [f64; 2],
}

impl PreparedSeries {
    pub fn new(samples: &[PoseSample], config: &WorldConfig) -> Self {
        let geometry: Vec<[Option<BeamGeometry>; 2]> = samples
            .iter()
            .map(|s| {
                [
                    beam_geometry(&s.pose, 0, config),
                    beam_geometry(&s.pose, 1, config),
                ]
            })
            .collect();
        let theta = |i: usize, j: usize| geometry[i][j].map_or(0.0, |g| g.theta);
        let n = samples.len();
        let rates = (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                let dt = samples[hi].t - samples[lo].t;
                let rate = |j| {
                    if hi == lo || dt <= 0.0 {
                        0.0
                    } else {
                        (theta(hi, j) - theta(lo, j)) / dt
                    }
                };
                [rate(0), rate(1)]
            })
            .collect();
        Self {
            times: samples.iter().map(|s| s.t).collect(),
            geometry,
            rates,
            damping: [config.beams[0].damping, config.beams[1].damping],
            gravity_moment: [
                config.beams[0].gravity_moment(config.gravity),
                config.beams[1].gravity_moment(config.gravity),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// A beam in contact at sample `i` has a degenerate lever arm.
    pub fn is_singular(&self, i: usize) -> bool {
        self.geometry[i]
            .iter()
            .flatten()
            .any(BeamGeometry::is_singular)
    }

    pub fn geometry(&self, i: usize) -> &[Option<BeamGeometry>; 2] {
        &self.geometry[i]
    }

    /// Estimated beam rates at sample `i`.
    pub fn rates(&self, i: usize) -> [f64; 2] {
        self.rates[i]
    }

    /// Total predicted force on the body at sample `i`.
    pub fn force(&self, i: usize, k: [f64; 2]) -> Vec3 {
        self.force_with_rates(i, k, self.rates[i])
    }

    pub fn force_with_rates(&self, i: usize, k: [f64; 2], rates: [f64; 2]) -> Vec3 {
        (0..2)
            .filter_map(|j| {
                self.geometry[i][j]
                    .map(|g| g.force(k[j], self.damping[j], rates[j], self.gravity_moment[j]))
            })
            .sum()
    }
}

/// Predicted total force for each sample. Singular samples predict zero.
pub fn predict_force_series(
    samples: &[PoseSample],
    k1: f64,
    k2: f64,
    config: &WorldConfig,
) -> Vec<Vec3> {
    let prepared = PreparedSeries::new(samples, config);
    (0..prepared.len())
        .map(|i| prepared.force(i, [k1, k2]))
        .collect()
}
