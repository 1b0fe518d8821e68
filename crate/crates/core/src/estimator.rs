//! Beam stiffness identification from sensed force and pose series.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geometry::Vec3;
use crate::quasistatic::{PoseSample, PreparedSeries};
use crate::sim::ForceSample;
use crate::simplex::{simplex_minimize, SimplexStatus};

/// In-contact samples needed for a trustworthy fit.
pub const MIN_CONTACT_SAMPLES: usize = 3;
const NEGATIVE_PENALTY: f64 = 1e6;
const POLISH_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub k: [f64; 2],
    /// Sum of force-residual norms at `k` (N).
    pub residual: f64,
    pub restarts_used: usize,
    pub samples_used: usize,
    pub contact_samples: usize,
    pub insufficient_contact: bool,
    /// Number of restarts that hit the iteration cap.
    pub capped_restarts: usize,
}

impl EstimateResult {
    pub fn relative_errors(&self, truth: [f64; 2]) -> [f64; 2] {
        [
            (self.k[0] - truth[0]).abs() / truth[0],
            (self.k[1] - truth[1]).abs() / truth[1],
        ]
    }

    pub fn mean_relative_error(&self, truth: [f64; 2]) -> f64 {
        let e = self.relative_errors(truth);
        0.5 * (e[0] + e[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Report Y = 0 regardless of the true lateral position.
    YZero,
}

pub fn corrupt_position(poses: &[PoseSample], mode: Corruption) -> Vec<PoseSample> {
    match mode {
        Corruption::YZero => poses
            .iter()
            .map(|p| {
                let mut p = *p;
                p.pose.y = 0.0;
                p
            })
            .collect(),
    }
}

/// Force samples in `[t_from, t_to]` paired with the nearest-in-time pose sample.
pub fn aligned_window(
    force: &[ForceSample],
    poses: &[PoseSample],
    t_from: f64,
    t_to: f64,
) -> (Vec<ForceSample>, Vec<PoseSample>) {
    let eps = 1e-9;
    let mut fs = Vec::new();
    let mut ps = Vec::new();
    if poses.is_empty() {
        return (fs, ps);
    }
    for s in force
        .iter()
        .filter(|s| s.t >= t_from - eps && s.t <= t_to + eps)
    {
        let j = poses.partition_point(|p| p.t < s.t);
        let nearest = match (j.checked_sub(1), poses.get(j)) {
            (Some(i), Some(next)) => {
                if s.t - poses[i].t <= next.t - s.t {
                    i
                } else {
                    j
                }
            }
            (Some(i), None) => i,
            (None, _) => j,
        };
        fs.push(*s);
        ps.push(poses[nearest]);
    }
    (fs, ps)
}

/// Force residual objective over a prepared series.
pub struct Objective {
    prepared: PreparedSeries,
    sensed: Vec<Vec3>,
    usable: Vec<usize>,
}

impl Objective {
    pub fn new(force: &[ForceSample], poses: &[PoseSample], config: &WorldConfig) -> Self {
        let prepared = PreparedSeries::new(poses, config);
        let usable = (0..prepared.len())
            .filter(|&i| !prepared.is_singular(i))
            .collect();
        Self {
            prepared,
            sensed: force.iter().map(|s| s.force).collect(),
            usable,
        }
    }

    /// Sum over usable samples of the Euclidean force residual.
    pub fn residual(&self, k: [f64; 2]) -> f64 {
        self.usable
            .iter()
            .map(|&i| (self.sensed[i] - self.prepared.force(i, k)).norm())
            .sum()
    }

    /// Residual plus the quadratic penalty on negative stiffness.
    pub fn penalised(&self, k: [f64; 2]) -> f64 {
        let neg = k.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>();
        self.residual(k) + NEGATIVE_PENALTY * neg
    }

    pub fn samples_used(&self) -> usize {
        self.usable.len()
    }
}

/// Fit both stiffnesses to aligned force and pose series.
///
/// `force[i]` must correspond to `poses[i]`. Restart guesses are drawn
/// uniformly from `[0, guess_max]` using `seed`.
pub fn estimate_stiffness(
    force: &[ForceSample],
    poses: &[PoseSample],
    config: &WorldConfig,
    seed: u64,
) -> EstimateResult {
    let params = &config.estimator;
    let objective = Objective::new(force, poses, config);
    let contact_samples = force
        .iter()
        .filter(|s| s.force.norm() > config.sensor.contact_threshold)
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guesses: Vec<[f64; 2]> = (0..params.restarts)
        .map(|_| {
            [
                rng.gen_range(0.0..=params.guess_max),
                rng.gen_range(0.0..=params.guess_max),
            ]
        })
        .collect();

    let runs: Vec<([f64; 2], f64, bool)> = guesses
        .par_iter()
        .map(|g| {
            let r = simplex_minimize(
                |x: &Vector2<f64>| objective.penalised([x[0], x[1]]),
                Vector2::new(g[0], g[1]),
                params.tolerance,
                params.max_iterations,
            );
            let k = [r.x[0].max(0.0), r.x[1].max(0.0)];
            (
                k,
                objective.residual(k),
                r.status == SimplexStatus::MaxIterations,
            )
        })
        .collect();

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = i;
        }
    }
    let (mut k, mut residual) = runs
        .get(best)
        .map_or(([0.0; 2], objective.residual([0.0; 2])), |r| (r.0, r.1));
    // Polish the winner well below the restart tolerance; the residual is
    // non-smooth at the optimum, so the coarse stop leaves a visible gap.
    let polished = simplex_minimize(
        |x: &Vector2<f64>| objective.penalised([x[0], x[1]]),
        Vector2::new(k[0], k[1]),
        POLISH_TOLERANCE,
        params.max_iterations,
    );
    let k_polished = [polished.x[0].max(0.0), polished.x[1].max(0.0)];
    let r_polished = objective.residual(k_polished);
    if r_polished < residual {
        k = k_polished;
        residual = r_polished;
    }
    EstimateResult {
        k,
        residual,
        restarts_used: runs.len(),
        samples_used: objective.samples_used(),
        contact_samples,
        insufficient_contact: contact_samples < MIN_CONTACT_SAMPLES,
        capped_restarts: runs.iter().filter(|r| r.2).count(),
    }
}
