//! Traversal strategies: feedforward pushing, roll-through avoidance, and
//! force feedback (sense, estimate, plan, track).

use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{Gains, Limits, SineComponent, WorldConfig};
use crate::error::{Error, Result};
use crate::estimator::{aligned_window, estimate_stiffness, EstimateResult};
use crate::geometry::{pitch_axis, Vec3};
use crate::landscape::{build_landscape, min_clearance_roll};
use crate::planner::{plan, PlannedTrajectory};
use crate::quasistatic::beam_geometry;
use crate::sim::{
    oscillation_targets, simulate, ControlInput, Driver, EpisodeLog, Events, ForceSample,
    Observation, RobotState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalMode {
    TraversedPitch,
    TraversedRoll,
    Stuck,
    Flipped,
}

impl TraversalMode {
    pub fn traversed(&self) -> bool {
        matches!(
            self,
            TraversalMode::TraversedPitch | TraversalMode::TraversedRoll
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TraversalMode::TraversedPitch => "traversed_pitch",
            TraversalMode::TraversedRoll => "traversed_roll",
            TraversalMode::Stuck => "stuck",
            TraversalMode::Flipped => "flipped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Feedforward,
    Avoidance,
    ForceFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub limited: bool,
    /// Sensing window after first contact (s).
    pub sensing_time: f64,
    /// First contact to start of active control (s).
    pub delay: f64,
    pub gains: Gains,
}

impl Strategy {
    pub fn new(kind: StrategyKind, limited: bool, config: &WorldConfig) -> Self {
        Self {
            kind,
            limited,
            sensing_time: config.delays.sensing_time,
            delay: config.delays.sensorimotor,
            gains: config.gains,
        }
    }

    /// Parse a CLI name: `ff`, `ff-limited`, `avoid` or `force-feedback`.
    pub fn parse(name: &str, config: &WorldConfig) -> Result<Self> {
        let (kind, limited) = match name {
            "ff" => (StrategyKind::Feedforward, false),
            "ff-limited" => (StrategyKind::Feedforward, true),
            "avoid" => (StrategyKind::Avoidance, false),
            "force-feedback" => (StrategyKind::ForceFeedback, false),
            other => return Err(Error::invalid(
                "strategy",
                format!(
                    "unknown strategy `{other}` (expected ff, ff-limited, avoid, force-feedback)"
                ),
            )),
        };
        let s = Self::new(kind, limited, config);
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match (self.kind, self.limited) {
            (StrategyKind::Feedforward, false) => "ff",
            (StrategyKind::Feedforward, true) => "ff-limited",
            (StrategyKind::Avoidance, _) => "avoid",
            (StrategyKind::ForceFeedback, _) => "force-feedback",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensing_time.is_nan() || self.sensing_time <= 0.0 {
            return Err(Error::invalid("delays.sensing_time", "must be > 0"));
        }
        if self.delay < self.sensing_time {
            return Err(Error::invalid(
                "delays.sensorimotor",
                "must be >= the sensing time",
            ));
        }
        let g = &self.gains;
        if [g.kp_x, g.kd_x, g.kp_roll, g.kd_roll, g.kp_pitch, g.kd_pitch]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::invalid("gains", "all gains must be > 0"));
        }
        Ok(())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ff" | "feedforward" => Ok(StrategyKind::Feedforward),
            "avoid" | "avoidance" => Ok(StrategyKind::Avoidance),
            "force-feedback" | "ffb" => Ok(StrategyKind::ForceFeedback),
            other => Err(Error::invalid(
                "strategy",
                format!("unknown strategy `{other}`"),
            )),
        }
    }
}

/// First time the sensed force exceeds `threshold` on two consecutive samples.
pub fn detect_contact(samples: &[ForceSample], threshold: f64) -> Option<f64> {
    samples
        .windows(2)
        .find(|w| w[0].force.norm() > threshold && w[1].force.norm() > threshold)
        .map(|w| w[0].t)
}

/// Saturate the three actuator channels when limits are enabled.
pub fn clamp(u: ControlInput, limits: &Limits) -> ControlInput {
    if !limits.enabled {
        return u;
    }
    ControlInput {
        force_x: u.force_x.clamp(-limits.force_x, limits.force_x),
        torque_roll: u.torque_roll.clamp(-limits.torque_roll, limits.torque_roll),
        torque_pitch: u
            .torque_pitch
            .clamp(-limits.torque_pitch, limits.torque_pitch),
        ..u
    }
}

/// Desired (X, alpha, beta) and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub position: [f64; 3],
    pub rate: [f64; 3],
}

/// Generalised force on (X, alpha, beta) that a contact force produces.
pub fn generalized_contact(state: &RobotState, force: Vec3, point: Vec3) -> [f64; 3] {
    let torque = (point - state.pose.position()).cross(&force);
    [force.x, torque.x, torque.dot(&pitch_axis(state.pose.alpha))]
}

/// Quasistatic prediction of the contact load for stiffnesses `k`.
///
/// Beams count only until the body centre passes the hinge line. Past it,
/// the model's forward deflection would have swept through the body, and the
/// real beam rests behind it instead.
pub fn predicted_contact(state: &RobotState, k: [f64; 2], config: &WorldConfig) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (i, &ki) in k.iter().enumerate() {
        let Some(g) = beam_geometry(&state.pose, i, config) else {
            continue;
        };
        if state.pose.x > 0.0 {
            continue;
        }
        let force = g.force(
            ki,
            config.beams[i].damping,
            0.0,
            config.beams[i].gravity_moment(config.gravity),
        );
        let q = generalized_contact(state, force, g.point);
        for j in 0..3 {
            total[j] += q[j];
        }
    }
    total
}

/// Gravity torques on (alpha, beta) from the offset centre of mass.
pub fn gravity_torques(state: &RobotState, config: &WorldConfig) -> [f64; 2] {
    let b = &config.body;
    let w = b.mass * config.gravity * b.h_c;
    let (sa, ca) = state.pose.alpha.sin_cos();
    let (sb, cb) = state.pose.beta.sin_cos();
    [-w * sa * cb, -w * ca * sb]
}

/// PD on (X, alpha, beta) plus gravity and predicted-contact cancellation.
/// Y and Z are left for the caller to fill in.
pub fn tracking_input(
    state: &RobotState,
    reference: &Reference,
    contact: [f64; 3],
    gains: &Gains,
    config: &WorldConfig,
) -> ControlInput {
    let [xr, ar, br] = reference.position;
    let [vxr, war, wbr] = reference.rate;
    let p = &state.pose;
    let gravity = gravity_torques(state, config);
    ControlInput {
        force_x: gains.kp_x * (xr - p.x) + gains.kd_x * (vxr - state.velocity.x) - contact[0],
        torque_roll: gains.kp_roll * (ar - p.alpha) + gains.kd_roll * (war - state.alpha_rate)
            - gravity[0]
            - contact[1],
        torque_pitch: gains.kp_pitch * (br - p.beta) + gains.kd_pitch * (wbr - state.beta_rate)
            - gravity[1]
            - contact[2],
        y_des: 0.0,
        z_des: config.body.height,
    }
}

/// A planned trajectory sampled on the control grid and smoothed by a centred
/// moving average. The raw plan alternates forward and rotation edges, so its
/// rates jump between zero and full speed on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothReference {
    t0: f64,
    dt: f64,
    positions: Vec<[f64; 3]>,
}

impl SmoothReference {
    pub fn new(plan: &PlannedTrajectory, dt: f64, window: f64) -> Self {
        let t0 = plan.start_time();
        let n = (plan.duration() / dt).ceil() as usize + 1;
        let raw: Vec<[f64; 3]> = (0..n).map(|i| plan.reference(t0 + i as f64 * dt)).collect();
        let half = (0.5 * window / dt).round() as usize;
        let positions = (0..n)
            .map(|i| {
                // Shrink the window near the ends so both endpoints are kept exactly.
                let h = half.min(i).min(n - 1 - i);
                let span = &raw[i - h..=i + h];
                let mut acc = [0.0; 3];
                for p in span {
                    for j in 0..3 {
                        acc[j] += p[j];
                    }
                }
                acc.map(|v| v / span.len() as f64)
            })
            .collect();
        Self { t0, dt, positions }
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + (self.positions.len() - 1) as f64 * self.dt
    }

    pub fn at(&self, t: f64) -> Reference {
        let n = self.positions.len();
        let u = ((t - self.t0) / self.dt).max(0.0);
        let i = (u.floor() as usize).min(n - 1);
        if i + 1 >= n {
            return Reference {
                position: self.positions[n - 1],
                rate: [0.0; 3],
            };
        }
        let f = u - i as f64;
        let (a, b) = (self.positions[i], self.positions[i + 1]);
        Reference {
            position: [0, 1, 2].map(|j| a[j] + f * (b[j] - a[j])),
            rate: [0, 1, 2].map(|j| (b[j] - a[j]) / self.dt),
        }
    }
}

/// Fore-aft velocity servo at the commanded speed.
fn velocity_servo(state: &RobotState, config: &WorldConfig) -> f64 {
    config.velocity_gain * (config.forward_speed - state.velocity.x)
}

#[derive(Debug, Clone)]
struct Oscillation {
    enabled: bool,
    frequency: f64,
    amplitude: f64,
    vertical: Vec<SineComponent>,
    height: f64,
}

impl Oscillation {
    fn new(config: &WorldConfig, seed: u64) -> Self {
        let o = &config.oscillation;
        Self {
            enabled: o.enabled,
            frequency: o.frequency,
            amplitude: o.lateral_amplitude,
            vertical: if o.enabled {
                config.vertical_profile(seed)
            } else {
                Vec::new()
            },
            height: config.body.height,
        }
    }

    fn targets(&self, t: f64) -> (f64, f64) {
        if self.enabled {
            oscillation_targets(
                t,
                self.frequency,
                self.amplitude,
                &self.vertical,
                self.height,
            )
        } else {
            (0.0, self.height)
        }
    }
}

/// Constant-speed pushing with free roll and pitch joints.
pub struct FeedforwardDriver {
    limits: Limits,
    oscillation: Oscillation,
}

impl FeedforwardDriver {
    pub fn new(config: &WorldConfig, limited: bool, seed: u64) -> Self {
        let mut limits = config.limits;
        limits.enabled = limited;
        Self {
            limits,
            oscillation: Oscillation::new(config, seed),
        }
    }

    fn input(&self, t: f64, state: &RobotState, config: &WorldConfig) -> ControlInput {
        let (y_des, z_des) = self.oscillation.targets(t);
        clamp(
            ControlInput {
                force_x: velocity_servo(state, config),
                torque_roll: 0.0,
                torque_pitch: 0.0,
                y_des,
                z_des,
            },
            &self.limits,
        )
    }
}

impl Driver for FeedforwardDriver {
    fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput> {
        Ok(self.input(obs.t, obs.state, obs.config))
    }
}

/// Roll to a clearing angle before reaching the beams, pass, roll back.
pub struct AvoidanceDriver {
    target: f64,
    ramp_start: f64,
    rate: f64,
    gains: Gains,
    back_start: Option<f64>,
    settle: f64,
}

impl AvoidanceDriver {
    pub fn new(config: &WorldConfig, gains: Gains) -> Result<Self> {
        let target = (min_clearance_roll(config)? + config.avoid_margin).min(FRAC_PI_2);
        let beam_face = -0.5 * config.beams[0].thickness;
        let arrival = (beam_face - config.body.a - config.x_start) / config.forward_speed;
        Ok(Self {
            target,
            ramp_start: (arrival - 2.0).max(0.0),
            rate: config.rotation_rate,
            gains,
            back_start: None,
            settle: 0.5,
        })
    }

    pub fn target_roll(&self) -> f64 {
        self.target
    }

    fn roll_reference(&self, t: f64) -> (f64, f64) {
        match self.back_start {
            Some(t0) => {
                let a = self.target - self.rate * (t - t0);
                if a > 0.0 {
                    (a, -self.rate)
                } else {
                    (0.0, 0.0)
                }
            }
            None => {
                let a = self.rate * (t - self.ramp_start);
                if a <= 0.0 {
                    (0.0, 0.0)
                } else if a < self.target {
                    (a, self.rate)
                } else {
                    (self.target, 0.0)
                }
            }
        }
    }
}

impl Driver for AvoidanceDriver {
    fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput> {
        let (state, config) = (obs.state, obs.config);
        if self.back_start.is_none() && state.pose.x >= config.x_target {
            self.back_start = Some(obs.t);
        }
        let (alpha_ref, alpha_rate) = self.roll_reference(obs.t);
        let reference = Reference {
            position: [state.pose.x, alpha_ref, 0.0],
            rate: [state.velocity.x, alpha_rate, 0.0],
        };
        let mut u = tracking_input(state, &reference, [0.0; 3], &self.gains, config);
        u.force_x = velocity_servo(state, config);
        Ok(u)
    }

    fn finished(&self, t: f64) -> bool {
        self.back_start
            .is_some_and(|t0| t >= t0 + self.target / self.rate + self.settle)
    }

    fn tracking(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Approach,
    Sensing {
        t_c: f64,
    },
    Tracking {
        reference: SmoothReference,
        k: [f64; 2],
    },
    Fallback,
}

/// Sense on contact, estimate stiffness, plan on the landscape, then track.
pub struct ForceFeedbackDriver {
    strategy: Strategy,
    seed: u64,
    feedforward: FeedforwardDriver,
    phase: Phase,
    events: Events,
    pub estimate: Option<EstimateResult>,
    pub plan: Option<PlannedTrajectory>,
}

impl ForceFeedbackDriver {
    pub fn new(strategy: Strategy, config: &WorldConfig, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            feedforward: FeedforwardDriver::new(config, false, seed),
            phase: Phase::Approach,
            events: Events::default(),
            estimate: None,
            plan: None,
        }
    }

    fn start_control(&mut self, obs: &Observation<'_>, t_c: f64) -> Result<()> {
        let config = obs.config;
        let (force, poses) = aligned_window(
            obs.samples,
            obs.poses,
            t_c,
            t_c + self.strategy.sensing_time,
        );
        let est = estimate_stiffness(&force, &poses, config, self.seed);
        self.estimate = Some(est);
        if est.insufficient_contact {
            warn!(
                "only {} in-contact samples in the sensing window; continuing feedforward",
                est.contact_samples
            );
            self.phase = Phase::Fallback;
            return Ok(());
        }
        self.events.k_estimate = Some(est.k);
        info!(
            "estimated k = ({:.4}, {:.4}) from {} samples",
            est.k[0], est.k[1], est.samples_used
        );
        let landscape = build_landscape(est.k[0], est.k[1], &config.landscape, config);
        match plan(&landscape, &obs.state.pose, config, obs.t) {
            Ok(p) => {
                info!(
                    "planned {} nodes, cost {:.3} mJ, max roll {:.1} deg, max pitch {:.1} deg",
                    p.path.len(),
                    p.cost * 1e3,
                    p.max_abs_alpha().to_degrees(),
                    p.max_abs_beta().to_degrees()
                );
                let reference =
                    SmoothReference::new(&p, config.dt_control, config.reference_window);
                self.plan = Some(p);
                self.phase = Phase::Tracking {
                    reference,
                    k: est.k,
                };
            }
            Err(e) => {
                warn!("{e}; continuing feedforward");
                self.phase = Phase::Fallback;
            }
        }
        Ok(())
    }
}

impl Driver for ForceFeedbackDriver {
    fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput> {
        let config = obs.config;
        if let Phase::Approach = self.phase {
            if let Some(t_c) = detect_contact(obs.samples, config.sensor.contact_threshold) {
                self.events.t_contact = Some(t_c);
                self.events.t_control = Some(t_c + self.strategy.delay);
                self.phase = Phase::Sensing { t_c };
            }
        }
        if let Phase::Sensing { t_c } = self.phase {
            if obs.t >= t_c + self.strategy.delay - 1e-9 {
                self.start_control(obs, t_c)?;
            }
        }
        match &self.phase {
            Phase::Tracking { reference, k } => {
                let t = obs.t;
                let end = reference.end_time();
                let mut reference = reference.at(t);
                if t > end {
                    // Keep moving forward past the goal at the commanded speed.
                    reference.position[0] += config.forward_speed * (t - end);
                    reference.rate[0] = config.forward_speed;
                }
                let contact = predicted_contact(obs.state, *k, config);
                Ok(tracking_input(
                    obs.state,
                    &reference,
                    contact,
                    &self.strategy.gains,
                    config,
                ))
            }
            _ => Ok(self.feedforward.input(obs.t, obs.state, config)),
        }
    }

    fn finished(&self, t: f64) -> bool {
        match &self.phase {
            Phase::Tracking { reference, .. } => t >= reference.end_time(),
            _ => true,
        }
    }

    fn tracking(&self) -> bool {
        matches!(self.phase, Phase::Tracking { .. })
    }

    fn events(&self) -> Events {
        self.events
    }
}

/// Run one strategy episode.
pub fn run_strategy(strategy: &Strategy, config: &WorldConfig, seed: u64) -> Result<EpisodeLog> {
    strategy.validate()?;
    match strategy.kind {
        StrategyKind::Feedforward => simulate(
            config,
            &mut FeedforwardDriver::new(config, strategy.limited, seed),
        ),
        StrategyKind::Avoidance => {
            simulate(config, &mut AvoidanceDriver::new(config, strategy.gains)?)
        }
        StrategyKind::ForceFeedback => simulate(
            config,
            &mut ForceFeedbackDriver::new(*strategy, config, seed),
        ),
    }
}
