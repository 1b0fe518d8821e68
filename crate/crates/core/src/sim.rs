//! Forward dynamics of the suspended body and the two hinged beams.
//!
//! The body centre moves in X under the fore-aft force and contact; Y and Z
//! follow position commands exactly. Roll and pitch are torque-driven joints
//! whose reduced equations include gravity on the offset centre of mass, the
//! inertial load of the accelerating suspension point, contact torques and the
//! gyroscopic coupling between the two joint axes. Beams are rigid plates on
//! torsion spring-dampers. Contact is a frictionless linear penalty, one
//! deepest point per beam; the beam side is integrated implicitly because a
//! 1 g plate against a 5 kN/m penalty is far too stiff for explicit steps.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::config::{SineComponent, WorldConfig};
use crate::controller::TraversalMode;
use crate::error::{Error, Result};
use crate::geometry::{pitch_axis, BeamShape, BodyFrame, ContactPatch, Pose, Vec3};
use crate::quasistatic::PoseSample;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub pose: Pose,
    /// Velocity of the geometric centre (m/s).
    pub velocity: Vec3,
    pub alpha_rate: f64,
    pub beta_rate: f64,
}

impl RobotState {
    /// At rest in X/Y/Z except for the forward speed, flat, at `x`.
    pub fn start(config: &WorldConfig) -> Self {
        Self {
            pose: Pose::centred(config.x_start, 0.0, 0.0, &config.body),
            velocity: Vec3::new(config.forward_speed, 0.0, 0.0),
            alpha_rate: 0.0,
            beta_rate: 0.0,
        }
    }

    /// World angular velocity of the body.
    pub fn angular_velocity(&self) -> Vec3 {
        Vec3::x() * self.alpha_rate + pitch_axis(self.pose.alpha) * self.beta_rate
    }

    fn is_finite(&self) -> bool {
        let p = &self.pose;
        [
            p.x,
            p.y,
            p.z,
            p.alpha,
            p.beta,
            self.alpha_rate,
            self.beta_rate,
        ]
        .iter()
        .all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BeamState {
    pub theta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub force_x: f64,
    pub torque_roll: f64,
    pub torque_pitch: f64,
    pub y_des: f64,
    pub z_des: f64,
}

impl ControlInput {
    pub fn is_finite(&self) -> bool {
        [
            self.force_x,
            self.torque_roll,
            self.torque_pitch,
            self.y_des,
            self.z_des,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Total contact force on the body at time `t` (world frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSample {
    pub t: f64,
    pub force: Vec3,
}

/// One active contact and the equal-and-opposite loads it produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub patch: ContactPatch,
    /// Force on the body (N). The beam receives the negative.
    pub on_body: Vec3,
    /// Torque about the hinge axis (+Y) on the beam (N m).
    pub beam_torque: f64,
}

impl ContactForce {
    /// Force on the beam.
    pub fn on_beam(&self) -> Vec3 {
        -self.on_body
    }
}

fn hinge_point(config: &WorldConfig, i: usize) -> Vec3 {
    Vec3::new(0.0, config.beams[i].y_hinge, 0.0)
}

/// Moment arm of a unit force along `normal` at `point` about hinge `i`'s +Y axis.
fn lever_arm(point: Vec3, normal: Vec3, config: &WorldConfig, i: usize) -> f64 {
    (point - hinge_point(config, i)).cross(&normal).y
}

/// Explicit penalty contact at the current state.
pub fn penalty_contact(
    state: &RobotState,
    beams: &[BeamState; 2],
    config: &WorldConfig,
) -> Vec<ContactForce> {
    let frame = BodyFrame::new(&state.pose, &config.body);
    let omega_body = state.angular_velocity();
    let origin = state.pose.position();
    let mut out = Vec::new();
    for (i, beam) in config.beams.iter().enumerate() {
        if frame.never_touches(beam, BeamShape::Solid) {
            continue;
        }
        let w = frame.witness(beams[i].theta, beam, BeamShape::Solid);
        if w.clearance >= 0.0 {
            continue;
        }
        let depth = -w.clearance;
        let lever = lever_arm(w.beam_point, w.normal, config, i);
        let body_speed =
            (state.velocity + omega_body.cross(&(w.beam_point - origin))).dot(&w.normal);
        let depth_rate = body_speed - beams[i].omega * lever;
        let f = (config.contact.stiffness * depth + config.contact.damping * depth_rate).max(0.0);
        out.push(ContactForce {
            patch: ContactPatch {
                point: w.beam_point,
                normal: w.normal,
                depth,
                beam_index: i,
            },
            on_body: -w.normal * f,
            beam_torque: f * lever,
        });
    }
    out
}

/// Result of one physics substep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: RobotState,
    pub beams: [BeamState; 2],
    pub contacts: Vec<ContactForce>,
}

impl StepResult {
    pub fn total_force(&self) -> Vec3 {
        self.contacts.iter().map(|c| c.on_body).sum()
    }
}

/// Advance one physics substep of length `dt` (semi-implicit Euler).
///
/// `input.y_des` / `input.z_des` are the lateral and vertical positions the
/// centre must reach at the end of this substep.
pub fn step(
    state: &RobotState,
    beams: &[BeamState; 2],
    input: &ControlInput,
    config: &WorldConfig,
    dt: f64,
) -> StepResult {
    let body = &config.body;
    let g = config.gravity;
    let origin = state.pose.position();
    let frame = BodyFrame::new(&state.pose, body);
    let omega_body = state.angular_velocity();
    let (kn, cn) = (config.contact.stiffness, config.contact.damping);

    let mut contacts = Vec::with_capacity(2);
    let mut next_beams = *beams;
    for (i, params) in config.beams.iter().enumerate() {
        let beam = beams[i];
        let inertia = params.hinge_inertia();
        // Trapezoidal rule for spring and damper (energy-neutral for the
        // free beam); gravity at a predicted midpoint; contact implicit.
        let gravity = params.gravity_moment(g) * (beam.theta + 0.5 * dt * beam.omega).sin();
        let rhs = inertia * beam.omega
            + dt * (-params.k * (beam.theta + 0.25 * dt * beam.omega)
                - 0.5 * params.damping * beam.omega
                + gravity);
        let lhs = inertia + 0.25 * dt * dt * params.k + 0.5 * dt * params.damping;
        let mut omega = rhs / lhs;
        if !frame.never_touches(params, BeamShape::Solid) {
            let w = frame.witness(beam.theta, params, BeamShape::Solid);
            if w.clearance < 0.0 {
                let depth = -w.clearance;
                let lever = lever_arm(w.beam_point, w.normal, config, i);
                let body_speed =
                    (state.velocity + omega_body.cross(&(w.beam_point - origin))).dot(&w.normal);
                // f = f0 - lever * (kn dt + cn) * omega_next
                let f0 = kn * (depth + dt * body_speed) + cn * body_speed;
                let coupling = kn * dt + cn;
                let omega_c = (rhs + dt * lever * f0) / (lhs + dt * lever * lever * coupling);
                let f = f0 - lever * coupling * omega_c;
                if f > 0.0 {
                    omega = omega_c;
                    contacts.push(ContactForce {
                        patch: ContactPatch {
                            point: w.beam_point,
                            normal: w.normal,
                            depth,
                            beam_index: i,
                        },
                        on_body: -w.normal * f,
                        beam_torque: f * lever,
                    });
                }
            }
        }
        let mut theta = beam.theta + 0.5 * dt * (beam.omega + omega);
        // The ground stops a beam lying flat.
        if theta > FRAC_PI_2 {
            theta = FRAC_PI_2;
            omega = omega.min(0.0);
        }
        next_beams[i] = BeamState { theta, omega };
    }

    let contact_force: Vec3 = contacts.iter().map(|c| c.on_body).sum();
    let contact_torque: Vec3 = contacts
        .iter()
        .map(|c| (c.patch.point - origin).cross(&c.on_body))
        .sum();

    // Translation: X is force driven, Y and Z reach their commands exactly.
    let accel_x = (input.force_x + contact_force.x) / body.mass;
    let vx = state.velocity.x + dt * accel_x;
    let vy = (input.y_des - state.pose.y) / dt;
    let vz = (input.z_des - state.pose.z) / dt;
    let accel = Vec3::new(
        accel_x,
        (vy - state.velocity.y) / dt,
        (vz - state.velocity.z) / dt,
    );

    // Gravity plus the inertial load of the accelerating centre, acting at the CoM.
    let rot = state.pose.rotation();
    let com_offset = rot * Vec3::new(0.0, 0.0, -body.h_c);
    let effective = (Vec3::new(0.0, 0.0, -g) - accel) * body.mass;
    let torque = contact_torque + com_offset.cross(&effective);

    let (alpha, beta) = (state.pose.alpha, state.pose.beta);
    let q_roll = torque.x + input.torque_roll;
    let q_pitch = torque.dot(&pitch_axis(alpha)) + input.torque_pitch;

    let parallel = body.mass * body.h_c * body.h_c;
    let i1 = body.inertia[0] + parallel;
    let i2 = body.inertia[1] + parallel;
    let i3 = body.inertia[2];
    let (sb, cb) = beta.sin_cos();
    let m_roll = i1 * cb * cb + i3 * sb * sb;
    let coupling = (i3 - i1) * sb * cb;
    let alpha_acc = (q_roll - 2.0 * coupling * state.alpha_rate * state.beta_rate) / m_roll;
    let beta_acc = (q_pitch + coupling * state.alpha_rate * state.alpha_rate) / i2;
    let alpha_rate = state.alpha_rate + dt * alpha_acc;
    let beta_rate = state.beta_rate + dt * beta_acc;

    let next = RobotState {
        pose: Pose {
            x: state.pose.x + dt * vx,
            y: input.y_des,
            z: input.z_des,
            alpha: alpha + dt * alpha_rate,
            beta: beta + dt * beta_rate,
        },
        velocity: Vec3::new(vx, vy, vz),
        alpha_rate,
        beta_rate,
    };
    StepResult {
        state: next,
        beams: next_beams,
        contacts,
    }
}

/// Kinetic energy of the two joints plus gravitational energy of the offset mass.
pub fn joint_energy(state: &RobotState, config: &WorldConfig) -> f64 {
    let body = &config.body;
    let parallel = body.mass * body.h_c * body.h_c;
    let (i1, i2, i3) = (
        body.inertia[0] + parallel,
        body.inertia[1] + parallel,
        body.inertia[2],
    );
    let (sb, cb) = state.pose.beta.sin_cos();
    let kinetic = 0.5 * (i1 * cb * cb + i3 * sb * sb) * state.alpha_rate.powi(2)
        + 0.5 * i2 * state.beta_rate.powi(2);
    let potential = body.mass * config.gravity * body.h_c * (1.0 - state.pose.alpha.cos() * cb);
    kinetic + potential
}

/// Spring, gravity and kinetic energy of one beam.
pub fn beam_energy(beam: &BeamState, i: usize, config: &WorldConfig) -> f64 {
    let p = &config.beams[i];
    0.5 * p.k * beam.theta.powi(2)
        + 0.5 * p.hinge_inertia() * beam.omega.powi(2)
        + p.gravity_moment(config.gravity) * beam.theta.cos()
}

/// Lateral triangle wave and vertical sine sum at time `t`.
pub fn oscillation_targets(
    t: f64,
    frequency: f64,
    lateral_amplitude: f64,
    vertical: &[SineComponent],
    height: f64,
) -> (f64, f64) {
    // Phase in [0, 1): rises 0 -> A over the first quarter, falls to -A, rises back.
    let phase = (t * frequency).rem_euclid(1.0);
    let tri = if phase < 0.25 {
        4.0 * phase
    } else if phase < 0.75 {
        2.0 - 4.0 * phase
    } else {
        4.0 * phase - 4.0
    };
    let z = height
        + vertical
            .iter()
            .map(|c| c.amplitude * (2.0 * PI * c.frequency * t + c.phase).sin())
            .sum::<f64>();
    (lateral_amplitude * tri, z)
}

/// What a strategy sees at each control step.
pub struct Observation<'a> {
    pub t: f64,
    pub state: &'a RobotState,
    pub beams: &'a [BeamState; 2],
    pub samples: &'a [ForceSample],
    pub poses: &'a [PoseSample],
    pub config: &'a WorldConfig,
}

/// Timestamps of the force-feedback pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Events {
    /// First detected contact (s).
    pub t_contact: Option<f64>,
    /// Start of active control (s).
    pub t_control: Option<f64>,
    /// Estimated stiffnesses, when an estimate was made.
    pub k_estimate: Option<[f64; 2]>,
}

/// A control policy driven by the episode loop.
pub trait Driver {
    fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput>;

    /// The strategy has nothing left to do once the target is reached.
    fn finished(&self, _t: f64) -> bool {
        true
    }

    /// A reference trajectory is being tracked at this step.
    fn tracking(&self) -> bool {
        false
    }

    fn events(&self) -> Events {
        Events::default()
    }

    /// End the episode early, e.g. once enough data has been collected.
    fn halt(&self, _t: f64) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Reached,
    Timeout,
    Flipped,
    Halted,
}

/// One control step of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: RobotState,
    pub beams: [BeamState; 2],
    pub input: ControlInput,
    /// Sensed contact force at the first substep of this control step.
    pub force: Vec3,
    pub tracking: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub dt_control: f64,
    pub rows: Vec<LogRow>,
    /// Sensor stream at the configured sampling rate.
    pub samples: Vec<ForceSample>,
    /// Pose at each sensor sample time.
    pub poses: Vec<PoseSample>,
    pub events: Events,
    pub termination: Termination,
    pub outcome: TraversalMode,
    pub energy_mj: f64,
}

impl EpisodeLog {
    pub fn final_state(&self) -> Option<&RobotState> {
        self.rows.last().map(|r| &r.state)
    }

    pub fn max_abs_pitch(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.state.pose.beta.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_roll(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.state.pose.alpha.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_contact_force(&self) -> f64 {
        self.rows.iter().map(|r| r.force.norm()).fold(0.0, f64::max)
    }
}

/// Integrate an episode under `driver` until the target is passed, the body
/// flips, or the timeout expires.
pub fn simulate(config: &WorldConfig, driver: &mut dyn Driver) -> Result<EpisodeLog> {
    let dt = config.dt_physics;
    let dt_c = config.dt_control;
    let n_sub = config.substeps();
    let per_sample = config.substeps_per_sample();
    let max_steps = (config.timeout / dt_c).round() as usize;

    let mut state = RobotState::start(config);
    let mut beams = [BeamState::default(); 2];
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut poses = Vec::new();
    let mut substep: usize = 0;
    let (mut y_prev, mut z_prev) = (state.pose.y, state.pose.z);
    let mut termination = Termination::Timeout;

    for k in 0..max_steps {
        let t = k as f64 * dt_c;
        let input = driver.control(&Observation {
            t,
            state: &state,
            beams: &beams,
            samples: &samples,
            poses: &poses,
            config,
        })?;
        if !input.is_finite() {
            return Err(Error::NonFinite {
                t,
                what: "control input",
            });
        }
        let row_state = state;
        let row_beams = beams;
        let mut row_force = Vec3::zeros();
        for j in 0..n_sub {
            let frac = (j + 1) as f64 / n_sub as f64;
            let sub_input = ControlInput {
                y_des: y_prev + frac * (input.y_des - y_prev),
                z_des: z_prev + frac * (input.z_des - z_prev),
                ..input
            };
            let out = step(&state, &beams, &sub_input, config, dt);
            let force = out.total_force();
            if j == 0 {
                row_force = force;
            }
            if substep.is_multiple_of(per_sample) {
                let ts = substep as f64 * dt;
                samples.push(ForceSample { t: ts, force });
                poses.push(PoseSample {
                    t: ts,
                    pose: state.pose,
                });
            }
            substep += 1;
            if !out.state.is_finite()
                || out
                    .beams
                    .iter()
                    .any(|b| !b.theta.is_finite() || !b.omega.is_finite())
            {
                return Err(Error::NonFinite {
                    t: substep as f64 * dt,
                    what: "state",
                });
            }
            state = out.state;
            beams = out.beams;
        }
        y_prev = input.y_des;
        z_prev = input.z_des;
        rows.push(LogRow {
            t,
            state: row_state,
            beams: row_beams,
            input,
            force: row_force,
            tracking: driver.tracking(),
        });
        if state.pose.is_flipped(config.classify.flip_angle) {
            termination = Termination::Flipped;
            break;
        }
        if state.pose.x >= config.x_target && driver.finished(t + dt_c) {
            termination = Termination::Reached;
            break;
        }
        if driver.halt(t + dt_c) {
            termination = Termination::Halted;
            break;
        }
    }

    let mut log = EpisodeLog {
        dt_control: dt_c,
        rows,
        samples,
        poses,
        events: driver.events(),
        termination,
        outcome: TraversalMode::Stuck,
        energy_mj: 0.0,
    };
    log.outcome = crate::experiments::classify_mode(&log, config);
    log.energy_mj = crate::experiments::energy_cost(&log);
    Ok(log)
}

/// CSV with one row per control step. Angles in radians, forces in N.
pub fn episode_csv(log: &EpisodeLog) -> String {
    let mut s = String::from("# beamsim episode v1\n");
    s.push_str("t,X,Y,Z,alpha,beta,theta1,theta2,Fx_sensed,Fy_sensed,Fz_sensed,u_Fx,u_t1,u_t2\n");
    for r in &log.rows {
        let p = &r.state.pose;
        s.push_str(&format!(
            "{:.4},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            r.t,
            p.x,
            p.y,
            p.z,
            p.alpha,
            p.beta,
            r.beams[0].theta,
            r.beams[1].theta,
            r.force.x,
            r.force.y,
            r.force.z,
            r.input.force_x,
            r.input.torque_roll,
            r.input.torque_pitch
        ));
    }
    s
}

/// Read back the sensed force and pose of every row of an episode CSV.
pub fn read_episode_csv(text: &str) -> Result<(Vec<ForceSample>, Vec<PoseSample>)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("episode CSV has no header".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format(format!("episode CSV lacks column `{name}`")))
    };
    let idx = [
        col("t")?,
        col("X")?,
        col("Y")?,
        col("Z")?,
        col("alpha")?,
        col("beta")?,
        col("Fx_sensed")?,
        col("Fy_sensed")?,
        col("Fz_sensed")?,
    ];
    let mut force = Vec::new();
    let mut poses = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let mut v = [0.0; 9];
        for (slot, &i) in v.iter_mut().zip(&idx) {
            *slot = fields
                .get(i)
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Format(format!(
                        "episode CSV row {}: bad or missing field {i}",
                        n + 1
                    ))
                })?;
        }
        force.push(ForceSample {
            t: v[0],
            force: Vec3::new(v[6], v[7], v[8]),
        });
        poses.push(PoseSample {
            t: v[0],
            pose: Pose::new(v[1], v[2], v[3], v[4], v[5]),
        });
    }
    Ok((force, poses))
}

/// Keep the rows nearest to each multiple of `period`, mimicking the force sensor.
pub fn resample(
    force: &[ForceSample],
    poses: &[PoseSample],
    period: f64,
) -> (Vec<ForceSample>, Vec<PoseSample>) {
    let mut fs = Vec::new();
    let mut ps = Vec::new();
    let Some(last) = force.last() else {
        return (fs, ps);
    };
    let mut k = 0usize;
    loop {
        let target = k as f64 * period;
        if target > last.t + 1e-9 {
            break;
        }
        let j = force.partition_point(|s| s.t < target);
        let nearest = match (j.checked_sub(1), force.get(j)) {
            (Some(i), Some(next)) if target - force[i].t < next.t - target => i,
            (_, Some(_)) => j,
            (Some(i), None) => i,
            (None, None) => break,
        };
        if fs
            .last()
            .is_none_or(|s: &ForceSample| s.t < force[nearest].t)
        {
            fs.push(force[nearest]);
            ps.push(poses[nearest]);
        }
        k += 1;
    }
    (fs, ps)
}

/// Episode summary written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub outcome: TraversalMode,
    pub termination: Termination,
    pub energy_mj: f64,
    pub t_c: Option<f64>,
    pub t_s: Option<f64>,
    pub k_estimate: Option<[f64; 2]>,
    pub max_pitch_deg: f64,
    pub max_roll_deg: f64,
    pub max_contact_force: f64,
    pub duration: f64,
    pub config_hash: String,
}

impl EpisodeSummary {
    pub fn new(log: &EpisodeLog, config: &WorldConfig) -> Self {
        Self {
            outcome: log.outcome,
            termination: log.termination,
            energy_mj: log.energy_mj,
            t_c: log.events.t_contact,
            t_s: log.events.t_control,
            k_estimate: log.events.k_estimate,
            max_pitch_deg: log.max_abs_pitch().to_degrees(),
            max_roll_deg: log.max_abs_roll().to_degrees(),
            max_contact_force: log.max_contact_force(),
            duration: log.rows.last().map_or(0.0, |r| r.t + log.dt_control),
            config_hash: config.hash(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn far_state(config: &WorldConfig) -> RobotState {
        RobotState {
            velocity: Vec3::zeros(),
            ..RobotState::start(config)
        }
    }

    fn hold(state: &RobotState) -> ControlInput {
        ControlInput {
            y_des: state.pose.y,
            z_des: state.pose.z,
            ..Default::default()
        }
    }

    #[test]
    fn flat_free_body_stays_flat() {
        let cfg = WorldConfig::default();
        let mut s = far_state(&cfg);
        let mut beams = [BeamState::default(); 2];
        for _ in 0..5000 {
            let out = step(&s, &beams, &hold(&s), &cfg, cfg.dt_physics);
            s = out.state;
            beams = out.beams;
        }
        assert_eq!(s.pose.alpha, 0.0);
        assert_eq!(s.pose.beta, 0.0);
    }

    #[test]
    fn beam_energy_conserved_without_damping() {
        let mut cfg = WorldConfig::default();
        cfg.beams[0].damping = 0.0;
        let s = far_state(&cfg);
        let mut beams = [
            BeamState {
                theta: 0.3,
                omega: 0.0,
            },
            BeamState::default(),
        ];
        let e0 = beam_energy(&beams[0], 0, &cfg);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            beams = step(&s, &beams, &hold(&s), &cfg, 2e-4).beams;
            worst = worst.max((beam_energy(&beams[0], 0, &cfg) - e0).abs() / e0);
        }
        assert!(worst < 0.005, "drift {worst}");
    }

    #[test]
    fn damped_beam_settles_upright() {
        let cfg = WorldConfig::default().with_stiffness(0.01, 0.01);
        let s = far_state(&cfg);
        let mut beams = [BeamState {
            theta: 0.3,
            omega: 0.0,
        }; 2];
        for _ in 0..50_000 {
            beams = step(&s, &beams, &hold(&s), &cfg, 2e-4).beams;
        }
        assert!(beams[0].theta.abs() < 1e-3, "{}", beams[0].theta);
        assert!(beams[0].theta >= -0.01);
    }

    #[test]
    fn free_joint_energy_conserved() {
        let cfg = WorldConfig::default();
        let mut s = far_state(&cfg);
        s.pose.alpha = 0.3;
        s.pose.beta = -0.2;
        s.alpha_rate = 0.5;
        let mut beams = [BeamState::default(); 2];
        let e0 = joint_energy(&s, &cfg);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let out = step(&s, &beams, &hold(&s), &cfg, 2e-4);
            s = out.state;
            beams = out.beams;
            worst = worst.max((joint_energy(&s, &cfg) - e0).abs() / e0);
        }
        assert!(worst < 0.01, "drift {worst}");
    }

    #[test]
    fn no_penetration_no_contact() {
        let cfg = WorldConfig::default();
        let s = far_state(&cfg);
        assert!(penalty_contact(&s, &[BeamState::default(); 2], &cfg).is_empty());
    }

    fn touching_state(cfg: &WorldConfig, depth: f64) -> RobotState {
        // Place the flat body so that it penetrates beam 1 by `depth`.
        let mut s = far_state(cfg);
        let frame = |x: f64| BodyFrame::new(&Pose::centred(x, 0.0, 0.0, &cfg.body), &cfg.body);
        let (mut lo, mut hi) = (-0.2, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if frame(mid).clearance(0.0, &cfg.beams[1], BeamShape::Solid) > -depth {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        s.pose.x = 0.5 * (lo + hi);
        s
    }

    #[test]
    fn linear_penalty_law() {
        let cfg = WorldConfig::default();
        let s = touching_state(&cfg, 2e-4);
        let contacts = penalty_contact(&s, &[BeamState::default(); 2], &cfg);
        assert_eq!(contacts.len(), 2);
        for c in &contacts {
            assert_relative_eq!(c.patch.depth, 2e-4, epsilon = 1e-12);
            assert_relative_eq!(c.on_body.norm(), 1.0, epsilon = 1e-8);
            // Frictionless: the force is along the body normal, pointing into the body.
            let n = c.patch.normal;
            assert!((c.on_body.normalize() + n).norm() < 1e-9);
            assert!(c.on_body.x < 0.0);
            assert!(c.beam_torque > 0.0);
        }
    }

    #[test]
    fn contact_pairs_are_equal_and_opposite() {
        let cfg = WorldConfig::default();
        let s = touching_state(&cfg, 1e-4);
        let beams = [BeamState::default(); 2];
        let out = step(&s, &beams, &hold(&s), &cfg, cfg.dt_physics);
        assert_eq!(out.contacts.len(), 2);
        for c in &out.contacts {
            assert_eq!(c.on_body + c.on_beam(), Vec3::zeros());
            let lever = (c.patch.point - hinge_point(&cfg, c.patch.beam_index))
                .cross(&c.on_beam())
                .y;
            assert_relative_eq!(lever, c.beam_torque, epsilon = 1e-12);
        }
    }

    #[test]
    fn triangle_wave_shape() {
        let (y, z) = oscillation_targets(0.0, 2.0, 1e-3, &[], 0.105);
        assert_eq!(y, 0.0);
        assert_eq!(z, 0.105);
        let (y, _) = oscillation_targets(1.0 / 8.0, 2.0, 1e-3, &[], 0.105);
        assert_relative_eq!(y, 1e-3, epsilon = 1e-15);
        let (y, _) = oscillation_targets(3.0 / 8.0, 2.0, 1e-3, &[], 0.105);
        assert_relative_eq!(y, -1e-3, epsilon = 1e-15);
    }

    struct Hold;

    impl Driver for Hold {
        fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput> {
            Ok(hold(obs.state))
        }
    }

    #[test]
    fn episode_csv_round_trip() {
        let mut cfg = WorldConfig::default();
        cfg.timeout = 0.1;
        let log = simulate(&cfg, &mut Hold).unwrap();
        let (force, poses) = read_episode_csv(&episode_csv(&log)).unwrap();
        assert_eq!(force.len(), log.rows.len());
        for (p, r) in poses.iter().zip(&log.rows) {
            assert!((p.pose.x - r.state.pose.x).abs() < 1e-9);
            assert!((p.t - r.t).abs() < 1e-9);
        }
        let (fs, _) = resample(&force, &poses, 0.025);
        let times: Vec<f64> = fs.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 4);
        assert!((times[1] - 0.024).abs() < 1e-9 || (times[1] - 0.026).abs() < 1e-9);
        assert!((times[2] - 0.05).abs() < 1e-9);
        assert!(read_episode_csv("t,X\n0,1\n").is_err());
    }

    #[test]
    fn vertical_profile_bounded() {
        let comps = crate::config::make_vertical_oscillation(6.0, 3);
        for i in 0..2000 {
            let (_, z) = oscillation_targets(i as f64 * 0.0137, 6.0, 0.0, &comps, 0.105);
            assert!((z - 0.105).abs() <= 0.015);
        }
    }
}
