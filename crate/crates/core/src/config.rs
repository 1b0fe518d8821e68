//! Physical parameters and scenario configuration.
//!
//! A configuration file is TOML. Every field is optional: absent values
//! fall back to [`WorldConfig::default`], which carries the reference robot
//! and beam setup. All quantities are SI (m, kg, s, N) and angles are radians.
//! See `docs/config.md` for an annotated example.

// Negated comparisons below are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of sine components in the vertical oscillation profile.
pub const VERTICAL_COMPONENTS: usize = 30;
/// Bound on each vertical component amplitude (m).
pub const VERTICAL_AMPLITUDE_MAX: f64 = 0.5e-3;

/// Ellipsoidal body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Fore-aft semi-axis (m).
    pub a: f64,
    /// Lateral semi-axis (m).
    pub b: f64,
    /// Vertical semi-axis (m).
    pub c: f64,
    /// Total mass (kg).
    pub mass: f64,
    /// Centre of mass offset below the geometric centre (m).
    pub h_c: f64,
    /// Principal moments of inertia about the centre of mass (kg m^2).
    pub inertia: [f64; 3],
    /// Nominal height of the geometric centre above ground (m).
    pub height: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            a: 0.11,
            b: 0.08,
            c: 0.03,
            mass: 1.0,
            h_c: 0.01,
            inertia: [1.0e-3, 3.5e-3, 5.0e-3],
            height: 0.105,
        }
    }
}

/// One torsion-spring beam. The hinge line lies on the ground along Y at X = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    /// Torsion stiffness (N m/rad).
    pub k: f64,
    /// Torsion damping (N m s/rad).
    pub damping: f64,
    /// Beam mass (kg).
    pub mass: f64,
    /// Height of the beam (m).
    pub length: f64,
    /// Extent along Y (m).
    pub width: f64,
    /// Extent along X when upright (m).
    pub thickness: f64,
    /// Lateral centre of the hinge line. Derived from the gap, never read from file.
    #[serde(skip)]
    pub y_hinge: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            k: 0.2,
            damping: 0.01,
            mass: 0.001,
            length: 0.155,
            width: 0.04,
            thickness: 0.01,
            y_hinge: 0.0,
        }
    }
}

impl BeamParams {
    /// Moment of inertia of the plate about its hinge.
    pub fn hinge_inertia(&self) -> f64 {
        self.mass * self.length * self.length / 3.0
            + self.mass * self.thickness * self.thickness / 12.0
    }

    /// Gravity torque coefficient `m g L / 2`.
    pub fn gravity_moment(&self, g: f64) -> f64 {
        0.5 * self.mass * g * self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Normal penalty stiffness (N/m).
    pub stiffness: f64,
    /// Normal penalty damping (N s/m).
    pub damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 5000.0,
            damping: 5.0,
        }
    }
}

/// Actuator saturation. Applied only when `enabled`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub enabled: bool,
    /// |F_x| bound (N).
    pub force_x: f64,
    /// |tau_roll| bound (N m).
    pub torque_roll: f64,
    /// |tau_pitch| bound (N m).
    pub torque_pitch: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            enabled: false,
            force_x: 1.0,
            torque_roll: 0.1,
            torque_pitch: 0.1,
        }
    }
}

/// One term `amplitude * sin(2 pi frequency t + phase)` of the vertical profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Body oscillation used as the estimation stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationSpec {
    pub enabled: bool,
    /// Lateral triangle-wave frequency (Hz).
    pub frequency: f64,
    /// Lateral triangle-wave amplitude (m).
    pub lateral_amplitude: f64,
    /// Vertical profile. Empty means "generate from the run seed".
    pub vertical: Vec<SineComponent>,
}

impl Default for OscillationSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            frequency: 2.0,
            lateral_amplitude: 1.0e-3,
            vertical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Force sampling rate (Hz).
    pub rate_hz: f64,
    /// Contact detection threshold on |F| (N).
    pub contact_threshold: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            rate_hz: 40.0,
            contact_threshold: 0.01,
        }
    }
}

impl SensorParams {
    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delays {
    /// Sensing window after first contact (s).
    pub sensing_time: f64,
    /// First contact to start of active control (s).
    pub sensorimotor: f64,
}

impl Default for Delays {
    fn default() -> Self {
        Self {
            sensing_time: 0.1,
            sensorimotor: 0.32,
        }
    }
}

/// PD gains of the tracking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp_x: f64,
    pub kd_x: f64,
    pub kp_roll: f64,
    pub kd_roll: f64,
    pub kp_pitch: f64,
    pub kd_pitch: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            kp_x: 100.0,
            kd_x: 20.0,
            kp_roll: 2.0,
            kd_roll: 0.4,
            kp_pitch: 2.0,
            kd_pitch: 0.4,
        }
    }
}

/// Landscape grid. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_step: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        let two_deg = 2.0_f64.to_radians();
        Self {
            x_min: -0.12,
            x_max: 0.12,
            x_step: 0.002,
            alpha_min: -PI / 2.0,
            alpha_max: PI / 2.0,
            alpha_step: two_deg,
            beta_min: -PI / 2.0,
            beta_max: PI / 2.0,
            beta_step: two_deg,
        }
    }
}

impl GridSpec {
    fn axis_len(min: f64, max: f64, step: f64) -> usize {
        ((max - min) / step).round() as usize + 1
    }

    pub fn nx(&self) -> usize {
        Self::axis_len(self.x_min, self.x_max, self.x_step)
    }

    pub fn nalpha(&self) -> usize {
        Self::axis_len(self.alpha_min, self.alpha_max, self.alpha_step)
    }

    pub fn nbeta(&self) -> usize {
        Self::axis_len(self.beta_min, self.beta_max, self.beta_step)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx(), self.nalpha(), self.nbeta()]
    }

    pub fn len(&self) -> usize {
        self.nx() * self.nalpha() * self.nbeta()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.x_step
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        self.alpha_min + i as f64 * self.alpha_step
    }

    pub fn beta_at(&self, i: usize) -> f64 {
        self.beta_min + i as f64 * self.beta_step
    }

    fn validate(&self) -> Result<()> {
        for (name, lo, hi, step) in [
            ("landscape.x", self.x_min, self.x_max, self.x_step),
            (
                "landscape.alpha",
                self.alpha_min,
                self.alpha_max,
                self.alpha_step,
            ),
            (
                "landscape.beta",
                self.beta_min,
                self.beta_max,
                self.beta_step,
            ),
        ] {
            if !(step > 0.0) {
                return Err(Error::invalid(format!("{name}_step"), "must be > 0"));
            }
            if !(hi >= lo) {
                return Err(Error::invalid(
                    format!("{name}_max"),
                    "must be >= the minimum",
                ));
            }
        }
        Ok(())
    }
}

/// Multi-start Nelder-Mead settings for stiffness estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub restarts: usize,
    /// Initial guesses are drawn uniformly from `[0, guess_max]` per beam.
    pub guess_max: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            restarts: 100,
            guess_max: 5.0,
            tolerance: 1e-4,
            max_iterations: 500,
        }
    }
}

/// Outcome classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// Roll magnitude during beam overlap that marks roll-mode traversal (rad).
    pub roll_mode_angle: f64,
    /// |alpha| or |beta| beyond this is a flip (rad).
    pub flip_angle: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            roll_mode_angle: 30.0_f64.to_radians(),
            flip_angle: PI / 2.0,
        }
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    /// Gap between the inner edges of the two beams (m).
    pub gap: f64,
    /// Commanded forward speed (m/s).
    pub forward_speed: f64,
    /// Gain of the fore-aft velocity servo (N s/m).
    pub velocity_gain: f64,
    /// Control period (s).
    pub dt_control: f64,
    /// Physics substep (s).
    pub dt_physics: f64,
    /// Episode timeout (s).
    pub timeout: f64,
    pub x_start: f64,
    pub x_target: f64,
    /// Angular rate for pure-rotation plan edges and avoidance ramps (rad/s).
    pub rotation_rate: f64,
    /// Extra roll beyond the minimal clearing angle in the avoidance strategy (rad).
    pub avoid_margin: f64,
    /// Width of the moving average applied to planned references (s).
    pub reference_window: f64,
    pub seed: u64,
    pub body: BodyParams,
    pub beams: [BeamParams; 2],
    pub contact: ContactParams,
    pub limits: Limits,
    pub oscillation: OscillationSpec,
    pub sensor: SensorParams,
    pub delays: Delays,
    pub gains: Gains,
    pub landscape: GridSpec,
    pub estimator: EstimatorParams,
    pub classify: ClassifyParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let mut cfg = Self {
            gravity: 9.81,
            gap: 0.138,
            forward_speed: 0.05,
            velocity_gain: 200.0,
            dt_control: 0.002,
            dt_physics: 2e-4,
            timeout: 60.0,
            x_start: -0.25,
            x_target: 0.1,
            rotation_rate: 1.0,
            avoid_margin: 0.0,
            reference_window: 0.2,
            seed: 0,
            body: BodyParams::default(),
            beams: [BeamParams::default(); 2],
            contact: ContactParams::default(),
            limits: Limits::default(),
            oscillation: OscillationSpec::default(),
            sensor: SensorParams::default(),
            delays: Delays::default(),
            gains: Gains::default(),
            landscape: GridSpec::default(),
            estimator: EstimatorParams::default(),
            classify: ClassifyParams::default(),
        };
        cfg.place_beams();
        cfg
    }
}

impl WorldConfig {
    /// Beam 0 sits at negative Y, beam 1 at positive Y.
    fn place_beams(&mut self) {
        for (i, beam) in self.beams.iter_mut().enumerate() {
            let side = if i == 0 { -1.0 } else { 1.0 };
            beam.y_hinge = side * (0.5 * self.gap + 0.5 * beam.width);
        }
    }

    pub fn with_stiffness(mut self, k1: f64, k2: f64) -> Self {
        self.beams[0].k = k1;
        self.beams[1].k = k2;
        self
    }

    /// Physics substeps per control step.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_physics).round() as usize
    }

    /// Physics substeps per sensor period.
    pub fn substeps_per_sample(&self) -> usize {
        (self.sensor.period() / self.dt_physics).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.body;
        if !(b.c > 0.0) {
            return Err(Error::invalid("body.c", "must be > 0"));
        }
        if !(b.b > b.c) {
            return Err(Error::invalid(
                "body.b",
                format!("must exceed body.c = {}", b.c),
            ));
        }
        if !(b.a > b.b) {
            return Err(Error::invalid(
                "body.a",
                format!("must exceed body.b = {}", b.b),
            ));
        }
        if !(b.mass > 0.0) {
            return Err(Error::invalid("body.mass", "must be > 0"));
        }
        if !(b.h_c > 0.0 && b.h_c < b.c) {
            return Err(Error::invalid(
                "body.h_c",
                format!("must lie in (0, {})", b.c),
            ));
        }
        if b.inertia.iter().any(|i| !(*i > 0.0)) {
            return Err(Error::invalid("body.inertia", "all moments must be > 0"));
        }
        if !(b.height > b.c) {
            return Err(Error::invalid(
                "body.height",
                format!("must exceed body.c = {}", b.c),
            ));
        }
        for (i, beam) in self.beams.iter().enumerate() {
            let f = |name: &str| format!("beams[{i}].{name}");
            if !(beam.k >= 0.0) {
                return Err(Error::invalid(f("k"), "must be >= 0"));
            }
            if !(beam.damping >= 0.0) {
                return Err(Error::invalid(f("damping"), "must be >= 0"));
            }
            if !(beam.mass > 0.0) {
                return Err(Error::invalid(f("mass"), "must be > 0"));
            }
            for (name, v) in [
                ("length", beam.length),
                ("width", beam.width),
                ("thickness", beam.thickness),
            ] {
                if !(v > 0.0) {
                    return Err(Error::invalid(f(name), "must be > 0"));
                }
            }
        }
        if !(self.gap > 0.0) {
            return Err(Error::invalid("gap", "must be > 0"));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::invalid("gravity", "must be > 0"));
        }
        if !(self.dt_physics > 0.0) {
            return Err(Error::invalid("dt_physics", "must be > 0"));
        }
        if !(self.dt_physics <= self.dt_control) {
            return Err(Error::invalid(
                "dt_physics",
                format!("must not exceed dt_control = {}", self.dt_control),
            ));
        }
        let n = self.substeps() as f64;
        if (n * self.dt_physics - self.dt_control).abs() > 1e-12 {
            return Err(Error::invalid(
                "dt_control",
                "must be an integer multiple of dt_physics (within 1e-12 s)",
            ));
        }
        if !(self.sensor.rate_hz > 0.0) {
            return Err(Error::invalid("sensor.rate_hz", "must be > 0"));
        }
        let m = self.substeps_per_sample() as f64;
        if m < 1.0 || (m * self.dt_physics - self.sensor.period()).abs() > 1e-12 {
            return Err(Error::invalid(
                "sensor.rate_hz",
                "sampling period must be an integer multiple of dt_physics",
            ));
        }
        if !(self.sensor.contact_threshold >= 0.0) {
            return Err(Error::invalid("sensor.contact_threshold", "must be >= 0"));
        }
        if !(self.delays.sensing_time > 0.0) {
            return Err(Error::invalid("delays.sensing_time", "must be > 0"));
        }
        if !(self.delays.sensorimotor >= self.delays.sensing_time) {
            return Err(Error::invalid(
                "delays.sensorimotor",
                format!(
                    "must be >= delays.sensing_time = {}",
                    self.delays.sensing_time
                ),
            ));
        }
        if !(self.forward_speed > 0.0) {
            return Err(Error::invalid("forward_speed", "must be > 0"));
        }
        if !(self.velocity_gain > 0.0) {
            return Err(Error::invalid("velocity_gain", "must be > 0"));
        }
        if !(self.reference_window >= 0.0) {
            return Err(Error::invalid("reference_window", "must be >= 0"));
        }
        if !(self.rotation_rate > 0.0) {
            return Err(Error::invalid("rotation_rate", "must be > 0"));
        }
        if !(self.x_target > self.x_start) {
            return Err(Error::invalid("x_target", "must exceed x_start"));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::invalid("timeout", "must be > 0"));
        }
        let g = &self.gains;
        for (name, v) in [
            ("gains.kp_x", g.kp_x),
            ("gains.kd_x", g.kd_x),
            ("gains.kp_roll", g.kp_roll),
            ("gains.kd_roll", g.kd_roll),
            ("gains.kp_pitch", g.kp_pitch),
            ("gains.kd_pitch", g.kd_pitch),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        let lim = &self.limits;
        for (name, v) in [
            ("limits.force_x", lim.force_x),
            ("limits.torque_roll", lim.torque_roll),
            ("limits.torque_pitch", lim.torque_pitch),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        self.validate_oscillation()?;
        self.landscape.validate()?;
        if self.estimator.restarts == 0 {
            return Err(Error::invalid("estimator.restarts", "must be >= 1"));
        }
        if !(self.estimator.guess_max > 0.0) {
            return Err(Error::invalid("estimator.guess_max", "must be > 0"));
        }
        Ok(())
    }

    fn validate_oscillation(&self) -> Result<()> {
        let osc = &self.oscillation;
        if !(osc.frequency > 0.0) {
            return Err(Error::invalid("oscillation.frequency", "must be > 0"));
        }
        if !(osc.lateral_amplitude >= 0.0) {
            return Err(Error::invalid(
                "oscillation.lateral_amplitude",
                "must be >= 0",
            ));
        }
        if osc.vertical.is_empty() {
            return Ok(());
        }
        if osc.vertical.len() != VERTICAL_COMPONENTS {
            return Err(Error::invalid(
                "oscillation.vertical",
                format!("must hold exactly {VERTICAL_COMPONENTS} components"),
            ));
        }
        for (i, comp) in osc.vertical.iter().enumerate() {
            if comp.amplitude.abs() > VERTICAL_AMPLITUDE_MAX + 1e-15 {
                return Err(Error::invalid(
                    format!("oscillation.vertical[{i}].amplitude"),
                    "must lie within [-0.5, 0.5] mm",
                ));
            }
            let expected = (i + 1) as f64 * osc.frequency / 50.0;
            if (comp.frequency - expected).abs() > 1e-9 {
                return Err(Error::invalid(
                    format!("oscillation.vertical[{i}].frequency"),
                    format!("must equal {expected} Hz"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Short stable digest of the serialized config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Vertical profile for a run: the configured one, or one generated from `seed`.
    pub fn vertical_profile(&self, seed: u64) -> Vec<SineComponent> {
        if self.oscillation.vertical.is_empty() {
            make_vertical_oscillation(self.oscillation.frequency, seed)
        } else {
            self.oscillation.vertical.clone()
        }
    }
}

/// Thirty sine components with seeded uniform amplitudes in [-0.5, 0.5] mm,
/// frequencies `i f / 50` and uniform phases in [0, 2 pi).
pub fn make_vertical_oscillation(f: f64, seed: u64) -> Vec<SineComponent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=VERTICAL_COMPONENTS)
        .map(|i| SineComponent {
            amplitude: rng.gen_range(-VERTICAL_AMPLITUDE_MAX..=VERTICAL_AMPLITUDE_MAX),
            frequency: i as f64 * f / 50.0,
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect()
}

/// Parse a config from TOML text, apply `key=value` overrides and validate.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<WorldConfig> {
    let file: toml::Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut merged =
        toml::Value::try_from(WorldConfig::default()).map_err(|e| Error::Parse(e.to_string()))?;
    merge(&mut merged, file);
    for ov in overrides {
        apply_override(&mut merged, ov)?;
    }
    let mut cfg: WorldConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    cfg.place_beams();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<WorldConfig> {
    load_config_with(path, &[])
}

pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<WorldConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, overrides)
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        // Arrays of tables merge element-wise so `[[beams]] k = 0.5` only touches beam 0.
        (toml::Value::Array(b), toml::Value::Array(o))
            if o.iter().all(|v| v.is_table())
                && b.iter().all(|v| v.is_table())
                && !o.is_empty() =>
        {
            for (i, v) in o.into_iter().enumerate() {
                if i < b.len() {
                    merge(&mut b[i], v);
                } else {
                    b.push(v);
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply one `dotted.key=value` override. Array elements are addressed by index.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    if !t.contains_key(*part) {
                        return Err(Error::Parse(format!("unknown config key `{key}`")));
                    }
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*part)
                    .ok_or_else(|| Error::Parse(format!("unknown config key `{key}`")))?
            }
            toml::Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Parse(format!("`{part}` in `{key}` is not an index")))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    Error::Parse(format!("index {idx} out of range ({len}) in `{key}`"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Parse(format!("`{key}` does not name a table"))),
        };
    }
    Err(Error::Parse(format!("empty override key in `{spec}`")))
}
