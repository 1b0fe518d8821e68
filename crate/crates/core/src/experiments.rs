//! Metrics, outcome classification, batch sweeps and canned reproductions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::controller::{detect_contact, FeedforwardDriver, Strategy, TraversalMode};
use crate::error::{Error, Result};
use crate::estimator::{
    aligned_window, corrupt_position, estimate_stiffness, Corruption, EstimateResult,
};
use crate::sim::{simulate, ControlInput, Driver, EpisodeLog, Observation, Termination};

/// Actuator energy split into the fore-aft channel and the two rotation channels (mJ).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyParts {
    pub force_x: f64,
    pub torque: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.force_x + self.torque
    }
}

/// Positive actuator work per channel, summed over control steps.
pub fn energy_parts(log: &EpisodeLog) -> EnergyParts {
    let dt = log.dt_control;
    let mut parts = EnergyParts::default();
    for r in &log.rows {
        parts.force_x += (r.input.force_x * r.state.velocity.x).max(0.0) * dt;
        parts.torque += ((r.input.torque_roll * r.state.alpha_rate).max(0.0)
            + (r.input.torque_pitch * r.state.beta_rate).max(0.0))
            * dt;
    }
    EnergyParts {
        force_x: parts.force_x * 1e3,
        torque: parts.torque * 1e3,
    }
}

/// Total positive actuator work in mJ.
pub fn energy_cost(log: &EpisodeLog) -> f64 {
    energy_parts(log).total()
}

/// Overlap of the body with the beams along X.
fn over_beams(x: f64, config: &WorldConfig) -> bool {
    x.abs() <= config.body.a + 0.5 * config.beams[0].thickness
}

pub fn classify_mode(log: &EpisodeLog, config: &WorldConfig) -> TraversalMode {
    if log.termination == Termination::Flipped {
        return TraversalMode::Flipped;
    }
    if log.termination != Termination::Reached {
        return TraversalMode::Stuck;
    }
    let max_roll = log
        .rows
        .iter()
        .filter(|r| over_beams(r.state.pose.x, config))
        .map(|r| r.state.pose.alpha.abs())
        .fold(0.0, f64::max);
    if max_roll >= config.classify.roll_mode_angle {
        TraversalMode::TraversedRoll
    } else {
        TraversalMode::TraversedPitch
    }
}

/// Pushes forward with oscillation and stops once the sensing window has been recorded.
struct SensingDriver {
    inner: FeedforwardDriver,
    sensing_time: f64,
    threshold: f64,
    t_c: Option<f64>,
    period: f64,
}

impl Driver for SensingDriver {
    fn control(&mut self, obs: &Observation<'_>) -> Result<ControlInput> {
        if self.t_c.is_none() {
            self.t_c = detect_contact(obs.samples, self.threshold);
        }
        self.inner.control(obs)
    }

    fn halt(&self, t: f64) -> bool {
        self.t_c
            .is_some_and(|t_c| t > t_c + self.sensing_time + self.period)
    }
}

/// One estimation trial: push into the beams while oscillating, then fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationTrial {
    pub t_c: f64,
    pub estimate: EstimateResult,
    pub truth: [f64; 2],
}

impl EstimationTrial {
    pub fn relative_errors(&self) -> [f64; 2] {
        self.estimate.relative_errors(self.truth)
    }

    pub fn mean_relative_error(&self) -> f64 {
        self.estimate.mean_relative_error(self.truth)
    }
}

pub fn run_estimation_trial(
    config: &WorldConfig,
    sensing_time: f64,
    corruption: Option<Corruption>,
    seed: u64,
) -> Result<EstimationTrial> {
    let mut driver = SensingDriver {
        inner: FeedforwardDriver::new(config, false, seed),
        sensing_time,
        threshold: config.sensor.contact_threshold,
        t_c: None,
        period: config.sensor.period(),
    };
    let log = simulate(config, &mut driver)?;
    let t_c = driver
        .t_c
        .ok_or_else(|| Error::Planning("no contact detected during the estimation run".into()))?;
    let (force, poses) = aligned_window(&log.samples, &log.poses, t_c, t_c + sensing_time);
    let poses = match corruption {
        Some(mode) => corrupt_position(&poses, mode),
        None => poses,
    };
    Ok(EstimationTrial {
        t_c,
        estimate: estimate_stiffness(&force, &poses, config, seed),
        truth: [config.beams[0].k, config.beams[1].k],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", rename_all = "snake_case")]
pub enum SweepCell {
    /// Lateral oscillation frequency (Hz).
    Frequency { value: f64 },
    /// Lateral oscillation amplitude (m).
    Amplitude { value: f64 },
    /// Sensing window (s).
    SensingTime { value: f64 },
    /// Sensorimotor delay for force feedback at the base stiffness (s).
    Delay { value: f64 },
    /// Strategy name and shared beam stiffness.
    Strategy { name: String, k: f64 },
}

impl SweepCell {
    pub fn key(&self) -> String {
        match self {
            SweepCell::Frequency { value } => format!("frequency={value}Hz"),
            SweepCell::Amplitude { value } => format!("amplitude={}mm", value * 1e3),
            SweepCell::SensingTime { value } => format!("sensing_time={}ms", (value * 1e3).round()),
            SweepCell::Delay { value } => format!("delay={}ms", (value * 1e3).round()),
            SweepCell::Strategy { name, k } => format!("{name}@k={k}"),
        }
    }

    fn is_estimation(&self) -> bool {
        matches!(
            self,
            SweepCell::Frequency { .. }
                | SweepCell::Amplitude { .. }
                | SweepCell::SensingTime { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub cells: Vec<SweepCell>,
    pub trials: usize,
    pub seed_base: u64,
    /// Replace sensed Y by zero before estimating.
    pub corrupt_y: bool,
    /// Sensing window for estimation cells that do not set their own (s).
    pub sensing_time: f64,
    pub base: WorldConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::invalid("sweep.cells", "need at least one value"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("sweep.trials", "must be >= 1"));
        }
        self.base.validate()
    }

    /// Config and sensing window of one estimation cell.
    fn estimation_setup(&self, cell: &SweepCell) -> (WorldConfig, f64) {
        let mut cfg = self.base.clone();
        cfg.oscillation.enabled = true;
        let mut ts = self.sensing_time;
        match cell {
            SweepCell::Frequency { value } => cfg.oscillation.frequency = *value,
            SweepCell::Amplitude { value } => cfg.oscillation.lateral_amplitude = *value,
            SweepCell::SensingTime { value } => ts = *value,
            _ => {}
        }
        (cfg, ts)
    }
}

/// One trial of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub cell: String,
    pub trial: usize,
    pub seed: u64,
    pub outcome: Option<TraversalMode>,
    pub energy_mj: Option<f64>,
    pub energy_fx_mj: Option<f64>,
    pub energy_torque_mj: Option<f64>,
    pub k_hat: Option<[f64; 2]>,
    pub rel_error: Option<[f64; 2]>,
    pub error: Option<String>,
}

/// Per-cell aggregates over successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub trials: usize,
    pub failures: usize,
    pub energy_mean: Option<f64>,
    pub energy_var: Option<f64>,
    pub energy_fx_mean: Option<f64>,
    pub energy_torque_mean: Option<f64>,
    pub k_hat_mean: Option<[f64; 2]>,
    pub rel_error_mean: Option<[f64; 2]>,
    /// Mean over trials of the average of the two relative errors.
    pub mean_rel_error: Option<f64>,
    pub mean_rel_error_var: Option<f64>,
    /// Most frequent outcome, ties broken by enum order.
    pub outcome: Option<TraversalMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec_name: String,
    pub rows: Vec<MetricsRow>,
    pub cells: Vec<CellSummary>,
}

fn mean_var(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var))
}

fn run_cell(spec: &SweepSpec, cell: &SweepCell, trial: usize) -> MetricsRow {
    let seed = spec.seed_base + trial as u64;
    let mut row = MetricsRow {
        cell: cell.key(),
        trial,
        seed,
        outcome: None,
        energy_mj: None,
        energy_fx_mj: None,
        energy_torque_mj: None,
        k_hat: None,
        rel_error: None,
        error: None,
    };
    let result: Result<()> = (|| {
        if cell.is_estimation() {
            let (cfg, ts) = spec.estimation_setup(cell);
            let corruption = spec.corrupt_y.then_some(Corruption::YZero);
            let trial = run_estimation_trial(&cfg, ts, corruption, seed)?;
            row.k_hat = Some(trial.estimate.k);
            row.rel_error = Some(trial.relative_errors());
            return Ok(());
        }
        let (cfg, strategy) = match cell {
            SweepCell::Delay { value } => {
                let mut cfg = spec.base.clone();
                cfg.delays.sensorimotor = *value;
                let s = Strategy::parse("force-feedback", &cfg)?;
                (cfg, s)
            }
            SweepCell::Strategy { name, k } => {
                let cfg = spec.base.clone().with_stiffness(*k, *k);
                let s = Strategy::parse(name, &cfg)?;
                (cfg, s)
            }
            _ => unreachable!(),
        };
        let log = crate::controller::run_strategy(&strategy, &cfg, seed)?;
        let parts = energy_parts(&log);
        row.outcome = Some(log.outcome);
        row.energy_mj = Some(log.energy_mj);
        row.energy_fx_mj = Some(parts.force_x);
        row.energy_torque_mj = Some(parts.torque);
        if let (Some(k), true) = (log.events.k_estimate, cfg.beams[0].k > 0.0) {
            row.k_hat = Some(k);
            row.rel_error = Some([
                (k[0] - cfg.beams[0].k).abs() / cfg.beams[0].k,
                (k[1] - cfg.beams[1].k).abs() / cfg.beams[1].k,
            ]);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn summarize(cell: &SweepCell, rows: &[MetricsRow]) -> CellSummary {
    let ok: Vec<&MetricsRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let collect = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Vec<f64> {
        ok.iter().filter_map(|r| f(r)).collect()
    };
    let energy = mean_var(&collect(&|r| r.energy_mj));
    let fx = mean_var(&collect(&|r| r.energy_fx_mj));
    let tq = mean_var(&collect(&|r| r.energy_torque_mj));
    let k0 = mean_var(&collect(&|r| r.k_hat.map(|k| k[0])));
    let k1 = mean_var(&collect(&|r| r.k_hat.map(|k| k[1])));
    let e0 = mean_var(&collect(&|r| r.rel_error.map(|e| e[0])));
    let e1 = mean_var(&collect(&|r| r.rel_error.map(|e| e[1])));
    let em = mean_var(&collect(&|r| r.rel_error.map(|e| 0.5 * (e[0] + e[1]))));
    let mut counts: Vec<(TraversalMode, usize)> = Vec::new();
    for m in ok.iter().filter_map(|r| r.outcome) {
        match counts.iter_mut().find(|(c, _)| *c == m) {
            Some(slot) => slot.1 += 1,
            None => counts.push((m, 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    CellSummary {
        cell: cell.key(),
        trials: rows.len(),
        failures: rows.len() - ok.len(),
        energy_mean: energy.map(|m| m.0),
        energy_var: energy.map(|m| m.1),
        energy_fx_mean: fx.map(|m| m.0),
        energy_torque_mean: tq.map(|m| m.0),
        k_hat_mean: k0.zip(k1).map(|(a, b)| [a.0, b.0]),
        rel_error_mean: e0.zip(e1).map(|(a, b)| [a.0, b.0]),
        mean_rel_error: em.map(|m| m.0),
        mean_rel_error_var: em.map(|m| m.1),
        outcome: counts.first().map(|c| c.0),
    }
}

/// Run every (cell, trial) pair with seeds `seed_base + trial`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let rows: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|&(c, t)| run_cell(spec, &spec.cells[c], t))
        .collect();
    let cells = spec
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| summarize(cell, &rows[c * spec.trials..(c + 1) * spec.trials]))
        .collect();
    Ok(SweepResult {
        spec_name: spec.name.clone(),
        rows,
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

impl SweepResult {
    /// Per-trial rows followed by per-cell aggregate rows (`trial` = `mean`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# beamsim sweep v1\n");
        s.push_str("cell,trial,seed,outcome,energy_mJ,energy_Fx_mJ,energy_T_mJ,k1_hat,k2_hat,e_k1,e_k2,e_mean,e_mean_var,energy_var,error\n");
        for r in &self.rows {
            let k = r
                .k_hat
                .map(|k| (Some(k[0]), Some(k[1])))
                .unwrap_or((None, None));
            let e = r
                .rel_error
                .map(|e| (Some(e[0]), Some(e[1])))
                .unwrap_or((None, None));
            let em = r.rel_error.map(|e| 0.5 * (e[0] + e[1]));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},,,{}",
                r.cell,
                r.trial,
                r.seed,
                r.outcome.map_or("", |o| o.as_str()),
                opt(r.energy_mj),
                opt(r.energy_fx_mj),
                opt(r.energy_torque_mj),
                opt(k.0),
                opt(k.1),
                opt(e.0),
                opt(e.1),
                opt(em),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        for c in &self.cells {
            let k = c
                .k_hat_mean
                .map(|k| (Some(k[0]), Some(k[1])))
                .unwrap_or((None, None));
            let e = c
                .rel_error_mean
                .map(|e| (Some(e[0]), Some(e[1])))
                .unwrap_or((None, None));
            let _ = writeln!(
                s,
                "{},mean,,{},{},{},{},{},{},{},{},{},{},{},{}",
                c.cell,
                c.outcome.map_or("", |o| o.as_str()),
                opt(c.energy_mean),
                opt(c.energy_fx_mean),
                opt(c.energy_torque_mean),
                opt(k.0),
                opt(k.1),
                opt(e.0),
                opt(e.1),
                opt(c.mean_rel_error),
                opt(c.mean_rel_error_var),
                opt(c.energy_var),
                if c.failures > 0 {
                    format!("{} failed", c.failures)
                } else {
                    String::new()
                }
            );
        }
        s
    }

    pub fn cell(&self, key: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == key)
    }
}

/// Canned sweep definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reproduction {
    Table1,
    Table2,
    Table3,
    Fig6,
    Fig8,
    StrategyTable,
}

impl Reproduction {
    pub const ALL: [Reproduction; 6] = [
        Reproduction::Table1,
        Reproduction::Table2,
        Reproduction::Table3,
        Reproduction::Fig6,
        Reproduction::Fig8,
        Reproduction::StrategyTable,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == name)
            .ok_or_else(|| Error::invalid("reproduce", format!("unknown target `{name}`")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reproduction::Table1 => "table1",
            Reproduction::Table2 => "table2",
            Reproduction::Table3 => "table3",
            Reproduction::Fig6 => "fig6",
            Reproduction::Fig8 => "fig8",
            Reproduction::StrategyTable => "strategy-table",
        }
    }

    /// Sweep for this target, built on `base`.
    pub fn spec(&self, base: &WorldConfig, trials: usize, seed_base: u64) -> SweepSpec {
        let mut cfg = base.clone();
        let estimation_k = 0.5;
        let mut corrupt_y = false;
        let cells = match self {
            Reproduction::Table1 => {
                cfg = cfg.with_stiffness(estimation_k, estimation_k);
                cfg.oscillation.lateral_amplitude = 1e-3;
                [2.0, 4.0, 6.0]
                    .map(|value| SweepCell::Frequency { value })
                    .to_vec()
            }
            Reproduction::Table2 => {
                cfg = cfg.with_stiffness(estimation_k, estimation_k);
                cfg.oscillation.frequency = 2.0;
                [1e-3, 2e-3, 3e-3]
                    .map(|value| SweepCell::Amplitude { value })
                    .to_vec()
            }
            Reproduction::Table3 => {
                cfg = cfg.with_stiffness(estimation_k, estimation_k);
                cfg.oscillation.frequency = 2.0;
                cfg.oscillation.lateral_amplitude = 1e-3;
                [0.025, 0.05, 0.1, 0.2]
                    .map(|value| SweepCell::SensingTime { value })
                    .to_vec()
            }
            Reproduction::Fig6 => {
                cfg = cfg.with_stiffness(estimation_k, estimation_k);
                cfg.oscillation.frequency = 6.0;
                corrupt_y = true;
                [1e-3, 2e-3, 3e-3]
                    .map(|value| SweepCell::Amplitude { value })
                    .to_vec()
            }
            Reproduction::Fig8 => {
                cfg = cfg.with_stiffness(0.2, 0.2);
                [0.32, 0.48, 0.64]
                    .map(|value| SweepCell::Delay { value })
                    .to_vec()
            }
            Reproduction::StrategyTable => ["ff", "ff-limited", "avoid", "force-feedback"]
                .iter()
                .flat_map(|name| {
                    [0.01, 0.2].map(|k| SweepCell::Strategy {
                        name: name.to_string(),
                        k,
                    })
                })
                .collect(),
        };
        SweepSpec {
            name: self.name().to_string(),
            cells,
            trials,
            seed_base,
            corrupt_y,
            sensing_time: 0.2,
            base: cfg,
        }
    }

    /// Reference values to print next to the obtained ones: (cell, quantity, value, tolerance).
    fn reference(&self) -> Vec<(&'static str, &'static str, f64, &'static str)> {
        match self {
            Reproduction::Table1 => vec![
                ("frequency=2Hz", "e_mean", 0.0435, "< 0.10"),
                ("frequency=4Hz", "e_mean", 0.047, "< 0.10"),
                ("frequency=6Hz", "e_mean", 0.048, "< 0.10"),
            ],
            Reproduction::Table2 => vec![
                ("amplitude=1mm", "e_mean", 0.0435, "< 0.10"),
                ("amplitude=2mm", "e_mean", 0.041, "< 0.10"),
                ("amplitude=3mm", "e_mean", 0.0395, "< 0.10"),
            ],
            Reproduction::Table3 => vec![
                ("sensing_time=25ms", "e_mean", 0.148, "> value at 100 ms"),
                ("sensing_time=50ms", "e_mean", 0.04, ""),
                ("sensing_time=100ms", "e_mean", 0.025, ""),
                ("sensing_time=200ms", "e_mean", 0.038, ""),
            ],
            Reproduction::Fig6 => vec![
                ("amplitude=1mm", "e_mean", f64::NAN, "non-decreasing"),
                ("amplitude=2mm", "e_mean", f64::NAN, "non-decreasing"),
                ("amplitude=3mm", "e_mean", f64::NAN, "< 0.15"),
            ],
            Reproduction::Fig8 => vec![
                ("delay=320ms", "energy_mJ", f64::NAN, "non-decreasing"),
                ("delay=480ms", "energy_mJ", f64::NAN, "non-decreasing"),
                ("delay=640ms", "energy_mJ", f64::NAN, "non-decreasing"),
            ],
            Reproduction::StrategyTable => vec![
                ("ff@k=0.01", "energy_mJ", 14.8, "traversed_pitch"),
                ("ff@k=0.2", "energy_mJ", 185.2, "traversed"),
                ("ff-limited@k=0.01", "energy_mJ", f64::NAN, "traversed"),
                ("ff-limited@k=0.2", "energy_mJ", f64::NAN, "stuck"),
                ("avoid@k=0.01", "energy_mJ", f64::NAN, "traversed_roll"),
                ("avoid@k=0.2", "energy_mJ", 35.8, "traversed_roll"),
                (
                    "force-feedback@k=0.01",
                    "energy_mJ",
                    15.0,
                    "traversed_pitch",
                ),
                ("force-feedback@k=0.2", "energy_mJ", 17.4, "traversed_roll"),
            ],
        }
    }

    /// Side-by-side text of reference and obtained values.
    pub fn report(&self, result: &SweepResult) -> String {
        let mut s = format!(
            "{}\n{:<24} {:<10} {:>10} {:>10} {:>16}  {}\n",
            self.name(),
            "cell",
            "quantity",
            "reference",
            "obtained",
            "outcome",
            "expectation"
        );
        for (cell, quantity, value, expect) in self.reference() {
            let c = result.cell(cell);
            let obtained = c.and_then(|c| match quantity {
                "energy_mJ" => c.energy_mean,
                _ => c.mean_rel_error,
            });
            let _ = writeln!(
                s,
                "{:<24} {:<10} {:>10} {:>10} {:>16}  {}",
                cell,
                quantity,
                if value.is_nan() {
                    "-".to_string()
                } else {
                    format!("{value:.4}")
                },
                obtained.map_or("-".to_string(), |v| format!("{v:.4}")),
                c.and_then(|c| c.outcome).map_or("-", |o| o.as_str()),
                expect
            );
        }
        s
    }
}

/// Run a canned reproduction and write `<name>.csv` and `<name>.txt` into `out`.
pub fn reproduce(
    target: Reproduction,
    base: &WorldConfig,
    trials: usize,
    seed_base: u64,
    out: &Path,
) -> Result<(SweepResult, Vec<PathBuf>)> {
    let spec = target.spec(base, trials, seed_base);
    let result = run_sweep(&spec)?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let csv = out.join(format!("{}.csv", target.name()));
    let txt = out.join(format!("{}.txt", target.name()));
    for (path, body) in [(&csv, result.to_csv()), (&txt, target.report(&result))] {
        std::fs::write(path, body).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok((result, vec![csv, txt]))
}
