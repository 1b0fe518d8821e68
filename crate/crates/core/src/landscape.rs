//! Potential energy landscape over (X, alpha, beta), locomotor mode barriers,
//! and the minimal roll that slips the body through the gap without contact.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BodyParams, GridSpec, WorldConfig};
use crate::error::{Error, Result};
use crate::geometry::{BeamShape, BodyFrame, Pose};

/// Height of the centre of mass for centre height `z_o`.
pub fn com_height(z_o: f64, alpha: f64, beta: f64, body: &BodyParams) -> f64 {
    z_o - body.h_c * alpha.cos() * beta.cos()
}

/// System potential energy at a centred pose: body gravity plus beam gravity and
/// elastic energy, with each beam at its required mid-plane deflection.
/// Returns `+inf` when a beam cannot clear the body.
pub fn energy_at(x: f64, alpha: f64, beta: f64, k1: f64, k2: f64, config: &WorldConfig) -> f64 {
    let body = &config.body;
    let g = config.gravity;
    let pose = Pose::centred(x, alpha, beta, body);
    let frame = BodyFrame::new(&pose, body);
    let mut energy = body.mass * g * com_height(body.height, alpha, beta, body);
    for (beam, k) in config.beams.iter().zip([k1, k2]) {
        let d = frame.required_deflection(beam, BeamShape::MidPlane);
        if d.over_deflected {
            return f64::INFINITY;
        }
        energy += beam.gravity_moment(g) * d.theta.cos() + 0.5 * k * d.theta * d.theta;
    }
    energy
}

/// Dense energy grid, X-major: index = (ix * n_alpha + ia) * n_beta + ib.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLandscape {
    pub spec: GridSpec,
    pub k: [f64; 2],
    pub values: Vec<f64>,
}

/// JSON sidecar describing a landscape binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandscapeHeader {
    pub spec: GridSpec,
    pub dims: [usize; 3],
    pub k1: f64,
    pub k2: f64,
    pub min_energy: f64,
    pub max_finite_energy: f64,
    pub infinite_cells: usize,
    pub layout: String,
}

impl EnergyLandscape {
    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims()
    }

    pub fn index(&self, ix: usize, ia: usize, ib: usize) -> usize {
        let [_, na, nb] = self.dims();
        (ix * na + ia) * nb + ib
    }

    pub fn get(&self, ix: usize, ia: usize, ib: usize) -> f64 {
        self.values[self.index(ix, ia, ib)]
    }

    pub fn header(&self) -> LandscapeHeader {
        let finite = self.values.iter().copied().filter(|v| v.is_finite());
        let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        LandscapeHeader {
            spec: self.spec,
            dims: self.dims(),
            k1: self.k[0],
            k2: self.k[1],
            min_energy: min,
            max_finite_energy: max,
            infinite_cells: self.values.iter().filter(|v| !v.is_finite()).count(),
            layout: "f64 little-endian, index = (ix * n_alpha + ia) * n_beta + ib".into(),
        }
    }

    /// Writes `<stem>.json` and `<stem>.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Io {
            path: stem.display().to_string(),
            source: e,
        };
        let header = serde_json::to_string_pretty(&self.header())
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(stem.with_extension("json"), header).map_err(io)?;
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin")).map_err(io)?);
        for v in &self.values {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let io = |e: std::io::Error| Error::Io {
            path: stem.display().to_string(),
            source: e,
        };
        let text = std::fs::read_to_string(stem.with_extension("json")).map_err(io)?;
        let header: LandscapeHeader =
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        let mut bytes = Vec::new();
        std::fs::File::open(stem.with_extension("bin"))
            .map_err(io)?
            .read_to_end(&mut bytes)
            .map_err(io)?;
        let n = header.spec.len();
        if bytes.len() != n * 8 {
            return Err(Error::Format(format!(
                "landscape binary holds {} bytes, header implies {}",
                bytes.len(),
                n * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            spec: header.spec,
            k: [header.k1, header.k2],
            values,
        })
    }

    /// CSV of the (alpha, beta) slice nearest to `x`, angles in degrees.
    pub fn slice_csv(&self, x: f64) -> String {
        let [nx, na, nb] = self.dims();
        let ix = (((x - self.spec.x_min) / self.spec.x_step).round().max(0.0) as usize).min(nx - 1);
        let mut s = format!(
            "# energy slice at X = {:.4} m\nalpha_deg,beta_deg,energy_J\n",
            self.spec.x_at(ix)
        );
        for ia in 0..na {
            for ib in 0..nb {
                s.push_str(&format!(
                    "{:.3},{:.3},{:.9e}\n",
                    self.spec.alpha_at(ia).to_degrees(),
                    self.spec.beta_at(ib).to_degrees(),
                    self.get(ix, ia, ib)
                ));
            }
        }
        s
    }
}

/// Evaluate the energy on every grid cell.
pub fn build_landscape(k1: f64, k2: f64, spec: &GridSpec, config: &WorldConfig) -> EnergyLandscape {
    let [nx, na, nb] = spec.dims();
    let values: Vec<f64> = (0..nx)
        .into_par_iter()
        .flat_map_iter(|ix| {
            let x = spec.x_at(ix);
            (0..na).flat_map(move |ia| {
                let alpha = spec.alpha_at(ia);
                (0..nb).map(move |ib| energy_at(x, alpha, spec.beta_at(ib), k1, k2, config))
            })
        })
        .collect();
    debug_assert_eq!(values.len(), nx * na * nb);
    EnergyLandscape {
        spec: *spec,
        k: [k1, k2],
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferredMode {
    Pitch,
    Roll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBarriers {
    pub pitch: f64,
    pub roll: f64,
    pub preferred: PreferredMode,
    /// The centre sits at or above the beam tips, so the pitch barrier is zero.
    pub degenerate: bool,
}

/// Beam deflection at which the beam tip drops to the body centre height.
fn max_pitch_deflection(config: &WorldConfig) -> Option<f64> {
    let ratio = config.body.height / config.beams[0].length;
    (ratio < 1.0).then(|| ratio.acos())
}

/// Pitch and roll barriers for two beams of shared stiffness `k`.
pub fn mode_barriers(k: f64, config: &WorldConfig) -> ModeBarriers {
    let body = &config.body;
    let roll = body.mass * config.gravity * body.h_c;
    let (pitch, degenerate) = match max_pitch_deflection(config) {
        Some(theta) => (k * theta * theta, false),
        None => (0.0, true),
    };
    ModeBarriers {
        pitch,
        roll,
        preferred: if roll < pitch {
            PreferredMode::Roll
        } else {
            PreferredMode::Pitch
        },
        degenerate,
    }
}

/// Stiffness at which the pitch and roll barriers coincide.
pub fn critical_stiffness(config: &WorldConfig) -> Result<f64> {
    let theta = max_pitch_deflection(config).ok_or_else(|| {
        Error::Geometry(
            "critical stiffness undefined: centre height is not below the beam length".into(),
        )
    })?;
    let body = &config.body;
    Ok(body.mass * config.gravity * body.h_c / (theta * theta))
}

fn clears_at_roll(alpha: f64, config: &WorldConfig) -> bool {
    let spec = &config.landscape;
    (0..spec.nx()).all(|ix| {
        let pose = Pose::centred(spec.x_at(ix), alpha, 0.0, &config.body);
        let frame = BodyFrame::new(&pose, &config.body);
        config.beams.iter().all(|beam| {
            frame.never_touches(beam, BeamShape::Solid)
                || frame.clearance(0.0, beam, BeamShape::Solid) >= 0.0
        })
    })
}

/// Smallest roll that passes the upright beams with no contact at any grid X.
/// Scans at 0.5 deg, then bisects to 0.05 deg.
pub fn min_clearance_roll(config: &WorldConfig) -> Result<f64> {
    let coarse = 0.5_f64.to_radians();
    let fine = 0.05_f64.to_radians();
    let steps = (90.0 / 0.5) as usize;
    let hit = (0..=steps)
        .map(|i| i as f64 * coarse)
        .position(|a| clears_at_roll(a, config))
        .ok_or_else(|| Error::Geometry("no roll angle up to 90 deg clears the gap".into()))?;
    if hit == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = ((hit - 1) as f64 * coarse, hit as f64 * coarse);
    while hi - lo > fine {
        let mid = 0.5 * (lo + hi);
        if clears_at_roll(mid, config) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
