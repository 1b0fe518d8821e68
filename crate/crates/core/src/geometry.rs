//! Body kinematics and ellipsoid-beam contact geometry.
//!
//! Contact queries run in "sphere space": the affine map `p -> S^-1 R^T (p - O)`
//! sends the body ellipsoid to the unit sphere and a beam plate to a
//! parallelepiped (or a parallelogram for the zero-thickness mid-plane). The
//! closest point of that polytope to the origin gives both the signed
//! clearance and the deepest contact point.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::{BeamParams, BodyParams, WorldConfig};
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Bisection tolerance for the required beam deflection (rad).
pub const DEFLECTION_TOLERANCE: f64 = 1e-5;

/// Position of the geometric centre and the two joint angles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Roll about the world X axis through the centre (rad).
    pub alpha: f64,
    /// Pitch about the rolled body y axis (rad).
    pub beta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, alpha: f64, beta: f64) -> Self {
        Self {
            x,
            y,
            z,
            alpha,
            beta,
        }
    }

    /// Centred pose at the nominal height.
    pub fn centred(x: f64, alpha: f64, beta: f64, body: &BodyParams) -> Self {
        Self::new(x, 0.0, body.height, alpha, beta)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        body_rotation(self.alpha, self.beta)
    }

    pub fn is_flipped(&self, limit: f64) -> bool {
        self.alpha.abs() > limit || self.beta.abs() > limit
    }
}

/// Single deepest-point contact between the body and one beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPatch {
    /// World-frame point on the beam where the force acts (m).
    pub point: Vec3,
    /// Unit outward body normal, world frame.
    pub normal: Vec3,
    /// Penetration depth (m), non-negative.
    pub depth: f64,
    pub beam_index: usize,
}

/// Which solid stands in for a beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamShape {
    /// Full plate including thickness. Used by the simulator and the force model.
    Solid,
    /// Zero-thickness mid-plane rectangle. Used for energy landscapes.
    MidPlane,
}

/// Closest-approach data between body and beam, valid whether or not they touch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    /// Signed clearance in metres, negative when penetrating.
    pub clearance: f64,
    /// Beam point closest to the body centre in sphere space (world frame).
    pub beam_point: Vec3,
    /// Matching point on the ellipsoid surface (world frame).
    pub body_point: Vec3,
    /// Unit outward ellipsoid normal at `body_point` (world frame).
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance {
    pub distance: f64,
    pub patch: Option<ContactPatch>,
}

/// Required deflection for one beam at one pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deflection {
    pub theta: f64,
    /// Even a flat beam still penetrates the body.
    pub over_deflected: bool,
}

/// Body-to-world rotation: roll about world X, then pitch about the rolled body y axis.
pub fn body_rotation(alpha: f64, beta: f64) -> Matrix3<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    rx * ry
}

/// World direction of the pitch joint axis for roll `alpha`.
pub fn pitch_axis(alpha: f64) -> Vec3 {
    Vec3::new(0.0, alpha.cos(), alpha.sin())
}

/// Outward unit normal of the body ellipsoid at a body-frame surface point.
pub fn ellipsoid_normal(p: Vec3, body: &BodyParams) -> Result<Vec3> {
    let (a, b, c) = (body.a, body.b, body.c);
    let level = (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2);
    if (level - 1.0).abs() > 1e-6 {
        return Err(Error::Geometry(format!(
            "point ({:.6}, {:.6}, {:.6}) is off the ellipsoid surface (level {level:.8})",
            p.x, p.y, p.z
        )));
    }
    let n = Vec3::new(
        b * b * c * c * p.x,
        a * a * c * c * p.y,
        a * a * b * b * p.z,
    );
    Ok(n.normalize())
}

/// Upright-to-deflected beam frame for angle `theta`: (along height, along thickness).
fn beam_axes(theta: f64) -> (Vec3, Vec3) {
    let (s, c) = theta.sin_cos();
    (Vec3::new(s, 0.0, c), Vec3::new(c, 0.0, -s))
}

/// Precomputed sphere-space transform of one body pose.
#[derive(Debug, Clone)]
pub struct BodyFrame {
    origin: Vec3,
    rot: Matrix3<f64>,
    axes: Vec3,
    to_sphere: Matrix3<f64>,
    /// Half extents of the body along world X, Y, Z.
    support: Vec3,
}

impl BodyFrame {
    pub fn new(pose: &Pose, body: &BodyParams) -> Self {
        let rot = pose.rotation();
        let axes = Vec3::new(body.a, body.b, body.c);
        let inv = Matrix3::from_diagonal(&axes.map(|v| 1.0 / v));
        let to_sphere = inv * rot.transpose();
        // Support of the ellipsoid along world axis e is |S R^T e|.
        let support = Vec3::from_fn(|i, _| {
            let row = rot.row(i);
            (0..3)
                .map(|j| (row[j] * axes[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        });
        Self {
            origin: pose.position(),
            rot,
            axes,
            to_sphere,
            support,
        }
    }

    /// True when the beam cannot touch the body at any angle in [0, pi/2].
    pub fn never_touches(&self, beam: &BeamParams, shape: BeamShape) -> bool {
        let lo_y = beam.y_hinge - 0.5 * beam.width;
        let hi_y = beam.y_hinge + 0.5 * beam.width;
        if self.origin.y + self.support.y < lo_y || self.origin.y - self.support.y > hi_y {
            return true;
        }
        let half_t = match shape {
            BeamShape::Solid => 0.5 * beam.thickness,
            BeamShape::MidPlane => 0.0,
        };
        if self.origin.x + self.support.x < -half_t {
            return true;
        }
        self.origin.z - self.support.z > beam.length + half_t
    }

    /// Closest-approach witness against a beam deflected by `theta`.
    pub fn witness(&self, theta: f64, beam: &BeamParams, shape: BeamShape) -> Witness {
        let (up, across) = beam_axes(theta);
        let lateral = Vec3::new(0.0, beam.width, 0.0);
        let base = Vec3::new(0.0, beam.y_hinge - 0.5 * beam.width, 0.0);
        let (q, inside_normal) = match shape {
            BeamShape::Solid => {
                let corner = base - across * (0.5 * beam.thickness);
                let c0 = self.to_sphere * (corner - self.origin);
                let edges = [
                    self.to_sphere * (across * beam.thickness),
                    self.to_sphere * lateral,
                    self.to_sphere * (up * beam.length),
                ];
                closest_on_parallelepiped(c0, &edges)
            }
            BeamShape::MidPlane => {
                let c0 = self.to_sphere * (base - self.origin);
                let edges = [
                    self.to_sphere * lateral,
                    self.to_sphere * (up * beam.length),
                ];
                (closest_on_parallelogram(c0, &edges), None)
            }
        };
        let (dist, dir) = match inside_normal {
            // Centre inside the plate: exit through the nearest face.
            Some((depth, outward)) => (-depth, -outward),
            None => {
                let d = q.norm();
                if d > 1e-12 {
                    (d, q / d)
                } else {
                    // Degenerate: centre on the mid-plane. Push along the plate normal.
                    let n = self.to_sphere * across;
                    (0.0, n.normalize())
                }
            }
        };
        let inv_dir = dir.component_div(&self.axes);
        let scale = inv_dir.norm();
        let body_local = dir.component_mul(&self.axes);
        let normal_local = inv_dir / scale;
        let beam_local = q.component_mul(&self.axes);
        Witness {
            clearance: (dist - 1.0) / scale,
            beam_point: self.origin + self.rot * beam_local,
            body_point: self.origin + self.rot * body_local,
            normal: self.rot * normal_local,
        }
    }

    pub fn clearance(&self, theta: f64, beam: &BeamParams, shape: BeamShape) -> f64 {
        self.witness(theta, beam, shape).clearance
    }

    /// Smallest deflection in [0, pi/2] that clears the body, by bisection.
    pub fn required_deflection(&self, beam: &BeamParams, shape: BeamShape) -> Deflection {
        if self.never_touches(beam, shape) || self.clearance(0.0, beam, shape) >= 0.0 {
            return Deflection {
                theta: 0.0,
                over_deflected: false,
            };
        }
        if self.clearance(FRAC_PI_2, beam, shape) < 0.0 {
            return Deflection {
                theta: FRAC_PI_2,
                over_deflected: true,
            };
        }
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        while hi - lo > DEFLECTION_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if self.clearance(mid, beam, shape) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Deflection {
            theta: hi,
            over_deflected: false,
        }
    }
}

/// Signed clearance between body and beam; carries a patch when touching.
pub fn ellipsoid_beam_clearance(
    pose: &Pose,
    theta: f64,
    beam: &BeamParams,
    body: &BodyParams,
    shape: BeamShape,
    beam_index: usize,
) -> Clearance {
    let w = BodyFrame::new(pose, body).witness(theta, beam, shape);
    let patch = (w.clearance <= 0.0).then(|| ContactPatch {
        point: w.beam_point,
        normal: w.normal,
        depth: -w.clearance,
        beam_index,
    });
    Clearance {
        distance: w.clearance,
        patch,
    }
}

/// Minimal deflection of beam `beam_index` that avoids interpenetration at `pose`.
pub fn beam_deflection_required(
    pose: &Pose,
    beam_index: usize,
    config: &WorldConfig,
    shape: BeamShape,
) -> Deflection {
    BodyFrame::new(pose, &config.body).required_deflection(&config.beams[beam_index], shape)
}

/// Closest point to the origin of `{c0 + u0 e0 + u1 e1 : u in [0,1]^2}`.
fn closest_on_parallelogram(c0: Vec3, e: &[Vec3; 2]) -> Vec3 {
    let g00 = e[0].dot(&e[0]);
    let g01 = e[0].dot(&e[1]);
    let g11 = e[1].dot(&e[1]);
    let b0 = e[0].dot(&c0);
    let b1 = e[1].dot(&c0);
    let det = g00 * g11 - g01 * g01;
    if det > 0.0 {
        let u0 = (-b0 * g11 + b1 * g01) / det;
        let u1 = (-b1 * g00 + b0 * g01) / det;
        if (0.0..=1.0).contains(&u0) && (0.0..=1.0).contains(&u1) {
            return c0 + e[0] * u0 + e[1] * u1;
        }
    }
    // Otherwise the minimiser is on the boundary: check the four edges.
    let mut best = c0;
    let mut best_d2 = f64::INFINITY;
    let mut consider = |p: Vec3| {
        let d2 = p.norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = p;
        }
    };
    for (fixed, free) in [(1usize, 0usize), (0, 1)] {
        for side in [0.0, 1.0] {
            let start = c0 + e[fixed] * side;
            consider(segment_closest(start, e[free]));
        }
    }
    best
}

/// Closest point to the origin on the segment `start + t dir`, t in [0, 1].
fn segment_closest(start: Vec3, dir: Vec3) -> Vec3 {
    let dd = dir.norm_squared();
    if dd == 0.0 {
        return start;
    }
    let t = (-start.dot(&dir) / dd).clamp(0.0, 1.0);
    start + dir * t
}

/// Closest point to the origin of the parallelepiped `c0 + E u`, u in [0,1]^3.
/// When the origin is inside, also returns (depth, outward normal) of the nearest face.
fn closest_on_parallelepiped(c0: Vec3, e: &[Vec3; 3]) -> (Vec3, Option<(f64, Vec3)>) {
    let m = Matrix3::from_columns(e);
    if let Some(inv) = m.try_inverse() {
        let u = inv * (-c0);
        if u.iter().all(|v| (0.0..=1.0).contains(v)) {
            let mut best = (f64::INFINITY, Vec3::zeros());
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                let mut n = e[j].cross(&e[k]);
                let norm = n.norm();
                if norm == 0.0 {
                    continue;
                }
                n /= norm;
                // Orient n along +e_i.
                if n.dot(&e[i]) < 0.0 {
                    n = -n;
                }
                let height = e[i].dot(&n);
                let d_low = u[i] * height;
                let d_high = (1.0 - u[i]) * height;
                if d_low < best.0 {
                    best = (d_low, -n);
                }
                if d_high < best.0 {
                    best = (d_high, n);
                }
            }
            let point = best.1 * best.0;
            return (point, Some(best));
        }
    }
    // Outside: the minimiser lies on one of the six faces.
    let mut best = c0;
    let mut best_d2 = f64::INFINITY;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for side in [0.0, 1.0] {
            let p = closest_on_parallelogram(c0 + e[i] * side, &[e[j], e[k]]);
            let d2 = p.norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = p;
            }
        }
    }
    (best, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    #[test]
    fn rotation_identity_at_zero() {
        assert_relative_eq!(
            body_rotation(0.0, 0.0),
            Matrix3::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quarter_roll_maps_body_z_to_minus_world_y() {
        let r = body_rotation(FRAC_PI_2, 0.0);
        assert_relative_eq!(r * Vec3::z(), -Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn pitch_axis_is_rolled_body_y() {
        let r = body_rotation(0.4, 0.9);
        assert_relative_eq!(r * Vec3::y(), pitch_axis(0.4), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(a in -3.2f64..3.2, b in -3.2f64..3.2) {
            let r = body_rotation(a, b);
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normal_matches_finite_difference_gradient(u in -1.5f64..1.5, v in -3.1f64..3.1) {
            let body = BodyParams::default();
            let p = Vec3::new(body.a * u.cos() * v.cos(), body.b * u.cos() * v.sin(), body.c * u.sin());
            let f = |q: Vec3| (q.x / body.a).powi(2) + (q.y / body.b).powi(2) + (q.z / body.c).powi(2);
            let h = 1e-7;
            let grad = Vec3::from_fn(|i, _| {
                let mut dp = Vec3::zeros();
                dp[i] = h;
                (f(p + dp) - f(p - dp)) / (2.0 * h)
            });
            let n = ellipsoid_normal(p, &body).unwrap();
            prop_assert!((n - grad.normalize()).norm() < 1e-6);
        }
    }

    #[test]
    fn normal_at_axis_points() {
        let body = BodyParams::default();
        let n = ellipsoid_normal(Vec3::new(body.a, 0.0, 0.0), &body).unwrap();
        assert_relative_eq!(n, Vec3::x(), epsilon = 1e-15);
        let n = ellipsoid_normal(Vec3::new(0.0, 0.0, body.c), &body).unwrap();
        assert_relative_eq!(n, Vec3::z(), epsilon = 1e-15);
        assert!(ellipsoid_normal(Vec3::new(1.0, 0.0, 0.0), &body).is_err());
    }

    #[test]
    fn body_behind_beams_is_clear() {
        let c = cfg();
        let pose = Pose::centred(-0.25, 0.0, 0.0, &c.body);
        let cl = ellipsoid_beam_clearance(&pose, 0.0, &c.beams[0], &c.body, BeamShape::Solid, 0);
        assert!(cl.distance > 0.0);
        assert!(cl.patch.is_none());
    }

    #[test]
    fn flat_body_over_hinge_penetrates_upright_beam() {
        let c = cfg();
        let pose = Pose::centred(0.0, 0.0, 0.0, &c.body);
        for i in 0..2 {
            let cl =
                ellipsoid_beam_clearance(&pose, 0.0, &c.beams[i], &c.body, BeamShape::Solid, i);
            assert!(cl.distance < 0.0);
            let patch = cl.patch.unwrap();
            assert!((patch.normal.norm() - 1.0).abs() < 1e-9);
            assert!(patch.depth > 0.0);
            assert_eq!(patch.beam_index, i);
        }
    }

    #[test]
    fn fully_rolled_body_fits_the_gap() {
        let c = cfg();
        let pose = Pose::centred(0.0, FRAC_PI_2, 0.0, &c.body);
        for i in 0..2 {
            let cl =
                ellipsoid_beam_clearance(&pose, 0.0, &c.beams[i], &c.body, BeamShape::Solid, i);
            assert!(cl.distance > 0.0);
        }
    }

    #[test]
    fn clearance_of_sphere_like_offset_is_metric() {
        // Flat body directly behind beam 1, nose 5 mm from the front face: the
        // nearest beam point lies on the body x-axis line only if the beam spans y=0,
        // so use a custom beam centred on y=0.
        let c = cfg();
        let mut beam = c.beams[1];
        beam.y_hinge = 0.0;
        let pose = Pose::centred(-0.005 - c.body.a - 0.5 * beam.thickness, 0.0, 0.0, &c.body);
        let cl = ellipsoid_beam_clearance(&pose, 0.0, &beam, &c.body, BeamShape::Solid, 1);
        assert_relative_eq!(cl.distance, 0.005, epsilon = 1e-12);
    }

    #[test]
    fn witness_normal_is_the_ellipsoid_normal() {
        let c = cfg();
        let pose = Pose::new(-0.05, 0.002, 0.104, 0.1, -0.2);
        let frame = BodyFrame::new(&pose, &c.body);
        let w = frame.witness(0.05, &c.beams[1], BeamShape::Solid);
        let r = pose.rotation();
        let local = r.transpose() * (w.body_point - pose.position());
        let n = ellipsoid_normal(local, &c.body).unwrap();
        assert!((r * n - w.normal).norm() < 1e-9);
    }

    #[test]
    fn no_deflection_far_from_beams() {
        let c = cfg();
        let pose = Pose::centred(-0.25, 0.0, 0.0, &c.body);
        let d = beam_deflection_required(&pose, 0, &c, BeamShape::Solid);
        assert_eq!(d.theta, 0.0);
        assert!(!d.over_deflected);
    }

    #[test]
    fn deflection_needed_over_hinge() {
        let c = cfg();
        let pose = Pose::centred(0.0, 0.0, 0.0, &c.body);
        for shape in [BeamShape::Solid, BeamShape::MidPlane] {
            let d = beam_deflection_required(&pose, 0, &c, shape);
            assert!(d.theta > 0.0 && !d.over_deflected);
            let frame = BodyFrame::new(&pose, &c.body);
            assert!(frame.clearance(d.theta, &c.beams[0], shape) >= 0.0);
            assert!(
                frame.clearance(d.theta - 2.0 * DEFLECTION_TOLERANCE, &c.beams[0], shape) < 0.0
            );
        }
    }

    #[test]
    fn deflection_monotone_while_approaching() {
        let c = cfg();
        let mut last = 0.0;
        let mut x = -0.12;
        while x <= 0.0 + 1e-12 {
            let d = beam_deflection_required(
                &Pose::centred(x, 0.0, 0.0, &c.body),
                1,
                &c,
                BeamShape::Solid,
            );
            assert!(
                d.theta + 1e-9 >= last,
                "theta dropped at x = {x}: {} < {last}",
                d.theta
            );
            last = d.theta;
            x += 0.002;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn over_deflection_flagged() {
        let c = cfg();
        // Body sunk to the ground: even a flat beam overlaps it.
        let pose = Pose::new(0.0, 0.0, 0.01, 0.0, 0.0);
        let d = beam_deflection_required(&pose, 0, &c, BeamShape::Solid);
        assert!(d.over_deflected);
        assert_eq!(d.theta, FRAC_PI_2);
    }

    proptest! {
        #[test]
        fn deflection_mirror_symmetric(
            x in -0.12f64..0.12, y in -0.004f64..0.004, z in 0.1f64..0.11,
            a in -0.8f64..0.8, b in -0.8f64..0.8,
        ) {
            let c = cfg();
            let d0 = beam_deflection_required(&Pose::new(x, y, z, a, b), 0, &c, BeamShape::Solid);
            let d1 = beam_deflection_required(&Pose::new(x, -y, z, -a, b), 1, &c, BeamShape::Solid);
            prop_assert!((d0.theta - d1.theta).abs() <= 1e-5);
        }

        #[test]
        fn clearance_continuous_in_theta(
            x in -0.1f64..0.06, a in -0.6f64..0.6, b in -0.6f64..0.6, theta in 0.0f64..1.5,
        ) {
            let c = cfg();
            let frame = BodyFrame::new(&Pose::centred(x, a, b, &c.body), &c.body);
            for shape in [BeamShape::Solid, BeamShape::MidPlane] {
                let c0 = frame.clearance(theta, &c.beams[0], shape);
                let c1 = frame.clearance(theta + 1e-7, &c.beams[0], shape);
                prop_assert!((c0 - c1).abs() < 1e-6);
            }
        }
    }
}
