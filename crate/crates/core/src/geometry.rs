//! Helix source trajectory, detector rays and PI-line coordinates.
//!
//! The source moves on `γ(β) = (R cos β, R sin β, hβ/2π)` for `β ∈ [-B, B]`.
//! A detector sample `(α, v)` seen from `γ(β)` is the line
//!
//! ```text
//! x = R cos β − r̃ cos(α + β)
//! y = R sin β − r̃ sin(α + β)
//! z = r̃ v / (2R cos α) + hβ/2π        r̃ ∈ ℝ
//! ```
//!
//! so `α` is the fan angle at the source and `v` the axial coordinate on a
//! cylindrical detector, scaled such that a slope of `dz/dr̃ = v / (2R cos α)`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scanner and object constants. All lengths in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryConfig", into = "GeometryConfig")]
pub struct HelixGeometry {
    radius: f64,
    pitch: f64,
    half_length: f64,
    object_radius: f64,
    beta_max: f64,
}

/// Flat key-value form of [`HelixGeometry`]; `B` is derived on load.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    pub h: f64,
    #[serde(rename = "Z")]
    pub half_length: f64,
    pub rho: f64,
}

impl TryFrom<GeometryConfig> for HelixGeometry {
    type Error = Error;

    fn try_from(c: GeometryConfig) -> Result<Self> {
        HelixGeometry::new(c.radius, c.h, c.half_length, c.rho)
    }
}

impl From<HelixGeometry> for GeometryConfig {
    fn from(g: HelixGeometry) -> Self {
        GeometryConfig {
            radius: g.radius,
            h: g.pitch,
            half_length: g.half_length,
            rho: g.object_radius,
        }
    }
}

impl HelixGeometry {
    /// Builds a geometry from `(R, h, Z, ρ)`; the angular half-range is
    /// `B = 2πZ/h`.
    pub fn new(radius: f64, pitch: f64, half_length: f64, object_radius: f64) -> Result<Self> {
        let all_finite = [radius, pitch, half_length, object_radius]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidGeometry("non-finite parameter".into()));
        }
        if !(object_radius > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "object radius rho = {object_radius} must be positive"
            )));
        }
        if !(radius > object_radius) {
            return Err(Error::InvalidGeometry(format!(
                "helix radius R = {radius} must exceed rho = {object_radius}"
            )));
        }
        if !(pitch > 0.0) {
            return Err(Error::InvalidGeometry(format!("pitch h = {pitch} must be positive")));
        }
        if !(half_length > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "half-length Z = {half_length} must be positive"
            )));
        }
        Ok(Self {
            radius,
            pitch,
            half_length,
            object_radius,
            beta_max: TAU * half_length / pitch,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn object_radius(&self) -> f64 {
        self.object_radius
    }

    /// `B`, half the angular range of the scan.
    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    /// Axial advance per radian, `h / 2π`.
    pub fn axial_rate(&self) -> f64 {
        self.pitch / TAU
    }

    /// Largest fan angle that still meets the object cylinder, `arcsin(ρ/R)`.
    pub fn fan_half_angle(&self) -> f64 {
        (self.object_radius / self.radius).asin()
    }

    /// Worst-case normalized radius `ρ/R`.
    pub fn rbar_max(&self) -> f64 {
        self.object_radius / self.radius
    }
}

/// A detector sample position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorCoord {
    pub alpha: f64,
    pub v: f64,
}

impl DetectorCoord {
    /// Rays outside the fan `|α| ≤ arcsin(ρ/R)` miss the object cylinder.
    pub fn meets_object(&self, geom: &HelixGeometry) -> bool {
        self.alpha.abs() <= geom.fan_half_angle()
    }
}

/// PI-line coordinates of a point: the chord from `γ(β1)` to `γ(β2)`
/// and the fractional position `t` along it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiLineCoords {
    pub beta1: f64,
    pub beta2: f64,
    pub t: f64,
}

impl PiLineCoords {
    /// Forward coordinate transform `(β1, β2, t) → x`.
    pub fn point(&self, geom: &HelixGeometry) -> Vector3<f64> {
        let (s1, c1) = self.beta1.sin_cos();
        let (s2, c2) = self.beta2.sin_cos();
        let r = geom.radius;
        let u = 1.0 - self.t;
        Vector3::new(
            r * (u * c1 + self.t * c2),
            r * (u * s1 + self.t * s2),
            geom.axial_rate() * (u * self.beta1 + self.t * self.beta2),
        )
    }
}

/// A line `origin + r̃ · direction`. The direction is the (non-unit)
/// derivative with respect to the detector parametrization `r̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn point_at(&self, r: f64) -> Vector3<f64> {
        self.origin + self.direction * r
    }

    pub fn unit_direction(&self) -> Vector3<f64> {
        self.direction.normalize()
    }
}

/// Source position `γ(β)`.
pub fn helix_point(beta: f64, geom: &HelixGeometry) -> Result<Vector3<f64>> {
    let b = geom.beta_max;
    if !(beta.abs() <= b) {
        return Err(Error::OutOfRange {
            what: "beta",
            value: beta,
            min: -b,
            max: b,
        });
    }
    Ok(source_position(beta, geom))
}

/// `γ(β)` without the scan-range check.
pub(crate) fn source_position(beta: f64, geom: &HelixGeometry) -> Vector3<f64> {
    let (s, c) = beta.sin_cos();
    Vector3::new(geom.radius * c, geom.radius * s, geom.axial_rate() * beta)
}

/// The ray hitting detector sample `(α, v)` from source angle `β`.
pub fn ray(alpha: f64, beta: f64, v: f64, geom: &HelixGeometry) -> Result<Ray> {
    let ca = alpha.cos();
    if !(alpha.abs() < PI / 2.0) || ca < 1e-12 {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha,
            min: -PI / 2.0,
            max: PI / 2.0,
        });
    }
    let (sab, cab) = (alpha + beta).sin_cos();
    Ok(Ray {
        origin: source_position(beta, geom),
        direction: Vector3::new(-cab, -sab, v / (2.0 * geom.radius * ca)),
    })
}

/// Chord through the horizontal point `q` starting at source angle `beta1`.
/// Returns `(β2, t)` with `β2 ∈ (β1, β1 + 2π)`.
fn chord_end(beta1: f64, qx: f64, qy: f64, radius: f64) -> (f64, f64) {
    let (s1, c1) = beta1.sin_cos();
    let (px, py) = (radius * c1, radius * s1);
    let (dx, dy) = (qx - px, qy - py);
    let norm2 = dx * dx + dy * dy;
    let pd = px * dx + py * dy;
    // p1 + s·d meets the circle again at s = -2 p1·d / |d|²; q sits at s = 1.
    let s_end = -2.0 * pd / norm2;
    let (ex, ey) = (px + s_end * dx, py + s_end * dy);
    let mut span = (ey.atan2(ex) - beta1).rem_euclid(TAU);
    if span == 0.0 {
        span = TAU;
    }
    (beta1 + span, 1.0 / s_end)
}

/// Axial height of the chord point over `q` and its derivative in `β1`.
fn chord_height(beta1: f64, qx: f64, qy: f64, geom: &HelixGeometry) -> (f64, f64, f64, f64) {
    let r = geom.radius;
    let (beta2, t) = chord_end(beta1, qx, qy, r);
    let (s1, c1) = beta1.sin_cos();
    let (px, py) = (r * c1, r * s1);
    let (dpx, dpy) = (-r * s1, r * c1);
    let (dx, dy) = (qx - px, qy - py);
    let norm2 = dx * dx + dy * dy;
    // Chord direction angle θ satisfies β2 = 2θ − β1 + π.
    let dtheta = (dx * -dpy - dy * -dpx) / norm2;
    let dbeta2 = 2.0 * dtheta - 1.0;
    let den = 2.0 * (px * dx + py * dy);
    let dnum = -2.0 * (dx * dpx + dy * dpy);
    let dden = 2.0 * (dpx * dx + dpy * dy);
    let dt = -(dnum * den - norm2 * dden) / (den * den);
    let k = geom.axial_rate();
    let z = k * (beta1 + t * (beta2 - beta1));
    let dz = k * (1.0 + dt * (beta2 - beta1) + t * (dbeta2 - 1.0));
    (z, dz, beta2, t)
}

/// PI-line coordinates of `x`.
///
/// Solves for `β1` on the bracket `[2πz/h − 2π, 2πz/h]`, where the chord
/// height is strictly increasing, with Newton steps kept inside a shrinking
/// bisection bracket. Points must lie strictly inside the helix cylinder and
/// their PI-interval inside `[-B, B]`.
pub fn pi_line_solve(x: &Vector3<f64>, geom: &HelixGeometry) -> Result<PiLineCoords> {
    let coords = pi_line_unbounded(x, geom)?;
    let b = geom.beta_max;
    if coords.beta1 < -b || coords.beta2 > b {
        return Err(Error::PiIntervalOutOfScan {
            beta1: coords.beta1,
            beta2: coords.beta2,
            beta_max: b,
        });
    }
    Ok(coords)
}

/// [`pi_line_solve`] without the scan-range check.
pub fn pi_line_unbounded(x: &Vector3<f64>, geom: &HelixGeometry) -> Result<PiLineCoords> {
    let r_xy = x.x.hypot(x.y);
    if !(r_xy < geom.radius) || !x.z.is_finite() {
        return Err(Error::OutsideCylinder {
            x: x.x,
            y: x.y,
            z: x.z,
        });
    }
    let target = x.z;
    let centre = target / geom.axial_rate();
    let (mut lo, mut hi) = (centre - TAU, centre);
    let mut beta1 = centre - PI / 2.0;
    for _ in 0..200 {
        let (z, dz, _, _) = chord_height(beta1, x.x, x.y, geom);
        let f = z - target;
        if f > 0.0 {
            hi = beta1;
        } else {
            lo = beta1;
        }
        if f == 0.0 || hi - lo < 4.0 * f64::EPSILON * (1.0 + centre.abs()) {
            break;
        }
        let newton = beta1 - f / dz;
        beta1 = if dz > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (newton - beta1).abs() < 1e-15 * (1.0 + beta1.abs()) && f.abs() < 1e-15 {
            break;
        }
    }
    let (_, _, beta2, t) = chord_height(beta1, x.x, x.y, geom);
    Ok(PiLineCoords { beta1, beta2, t })
}

/// Half-extent of the detector `v` axis needed to see every PI-section of
/// the object cylinder, scaled by `margin`.
///
/// In these detector coordinates the upper and lower PI-window borders are
/// the straight lines `v = ±h (1/2 ± α/π)`, so the extremum sits at the
/// fan edge `α = ±arcsin(ρ/R)`.
pub fn pi_v_range(geom: &HelixGeometry, margin: f64) -> f64 {
    geom.pitch * (0.5 + geom.fan_half_angle() / PI) * margin
}

/// Projection of `x` onto the detector seen from source angle `beta`.
/// Returns `None` for points behind the source.
pub fn project(x: &Vector3<f64>, beta: f64, geom: &HelixGeometry) -> Option<DetectorCoord> {
    let (s, c) = beta.sin_cos();
    let r = geom.radius;
    let depth = r - x.x * c - x.y * s;
    let lateral = x.x * s - x.y * c;
    if depth <= 0.0 {
        return None;
    }
    let alpha = lateral.atan2(depth);
    let dist2 = depth * depth + lateral * lateral;
    let v = 2.0 * r * depth * (x.z - geom.axial_rate() * beta) / dist2;
    Some(DetectorCoord { alpha, v })
}
