//! Analytic ellipsoid phantoms.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Ray;

const SHEPP_LOGAN_TABLE: &str = include_str!("../data/shepp_logan_3d.txt");

/// A solid ellipsoid of constant density.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Vector3<f64>,
    semiaxes: Vector3<f64>,
    rotation: Matrix3<f64>,
    density: f64,
    /// Maps world offsets from the centre into the unit ball: `D⁻¹ Rᵀ`.
    to_unit: Matrix3<f64>,
}

impl Ellipsoid {
    /// `rotation` has the ellipsoid's principal axes as columns.
    pub fn new(
        center: Vector3<f64>,
        semiaxes: Vector3<f64>,
        rotation: Matrix3<f64>,
        density: f64,
    ) -> Result<Self> {
        if semiaxes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "semiaxes",
                reason: format!("must be positive and finite, got {semiaxes:?}"),
            });
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho < 1e-12) || rotation.determinant() < 0.0 {
            return Err(Error::InvalidParameter {
                name: "rotation",
                reason: format!("not a proper rotation (orthogonality defect {ortho:.2e})"),
            });
        }
        if !density.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ellipsoid",
                reason: "non-finite centre or density".into(),
            });
        }
        let inv_axes = Matrix3::from_diagonal(&semiaxes.map(|a| 1.0 / a));
        Ok(Self {
            center,
            semiaxes,
            rotation,
            density,
            to_unit: inv_axes * rotation.transpose(),
        })
    }

    /// Builds the rotation from ZXZ Euler angles in degrees.
    pub fn from_euler_deg(
        center: Vector3<f64>,
        semiaxes: Vector3<f64>,
        angles: [f64; 3],
        density: f64,
    ) -> Result<Self> {
        let [phi, theta, psi] = angles.map(f64::to_radians);
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), phi)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), theta)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), psi);
        Self::new(center, semiaxes, *rot.matrix(), density)
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    pub fn semiaxes(&self) -> &Vector3<f64> {
        &self.semiaxes
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Squared unit-ball radius of `x` in the ellipsoid frame (≤ 1 inside).
    pub fn level(&self, x: &Vector3<f64>) -> f64 {
        (self.to_unit * (x - self.center)).norm_squared()
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        self.level(x) <= 1.0
    }

    /// Length of the intersection with the line `origin + s·dir`, `|dir| = 1`.
    pub fn chord_length(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
        let o = self.to_unit * (origin - self.center);
        let d = self.to_unit * dir;
        let a = d.norm_squared();
        // Discriminant of a s² + 2b s + (|o|² − 1), written to avoid cancellation
        // for distant origins: b² − a(|o|²−1) = a − |o × d|².
        let disc = a - o.cross(&d).norm_squared();
        if disc <= 0.0 {
            0.0
        } else {
            2.0 * disc.sqrt() / a
        }
    }

    /// Second-moment matrix `R D² Rᵀ`; `sqrt(eᵀ M e)` is the support function.
    fn shape(&self) -> Matrix3<f64> {
        let d2 = Matrix3::from_diagonal(&self.semiaxes.map(|a| a * a));
        self.rotation * d2 * self.rotation.transpose()
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(self.center * s, self.semiaxes * s, self.rotation, self.density)
            .expect("scaling preserves validity")
    }
}

/// A sum of ellipsoids with additive densities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phantom {
    ellipsoids: Vec<Ellipsoid>,
    support_radius: f64,
    support_halflength: f64,
}

impl Phantom {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Self {
        let mut support_radius = 0.0f64;
        let mut support_halflength = 0.0f64;
        for e in &ellipsoids {
            let m = e.shape();
            let horiz = m.fixed_view::<2, 2>(0, 0).symmetric_eigenvalues().max().sqrt();
            support_radius = support_radius.max(e.center.xy().norm() + horiz);
            support_halflength = support_halflength.max(e.center.z.abs() + m[(2, 2)].sqrt());
        }
        Self {
            ellipsoids,
            support_radius,
            support_halflength,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ellipsoids(&self) -> &[Ellipsoid] {
        &self.ellipsoids
    }

    pub fn is_empty(&self) -> bool {
        self.ellipsoids.is_empty()
    }

    /// Radius of a z-aligned cylinder containing every ellipsoid.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Half-length of that cylinder.
    pub fn support_halflength(&self) -> f64 {
        self.support_halflength
    }

    /// Density at `x`.
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        self.ellipsoids
            .iter()
            .filter(|e| e.contains(x))
            .map(|e| e.density)
            .sum()
    }

    /// Exact line integral along `ray`, measured in arc length.
    pub fn line_integral(&self, ray: &Ray) -> f64 {
        let dir = ray.unit_direction();
        self.line_integral_unit(&ray.origin, &dir)
    }

    /// Line integral along `origin + s·dir` with `|dir| = 1`.
    pub fn line_integral_unit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
        self.ellipsoids
            .iter()
            .map(|e| e.density * e.chord_length(origin, dir))
            .sum()
    }

    /// Uniformly scaled copy about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.ellipsoids.iter().map(|e| e.scaled(s)).collect())
    }

    /// Copy shifted by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self::new(
            self.ellipsoids
                .iter()
                .map(|e| {
                    Ellipsoid::new(e.center + offset, e.semiaxes, e.rotation, e.density)
                        .expect("translation preserves validity")
                })
                .collect(),
        )
    }

    /// Serializes to the plain-text table format read by [`FromStr`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# cx cy cz ax ay az phi theta psi density\n");
        for e in &self.ellipsoids {
            let [phi, theta, psi] = euler_zxz_deg(&e.rotation);
            let c = e.center;
            let a = e.semiaxes;
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                c.x, c.y, c.z, a.x, a.y, a.z, phi, theta, psi, e.density
            );
        }
        out
    }
}

impl FromStr for Phantom {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut ellipsoids = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format {
                    kind: "phantom",
                    reason: format!("line {}: {e}", lineno + 1),
                })?;
            if vals.len() != 10 {
                return Err(Error::Format {
                    kind: "phantom",
                    reason: format!("line {}: expected 10 fields, found {}", lineno + 1, vals.len()),
                });
            }
            let e = Ellipsoid::from_euler_deg(
                Vector3::new(vals[0], vals[1], vals[2]),
                Vector3::new(vals[3], vals[4], vals[5]),
                [vals[6], vals[7], vals[8]],
                vals[9],
            )
            .map_err(|e| Error::Format {
                kind: "phantom",
                reason: format!("line {}: {e}", lineno + 1),
            })?;
            ellipsoids.push(e);
        }
        Ok(Phantom::new(ellipsoids))
    }
}

/// ZXZ Euler angles (degrees) of a rotation matrix.
fn euler_zxz_deg(r: &Matrix3<f64>) -> [f64; 3] {
    let theta = r[(2, 2)].clamp(-1.0, 1.0).acos();
    let (phi, psi) = if theta.sin().abs() > 1e-12 {
        (r[(0, 2)].atan2(-r[(1, 2)]), r[(2, 0)].atan2(r[(2, 1)]))
    } else {
        // Gimbal lock: fold everything into phi.
        (r[(1, 0)].atan2(r[(0, 0)]), 0.0)
    };
    [phi.to_degrees(), theta.to_degrees(), psi.to_degrees()]
}

/// The ten-ellipsoid modified 3D Shepp-Logan head, scaled by `scale`
/// (the unscaled phantom fits inside the unit cube).
pub fn shepp_logan_3d(scale: f64) -> Result<Phantom> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "scale",
            reason: format!("must be positive, got {scale}"),
        });
    }
    let base: Phantom = SHEPP_LOGAN_TABLE.parse()?;
    Ok(base.scaled(scale))
}

/// Essential bandwidth `Ω = 3.3 / a`, with `a` the smallest semiaxis.
pub fn estimate_bandlimit(phantom: &Phantom) -> Result<f64> {
    phantom
        .ellipsoids
        .iter()
        .map(|e| e.semiaxes.min())
        .min_by(f64::total_cmp)
        .map(|a| 3.3 / a)
        .ok_or_else(|| Error::InvalidParameter {
            name: "phantom",
            reason: "no ellipsoids".into(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball(c: [f64; 3], r: f64, density: f64) -> Ellipsoid {
        Ellipsoid::new(Vector3::from(c), Vector3::repeat(r), Matrix3::identity(), density).unwrap()
    }

    fn line(o: [f64; 3], d: [f64; 3]) -> Ray {
        Ray {
            origin: Vector3::from(o),
            direction: Vector3::from(d),
        }
    }

    #[test]
    fn eval_examples() {
        let unit = Phantom::new(vec![ball([0.0; 3], 1.0, 1.0)]);
        assert_eq!(unit.eval(&Vector3::zeros()), 1.0);
        assert_eq!(unit.eval(&Vector3::new(1.1, 0.0, 0.0)), 0.0);
        let nested = Phantom::new(vec![ball([0.0; 3], 1.0, 2.0), ball([0.0; 3], 0.5, -1.0)]);
        assert_eq!(nested.eval(&Vector3::new(0.1, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn chord_examples() {
        let unit = Phantom::new(vec![ball([0.0; 3], 1.0, 1.0)]);
        assert!((unit.line_integral(&line([-3.0, 0.0, 0.0], [1.0, 0.0, 0.0])) - 2.0).abs() < 1e-14);
        assert!((unit.line_integral(&line([-3.0, 0.6, 0.0], [2.0, 0.0, 0.0])) - 1.6).abs() < 1e-14);
        assert_eq!(unit.line_integral(&line([-3.0, 1.2, 0.0], [1.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn rejects_invalid_ellipsoids() {
        let rot = Matrix3::identity();
        assert!(Ellipsoid::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 1.0), rot, 1.0).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Ellipsoid::new(Vector3::zeros(), Vector3::repeat(1.0), skew, 1.0).is_err());
        assert!(Ellipsoid::new(Vector3::zeros(), Vector3::repeat(1.0), -rot, 1.0).is_err());
    }

    #[test]
    fn shepp_logan_value_at_origin() {
        let p = shepp_logan_3d(1.0).unwrap();
        let expected: f64 = p
            .ellipsoids()
            .iter()
            .filter(|e| (e.to_unit * -e.center).norm_squared() <= 1.0)
            .map(|e| e.density)
            .sum();
        assert_eq!(p.ellipsoids().len(), 10);
        assert!((p.eval(&Vector3::zeros()) - expected).abs() < 1e-15);
        assert!((expected - 0.2).abs() < 1e-12);
    }

    #[test]
    fn shepp_logan_fits_object_cylinder() {
        let p = shepp_logan_3d(0.5).unwrap();
        assert!(p.support_radius() <= 0.5, "{}", p.support_radius());
        assert!(p.support_halflength() <= 0.5);
        let amin = p.ellipsoids().iter().map(|e| e.semiaxes().min()).fold(f64::MAX, f64::min);
        assert!((amin - 0.5 * 0.02).abs() < 1e-15);
    }

    #[test]
    fn bandlimit_examples() {
        let one = Phantom::new(vec![ball([0.0; 3], 0.05, 1.0)]);
        assert!((estimate_bandlimit(&one).unwrap() - 66.0).abs() < 1e-12);
        let big = Phantom::new(vec![ball([0.0; 3], 3.3, 1.0)]);
        assert!((estimate_bandlimit(&big).unwrap() - 1.0).abs() < 1e-15);
        let p = shepp_logan_3d(1.0).unwrap();
        let ratio = estimate_bandlimit(&p.scaled(0.5)).unwrap() / estimate_bandlimit(&p).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
        assert!(estimate_bandlimit(&Phantom::empty()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = shepp_logan_3d(0.5).unwrap();
        let q: Phantom = p.to_text().parse().unwrap();
        for (a, b) in p.ellipsoids().iter().zip(q.ellipsoids()) {
            assert!((a.center - b.center).norm() < 1e-12);
            assert!((a.semiaxes - b.semiaxes).norm() < 1e-12);
            assert!((a.rotation - b.rotation).abs().max() < 1e-12);
            assert_eq!(a.density, b.density);
        }
        assert!("1 2 3".parse::<Phantom>().is_err());
        assert!("0 0 0 1 1 x 0 0 0 1".parse::<Phantom>().is_err());
    }

    #[test]
    fn outside_support_is_zero() {
        let p = shepp_logan_3d(0.5).unwrap();
        let r = p.support_radius();
        for k in 0..32 {
            let t = k as f64 * 0.2;
            let o = Vector3::new((r + 0.01) * t.cos(), (r + 0.01) * t.sin(), 0.0);
            let d = Vector3::new(-t.sin(), t.cos(), 0.3);
            assert_eq!(p.line_integral_unit(&o, &d.normalize()), 0.0);
        }
    }

    proptest! {
        #[test]
        fn reversal_invariant(ox in -1.0..1.0f64, oy in -1.0..1.0f64, oz in -1.0..1.0f64,
                              th in 0.0..3.14f64, ph in 0.0..6.28f64) {
            let p = shepp_logan_3d(0.5).unwrap();
            let o = Vector3::new(ox, oy, oz);
            let d = Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let a = p.line_integral_unit(&o, &d);
            let b = p.line_integral_unit(&(o + 0.37 * d), &-d);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn additive_and_linear(ox in -1.0..1.0f64, oy in -1.0..1.0f64, th in 0.0..3.14f64,
                               ph in 0.0..6.28f64, w in -3.0..3.0f64) {
            let p = shepp_logan_3d(0.5).unwrap();
            let o = Vector3::new(ox, oy, 0.0);
            let d = Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let total = p.line_integral_unit(&o, &d);
            let (a, b) = p.ellipsoids().split_at(4);
            let sum = Phantom::new(a.to_vec()).line_integral_unit(&o, &d)
                + Phantom::new(b.to_vec()).line_integral_unit(&o, &d);
            prop_assert!((total - sum).abs() < 1e-12);
            let weighted: Vec<_> = p.ellipsoids().iter().map(|e| {
                Ellipsoid::new(e.center, e.semiaxes, e.rotation, w * e.density).unwrap()
            }).collect();
            let scaled = Phantom::new(weighted).line_integral_unit(&o, &d);
            prop_assert!((scaled - w * total).abs() < 1e-12);
        }
    }
}
