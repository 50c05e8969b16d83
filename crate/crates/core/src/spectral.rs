//! Essential spectral support of helical cone-beam projections.
//!
//! Frequencies are `(m, ω_β, ω_v)`: `m` is the integer harmonic of the
//! fan angle α, `ω_β` the view-angle frequency (per radian) and `ω_v` the
//! detector-row frequency (rad/m).

use std::f64::consts::TAU;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::HelixGeometry;

/// Fraction of energy that an essential support must capture.
pub const ENERGY_THRESHOLD: f64 = 0.98;

fn check_rbar(rbar: f64) -> Result<()> {
    if (0.0..1.0).contains(&rbar) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "rbar",
            value: rbar,
            min: 0.0,
            max: 1.0,
        })
    }
}

/// `|ĝ₃,k| = r̄^|k| / (1 − r̄²)`, Fourier coefficients of
/// `1 / (1 + r̄² − 2r̄ cos β)`.
pub fn g3_coeff_mag(rbar: f64, k: i32) -> Result<f64> {
    check_rbar(rbar)?;
    Ok(rbar.powi(k.abs()) / (1.0 - rbar * rbar))
}

/// Fourier coefficient magnitudes of `(1 − r̄ cos β) / (1 + r̄² − 2r̄ cos β)`:
/// 1 for `n = 0`, `r̄^|n| / 2` otherwise.
pub fn g5_coeff_mag(rbar: f64, n: i32) -> Result<f64> {
    check_rbar(rbar)?;
    Ok(if n == 0 { 1.0 } else { 0.5 * rbar.powi(n.abs()) })
}

/// Harmonic cutoff `K = ⌊log(0.01(1 + r̄²)) / (2 log r̄)⌋`.
pub fn essential_k(rbar: f64) -> Result<u32> {
    check_rbar(rbar)?;
    if rbar == 0.0 {
        return Ok(0);
    }
    let x = (0.01 * (1.0 + rbar * rbar)).ln() / (2.0 * rbar.ln());
    Ok(x.floor().max(0.0) as u32)
}

fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "B",
            reason: format!("must be positive, got {b}"),
        })
    }
}

/// Essential half-width `16/B` of the spectrum of the indicator of `[-B, B]`.
pub fn indicator_width(b: f64) -> Result<f64> {
    check_b(b)?;
    Ok(16.0 / b)
}

/// Essential half-width `48/B` of the spectrum of `β·1[-B, B](β)`.
pub fn linear_width(b: f64) -> Result<f64> {
    check_b(b)?;
    Ok(48.0 / b)
}

/// Energy density `|2 sin(Bω)/ω|²` of the indicator spectrum.
pub fn indicator_kernel_energy(b: f64, w: f64) -> f64 {
    if w.abs() < 1e-8 {
        return 4.0 * b * b;
    }
    let s = 2.0 * (b * w).sin() / w;
    s * s
}

/// Energy density `|(2/ω²)(ωB cos Bω − sin Bω)|²` of the ramp spectrum.
pub fn linear_kernel_energy(b: f64, w: f64) -> f64 {
    let x = b * w;
    if x.abs() < 1e-3 {
        // Taylor: ωB cos Bω − sin Bω ≈ −x³/3 + x⁵/30.
        let s = 2.0 * b * b * b * w * (-1.0 / 3.0 + x * x / 30.0);
        return s * s;
    }
    let s = 2.0 / (w * w) * (x * x.cos() - x.sin());
    s * s
}

/// `C(z, ω_v) = (2|ω_v| / (1 − r̄)) (|z| + hB/2π)`.
pub fn c_factor(z: f64, omega_v: f64, rbar: f64, geom: &HelixGeometry) -> f64 {
    2.0 * omega_v.abs() / (1.0 - rbar) * (z.abs() + geom.axial_rate() * geom.beta_max())
}

/// `W_v = (R + ρ) Ω / (2 √(R² − ρ²))`.
pub fn wv_bound(geom: &HelixGeometry, omega: f64) -> f64 {
    let (r, rho) = (geom.radius(), geom.object_radius());
    (r + rho) * omega / (2.0 * (r * r - rho * rho).sqrt())
}

/// Cylindrical coordinates of an object point normalized by the helix radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub rbar: f64,
    pub phi: f64,
    pub z: f64,
}

impl PolarPoint {
    /// On the axis the azimuth is undefined and set to 0.
    pub fn from_cartesian(x: &Vector3<f64>, geom: &HelixGeometry) -> Result<Self> {
        let r = x.x.hypot(x.y);
        let rbar = r / geom.radius();
        if !(rbar < 1.0) {
            return Err(Error::OutsideCylinder {
                x: x.x,
                y: x.y,
                z: x.z,
            });
        }
        let phi = if r == 0.0 { 0.0 } else { x.y.atan2(x.x) };
        Ok(Self { rbar, phi, z: x.z })
    }
}

/// Constants defining the support set for a geometry and object bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportParams {
    geometry: HelixGeometry,
    omega: f64,
    k: u32,
    wv: f64,
    rbar_max: f64,
}

impl SupportParams {
    /// `omega` is the radius (rad/m) of the ball containing the object's
    /// essential spectrum. K and C use the worst case over the object
    /// cylinder: `r̄ = ρ/R`, `|z| = Z`.
    pub fn new(geometry: HelixGeometry, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "Omega",
                reason: format!("must be positive, got {omega}"),
            });
        }
        let rbar_max = geometry.rbar_max();
        Ok(Self {
            geometry,
            omega,
            k: essential_k(rbar_max)?,
            wv: wv_bound(&geometry, omega),
            rbar_max,
        })
    }

    pub fn geometry(&self) -> &HelixGeometry {
        &self.geometry
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn wv(&self) -> f64 {
        self.wv
    }

    pub fn rbar_max(&self) -> f64 {
        self.rbar_max
    }

    /// `ω_β` dilation `D(ω_v) = K + 16/B + (K + 48/B)(1 + C(Z, ω_v))`.
    pub fn d_bound(&self, omega_v: f64) -> f64 {
        let g = &self.geometry;
        let b = g.beta_max();
        let k = self.k as f64;
        let c = c_factor(g.half_length(), omega_v, self.rbar_max, g);
        k + 16.0 / b + (k + 48.0 / b) * (1.0 + c)
    }
}

/// `D(ω_v)` for the given parameters.
pub fn d_bound(omega_v: f64, params: &SupportParams) -> f64 {
    params.d_bound(omega_v)
}

/// Upper edge of the bow-tie at harmonic `m` (valid for `|m| ≤ (R+ρ)Ω`).
/// The lower edge is `−bowtie_upper(−m)`.
fn bowtie_upper(m: f64, r: f64, rho: f64, omega: f64) -> f64 {
    if m >= 0.0 {
        rho / (rho + r) * m
    } else if m >= (rho - r) * omega {
        rho / (rho - r) * m
    } else {
        m + omega * r
    }
}

fn dilated_bowtie_contains(m: f64, k: f64, r: f64, rho: f64, omega: f64, d: f64) -> bool {
    if !(m.abs() <= (r + rho) * omega) {
        return false;
    }
    let hi = bowtie_upper(m, r, rho, omega) + d;
    let lo = -bowtie_upper(-m, r, rho, omega) - d;
    lo <= k && k <= hi
}

/// Membership in the bow-tie spectral support of a fan-beam sinogram of an
/// object with bandwidth `omega` inside radius ρ.
pub fn bowtie_contains(m: f64, k: f64, geom: &HelixGeometry, omega: f64) -> bool {
    dilated_bowtie_contains(m, k, geom.radius(), geom.object_radius(), omega, 0.0)
}

/// The three-dimensional essential support of the projection data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySupportSet {
    params: SupportParams,
}

impl FrequencySupportSet {
    pub fn new(params: SupportParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &SupportParams {
        &self.params
    }

    /// Closed-set membership of `(m, ω_β, ω_v)`.
    pub fn contains(&self, m: f64, omega_beta: f64, omega_v: f64) -> bool {
        let p = &self.params;
        if !(omega_v.abs() <= p.wv) {
            return false;
        }
        let g = &p.geometry;
        dilated_bowtie_contains(
            m,
            omega_beta,
            g.radius(),
            g.object_radius(),
            p.omega,
            p.d_bound(omega_v),
        )
    }

    /// Boundary of the `(m, ω_β)` cross-section at fixed `ω_v`, as a
    /// counter-clockwise polygon (non-convex, eight vertices).
    pub fn cross_section(&self, omega_v: f64) -> Result<Vec<(f64, f64)>> {
        let p = &self.params;
        if !(omega_v.abs() <= p.wv) {
            return Err(Error::OutOfRange {
                what: "omega_v",
                value: omega_v,
                min: -p.wv,
                max: p.wv,
            });
        }
        let (r, rho) = (p.geometry.radius(), p.geometry.object_radius());
        let om = p.omega;
        let d = p.d_bound(omega_v);
        Ok(vec![
            ((r + rho) * om, rho * om + d),
            (0.0, d),
            ((rho - r) * om, rho * om + d),
            (-(r + rho) * om, -rho * om + d),
            (-(r + rho) * om, -rho * om - d),
            (0.0, -d),
            ((r - rho) * om, -rho * om - d),
            ((r + rho) * om, rho * om - d),
        ])
    }

    /// Axis-aligned half-extents `((R+ρ)Ω, ρΩ + D(W_v), W_v)` of the set.
    pub fn bounding_box(&self) -> [f64; 3] {
        let p = &self.params;
        let (r, rho) = (p.geometry.radius(), p.geometry.object_radius());
        [
            (r + rho) * p.omega,
            rho * p.omega + p.d_bound(p.wv),
            p.wv,
        ]
    }
}

/// Membership test in `set`.
pub fn support_contains(m: f64, omega_beta: f64, omega_v: f64, set: &FrequencySupportSet) -> bool {
    set.contains(m, omega_beta, omega_v)
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = vertices[i];
            let (x1, y1) = vertices[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    0.5 * twice.abs()
}

/// Quadrature settings for [`evaluate_ex`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Requested β step; rounded down so `2B/step` is an even integer.
    pub step: f64,
    /// Allowed `|S(step) − S(2·step)|` relative to `∫|integrand| dβ`.
    pub tol: f64,
}

impl Quadrature {
    pub fn for_geometry(geom: &HelixGeometry) -> Self {
        Self {
            step: geom.beta_max() / 4096.0,
            tol: 1e-6,
        }
    }
}

/// β-samples of the single-point kernel, reused across frequencies.
///
/// After the delta constraints are integrated out, the kernel spectrum of
/// point `x` is
///
/// ```text
/// E(m, ω_β, ω_v) = (1/2π) ∫_{-B}^{B} g₃(β−φ)/R² · exp(−j(ω_β β + m α*(β) + ω_v v*(β))) dβ
/// ```
///
/// where `α*`, `v*` are the detector coordinates of `x` seen from `γ(β)`.
#[derive(Debug, Clone)]
pub struct ExKernel {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// Simpson weight × amplitude × `exp(−j ω_v v*)`.
    fine: Vec<Complex64>,
    /// Same with the doubled-step Simpson weights (zero on odd samples).
    coarse: Vec<Complex64>,
    l1: f64,
    tol: f64,
}

impl ExKernel {
    pub fn new(
        x: &Vector3<f64>,
        omega_v: f64,
        geom: &HelixGeometry,
        quad: Quadrature,
    ) -> Result<Self> {
        if !(quad.step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("must be positive, got {}", quad.step),
            });
        }
        let pp = PolarPoint::from_cartesian(x, geom)?;
        let b = geom.beta_max();
        // Four-interval blocks so the doubled step is also an even count.
        let blocks = ((2.0 * b / quad.step) / 4.0).ceil().max(1.0) as usize;
        let n = 4 * blocks;
        let hstep = 2.0 * b / n as f64;
        let r2 = geom.radius() * geom.radius();
        let rb = pp.rbar;
        let mut beta = Vec::with_capacity(n + 1);
        let mut alpha = Vec::with_capacity(n + 1);
        let mut fine = Vec::with_capacity(n + 1);
        let mut coarse = Vec::with_capacity(n + 1);
        let mut l1 = 0.0;
        for i in 0..=n {
            let bt = -b + i as f64 * hstep;
            let th = bt - pp.phi;
            let (s, c) = th.sin_cos();
            let den = 1.0 + rb * rb - 2.0 * rb * c;
            let amp = 1.0 / (TAU * r2 * den);
            let a = (rb * s).atan2(1.0 - rb * c);
            let v = 2.0 * (pp.z - geom.axial_rate() * bt) * (1.0 - rb * c) / den;
            let phase = Complex64::from_polar(amp, -omega_v * v);
            let wf = simpson_weight(i, n) * hstep / 3.0;
            let wc = if i % 2 == 0 {
                simpson_weight(i / 2, n / 2) * 2.0 * hstep / 3.0
            } else {
                0.0
            };
            l1 += wf * amp;
            beta.push(bt);
            alpha.push(a);
            fine.push(phase * wf);
            coarse.push(phase * wc);
        }
        Ok(Self {
            beta,
            alpha,
            fine,
            coarse,
            l1,
            tol: quad.tol,
        })
    }

    /// Kernel value and the step-halving change.
    pub fn eval_with_error(&self, m: f64, omega_beta: f64) -> (Complex64, f64) {
        let mut sf = Complex64::new(0.0, 0.0);
        let mut sc = Complex64::new(0.0, 0.0);
        for i in 0..self.beta.len() {
            let e = Complex64::from_polar(1.0, -(omega_beta * self.beta[i] + m * self.alpha[i]));
            sf += self.fine[i] * e;
            sc += self.coarse[i] * e;
        }
        (sf, (sf - sc).norm())
    }

    /// Kernel value, failing when halving the step is not yet converged.
    pub fn eval(&self, m: f64, omega_beta: f64) -> Result<Complex64> {
        let (v, change) = self.eval_with_error(m, omega_beta);
        let rel = change / self.l1;
        if rel > self.tol {
            return Err(Error::Quadrature {
                change: rel,
                tol: self.tol,
            });
        }
        Ok(v)
    }

    /// `∫ |integrand| dβ`, the scale for convergence checks.
    pub fn l1_norm(&self) -> f64 {
        self.l1
    }
}

fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Single kernel spectrum value `E_x(m, ω_β, ω_v)`.
pub fn evaluate_ex(
    x: &Vector3<f64>,
    m: i32,
    omega_beta: f64,
    omega_v: f64,
    geom: &HelixGeometry,
    quad: Quadrature,
) -> Result<Complex64> {
    ExKernel::new(x, omega_v, geom, quad)?.eval(m as f64, omega_beta)
}

/// `E_x` sampled on an `(m, ω_β)` grid at one `ω_v`.
#[derive(Debug, Clone)]
pub struct ExGrid {
    pub ms: Vec<i32>,
    pub omega_betas: Vec<f64>,
    pub omega_v: f64,
    /// Row-major: `values[i * omega_betas.len() + j]` is at `(ms[i], omega_betas[j])`.
    pub values: Vec<Complex64>,
    /// Largest step-halving change relative to the kernel's L1 norm.
    pub max_rel_change: f64,
}

impl ExGrid {
    /// Fraction of `Σ|E|²` on grid points inside `set`.
    pub fn energy_fraction_inside(&self, set: &FrequencySupportSet) -> f64 {
        let nb = self.omega_betas.len();
        let mut inside = 0.0;
        let mut total = 0.0;
        for (i, &m) in self.ms.iter().enumerate() {
            for (j, &wb) in self.omega_betas.iter().enumerate() {
                let e = self.values[i * nb + j].norm_sqr();
                total += e;
                if set.contains(m as f64, wb, self.omega_v) {
                    inside += e;
                }
            }
        }
        if total == 0.0 {
            1.0
        } else {
            inside / total
        }
    }
}

/// Evaluates `E_x` on a grid, in parallel over `m`.
///
/// Fails if the step-halving change anywhere exceeds `quad.tol`.
pub fn ex_grid(
    x: &Vector3<f64>,
    ms: &[i32],
    omega_betas: &[f64],
    omega_v: f64,
    geom: &HelixGeometry,
    quad: Quadrature,
) -> Result<ExGrid> {
    let kernel = ExKernel::new(x, omega_v, geom, quad)?;
    let rows: Vec<(Vec<Complex64>, f64)> = ms
        .par_iter()
        .map(|&m| {
            let mut worst = 0.0f64;
            let row = omega_betas
                .iter()
                .map(|&wb| {
                    let (v, change) = kernel.eval_with_error(m as f64, wb);
                    worst = worst.max(change);
                    v
                })
                .collect();
            (row, worst)
        })
        .collect();
    let mut values = Vec::with_capacity(ms.len() * omega_betas.len());
    let mut worst = 0.0f64;
    for (row, w) in rows {
        values.extend(row);
        worst = worst.max(w);
    }
    let max_rel_change = worst / kernel.l1_norm();
    if max_rel_change > quad.tol {
        return Err(Error::Quadrature {
            change: max_rel_change,
            tol: quad.tol,
        });
    }
    Ok(ExGrid {
        ms: ms.to_vec(),
        omega_betas: omega_betas.to_vec(),
        omega_v,
        values,
        max_rel_change,
    })
}

/// Frequency grid for checking that single-point kernels stay inside the
/// support set at one `ω_v`.
///
/// `m` spans `|m| ≤ (R − ρ)Ω`, where the cross-section is the dilated
/// point wedge; beyond it the bow-tie corners come from the object's band
/// limit, which a point does not have. `ω_β` covers 1.25 times the section
/// half-height on an integer-spaced grid, since the α-kernel is 2π-periodic
/// in β and its spectrum is a line spectrum at integer frequencies.
pub fn containment_grid(params: &SupportParams, omega_v: f64, n: usize) -> Result<(Vec<i32>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "grid size",
            reason: format!("need at least 2 points, got {n}"),
        });
    }
    let g = params.geometry();
    let om = params.omega();
    let m_half = (g.radius() - g.object_radius()) * om;
    let ms = symmetric_grid(m_half, n).iter().map(|m| m.round() as i32).collect();
    let half = 1.25 * (g.object_radius() * om + params.d_bound(omega_v));
    let step = (2.0 * half / n as f64).ceil();
    let lo = -((n / 2) as f64);
    let wb = (0..n).map(|i| (lo + i as f64) * step).collect();
    Ok((ms, wb))
}

/// Object points that stress the support bounds: the axis, rim points at
/// both ends of the cylinder and a few interior points.
pub fn probe_points(geom: &HelixGeometry) -> Vec<Vector3<f64>> {
    let rho = 0.999 * geom.object_radius();
    let z = 0.999 * geom.half_length();
    vec![
        Vector3::zeros(),
        Vector3::new(rho, 0.0, z),
        Vector3::new(0.0, -rho, -z),
        Vector3::new(-0.6 * rho, 0.7 * rho, -z),
        Vector3::new(0.2 * rho, 0.4 * rho, 0.5 * z),
        Vector3::new(-0.5 * rho, -0.5 * rho, 0.0),
    ]
}

/// `n` equispaced values covering `[-half, half]` inclusive.
pub fn symmetric_grid(half: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect()
}
