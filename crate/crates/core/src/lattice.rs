//! Sampling lattices in `(α, β, v)` and their duals.
//!
//! A lattice `{T k : k ∈ ℤ³}` has the dual `2π T^{-T}`; sampling on it
//! replicates the spectrum on the dual lattice. The interlaced lattice below
//! places replicas of the support set so that they touch without overlap.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::geometry::{pi_v_range, HelixGeometry};
use crate::spectral::{FrequencySupportSet, SupportParams};

/// A sampling matrix together with its dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    matrix: Matrix3<f64>,
    dual: Matrix3<f64>,
}

impl LatticeSpec {
    /// Builds the lattice from its sampling matrix.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self> {
        let inv = invert(&matrix)?;
        Ok(Self {
            matrix,
            dual: TAU * inv.transpose(),
        })
    }

    /// Builds the lattice whose dual is `dual`.
    pub fn from_dual(dual: Matrix3<f64>) -> Result<Self> {
        let inv = invert(&dual)?;
        Ok(Self {
            matrix: TAU * inv.transpose(),
            dual,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn dual(&self) -> &Matrix3<f64> {
        &self.dual
    }

    /// Volume of one lattice cell, `|det T|`.
    pub fn cell_volume(&self) -> f64 {
        self.matrix.determinant().abs()
    }

    /// Sample point for integer index `k`.
    pub fn point(&self, k: [i64; 3]) -> Vector3<f64> {
        self.matrix * Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64)
    }
}

fn invert(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let scale = m.abs().max();
    let det = m.determinant();
    if !(det.abs() > 1e-14 * scale * scale * scale) {
        return Err(Error::Singular(format!("determinant {det:e}")));
    }
    m.try_inverse()
        .ok_or_else(|| Error::Singular(format!("determinant {det:e}")))
}

/// Combined ω_β dilation `D = D(0) + D(W_v)` used by the interlaced lattice.
pub fn combined_d(params: &SupportParams) -> f64 {
    params.d_bound(0.0) + params.d_bound(params.wv())
}

/// Dual (frequency-domain) basis of the interlaced lattice; columns are
/// `(Ω(R+ρ), Ωρ+D, W_v)`, `(2ΩR, −D, W_v)`, `(−2ΩR, D, W_v)`.
pub fn efficient_dual(params: &SupportParams) -> Matrix3<f64> {
    let g = params.geometry();
    let (r, rho, om, w) = (g.radius(), g.object_radius(), params.omega(), params.wv());
    let d = combined_d(params);
    Matrix3::new(
        om * (r + rho), 2.0 * om * r, -2.0 * om * r,
        om * rho + d, -d, d,
        w, w, w,
    )
}

/// Closed form of `2π (dual)^{-T}` for the interlaced lattice.
pub fn efficient_matrix_closed_form(params: &SupportParams) -> Matrix3<f64> {
    let g = params.geometry();
    let (r, rho, om, w) = (g.radius(), g.object_radius(), params.omega(), params.wv());
    let d = combined_d(params);
    let q = 2.0 * r * om * rho + 3.0 * r * d + rho * d;
    let a = PI / (om * q);
    let b = PI / q;
    let c = PI / w;
    Matrix3::new(
        a * 2.0 * d, a * om * rho, -a * (2.0 * d + om * rho),
        b * 4.0 * r, -b * (3.0 * r + rho), b * (rho - r),
        0.0, c, c,
    )
}

/// The interlaced sampling lattice `T`.
pub fn efficient_sampling_matrix(params: &SupportParams) -> Result<LatticeSpec> {
    LatticeSpec::from_dual(efficient_dual(params))
}

/// Rectangular Nyquist lattice for the bounding box of the support set:
/// `π diag(1/(Ω(R+ρ)), 1/(Ωρ + D(W_v)), 1/W_v)`.
pub fn uniform_sampling_matrix(params: &SupportParams) -> Result<LatticeSpec> {
    let [bm, bk, bv] = FrequencySupportSet::new(*params).bounding_box();
    LatticeSpec::from_matrix(Matrix3::from_diagonal(&Vector3::new(PI / bm, PI / bk, PI / bv)))
}

/// `det(T)/det(U) = 4(R+ρ)(Ωρ + D(W_v)) / (2RΩρ + 3RD + ρD)`.
pub fn gain_ratio(params: &SupportParams) -> f64 {
    let g = params.geometry();
    let (r, rho, om) = (g.radius(), g.object_radius(), params.omega());
    let d = combined_d(params);
    4.0 * (r + rho) * (om * rho + params.d_bound(params.wv()))
        / (2.0 * r * om * rho + 3.0 * r * d + rho * d)
}

/// Fraction of samples saved by the interlaced lattice, `1 − det(U)/det(T)`.
pub fn sample_reduction(params: &SupportParams) -> f64 {
    1.0 - 1.0 / gain_ratio(params)
}

/// Region in `(α, β, v)` to enumerate. α is half-open `[lo, hi)`, the others
/// closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub v: [f64; 2],
}

impl SampleBox {
    /// Full α circle `[-π, π)`, the whole scan, and the PI-window rows.
    pub fn full_scan(geom: &HelixGeometry, v_margin: f64) -> Self {
        let v = pi_v_range(geom, v_margin);
        let b = geom.beta_max();
        Self {
            alpha: [-PI, PI],
            beta: [-b, b],
            v: [-v, v],
        }
    }

    /// As [`full_scan`](Self::full_scan) but restricted to rays that meet the
    /// object cylinder. The α interval is closed on both ends here.
    pub fn object_fan(geom: &HelixGeometry, v_margin: f64) -> Self {
        let a = geom.fan_half_angle();
        Self {
            alpha: [-a, a.next_up()],
            ..Self::full_scan(geom, v_margin)
        }
    }

    pub fn volume(&self) -> f64 {
        (self.alpha[1] - self.alpha[0]) * (self.beta[1] - self.beta[0]) * (self.v[1] - self.v[0])
    }

    fn lo(&self) -> [f64; 3] {
        [self.alpha[0], self.beta[0], self.v[0]]
    }

    fn hi(&self) -> [f64; 3] {
        [self.alpha[1], self.beta[1], self.v[1]]
    }

    fn is_degenerate(&self) -> bool {
        !(self.alpha[1] > self.alpha[0] && self.beta[1] >= self.beta[0] && self.v[1] >= self.v[0])
    }
}

/// One enumerated sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub index: [i64; 3],
    pub alpha: f64,
    pub beta: f64,
    pub v: f64,
}

const BOUNDARY_EPS: f64 = 1e-9;

/// Calls `f` for every lattice point in `slab` (fixed `k1`) in
/// lexicographic `(k2, k3)` order.
fn visit_slab(
    spec: &LatticeSpec,
    b: &SampleBox,
    k1: i64,
    k2_range: (i64, i64),
    mut f: impl FnMut(LatticePoint),
) {
    let t = spec.matrix;
    let lo = b.lo();
    let hi = b.hi();
    let tol: [f64; 3] = std::array::from_fn(|r| BOUNDARY_EPS * (lo[r].abs().max(hi[r].abs()) + 1.0));
    for k2 in k2_range.0..=k2_range.1 {
        let base: [f64; 3] =
            std::array::from_fn(|r| t[(r, 0)] * k1 as f64 + t[(r, 1)] * k2 as f64);
        let mut k3_lo = f64::NEG_INFINITY;
        let mut k3_hi = f64::INFINITY;
        let mut feasible = true;
        for r in 0..3 {
            let c = t[(r, 2)];
            let (a, bnd) = (lo[r] - base[r] - tol[r], hi[r] - base[r] + tol[r]);
            if c.abs() < 1e-300 {
                if !(a <= 0.0 && 0.0 <= bnd) {
                    feasible = false;
                }
                continue;
            }
            let (x, y) = if c > 0.0 { (a / c, bnd / c) } else { (bnd / c, a / c) };
            k3_lo = k3_lo.max(x);
            k3_hi = k3_hi.min(y);
        }
        if !feasible || k3_lo > k3_hi {
            continue;
        }
        for k3 in (k3_lo.ceil() as i64)..=(k3_hi.floor() as i64) {
            let p: [f64; 3] = std::array::from_fn(|r| base[r] + t[(r, 2)] * k3 as f64);
            // Exact half-open test on α; closed (with tolerance) elsewhere.
            let alpha_ok = p[0] >= lo[0] - tol[0] && p[0] < hi[0] - tol[0];
            let rest_ok = (1..3).all(|r| p[r] >= lo[r] - tol[r] && p[r] <= hi[r] + tol[r]);
            if alpha_ok && rest_ok {
                f(LatticePoint {
                    index: [k1, k2, k3],
                    alpha: p[0],
                    beta: p[1],
                    v: p[2],
                });
            }
        }
    }
}

/// Index ranges of `k1` and `k2` that can reach the box.
fn index_ranges(spec: &LatticeSpec, b: &SampleBox) -> Result<[(i64, i64); 2]> {
    let inv = invert(&spec.matrix)?;
    let lo = b.lo();
    let hi = b.hi();
    Ok(std::array::from_fn(|i| {
        let mut mn = 0.0;
        let mut mx = 0.0;
        for r in 0..3 {
            let c = inv[(i, r)];
            let (p, q) = (c * lo[r], c * hi[r]);
            mn += p.min(q);
            mx += p.max(q);
        }
        ((mn - 1e-6).floor() as i64, (mx + 1e-6).ceil() as i64)
    }))
}

/// All lattice points in `b`, ordered lexicographically by index.
pub fn enumerate_lattice(spec: &LatticeSpec, b: &SampleBox) -> Result<Vec<LatticePoint>> {
    if b.is_degenerate() {
        return Ok(Vec::new());
    }
    let [r1, r2] = index_ranges(spec, b)?;
    let slabs: Vec<Vec<LatticePoint>> = (r1.0..=r1.1)
        .into_par_iter()
        .map(|k1| {
            let mut out = Vec::new();
            visit_slab(spec, b, k1, r2, |p| out.push(p));
            out
        })
        .collect();
    Ok(slabs.into_iter().flatten().collect())
}

/// Number of lattice points in `b` without materializing them.
pub fn count_lattice(spec: &LatticeSpec, b: &SampleBox) -> Result<usize> {
    if b.is_degenerate() {
        return Ok(0);
    }
    let [r1, r2] = index_ranges(spec, b)?;
    Ok((r1.0..=r1.1)
        .into_par_iter()
        .map(|k1| {
            let mut n = 0usize;
            visit_slab(spec, b, k1, r2, |_| n += 1);
            n
        })
        .sum())
}

/// Outcome of a Monte-Carlo overlap search between support replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilingReport {
    /// Probes drawn inside the support set.
    pub probes: usize,
    /// Replica translations that could intersect the set at all.
    pub neighbors: usize,
    /// Probes found inside some translated replica.
    pub violations: usize,
}

/// Draws `n_probes` points uniformly inside the support set and checks that
/// none lies in a replica shifted by a nonzero dual-lattice vector.
/// `dual_scale` shrinks (< 1) or stretches the dual lattice.
pub fn tiling_disjointness(
    params: &SupportParams,
    n_probes: usize,
    dual_scale: f64,
    seed: u64,
) -> Result<TilingReport> {
    let set = FrequencySupportSet::new(*params);
    let dual = efficient_dual(params) * dual_scale;
    let inv = invert(&dual)?;
    let bbox = set.bounding_box();

    // Replicas can only meet the set if the shift is within twice the box.
    let reach: [i64; 3] = std::array::from_fn(|j| {
        (0..3)
            .map(|i| inv[(j, i)].abs() * 2.0 * bbox[i])
            .sum::<f64>()
            .ceil() as i64
    });
    let mut shifts = Vec::new();
    for a in -reach[0]..=reach[0] {
        for b in -reach[1]..=reach[1] {
            for c in -reach[2]..=reach[2] {
                if (a, b, c) == (0, 0, 0) {
                    continue;
                }
                let s = dual * Vector3::new(a as f64, b as f64, c as f64);
                if (0..3).all(|i| s[i].abs() <= 2.0 * bbox[i]) {
                    shifts.push(s);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(n_probes);
    while probes.len() < n_probes {
        let p = Vector3::new(
            rng.random_range(-bbox[0]..=bbox[0]),
            rng.random_range(-bbox[1]..=bbox[1]),
            rng.random_range(-bbox[2]..=bbox[2]),
        );
        if set.contains(p.x, p.y, p.z) {
            probes.push(p);
        }
    }
    let violations = probes
        .par_iter()
        .filter(|p| {
            shifts.iter().any(|s| {
                let q = *p - s;
                set.contains(q.x, q.y, q.z)
            })
        })
        .count();
    Ok(TilingReport {
        probes: n_probes,
        neighbors: shifts.len(),
        violations,
    })
}
