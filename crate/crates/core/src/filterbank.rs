//! Support-shaped low-pass filtering and band-limited resampling of
//! sinograms.
//!
//! Spectra use the continuous transform `F(ω) = ∫ f(x) e^{−iω·x} dx`; a
//! sample set on lattice `T` estimates it as `|det T| Σ f(Tk) e^{−iω·Tk}`,
//! which equals `F` on the passband as long as the dual-lattice replicas of
//! the passband do not overlap.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::nufft::Nufft2;
use crate::scan::{Axis, GridSpec, SampleSet, Sinogram};
use crate::spectral::FrequencySupportSet;

/// Shape of the passband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Passband {
    /// The essential support set.
    Support(FrequencySupportSet),
    /// Axis-aligned box with the given half-extents in `(ω_α, ω_β, ω_v)`.
    Box([f64; 3]),
}

impl Passband {
    fn contains(&self, w: [f64; 3]) -> bool {
        match self {
            Passband::Support(s) => s.contains(w[0], w[1], w[2]),
            Passband::Box(b) => (0..3).all(|i| w[i].abs() <= b[i]),
        }
    }

    fn extent(&self) -> [f64; 3] {
        match self {
            Passband::Support(s) => s.bounding_box(),
            Passband::Box(b) => *b,
        }
    }
}

/// Raised-cosine transition width used unless a caller asks for a hard mask.
pub const DEFAULT_ROLLOFF: f64 = 0.05;

/// Frequency weighting: 1 inside the passband, 0 outside, with an optional
/// raised-cosine transition occupying the outer `rolloff` fraction (radially
/// from the origin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMask {
    passband: Passband,
    rolloff: f64,
}

impl SpectralMask {
    /// Hard 0/1 mask on the support set.
    pub fn support(set: FrequencySupportSet) -> Self {
        Self {
            passband: Passband::Support(set),
            rolloff: 0.0,
        }
    }

    /// Hard mask on the bounding box of the support set (no shape
    /// information; passes everything a rectangular Nyquist grid would).
    pub fn bounding_box(set: &FrequencySupportSet) -> Self {
        Self {
            passband: Passband::Box(set.bounding_box()),
            rolloff: 0.0,
        }
    }

    pub fn with_rolloff(mut self, rolloff: f64) -> Result<Self> {
        if !(0.0..=0.1).contains(&rolloff) {
            return Err(Error::InvalidParameter {
                name: "rolloff",
                reason: format!("must lie in [0, 0.1], got {rolloff}"),
            });
        }
        self.rolloff = rolloff;
        Ok(self)
    }

    pub fn passband(&self) -> &Passband {
        &self.passband
    }

    pub fn rolloff(&self) -> f64 {
        self.rolloff
    }

    /// Half-extents of the region where the weight can be nonzero.
    pub fn extent(&self) -> [f64; 3] {
        self.passband.extent()
    }

    pub fn weight(&self, w: [f64; 3]) -> f64 {
        if !self.passband.contains(w) {
            return 0.0;
        }
        let r = self.rolloff;
        if r == 0.0 {
            return 1.0;
        }
        let inner = 1.0 - r;
        let scaled = |s: f64| [w[0] / s, w[1] / s, w[2] / s];
        if self.passband.contains(scaled(inner)) {
            return 1.0;
        }
        // Smallest s in [1−r, 1] with w/s inside the passband.
        let (mut lo, mut hi) = (inner, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.passband.contains(scaled(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = (hi - inner) / r;
        0.5 * (1.0 + (PI * t).cos())
    }
}

/// Smallest `n' ≥ n` whose only prime factors are 2, 3 and 5.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Signed frequency index of FFT bin `i` out of `n`.
fn signed(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn is_nyquist(i: usize, n: usize) -> bool {
    n % 2 == 0 && i == n / 2
}

/// In-place FFT of every line of a 3D array along one axis.
fn fft_axis(data: &mut [Complex64], dims: [usize; 3], axis: usize, inverse: bool) {
    let n = dims[axis];
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let strides = [dims[1] * dims[2], dims[2], 1];
    if axis == 2 {
        data.par_chunks_mut(n).for_each(|line| fft.process(line));
        return;
    }
    let stride = strides[axis];
    let (oa, ob) = match axis {
        0 => (1, 2),
        _ => (0, 2),
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..dims[oa] {
        for j in 0..dims[ob] {
            let base = i * strides[oa] + j * strides[ob];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[base + k * stride];
            }
            fft.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                data[base + k * stride] = *b;
            }
        }
    }
}

/// Result of filtering on the padded FFT grid, for checks.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct PaddedFilter {
    pub output: Vec<f64>,
    pub masked_energy: f64,
    pub padded_output_energy: f64,
    pub max_imag: f64,
}

pub(crate) fn lowpass_padded(sino: &Sinogram, mask: &SpectralMask, pad: bool) -> Result<PaddedFilter> {
    let grid = *sino.grid().ok_or_else(|| Error::ShapeMismatch(
        "low-pass filtering needs a regular (alpha, beta, v) grid".into(),
    ))?;
    let periodic_alpha = (grid.alpha.len as f64 * grid.alpha.step - TAU).abs() < 1e-9;
    let padded = |n: usize| if pad { fast_len((n as f64 * 1.1).ceil() as usize) } else { n };
    let na = if periodic_alpha { grid.alpha.len } else { padded(grid.alpha.len) };
    let nb = padded(grid.beta.len);
    let nv = padded(grid.v.len);
    // Array order [β][v][α], matching the sinogram layout.
    let dims = [nb, nv, na];
    let mut data = vec![Complex64::new(0.0, 0.0); nb * nv * na];
    let vals = sino.values();
    for ib in 0..grid.beta.len {
        for iv in 0..grid.v.len {
            for ia in 0..grid.alpha.len {
                data[(ib * nv + iv) * na + ia].re = vals[grid.index(ia, ib, iv)];
            }
        }
    }
    for axis in 0..3 {
        fft_axis(&mut data, dims, axis, false);
    }
    let dw = [
        TAU / (na as f64 * grid.alpha.step),
        TAU / (nb as f64 * grid.beta.step),
        TAU / (nv as f64 * grid.v.step),
    ];
    let total = (na * nb * nv) as f64;
    let masked_energy: f64 = data
        .par_chunks_mut(nv * na)
        .enumerate()
        .map(|(ib, plane)| {
            let wb = signed(ib, nb) as f64 * dw[1];
            let mut e = 0.0;
            for iv in 0..nv {
                let wv = signed(iv, nv) as f64 * dw[2];
                for ia in 0..na {
                    let c = &mut plane[iv * na + ia];
                    let nyq = is_nyquist(ib, nb) || is_nyquist(iv, nv) || is_nyquist(ia, na);
                    let w = if nyq {
                        0.0
                    } else {
                        mask.weight([signed(ia, na) as f64 * dw[0], wb, wv])
                    };
                    *c *= w;
                    e += c.norm_sqr();
                }
            }
            e
        })
        .sum::<f64>()
        / total;
    for axis in 0..3 {
        fft_axis(&mut data, dims, axis, true);
    }
    let mut output = vec![0.0; grid.len()];
    let mut max_imag = 0.0f64;
    let mut padded_output_energy = 0.0;
    for ib in 0..nb {
        for iv in 0..nv {
            for ia in 0..na {
                let c = data[(ib * nv + iv) * na + ia] / total;
                padded_output_energy += c.norm_sqr();
                max_imag = max_imag.max(c.im.abs());
                if ib < grid.beta.len && iv < grid.v.len && ia < grid.alpha.len {
                    output[grid.index(ia, ib, iv)] = c.re;
                }
            }
        }
    }
    Ok(PaddedFilter {
        output,
        masked_energy,
        padded_output_energy,
        max_imag,
    })
}

/// Applies `mask` to a sinogram on a regular grid. α is treated as periodic
/// when the grid covers a full turn; otherwise every axis is zero-padded by
/// 10% before transforming.
pub fn lowpass_filter(sino: &Sinogram, mask: &SpectralMask) -> Result<Sinogram> {
    let out = lowpass_padded(sino, mask, true)?;
    sino.with_values(out.output)
}

/// Band-limited interpolation of lattice samples onto a regular grid.
///
/// Samples are gathered into rows of constant `v` (the lattice must have its
/// third coordinate on a one-dimensional grid), transformed with a
/// two-dimensional non-uniform FFT per row and an FFT across rows, weighted
/// by `mask · |det T|`, and evaluated on `target`. `target.beta.step` must
/// resolve the passband (`π/Δβ ≥` its ω_β extent).
pub fn lattice_to_uniform(
    sparse: &Sinogram,
    spec: &LatticeSpec,
    mask: &SpectralMask,
    target: &GridSpec,
) -> Result<Sinogram> {
    let values = resample(sparse, spec, mask, target)?;
    Sinogram::new(
        SampleSet::Grid(*target),
        values,
        *sparse.geometry(),
        format!("resampled:{}", sparse.lattice_tag()),
    )
}

/// Spacing of the v coordinate across lattice rows.
fn row_step(spec: &LatticeSpec) -> Result<f64> {
    let t = spec.matrix();
    let row: Vec<f64> = (0..3).map(|j| t[(2, j)]).collect();
    let c = row
        .iter()
        .filter(|x| x.abs() > 0.0)
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    if !c.is_finite() {
        return Err(Error::Singular("lattice has no extent in v".into()));
    }
    for &x in &row {
        let r = x / c;
        if (r - r.round()).abs() > 1e-9 {
            return Err(Error::Incommensurate(format!(
                "lattice v coordinates are not on a common row spacing ({row:?})"
            )));
        }
    }
    Ok(c)
}

struct Rows {
    /// `(row index, α, β, value)` grouped by row.
    rows: Vec<(i64, Vec<f64>, Vec<f64>, Vec<f64>)>,
    alpha: (f64, f64),
    beta: (f64, f64),
}

fn gather_rows(sparse: &Sinogram, spec: &LatticeSpec, c: f64) -> Result<Rows> {
    let inv = spec
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::Singular("sampling matrix".into()))?;
    let samples = sparse.samples();
    let vals = sparse.values();
    let mut by_row: std::collections::BTreeMap<i64, (Vec<f64>, Vec<f64>, Vec<f64>)> =
        Default::default();
    let mut alpha = (f64::INFINITY, f64::NEG_INFINITY);
    let mut beta = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..samples.len() {
        let p = samples.point(i);
        let k = inv * Vector3::from(p);
        if k.iter().any(|x| (x - x.round()).abs() > 1e-6) {
            return Err(Error::Incommensurate(format!(
                "sample {i} at ({:.6}, {:.6}, {:.6}) is not on the lattice",
                p[0], p[1], p[2]
            )));
        }
        let n = (p[2] / c).round() as i64;
        alpha = (alpha.0.min(p[0]), alpha.1.max(p[0]));
        beta = (beta.0.min(p[1]), beta.1.max(p[1]));
        let e = by_row.entry(n).or_default();
        e.0.push(p[0]);
        e.1.push(p[1]);
        e.2.push(vals[i]);
    }
    if by_row.is_empty() {
        return Err(Error::ShapeMismatch("no samples to resample".into()));
    }
    Ok(Rows {
        rows: by_row.into_iter().map(|(n, (a, b, v))| (n, a, b, v)).collect(),
        alpha,
        beta,
    })
}

fn resample(
    sparse: &Sinogram,
    spec: &LatticeSpec,
    mask: &SpectralMask,
    target: &GridSpec,
) -> Result<Vec<f64>> {
    let ext = mask.extent();
    let c = row_step(spec)?;
    if PI / c < ext[2] * (1.0 - 1e-9) {
        return Err(Error::Incommensurate(format!(
            "row spacing {c:.6} cannot represent v-frequencies up to {:.6}",
            ext[2]
        )));
    }
    let db = target.beta.step;
    if PI / db < ext[1] * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter {
            name: "target beta step",
            reason: format!("{db:.6} is coarser than the passband requires ({:.6})", PI / ext[1]),
        });
    }
    let rows = gather_rows(sparse, spec, c)?;

    // Periods: cover samples and targets with 10% slack against wraparound.
    let a_lo = rows.alpha.0.min(target.alpha.start);
    let a_hi = rows.alpha.1.max(target.alpha.last());
    let la = (1.1 * (a_hi - a_lo)).max(4.0 * PI / ext[0].max(1e-12));
    let ac = 0.5 * (a_lo + a_hi);
    let na = 2 * ((ext[0] * la / TAU).ceil() as usize) + 2;

    let b_lo = rows.beta.0.min(target.beta.start);
    let b_hi = rows.beta.1.max(target.beta.last());
    let nb = fast_len(((1.1 * (b_hi - b_lo)) / db).ceil() as usize + 2);
    let lb = nb as f64 * db;
    let bc = target.beta.start + ((0.5 * (b_lo + b_hi) - target.beta.start) / db).round() * db;

    let n_lo = rows.rows.first().map(|r| r.0).unwrap_or(0);
    let n_hi = rows.rows.last().map(|r| r.0).unwrap_or(0);
    let t_lo = (target.v.start / c).floor() as i64;
    let t_hi = (target.v.last() / c).ceil() as i64;
    let (r_lo, r_hi) = (n_lo.min(t_lo), n_hi.max(t_hi));
    let nv = fast_len((1.1 * (r_hi - r_lo + 1) as f64).ceil() as usize + 1);
    let nc = (r_lo + r_hi).div_euclid(2);
    let lv = nv as f64 * c;

    // Stage 1: per-row NUFFT, then FFT across rows.
    let plan = Nufft2::new((na, nb), (la, lb));
    let per_row: Vec<(usize, Vec<Complex64>)> = rows
        .rows
        .par_iter()
        .map(|(n, a, b, v)| {
            let xs: Vec<f64> = a.iter().map(|x| x - ac).collect();
            let ys: Vec<f64> = b.iter().map(|y| y - bc).collect();
            let slot = (n - nc).rem_euclid(nv as i64) as usize;
            (slot, plan.type1(&xs, &ys, v))
        })
        .collect();
    let npq = na * nb;
    let mut spec_f = vec![Complex64::new(0.0, 0.0); npq * nv];
    for (slot, g) in per_row {
        for (pq, val) in g.into_iter().enumerate() {
            spec_f[pq * nv + slot] = val;
        }
    }
    let mut planner = FftPlanner::new();
    let fft_v = planner.plan_fft_forward(nv);
    spec_f.par_chunks_mut(nv).for_each(|line| fft_v.process(line));

    // Stage 2: passband weighting.
    let scale = spec.cell_volume() / (la * lb * lv);
    let (dwa, dwb, dwv) = (TAU / la, TAU / lb, TAU / lv);
    let half_a = (na / 2) as i64;
    let half_b = (nb / 2) as i64;
    spec_f.par_chunks_mut(nv).enumerate().for_each(|(pq, line)| {
        let p = (pq / nb) as i64 - half_a;
        let qi = pq % nb;
        let q = qi as i64 - half_b;
        let edge = p == -half_a || q == -half_b;
        for (s, val) in line.iter_mut().enumerate() {
            let w = if edge || is_nyquist(s, nv) {
                0.0
            } else {
                mask.weight([p as f64 * dwa, q as f64 * dwb, signed(s, nv) as f64 * dwv])
            };
            *val *= w * scale;
        }
    });

    // Stage 3: evaluate at target rows, then views, then columns.
    let nl = target.v.len;
    let ev: Vec<Complex64> = (0..nl)
        .flat_map(|l| {
            let dv = target.v.at(l) - nc as f64 * c;
            (0..nv).map(move |s| Complex64::from_polar(1.0, signed(s, nv) as f64 * dwv * dv))
        })
        .collect();
    // h[(l * na + p) * nb + q]
    let mut h = vec![Complex64::new(0.0, 0.0); nl * npq];
    h.par_chunks_mut(npq).enumerate().for_each(|(l, plane)| {
        let e = &ev[l * nv..(l + 1) * nv];
        for pq in 0..npq {
            let line = &spec_f[pq * nv..(pq + 1) * nv];
            plane[pq] = line.iter().zip(e).map(|(a, b)| a * b).sum();
        }
    });
    drop(spec_f);

    let fft_b = planner.plan_fft_inverse(nb);
    let nj = target.beta.len;
    let offsets: Vec<usize> = (0..nj)
        .map(|j| {
            let o = ((target.beta.at(j) - bc) / db).round() as i64;
            o.rem_euclid(nb as i64) as usize
        })
        .collect();
    // k[(j * nl + l) * na + p]
    let mut k = vec![Complex64::new(0.0, 0.0); nj * nl * na];
    let lines: Vec<(usize, Vec<Complex64>)> = h
        .par_chunks_mut(nb)
        .enumerate()
        .map(|(lp, line)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); nb];
            for (qi, v) in line.iter().enumerate() {
                let q = qi as i64 - half_b;
                buf[q.rem_euclid(nb as i64) as usize] = *v;
            }
            fft_b.process(&mut buf);
            (lp, offsets.iter().map(|&o| buf[o]).collect())
        })
        .collect();
    drop(h);
    for (lp, vals) in lines {
        let (l, p) = (lp / na, lp % na);
        for (j, v) in vals.into_iter().enumerate() {
            k[(j * nl + l) * na + p] = v;
        }
    }

    let ncol = target.alpha.len;
    let ea: Vec<Complex64> = (0..ncol)
        .flat_map(|i| {
            let da = target.alpha.at(i) - ac;
            (0..na).map(move |p| Complex64::from_polar(1.0, (p as i64 - half_a) as f64 * dwa * da))
        })
        .collect();
    let mut out = vec![0.0; target.len()];
    out.par_chunks_mut(target.view_len())
        .enumerate()
        .for_each(|(j, view)| {
            for l in 0..nl {
                let coeffs = &k[(j * nl + l) * na..(j * nl + l + 1) * na];
                for i in 0..ncol {
                    let e = &ea[i * na..(i + 1) * na];
                    let s: f64 = coeffs.iter().zip(e).map(|(a, b)| a.re * b.re - a.im * b.im).sum();
                    view[l * ncol + i] = s;
                }
            }
        });
    Ok(out)
}

/// A regular grid with the given axes; convenience for callers building
/// reconstruction targets.
pub fn target_grid(alpha: Axis, beta: Axis, v: Axis) -> Result<GridSpec> {
    GridSpec::new(alpha, beta, v)
}
