//! Voxel volumes and filtered backprojection for helical cone-beam data on a
//! curved detector.
//!
//! The sinogram `(α, β, v)` maps onto the cylindrical detector of radius
//! `D = 2R` centred on the source via `γ = −α`, `w = v / cos α`. Each view
//! goes through a derivative at fixed ray direction, length weighting,
//! Hilbert filtering along κ-lines and cosine weighting, and is then
//! backprojected over each voxel's PI-interval.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filterbank::fast_len;
use crate::geometry::{pi_line_solve, HelixGeometry};
use crate::phantom::Phantom;
use crate::scan::{GridSpec, Sinogram};

/// Regular voxel grid. `origin` is the centre of voxel `(0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl VolumeSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: format!("every dimension must be at least 1, got {dims:?}"),
            });
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "spacing",
                reason: format!("must be positive and finite, got {spacing:?}"),
            });
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "origin",
                reason: format!("must be finite, got {origin:?}"),
            });
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// `n × n` voxels tiling `[−half, half]²` in x–y and `nz` slices tiling
    /// `[z_lo, z_hi]`.
    pub fn cube(n: usize, half: f64, nz: usize, z_lo: f64, z_hi: f64) -> Result<Self> {
        if !(half > 0.0) || !(z_hi > z_lo) || n == 0 || nz == 0 {
            return Err(Error::InvalidParameter {
                name: "volume extent",
                reason: format!("need half > 0 and z_hi > z_lo, got {half}, [{z_lo}, {z_hi}]"),
            });
        }
        let dxy = 2.0 * half / n as f64;
        let dz = (z_hi - z_lo) / nz as f64;
        Self::new(
            [n, n, nz],
            [dxy, dxy, dz],
            [-half + 0.5 * dxy, -half + 0.5 * dxy, z_lo + 0.5 * dz],
        )
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    spec: VolumeSpec,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(spec: VolumeSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "volume {:?} needs {} voxels, got {}",
                spec.dims,
                spec.len(),
                data.len()
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn zeros(spec: VolumeSpec) -> Self {
        Self {
            data: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn spec(&self) -> &VolumeSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.spec.index(i, j, k)]
    }

    /// Axial slice `k` as an `nx × ny` image, x fastest.
    pub fn slice_z(&self, k: usize) -> &[f64] {
        let n = self.spec.slice_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn central_slice(&self) -> &[f64] {
        self.slice_z(self.spec.dims[2] / 2)
    }
}

/// Phantom density at every voxel centre.
pub fn ground_truth_volume(phantom: &Phantom, spec: &VolumeSpec) -> Volume {
    let mut data = vec![0.0; spec.len()];
    data.par_chunks_mut(spec.slice_len())
        .enumerate()
        .for_each(|(k, slice)| {
            for j in 0..spec.dims[1] {
                for i in 0..spec.dims[0] {
                    slice[j * spec.dims[0] + i] = phantom.eval(&spec.center(i, j, k));
                }
            }
        });
    Volume { spec: *spec, data }
}

/// Four-tap cubic convolution (Keys, a = −1/2) weights for offset `t ∈ [0, 1)`.
fn keys_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Linear interpolation entry: `(index, fraction)`; index `usize::MAX` marks
/// a position outside the table.
type Lerp = (usize, f64);
const OUTSIDE: usize = usize::MAX;

fn lerp_at(x: f64, x0: f64, dx: f64, n: usize) -> Lerp {
    let t = (x - x0) / dx;
    if !(t >= 0.0) || t > (n - 1) as f64 {
        return (OUTSIDE, 0.0);
    }
    let i = (t.floor() as usize).min(n.saturating_sub(2));
    (i, t - i as f64)
}

/// Curved-detector sampling and the view-independent resampling tables.
struct Detector {
    ncol: usize,
    nw: usize,
    gamma0: f64,
    dgamma: f64,
    w0: f64,
    dw: f64,
    /// Per `(j, i)`: first sinogram row and Keys weights for `v = w cos α`.
    to_w: Vec<(isize, [f64; 4])>,
    /// Per `(l, i)`: position of `w_κ(γ_i, ψ_l)` in the w-grid.
    forward: Vec<Lerp>,
    /// Per `(j, i)`: position of `ψ̂(γ_i, w_j)` in the ψ-grid.
    backward: Vec<Lerp>,
    npsi: usize,
    /// FFT of the zero-padded Hilbert kernel.
    kernel: Vec<Complex64>,
    nfft: usize,
}

fn kappa_w(gamma: f64, psi: f64, scale: f64) -> f64 {
    let psi_cot = if psi.abs() < 1e-8 { 1.0 } else { psi / psi.tan() };
    scale * (psi * gamma.cos() + psi_cot * gamma.sin())
}

impl Detector {
    fn new(grid: &GridSpec, geom: &HelixGeometry) -> Result<Self> {
        let ncol = grid.alpha.len;
        let nw = grid.v.len;
        if ncol < 4 || nw < 4 || grid.beta.len < 3 {
            return Err(Error::DetectorCoverage(format!(
                "need at least 4 columns, 4 rows and 3 views, got {ncol} x {nw} x {}",
                grid.beta.len
            )));
        }
        let fan = geom.fan_half_angle();
        let (a_lo, a_hi) = (grid.alpha.start, grid.alpha.last());
        if a_lo > -fan || a_hi < fan {
            return Err(Error::DetectorCoverage(format!(
                "columns span alpha in [{a_lo:.4}, {a_hi:.4}], object needs ±{fan:.4}"
            )));
        }
        let dgamma = grid.alpha.step;
        let gamma0 = -a_hi;
        let (w0, dw) = (grid.v.start, grid.v.step);
        let w_last = grid.v.last();
        let gamma_at = |i: usize| gamma0 + i as f64 * dgamma;
        let alpha_of = |i: usize| grid.alpha.at(ncol - 1 - i);

        let mut to_w = Vec::with_capacity(nw * ncol);
        for j in 0..nw {
            let w = w0 + j as f64 * dw;
            for i in 0..ncol {
                let t = (w * alpha_of(i).cos() - grid.v.start) / grid.v.step;
                let base = t.floor();
                to_w.push((base as isize - 1, keys_weights(t - base)));
            }
        }

        let npsi = 2 * nw;
        let psi_max = FRAC_PI_2 + fan;
        let dpsi = 2.0 * psi_max / (npsi - 1) as f64;
        let scale = geom.pitch() / PI;
        let psi_at = |l: usize| -psi_max + l as f64 * dpsi;
        let mut forward = Vec::with_capacity(npsi * ncol);
        for l in 0..npsi {
            for i in 0..ncol {
                let g = gamma_at(i);
                let w = kappa_w(g, psi_at(l), scale);
                let pos = lerp_at(w, w0, dw, nw);
                if pos.0 == OUTSIDE && g.abs() <= fan {
                    return Err(Error::DetectorCoverage(format!(
                        "rows span w in [{w0:.4}, {w_last:.4}], kappa-lines need {w:.4}"
                    )));
                }
                forward.push(pos);
            }
        }

        // Segments ordered by distance of their nearer end from ψ = 0.
        let mut order: Vec<usize> = (0..npsi - 1).collect();
        order.sort_by(|&a, &b| {
            let da = psi_at(a).abs().min(psi_at(a + 1).abs());
            let db = psi_at(b).abs().min(psi_at(b + 1).abs());
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let mut backward = vec![(OUTSIDE, 0.0); nw * ncol];
        for i in 0..ncol {
            let g = gamma_at(i);
            let wk: Vec<f64> = (0..npsi).map(|l| kappa_w(g, psi_at(l), scale)).collect();
            for j in 0..nw {
                let w = w0 + j as f64 * dw;
                for &l in &order {
                    let (a, b) = (wk[l], wk[l + 1]);
                    if (a <= w && w <= b) || (b <= w && w <= a) {
                        let frac = if a == b { 0.0 } else { (w - a) / (b - a) };
                        backward[j * ncol + i] = (l, frac);
                        break;
                    }
                }
            }
        }

        let nfft = fast_len(2 * ncol + 1);
        let mut kernel = vec![Complex64::new(0.0, 0.0); nfft];
        for n in 1..ncol as i64 {
            let x = n as f64 * dgamma;
            let hn = (1.0 - (PI * n as f64).cos()) / (PI * n as f64) * (x / x.sin());
            kernel[n as usize] = Complex64::new(hn, 0.0);
            kernel[nfft - n as usize] = Complex64::new(-hn, 0.0);
        }
        FftPlanner::new().plan_fft_forward(nfft).process(&mut kernel);

        Ok(Self {
            ncol,
            nw,
            gamma0,
            dgamma,
            w0,
            dw,
            to_w,
            forward,
            backward,
            npsi,
            kernel,
            nfft,
        })
    }

    /// View `k` of the sinogram resampled to `(γ, w)`, layout `[j][i]`.
    fn view(&self, sino: &[f64], grid: &GridSpec, k: usize) -> Vec<f64> {
        let (ncol, nv) = (self.ncol, grid.v.len as isize);
        let mut out = vec![0.0; self.nw * ncol];
        for j in 0..self.nw {
            for i in 0..ncol {
                let (base, wts) = self.to_w[j * ncol + i];
                let col = ncol - 1 - i;
                let mut s = 0.0;
                for (t, wt) in wts.iter().enumerate() {
                    let r = base + t as isize;
                    if (0..nv).contains(&r) {
                        s += wt * sino[grid.index(col, k, r as usize)];
                    }
                }
                out[j * ncol + i] = s;
            }
        }
        out
    }

    /// Filtered view `gF` from the resampled views at `k − 1`, `k`, `k + 1`.
    fn filter_view(
        &self,
        prev: &[f64],
        cur: &[f64],
        next: &[f64],
        dlambda: f64,
        dist: f64,
        fft: &(std::sync::Arc<dyn rustfft::Fft<f64>>, std::sync::Arc<dyn rustfft::Fft<f64>>),
    ) -> Vec<f64> {
        let (ncol, nw) = (self.ncol, self.nw);
        let mut g2 = vec![0.0; nw * ncol];
        for j in 0..nw {
            let w = self.w0 + j as f64 * self.dw;
            let len = dist / (dist * dist + w * w).sqrt();
            let row = j * ncol;
            for i in 0..ncol {
                let dl = (next[row + i] - prev[row + i]) / dlambda;
                let dg = if i == 0 {
                    (cur[row + 1] - cur[row]) / self.dgamma
                } else if i == ncol - 1 {
                    (cur[row + i] - cur[row + i - 1]) / self.dgamma
                } else {
                    (cur[row + i + 1] - cur[row + i - 1]) / (2.0 * self.dgamma)
                };
                g2[row + i] = len * (dl + dg);
            }
        }

        let mut g4 = vec![0.0; self.npsi * ncol];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let norm = 1.0 / self.nfft as f64;
        for l in 0..self.npsi {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for i in 0..ncol {
                let (j, f) = self.forward[l * ncol + i];
                if j != OUTSIDE {
                    let v = g2[j * ncol + i] * (1.0 - f) + if f > 0.0 { g2[(j + 1) * ncol + i] * f } else { 0.0 };
                    buf[i] = Complex64::new(v, 0.0);
                }
            }
            fft.0.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&self.kernel) {
                *b *= k * norm;
            }
            fft.1.process(&mut buf);
            for i in 0..ncol {
                g4[l * ncol + i] = buf[i].re;
            }
        }

        let mut out = vec![0.0; nw * ncol];
        for j in 0..nw {
            for i in 0..ncol {
                let (l, f) = self.backward[j * ncol + i];
                if l == OUTSIDE {
                    continue;
                }
                let g5 = g4[l * ncol + i] * (1.0 - f) + g4[(l + 1) * ncol + i] * f;
                let gamma = self.gamma0 + i as f64 * self.dgamma;
                out[j * ncol + i] = gamma.cos() * g5;
            }
        }
        out
    }

    fn sample(&self, view: &[f64], gamma: f64, w: f64) -> f64 {
        let (i, fi) = lerp_at(gamma, self.gamma0, self.dgamma, self.ncol);
        let (j, fj) = lerp_at(w, self.w0, self.dw, self.nw);
        if i == OUTSIDE || j == OUTSIDE {
            return 0.0;
        }
        let n = self.ncol;
        let at = |jj: usize, ii: usize| view[jj * n + ii];
        let top = at(j, i) * (1.0 - fi) + at(j, i + 1) * fi;
        let bot = at(j + 1, i) * (1.0 - fi) + at(j + 1, i + 1) * fi;
        top * (1.0 - fj) + bot * fj
    }
}

/// Integral of the hat function centred on node `k` (spacing 1) over
/// `[a, b]`, in grid units.
fn hat_integral(k: f64, a: f64, b: f64) -> f64 {
    // Antiderivative of max(0, 1 − |t|).
    let prim = |t: f64| {
        let t = t.clamp(-1.0, 1.0);
        if t < 0.0 {
            0.5 * (1.0 + t) * (1.0 + t)
        } else {
            1.0 - 0.5 * (1.0 - t) * (1.0 - t)
        }
    };
    (prim(b - k) - prim(a - k)).max(0.0)
}

/// Reconstructs voxels with `x² + y² ≤ ρ²` from a sinogram on a regular
/// grid; other voxels are zero. The β axis must cover every voxel's
/// PI-interval plus one view on each side.
pub fn katsevich_reconstruct(sino: &Sinogram, spec: &VolumeSpec) -> Result<Volume> {
    let grid = *sino.grid().ok_or_else(|| {
        Error::ShapeMismatch("reconstruction needs a regular (alpha, beta, v) grid".into())
    })?;
    let geom = *sino.geometry();
    let det = Detector::new(&grid, &geom)?;
    let rho = geom.object_radius();
    let (lam0, dlam) = (grid.beta.start, grid.beta.step);
    let nviews = grid.beta.len;

    // PI-intervals in view units, per voxel.
    let nxy = spec.slice_len();
    let intervals: Vec<Option<(f64, f64)>> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let (k, rem) = (idx / nxy, idx % nxy);
            let x = spec.center(rem % spec.dims[0], rem / spec.dims[0], k);
            if x.x * x.x + x.y * x.y > rho * rho {
                return Ok(None);
            }
            let pi = pi_line_solve(&x, &geom)?;
            Ok(Some(((pi.beta1 - lam0) / dlam, (pi.beta2 - lam0) / dlam)))
        })
        .collect::<Result<_>>()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in intervals.iter().flatten() {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if !lo.is_finite() {
        return Ok(Volume::zeros(*spec));
    }
    if lo < 1.0 || hi > (nviews - 2) as f64 {
        return Err(Error::DetectorCoverage(format!(
            "views cover beta in [{:.4}, {:.4}], PI-intervals need [{:.4}, {:.4}] plus one view",
            lam0,
            grid.beta.last(),
            lam0 + lo * dlam,
            lam0 + hi * dlam
        )));
    }
    let k_lo = lo.floor() as usize;
    let k_hi = (hi.ceil() as usize).min(nviews - 2);

    let mut planner = FftPlanner::new();
    let ffts = (
        planner.plan_fft_forward(det.nfft),
        planner.plan_fft_inverse(det.nfft),
    );
    let dist = 2.0 * geom.radius();
    let values = sino.values();
    let filtered: Vec<Vec<f64>> = (k_lo..=k_hi)
        .into_par_iter()
        .map(|k| {
            let prev = det.view(values, &grid, k - 1);
            let cur = det.view(values, &grid, k);
            let next = det.view(values, &grid, k + 1);
            det.filter_view(&prev, &cur, &next, 2.0 * dlam, dist, &ffts)
        })
        .collect();

    let r = geom.radius();
    let rate = geom.axial_rate();
    let mut data = vec![0.0; spec.len()];
    data.par_chunks_mut(nxy).enumerate().for_each(|(kz, slice)| {
        for (rem, out) in slice.iter_mut().enumerate() {
            let Some((a, b)) = intervals[kz * nxy + rem] else {
                continue;
            };
            let x = spec.center(rem % spec.dims[0], rem / spec.dims[0], kz);
            let mut acc = 0.0;
            for k in (a.floor() as usize)..=(b.ceil() as usize) {
                let wt = hat_integral(k as f64, a, b);
                if wt == 0.0 {
                    continue;
                }
                let lam = lam0 + k as f64 * dlam;
                let (s, c) = lam.sin_cos();
                let depth = r - x.x * c - x.y * s;
                let gamma = (-x.x * s + x.y * c).atan2(depth);
                let w = dist * gamma.cos() * (x.z - rate * lam) / depth;
                acc += wt * det.sample(&filtered[k - k_lo], gamma, w) / depth;
            }
            *out = acc * dlam / TAU;
        }
    });
    Volume::new(*spec, data)
}
