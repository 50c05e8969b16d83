//! Desk-scale sampling and reconstruction runs shared by the command line
//! tool and the end-to-end tests.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::filterbank::{lattice_to_uniform, SpectralMask, DEFAULT_ROLLOFF};
use crate::geometry::{pi_line_solve, pi_v_range};
use crate::lattice::{enumerate_lattice, LatticeSpec, SampleBox};
use crate::metrics::{dynamic_range, mse, ssim};
use crate::phantom::Phantom;
use crate::recon::{katsevich_reconstruct, Volume, VolumeSpec};
use crate::scan::{simulate, Axis, GridSpec, SampleSet, Sinogram};
use crate::spectral::{FrequencySupportSet, SupportParams};

/// Margin on the object fan for detector columns and acquisition boxes.
const FAN_MARGIN: f64 = 1.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskSetup {
    pub params: SupportParams,
    pub detector_cols: usize,
    pub detector_rows: usize,
    pub volume_n: usize,
    pub rolloff: f64,
}

impl DeskSetup {
    pub fn new(params: SupportParams, detector_cols: usize, detector_rows: usize, volume_n: usize) -> Result<Self> {
        for (name, n, min) in [
            ("detector columns", detector_cols, 8),
            ("detector rows", detector_rows, 8),
            ("volume size", volume_n, 11),
        ] {
            if n < min {
                return Err(Error::InvalidParameter {
                    name: "desk setup",
                    reason: format!("{name} must be at least {min}, got {n}"),
                });
            }
        }
        Ok(Self {
            params,
            detector_cols,
            detector_rows,
            volume_n,
            rolloff: DEFAULT_ROLLOFF,
        })
    }

    pub fn support_set(&self) -> FrequencySupportSet {
        FrequencySupportSet::new(self.params)
    }

    pub fn mask(&self) -> Result<SpectralMask> {
        SpectralMask::support(self.support_set()).with_rolloff(self.rolloff)
    }

    /// Sample region: the object fan with margin, the full scan, and every
    /// `v` at which the object cylinder casts a shadow.
    pub fn acquisition_box(&self) -> SampleBox {
        let g = self.params.geometry();
        let a = FAN_MARGIN * g.fan_half_angle();
        let b = g.beta_max();
        let r = g.radius();
        let v = 4.0 * r * g.half_length() / (r - g.object_radius());
        SampleBox {
            alpha: [-a, a],
            beta: [-b, b],
            v: [-v, v],
        }
    }

    /// Reconstruction detector: `cols × rows` over the object fan and the
    /// PI-window (with margin), views at the uniform lattice's β step over
    /// the full scan.
    pub fn recon_grid(&self, beta_step: f64) -> Result<GridSpec> {
        let g = self.params.geometry();
        let a = FAN_MARGIN * g.fan_half_angle();
        let v = pi_v_range(g, 1.15) / a.cos();
        let b = g.beta_max();
        let nb = (2.0 * b / beta_step).floor() as usize + 1;
        let start = -0.5 * (nb - 1) as f64 * beta_step;
        GridSpec::new(
            Axis::spanning(-a, a, self.detector_cols),
            Axis::new(start, beta_step, nb),
            Axis::spanning(-v, v, self.detector_rows),
        )
    }

    /// `n³` voxels over `[−ρ, ρ]²` and the tallest centred slab whose
    /// PI-intervals fit in the scan with a two-view margin.
    pub fn volume_spec(&self, beta_step: f64) -> Result<VolumeSpec> {
        let g = self.params.geometry();
        let rho = g.object_radius();
        let b = g.beta_max() - 2.0 * beta_step;
        let fits = |z: f64| {
            (0..16).all(|i| {
                let t = i as f64 * std::f64::consts::TAU / 16.0;
                [0.0, 0.5, 0.999].iter().all(|&s| {
                    let x = Vector3::new(s * rho * t.cos(), s * rho * t.sin(), z);
                    [z, -z].iter().all(|&zz| {
                        let x = Vector3::new(x.x, x.y, zz);
                        pi_line_solve(&x, g).is_ok_and(|p| p.beta1 >= -b && p.beta2 <= b)
                    })
                })
            })
        };
        let (mut lo, mut hi) = (0.0, g.half_length());
        if !fits(lo) {
            return Err(Error::InvalidGeometry("scan too short for any PI-interval".into()));
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = 0.98 * lo;
        VolumeSpec::cube(self.volume_n, rho, self.volume_n, -z, z)
    }

    /// Lattice samples of `phantom` inside the acquisition box.
    pub fn acquire(&self, phantom: &Phantom, lattice: &LatticeSpec, tag: &str) -> Result<Sinogram> {
        let points = enumerate_lattice(lattice, &self.acquisition_box())?;
        simulate(phantom, self.params.geometry(), SampleSet::from_lattice(&points), tag)
    }

    /// Support-filtered resampling of lattice data onto the reconstruction
    /// grid, followed by reconstruction.
    pub fn reconstruct(&self, sparse: &Sinogram, lattice: &LatticeSpec, beta_step: f64) -> Result<Volume> {
        let grid = self.recon_grid(beta_step)?;
        let uniform = lattice_to_uniform(sparse, lattice, &self.mask()?, &grid)?;
        katsevich_reconstruct(&uniform, &self.volume_spec(beta_step)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub mse_slice: f64,
    pub ssim_slice: f64,
    pub mse_volume: f64,
}

/// Metrics of `rec` against `truth` on the central axial slice (SSIM range
/// from the truth) and over the whole volume.
pub fn quality(rec: &Volume, truth: &Volume) -> Result<Quality> {
    if rec.spec() != truth.spec() {
        return Err(Error::ShapeMismatch(format!(
            "volumes differ: {:?} vs {:?}",
            rec.spec().dims,
            truth.spec().dims
        )));
    }
    let [nx, ny, _] = rec.spec().dims;
    let (a, b) = (rec.central_slice(), truth.central_slice());
    Ok(Quality {
        mse_slice: mse(a, b)?,
        ssim_slice: ssim(a, b, nx, ny, dynamic_range(b))?,
        mse_volume: mse(rec.data(), truth.data())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HelixGeometry;
    use crate::lattice::uniform_sampling_matrix;

    fn setup() -> DeskSetup {
        let g = HelixGeometry::new(2.0, 0.2, 0.4, 0.5).unwrap();
        DeskSetup::new(SupportParams::new(g, 66.0).unwrap(), 128, 64, 64).unwrap()
    }

    #[test]
    fn layout_matches_desk_scale() {
        let s = setup();
        let u = uniform_sampling_matrix(&s.params).unwrap();
        let db = u.matrix()[(1, 1)];
        let grid = s.recon_grid(db).unwrap();
        assert_eq!(grid.beta.len, 3826);
        assert!(grid.beta.last() <= s.params.geometry().beta_max());
        let vol = s.volume_spec(db).unwrap();
        let zmax = vol.origin[2].abs() + 0.5 * vol.spacing[2];
        // An axis point needs β_z ± π/2, so the slab ends below Z − h/4;
        // off-axis points at ρ need up to asin(ρ/R) more on each side.
        let g = s.params.geometry();
        let axis_limit = g.half_length() - g.pitch() / 4.0;
        let off_axis = axis_limit - g.pitch() * (g.object_radius() / g.radius()).asin() / std::f64::consts::TAU;
        assert!(zmax < off_axis && zmax > 0.95 * off_axis, "{zmax} vs {off_axis}");
        let b = s.acquisition_box();
        assert!((b.v[1] - 3.2 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn small_setups_rejected() {
        let s = setup();
        assert!(DeskSetup::new(s.params, 4, 64, 64).is_err());
    }
}
