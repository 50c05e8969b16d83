//! Simulated projection data on arbitrary `(α, β, v)` sample sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ray, HelixGeometry};
use crate::lattice::LatticePoint;
use crate::phantom::Phantom;

/// Equispaced coordinate axis `start + i·step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        Self { start, step, len }
    }

    /// `len` points spread evenly over the closed interval `[lo, hi]`.
    pub fn spanning(lo: f64, hi: f64, len: usize) -> Self {
        let step = if len > 1 { (hi - lo) / (len - 1) as f64 } else { 1.0 };
        Self { start: lo, step, len }
    }

    /// `len` cell centres symmetric about zero with spacing `step`.
    pub fn centered(step: f64, len: usize) -> Self {
        Self {
            start: -0.5 * step * (len as f64 - 1.0),
            step,
            len,
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn last(&self) -> f64 {
        self.at(self.len.saturating_sub(1))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.at(i))
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.len == 0 || !(self.step > 0.0) || !self.start.is_finite() {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("axis needs len > 0 and step > 0, got {self:?}"),
            });
        }
        Ok(())
    }
}

/// Regular `(α, β, v)` grid. Values are stored view-major: α fastest, then
/// v, then β, so each view is a contiguous `v × α` detector image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub alpha: Axis,
    pub beta: Axis,
    pub v: Axis,
}

impl GridSpec {
    pub fn new(alpha: Axis, beta: Axis, v: Axis) -> Result<Self> {
        alpha.validate("alpha axis")?;
        beta.validate("beta axis")?;
        v.validate("v axis")?;
        Ok(Self { alpha, beta, v })
    }

    pub fn len(&self) -> usize {
        self.alpha.len * self.beta.len * self.v.len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view_len(&self) -> usize {
        self.alpha.len * self.v.len
    }

    pub fn index(&self, ia: usize, ib: usize, iv: usize) -> usize {
        (ib * self.v.len + iv) * self.alpha.len + ia
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        let ia = i % self.alpha.len;
        let iv = (i / self.alpha.len) % self.v.len;
        let ib = i / self.view_len();
        [self.alpha.at(ia), self.beta.at(ib), self.v.at(iv)]
    }
}

/// Where a sinogram was sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSet {
    Grid(GridSpec),
    Points(Vec<[f64; 3]>),
}

impl SampleSet {
    pub fn len(&self) -> usize {
        match self {
            SampleSet::Grid(g) => g.len(),
            SampleSet::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        match self {
            SampleSet::Grid(g) => g.point(i),
            SampleSet::Points(p) => p[i],
        }
    }

    pub fn from_lattice(points: &[LatticePoint]) -> Self {
        SampleSet::Points(points.iter().map(|p| [p.alpha, p.beta, p.v]).collect())
    }
}

/// Projection values on a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    samples: SampleSet,
    values: Vec<f64>,
    geometry: HelixGeometry,
    lattice_tag: String,
}

impl Sinogram {
    pub fn new(
        samples: SampleSet,
        values: Vec<f64>,
        geometry: HelixGeometry,
        lattice_tag: impl Into<String>,
    ) -> Result<Self> {
        if samples.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} sample positions but {} values",
                samples.len(),
                values.len()
            )));
        }
        Ok(Self {
            samples,
            values,
            geometry,
            lattice_tag: lattice_tag.into(),
        })
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.samples {
            SampleSet::Grid(g) => Some(g),
            SampleSet::Points(_) => None,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn geometry(&self) -> &HelixGeometry {
        &self.geometry
    }

    pub fn lattice_tag(&self) -> &str {
        &self.lattice_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same samples with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.samples.clone(), values, self.geometry, self.lattice_tag.clone())
    }
}

/// Line integral of `phantom` along the ray of one sample.
pub fn project_sample(phantom: &Phantom, geom: &HelixGeometry, p: [f64; 3]) -> Result<f64> {
    Ok(phantom.line_integral(&ray(p[0], p[1], p[2], geom)?))
}

/// Exact projections of `phantom` at every sample position.
pub fn simulate(
    phantom: &Phantom,
    geom: &HelixGeometry,
    samples: SampleSet,
    lattice_tag: &str,
) -> Result<Sinogram> {
    let b = geom.beta_max();
    let n = samples.len();
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = samples.point(i);
            if !(p[1].abs() <= b * (1.0 + 1e-12)) {
                return Err(Error::OutOfRange {
                    what: "beta",
                    value: p[1],
                    min: -b,
                    max: b,
                });
            }
            project_sample(phantom, geom, p)
        })
        .collect::<Result<Vec<f64>>>()?;
    Sinogram::new(samples, values, *geom, lattice_tag)
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn add_noise(sino: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be non-negative, got {sigma}"),
        });
    }
    if sigma == 0.0 {
        return Ok(sino.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter {
        name: "sigma",
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = sino.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    sino.with_values(values)
}
