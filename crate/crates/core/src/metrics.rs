//! Image and volume quality metrics.

use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Mean squared difference.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty inputs".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `max − min` of the values, the dynamic range used by [`ssim`].
pub fn dynamic_range(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, x) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *x = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

/// Separable "valid" filtering of a row-major `width × height` image.
fn filter_valid(img: &[f64], width: usize, height: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let ow = width - WINDOW + 1;
    let oh = height - WINDOW + 1;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| w[k] * img[y * width + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| w[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local structural similarity of two `width × height` images
/// (row-major), with an 11×11 Gaussian window (σ = 1.5) evaluated where it
/// fits entirely inside the image, and stabilizers `(0.01 L)²`, `(0.03 L)²`
/// for dynamic range `L`.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize, range: f64) -> Result<f64> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "{width} x {height} image needs {} values, got {} and {}",
            width * height,
            a.len(),
            b.len()
        )));
    }
    if width < WINDOW || height < WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "images must be at least {WINDOW} x {WINDOW}, got {width} x {height}"
        )));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dynamic range",
            reason: format!("must be positive, got {range}"),
        });
    }
    let w = gaussian_window();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        let v: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        filter_valid(&v, width, height, &w)
    };
    let mu_a = filter_valid(a, width, height, &w);
    let mu_b = filter_valid(b, width, height, &w);
    let aa = prod(&|x, _| x * x);
    let bb = prod(&|_, y| y * y);
    let ab = prod(&|x, y| x * y);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}
