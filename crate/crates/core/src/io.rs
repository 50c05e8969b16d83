//! File formats for sinograms, volumes, lattices, spectra and metrics.
//!
//! Sinogram (`.hcbs`): ASCII header lines
//! ```text
//! HCBSINO 1
//! R <radius>
//! h <pitch>
//! Z <half length>
//! rho <object radius>
//! lattice <tag>
//! count <samples>
//! grid <α0> <Δα> <Nα> <β0> <Δβ> <Nβ> <v0> <Δv> <Nv>     (grid sinograms only)
//! end
//! ```
//! followed by little-endian `f64`: the values in grid order for grid
//! sinograms, otherwise `(α, β, v, value)` quadruples in acquisition order.
//!
//! Volume (`.hcbv`): `HCBV`, 3 × u32 dims, 3 × f64 spacing, 3 × f64 origin,
//! then f64 voxels, all little-endian, x fastest.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::filterbank::SpectralMask;
use crate::geometry::HelixGeometry;
use crate::lattice::LatticePoint;
use crate::recon::{Volume, VolumeSpec};
use crate::scan::{Axis, GridSpec, SampleSet, Sinogram};
use crate::spectral::{ExGrid, FrequencySupportSet};

const SINO_MAGIC: &str = "HCBSINO 1";
const VOL_MAGIC: &[u8; 4] = b"HCBV";

fn format_err(kind: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        kind,
        reason: reason.into(),
    }
}

pub fn write_sinogram<W: Write>(sino: &Sinogram, mut out: W) -> Result<()> {
    let tag = sino.lattice_tag();
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        return Err(format_err("sinogram", format!("lattice tag {tag:?} must be a non-empty word")));
    }
    let g = sino.geometry();
    let mut head = String::new();
    writeln!(head, "{SINO_MAGIC}").unwrap();
    writeln!(head, "R {}", g.radius()).unwrap();
    writeln!(head, "h {}", g.pitch()).unwrap();
    writeln!(head, "Z {}", g.half_length()).unwrap();
    writeln!(head, "rho {}", g.object_radius()).unwrap();
    writeln!(head, "lattice {tag}").unwrap();
    writeln!(head, "count {}", sino.len()).unwrap();
    if let SampleSet::Grid(gr) = sino.samples() {
        let ax = |a: &Axis| format!("{} {} {}", a.start, a.step, a.len);
        writeln!(head, "grid {} {} {}", ax(&gr.alpha), ax(&gr.beta), ax(&gr.v)).unwrap();
    }
    writeln!(head, "end").unwrap();
    out.write_all(head.as_bytes())?;
    let mut buf = Vec::with_capacity(1 << 16);
    let flush = |buf: &mut Vec<u8>, out: &mut W| -> Result<()> {
        out.write_all(buf)?;
        buf.clear();
        Ok(())
    };
    match sino.samples() {
        SampleSet::Grid(_) => {
            for v in sino.values() {
                buf.extend_from_slice(&v.to_le_bytes());
                if buf.len() >= 1 << 16 {
                    flush(&mut buf, &mut out)?;
                }
            }
        }
        SampleSet::Points(pts) => {
            for (p, v) in pts.iter().zip(sino.values()) {
                for x in [p[0], p[1], p[2], *v] {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                if buf.len() >= 1 << 16 {
                    flush(&mut buf, &mut out)?;
                }
            }
        }
    }
    flush(&mut buf, &mut out)?;
    out.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| format_err("sinogram", format!("bad {what}: {s:?}")))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| format_err("sinogram", format!("truncated data: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_sinogram<R: Read>(input: R) -> Result<Sinogram> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<R>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err("sinogram", "unexpected end of header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(&mut r)? != SINO_MAGIC {
        return Err(format_err("sinogram", "missing HCBSINO 1 magic"));
    }
    let (mut rad, mut h, mut z, mut rho) = (None, None, None, None);
    let (mut tag, mut count, mut grid) = (None, None, None);
    loop {
        let l = next_line(&mut r)?;
        let mut it = l.split_whitespace();
        let key = it.next().unwrap_or("");
        let rest: Vec<&str> = it.collect();
        let one = || -> Result<&str> {
            match rest.as_slice() {
                [x] => Ok(x),
                _ => Err(format_err("sinogram", format!("header line {l:?} needs one value"))),
            }
        };
        match key {
            "R" => rad = Some(parse::<f64>(one()?, "R")?),
            "h" => h = Some(parse::<f64>(one()?, "h")?),
            "Z" => z = Some(parse::<f64>(one()?, "Z")?),
            "rho" => rho = Some(parse::<f64>(one()?, "rho")?),
            "lattice" => tag = Some(one()?.to_string()),
            "count" => count = Some(parse::<usize>(one()?, "count")?),
            "grid" => {
                if rest.len() != 9 {
                    return Err(format_err("sinogram", "grid line needs 9 values"));
                }
                let ax = |i: usize| -> Result<Axis> {
                    Ok(Axis::new(
                        parse(rest[i], "grid start")?,
                        parse(rest[i + 1], "grid step")?,
                        parse(rest[i + 2], "grid length")?,
                    ))
                };
                grid = Some(GridSpec::new(ax(0)?, ax(3)?, ax(6)?)?);
            }
            "end" => break,
            _ => return Err(format_err("sinogram", format!("unknown header line {l:?}"))),
        }
    }
    let missing = |k: &str| format_err("sinogram", format!("header lacks {k}"));
    let geom = HelixGeometry::new(
        rad.ok_or_else(|| missing("R"))?,
        h.ok_or_else(|| missing("h"))?,
        z.ok_or_else(|| missing("Z"))?,
        rho.ok_or_else(|| missing("rho"))?,
    )?;
    let tag = tag.ok_or_else(|| missing("lattice"))?;
    let count = count.ok_or_else(|| missing("count"))?;
    let sino = match grid {
        Some(g) => {
            if g.len() != count {
                return Err(format_err("sinogram", "grid size disagrees with count"));
            }
            let vals = read_f64s(&mut r, count)?;
            Sinogram::new(SampleSet::Grid(g), vals, geom, tag)?
        }
        None => {
            let raw = read_f64s(&mut r, 4 * count)?;
            let pts = raw.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect();
            let vals = raw.chunks_exact(4).map(|c| c[3]).collect();
            Sinogram::new(SampleSet::Points(pts), vals, geom, tag)?
        }
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("sinogram", "trailing bytes after data"));
    }
    Ok(sino)
}

/// Human-readable `alpha,beta,v,value` listing.
pub fn write_sinogram_csv<W: Write>(sino: &Sinogram, mut out: W) -> Result<()> {
    writeln!(out, "alpha,beta,v,value")?;
    for (i, v) in sino.values().iter().enumerate() {
        let p = sino.samples().point(i);
        writeln!(out, "{},{},{},{}", p[0], p[1], p[2], v)?;
    }
    Ok(())
}

pub fn write_volume<W: Write>(vol: &Volume, mut out: W) -> Result<()> {
    let s = vol.spec();
    let mut buf = Vec::with_capacity(4 + 12 + 48 + 8 * vol.data().len());
    buf.extend_from_slice(VOL_MAGIC);
    for d in s.dims {
        let d = u32::try_from(d).map_err(|_| format_err("volume", "dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for x in s.spacing.iter().chain(&s.origin).chain(vol.data()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_volume<R: Read>(mut input: R) -> Result<Volume> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 64 || &bytes[..4] != VOL_MAGIC {
        return Err(format_err("volume", "missing HCBV header"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let f = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let dims = [u(0), u(1), u(2)];
    let spacing = [f(16), f(24), f(32)];
    let origin = [f(40), f(48), f(56)];
    let spec = VolumeSpec::new(dims, spacing, origin)?;
    let body = &bytes[64..];
    if body.len() != 8 * spec.len() {
        return Err(format_err(
            "volume",
            format!("expected {} voxels, found {} bytes", spec.len(), body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(spec, data)
}

fn matrix_line(m: &Matrix3<f64>) -> String {
    (0..3)
        .map(|i| (0..3).map(|j| m[(i, j)].to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

/// Lattice points with the generating matrix (rows separated by `;`) in a
/// leading comment.
pub fn write_lattice_csv<W: Write>(name: &str, matrix: &Matrix3<f64>, points: &[LatticePoint], mut out: W) -> Result<()> {
    writeln!(out, "# {name} = {}", matrix_line(matrix))?;
    writeln!(out, "k1,k2,k3,alpha,beta,v")?;
    for p in points {
        writeln!(out, "{},{},{},{},{},{}", p.index[0], p.index[1], p.index[2], p.alpha, p.beta, p.v)?;
    }
    Ok(())
}

/// A 3×3 matrix as three CSV rows.
pub fn write_matrix_csv<W: Write>(name: &str, m: &Matrix3<f64>, mut out: W) -> Result<()> {
    writeln!(out, "# {name}")?;
    for i in 0..3 {
        writeln!(out, "{},{},{}", m[(i, 0)], m[(i, 1)], m[(i, 2)])?;
    }
    Ok(())
}

pub fn write_ex_csv<W: Write>(grid: &ExGrid, set: &FrequencySupportSet, mut out: W) -> Result<()> {
    writeln!(out, "m,omega_beta,omega_v,re,im,inside")?;
    let nb = grid.omega_betas.len();
    for (i, &m) in grid.ms.iter().enumerate() {
        for (j, &wb) in grid.omega_betas.iter().enumerate() {
            let e = grid.values[i * nb + j];
            let inside = set.contains(m as f64, wb, grid.omega_v) as u8;
            writeln!(out, "{m},{wb},{},{},{},{inside}", grid.omega_v, e.re, e.im)?;
        }
    }
    Ok(())
}

/// Cross-section polygon of the support set at `omega_v`, closed.
pub fn write_polygon_csv<W: Write>(set: &FrequencySupportSet, omega_v: f64, mut out: W) -> Result<()> {
    writeln!(out, "m,omega_beta")?;
    let poly = set.cross_section(omega_v)?;
    for (m, k) in poly.iter().chain(poly.first()) {
        writeln!(out, "{m},{k}")?;
    }
    Ok(())
}

/// Mask weights on an `n³` grid spanning the mask's extent.
pub fn write_mask_csv<W: Write>(mask: &SpectralMask, n: usize, mut out: W) -> Result<()> {
    writeln!(out, "omega_alpha,omega_beta,omega_v,weight")?;
    let ext = mask.extent();
    let at = |k: usize, i: usize| {
        if n == 1 {
            0.0
        } else {
            -ext[k] + 2.0 * ext[k] * i as f64 / (n - 1) as f64
        }
    };
    for iv in 0..n {
        for ib in 0..n {
            for ia in 0..n {
                let w = [at(0, ia), at(1, ib), at(2, iv)];
                writeln!(out, "{},{},{},{}", w[0], w[1], w[2], mask.weight(w))?;
            }
        }
    }
    Ok(())
}

/// Two-column aligned table.
pub fn metrics_table(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$}  value\n", "metric");
    for (k, v) in rows {
        writeln!(s, "{k:<width$}  {v:.6}").unwrap();
    }
    s
}

pub fn write_metrics_csv<W: Write>(rows: &[(String, f64)], mut out: W) -> Result<()> {
    writeln!(out, "metric,value")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}")?;
    }
    Ok(())
}
