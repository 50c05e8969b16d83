//! One function per subcommand. Each reads its inputs, stages its outputs
//! and commits them only once everything has been produced.

use std::io::Write;
use std::path::Path;

use helisample::filterbank::lattice_to_uniform;
use helisample::io::{
    metrics_table, read_sinogram, read_volume, write_ex_csv, write_lattice_csv, write_matrix_csv, write_metrics_csv,
    write_polygon_csv, write_sinogram, write_volume,
};
use helisample::lattice::{
    count_lattice, efficient_sampling_matrix, enumerate_lattice, gain_ratio, sample_reduction,
    uniform_sampling_matrix, LatticeSpec, SampleBox,
};
use helisample::pipeline::{quality, DeskSetup};
use helisample::recon::{ground_truth_volume, katsevich_reconstruct, Volume};
use helisample::scan::{add_noise, Sinogram};
use helisample::spectral::{containment_grid, ex_grid, probe_points, FrequencySupportSet, Quadrature, SupportParams};

use crate::config::Config;
use crate::output::Staging;
use crate::CliError;

/// Lattice roles: the interlaced acquisition and the rectangular reference.
const PATHS: [(&str, Lattice); 2] = [("sparse", Lattice::Efficient), ("standard", Lattice::Uniform)];

/// β extent of the lattice point listings written by `design`.
const LISTING_BETA: f64 = 0.02;

/// Detector-row margin on the PI-window for sample counts.
const COUNT_V_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy)]
enum Lattice {
    Efficient,
    Uniform,
}

impl Lattice {
    fn spec(self, p: &SupportParams) -> Result<LatticeSpec, CliError> {
        match self {
            Lattice::Efficient => efficient_sampling_matrix(p),
            Lattice::Uniform => uniform_sampling_matrix(p),
        }
        .map_err(|e| CliError::Config(e.to_string()))
    }
}

fn data_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{what}: {e}"))
}

fn metric(name: &str, v: f64) -> (String, f64) {
    (name.to_string(), v)
}

pub fn design(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let p = cfg.params()?;
    let t = Lattice::Efficient.spec(&p)?;
    let u = Lattice::Uniform.spec(&p)?;
    let geom = p.geometry();
    let count_box = SampleBox::object_fan(geom, COUNT_V_MARGIN);
    let count = |l: &LatticeSpec| count_lattice(l, &count_box).map_err(|e| data_err("lattice count", e));
    let (nt, nu) = (count(&t)?, count(&u)?);
    let listing_box = SampleBox {
        beta: [0.0, LISTING_BETA],
        ..count_box
    };
    let rows = vec![
        metric("omega", p.omega()),
        metric("K", p.k() as f64),
        metric("W_v", p.wv()),
        metric("gain_ratio", gain_ratio(&p)),
        metric("density_reduction_pct", 100.0 * sample_reduction(&p)),
        metric("samples_standard", nu as f64),
        metric("samples_sparse", nt as f64),
        metric("count_reduction_pct", 100.0 * (1.0 - nt as f64 / nu as f64)),
    ];
    let mut s = Staging::new(out)?;
    for (name, l) in [("T", &t), ("U", &u)] {
        s.write(&format!("matrix_{name}.csv"), |w| write_matrix_csv(name, l.matrix(), w))?;
        let dual = format!("{name}_dual");
        s.write(&format!("matrix_{dual}.csv"), |w| write_matrix_csv(&dual, l.dual(), w))?;
        let points = enumerate_lattice(l, &listing_box).map_err(|e| data_err("lattice listing", e))?;
        s.write(&format!("lattice_{name}.csv"), |w| write_lattice_csv(name, l.matrix(), &points, w))?;
    }
    s.write("design.csv", |w| write_metrics_csv(&rows, w))?;
    write_gain_curve(cfg, &mut s)?;
    s.commit()?;
    Ok(metrics_table(&rows))
}

fn write_gain_curve(cfg: &Config, s: &mut Staging) -> Result<(), CliError> {
    let [lo, hi] = cfg.gain_omega;
    let n = cfg.gain_points;
    let rows = (0..n)
        .map(|i| {
            let omega = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let p = SupportParams::new(cfg.geometry, omega).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((omega, gain_ratio(&p), sample_reduction(&p)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    s.write("gain.csv", |w| {
        writeln!(w, "omega,gain_ratio,reduction")?;
        for (o, g, r) in &rows {
            writeln!(w, "{o},{g},{r}")?;
        }
        Ok(())
    })
}

pub fn gain_curve(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let mut s = Staging::new(out)?;
    write_gain_curve(cfg, &mut s)?;
    s.commit()?;
    Ok(format!("{} points over Omega in [{}, {}]\n", cfg.gain_points, cfg.gain_omega[0], cfg.gain_omega[1]))
}

pub fn support(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let p = cfg.params()?;
    let geom = *p.geometry();
    let set = FrequencySupportSet::new(p);
    let quad = Quadrature {
        step: 2.0 * geom.beta_max() / cfg.ex_beta_points as f64,
        tol: cfg.ex_tol,
    };
    let probes = probe_points(&geom);
    let mut s = Staging::new(out)?;
    let mut rows = Vec::new();
    let mut worst = 1.0f64;
    for (i, &wv) in cfg.omega_v.iter().enumerate() {
        s.write(&format!("polygon_w{i}.csv"), |w| write_polygon_csv(&set, wv, w))?;
        let (ms, wbs) = containment_grid(&p, wv, cfg.ex_grid).map_err(|e| CliError::Config(e.to_string()))?;
        for (j, x) in probes.iter().enumerate() {
            let grid = ex_grid(x, &ms, &wbs, wv, &geom, quad).map_err(|e| data_err("kernel spectrum", e))?;
            let frac = grid.energy_fraction_inside(&set);
            worst = worst.min(frac);
            rows.push(metric(&format!("inside_w{i}_p{j}"), frac));
            s.write(&format!("ex_w{i}_p{j}.csv"), |w| write_ex_csv(&grid, &set, w))?;
        }
    }
    rows.push(metric("inside_min", worst));
    s.write("support.csv", |w| write_metrics_csv(&rows, w))?;
    s.commit()?;
    Ok(metrics_table(&rows))
}

pub fn scan(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let desk = cfg.desk()?;
    let phantom = cfg.load_phantom()?;
    let mut s = Staging::new(out)?;
    let mut rows = Vec::new();
    for (k, (tag, lattice)) in PATHS.into_iter().enumerate() {
        let spec = lattice.spec(&desk.params)?;
        let mut sino = desk.acquire(&phantom, &spec, tag).map_err(|e| data_err("simulation", e))?;
        if cfg.noise > 0.0 {
            sino = add_noise(&sino, cfg.noise, cfg.seed.wrapping_add(k as u64)).map_err(|e| data_err("noise", e))?;
        }
        rows.push(metric(&format!("samples_{tag}"), sino.len() as f64));
        s.write(&format!("scan_{tag}.hcbs"), |w| write_sinogram(&sino, w))?;
    }
    s.commit()?;
    Ok(metrics_table(&rows))
}

fn read_sino(cfg: &Config, path: &Path) -> Result<Sinogram, CliError> {
    let f = std::fs::File::open(path).map_err(|e| data_err(&path.display().to_string(), e))?;
    let sino = read_sinogram(std::io::BufReader::new(f)).map_err(|e| data_err(&path.display().to_string(), e))?;
    if *sino.geometry() != cfg.geometry {
        return Err(data_err(
            &path.display().to_string(),
            "geometry differs from the configured geometry",
        ));
    }
    Ok(sino)
}

fn read_vol(path: &Path) -> Result<Volume, CliError> {
    let f = std::fs::File::open(path).map_err(|e| data_err(&path.display().to_string(), e))?;
    read_volume(std::io::BufReader::new(f)).map_err(|e| data_err(&path.display().to_string(), e))
}

fn beta_step(desk: &DeskSetup) -> Result<f64, CliError> {
    Ok(Lattice::Uniform.spec(&desk.params)?.matrix()[(1, 1)])
}

pub fn filter(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let desk = cfg.desk()?;
    let grid = desk.recon_grid(beta_step(&desk)?).map_err(|e| CliError::Config(e.to_string()))?;
    let mask = desk.mask().map_err(|e| CliError::Config(e.to_string()))?;
    let mut s = Staging::new(out)?;
    let mut rows = Vec::new();
    for (tag, lattice) in PATHS {
        let path = out.join(format!("scan_{tag}.hcbs"));
        let sparse = read_sino(cfg, &path)?;
        if sparse.lattice_tag() != tag || sparse.grid().is_some() {
            return Err(data_err(&path.display().to_string(), format!("expected {tag} lattice samples")));
        }
        let spec = lattice.spec(&desk.params)?;
        let uniform = lattice_to_uniform(&sparse, &spec, &mask, &grid).map_err(|e| data_err("filter", e))?;
        rows.push(metric(&format!("grid_samples_{tag}"), uniform.len() as f64));
        s.write(&format!("filtered_{tag}.hcbs"), |w| write_sinogram(&uniform, w))?;
    }
    s.commit()?;
    Ok(metrics_table(&rows))
}

pub fn recon(cfg: &Config, out: &Path) -> Result<String, CliError> {
    let desk = cfg.desk()?;
    let vspec = desk.volume_spec(beta_step(&desk)?).map_err(|e| CliError::Config(e.to_string()))?;
    let phantom = cfg.load_phantom()?;
    let mut s = Staging::new(out)?;
    for (tag, _) in PATHS {
        let path = out.join(format!("filtered_{tag}.hcbs"));
        let sino = read_sino(cfg, &path)?;
        let vol = katsevich_reconstruct(&sino, &vspec).map_err(|e| data_err(&path.display().to_string(), e))?;
        s.write(&format!("recon_{tag}.hcbv"), |w| write_volume(&vol, w))?;
    }
    let truth = ground_truth_volume(&phantom, &vspec);
    s.write("truth.hcbv", |w| write_volume(&truth, w))?;
    s.commit()?;
    let [nx, ny, nz] = vspec.dims;
    Ok(format!("volume {nx} x {ny} x {nz}\n"))
}

pub fn compare(out: &Path) -> Result<String, CliError> {
    let truth = read_vol(&out.join("truth.hcbv"))?;
    let mut rows = Vec::new();
    let mut mses = Vec::new();
    for (tag, _) in PATHS {
        let path = out.join(format!("recon_{tag}.hcbv"));
        let q = quality(&read_vol(&path)?, &truth).map_err(|e| data_err(&path.display().to_string(), e))?;
        mses.push(q.mse_slice);
        rows.push(metric(&format!("mse_{tag}"), q.mse_slice));
        rows.push(metric(&format!("ssim_{tag}"), q.ssim_slice));
        rows.push(metric(&format!("mse_volume_{tag}"), q.mse_volume));
    }
    rows.push(metric("mse_gap_rel", (mses[0] - mses[1]).abs() / mses[1]));
    let mut s = Staging::new(out)?;
    s.write("metrics.csv", |w| write_metrics_csv(&rows, w))?;
    s.commit()?;
    Ok(metrics_table(&rows))
}
