use std::sync::Arc;

use num_complex::Complex64;

use polariton::green::{field_sweep, mode_sweep};
use polariton::*;

fn vacuum(n: usize, nodes: usize) -> (Arc<Lattice>, Susceptibility) {
    let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
    let grid = FrequencyGrid::midpoint(nodes, 3.0, 2.0).unwrap();
    let t = CouplingTensor::from_kernels(Arc::clone(&lat), grid, vec![lat.zeros(); nodes]).unwrap();
    (lat, Susceptibility::new(&t))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[test]
fn vacuum_longitudinal_part_is_static() {
    let (lat, chi) = vacuum(2, 4);
    let pl = lat.longitudinal_projector();
    for z in [Complex64::new(2.1, 0.3), Complex64::new(-0.9, -1.2), Complex64::new(0.0, 0.7)] {
        let g = solve_green(&chi, z).unwrap();
        let expect = pl / (z * z);
        let got = lat.compose(pl, &g.kernel);
        assert!((got - &expect).norm() <= 1e-12 * expect.norm(), "z = {z}");
    }
}

#[test]
fn vacuum_transverse_plane_waves() {
    let (lat, chi) = vacuum(3, 4);
    let z = Complex64::new(1.7, 0.25);
    let g = solve_green(&chi, z).unwrap();
    for (q, k) in lat.wavevectors().iter().enumerate() {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            continue;
        }
        let seed = if k[0].abs() < 0.9 * k2.sqrt() { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = cross(*k, seed);
        let e = lat.plane_wave(q, u.map(Complex64::from));
        let expect = &e / (z * z - k2);
        let got = lat.apply(&g.kernel, &e);
        assert!((got - &expect).norm() <= 1e-12 * expect.norm(), "q = {q}");
    }
}

#[test]
fn sweeps_solve_to_roundoff() {
    for id in ModelId::all() {
        let n = if id == ModelId::GaussianNonlocal { 2 } else { 1 };
        let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
        let grid = FrequencyGrid::midpoint(8, 3.0, 2.0).unwrap();
        let t = build_model(id, lat, &grid, &ModelParams::default()).unwrap();
        let chi = Susceptibility::new(&t);
        for g in mode_sweep(&chi).unwrap().iter().chain(&field_sweep(&chi).unwrap()) {
            assert!(g.residual <= 1e-10, "{id} at {}: {}", g.z, g.residual);
        }
    }
}

#[test]
fn singular_operator_rejected() {
    // the vacuum wave operator is singular at z = 0
    let (_, chi) = vacuum(1, 2);
    assert!(matches!(solve_green(&chi, Complex64::new(0.0, 0.0)), Err(Error::Singular { .. })));
}
