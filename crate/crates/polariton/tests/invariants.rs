use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use polariton::diagonalize::{bracket, bracket_dagger};
use polariton::fields::{medium_algebra, noise_commutator_residual};
use polariton::green::{conjugation_residual, reciprocity_residual, verify_adjoint};
use polariton::*;

fn model_strategy() -> impl Strategy<Value = ModelId> {
    prop_oneof![
        Just(ModelId::LocalLorentz),
        Just(ModelId::UniaxialLocal),
        Just(ModelId::GaussianNonlocal),
    ]
}

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (0.5..2.0f64, 0.2..2.0f64, 0.1..1.0f64, 0.5..3.0f64).prop_map(|(omega0, gamma, plasma, ratio)| ModelParams {
        omega0,
        gamma,
        plasma,
        ratio,
        ..ModelParams::default()
    })
}

/// Points away from the real axis, in both half-planes.
fn z_strategy() -> impl Strategy<Value = Complex64> {
    (-4.0..4.0f64, 0.05..2.0f64, any::<bool>()).prop_map(|(x, y, lower)| Complex64::new(x, if lower { -y } else { y }))
}

fn build(id: ModelId, p: &ModelParams, nodes: usize) -> CouplingTensor {
    let n = if id == ModelId::GaussianNonlocal { 2 } else { 1 };
    let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
    let grid = FrequencyGrid::midpoint(nodes, 3.0, 2.0).unwrap();
    build_model(id, lat, &grid, p).unwrap()
}

fn kernel(lat: &Lattice, re: &[f64], im: &[f64]) -> TensorKernel {
    let n = lat.dim();
    DMatrix::from_fn(n, n, |i, j| Complex64::new(re[i * n + j], im[i * n + j]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn susceptibility_symmetries(id in model_strategy(), p in params_strategy(), z in z_strategy()) {
        let t = build(id, &p, 6);
        let chi = Susceptibility::new(&t);
        prop_assert!(chi.transpose_symmetry_residual(z).unwrap() <= 1e-12);
        prop_assert!(chi.conjugation_residual(z).unwrap() <= 1e-12);
        prop_assert!(chi.kramers_kronig_residual(z).unwrap() <= 1e-10);
    }

    #[test]
    fn lagrangian_coupling_meets_constraints(id in model_strategy(), p in params_strategy()) {
        let t = build(id, &p, 6);
        let r = check_constraints(&t);
        prop_assert!(r.pass, "{r:?}");
        prop_assert!(r.per_node <= 1e-10);
        let fs = structure_tensor(&t).unwrap();
        prop_assert!(fs.min_eigenvalue() > 0.0);
    }

    #[test]
    fn green_symmetries(id in model_strategy(), p in params_strategy(), z in z_strategy()) {
        let t = build(id, &p, 6);
        let chi = Susceptibility::new(&t);
        let g = solve_green(&chi, z).unwrap();
        prop_assert!(g.residual <= 1e-10);
        prop_assert!(verify_adjoint(&g, &chi).unwrap() <= 1e-9);
        prop_assert!(reciprocity_residual(&chi, z).unwrap() <= 1e-9);
        prop_assert!(conjugation_residual(&chi, z).unwrap() <= 1e-9);
    }

    #[test]
    fn noise_and_medium_algebra_exact(id in model_strategy(), p in params_strategy()) {
        let t = build(id, &p, 5);
        let chi = Susceptibility::new(&t);
        prop_assert!(noise_commutator_residual(&t, &chi).unwrap() <= 1e-10);
        let fs = structure_tensor(&t).unwrap();
        let m = medium_algebra(&t, &fs.inverse(t.lattice()).unwrap()).unwrap();
        prop_assert!(m.momentum_position.max(m.position_position).max(m.momentum_momentum) <= 1e-10, "{m:?}");
    }

    #[test]
    fn bracket_antisymmetry(entries in prop::collection::vec(-1.0..1.0f64, 2 * 4 * 9 * 2)) {
        let lat = Lattice::new(1, 1.0).unwrap();
        let grid = FrequencyGrid::midpoint(1, 3.0, 2.0).unwrap();
        let mut it = entries.chunks(9);
        let mut next = || {
            let re = it.next().unwrap();
            let im = it.next().unwrap();
            kernel(&lat, re, im)
        };
        let mut kernels = || polariton::ModeKernels { f1: next(), f2: next(), f3: vec![next()], f4: vec![next()] };
        let x = kernels();
        let y = kernels();
        let xy = bracket(&lat, &grid, &x, &y);
        let yx = bracket(&lat, &grid, &y, &x);
        prop_assert!((&xy + yx.transpose()).norm() <= 1e-12 * (1.0 + xy.norm()));
        let xyd = bracket_dagger(&lat, &grid, &x, &y);
        let yxd = bracket_dagger(&lat, &grid, &y, &x);
        prop_assert!((xyd.adjoint() - yxd).norm() <= 1e-12 * (1.0 + xyd.norm()));
    }
}
