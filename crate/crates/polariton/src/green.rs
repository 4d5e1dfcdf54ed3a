//! Dyadic Green function of the medium-dressed wave operator.
//!
//! With `D` the double-curl kernel (`-k^2` on transverse modes), the wave
//! operator is `L(z) = D + z^2 (I/v + chi(z))` and `G` is its kernel inverse,
//! so that `G . L = L . G = I/v`. The primed form of the defining equation
//! reads `double_curl(G) + z^2 G + z^2 G . chi = I/v`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::TensorKernel;
use crate::susceptibility::Susceptibility;

/// Default relative residual accepted for a solve.
pub const TOL_SOLVE: f64 = 1e-10;

/// Condition number above which the wave operator counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Solved Green kernel at one complex frequency.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub kernel: TensorKernel,
    pub z: Complex64,
    pub eta: f64,
    /// Relative residual of the defining equation.
    pub residual: f64,
    /// One-norm condition number of the wave operator.
    pub condition: f64,
}

/// Wave operator `D + z^2 (I/v + chi(z))`.
pub fn wave_operator(chi: &Susceptibility, z: Complex64) -> Result<TensorKernel> {
    let lat = chi.lattice();
    let x = chi.at(z)?;
    Ok(lat.double_curl_operator() + (lat.identity() + x) * (z * z))
}

fn one_norm(a: &TensorKernel) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|e| e.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve the wave equation at `z` by dense LU.
pub fn solve_green(chi: &Susceptibility, z: Complex64) -> Result<GreenKernel> {
    let lat = chi.lattice();
    let l = wave_operator(chi, z)?;
    let lu = l.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::Singular {
        z,
        condition: f64::INFINITY,
    })?;
    let condition = one_norm(&l) * one_norm(&inv);
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::Singular { z, condition });
    }
    let v = lat.cell_volume();
    let kernel = inv / Complex64::from(v * v);
    let id = lat.identity();
    let residual = (lat.compose(&kernel, &l) - &id).norm() / id.norm();
    Ok(GreenKernel {
        kernel,
        z,
        eta: chi.grid().eta(),
        residual,
        condition,
    })
}

/// Residual of the adjoint equation, curls acting on the unprimed argument.
///
/// The susceptibility entering it is reached through the transpose-reversal
/// symmetry, `chi~(-z)`, which is what the adjoint form relies on. A
/// susceptibility breaking that symmetry is therefore flagged.
pub fn verify_adjoint(g: &GreenKernel, chi: &Susceptibility) -> Result<f64> {
    let lat = chi.lattice();
    let z = g.z;
    let chi_adj = chi.at(-z)?.transpose();
    let lhs = lat.double_curl_left(&g.kernel)
        + &g.kernel * (z * z)
        + lat.compose(&chi_adj, &g.kernel) * (z * z);
    let id = lat.identity();
    Ok((lhs - &id).norm() / id.norm())
}

/// Independent solves over a list of frequencies, order preserved.
pub fn green_sweep(chi: &Susceptibility, zs: &[Complex64]) -> Vec<Result<GreenKernel>> {
    zs.iter().map(|&z| solve_green(chi, z)).collect()
}

/// Mode evaluation points `w_k - i eta`.
pub fn mode_points(chi: &Susceptibility) -> Vec<Complex64> {
    let eta = chi.grid().eta();
    chi.grid().nodes().iter().map(|&w| Complex64::new(w, -eta)).collect()
}

/// Field evaluation points `w_k + i eta`.
pub fn field_points(chi: &Susceptibility) -> Vec<Complex64> {
    let eta = chi.grid().eta();
    chi.grid().nodes().iter().map(|&w| Complex64::new(w, eta)).collect()
}

/// Sweep at all mode points, failing on the first singular node.
pub fn mode_sweep(chi: &Susceptibility) -> Result<Vec<GreenKernel>> {
    green_sweep(chi, &mode_points(chi)).into_iter().collect()
}

/// Sweep at all field points, failing on the first singular node.
pub fn field_sweep(chi: &Susceptibility) -> Result<Vec<GreenKernel>> {
    green_sweep(chi, &field_points(chi)).into_iter().collect()
}

/// `|| G~(z) - G(-z) || / ||G(z)||`.
pub fn reciprocity_residual(chi: &Susceptibility, z: Complex64) -> Result<f64> {
    let a = solve_green(chi, z)?;
    let b = solve_green(chi, -z)?;
    Ok((a.kernel.transpose() - &b.kernel).norm() / a.kernel.norm())
}

/// `|| G*(z) - G(-z*) || / ||G(z)||`.
pub fn conjugation_residual(chi: &Susceptibility, z: Complex64) -> Result<f64> {
    let a = solve_green(chi, z)?;
    let b = solve_green(chi, -z.conj())?;
    Ok((a.kernel.map(|e| e.conj()) - &b.kernel).norm() / a.kernel.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{coupling_from_lagrangian, CouplingTensor, RealCoupling};
    use crate::lattice::{FrequencyGrid, Lattice};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn vacuum(n: usize) -> Susceptibility {
        let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
        let g = FrequencyGrid::midpoint(4, 2.0, 2.0).unwrap();
        let t = CouplingTensor::from_kernels(Arc::clone(&lat), g, vec![lat.zeros(); 4]).unwrap();
        Susceptibility::new(&t)
    }

    #[test]
    fn vacuum_longitudinal_block() {
        let chi = vacuum(2);
        let z = Complex64::new(0.9, 0.2);
        let g = solve_green(&chi, z).unwrap();
        let lat = chi.lattice();
        let gl = lat.compose(lat.longitudinal_projector(), &g.kernel);
        let expect = lat.longitudinal_projector() / (z * z);
        assert!((gl - &expect).norm() <= 1e-12 * expect.norm());
        assert!(verify_adjoint(&g, &chi).unwrap() < 1e-12);
    }

    #[test]
    fn duplicate_points_identical() {
        let chi = vacuum(1);
        let z = Complex64::new(0.4, -0.1);
        let out = green_sweep(&chi, &[z, z]);
        let a = out[0].as_ref().unwrap();
        let b = out[1].as_ref().unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert!(green_sweep(&chi, &[]).is_empty());
    }

    #[test]
    fn singular_point_rejected() {
        // vacuum at z = 0 has no transverse restoring term
        let chi = vacuum(1);
        assert!(matches!(
            solve_green(&chi, Complex64::new(0.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn one_site_scalar_solution() {
        let lat = Arc::new(Lattice::new(1, 1.0).unwrap());
        let grid = FrequencyGrid::from_nodes(vec![1.1], vec![0.3], 0.05, 3.0).unwrap();
        let real = RealCoupling::with_identity_unitary(&lat, vec![DMatrix::identity(3, 3) * 0.7]);
        let t = coupling_from_lagrangian(&real, Arc::clone(&lat), &grid).unwrap();
        let chi = Susceptibility::new(&t);
        let z = Complex64::new(0.8, -0.05);
        let g = solve_green(&chi, z).unwrap();
        // M = 1: no curl, G = 1 / (z^2 (1 + chi)) on every component
        let c = chi.at(z).unwrap()[(0, 0)];
        let expect = 1.0 / (z * z * (1.0 + c));
        for i in 0..3 {
            assert!((g.kernel[(i, i)] - expect).norm() < 1e-13 * expect.norm());
        }
        assert!(g.residual < 1e-14);
    }
}
