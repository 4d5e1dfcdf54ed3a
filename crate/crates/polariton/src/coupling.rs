//! Coupling tensor `T(r, r', w)`, structure tensor `F` and model library.
//!
//! Couplings are built from a real kernel `T0` and a unitary `U` per node,
//! `T = -(2 w)^(-1/2) U . T0`. For this gauge `T~ . T*` is real at every
//! node, which makes both quadrature constraints hold to machine precision
//! for any grid. Natural units are used throughout (`hbar = eps0 = mu0 = c = 1`).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{FrequencyGrid, Lattice, TensorKernel};

/// Default relative tolerance on the quadrature constraints.
pub const TOL_CONSTRAINT: f64 = 1e-10;

/// Relative imaginary residue of `F` above which construction fails.
pub const TOL_IMAGINARY: f64 = 1e-12;

/// Real coupling `T0` and unitary factor `U`, one of each per node.
#[derive(Debug, Clone)]
pub struct RealCoupling {
    pub t0: Vec<DMatrix<f64>>,
    pub unitary: Vec<TensorKernel>,
}

impl RealCoupling {
    /// `U = I/v` at every node.
    pub fn with_identity_unitary(lattice: &Lattice, t0: Vec<DMatrix<f64>>) -> Self {
        let unitary = vec![lattice.identity(); t0.len()];
        RealCoupling { t0, unitary }
    }
}

/// Frequency-indexed family of coupling kernels.
#[derive(Debug, Clone)]
pub struct CouplingTensor {
    lattice: Arc<Lattice>,
    grid: FrequencyGrid,
    kernels: Vec<TensorKernel>,
}

impl CouplingTensor {
    /// Wrap raw kernels without the Lagrangian route.
    ///
    /// Used for test fixtures and violators; constraints are not enforced.
    pub fn from_kernels(
        lattice: Arc<Lattice>,
        grid: FrequencyGrid,
        kernels: Vec<TensorKernel>,
    ) -> Result<Self> {
        if kernels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} kernels for {} nodes",
                kernels.len(),
                grid.len()
            )));
        }
        let dim = lattice.dim();
        if kernels.iter().any(|k| k.nrows() != dim || k.ncols() != dim) {
            return Err(Error::ShapeMismatch(format!("kernels must be {dim}x{dim}")));
        }
        Ok(CouplingTensor {
            lattice,
            grid,
            kernels,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn lattice_arc(&self) -> Arc<Lattice> {
        Arc::clone(&self.lattice)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn kernels(&self) -> &[TensorKernel] {
        &self.kernels
    }

    pub fn kernel(&self, node: usize) -> &TensorKernel {
        &self.kernels[node]
    }

    /// Per-node `T~ . T*`, the density of the cut discontinuity.
    pub fn absorption(&self, node: usize) -> TensorKernel {
        let t = &self.kernels[node];
        self.lattice.compose(&t.transpose(), &t.map(|e| e.conj()))
    }

    /// Multiply every kernel by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let kernels = self
            .kernels
            .iter()
            .map(|k| k * Complex64::from(s))
            .collect();
        CouplingTensor {
            lattice: Arc::clone(&self.lattice),
            grid: self.grid.clone(),
            kernels,
        }
    }
}

/// `T = -(2 w)^(-1/2) U . T0` per node, followed by the constraint check.
pub fn coupling_from_lagrangian(
    t0: &RealCoupling,
    lattice: Arc<Lattice>,
    grid: &FrequencyGrid,
) -> Result<CouplingTensor> {
    coupling_from_lagrangian_with_tol(t0, lattice, grid, TOL_CONSTRAINT)
}

pub fn coupling_from_lagrangian_with_tol(
    t0: &RealCoupling,
    lattice: Arc<Lattice>,
    grid: &FrequencyGrid,
    tol: f64,
) -> Result<CouplingTensor> {
    let k = grid.len();
    if t0.t0.len() != k || t0.unitary.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "real coupling has {} / {} nodes, grid has {k}",
            t0.t0.len(),
            t0.unitary.len()
        )));
    }
    let id = lattice.identity();
    let mut kernels = Vec::with_capacity(k);
    for (node, ((t, u), &w)) in t0.t0.iter().zip(&t0.unitary).zip(grid.nodes()).enumerate() {
        let uu = lattice.compose(&u.transpose(), &u.map(|e| e.conj()));
        let residual = (&uu - &id).norm() / id.norm();
        if residual > 1e-10 {
            return Err(Error::NotUnitary { node, residual });
        }
        let tc = t.map(Complex64::from);
        let factor = Complex64::from(-1.0 / (2.0 * w).sqrt());
        kernels.push(lattice.compose(u, &tc) * factor);
    }
    let coupling = CouplingTensor::from_kernels(lattice, grid.clone(), kernels)?;
    let report = check_constraints_with_tol(&coupling, tol);
    if report.residual_loss > tol {
        return Err(Error::ConstraintViolation {
            which: "zero-moment",
            residual: report.residual_loss,
            tolerance: tol,
        });
    }
    if report.residual_second > tol {
        return Err(Error::ConstraintViolation {
            which: "second-moment",
            residual: report.residual_second,
            tolerance: tol,
        });
    }
    Ok(coupling)
}

/// Residuals of the zero- and second-moment constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// `|| sum w (T~.T* - c.c.) || / sum w ||T~.T*||`.
    pub residual_loss: f64,
    /// Same with weight `w^2`.
    pub residual_second: f64,
    /// Largest per-node relative imaginary part of `T~.T*`.
    pub per_node: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn check_constraints(t: &CouplingTensor) -> ConstraintReport {
    check_constraints_with_tol(t, TOL_CONSTRAINT)
}

pub fn check_constraints_with_tol(t: &CouplingTensor, tol: f64) -> ConstraintReport {
    let lat = t.lattice();
    let mut s0 = lat.zeros();
    let mut s2 = lat.zeros();
    let mut n0 = 0.0;
    let mut n2 = 0.0;
    let mut per_node: f64 = 0.0;
    for (k, (&w, &wt)) in t.grid().nodes().iter().zip(t.grid().weights()).enumerate() {
        let x = t.absorption(k);
        let d = &x - x.map(|e| e.conj());
        let nx = x.norm();
        if nx > 0.0 {
            per_node = per_node.max(d.norm() / nx);
        }
        s0 += &d * Complex64::from(wt);
        s2 += &d * Complex64::from(wt * w * w);
        n0 += wt * nx;
        n2 += wt * w * w * nx;
    }
    let rel = |s: &TensorKernel, n: f64| if n > 0.0 { s.norm() / n } else { s.norm() };
    let residual_loss = rel(&s0, n0);
    let residual_second = rel(&s2, n2);
    ConstraintReport {
        residual_loss,
        residual_second,
        per_node,
        tolerance: tol,
        pass: residual_loss <= tol && residual_second <= tol,
    }
}

/// Real symmetric positive-definite structure tensor.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    kernel: TensorKernel,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    imaginary_residue: f64,
}

impl StructureTensor {
    pub fn kernel(&self) -> &TensorKernel {
        &self.kernel
    }

    /// Extreme eigenvalues of `v F` as a Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    pub fn imaginary_residue(&self) -> f64 {
        self.imaginary_residue
    }

    pub fn inverse(&self, lattice: &Lattice) -> Result<TensorKernel> {
        lattice.inverse(&self.kernel).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: self.min_eigenvalue,
        })
    }
}

/// `F = sum w_k w_k (T~.T* + c.c.)`.
pub fn structure_tensor(t: &CouplingTensor) -> Result<StructureTensor> {
    let lat = t.lattice();
    let mut f = lat.zeros();
    for (k, (&w, &wt)) in t.grid().nodes().iter().zip(t.grid().weights()).enumerate() {
        let x = t.absorption(k);
        f += (&x + x.map(|e| e.conj())) * Complex64::from(wt * w);
    }
    let scale = f.norm();
    let imag = f.iter().map(|e| e.im * e.im).sum::<f64>().sqrt();
    let imaginary_residue = if scale > 0.0 { imag / scale } else { 0.0 };
    if imaginary_residue > TOL_IMAGINARY {
        return Err(Error::ImaginaryResidue {
            relative: imaginary_residue,
        });
    }
    let real = DMatrix::<f64>::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)].re);
    let sym = (&real + real.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym * lat.cell_volume());
    let min_eigenvalue = eig.eigenvalues.min();
    let max_eigenvalue = eig.eigenvalues.max();
    if min_eigenvalue.is_nan() || min_eigenvalue <= 1e-14 * max_eigenvalue.abs().max(f64::MIN_POSITIVE) || max_eigenvalue <= 0.0
    {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(StructureTensor {
        kernel: real.map(Complex64::from),
        min_eigenvalue,
        max_eigenvalue,
        imaginary_residue,
    })
}

/// `-w_k T(w_k) . F^-1` per node, the coefficients of the polarization momentum.
pub fn momentum_kernel(t: &CouplingTensor, f: &StructureTensor) -> Result<Vec<TensorKernel>> {
    let lat = t.lattice();
    let finv = f.inverse(lat)?;
    Ok(t.kernels()
        .iter()
        .zip(t.grid().nodes())
        .map(|(tk, &w)| lat.compose(tk, &finv) * Complex64::from(-w))
        .collect())
}

/// Built-in medium models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    /// Isotropic, site-local, single Lorentz resonance.
    LocalLorentz,
    /// Site-local with a distinct coupling strength along one axis.
    UniaxialLocal,
    /// Gaussian spatial kernel, genuine spatial dispersion.
    GaussianNonlocal,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::LocalLorentz => "local_lorentz",
            ModelId::UniaxialLocal => "uniaxial_local",
            ModelId::GaussianNonlocal => "gaussian_nonlocal",
        }
    }

    pub fn all() -> [ModelId; 3] {
        [ModelId::LocalLorentz, ModelId::UniaxialLocal, ModelId::GaussianNonlocal]
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_lorentz" => Ok(ModelId::LocalLorentz),
            "uniaxial_local" => Ok(ModelId::UniaxialLocal),
            "gaussian_nonlocal" => Ok(ModelId::GaussianNonlocal),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Parameters of the built-in models.
///
/// The target absorption is a Lorentz line
/// `wp^2 g w / ((w0^2 - w^2)^2 + g^2 w^2)` times a smooth window that
/// vanishes with all derivatives at `0` and `omega_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub omega0: f64,
    pub gamma: f64,
    pub plasma: f64,
    /// Overall amplitude of `T0`; zero gives the decoupled medium.
    pub scale: f64,
    /// Uniaxial coupling ratio along `axis`.
    pub ratio: f64,
    pub axis: usize,
    /// Gaussian correlation length.
    pub ell: f64,
    /// Relative frequency modulation of the Gaussian kernel.
    pub dispersion: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            omega0: 1.0,
            gamma: 1.0,
            plasma: 0.5,
            scale: 1.0,
            ratio: 2.0,
            axis: 2,
            ell: 0.7,
            dispersion: 0.3,
        }
    }
}

impl ModelParams {
    fn validate(&self) -> Result<()> {
        let positive = [("omega0", self.omega0), ("gamma", self.gamma), ("ratio", self.ratio)];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ell must be positive, got {}",
                self.ell
            )));
        }
        if !(self.plasma.is_finite() && self.plasma >= 0.0) {
            return Err(Error::InvalidParameter("plasma must be non-negative".into()));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::InvalidParameter("scale must be non-negative".into()));
        }
        if self.axis > 2 {
            return Err(Error::InvalidParameter(format!("axis must be 0, 1 or 2, got {}", self.axis)));
        }
        if !(self.dispersion.is_finite() && self.dispersion.abs() < 1.0) {
            return Err(Error::InvalidParameter("dispersion must lie in (-1, 1)".into()));
        }
        Ok(())
    }
}

/// Smooth bump on `(0, 1)`, equal to one at the centre.
pub fn window(x: f64) -> f64 {
    if x > 0.0 && x < 1.0 {
        (-1.0 / (x * (1.0 - x)) + 4.0).exp()
    } else {
        0.0
    }
}

/// Target absorption line shape of the Lorentz models.
pub fn lorentz_absorption(w: f64, p: &ModelParams, omega_max: f64) -> f64 {
    let d = p.omega0 * p.omega0 - w * w;
    let lorentz = p.plasma * p.plasma * p.gamma * w / (d * d + p.gamma * p.gamma * w * w);
    lorentz * window(w / omega_max)
}

/// Real coupling `T0` and `U = I/v` for a built-in model.
pub fn builtin_model(
    id: ModelId,
    lattice: &Lattice,
    grid: &FrequencyGrid,
    params: &ModelParams,
) -> Result<RealCoupling> {
    params.validate()?;
    let m = lattice.n_sites();
    let v = lattice.cell_volume();
    let mut t0 = Vec::with_capacity(grid.len());
    let spatial = match id {
        ModelId::GaussianNonlocal => Some(gaussian_profile(lattice, params.ell)),
        _ => None,
    };
    for &w in grid.nodes() {
        let a = params.scale * (2.0 * w / PI * lorentz_absorption(w, params, grid.omega_max())).sqrt();
        let kernel = match id {
            ModelId::LocalLorentz => DMatrix::<f64>::identity(3 * m, 3 * m) * (a / v),
            ModelId::UniaxialLocal => {
                let mut d = DMatrix::<f64>::identity(3 * m, 3 * m);
                for s in 0..m {
                    d[(3 * s + params.axis, 3 * s + params.axis)] = params.ratio;
                }
                d * (a / v)
            }
            ModelId::GaussianNonlocal => {
                let s = spatial.as_ref().expect("profile built above");
                let amp = a * (1.0 + params.dispersion * w.cos()) / v;
                DMatrix::<f64>::from_fn(3 * m, 3 * m, |i, j| {
                    if i % 3 == j % 3 {
                        amp * s[(i / 3, j / 3)]
                    } else {
                        0.0
                    }
                })
            }
        };
        t0.push(kernel);
    }
    Ok(RealCoupling::with_identity_unitary(lattice, t0))
}

/// Row-normalized `exp(-d^2 / 2 ell^2)` with minimum-image distances.
fn gaussian_profile(lattice: &Lattice, ell: f64) -> DMatrix<f64> {
    let m = lattice.n_sites();
    let mut s = DMatrix::<f64>::from_fn(m, m, |a, b| {
        let d = lattice.separation(a, b);
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        (-d2 / (2.0 * ell * ell)).exp()
    });
    for mut row in s.row_iter_mut() {
        let total: f64 = row.iter().sum();
        row /= total;
    }
    s
}

/// Build a model end to end: real coupling, Lagrangian route, constraint check.
pub fn build_model(
    id: ModelId,
    lattice: Arc<Lattice>,
    grid: &FrequencyGrid,
    params: &ModelParams,
) -> Result<CouplingTensor> {
    let real = builtin_model(id, &lattice, grid, params)?;
    coupling_from_lagrangian(&real, lattice, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::midpoint(8, 3.0, 2.0).unwrap()
    }

    #[test]
    fn zero_coupling() {
        let lat = Arc::new(Lattice::new(1, 1.0).unwrap());
        let g = grid();
        let real = RealCoupling::with_identity_unitary(&lat, vec![DMatrix::zeros(3, 3); 8]);
        let t = coupling_from_lagrangian(&real, Arc::clone(&lat), &g).unwrap();
        assert!(t.kernels().iter().all(|k| k.norm() == 0.0));
        let rep = check_constraints(&t);
        assert_eq!(rep.residual_loss, 0.0);
        assert_eq!(rep.residual_second, 0.0);
        assert!(matches!(structure_tensor(&t), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn one_node_direct_formula() {
        let lat = Arc::new(Lattice::new(1, 1.3).unwrap());
        let g = FrequencyGrid::from_nodes(vec![0.8], vec![0.25], 0.1, 2.0).unwrap();
        let tau = 0.6;
        let v = lat.cell_volume();
        let real = RealCoupling::with_identity_unitary(&lat, vec![DMatrix::identity(3, 3) * (tau / v)]);
        let t = coupling_from_lagrangian(&real, Arc::clone(&lat), &g).unwrap();
        let expect = lat.identity() * Complex64::from(-tau / (2.0 * 0.8f64).sqrt());
        assert!((t.kernel(0) - expect).norm() < 1e-14);
    }

    #[test]
    fn local_lorentz_isotropic() {
        let lat = Lattice::new(1, 1.0).unwrap();
        let real = builtin_model(ModelId::LocalLorentz, &lat, &grid(), &ModelParams::default()).unwrap();
        for t in &real.t0 {
            assert_eq!(t[(0, 1)], 0.0);
            assert_eq!(t[(0, 0)], t[(1, 1)]);
            assert_eq!(t[(1, 1)], t[(2, 2)]);
        }
    }

    #[test]
    fn gaussian_locality_limit() {
        let lat = Lattice::new(2, 1.0).unwrap();
        let p = ModelParams {
            ell: 1e-3,
            ..ModelParams::default()
        };
        let real = builtin_model(ModelId::GaussianNonlocal, &lat, &grid(), &p).unwrap();
        for t in &real.t0 {
            for i in 0..t.nrows() {
                for j in 0..t.ncols() {
                    if i / 3 != j / 3 {
                        assert!(t[(i, j)].abs() < 1e-300);
                    }
                }
            }
        }
    }

    #[test]
    fn parameter_validation() {
        let lat = Lattice::new(1, 1.0).unwrap();
        let bad = ModelParams {
            ell: 0.0,
            ..ModelParams::default()
        };
        assert!(builtin_model(ModelId::GaussianNonlocal, &lat, &grid(), &bad).is_err());
        assert!("dipole".parse::<ModelId>().is_err());
        assert_eq!("uniaxial_local".parse::<ModelId>().unwrap(), ModelId::UniaxialLocal);
    }

    #[test]
    fn non_unitary_rejected() {
        let lat = Arc::new(Lattice::new(1, 1.0).unwrap());
        let g = FrequencyGrid::from_nodes(vec![1.0], vec![0.5], 0.1, 2.0).unwrap();
        let real = RealCoupling {
            t0: vec![DMatrix::identity(3, 3)],
            unitary: vec![lat.identity() * Complex64::from(2.0)],
        };
        assert!(matches!(
            coupling_from_lagrangian(&real, lat, &g),
            Err(Error::NotUnitary { .. })
        ));
    }
}
