//! Susceptibility `chi(z)` as a quadrature sum over the coupling, its cut
//! discontinuity, and the causality checks built on it.
//!
//! ```text
//! chi(z) = sum_k w_k [ X_k / (w_k - z) + X~_k / (w_k + z) ],   X_k = T~_k . T*_k
//! ```
//!
//! The discontinuity is taken directly from `X_k`, never from a difference
//! of `chi` evaluated on both sides of the axis.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::coupling::{CouplingTensor, StructureTensor};
use crate::error::{Error, Result};
use crate::lattice::{FrequencyGrid, Lattice, TensorKernel};

const IM: Complex64 = Complex64::new(0.0, 1.0);

/// Side of the real axis for an on-axis evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

/// Quadrature representation of the susceptibility.
#[derive(Debug, Clone)]
pub struct Susceptibility {
    lattice: Arc<Lattice>,
    grid: FrequencyGrid,
    absorption: Vec<TensorKernel>,
    perturbation: Option<TensorKernel>,
}

impl Susceptibility {
    pub fn new(t: &CouplingTensor) -> Self {
        let absorption = (0..t.grid().len()).map(|k| t.absorption(k)).collect();
        Susceptibility {
            lattice: t.lattice_arc(),
            grid: t.grid().clone(),
            absorption,
            perturbation: None,
        }
    }

    /// Add a frequency-independent kernel to `chi(z)`.
    ///
    /// A non-symmetric perturbation breaks the transpose-reversal symmetry
    /// and serves as a violator fixture for the Green-function checks.
    pub fn with_perturbation(mut self, delta: TensorKernel) -> Self {
        self.perturbation = Some(delta);
        self
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

    pub fn is_perturbed(&self) -> bool {
        self.perturbation.is_some()
    }

    /// `chi(z)`; rejects `z` exactly on a node of the real axis.
    pub fn at(&self, z: Complex64) -> Result<TensorKernel> {
        let mut chi = self.lattice.zeros();
        for (node, ((&w, &wt), x)) in self
            .grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(&self.absorption)
            .enumerate()
        {
            let dm = Complex64::from(w) - z;
            let dp = Complex64::from(w) + z;
            if dm == Complex64::from(0.0) || dp == Complex64::from(0.0) {
                return Err(Error::Pole { z, node });
            }
            let a = Complex64::from(wt) / dm;
            let b = Complex64::from(wt) / dp;
            // X~ = X* because X is Hermitian; the transpose is written out to
            // stay exact for couplings that violate the constraints.
            chi.zip_apply(x, |c, e| *c += a * e);
            let xt = x.transpose();
            chi.zip_apply(&xt, |c, e| *c += b * e);
        }
        if let Some(p) = &self.perturbation {
            chi += p;
        }
        Ok(chi)
    }

    /// `chi(w +- i eta)`.
    pub fn on_axis(&self, w: f64, side: Side) -> Result<TensorKernel> {
        let eta = match side {
            Side::Above => self.grid.eta(),
            Side::Below => -self.grid.eta(),
        };
        self.at(Complex64::new(w, eta))
    }

    /// Cut discontinuity `chi(w + i0) - chi(w - i0)` at any non-zero `w`.
    ///
    /// Off-node frequencies interpolate linearly between neighbouring node
    /// kernels, anchored to zero at `0` and `omega_max`.
    pub fn discontinuity(&self, w: f64) -> Result<Discontinuity> {
        let wmax = self.grid.omega_max();
        if w == 0.0 || w.abs() > wmax || !w.is_finite() {
            return Err(Error::Extrapolation { omega: w, omega_max: wmax });
        }
        let a = w.abs();
        let nodes = self.grid.nodes();
        let (x, interpolated) = match nodes.iter().position(|&n| n == a) {
            Some(k) => (self.absorption[k].clone(), false),
            None => {
                let upper = nodes.iter().position(|&n| n > a);
                let zero = self.lattice.zeros();
                let (lo_w, lo_x, hi_w, hi_x) = match upper {
                    Some(0) => (0.0, &zero, nodes[0], &self.absorption[0]),
                    Some(j) => (nodes[j - 1], &self.absorption[j - 1], nodes[j], &self.absorption[j]),
                    None => {
                        let last = nodes.len() - 1;
                        (nodes[last], &self.absorption[last], wmax, &zero)
                    }
                };
                let s = (a - lo_w) / (hi_w - lo_w);
                (lo_x * Complex64::from(1.0 - s) + hi_x * Complex64::from(s), true)
            }
        };
        let kernel = if w > 0.0 {
            x * Complex64::new(0.0, 2.0 * PI)
        } else {
            x.transpose() * Complex64::new(0.0, -2.0 * PI)
        };
        Ok(Discontinuity {
            omega: w,
            kernel,
            interpolated,
        })
    }

    /// Node kernel `X_k = T~_k . T*_k`.
    pub fn absorption(&self, node: usize) -> &TensorKernel {
        &self.absorption[node]
    }

    /// `||chi(z) - (1/2 pi i) sum disc(w)/(w - z)||` relative, over `+-` nodes.
    pub fn kramers_kronig_residual(&self, z: Complex64) -> Result<f64> {
        if z.im == 0.0 {
            return Err(Error::InvalidArgument("Kramers-Kronig needs Im z != 0".into()));
        }
        let chi = self.at(z)?;
        let mut rhs = self.lattice.zeros();
        for (&w, &wt) in self.grid.nodes().iter().zip(self.grid.weights()) {
            for sign in [1.0, -1.0] {
                let d = self.discontinuity(sign * w)?;
                let f = Complex64::from(wt) / (Complex64::new(0.0, 2.0 * PI) * (Complex64::from(sign * w) - z));
                rhs += d.kernel * f;
            }
        }
        Ok(relative(&(chi.clone() - rhs), &chi))
    }

    /// Zero-, first- and second-moment sum rules of the discontinuity.
    pub fn sum_rules(&self, f: &StructureTensor) -> Result<SumRules> {
        let mut m0 = self.lattice.zeros();
        let mut m1 = self.lattice.zeros();
        let mut m2 = self.lattice.zeros();
        let mut n0 = 0.0;
        let mut n2 = 0.0;
        for (&w, &wt) in self.grid.nodes().iter().zip(self.grid.weights()) {
            for sign in [1.0, -1.0] {
                let x = sign * w;
                let d = self.discontinuity(x)?.kernel;
                n0 += wt * d.norm();
                n2 += wt * x * x * d.norm();
                m0 += &d * Complex64::from(wt);
                m1 += &d * Complex64::from(wt * x);
                m2 += &d * Complex64::from(wt * x * x);
            }
        }
        let target = f.kernel() * Complex64::new(0.0, 2.0 * PI);
        let safe = |a: f64, n: f64| if n > 0.0 { a / n } else { a };
        Ok(SumRules {
            zeroth: safe(m0.norm(), n0),
            first: relative(&(m1 - &target), &target),
            second: safe(m2.norm(), n2),
        })
    }

    /// Relative distance of `chi(z)` from its large-`|z|` asymptote.
    pub fn asymptotic_residual(&self, f: &StructureTensor, z: Complex64) -> Result<f64> {
        let chi = self.at(z)?;
        let asym = chi_asymptotic(f, z);
        Ok(relative(&(chi - &asym), &asym))
    }

    /// `|| chi~(z) - chi(-z) || / ||chi(z)||`.
    pub fn transpose_symmetry_residual(&self, z: Complex64) -> Result<f64> {
        let a = self.at(z)?;
        let b = self.at(-z)?;
        Ok(relative(&(a.transpose() - b), &a))
    }

    /// `|| chi*(z) - chi(-z*) || / ||chi(z)||`.
    pub fn conjugation_residual(&self, z: Complex64) -> Result<f64> {
        let a = self.at(z)?;
        let b = self.at(-z.conj())?;
        Ok(relative(&(a.map(|e| e.conj()) - b), &a))
    }

    /// Smallest eigenvalue of `-i disc(w)` relative to the largest.
    pub fn loss_min_eigenvalue(&self, w: f64) -> Result<f64> {
        let d = self.discontinuity(w)?.kernel * (-IM);
        let h = (&d + d.adjoint()) * Complex64::from(0.5);
        let eig = nalgebra::SymmetricEigen::new(h);
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(if max > 0.0 { min / max } else { min })
    }
}

/// Cut discontinuity at one frequency.
#[derive(Debug, Clone)]
pub struct Discontinuity {
    pub omega: f64,
    pub kernel: TensorKernel,
    /// Set when `omega` is not a quadrature node.
    pub interpolated: bool,
}

/// Relative residuals of the three moment sum rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRules {
    pub zeroth: f64,
    pub first: f64,
    pub second: f64,
}

/// `-F / z^2`.
pub fn chi_asymptotic(f: &StructureTensor, z: Complex64) -> TensorKernel {
    f.kernel() * (-1.0 / (z * z))
}

fn relative(d: &TensorKernel, reference: &TensorKernel) -> f64 {
    let n = reference.norm();
    if n > 0.0 {
        d.norm() / n
    } else {
        d.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_model, coupling_from_lagrangian, ModelId, ModelParams, RealCoupling};
    use nalgebra::DMatrix;

    fn one_node(tau: f64, w1: f64, wt: f64) -> (Arc<Lattice>, CouplingTensor) {
        let lat = Arc::new(Lattice::new(1, 1.0).unwrap());
        let g = FrequencyGrid::from_nodes(vec![w1], vec![wt], 0.05, 4.0).unwrap();
        let real = RealCoupling::with_identity_unitary(&lat, vec![DMatrix::identity(3, 3) * tau]);
        let t = coupling_from_lagrangian(&real, Arc::clone(&lat), &g).unwrap();
        (lat, t)
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let (_, t) = one_node(0.0, 1.0, 0.5);
        let chi = Susceptibility::new(&t);
        assert_eq!(chi.at(Complex64::new(0.3, 0.2)).unwrap().norm(), 0.0);
    }

    #[test]
    fn one_node_closed_form() {
        let (w1, wt, tau) = (1.2, 0.4, 0.9);
        let (_, t) = one_node(tau, w1, wt);
        let chi = Susceptibility::new(&t);
        let tk = t.kernel(0)[(0, 0)];
        let g = wt * tk.norm_sqr();
        let z = Complex64::new(0.7, 0.3);
        let expect = Complex64::from(2.0 * g * w1) / (Complex64::from(w1 * w1) - z * z);
        let got = chi.at(z).unwrap();
        assert!((got[(0, 0)] - expect).norm() < 1e-14);
        assert!(got[(0, 1)].norm() < 1e-16);
    }

    #[test]
    fn pole_rejected() {
        let (_, t) = one_node(1.0, 1.0, 0.5);
        let chi = Susceptibility::new(&t);
        assert!(matches!(chi.at(Complex64::new(1.0, 0.0)), Err(Error::Pole { .. })));
    }

    #[test]
    fn real_on_imaginary_axis() {
        let lat = Arc::new(Lattice::new(1, 1.0).unwrap());
        let g = FrequencyGrid::midpoint(16, 3.0, 2.0).unwrap();
        let t = build_model(ModelId::UniaxialLocal, lat, &g, &ModelParams::default()).unwrap();
        let chi = Susceptibility::new(&t).at(Complex64::new(0.0, 2.0)).unwrap();
        let im = chi.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
        assert!(im <= 1e-14 * chi.norm());
    }

    #[test]
    fn discontinuity_at_node_and_outside() {
        let (lat, t) = one_node(0.8, 1.0, 0.5);
        let chi = Susceptibility::new(&t);
        let d = chi.discontinuity(1.0).unwrap();
        assert!(!d.interpolated);
        let expect = t.absorption(0) * Complex64::new(0.0, 2.0 * PI);
        assert!((d.kernel - expect).norm() < 1e-15);
        let far = chi.discontinuity(3.9).unwrap();
        assert!(far.interpolated);
        assert!(far.kernel.norm() < 0.1 * lat.identity().norm());
        assert!(chi.discontinuity(4.5).is_err());
        assert!(chi.discontinuity(0.0).is_err());
    }
}
