//! Field, polarization and noise operators as linear forms over bosonic
//! annihilators and creators.
//!
//! A form is `X = sum_k w_k [alpha(k) . C(k) + beta(k) . C+(k)]`, the kernels
//! composing with the mode index of node `k`. The operators of the medium
//! basis use the same representation with the medium ladder operators in
//! place of the diagonal modes. Commutators of forms are c-numbers and are
//! evaluated exactly at the discrete level.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::coupling::CouplingTensor;
use crate::diagonalize::ModeCoefficients;
use crate::error::{Error, Result};
use crate::green::GreenKernel;
use crate::lattice::{FrequencyGrid, Lattice, TensorKernel};
use crate::susceptibility::Susceptibility;

const IM: Complex64 = Complex64::new(0.0, 1.0);

/// Roundoff floor used when a Green solve is exact to machine precision.
pub const SOLVE_FLOOR: f64 = 1e-14;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

/// Ladder operators a form is expanded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormBasis {
    /// Diagonal modes `C(w_k)`.
    Modes,
    /// Medium oscillators `C_m(w_k)`.
    Medium,
}

/// Physical operators with a built-in expansion over the diagonal modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Vector potential.
    A,
    /// Magnetic induction.
    B,
    /// Electric field.
    E,
    /// Polarization density.
    P,
    /// Noise polarization.
    Pn,
    /// Dielectric displacement.
    D,
    /// Canonical momentum of the field, `-E_T`.
    Pi,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::A => "A",
            FieldKind::B => "B",
            FieldKind::E => "E",
            FieldKind::P => "P",
            FieldKind::Pn => "Pn",
            FieldKind::D => "D",
            FieldKind::Pi => "Pi",
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A" => FieldKind::A,
            "B" => FieldKind::B,
            "E" => FieldKind::E,
            "P" => FieldKind::P,
            "Pn" => FieldKind::Pn,
            "D" => FieldKind::D,
            "Pi" => FieldKind::Pi,
            other => return Err(Error::InvalidArgument(format!("unknown field kind `{other}`"))),
        })
    }
}

/// `sum_k w_k [alpha(k) . C(k) + beta(k) . C+(k)]` at time `time`.
#[derive(Debug, Clone)]
pub struct LinearBosonicForm {
    lattice: Arc<Lattice>,
    grid: FrequencyGrid,
    pub alpha: Vec<TensorKernel>,
    pub beta: Vec<TensorKernel>,
    pub label: String,
    pub time: f64,
    pub basis: FormBasis,
}

impl LinearBosonicForm {
    /// Hermitian form `alpha . C + h.c.`.
    pub fn hermitian(
        lattice: Arc<Lattice>,
        grid: FrequencyGrid,
        label: impl Into<String>,
        basis: FormBasis,
        alpha: Vec<TensorKernel>,
    ) -> Self {
        let beta = alpha.iter().map(|a| a.map(|e| e.conj())).collect();
        LinearBosonicForm {
            lattice,
            grid,
            alpha,
            beta,
            label: label.into(),
            time: 0.0,
            basis,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// Relative distance of `beta` from `alpha*`; zero for Hermitian forms.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut d = 0.0;
        let mut s = 0.0;
        for (a, b) in self.alpha.iter().zip(&self.beta) {
            d += (b - a.map(|e| e.conj())).norm_squared();
            s += a.norm_squared();
        }
        if s > 0.0 {
            (d / s).sqrt()
        } else {
            d.sqrt()
        }
    }

    pub fn dagger(&self) -> Self {
        LinearBosonicForm {
            alpha: self.beta.iter().map(|b| b.map(|e| e.conj())).collect(),
            beta: self.alpha.iter().map(|a| a.map(|e| e.conj())).collect(),
            label: format!("{}+", self.label),
            ..self.clone()
        }
    }

    /// Advance by `t`: `alpha(k) e^(-i w_k t)`, `beta(k) e^(+i w_k t)`.
    pub fn evolve(&self, t: f64) -> Self {
        let nodes = self.grid.nodes();
        LinearBosonicForm {
            alpha: self
                .alpha
                .iter()
                .zip(nodes)
                .map(|(a, &w)| a * Complex64::from_polar(1.0, -w * t))
                .collect(),
            beta: self
                .beta
                .iter()
                .zip(nodes)
                .map(|(b, &w)| b * Complex64::from_polar(1.0, w * t))
                .collect(),
            time: self.time + t,
            ..self.clone()
        }
    }

    /// The operator `X(w_k)` at a single node, `sum_k w_k X(w_k) = X`.
    pub fn node(&self, k: usize) -> Self {
        let z = self.lattice.zeros();
        let n = self.grid.len();
        let mut alpha = vec![z.clone(); n];
        let mut beta = vec![z; n];
        let s = c(1.0 / self.grid.weights()[k]);
        alpha[k] = &self.alpha[k] * s;
        beta[k] = &self.beta[k] * s;
        LinearBosonicForm {
            alpha,
            beta,
            label: format!("{}({k})", self.label),
            ..self.clone()
        }
    }

    /// Positive-frequency component at node `k`, the annihilator part of
    /// [`node`](Self::node).
    pub fn positive_frequency(&self, k: usize) -> Self {
        let mut out = self.node(k);
        out.beta = vec![self.lattice.zeros(); self.grid.len()];
        out
    }

    /// Compose a kernel onto the output index, `K . X`.
    pub fn compose_left(&self, k: &TensorKernel, label: impl Into<String>) -> Self {
        let lat = &self.lattice;
        LinearBosonicForm {
            alpha: self.alpha.iter().map(|a| lat.compose(k, a)).collect(),
            beta: self.beta.iter().map(|b| lat.compose(k, b)).collect(),
            label: label.into(),
            ..self.clone()
        }
    }
}

impl LinearBosonicForm {
    /// Expectation value in the coherent state `C(k)|psi> = gamma(k)|psi>`.
    pub fn coherent_expectation(&self, gamma: &[DVector<Complex64>]) -> Result<DVector<Complex64>> {
        let lat = &self.lattice;
        let n = lat.dim();
        if gamma.len() != self.grid.len() || gamma.iter().any(|g| g.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "coherent amplitudes for {} nodes of dimension {n} expected",
                self.grid.len()
            )));
        }
        let mut out = DVector::zeros(n);
        for (k, (g, &w)) in gamma.iter().zip(self.grid.weights()).enumerate() {
            out += (lat.apply(&self.alpha[k], g) + lat.apply(&self.beta[k], &g.map(|e| e.conj()))) * c(w);
        }
        Ok(out)
    }
}

/// `[a, b]` as a c-number kernel.
pub fn commutator(a: &LinearBosonicForm, b: &LinearBosonicForm) -> Result<TensorKernel> {
    if a.basis != b.basis || a.alpha.len() != b.alpha.len() || a.lattice.dim() != b.lattice.dim() {
        return Err(Error::ShapeMismatch(format!(
            "forms `{}` and `{}` live on different bases",
            a.label, b.label
        )));
    }
    let lat = &a.lattice;
    let mut out = lat.zeros();
    for (k, &w) in a.grid.weights().iter().enumerate() {
        let (aa, ab, ba, bb) = (&a.alpha[k], &a.beta[k], &b.alpha[k], &b.beta[k]);
        if aa.iter().all(|e| *e == c(0.0)) && ab.iter().all(|e| *e == c(0.0)) {
            continue;
        }
        out += (lat.compose(aa, &bb.transpose()) - lat.compose(ab, &ba.transpose())) * c(w);
    }
    Ok(out)
}

fn check_points(t: &CouplingTensor, greens: &[GreenKernel], sign: f64) -> Result<()> {
    let grid = t.grid();
    if greens.len() < grid.len() {
        return Err(Error::MissingGreen(greens.len()));
    }
    for (k, (g, &w)) in greens.iter().zip(grid.nodes()).enumerate() {
        let z = Complex64::new(w, sign * grid.eta());
        if (g.z - z).norm() > 1e-12 * z.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "Green function for node {k} solved at {}, expected {z}",
                g.z
            )));
        }
    }
    Ok(())
}

/// Expansion of a field operator at `t = 0`.
///
/// `greens` must hold the Green function at `w_k + i eta` for every node.
pub fn field_form(
    kind: FieldKind,
    t: &CouplingTensor,
    chi: &Susceptibility,
    greens: &[GreenKernel],
) -> Result<LinearBosonicForm> {
    check_points(t, greens, 1.0)?;
    let lat = t.lattice();
    let grid = t.grid();
    let pt = lat.transverse_projector();
    let mut alpha = Vec::with_capacity(grid.len());
    for (k, &w) in grid.nodes().iter().enumerate() {
        let tt = t.kernel(k).transpose();
        let gt = lat.compose(&greens[k].kernel, &tt);
        let a = match kind {
            FieldKind::A => lat.compose(pt, &gt) * c(w),
            FieldKind::B => lat.curl(&lat.compose(pt, &gt)) * c(w),
            FieldKind::E => &gt * Complex64::new(0.0, w * w),
            FieldKind::Pi => lat.compose(pt, &gt) * Complex64::new(0.0, -w * w),
            FieldKind::P => {
                let x = chi.at(Complex64::new(w, grid.eta()))?;
                lat.compose(&x, &gt) * Complex64::new(0.0, w * w) - &tt * IM
            }
            FieldKind::Pn => &tt * (-IM),
            FieldKind::D => lat.double_curl_left(&gt) * (-IM),
        };
        alpha.push(a);
    }
    Ok(LinearBosonicForm::hermitian(
        t.lattice_arc(),
        grid.clone(),
        kind.as_str(),
        FormBasis::Modes,
        alpha,
    ))
}

/// Vector potential obtained by inverting the mode expansion with the
/// canonical commutators: `alpha_A(k) = i f2(k)+`.
pub fn vector_potential_inverted(f: &ModeCoefficients, lattice: Arc<Lattice>) -> LinearBosonicForm {
    let alpha = (0..f.len()).map(|k| f.f2(k).adjoint() * IM).collect();
    LinearBosonicForm::hermitian(lattice, f.grid().clone(), "A", FormBasis::Modes, alpha)
}

/// Relative distance between two forms.
pub fn form_difference(a: &LinearBosonicForm, b: &LinearBosonicForm) -> f64 {
    let mut d = 0.0;
    let mut s = 0.0;
    for k in 0..a.alpha.len() {
        d += (&a.alpha[k] - &b.alpha[k]).norm_squared() + (&a.beta[k] - &b.beta[k]).norm_squared();
        s += b.alpha[k].norm_squared() + b.beta[k].norm_squared();
    }
    if s > 0.0 {
        (d / s).sqrt()
    } else {
        d.sqrt()
    }
}

/// Polarization in the medium basis, `alpha(l) = -i T~_l`.
pub fn medium_polarization(t: &CouplingTensor) -> LinearBosonicForm {
    let alpha = t.kernels().iter().map(|x| x.transpose() * (-IM)).collect();
    LinearBosonicForm::hermitian(t.lattice_arc(), t.grid().clone(), "P", FormBasis::Medium, alpha)
}

/// Polarization momentum in the medium basis, `alpha(l) = -w_l (T_l . F^-1)~`.
pub fn medium_momentum(t: &CouplingTensor, f_inverse: &TensorKernel) -> LinearBosonicForm {
    let lat = t.lattice();
    let alpha = t
        .kernels()
        .iter()
        .zip(t.grid().nodes())
        .map(|(x, &w)| lat.compose(x, f_inverse).transpose() * c(-w))
        .collect();
    LinearBosonicForm::hermitian(t.lattice_arc(), t.grid().clone(), "W", FormBasis::Medium, alpha)
}

fn relative(a: &TensorKernel, b: &TensorKernel) -> f64 {
    let s = b.norm();
    if s > 0.0 {
        (a - b).norm() / s
    } else {
        (a - b).norm()
    }
}

/// Canonical algebra of the medium pair `(P, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumAlgebra {
    /// `[W, P] = -i I/v`, relative.
    pub momentum_position: f64,
    /// `||[P, P]||` relative to `||I/v||`.
    pub position_position: f64,
    /// `||[W, W]||` relative to `||I/v||`.
    pub momentum_momentum: f64,
}

pub fn medium_algebra(t: &CouplingTensor, f_inverse: &TensorKernel) -> Result<MediumAlgebra> {
    let lat = t.lattice();
    let p = medium_polarization(t);
    let w = medium_momentum(t, f_inverse);
    let id = lat.identity();
    let scale = id.norm();
    Ok(MediumAlgebra {
        momentum_position: relative(&commutator(&w, &p)?, &(&id * (-IM))),
        position_position: commutator(&p, &p)?.norm() / scale,
        momentum_momentum: commutator(&w, &w)?.norm() / scale,
    })
}

/// Largest relative deviation of `[Pn(w_k), Pn+(w_l)]` from the cut
/// discontinuity.
///
/// The left side comes from the coupling through the form commutator, the
/// right side from the susceptibility. Diagonal pairs cover every node;
/// off-diagonal pairs are checked between neighbours.
pub fn noise_commutator_residual(t: &CouplingTensor, chi: &Susceptibility) -> Result<f64> {
    let grid = t.grid();
    let alpha = t.kernels().iter().map(|x| x.transpose() * (-IM)).collect();
    let pn = LinearBosonicForm::hermitian(t.lattice_arc(), grid.clone(), "Pn", FormBasis::Modes, alpha);
    let mut worst: f64 = 0.0;
    let scale = (0..grid.len())
        .map(|k| chi.absorption(k).norm() / grid.weights()[k])
        .fold(0.0, f64::max);
    for k in 0..grid.len() {
        let a = pn.positive_frequency(k);
        let lhs = commutator(&a, &a.dagger())?;
        let disc = chi.discontinuity(grid.nodes()[k])?;
        let rhs = disc.kernel * Complex64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI * grid.weights()[k]));
        let d = (lhs - &rhs).norm();
        worst = worst.max(if scale > 0.0 { d / scale } else { d });
        if k + 1 < grid.len() {
            let off = commutator(&a, &pn.positive_frequency(k + 1).dagger())?;
            worst = worst.max(if scale > 0.0 { off.norm() / scale } else { off.norm() });
        }
    }
    Ok(worst)
}

/// Per-node residual of `P = chi(w + i eta) E + Pn`.
pub fn constitutive_check(
    p: &LinearBosonicForm,
    e: &LinearBosonicForm,
    pn: &LinearBosonicForm,
    chi: &Susceptibility,
) -> Result<Vec<f64>> {
    let lat = chi.lattice();
    let grid = chi.grid();
    let mut out = Vec::with_capacity(grid.len());
    for (k, &w) in grid.nodes().iter().enumerate() {
        let x = chi.at(Complex64::new(w, grid.eta()))?;
        let rhs = lat.compose(&x, &e.alpha[k]) + &pn.alpha[k];
        out.push(relative(&rhs, &p.alpha[k]));
    }
    Ok(out)
}

/// Per-node residual of `curl B = dD/dt`.
pub fn maxwell_check(b: &LinearBosonicForm, d: &LinearBosonicForm) -> Vec<f64> {
    let lat = b.lattice();
    b.grid()
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let lhs = lat.curl(&b.alpha[k]);
            let rhs = &d.alpha[k] * Complex64::new(0.0, -w);
            relative(&lhs, &rhs)
        })
        .collect()
}

/// Worst relative longitudinal part of a form.
pub fn longitudinal_fraction(form: &LinearBosonicForm) -> f64 {
    let lat = form.lattice();
    let pl = lat.longitudinal_projector();
    form.alpha
        .iter()
        .map(|a| {
            let n = a.norm();
            let l = lat.compose(pl, a).norm();
            if n > 0.0 {
                l / n
            } else {
                l
            }
        })
        .fold(0.0, f64::max)
}

/// Worst relative distance of `D` from `E + P`.
///
/// Exact only as `eta -> 0`; the displacement form is built from the
/// double curl of the Green function, which closes Maxwell's equation
/// identically.
pub fn displacement_residual(d: &LinearBosonicForm, e: &LinearBosonicForm, p: &LinearBosonicForm) -> f64 {
    (0..d.alpha.len())
        .map(|k| relative(&(&e.alpha[k] + &p.alpha[k]), &d.alpha[k]))
        .fold(0.0, f64::max)
}

/// `[Pi, A] = -i P_T` at equal times, relative.
pub fn equal_time_residual(pi: &LinearBosonicForm, a: &LinearBosonicForm) -> Result<f64> {
    let lat = a.lattice();
    let expect = lat.transverse_projector() * (-IM);
    Ok(relative(&commutator(pi, a)?, &expect))
}

/// Maxwell and constitutive residuals against the Green solve accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub maxwell: Vec<f64>,
    pub constitutive: Vec<f64>,
    /// Defining-equation residual of the Green solve at each node.
    pub solve: Vec<f64>,
}

impl ConsistencyReport {
    /// Bound per node, ten times the solve residual but never below roundoff.
    pub fn bound(&self, k: usize) -> f64 {
        10.0 * self.solve[k].max(SOLVE_FLOOR)
    }

    pub fn pass(&self) -> bool {
        (0..self.solve.len()).all(|k| self.maxwell[k] <= self.bound(k) && self.constitutive[k] <= self.bound(k))
    }

    /// Largest ratio of residual to bound.
    pub fn worst_ratio(&self) -> f64 {
        (0..self.solve.len())
            .map(|k| self.maxwell[k].max(self.constitutive[k]) / self.bound(k))
            .fold(0.0, f64::max)
    }
}

pub fn consistency_report(t: &CouplingTensor, chi: &Susceptibility, greens: &[GreenKernel]) -> Result<ConsistencyReport> {
    let b = field_form(FieldKind::B, t, chi, greens)?;
    let d = field_form(FieldKind::D, t, chi, greens)?;
    let e = field_form(FieldKind::E, t, chi, greens)?;
    let p = field_form(FieldKind::P, t, chi, greens)?;
    let pn = field_form(FieldKind::Pn, t, chi, greens)?;
    Ok(ConsistencyReport {
        maxwell: maxwell_check(&b, &d),
        constitutive: constitutive_check(&p, &e, &pn, chi)?,
        solve: greens.iter().take(t.grid().len()).map(|g| g.residual).collect(),
    })
}
