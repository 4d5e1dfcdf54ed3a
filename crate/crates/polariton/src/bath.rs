//! Bath operators: the combinations of medium oscillators that commute with
//! the polarization `P` and its momentum `W`.
//!
//! ```text
//! C_b(k) = sum_l w_l [ H1(k,l) . C_m(l) + H2(k,l) . C_m+(l) ]
//! H1(k,l) = h1_k . T~_l delta_kl / w_k + h2_k . T~_l / (w_k - w_l + i eta)
//! H2(k,l) = -h2_k . T+_l / (w_k + w_l)
//! ```
//!
//! with `h1 = T~^-1` and `h2 = T* . chi^-1(w + i eta)`. The pole uses the
//! same `eta` as the mode kernels.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::CouplingTensor;
use crate::diagonalize::Packet;
use crate::error::{Error, Result};
use crate::lattice::{spectral_norm, FrequencyGrid, Lattice, TensorKernel};
use crate::oracle::{BasisRow, QuadraticHamiltonian};
use crate::susceptibility::Susceptibility;

const IM: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest accepted ratio of extreme singular values for an inversion.
pub const MIN_SINGULAR_RATIO: f64 = 1e-10;

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

fn singular_ratio(a: &TensorKernel) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    let max = s.max();
    if max > 0.0 {
        s.min() / max
    } else {
        0.0
    }
}

fn all_finite(a: &TensorKernel) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Coefficients of the bath operators.
#[derive(Debug, Clone)]
pub struct BathCoefficients {
    lattice: Arc<Lattice>,
    grid: FrequencyGrid,
    coupling: Vec<TensorKernel>,
    h1: Vec<TensorKernel>,
    h2: Vec<TensorKernel>,
}

/// Build `h1`, `h2` per node; both inversions must be well conditioned.
pub fn bath_coefficients(t: &CouplingTensor, chi: &Susceptibility) -> Result<BathCoefficients> {
    let lat = t.lattice();
    let grid = t.grid();
    let mut h1 = Vec::with_capacity(grid.len());
    let mut h2 = Vec::with_capacity(grid.len());
    for (node, &w) in grid.nodes().iter().enumerate() {
        let tk = t.kernel(node);
        let ratio = singular_ratio(tk);
        if ratio.is_nan() || ratio < MIN_SINGULAR_RATIO {
            return Err(Error::CouplingNotInvertible { node, ratio });
        }
        // a well-conditioned but underflowed kernel still has no usable inverse
        let inv_t = lat
            .inverse(&tk.transpose())
            .filter(all_finite)
            .ok_or(Error::CouplingNotInvertible { node, ratio })?;
        let x = chi.at(Complex64::new(w, grid.eta()))?;
        let ratio = singular_ratio(&x);
        if ratio.is_nan() || ratio < MIN_SINGULAR_RATIO {
            return Err(Error::SusceptibilityNotInvertible { node, ratio });
        }
        let inv_x = lat
            .inverse(&x)
            .filter(all_finite)
            .ok_or(Error::SusceptibilityNotInvertible { node, ratio })?;
        h1.push(inv_t);
        h2.push(lat.compose(&tk.map(|e| e.conj()), &inv_x));
    }
    Ok(BathCoefficients {
        lattice: t.lattice_arc(),
        grid: grid.clone(),
        coupling: t.kernels().to_vec(),
        h1,
        h2,
    })
}

impl BathCoefficients {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn h1(&self, k: usize) -> &TensorKernel {
        &self.h1[k]
    }

    pub fn h2(&self, k: usize) -> &TensorKernel {
        &self.h2[k]
    }

    /// Copy with `h1` multiplied by `s`, which breaks the canonical algebra.
    pub fn with_h1_scale(&self, s: f64) -> Self {
        BathCoefficients {
            h1: self.h1.iter().map(|h| h * c(s)).collect(),
            ..self.clone()
        }
    }

    /// Kronecker part of `H1`; the full kernel at `(k, k)` adds this to
    /// [`h1_pole`](Self::h1_pole).
    pub fn h1_kronecker(&self, k: usize) -> TensorKernel {
        self.lattice.compose(&self.h1[k], &self.coupling[k].transpose()) * c(1.0 / self.grid.weights()[k])
    }

    /// Pole part of `H1(k, l)`.
    pub fn h1_pole(&self, k: usize, l: usize) -> TensorKernel {
        let om = self.grid.nodes();
        let s = c(1.0) / Complex64::new(om[k] - om[l], self.grid.eta());
        self.lattice.compose(&self.h2[k], &self.coupling[l].transpose()) * s
    }

    pub fn h1_full(&self, k: usize, l: usize) -> TensorKernel {
        let p = self.h1_pole(k, l);
        if k == l {
            p + self.h1_kronecker(k)
        } else {
            p
        }
    }

    pub fn h2_pair(&self, k: usize, l: usize) -> TensorKernel {
        let om = self.grid.nodes();
        self.lattice.compose(&self.h2[k], &self.coupling[l].adjoint()) * c(-1.0 / (om[k] + om[l]))
    }

    /// Canonical-basis rows of `C_b(w_k)`.
    pub fn row(&self, k: usize) -> BasisRow {
        let n = self.lattice.dim();
        let v = self.lattice.cell_volume();
        let w = self.grid.weights();
        let mut r = BasisRow::zeros(n, n, self.len());
        for (l, &wl) in w.iter().enumerate() {
            r.c[l] = self.h1_full(k, l) * c(v * wl);
            r.cd[l] = self.h2_pair(k, l) * c(v * wl);
        }
        r
    }

    /// Rows of the packet `sum_k w_k phi_k C_b(w_k)`.
    pub fn smeared_row(&self, phi: &[f64]) -> BasisRow {
        let n = self.lattice.dim();
        let w = self.grid.weights();
        let mut out = BasisRow::zeros(n, n, self.len());
        for k in 0..self.len() {
            if phi[k] != 0.0 {
                out = &out + &(&self.row(k) * c(w[k] * phi[k]));
            }
        }
        out
    }

    /// Relative residual of the linkage `h2 . chi(w + i eta) = T*`.
    pub fn linkage_residual(&self, chi: &Susceptibility) -> Result<f64> {
        let lat = &self.lattice;
        let mut worst: f64 = 0.0;
        for (k, &w) in self.grid.nodes().iter().enumerate() {
            let x = chi.at(Complex64::new(w, self.grid.eta()))?;
            let tc = self.coupling[k].map(|e| e.conj());
            worst = worst.max((lat.compose(&self.h2[k], &x) - &tc).norm() / tc.norm());
        }
        Ok(worst)
    }
}

/// Commutators of the bath operators with `P` and `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    /// Global residual of `[C_b, P] = 0` from the kernel sums.
    pub polarization: f64,
    /// Global residual of `[C_b, W] = 0` from the kernel sums.
    pub momentum: f64,
    /// Largest gap between the kernel sums and the commutators evaluated
    /// through the canonical basis, relative to the scale of single terms.
    pub route_agreement: f64,
}

pub fn verify_bath_independence(
    bath: &BathCoefficients,
    h: &QuadraticHamiltonian,
    f_inverse: &TensorKernel,
) -> Result<IndependenceReport> {
    let lat = bath.lattice();
    let grid = bath.grid();
    let om = grid.nodes();
    let w = grid.weights();
    let pc = h.polarization_row();
    let wrow = h.medium_momentum_row()?;
    let (mut a, mut b, mut d2, mut d3) = (0.0, 0.0, 0.0, 0.0);
    let mut agreement: f64 = 0.0;
    for k in 0..bath.len() {
        let mut k52 = lat.zeros();
        let mut k53 = lat.zeros();
        for l in 0..bath.len() {
            let t = &bath.coupling[l];
            let x = lat.compose(&bath.h1_full(k, l), &t.map(|e| e.conj()));
            let y = lat.compose(&bath.h2_pair(k, l), t);
            k52 += (&x + &y) * c(w[l]);
            k53 += (&x - &y) * c(w[l] * om[l]);
        }
        let tk = &bath.coupling[k];
        let dk = lat.compose(&lat.compose(&bath.h1[k], &tk.transpose()), &tk.map(|e| e.conj()));
        let nd = dk.norm_squared();
        a += w[k] * k52.norm_squared();
        b += w[k] * k53.norm_squared();
        d2 += w[k] * nd;
        d3 += w[k] * om[k] * om[k] * nd;

        let row = bath.row(k);
        let with_p = h.commutator(&row, pc);
        let with_w = h.commutator(&row, &wrow);
        let scale = nd.sqrt().max(f64::MIN_POSITIVE);
        let gap_p = (with_p - &k52 * IM).norm() / scale;
        let k53f = lat.compose(&k53, f_inverse);
        let scale_w = (lat.compose(&dk, f_inverse).norm() * om[k]).max(f64::MIN_POSITIVE);
        let gap_w = (with_w + k53f).norm() / scale_w;
        agreement = agreement.max(gap_p).max(gap_w);
    }
    let ratio = |x: f64, y: f64| if y > 0.0 { (x / y).sqrt() } else { x.sqrt() };
    Ok(IndependenceReport {
        polarization: ratio(a, d2),
        momentum: ratio(b, d3),
        route_agreement: agreement,
    })
}

/// Worst relative residual of `h1 . disc . h1+ / 2i = pi I/v` over nodes.
pub fn verify_bath_canonical(bath: &BathCoefficients, chi: &Susceptibility) -> Result<f64> {
    let lat = bath.lattice();
    let expect = lat.identity() * c(PI);
    let mut worst: f64 = 0.0;
    for (k, &w) in bath.grid().nodes().iter().enumerate() {
        let disc = chi.discontinuity(w)?.kernel;
        let lhs = lat.compose(&lat.compose(&bath.h1[k], &disc), &bath.h1[k].adjoint()) / Complex64::new(0.0, 2.0);
        worst = worst.max((lhs - &expect).norm() / expect.norm());
    }
    Ok(worst)
}

/// Smeared commutators of the bath operators.
#[derive(Debug, Clone, PartialEq)]
pub struct BathAlgebra {
    /// Largest deviation of `[C_b[a], C_b+[b]]` from `<a, b> I/v`.
    pub deviation: f64,
    /// Largest `[C_b[a], C_b[b]]`.
    pub annihilator: f64,
}

pub fn bath_algebra(bath: &BathCoefficients, h: &QuadraticHamiltonian, packets: &[Packet]) -> BathAlgebra {
    let grid = bath.grid();
    let lat = bath.lattice();
    let v = lat.cell_volume();
    let w = grid.weights();
    let phis: Vec<Vec<f64>> = packets.iter().map(|p| p.values(grid)).collect();
    let rows: Vec<BasisRow> = phis.iter().map(|p| bath.smeared_row(p)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((x, y), q)| q * x * y).sum::<f64>();
    let mut deviation: f64 = 0.0;
    let mut annihilator: f64 = 0.0;
    for (i, pa) in phis.iter().enumerate() {
        for (j, pb) in phis.iter().enumerate() {
            let norm = (dot(pa, pa) * dot(pb, pb)).sqrt();
            let n = h.commutator(&rows[i], &rows[j].dagger()) * c(v) - DMatrix::identity(lat.dim(), lat.dim()) * c(dot(pa, pb));
            deviation = deviation.max(spectral_norm(&n) / norm);
            let m = h.commutator(&rows[i], &rows[j]);
            annihilator = annihilator.max(v * spectral_norm(&m) / norm);
        }
    }
    BathAlgebra { deviation, annihilator }
}

/// Probe subspace for comparing two quadratic forms: unit field coordinates
/// on the transverse subspace and packet-smeared medium coordinates.
struct Probe {
    rows: BasisRow,
    n: usize,
    /// Medium weights `phi_l sqrt(w_l / v)` per packet.
    packets: Vec<Vec<f64>>,
    pt_scaled: DMatrix<Complex64>,
}

impl Probe {
    fn new(lat: &Lattice, grid: &FrequencyGrid, packets: &[Packet]) -> Self {
        let n = lat.dim();
        let k_n = grid.len();
        let v = lat.cell_volume();
        let w = grid.weights();
        let profiles: Vec<Vec<f64>> = packets
            .iter()
            .map(|p| {
                let phi = p.values(grid);
                let norm = phi.iter().zip(w).map(|(x, q)| q * x * x).sum::<f64>().sqrt();
                phi.iter().zip(w).map(|(x, q)| x / norm * (q / v).sqrt()).collect()
            })
            .collect();
        let r = 2 * n + 2 * n * profiles.len();
        let mut rows = BasisRow::zeros(r, n, k_n);
        let pt_scaled = lat.transverse_projector() * c(v.sqrt());
        rows.a.view_mut((0, 0), (n, n)).copy_from(&pt_scaled);
        rows.p.view_mut((n, 0), (n, n)).copy_from(&pt_scaled);
        for (j, prof) in profiles.iter().enumerate() {
            let base = 2 * n + 2 * n * j;
            for (l, &p) in prof.iter().enumerate().take(k_n) {
                let s = DMatrix::identity(n, n) * c(p);
                rows.c[l].view_mut((base, 0), (n, n)).copy_from(&s);
                rows.cd[l].view_mut((base + n, 0), (n, n)).copy_from(&s);
            }
        }
        Probe {
            rows,
            n,
            packets: profiles,
            pt_scaled,
        }
    }

    /// `X y~` for rows `y`, using the sparsity of the probe.
    fn pair(&self, y: &BasisRow) -> DMatrix<Complex64> {
        let n = self.n;
        let mut out = DMatrix::zeros(self.rows.rows(), y.rows());
        out.rows_mut(0, n).copy_from(&(&self.pt_scaled * y.a.transpose()));
        out.rows_mut(n, n).copy_from(&(&self.pt_scaled * y.p.transpose()));
        for (j, prof) in self.packets.iter().enumerate() {
            let base = 2 * n + 2 * n * j;
            let mut sc = DMatrix::zeros(n, y.rows());
            let mut scd = DMatrix::zeros(n, y.rows());
            for (l, &s) in prof.iter().enumerate() {
                sc += y.c[l].transpose() * c(s);
                scd += y.cd[l].transpose() * c(s);
            }
            out.rows_mut(base, n).copy_from(&sc);
            out.rows_mut(base + n, n).copy_from(&scd);
        }
        out
    }
}

/// Distance between the bath-form Hamiltonian and the original one as
/// quadratic forms on a probe subspace.
///
/// The bath form is assembled term by term from `P`, `W`, the field and the
/// bath rows. Both forms are restricted to transverse field coordinates
/// and to medium coordinates smeared by `packets`, and compared in the
/// spectral norm relative to the original.
pub fn hamiltonian_equivalence(
    bath: &BathCoefficients,
    h: &QuadraticHamiltonian,
    f_inverse: &TensorKernel,
    packets: &[Packet],
) -> Result<f64> {
    let lat = bath.lattice();
    let grid = bath.grid();
    let v = lat.cell_volume();
    let om = grid.nodes();
    let w = grid.weights();
    let probe = Probe::new(lat, grid, packets);

    let ea = h.vector_potential_row();
    let ep = h.momentum_row();
    let pc = h.polarization_row();
    let wrow = h.medium_momentum_row()?;
    let fk = h.structure();

    let x_a = probe.pair(&ea);
    let x_p = probe.pair(&ep);
    let x_pc = probe.pair(pc);
    let x_w = probe.pair(&wrow);

    let r = probe.rows.rows();
    let mut hn = DMatrix::<Complex64>::zeros(r, r);
    let mut add = |x: &DMatrix<Complex64>, k: Option<&TensorKernel>, y: &DMatrix<Complex64>, wt: Complex64| {
        let m = match k {
            Some(k) => x * k * y.transpose() * (wt * v * v),
            None => x * y.transpose() * (wt * v),
        };
        hn += &m + m.transpose();
    };
    add(&x_p, None, &x_p, c(0.5));
    add(&x_a, Some(&(lat.double_curl_operator() * c(-1.0))), &x_a, c(0.5));
    let mut q = lat.zeros();
    for k in 0..bath.len() {
        let t = &bath.coupling[k];
        q += lat.compose(&t.transpose(), &t.map(|e| e.conj())) * c(w[k] * om[k].powi(3));
    }
    let fqf = lat.compose(&lat.compose(f_inverse, &q), f_inverse);
    add(&x_pc, Some(&fqf), &x_pc, c(1.0));
    add(&x_pc, Some(lat.longitudinal_projector()), &x_pc, c(0.5));
    add(&x_w, Some(fk), &x_w, c(0.5));
    add(&x_w, Some(fk), &x_a, c(-1.0));
    add(&x_a, Some(fk), &x_a, c(0.5));
    for k in 0..bath.len() {
        let row = bath.row(k);
        let x_b = probe.pair(&row);
        let x_bd = probe.pair(&row.dagger());
        add(&x_bd, None, &x_b, c(w[k] * om[k]));
        add(&x_bd, Some(&bath.h2[k]), &x_pc, Complex64::new(0.0, -w[k]));
        add(&x_pc, Some(&bath.h2[k].adjoint()), &x_b, Complex64::new(0.0, w[k]));
    }
    let reference = probe.pair(&h.apply_h(&probe.rows)).transpose();
    let d = hn - &reference;
    Ok(spectral_norm(&d) / spectral_norm(&reference))
}

/// Largest relative coupling between distinct sites in the bath kernels.
///
/// Vanishes for site-local media, where the bath form of the Hamiltonian
/// splits into independent damped oscillators per site.
pub fn locality_residual(bath: &BathCoefficients, f_kernel: &TensorKernel) -> f64 {
    let off = |k: &TensorKernel| {
        let mut o = 0.0;
        for j in 0..k.ncols() {
            for i in 0..k.nrows() {
                if i / 3 != j / 3 {
                    o += k[(i, j)].norm_sqr();
                }
            }
        }
        let s = k.norm();
        if s > 0.0 {
            o.sqrt() / s
        } else {
            0.0
        }
    };
    let mut worst = off(f_kernel);
    for k in 0..bath.len() {
        worst = worst.max(off(&bath.h1[k])).max(off(&bath.h2[k]));
        for l in 0..bath.len() {
            worst = worst.max(off(&bath.h1_full(k, l))).max(off(&bath.h2_pair(k, l)));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_model, structure_tensor, ModelId, ModelParams};
    use crate::oracle::assemble_hamiltonian;

    fn setup(id: ModelId, n: usize, k: usize, scale: f64) -> (CouplingTensor, Susceptibility) {
        let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
        let grid = FrequencyGrid::midpoint(k, 3.0, 2.0).unwrap();
        let p = ModelParams { scale, ..ModelParams::default() };
        let t = build_model(id, lat, &grid, &p).unwrap();
        let chi = Susceptibility::new(&t);
        (t, chi)
    }

    #[test]
    fn zero_coupling_rejected() {
        let (t, chi) = setup(ModelId::LocalLorentz, 1, 4, 0.0);
        let e = bath_coefficients(&t, &chi).unwrap_err();
        assert!(matches!(e, Error::CouplingNotInvertible { node: 0, .. }));
        assert!(e.to_string().contains("coupling not invertible"));
    }

    #[test]
    fn single_site_scalars() {
        let (t, chi) = setup(ModelId::LocalLorentz, 1, 4, 1.0);
        let b = bath_coefficients(&t, &chi).unwrap();
        let k = 1;
        let tau = t.kernel(k)[(0, 0)];
        let z = Complex64::new(t.grid().nodes()[k], t.grid().eta());
        let x = chi.at(z).unwrap()[(0, 0)];
        assert!((b.h1(k)[(2, 2)] - 1.0 / tau).norm() < 1e-13 * (1.0 / tau).norm());
        assert!((b.h2(k)[(0, 0)] - tau.conj() / x).norm() < 1e-13 * (tau / x).norm());
        assert!(b.linkage_residual(&chi).unwrap() < 1e-14);
    }

    #[test]
    fn canonical_identity_and_violator() {
        let (t, chi) = setup(ModelId::GaussianNonlocal, 2, 4, 1.0);
        let b = bath_coefficients(&t, &chi).unwrap();
        assert!(verify_bath_canonical(&b, &chi).unwrap() < 1e-12);
        let bad = verify_bath_canonical(&b.with_h1_scale(1.1), &chi).unwrap();
        assert!((bad - 0.21).abs() < 1e-10, "{bad}");
    }

    #[test]
    fn routes_agree() {
        let (t, chi) = setup(ModelId::GaussianNonlocal, 2, 5, 1.0);
        let b = bath_coefficients(&t, &chi).unwrap();
        let fs = structure_tensor(&t).unwrap();
        let h = assemble_hamiltonian(&t, fs.kernel()).unwrap();
        let finv = fs.inverse(t.lattice()).unwrap();
        let r = verify_bath_independence(&b, &h, &finv).unwrap();
        assert!(r.route_agreement < 1e-10, "{r:?}");
    }

    #[test]
    fn independence_frozen() {
        for (id, n, k, want) in [
            (ModelId::LocalLorentz, 1, 8, (0.12175487196725952, 0.5782229472084977)),
            (ModelId::GaussianNonlocal, 2, 4, (0.40947215728659503, 1.2582159612232602)),
        ] {
            let (t, chi) = setup(id, n, k, 1.0);
            let b = bath_coefficients(&t, &chi).unwrap();
            let fs = structure_tensor(&t).unwrap();
            let h = assemble_hamiltonian(&t, fs.kernel()).unwrap();
            let finv = fs.inverse(t.lattice()).unwrap();
            let r = verify_bath_independence(&b, &h, &finv).unwrap();
            assert!((r.polarization - want.0).abs() < 1e-9 * want.0, "{id}: {r:?}");
            assert!((r.momentum - want.1).abs() < 1e-9 * want.1, "{id}: {r:?}");
        }
    }

    #[test]
    fn local_model_stays_local() {
        let (t, chi) = setup(ModelId::LocalLorentz, 2, 4, 1.0);
        let b = bath_coefficients(&t, &chi).unwrap();
        let fs = structure_tensor(&t).unwrap();
        assert!(locality_residual(&b, fs.kernel()) < 1e-12);
        let (tg, chig) = setup(ModelId::GaussianNonlocal, 2, 4, 1.0);
        let bg = bath_coefficients(&tg, &chig).unwrap();
        let fg = structure_tensor(&tg).unwrap();
        assert!(locality_residual(&bg, fg.kernel()) > 1e-3);
    }

    #[test]
    fn weak_equivalence_frozen() {
        let two = [
            Packet::Gaussian { center: 0.35, width: 0.12 },
            Packet::Gaussian { center: 0.65, width: 0.12 },
        ];
        for (id, n, k, want) in [
            (ModelId::LocalLorentz, 1, 8, 0.8407497197131133),
            (ModelId::GaussianNonlocal, 2, 4, 0.20113196491652607),
        ] {
            let (t, chi) = setup(id, n, k, 1.0);
            let b = bath_coefficients(&t, &chi).unwrap();
            let fs = structure_tensor(&t).unwrap();
            let h = assemble_hamiltonian(&t, fs.kernel()).unwrap();
            let finv = fs.inverse(t.lattice()).unwrap();
            let got = hamiltonian_equivalence(&b, &h, &finv, &two).unwrap();
            assert!((got - want).abs() < 1e-9 * want, "{id}: {got} vs {want}");
        }
    }
}
