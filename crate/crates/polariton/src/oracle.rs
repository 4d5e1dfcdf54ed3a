//! Brute-force quadratic Hamiltonian over the canonical basis.
//!
//! The basis is `xi = (A, Pi, C_m(0..K), C_m+(0..K))`, each block of size
//! `3M`. An operator linear in the basis is a [`BasisRow`]: one row of
//! coefficients per output index. The Hamiltonian is `1/2 xi~ H xi`, the
//! commutator matrix is `[xi_a, xi_b] = J_ab`, so that
//!
//! ```text
//! [x . xi, y . xi] = x J y~        [x . xi, H] = (x J H) . xi
//! ```
//!
//! `J` and `H` are applied block by block; the dense matrices are only
//! materialized on request for small problems.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::coupling::CouplingTensor;
use crate::diagonalize::ModeCoefficients;
use crate::error::{Error, Result};
use crate::lattice::{FrequencyGrid, Lattice, TensorKernel};

const IM: Complex64 = Complex64::new(0.0, 1.0);

fn c(x: f64) -> Complex64 {
    Complex64::from(x)
}

/// Linear combination of canonical variables, one row per output index.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub a: DMatrix<Complex64>,
    pub p: DMatrix<Complex64>,
    pub c: Vec<DMatrix<Complex64>>,
    pub cd: Vec<DMatrix<Complex64>>,
}

impl BasisRow {
    pub fn zeros(rows: usize, block: usize, nodes: usize) -> Self {
        let z = DMatrix::zeros(rows, block);
        BasisRow {
            a: z.clone(),
            p: z.clone(),
            c: vec![z.clone(); nodes],
            cd: vec![z; nodes],
        }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn block(&self) -> usize {
        self.a.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.c.len()
    }

    /// Rows of the hermitian conjugate operator.
    pub fn dagger(&self) -> Self {
        let conj = |m: &DMatrix<Complex64>| m.map(|e| e.conj());
        BasisRow {
            a: conj(&self.a),
            p: conj(&self.p),
            c: self.cd.iter().map(conj).collect(),
            cd: self.c.iter().map(conj).collect(),
        }
    }

    /// Left multiplication of every block, `m . x`.
    pub fn left(&self, m: &DMatrix<Complex64>) -> Self {
        BasisRow {
            a: m * &self.a,
            p: m * &self.p,
            c: self.c.iter().map(|x| m * x).collect(),
            cd: self.cd.iter().map(|x| m * x).collect(),
        }
    }

    /// Kernel composition `K . X` acting on the output index.
    pub fn compose_left(&self, lattice: &Lattice, k: &TensorKernel) -> Self {
        self.left(&(k * c(lattice.cell_volume())))
    }

    /// `x y~` summed over all blocks.
    pub fn pair(&self, other: &BasisRow) -> DMatrix<Complex64> {
        let mut out = &self.a * other.a.transpose() + &self.p * other.p.transpose();
        for (x, y) in self.c.iter().zip(&other.c) {
            out += x * y.transpose();
        }
        for (x, y) in self.cd.iter().zip(&other.cd) {
            out += x * y.transpose();
        }
        out
    }

    fn map_blocks(&self, f: impl Fn(&DMatrix<Complex64>) -> DMatrix<Complex64>) -> Self {
        BasisRow {
            a: f(&self.a),
            p: f(&self.p),
            c: self.c.iter().map(&f).collect(),
            cd: self.cd.iter().map(&f).collect(),
        }
    }

    fn zip_blocks(&self, o: &BasisRow, f: impl Fn(&DMatrix<Complex64>, &DMatrix<Complex64>) -> DMatrix<Complex64>) -> Self {
        BasisRow {
            a: f(&self.a, &o.a),
            p: f(&self.p, &o.p),
            c: self.c.iter().zip(&o.c).map(|(x, y)| f(x, y)).collect(),
            cd: self.cd.iter().zip(&o.cd).map(|(x, y)| f(x, y)).collect(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.a.norm_squared()
            + self.p.norm_squared()
            + self.c.iter().map(|x| x.norm_squared()).sum::<f64>()
            + self.cd.iter().map(|x| x.norm_squared()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared norm with the quadrature measure removed: fields divided by
    /// `v`, medium blocks by `v w_l`.
    pub fn measure_norm_squared(&self, v: f64, weights: &[f64]) -> f64 {
        let mut s = (self.a.norm_squared() + self.p.norm_squared()) / v;
        for (l, &w) in weights.iter().enumerate() {
            s += (self.c[l].norm_squared() + self.cd[l].norm_squared()) / (v * w);
        }
        s
    }

    /// Dense `rows x (2 + 2K) 3M` matrix in the order `A, Pi, C, C+`.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.block();
        let k = self.nodes();
        let mut out = DMatrix::zeros(self.rows(), 2 * n + 2 * k * n);
        out.columns_mut(0, n).copy_from(&self.a);
        out.columns_mut(n, n).copy_from(&self.p);
        for l in 0..k {
            out.columns_mut(2 * n + l * n, n).copy_from(&self.c[l]);
            out.columns_mut(2 * n + (k + l) * n, n).copy_from(&self.cd[l]);
        }
        out
    }

    pub fn from_dense(m: &DMatrix<Complex64>, block: usize, nodes: usize) -> Self {
        let n = block;
        BasisRow {
            a: m.columns(0, n).into_owned(),
            p: m.columns(n, n).into_owned(),
            c: (0..nodes).map(|l| m.columns(2 * n + l * n, n).into_owned()).collect(),
            cd: (0..nodes)
                .map(|l| m.columns(2 * n + (nodes + l) * n, n).into_owned())
                .collect(),
        }
    }
}

impl Add for &BasisRow {
    type Output = BasisRow;
    fn add(self, o: &BasisRow) -> BasisRow {
        self.zip_blocks(o, |x, y| x + y)
    }
}

impl Sub for &BasisRow {
    type Output = BasisRow;
    fn sub(self, o: &BasisRow) -> BasisRow {
        self.zip_blocks(o, |x, y| x - y)
    }
}

impl Mul<Complex64> for &BasisRow {
    type Output = BasisRow;
    fn mul(self, s: Complex64) -> BasisRow {
        self.map_blocks(|x| x * s)
    }
}

/// Discretized Hamiltonian of field, medium and coupling.
#[derive(Debug, Clone)]
pub struct QuadraticHamiltonian {
    lattice: Arc<Lattice>,
    grid: FrequencyGrid,
    coupling: Vec<TensorKernel>,
    structure: TensorKernel,
    /// `v^2 (F - D)`
    field_block: DMatrix<Complex64>,
    /// `v^2 w_l w_l T_l`, the `(C(l), A)` block.
    cross: Vec<DMatrix<Complex64>>,
    /// Polarization density as a basis row.
    polarization: BasisRow,
}

/// Assemble the Hamiltonian from the coupling and the kernel of `F`.
///
/// The zero kernel is accepted for `F`, which with `T = 0` gives the
/// decoupled field and medium.
pub fn assemble_hamiltonian(t: &CouplingTensor, structure: &TensorKernel) -> Result<QuadraticHamiltonian> {
    let lat = t.lattice();
    let n = lat.dim();
    if structure.nrows() != n || structure.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "structure tensor is {}x{}, lattice needs {n}x{n}",
            structure.nrows(),
            structure.ncols()
        )));
    }
    let grid = t.grid();
    let v = lat.cell_volume();
    let field_block = (structure - lat.double_curl_operator()) * c(v * v);
    let mut cross = Vec::with_capacity(grid.len());
    let mut polarization = BasisRow::zeros(n, n, grid.len());
    for (l, ((&w, &wt), tk)) in grid.nodes().iter().zip(grid.weights()).zip(t.kernels()).enumerate() {
        cross.push(tk * c(v * v * wt * w));
        polarization.c[l] = (tk * Complex64::new(0.0, -v * wt)).transpose();
        polarization.cd[l] = (tk.map(|e| e.conj()) * Complex64::new(0.0, v * wt)).transpose();
    }
    Ok(QuadraticHamiltonian {
        lattice: t.lattice_arc(),
        grid: grid.clone(),
        coupling: t.kernels().to_vec(),
        structure: structure.clone(),
        field_block,
        cross,
        polarization,
    })
}

impl QuadraticHamiltonian {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn structure(&self) -> &TensorKernel {
        &self.structure
    }

    /// Size of the canonical basis.
    pub fn dim(&self) -> usize {
        let n = self.lattice.dim();
        2 * n + 2 * n * self.grid.len()
    }

    /// Polarization density `P = sum_l w_l (-i T~_l C(l) + h.c.)` as rows.
    pub fn polarization_row(&self) -> &BasisRow {
        &self.polarization
    }

    fn unit(&self, set: impl Fn(&mut BasisRow, DMatrix<Complex64>)) -> BasisRow {
        let n = self.lattice.dim();
        let mut r = BasisRow::zeros(n, n, self.grid.len());
        set(&mut r, DMatrix::identity(n, n));
        r
    }

    pub fn vector_potential_row(&self) -> BasisRow {
        self.unit(|r, i| r.a = i)
    }

    pub fn momentum_row(&self) -> BasisRow {
        self.unit(|r, i| r.p = i)
    }

    pub fn medium_row(&self, node: usize) -> BasisRow {
        self.unit(|r, i| r.c[node] = i)
    }

    /// Polarization momentum `W` as rows; needs `F` invertible.
    pub fn medium_momentum_row(&self) -> Result<BasisRow> {
        let lat = &self.lattice;
        let n = lat.dim();
        let finv = lat.inverse(&self.structure).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
        let v = lat.cell_volume();
        let mut r = BasisRow::zeros(n, n, self.grid.len());
        for (l, ((&w, &wt), tk)) in self.grid.nodes().iter().zip(self.grid.weights()).zip(&self.coupling).enumerate() {
            let tf = lat.compose(tk, &finv) * c(-v * wt * w);
            r.c[l] = tf.transpose();
            r.cd[l] = tf.map(|e| e.conj()).transpose();
        }
        Ok(r)
    }

    /// `x J`.
    pub fn apply_j(&self, x: &BasisRow) -> BasisRow {
        let pt = self.lattice.transverse_projector();
        let v = self.lattice.cell_volume();
        let w = self.grid.weights();
        BasisRow {
            a: &x.p * pt * (-IM),
            p: &x.a * pt * IM,
            c: x.cd.iter().zip(w).map(|(y, &wl)| y * c(-1.0 / (v * wl))).collect(),
            cd: x.c.iter().zip(w).map(|(y, &wl)| y * c(1.0 / (v * wl))).collect(),
        }
    }

    /// `x H`.
    pub fn apply_h(&self, x: &BasisRow) -> BasisRow {
        let lat = &self.lattice;
        let v = lat.cell_volume();
        let pl = lat.longitudinal_projector();
        let nodes = self.grid.nodes();
        let w = self.grid.weights();
        let mut a = &x.a * &self.field_block;
        let mut u = DMatrix::zeros(x.rows(), lat.dim());
        for l in 0..self.grid.len() {
            let h = &self.cross[l];
            a += &x.c[l] * h + &x.cd[l] * h.map(|e| e.conj());
            u += &x.c[l] * self.polarization.c[l].transpose() + &x.cd[l] * self.polarization.cd[l].transpose();
        }
        let u = u * pl * c(v * v);
        let mut cs = Vec::with_capacity(self.grid.len());
        let mut cds = Vec::with_capacity(self.grid.len());
        for l in 0..self.grid.len() {
            let e = c(v * w[l] * nodes[l]);
            let h = &self.cross[l];
            cs.push(&x.cd[l] * e + &x.a * h.transpose() + &u * &self.polarization.c[l]);
            cds.push(&x.c[l] * e + &x.a * h.map(|z| z.conj()).transpose() + &u * &self.polarization.cd[l]);
        }
        BasisRow {
            a,
            p: &x.p * c(v),
            c: cs,
            cd: cds,
        }
    }

    /// c-number commutator `[x . xi, y . xi] = x J y~`.
    pub fn commutator(&self, x: &BasisRow, y: &BasisRow) -> DMatrix<Complex64> {
        self.apply_j(x).pair(y)
    }

    /// Rows of `i [H, X]`, the time derivative.
    pub fn heisenberg(&self, x: &BasisRow) -> BasisRow {
        &self.apply_h(&self.apply_j(x)) * (-IM)
    }

    /// Dense `H`, assembled entry by entry from the energy terms.
    pub fn dense(&self) -> DMatrix<Complex64> {
        let lat = &self.lattice;
        let n = lat.dim();
        let k_n = self.grid.len();
        let v = lat.cell_volume();
        let dim = self.dim();
        let ic = |l: usize| 2 * n + l * n;
        let icd = |l: usize| 2 * n + (k_n + l) * n;
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        let mut pc = DMatrix::<Complex64>::zeros(n, dim);
        h.view_mut((0, 0), (n, n)).copy_from(&self.field_block);
        h.view_mut((n, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * c(v)));
        for l in 0..k_n {
            let (w, wt) = (self.grid.nodes()[l], self.grid.weights()[l]);
            let t = &self.coupling[l];
            let id = DMatrix::identity(n, n) * c(v * wt * w);
            h.view_mut((ic(l), icd(l)), (n, n)).copy_from(&id);
            h.view_mut((icd(l), ic(l)), (n, n)).copy_from(&id);
            let x = t * c(v * v * wt * w);
            let xc = t.map(|e| e.conj()) * c(v * v * wt * w);
            h.view_mut((ic(l), 0), (n, n)).copy_from(&x);
            h.view_mut((0, ic(l)), (n, n)).copy_from(&x.transpose());
            h.view_mut((icd(l), 0), (n, n)).copy_from(&xc);
            h.view_mut((0, icd(l)), (n, n)).copy_from(&xc.transpose());
            pc.view_mut((0, ic(l)), (n, n))
                .copy_from(&(t * Complex64::new(0.0, -v * wt)).transpose());
            pc.view_mut((0, icd(l)), (n, n))
                .copy_from(&(t.map(|e| e.conj()) * Complex64::new(0.0, v * wt)).transpose());
        }
        h += pc.transpose() * lat.longitudinal_projector() * &pc * c(v * v);
        h
    }

    /// Dense `J`.
    pub fn dense_j(&self) -> DMatrix<Complex64> {
        let n = self.lattice.dim();
        let k_n = self.grid.len();
        let v = self.lattice.cell_volume();
        let mut j = DMatrix::<Complex64>::zeros(self.dim(), self.dim());
        let pt = self.lattice.transverse_projector();
        j.view_mut((0, n), (n, n)).copy_from(&(pt * IM));
        j.view_mut((n, 0), (n, n)).copy_from(&(pt * (-IM)));
        for l in 0..k_n {
            let s = 1.0 / (v * self.grid.weights()[l]);
            let (ic, icd) = (2 * n + l * n, 2 * n + (k_n + l) * n);
            j.view_mut((ic, icd), (n, n)).copy_from(&(DMatrix::identity(n, n) * c(s)));
            j.view_mut((icd, ic), (n, n)).copy_from(&(DMatrix::identity(n, n) * c(-s)));
        }
        j
    }

    /// Relative failure of `H` to define a Hermitian operator.
    ///
    /// Hermiticity of `1/2 xi~ H xi` means `dagger(x H) = dagger(x) H` for
    /// every row `x`; this is probed on a fixed pseudo-random row block.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.lattice.dim();
        let k_n = self.grid.len();
        let mut x = BasisRow::zeros(n, n, k_n);
        let mut seed = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut fill = |m: &mut DMatrix<Complex64>| {
            for e in m.iter_mut() {
                *e = Complex64::new(next(), next());
            }
        };
        fill(&mut x.a);
        fill(&mut x.p);
        for l in 0..k_n {
            fill(&mut x.c[l]);
            fill(&mut x.cd[l]);
        }
        let lhs = self.apply_h(&x).dagger();
        let rhs = self.apply_h(&x.dagger());
        (&lhs - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
    }

    /// Structural assertions on the assembled form.
    pub fn structure_report(&self) -> StructureReport {
        let lat = &self.lattice;
        let pl = lat.longitudinal_projector();
        let v = lat.cell_volume();
        let scale = self.field_block.norm().max(f64::MIN_POSITIVE);
        // longitudinal A only enters through F; with F = 0 the (A, Pi)
        // sector lives on the transverse subspace
        let vacuum = lat.double_curl_operator() * c(-v * v);
        let longitudinal = (pl * &vacuum).norm() / scale;
        let bilinear = self.cross.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let quadratic = self.structure.norm();
        StructureReport {
            hermiticity: self.hermiticity_residual(),
            longitudinal_field_energy: longitudinal,
            terms_paired: (bilinear == 0.0) == (quadratic == 0.0),
        }
    }
}

/// Structural checks on a [`QuadraticHamiltonian`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub hermiticity: f64,
    /// Longitudinal part of the free field energy, relative.
    pub longitudinal_field_energy: f64,
    /// The `F` term and the bilinear coupling are both present or both absent.
    pub terms_paired: bool,
}

/// Canonical-basis rows of the diagonal annihilator `C(w_k)`.
pub fn mode_row(f: &ModeCoefficients, k: usize) -> BasisRow {
    let lat = f.lattice();
    let v = lat.cell_volume();
    let w = f.grid().weights();
    BasisRow {
        a: f.f1(k) * c(v),
        p: f.f2(k) * c(v),
        c: (0..f.len()).map(|l| f.f3_full(k, l) * c(v * w[l])).collect(),
        cd: (0..f.len()).map(|l| f.f4(k, l) * c(v * w[l])).collect(),
    }
}

/// Residual of `[C(w_k), H] = w_k C(w_k)` from the brute-force Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterReport {
    /// Global weighted residual relative to `w C` without the Kronecker part.
    pub global: f64,
    /// Same ratio node by node.
    pub per_node: Vec<f64>,
}

/// The master check: one commutator with `H` covers all four defining
/// equations of the mode kernels at once.
pub fn diagonal_form_check(h: &QuadraticHamiltonian, f: &ModeCoefficients) -> MasterReport {
    let lat = h.lattice();
    let v = lat.cell_volume();
    let vpt = lat.transverse_projector() * c(v);
    let n = lat.dim();
    let w = f.grid().weights();
    let om = f.grid().nodes();
    let (mut a, mut b) = (0.0, 0.0);
    let mut per_node = Vec::with_capacity(f.len());
    for k in 0..f.len() {
        let row = mode_row(f, k);
        let mut r = &h.apply_h(&h.apply_j(&row)) - &(&row * c(om[k]));
        r.a = &r.a * &vpt;
        r.p = &r.p * &vpt;
        let mut reduced = row;
        reduced.c[k] -= DMatrix::identity(n, n);
        let num = r.measure_norm_squared(v, w);
        let den = (&reduced * c(om[k])).measure_norm_squared(v, w);
        a += w[k] * num;
        b += w[k] * den;
        per_node.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }
    MasterReport {
        global: if b > 0.0 { (a / b).sqrt() } else { a.sqrt() },
        per_node,
    }
}

/// Heisenberg equations of the canonical variables, as relative residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergReport {
    /// `dA/dt = P_T . Pi`.
    pub vector_potential: f64,
    /// `dPi/dt = P_T . (D . A + F . W - F . A)`.
    pub momentum: f64,
    /// Equation of motion of the medium annihilators, worst node.
    pub medium: f64,
    /// `dP/dt` against its explicit form.
    pub polarization: f64,
    /// Longitudinal term in `dP/dt` that the quadrature constraint removes.
    pub polarization_constraint: f64,
    /// `d2A/dt2 = D . A + P_T . dP/dt`.
    pub wave: f64,
}

fn rel(a: &BasisRow, b: &BasisRow) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn heisenberg_residual(h: &QuadraticHamiltonian) -> Result<HeisenbergReport> {
    let lat = h.lattice();
    let v = lat.cell_volume();
    let cv = c(v);
    let pt = lat.transverse_projector();
    let pl = lat.longitudinal_projector();
    let d = lat.double_curl_operator();
    let fk = h.structure();
    let grid = h.grid();

    let ea = h.vector_potential_row();
    let ep = h.momentum_row();
    let pc = h.polarization_row();
    let wrow = h.medium_momentum_row()?;

    let a_dot = h.heisenberg(&ea);
    let vector_potential = rel(&a_dot, &ep.left(&(pt * cv)));

    let p_dot = h.heisenberg(&ep);
    let inner = &(&ea.left(&(d * cv)) + &wrow.left(&(fk * cv))) - &ea.left(&(fk * cv));
    let momentum = rel(&p_dot, &inner.left(&(pt * cv)));

    let mut medium: f64 = 0.0;
    for l in 0..grid.len() {
        let w = grid.nodes()[l];
        let t = &h.coupling[l];
        let tc = t.map(|e| e.conj());
        let lhs = h.heisenberg(&h.medium_row(l));
        let rhs = &(&(&h.medium_row(l) * Complex64::new(0.0, -w)) + &ea.left(&(&tc * Complex64::new(0.0, -w * v))))
            + &pc.left(&(&tc * pl * c(v * v)));
        medium = medium.max(rel(&lhs, &rhs));
    }

    let pol_dot = h.heisenberg(pc);
    let n = lat.dim();
    let mut expect = BasisRow::zeros(n, n, grid.len());
    expect.a = fk * (-cv);
    let mut constraint = DMatrix::<Complex64>::zeros(n, n);
    for l in 0..grid.len() {
        let (w, wt) = (grid.nodes()[l], grid.weights()[l]);
        let t = &h.coupling[l];
        expect.c[l] = t.transpose() * c(-v * wt * w);
        expect.cd[l] = t.adjoint() * c(-v * wt * w);
        constraint += (t.transpose() * t.map(|e| e.conj()) - t.adjoint() * t) * c(v * wt);
    }
    let polarization = rel(&pol_dot, &expect);
    let last = pc.left(&(constraint * pl * Complex64::new(0.0, -v * v)));
    let polarization_constraint = last.norm() / pol_dot.norm().max(f64::MIN_POSITIVE);

    let a_ddot = h.heisenberg(&a_dot);
    let wave = rel(&a_ddot, &(&ea.left(&(d * cv)) + &pol_dot.left(&(pt * cv))));

    Ok(HeisenbergReport {
        vector_potential,
        momentum,
        medium,
        polarization,
        polarization_constraint,
        wave,
    })
}

/// Largest canonical dimension accepted by the dense diagnostics.
pub const DENSE_LIMIT: usize = 1000;

/// Normal-mode spectrum of the Hamiltonian in real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticReport {
    /// Smallest eigenvalue of the real Hamiltonian matrix over the largest.
    pub min_relative_eigenvalue: f64,
    /// Relative imaginary part left after the change to real coordinates.
    pub imaginary_residue: f64,
    /// Positive normal-mode frequencies, ascending.
    pub frequencies: Vec<f64>,
    /// Modes whose frequency vanishes to roundoff.
    pub zero_modes: usize,
    pub positive: bool,
}

/// Normal modes from real coordinates: transverse `(a, p)` for the field and
/// `C = (q + i s)/sqrt 2` for the medium.
pub fn symplectic_spectrum(h: &QuadraticHamiltonian) -> Result<SymplecticReport> {
    if h.dim() > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "canonical dimension {} above the dense limit {DENSE_LIMIT}",
            h.dim()
        )));
    }
    let lat = h.lattice();
    let n = lat.dim();
    let k_n = h.grid().len();
    let v = lat.cell_volume();
    let proj = DMatrix::<f64>::from_fn(n, n, |i, j| lat.transverse_projector()[(i, j)].re * v);
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let nt = cols.len();
    let ny = 2 * nt + 2 * n * k_n;
    let mut basis = DMatrix::<Complex64>::zeros(h.dim(), ny);
    for (j, &col) in cols.iter().enumerate() {
        for i in 0..n {
            let q = c(eig.eigenvectors[(i, col)]);
            basis[(i, j)] = q;
            basis[(n + i, nt + j)] = q;
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut omega = DMatrix::<f64>::zeros(ny, ny);
    for j in 0..nt {
        omega[(j, nt + j)] = 1.0 / v;
        omega[(nt + j, j)] = -1.0 / v;
    }
    for l in 0..k_n {
        let s = 1.0 / (v * h.grid().weights()[l]);
        for i in 0..n {
            let q = 2 * nt + 2 * (l * n + i);
            let ci = 2 * n + l * n + i;
            let cdi = 2 * n + (k_n + l) * n + i;
            basis[(ci, q)] = c(r);
            basis[(cdi, q)] = c(r);
            basis[(ci, q + 1)] = Complex64::new(0.0, r);
            basis[(cdi, q + 1)] = Complex64::new(0.0, -r);
            omega[(q, q + 1)] = s;
            omega[(q + 1, q)] = -s;
        }
    }
    let hy = basis.transpose() * h.dense() * &basis;
    let scale = hy.norm().max(f64::MIN_POSITIVE);
    let imaginary_residue = hy.map(|e| e.im).norm() / scale;
    let hr = hy.map(|e| e.re);
    let hr = (&hr + hr.transpose()) * 0.5;
    let he = SymmetricEigen::new(hr);
    let max = he.eigenvalues.max();
    let min = he.eigenvalues.min();
    let min_relative_eigenvalue = min / max.abs().max(f64::MIN_POSITIVE);
    let sqrt_d = he.eigenvalues.map(|x| x.max(0.0).sqrt());
    let root = &he.eigenvectors * DMatrix::from_diagonal(&sqrt_d) * he.eigenvectors.transpose();
    let m = (&root * omega * &root).map(|x| Complex64::new(0.0, x));
    let eigen = SymmetricEigen::new(m).eigenvalues;
    let top = eigen.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-9 * top.max(f64::MIN_POSITIVE);
    let mut frequencies: Vec<f64> = eigen.iter().copied().filter(|&x| x > tol).collect();
    frequencies.sort_by(f64::total_cmp);
    let zero_modes = eigen.iter().filter(|x| x.abs() <= tol).count();
    Ok(SymplecticReport {
        min_relative_eigenvalue,
        imaginary_residue,
        positive: min_relative_eigenvalue >= -1e-10,
        frequencies,
        zero_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_model, structure_tensor, ModelId, ModelParams};
    use crate::diagonalize::mode_coefficients;
    use crate::green::mode_sweep;
    use crate::susceptibility::Susceptibility;

    fn model(id: ModelId, n: usize, k: usize, scale: f64) -> CouplingTensor {
        let lat = Arc::new(Lattice::new(n, 1.0).unwrap());
        let grid = FrequencyGrid::midpoint(k, 3.0, 2.0).unwrap();
        let p = ModelParams { scale, ..ModelParams::default() };
        build_model(id, lat, &grid, &p).unwrap()
    }

    fn hamiltonian(t: &CouplingTensor) -> QuadraticHamiltonian {
        let f = structure_tensor(t).map(|s| s.kernel().clone()).unwrap_or_else(|_| t.lattice().zeros());
        assemble_hamiltonian(t, &f).unwrap()
    }

    #[test]
    fn structured_products_match_dense() {
        let t = model(ModelId::GaussianNonlocal, 2, 3, 1.0);
        let h = hamiltonian(&t);
        let n = t.lattice().dim();
        let id = BasisRow::from_dense(&DMatrix::identity(h.dim(), h.dim()), n, 3);
        let hd = h.dense();
        assert!((h.apply_h(&id).to_dense() - &hd).norm() <= 1e-13 * hd.norm());
        let jd = h.dense_j();
        assert!((h.apply_j(&id).to_dense() - &jd).norm() <= 1e-13 * jd.norm());
        assert!((&hd - hd.transpose()).norm() <= 1e-13 * hd.norm());
    }

    #[test]
    fn single_site_entries() {
        let t = model(ModelId::LocalLorentz, 1, 1, 1.0);
        let h = hamiltonian(&t);
        let hd = h.dense();
        assert_eq!(hd.nrows(), 12);
        let (w, wt) = (t.grid().nodes()[0], t.grid().weights()[0]);
        let tk = t.kernel(0)[(0, 0)];
        // field momentum, medium oscillator and bilinear coupling
        assert!((hd[(3, 3)] - 1.0).norm() < 1e-15);
        assert!((hd[(6, 9)] - wt * w).norm() < 1e-15);
        assert!((hd[(6, 0)] - tk * wt * w).norm() < 1e-15);
        // single site: every mode is transverse, so no electrostatic term
        assert!((hd[(6, 6)]).norm() < 1e-15);
        let f = structure_tensor(&t).unwrap().kernel()[(0, 0)];
        assert!((hd[(0, 0)] - f).norm() < 1e-15);
    }

    #[test]
    fn decoupled_master_vanishes() {
        let t = model(ModelId::LocalLorentz, 1, 6, 0.0);
        let h = hamiltonian(&t);
        let chi = Susceptibility::new(&t);
        let f = mode_coefficients(&t, &mode_sweep(&chi).unwrap()).unwrap();
        assert_eq!(diagonal_form_check(&h, &f).global, 0.0);
        assert!(h.structure_report().terms_paired);
    }

    #[test]
    fn heisenberg_identities() {
        for (id, n) in [(ModelId::LocalLorentz, 1), (ModelId::GaussianNonlocal, 2)] {
            let t = model(id, n, 6, 1.0);
            let h = hamiltonian(&t);
            let r = heisenberg_residual(&h).unwrap();
            assert!(r.vector_potential < 1e-14, "{r:?}");
            assert!(r.momentum < 1e-12, "{r:?}");
            assert!(r.medium < 1e-12, "{r:?}");
            assert!(r.polarization < 1e-12, "{r:?}");
            assert!(r.polarization_constraint < 1e-12, "{r:?}");
            assert!(r.wave < 1e-12, "{r:?}");
            assert!(h.hermiticity_residual() < 1e-14);
        }
    }

    #[test]
    fn spectrum_positive() {
        let t = model(ModelId::UniaxialLocal, 1, 6, 1.0);
        let h = hamiltonian(&t);
        let s = symplectic_spectrum(&h).unwrap();
        assert!(s.positive, "{s:?}");
        assert!(s.imaginary_residue < 1e-14);
        assert_eq!(s.frequencies.len() + s.zero_modes / 2, (h.dim()) / 2);
    }
}
