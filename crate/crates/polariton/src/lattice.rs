//! Periodic cubic lattice, spectral projectors and the kernel algebra.
//!
//! A two-point tensor kernel `K_ij(r, r')` is stored as a dense complex
//! matrix of dimension `3M`, row index `3 s + i` for site `s` and Cartesian
//! component `i`. Integrals over an intermediate position become sums
//! weighted by the cell volume `v`, so the composition of two kernels is
//! `v A B` and the delta kernel is `I / v`. With this single convention
//! every identity of the continuum theory closes exactly at finite `M`.
//!
//! Differential operators are realized spectrally with the exact discrete
//! wave vectors `k = 2 pi m / (n a)`, using signed indices
//! `m` in `(-n/2, n/2]`:
//!
//! * transverse projector `delta_ij - k_i k_j / k^2` (identity at `k = 0`
//!   when `k0_transverse` is set),
//! * double curl `-k^2 (delta_ij - k_i k_j / k^2)`,
//! * curl `i k x`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense two-point tensor kernel of dimension `3M`.
pub type TensorKernel = DMatrix<Complex64>;

const IM: Complex64 = Complex64::new(0.0, 1.0);

/// Periodic cubic lattice together with its spectral operators.
#[derive(Debug, Clone)]
pub struct Lattice {
    n_per_axis: usize,
    spacing: f64,
    k0_transverse: bool,
    sites: Vec<[f64; 3]>,
    wavevectors: Vec<[f64; 3]>,
    transverse: TensorKernel,
    longitudinal: TensorKernel,
    double_curl: TensorKernel,
    curl: TensorKernel,
}

impl Lattice {
    /// Lattice with the `k = 0` mode assigned to the transverse subspace.
    pub fn new(n_per_axis: usize, spacing: f64) -> Result<Self> {
        Self::with_k0(n_per_axis, spacing, true)
    }

    /// Lattice with an explicit choice for the `k = 0` polarization.
    ///
    /// With `k0_transverse = false` the three uniform modes are longitudinal.
    pub fn with_k0(n_per_axis: usize, spacing: f64, k0_transverse: bool) -> Result<Self> {
        if n_per_axis == 0 {
            return Err(Error::InvalidLattice("n_per_axis must be at least 1".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        let n = n_per_axis;
        let m = n * n * n;
        let mut sites = Vec::with_capacity(m);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    sites.push([i as f64 * spacing, j as f64 * spacing, k as f64 * spacing]);
                }
            }
        }
        let signed: Vec<f64> = (0..n)
            .map(|q| if q <= n / 2 { q as f64 } else { q as f64 - n as f64 })
            .collect();
        let scale = 2.0 * std::f64::consts::PI / (n as f64 * spacing);
        let mut wavevectors = Vec::with_capacity(m);
        for &a in &signed {
            for &b in &signed {
                for &c in &signed {
                    wavevectors.push([a * scale, b * scale, c * scale]);
                }
            }
        }

        let dim = 3 * m;
        let mut pt = DMatrix::<Complex64>::zeros(dim, dim);
        let mut dc = DMatrix::<Complex64>::zeros(dim, dim);
        let mut cu = DMatrix::<Complex64>::zeros(dim, dim);
        let norm = 1.0 / (m as f64).sqrt();
        for k in &wavevectors {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let mut pi = [[0.0; 3]; 3];
            for (a, row) in pi.iter_mut().enumerate() {
                for (b, entry) in row.iter_mut().enumerate() {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    *entry = if k2 == 0.0 {
                        if k0_transverse {
                            delta
                        } else {
                            0.0
                        }
                    } else {
                        delta - k[a] * k[b] / k2
                    };
                }
            }
            let cross = [
                [0.0, -k[2], k[1]],
                [k[2], 0.0, -k[0]],
                [-k[1], k[0], 0.0],
            ];
            let phase: Vec<Complex64> = sites
                .iter()
                .map(|r| Complex64::from_polar(norm, k[0] * r[0] + k[1] * r[1] + k[2] * r[2]))
                .collect();
            for (s, ps) in phase.iter().enumerate() {
                for (t, pt_) in phase.iter().enumerate() {
                    let e = ps * pt_.conj();
                    for a in 0..3 {
                        for b in 0..3 {
                            let (r, c) = (3 * s + a, 3 * t + b);
                            pt[(r, c)] += e * pi[a][b];
                            dc[(r, c)] += e * (-k2 * pi[a][b]);
                            cu[(r, c)] += e * IM * cross[a][b];
                        }
                    }
                }
            }
        }
        // The projector and the double curl are even in k, so their matrices
        // are real; only roundoff is discarded here.
        let v = spacing.powi(3);
        let real = |x: &TensorKernel| x.map(|e| Complex64::new(e.re / v, 0.0));
        let transverse = real(&pt);
        let double_curl = real(&dc);
        let curl = cu.map(|e| e / v);
        let identity = DMatrix::<Complex64>::identity(dim, dim) / Complex64::from(v);
        let longitudinal = &identity - &transverse;
        Ok(Lattice {
            n_per_axis,
            spacing,
            k0_transverse,
            sites,
            wavevectors,
            transverse,
            longitudinal,
            double_curl,
            curl,
        })
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn k0_transverse(&self) -> bool {
        self.k0_transverse
    }

    /// Number of sites `M`.
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Kernel dimension `3M`.
    pub fn dim(&self) -> usize {
        3 * self.sites.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Edge length of the periodic box.
    pub fn period(&self) -> f64 {
        self.n_per_axis as f64 * self.spacing
    }

    pub fn sites(&self) -> &[[f64; 3]] {
        &self.sites
    }

    /// Discrete wave vectors in the same order as the DFT basis.
    pub fn wavevectors(&self) -> &[[f64; 3]] {
        &self.wavevectors
    }

    /// Minimum-image separation vector `r_a - r_b`.
    pub fn separation(&self, a: usize, b: usize) -> [f64; 3] {
        let l = self.period();
        let mut d = [0.0; 3];
        for (i, di) in d.iter_mut().enumerate() {
            let x = self.sites[a][i] - self.sites[b][i];
            *di = x - (x / l).round() * l;
        }
        d
    }

    /// Delta kernel `I / v`.
    pub fn identity(&self) -> TensorKernel {
        DMatrix::identity(self.dim(), self.dim()) / Complex64::from(self.cell_volume())
    }

    pub fn zeros(&self) -> TensorKernel {
        DMatrix::zeros(self.dim(), self.dim())
    }

    /// Composition `integral dr'' A(r, r'') B(r'', r')`.
    pub fn compose(&self, a: &TensorKernel, b: &TensorKernel) -> TensorKernel {
        (a * b) * Complex64::from(self.cell_volume())
    }

    /// Kernel inverse with respect to composition: `compose(A, inv(A)) = I / v`.
    pub fn inverse(&self, a: &TensorKernel) -> Option<TensorKernel> {
        let v = self.cell_volume();
        a.clone()
            .try_inverse()
            .map(|inv| inv / Complex64::from(v * v))
    }

    /// Apply a kernel to a vector field sampled on the sites.
    pub fn apply(&self, a: &TensorKernel, field: &DVector<Complex64>) -> DVector<Complex64> {
        (a * field) * Complex64::from(self.cell_volume())
    }

    pub fn transverse_projector(&self) -> &TensorKernel {
        &self.transverse
    }

    pub fn longitudinal_projector(&self) -> &TensorKernel {
        &self.longitudinal
    }

    /// The double-curl operator itself, `-k^2` on the transverse block.
    pub fn double_curl_operator(&self) -> &TensorKernel {
        &self.double_curl
    }

    /// Curl operator `i k x`.
    ///
    /// For even `n` the Nyquist wave vector has no partner `-k`, so this
    /// kernel is not real there even though the double curl is.
    pub fn curl_operator(&self) -> &TensorKernel {
        &self.curl
    }

    /// Double curl acting on the primed (right) argument of `kernel`.
    pub fn double_curl(&self, kernel: &TensorKernel) -> TensorKernel {
        self.compose(kernel, &self.double_curl)
    }

    /// Double curl acting on the unprimed (left) argument of `kernel`.
    pub fn double_curl_left(&self, kernel: &TensorKernel) -> TensorKernel {
        self.compose(&self.double_curl, kernel)
    }

    /// Curl acting on the unprimed argument.
    pub fn curl(&self, kernel: &TensorKernel) -> TensorKernel {
        self.compose(&self.curl, kernel)
    }

    /// Longitudinal part of a vector field.
    pub fn longitudinal_project(&self, field: &DVector<Complex64>) -> DVector<Complex64> {
        self.apply(&self.longitudinal, field)
    }

    /// Transverse part of a vector field.
    pub fn transverse_project(&self, field: &DVector<Complex64>) -> DVector<Complex64> {
        self.apply(&self.transverse, field)
    }

    /// Normalized plane wave `exp(i k_q . r) u / sqrt(M)` as a field vector.
    pub fn plane_wave(&self, q: usize, polarization: [Complex64; 3]) -> DVector<Complex64> {
        let k = self.wavevectors[q];
        let norm = 1.0 / (self.n_sites() as f64).sqrt();
        let mut out = DVector::zeros(self.dim());
        for (s, r) in self.sites.iter().enumerate() {
            let ph = Complex64::from_polar(norm, k[0] * r[0] + k[1] * r[1] + k[2] * r[2]);
            for a in 0..3 {
                out[3 * s + a] = ph * polarization[a];
            }
        }
        out
    }
}

/// Transpose with respect to both positions and components (the tilde).
pub fn transpose(a: &TensorKernel) -> TensorKernel {
    a.transpose()
}

/// Conjugate transpose.
pub fn adjoint(a: &TensorKernel) -> TensorKernel {
    a.adjoint()
}

/// Frobenius norm.
pub fn norm(a: &TensorKernel) -> f64 {
    a.norm()
}

/// `||a - b|| / ||b||`, or the absolute norm when `b` vanishes.
pub fn relative_difference(a: &TensorKernel, b: &TensorKernel) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &TensorKernel) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    // the SVD iteration does not terminate on non-finite input
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::NAN;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Maximum entry modulus.
pub fn max_abs(a: &TensorKernel) -> f64 {
    a.iter().fold(0.0, |m, e| m.max(e.norm()))
}

/// Midpoint quadrature on `[0, omega_max]` with the cut regularization `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    eta: f64,
    omega_max: f64,
}

impl FrequencyGrid {
    /// `k` midpoint nodes `(j + 1/2) dw` with `eta = eta_factor * dw`.
    pub fn midpoint(k: usize, omega_max: f64, eta_factor: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidGrid("at least one node required".into()));
        }
        if !(omega_max.is_finite() && omega_max > 0.0) {
            return Err(Error::InvalidGrid(format!("omega_max must be positive, got {omega_max}")));
        }
        if !(eta_factor.is_finite() && eta_factor > 0.0) {
            return Err(Error::InvalidGrid(format!("eta factor must be positive, got {eta_factor}")));
        }
        let dw = omega_max / k as f64;
        let nodes = (0..k).map(|j| (j as f64 + 0.5) * dw).collect();
        Ok(FrequencyGrid {
            nodes,
            weights: vec![dw; k],
            eta: eta_factor * dw,
            omega_max,
        })
    }

    /// Arbitrary nodes and weights, validated.
    pub fn from_nodes(nodes: Vec<f64>, weights: Vec<f64>, eta: f64, omega_max: f64) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidGrid("nodes and weights must be non-empty and equal length".into()));
        }
        if nodes.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        if nodes.iter().any(|&w| !(w > 0.0 && w < omega_max)) {
            return Err(Error::InvalidGrid("nodes must lie in (0, omega_max)".into()));
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::InvalidGrid("weights must be positive".into()));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidGrid("eta must be positive".into()));
        }
        Ok(FrequencyGrid {
            nodes,
            weights,
            eta,
            omega_max,
        })
    }

    /// Twice the nodes on the same interval, `eta / dw` unchanged.
    pub fn refined(&self) -> Result<Self> {
        let factor = self.eta / self.spacing();
        Self::midpoint(2 * self.len(), self.omega_max, factor)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Largest node spacing (the nominal `dw`).
    pub fn spacing(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::from_nodes(self.nodes.clone(), self.weights.clone(), eta, self.omega_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_projectors() {
        let lat = Lattice::new(1, 1.0).unwrap();
        assert_eq!(lat.n_sites(), 1);
        assert!(relative_difference(lat.transverse_projector(), &lat.identity()) < 1e-15);
        assert!(lat.longitudinal_projector().norm() < 1e-15);
    }

    #[test]
    fn k0_longitudinal_flag() {
        let lat = Lattice::with_k0(1, 1.0, false).unwrap();
        assert!(lat.transverse_projector().norm() < 1e-15);
        assert!(relative_difference(lat.longitudinal_projector(), &lat.identity()) < 1e-15);
    }

    #[test]
    fn sizes_and_volume() {
        let lat = Lattice::new(2, 0.5).unwrap();
        assert_eq!(lat.n_sites(), 8);
        assert!((lat.cell_volume() - 0.125).abs() < 1e-15);
        let lat3 = Lattice::new(3, 1.0).unwrap();
        assert_eq!(lat3.n_sites(), 27);
        let step = 2.0 * std::f64::consts::PI / 3.0;
        for k in lat3.wavevectors() {
            for c in k {
                let m = (c / step).round();
                assert!((c - m * step).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&m));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lattice::new(0, 1.0).is_err());
        assert!(Lattice::new(2, 0.0).is_err());
        assert!(Lattice::new(2, -1.0).is_err());
    }

    #[test]
    fn reciprocal_vectors_are_periodic() {
        let lat = Lattice::new(3, 0.7).unwrap();
        let l = lat.period();
        for k in lat.wavevectors() {
            for c in k {
                let ph = Complex64::from_polar(1.0, c * l);
                assert!((ph - 1.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn projector_algebra() {
        let lat = Lattice::new(2, 0.8).unwrap();
        let pt = lat.transverse_projector();
        let pl = lat.longitudinal_projector();
        assert!(relative_difference(&lat.compose(pt, pt), pt) < 1e-13);
        assert!(relative_difference(&lat.compose(pl, pl), pl) < 1e-13);
        assert!(lat.compose(pt, pl).norm() < 1e-12 * pt.norm());
        assert!(relative_difference(&(pt + pl), &lat.identity()) < 1e-15);
        assert!(relative_difference(&pt.adjoint(), pt) < 1e-15);
    }

    #[test]
    fn constant_field_is_transverse() {
        let lat = Lattice::new(3, 1.0).unwrap();
        let f = DVector::from_fn(lat.dim(), |i, _| Complex64::new([0.3, -1.2, 0.5][i % 3], 0.0));
        assert!(lat.longitudinal_project(&f).norm() < 1e-12);
    }

    #[test]
    fn double_curl_plane_wave() {
        let lat = Lattice::new(3, 1.0).unwrap();
        let q = 5;
        let k = lat.wavevectors()[q];
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        // polarization orthogonal to k
        let u = if k[0].abs() + k[1].abs() > 0.0 {
            let n = (k[0] * k[0] + k[1] * k[1]).sqrt();
            [Complex64::from(-k[1] / n), Complex64::from(k[0] / n), Complex64::from(0.0)]
        } else {
            [Complex64::from(1.0), Complex64::from(0.0), Complex64::from(0.0)]
        };
        let e = lat.plane_wave(q, u);
        let out = lat.apply(lat.double_curl_operator(), &e);
        assert!((out - e * Complex64::from(-k2)).norm() < 1e-12);
    }

    #[test]
    fn curl_squared_is_minus_double_curl() {
        let lat = Lattice::new(2, 1.0).unwrap();
        let cc = lat.compose(lat.curl_operator(), lat.curl_operator());
        let d = lat.double_curl_operator();
        assert!((cc + d).norm() < 1e-12 * d.norm());
    }

    #[test]
    fn midpoint_grid() {
        let g = FrequencyGrid::midpoint(16, 3.0, 2.0).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 3.0).abs() < 1e-14);
        assert!(g.nodes().iter().all(|&w| w > 0.0 && w < 3.0));
        assert!((g.eta() - 2.0 * 3.0 / 16.0).abs() < 1e-15);
        let r = g.refined().unwrap();
        assert_eq!(r.len(), 32);
        assert!((r.eta() - g.eta() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::midpoint(0, 1.0, 2.0).is_err());
        assert!(FrequencyGrid::from_nodes(vec![0.5, 0.4], vec![0.1, 0.1], 0.1, 1.0).is_err());
        assert!(FrequencyGrid::from_nodes(vec![0.5], vec![0.1], 0.0, 1.0).is_err());
        assert!(FrequencyGrid::from_nodes(vec![1.5], vec![0.1], 0.1, 1.0).is_err());
    }
}
