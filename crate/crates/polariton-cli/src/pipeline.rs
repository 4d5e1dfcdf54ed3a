//! Build the model once and run the requested stages in dependency order.
//!
//! Intermediate objects are computed on first use. A failure while building
//! one of them is recorded against every stage that needs it, and the
//! remaining stages still run.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polariton::bath::{
    bath_algebra, bath_coefficients, hamiltonian_equivalence, locality_residual, verify_bath_canonical,
    verify_bath_independence, BathCoefficients,
};
use polariton::diagonalize::{commutation_report, fano_residual, mode_coefficients, ModeCoefficients, Packet};
use polariton::fields::{
    consistency_report, equal_time_residual, field_form, form_difference, longitudinal_fraction, medium_algebra,
    noise_commutator_residual, vector_potential_inverted, FieldKind, SOLVE_FLOOR,
};
use polariton::green::{field_sweep, mode_sweep, reciprocity_residual, verify_adjoint};
use polariton::oracle::{
    assemble_hamiltonian, diagonal_form_check, heisenberg_residual, symplectic_spectrum, QuadraticHamiltonian,
    DENSE_LIMIT,
};
use polariton::susceptibility::chi_asymptotic;
use polariton::{
    build_model, check_constraints, solve_green, structure_tensor, CouplingTensor, FrequencyGrid, GreenKernel,
    KernelDump, Lattice, ModelId, StructureTensor, Susceptibility, TensorKernel,
};

use crate::config::{ScenarioConfig, Stage, Tolerances};
use crate::report::{Artifact, StageRecorder, StageReport};

type Shared<T> = Option<Result<Arc<T>, String>>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Lazily built objects shared between stages.
pub struct Pipeline {
    cfg: ScenarioConfig,
    tol: Tolerances,
    lattice: Result<Arc<Lattice>, String>,
    grid: Result<FrequencyGrid, String>,
    coupling: Shared<CouplingTensor>,
    structure: Shared<StructureTensor>,
    chi: Shared<Susceptibility>,
    mode_greens: Shared<Vec<GreenKernel>>,
    field_greens: Shared<Vec<GreenKernel>>,
    modes: Shared<ModeCoefficients>,
    hamiltonian: Shared<QuadraticHamiltonian>,
    bath: Shared<BathCoefficients>,
}

macro_rules! need {
    ($rec:expr, $e:expr) => {
        match $e {
            Ok(x) => x,
            Err(msg) => {
                $rec.error(msg);
                return $rec.finish();
            }
        }
    };
}

impl Pipeline {
    pub fn new(cfg: &ScenarioConfig, tol: &Tolerances) -> Self {
        Pipeline {
            cfg: cfg.clone(),
            tol: tol.clone(),
            lattice: Lattice::new(cfg.n_per_axis, cfg.spacing).map(Arc::new).map_err(err),
            grid: FrequencyGrid::midpoint(cfg.nodes, cfg.omega_max, cfg.eta_factor).map_err(err),
            coupling: None,
            structure: None,
            chi: None,
            mode_greens: None,
            field_greens: None,
            modes: None,
            hamiltonian: None,
            bath: None,
        }
    }

    fn coupling(&mut self) -> Result<Arc<CouplingTensor>, String> {
        if self.coupling.is_none() {
            let r = (|| {
                let lat = self.lattice.clone()?;
                let grid = self.grid.clone()?;
                build_model(self.cfg.model, lat, &grid, &self.cfg.params).map_err(err)
            })();
            self.coupling = Some(r.map(Arc::new));
        }
        self.coupling.clone().expect("set above")
    }

    fn structure(&mut self) -> Result<Arc<StructureTensor>, String> {
        if self.structure.is_none() {
            let r = self.coupling().and_then(|t| structure_tensor(&t).map_err(err));
            self.structure = Some(r.map(Arc::new));
        }
        self.structure.clone().expect("set above")
    }

    fn chi(&mut self) -> Result<Arc<Susceptibility>, String> {
        if self.chi.is_none() {
            let amp = self.cfg.violations.chi_asymmetry;
            let r = self.coupling().map(|t| {
                let chi = Susceptibility::new(&t);
                if amp != 0.0 {
                    let lat = t.lattice();
                    let mut d = lat.zeros();
                    let v = lat.cell_volume();
                    d[(0, 1)] = Complex64::from(amp / v);
                    d[(1, 0)] = Complex64::from(-amp / v);
                    chi.with_perturbation(d)
                } else {
                    chi
                }
            });
            self.chi = Some(r.map(Arc::new));
        }
        self.chi.clone().expect("set above")
    }

    fn mode_greens(&mut self) -> Result<Arc<Vec<GreenKernel>>, String> {
        if self.mode_greens.is_none() {
            let r = self.chi().and_then(|c| mode_sweep(&c).map_err(err));
            self.mode_greens = Some(r.map(Arc::new));
        }
        self.mode_greens.clone().expect("set above")
    }

    fn field_greens(&mut self) -> Result<Arc<Vec<GreenKernel>>, String> {
        if self.field_greens.is_none() {
            let r = self.chi().and_then(|c| field_sweep(&c).map_err(err));
            self.field_greens = Some(r.map(Arc::new));
        }
        self.field_greens.clone().expect("set above")
    }

    fn modes(&mut self) -> Result<Arc<ModeCoefficients>, String> {
        if self.modes.is_none() {
            let r = (|| {
                let t = self.coupling()?;
                let g = self.mode_greens()?;
                mode_coefficients(&t, &g).map_err(err)
            })();
            self.modes = Some(r.map(Arc::new));
        }
        self.modes.clone().expect("set above")
    }

    fn hamiltonian(&mut self) -> Result<Arc<QuadraticHamiltonian>, String> {
        if self.hamiltonian.is_none() {
            let r = (|| {
                let t = self.coupling()?;
                let f = self.structure()?;
                assemble_hamiltonian(&t, f.kernel()).map_err(err)
            })();
            self.hamiltonian = Some(r.map(Arc::new));
        }
        self.hamiltonian.clone().expect("set above")
    }

    fn bath(&mut self) -> Result<Arc<BathCoefficients>, String> {
        if self.bath.is_none() {
            let s = self.cfg.violations.h1_scale;
            let r = (|| {
                let t = self.coupling()?;
                let chi = self.chi()?;
                let b = bath_coefficients(&t, &chi).map_err(err)?;
                Ok(if s != 1.0 { b.with_h1_scale(s) } else { b })
            })();
            self.bath = Some(r.map(Arc::new));
        }
        self.bath.clone().expect("set above")
    }

    fn recorder(&self, stage: Stage) -> StageRecorder {
        StageRecorder::new(stage, &self.cfg, &self.tol)
    }

    pub fn run_stage(&mut self, stage: Stage) -> StageReport {
        match stage {
            Stage::Model => self.model_stage(),
            Stage::Chi => self.chi_stage(),
            Stage::Green => self.green_stage(),
            Stage::Diag => self.diag_stage(),
            Stage::Fields => self.fields_stage(),
            Stage::Bath => self.bath_stage(),
            Stage::Oracle => self.oracle_stage(),
        }
    }

    fn model_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Model);
        let t = need!(rec, self.coupling());
        let c = check_constraints(&t);
        rec.record("model.constraint_per_node", c.per_node);
        rec.record("model.zero_moment", c.residual_loss);
        rec.record("model.second_moment", c.residual_second);
        match self.structure() {
            Ok(f) => {
                rec.record("model.structure_real", f.imaginary_residue());
                rec.record_with_note(
                    "model.structure_positive",
                    (-f.min_eigenvalue() / f.max_eigenvalue()).max(0.0),
                    format!("eigenvalues of v F in [{:e}, {:e}]", f.min_eigenvalue(), f.max_eigenvalue()),
                );
            }
            Err(e) => {
                rec.fail("model.structure_positive", e.clone());
                rec.error(e);
            }
        }
        rec.finish()
    }

    /// Off-axis probe points for the exact identities of `chi`.
    fn probe_points(&self) -> Vec<Complex64> {
        let om = self.cfg.omega_max;
        let mut zs = Vec::new();
        for x in [0.1, 0.4, 0.8, 1.5] {
            for y in [0.05, 0.3, -0.2] {
                zs.push(Complex64::new(x * om, y * om));
            }
        }
        zs
    }

    fn chi_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Chi);
        let chi = need!(rec, self.chi());
        let zs = self.probe_points();
        let worst = |f: &dyn Fn(Complex64) -> polariton::Result<f64>| -> polariton::Result<f64> {
            zs.iter().try_fold(0.0f64, |m, &z| Ok(m.max(f(z)?)))
        };
        rec.record_result("chi.kramers_kronig", worst(&|z| chi.kramers_kronig_residual(z)));
        rec.record_result("chi.transpose_symmetry", worst(&|z| chi.transpose_symmetry_residual(z)));
        rec.record_result("chi.conjugation", worst(&|z| chi.conjugation_residual(z)));
        let grid = chi.grid().clone();
        let loss = grid
            .nodes()
            .iter()
            .try_fold(0.0f64, |m, &w| Ok::<_, polariton::Error>(m.max(-chi.loss_min_eigenvalue(w)?)));
        rec.record_result("chi.loss_positive", loss.map(|x| x.max(0.0)));
        match self.structure() {
            Ok(f) => {
                match chi.sum_rules(&f) {
                    Ok(s) => {
                        rec.record("chi.sum_rule_zeroth", s.zeroth);
                        rec.record("chi.sum_rule_first", s.first);
                        rec.record("chi.sum_rule_second", s.second);
                    }
                    Err(e) => rec.fail("chi.sum_rule_first", e.to_string()),
                }
                match asymptote_decay(&chi, &f, self.cfg.omega_max) {
                    Ok((dev, ratios)) => {
                        rec.record_with_note("chi.asymptote_decay", dev, format!("decay ratios {ratios:?}"))
                    }
                    Err(e) => rec.fail("chi.asymptote_decay", e.to_string()),
                }
            }
            Err(e) => {
                rec.fail("chi.sum_rule_first", e.clone());
                rec.fail("chi.asymptote_decay", e);
            }
        }
        rec.finish()
    }

    fn green_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Green);
        let chi = need!(rec, self.chi());
        let defining = self
            .mode_greens()
            .and_then(|m| self.field_greens().map(|f| (m, f)))
            .map(|(m, f)| m.iter().chain(f.iter()).map(|g| g.residual).fold(0.0, f64::max));
        match defining {
            Ok(r) => rec.record("green.defining", r),
            Err(e) => rec.fail("green.defining", e),
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let om = self.cfg.omega_max;
        let draws: Vec<Complex64> = (0..self.cfg.draws)
            .map(|_| {
                let x = rng.random_range(-1.5..1.5) * om;
                let y = rng.random_range(0.05..1.0) * om;
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Complex64::new(x, s * y)
            })
            .collect();
        let adj = draws.iter().try_fold(0.0f64, |m, &z| {
            let g = solve_green(&chi, z)?;
            Ok::<_, polariton::Error>(m.max(verify_adjoint(&g, &chi)?))
        });
        rec.record_result("green.adjoint", adj);
        let rec_res = draws
            .iter()
            .try_fold(0.0f64, |m, &z| Ok::<_, polariton::Error>(m.max(reciprocity_residual(&chi, z)?)));
        rec.record_result("green.reciprocity", rec_res);
        let conj = draws.iter().try_fold(0.0f64, |m, &z| {
            Ok::<_, polariton::Error>(m.max(polariton::green::conjugation_residual(&chi, z)?))
        });
        rec.record_result("green.conjugation", conj);

        match vacuum_closed_forms(chi.lattice_arc(), chi.grid()) {
            Ok((l, t)) => {
                rec.record("green.vacuum_longitudinal", l);
                rec.record("green.vacuum_transverse", t);
            }
            Err(e) => rec.fail("green.vacuum_transverse", e.to_string()),
        }
        rec.finish()
    }

    fn diag_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Diag);
        let t = need!(rec, self.coupling());
        let f = need!(rec, self.modes());
        let fs = need!(rec, self.structure());
        match fano_residual(&f, &t, fs.kernel()) {
            Ok(r) => {
                rec.record("diag.fano_ratio", r.ratio);
                rec.record("diag.fano_field", r.field);
                rec.record("diag.fano_medium", r.medium);
                rec.record("diag.fano_conjugate", r.conjugate);
            }
            Err(e) => rec.fail("diag.fano_field", e.to_string()),
        }
        let c = commutation_report(&f, &t, &Packet::standard());
        rec.record_with_note(
            "diag.commutation_smeared",
            c.smeared.deviation,
            format!(
                "pointwise: diagonal {:e}, off-diagonal {:e}",
                c.diagonal, c.off_diagonal
            ),
        );
        rec.record("diag.annihilator_smeared", c.smeared.annihilator);
        rec.record_with_note(
            "diag.annihilator_global",
            c.global_annihilator,
            format!("pointwise off-diagonal {:e}", c.off_diagonal_annihilator),
        );
        rec.finish()
    }

    fn fields_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Fields);
        let t = need!(rec, self.coupling());
        let chi = need!(rec, self.chi());
        rec.record_result("fields.noise_commutator", noise_commutator_residual(&t, &chi));
        match self.structure().and_then(|f| f.inverse(t.lattice()).map_err(err)) {
            Ok(finv) => match medium_algebra(&t, &finv) {
                Ok(m) => {
                    rec.record("fields.medium_wp", m.momentum_position);
                    rec.record("fields.medium_pp", m.position_position);
                    rec.record("fields.medium_ww", m.momentum_momentum);
                }
                Err(e) => rec.fail("fields.medium_wp", e.to_string()),
            },
            Err(e) => rec.fail("fields.medium_wp", e),
        }
        let greens = need!(rec, self.field_greens());
        match consistency_report(&t, &chi, &greens) {
            Ok(c) => {
                let scaled = |r: &[f64]| {
                    r.iter()
                        .zip(&c.solve)
                        .map(|(x, s)| x / s.max(SOLVE_FLOOR))
                        .fold(0.0, f64::max)
                };
                rec.record("fields.maxwell", scaled(&c.maxwell));
                rec.record("fields.constitutive", scaled(&c.constitutive));
            }
            Err(e) => rec.fail("fields.maxwell", e.to_string()),
        }
        let form = |k| field_form(k, &t, &chi, &greens);
        rec.record_result("fields.displacement_transverse", form(FieldKind::D).map(|d| longitudinal_fraction(&d)));
        let a = form(FieldKind::A);
        let pi = form(FieldKind::Pi);
        match (&a, &pi) {
            (Ok(a), Ok(pi)) => rec.record_result("fields.equal_time", equal_time_residual(pi, a)),
            (Err(e), _) | (_, Err(e)) => rec.fail("fields.equal_time", e.to_string()),
        }
        match (a, self.modes()) {
            (Ok(a), Ok(f)) => {
                let inv = vector_potential_inverted(&f, t.lattice_arc());
                rec.record("fields.vector_potential_routes", form_difference(&a, &inv));
            }
            (Err(e), _) => rec.fail("fields.vector_potential_routes", e.to_string()),
            (_, Err(e)) => rec.fail("fields.vector_potential_routes", e),
        }
        rec.finish()
    }

    fn bath_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Bath);
        let chi = need!(rec, self.chi());
        let b = match self.bath() {
            Ok(b) => b,
            Err(e) => {
                rec.fail("bath.canonical", e.clone());
                rec.error(e);
                return rec.finish();
            }
        };
        rec.record_result("bath.canonical", verify_bath_canonical(&b, &chi));
        rec.record_result("bath.linkage", b.linkage_residual(&chi));
        let t = need!(rec, self.coupling());
        let fs = need!(rec, self.structure());
        let finv = need!(rec, fs.inverse(t.lattice()).map_err(err));
        let h = need!(rec, self.hamiltonian());
        match verify_bath_independence(&b, &h, &finv) {
            Ok(r) => {
                rec.record("bath.route_agreement", r.route_agreement);
                rec.record("bath.independence_p", r.polarization);
                rec.record("bath.independence_w", r.momentum);
            }
            Err(e) => rec.fail("bath.independence_p", e.to_string()),
        }
        let two = [
            Packet::Gaussian { center: 0.35, width: 0.12 },
            Packet::Gaussian { center: 0.65, width: 0.12 },
        ];
        rec.record_result("bath.hamiltonian_equivalence", hamiltonian_equivalence(&b, &h, &finv, &two));
        let alg = bath_algebra(&b, &h, &Packet::standard());
        rec.record("bath.commutation_smeared", alg.deviation);
        rec.record("bath.annihilator_smeared", alg.annihilator);
        match self.cfg.model {
            ModelId::LocalLorentz | ModelId::UniaxialLocal => {
                rec.record("bath.locality", locality_residual(&b, fs.kernel()))
            }
            ModelId::GaussianNonlocal => rec.skip("bath.locality", "spatially dispersive model"),
        }
        rec.finish()
    }

    fn oracle_stage(&mut self) -> StageReport {
        let mut rec = self.recorder(Stage::Oracle);
        let h = need!(rec, self.hamiltonian());
        let s = h.structure_report();
        rec.record("oracle.hermiticity", s.hermiticity);
        rec.record("oracle.transverse_field", s.longitudinal_field_energy);
        rec.record("oracle.terms_paired", if s.terms_paired { 0.0 } else { 1.0 });
        match heisenberg_residual(&h) {
            Ok(r) => {
                rec.record("oracle.heisenberg_a", r.vector_potential);
                rec.record("oracle.heisenberg_pi", r.momentum);
                rec.record("oracle.heisenberg_medium", r.medium);
                rec.record("oracle.heisenberg_p", r.polarization);
                rec.record("oracle.heisenberg_p_constraint", r.polarization_constraint);
                rec.record("oracle.heisenberg_wave", r.wave);
            }
            Err(e) => rec.fail("oracle.heisenberg_wave", e.to_string()),
        }
        let t = need!(rec, self.coupling());
        let fs = need!(rec, self.structure());
        let f = need!(rec, self.modes());
        let master = diagonal_form_check(&h, &f).global;
        rec.record("oracle.master", master);
        match fano_residual(&f, &t, fs.kernel()) {
            Ok(r) => {
                let m = r.max();
                let factor = if master > 0.0 && m > 0.0 { (master / m).max(m / master) } else { f64::INFINITY };
                rec.record_with_note(
                    "oracle.fano_agreement",
                    factor,
                    format!("master {master:e}, largest defining-equation residual {m:e}"),
                );
            }
            Err(e) => rec.fail("oracle.fano_agreement", e.to_string()),
        }
        if h.dim() <= DENSE_LIMIT {
            match symplectic_spectrum(&h) {
                Ok(r) => rec.record_with_note(
                    "oracle.symplectic_positive",
                    (-r.min_relative_eigenvalue).max(0.0).max(r.imaginary_residue),
                    format!(
                        "{} normal modes, lowest frequency {:e}, {} zero modes",
                        r.frequencies.len(),
                        r.frequencies.first().copied().unwrap_or(0.0),
                        r.zero_modes
                    ),
                ),
                Err(e) => rec.fail("oracle.symplectic_positive", e.to_string()),
            }
        } else {
            rec.skip(
                "oracle.symplectic_positive",
                format!("canonical dimension {} above the dense limit {DENSE_LIMIT}", h.dim()),
            );
        }
        rec.finish()
    }

    /// Tables and kernel dumps belonging to `stage`. Objects that failed to
    /// build are already reported as errors and produce nothing here.
    pub fn artifacts(&mut self, stage: Stage) -> Vec<Artifact> {
        let r = match stage {
            Stage::Model => self.coupling().map(|t| vec![dump("coupling.kernels", &KernelDump::from_coupling(&t))]),
            Stage::Chi => self.chi_table().map(|t| vec![t]),
            Stage::Green => self.field_greens().and_then(|g| {
                let lat = self.lattice.clone()?;
                Ok(vec![green_table(&g), dump("green_field.kernels", &KernelDump::from_greens(&lat, &g))])
            }),
            Stage::Fields => self.field_evolution().map(|t| vec![t]),
            _ => Ok(Vec::new()),
        };
        r.unwrap_or_default()
    }

    /// Entries of `chi(w + i eta)` coupling site 0 to every site, on a
    /// frequency axis four times finer than the grid.
    fn chi_table(&mut self) -> Result<Artifact, String> {
        let chi = self.chi()?;
        let grid = chi.grid();
        let sites = chi.lattice().n_sites();
        let n = 4 * grid.len();
        let mut rows = Vec::with_capacity((n + 1) * sites * 9);
        for step in 0..=n {
            let z = Complex64::new(grid.omega_max() * step as f64 / n as f64, grid.eta());
            let x = chi.at(z).map_err(err)?;
            for b in 0..sites {
                for i in 0..3 {
                    for j in 0..3 {
                        let e = x[(i, 3 * b + j)];
                        rows.push(vec![
                            num(z.re),
                            num(z.im),
                            format!("0-{b}"),
                            i.to_string(),
                            j.to_string(),
                            num(e.re),
                            num(e.im),
                        ]);
                    }
                }
            }
        }
        Ok(Artifact::Csv {
            file: "chi_trace.csv",
            header: &["re_z", "im_z", "site_pair", "i", "j", "re_chi", "im_chi"],
            rows,
        })
    }

    /// `<E>` and `<B>` against time in a coherent state whose amplitude is a
    /// uniform x-polarized field with a Gaussian spectrum.
    fn field_evolution(&mut self) -> Result<Artifact, String> {
        let t = self.coupling()?;
        let chi = self.chi()?;
        let greens = self.field_greens()?;
        let grid = t.grid();
        let lat = t.lattice();
        let profile = Packet::Gaussian { center: 0.35, width: 0.12 }.values(grid);
        let gamma: Vec<DVector<Complex64>> = profile
            .iter()
            .map(|&a| DVector::from_fn(lat.dim(), |r, _| Complex64::from(if r % 3 == 0 { a } else { 0.0 })))
            .collect();
        let mut rows = Vec::new();
        for kind in [FieldKind::E, FieldKind::B] {
            let form = field_form(kind, &t, &chi, &greens).map_err(err)?;
            for step in 0..=32 {
                let time = 0.75 * step as f64;
                let x = form.evolve(time).coherent_expectation(&gamma).map_err(err)?;
                for (r, v) in x.iter().enumerate() {
                    rows.push(vec![num(time), kind.as_str().to_string(), (r / 3).to_string(), (r % 3).to_string(), num(v.re)]);
                }
            }
        }
        Ok(Artifact::Csv {
            file: "field_evolution.csv",
            header: &["t", "field", "site", "component", "value"],
            rows,
        })
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn dump(file: &'static str, d: &KernelDump) -> Artifact {
    let mut bytes = Vec::new();
    d.write_to(&mut bytes).expect("in-memory write");
    Artifact::Binary { file, bytes }
}

/// Frobenius norm of `G(w_k + i eta)` per node.
fn green_table(g: &[GreenKernel]) -> Artifact {
    Artifact::Csv {
        file: "green_sweep.csv",
        header: &["omega", "green_norm", "solve_residual"],
        rows: g.iter().map(|g| vec![num(g.z.re), num(g.kernel.norm()), num(g.residual)]).collect(),
    }
}

/// Decay of `chi(z) + F/z^2` under doubling of `|z|`, well above the band.
///
/// Returns the largest deviation of the ratio from 16, relative, and the
/// measured ratios.
pub fn asymptote_decay(chi: &Susceptibility, f: &StructureTensor, omega_max: f64) -> polariton::Result<(f64, Vec<f64>)> {
    let dir = Complex64::from_polar(1.0, PI / 3.0);
    let corrections = [8.0, 16.0, 32.0]
        .iter()
        .map(|&r| {
            let z = dir * (r * omega_max);
            Ok((chi.at(z)? - chi_asymptotic(f, z)).norm())
        })
        .collect::<polariton::Result<Vec<f64>>>()?;
    let ratios: Vec<f64> = corrections.windows(2).map(|w| w[0] / w[1]).collect();
    let dev = ratios.iter().map(|r| (r / 16.0 - 1.0).abs()).fold(0.0, f64::max);
    Ok((if dev.is_nan() { f64::INFINITY } else { dev }, ratios))
}

/// Vacuum Green function against its closed forms: `P_L / z^2` on the
/// longitudinal subspace and `1/(z^2 - k^2)` on transverse plane waves.
pub fn vacuum_closed_forms(lat: Arc<Lattice>, grid: &FrequencyGrid) -> polariton::Result<(f64, f64)> {
    let zeros: Vec<TensorKernel> = vec![lat.zeros(); grid.len()];
    let t = CouplingTensor::from_kernels(Arc::clone(&lat), grid.clone(), zeros)?;
    let chi = Susceptibility::new(&t);
    let om = grid.omega_max();
    let (mut long, mut trans) = (0.0f64, 0.0f64);
    for z in [Complex64::new(0.7 * om, 0.1 * om), Complex64::new(-0.3 * om, -0.4 * om)] {
        let g = solve_green(&chi, z)?;
        let pl = lat.longitudinal_projector();
        let gl = lat.compose(pl, &g.kernel);
        let expect = pl / (z * z);
        let scale = expect.norm();
        long = long.max(if scale > 0.0 { (gl - &expect).norm() / scale } else { gl.norm() });
        for (q, k) in lat.wavevectors().iter().enumerate() {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            for u in transverse_polarizations(*k, lat.k0_transverse()) {
                let e = lat.plane_wave(q, u);
                let expect = &e / (z * z - k2);
                let got = lat.apply(&g.kernel, &e);
                trans = trans.max((got - &expect).norm() / expect.norm());
            }
        }
    }
    Ok((long, trans))
}

fn transverse_polarizations(k: [f64; 3], k0_transverse: bool) -> Vec<[Complex64; 3]> {
    let c = |a: [f64; 3]| a.map(Complex64::from);
    let n = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    if n == 0.0 {
        return if k0_transverse {
            vec![c([1.0, 0.0, 0.0]), c([0.0, 1.0, 0.0]), c([0.0, 0.0, 1.0])]
        } else {
            Vec::new()
        };
    }
    let u = k.map(|x| x / n);
    let seed = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let e1 = cross(u, seed);
    let m = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = e1.map(|x| x / m);
    let e2 = cross(u, e1);
    vec![c(e1), c(e2)]
}
