//! Check catalogue and the JSON report format.

use std::path::Path;

use serde::Serialize;

use crate::config::{ScenarioConfig, Stage, Tolerances};
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// How a residual is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckClass {
    /// Closes exactly on the grid.
    Exact,
    /// Green-function symmetry on random draws.
    Green,
    /// Closed form or structural assertion at roundoff.
    Structural,
    /// Vanishes only as the grid is refined.
    Regularized,
    /// Factor between two routes to the same quantity.
    Agreement,
    /// Multiple of the Green-solve residual.
    Consistency,
    /// Relative deviation of a measured decay ratio.
    Decay,
    /// Regularized quantity bounded at each resolution but without an
    /// asserted convergence rate.
    Diagnostic,
}

impl CheckClass {
    pub fn tolerance(self, t: &Tolerances) -> f64 {
        match self {
            CheckClass::Exact => t.exact,
            CheckClass::Green => t.green,
            CheckClass::Structural => t.structural,
            CheckClass::Regularized | CheckClass::Diagnostic => t.regularized,
            CheckClass::Agreement => t.agreement,
            CheckClass::Consistency => t.consistency,
            CheckClass::Decay => t.decay,
        }
    }
}

/// One catalogue entry. The label points to the identity in the reference
/// derivation; it is carried in the reports and nowhere else.
#[derive(Debug, Clone, Copy)]
pub struct CheckEntry {
    pub id: &'static str,
    pub label: &'static str,
    pub stage: Stage,
    pub class: CheckClass,
}

macro_rules! catalogue {
    ($($id:literal, $label:literal, $stage:ident, $class:ident;)*) => {
        pub const CATALOGUE: &[CheckEntry] = &[
            $(CheckEntry { id: $id, label: $label, stage: Stage::$stage, class: CheckClass::$class },)*
        ];
    };
}

catalogue! {
    "model.constraint_per_node", "(A.12)", Model, Exact;
    "model.zero_moment", "(2.8)", Model, Exact;
    "model.second_moment", "(2.10)", Model, Exact;
    "model.structure_real", "(2.23)", Model, Structural;
    "model.structure_positive", "(2.23)", Model, Structural;
    "chi.kramers_kronig", "(4.5)", Chi, Exact;
    "chi.sum_rule_zeroth", "(4.6)", Chi, Exact;
    "chi.sum_rule_first", "(4.7)", Chi, Exact;
    "chi.sum_rule_second", "(4.8)", Chi, Exact;
    "chi.transpose_symmetry", "(4.1)", Chi, Structural;
    "chi.conjugation", "(4.2)", Chi, Structural;
    "chi.loss_positive", "(4.4)", Chi, Structural;
    "chi.asymptote_decay", "(4.9)", Chi, Decay;
    "green.defining", "(3.11)", Green, Exact;
    "green.adjoint", "(4.11)", Green, Green;
    "green.reciprocity", "(4.12)", Green, Green;
    "green.conjugation", "(4.10)", Green, Green;
    "green.vacuum_longitudinal", "(3.11)", Green, Structural;
    "green.vacuum_transverse", "(3.11)", Green, Structural;
    "diag.fano_ratio", "(3.3)", Diag, Exact;
    "diag.fano_field", "(3.4)", Diag, Regularized;
    "diag.fano_medium", "(3.5)", Diag, Regularized;
    "diag.fano_conjugate", "(3.6)", Diag, Regularized;
    "diag.commutation_smeared", "(C.10)", Diag, Regularized;
    "diag.annihilator_smeared", "(C.13)", Diag, Regularized;
    "diag.annihilator_global", "(C.13)", Diag, Regularized;
    "fields.noise_commutator", "(4.25)", Fields, Exact;
    "fields.medium_wp", "(2.9)", Fields, Exact;
    "fields.medium_pp", "(2.9)", Fields, Exact;
    "fields.medium_ww", "(2.9)", Fields, Exact;
    "fields.maxwell", "(4.27)", Fields, Consistency;
    "fields.constitutive", "(4.23)", Fields, Consistency;
    "fields.displacement_transverse", "(4.29)", Fields, Structural;
    "fields.equal_time", "(4.17)", Fields, Diagnostic;
    "fields.vector_potential_routes", "(4.17)", Fields, Exact;
    "bath.canonical", "(5.7)", Bath, Exact;
    "bath.linkage", "(5.6)", Bath, Exact;
    "bath.route_agreement", "(5.2)", Bath, Exact;
    "bath.independence_p", "(5.2)", Bath, Regularized;
    "bath.independence_w", "(5.3)", Bath, Regularized;
    "bath.hamiltonian_equivalence", "(5.11)", Bath, Regularized;
    "bath.commutation_smeared", "(5.7)", Bath, Diagnostic;
    "bath.annihilator_smeared", "(5.6)", Bath, Diagnostic;
    "bath.locality", "(5.11)", Bath, Structural;
    "oracle.hermiticity", "(2.21)", Oracle, Structural;
    "oracle.transverse_field", "(2.21)", Oracle, Structural;
    "oracle.terms_paired", "(2.21)", Oracle, Structural;
    "oracle.heisenberg_a", "(2.13)", Oracle, Exact;
    "oracle.heisenberg_pi", "(2.14)", Oracle, Exact;
    "oracle.heisenberg_medium", "(2.15)", Oracle, Exact;
    "oracle.heisenberg_p", "(2.16)", Oracle, Exact;
    "oracle.heisenberg_p_constraint", "(2.16)", Oracle, Structural;
    "oracle.heisenberg_wave", "(2.17)", Oracle, Exact;
    "oracle.master", "(3.1)", Oracle, Regularized;
    "oracle.fano_agreement", "(3.1)", Oracle, Agreement;
    "oracle.symplectic_positive", "(2.21)", Oracle, Structural;
}

pub fn lookup(id: &str) -> &'static CheckEntry {
    CATALOGUE
        .iter()
        .find(|c| c.id == id)
        .unwrap_or_else(|| panic!("check `{id}` missing from the catalogue"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeInfo {
    pub n_per_axis: usize,
    pub spacing: f64,
    pub sites: usize,
}

/// Result of one check and the grid it ran on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check_id: String,
    pub paper_eq: String,
    pub class: CheckClass,
    /// `None` when the check could not be evaluated.
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub eta: f64,
    pub delta_omega: f64,
    pub n_nodes: usize,
    pub lattice: LatticeInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub format_version: u32,
    pub stage: String,
    pub model: String,
    pub eta: f64,
    pub delta_omega: f64,
    pub n_nodes: usize,
    pub lattice: LatticeInfo,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub errors: Vec<String>,
}

/// Collects check results for one stage.
#[derive(Debug)]
pub struct StageRecorder {
    report: StageReport,
    tolerances: Tolerances,
}

impl StageRecorder {
    pub fn new(stage: Stage, cfg: &ScenarioConfig, tolerances: &Tolerances) -> Self {
        let spacing = cfg.omega_max / cfg.nodes as f64;
        StageRecorder {
            report: StageReport {
                format_version: FORMAT_VERSION,
                stage: stage.to_string(),
                model: cfg.model.to_string(),
                eta: cfg.eta_factor * spacing,
                delta_omega: spacing,
                n_nodes: cfg.nodes,
                lattice: LatticeInfo {
                    n_per_axis: cfg.n_per_axis,
                    spacing: cfg.spacing,
                    sites: cfg.n_per_axis.pow(3),
                },
                pass: true,
                checks: Vec::new(),
                errors: Vec::new(),
            },
            tolerances: tolerances.clone(),
        }
    }

    fn push(&mut self, id: &str, residual: Option<f64>, note: Option<String>) {
        let s = lookup(id);
        let tolerance = s.class.tolerance(&self.tolerances);
        let pass = residual.is_some_and(|r| r.is_finite() && r <= tolerance);
        let r = &self.report;
        let check = CheckResult {
            check_id: s.id.to_string(),
            paper_eq: s.label.to_string(),
            class: s.class,
            residual: residual.filter(|r| r.is_finite()),
            tolerance,
            pass,
            eta: r.eta,
            delta_omega: r.delta_omega,
            n_nodes: r.n_nodes,
            lattice: r.lattice.clone(),
            note,
        };
        self.report.pass &= pass;
        self.report.checks.push(check);
    }

    pub fn record(&mut self, id: &str, residual: f64) {
        self.push(id, Some(residual), None);
    }

    pub fn record_with_note(&mut self, id: &str, residual: f64, note: impl Into<String>) {
        self.push(id, Some(residual), Some(note.into()));
    }

    /// Record the outcome of a fallible evaluation.
    pub fn record_result(&mut self, id: &str, r: Result<f64, polariton::Error>) {
        match r {
            Ok(x) => self.record(id, x),
            Err(e) => self.push(id, None, Some(e.to_string())),
        }
    }

    pub fn fail(&mut self, id: &str, message: impl Into<String>) {
        self.push(id, None, Some(message.into()));
    }

    /// A check that does not apply to this configuration; it counts as passed.
    pub fn skip(&mut self, id: &str, reason: impl Into<String>) {
        let s = lookup(id);
        let tolerance = s.class.tolerance(&self.tolerances);
        let r = &self.report;
        self.report.checks.push(CheckResult {
            check_id: s.id.to_string(),
            paper_eq: s.label.to_string(),
            class: s.class,
            residual: None,
            tolerance,
            pass: true,
            eta: r.eta,
            delta_omega: r.delta_omega,
            n_nodes: r.n_nodes,
            lattice: r.lattice.clone(),
            note: Some(format!("skipped: {}", reason.into())),
        });
    }

    /// A failure that prevented the stage from running further.
    pub fn error(&mut self, message: impl Into<String>) {
        self.report.errors.push(message.into());
        self.report.pass = false;
    }

    pub fn finish(self) -> StageReport {
        self.report
    }
}

impl StageReport {
    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check_id == id)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.check_id.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", self.stage)), self.to_json()?)?;
        Ok(())
    }
}

/// A plottable table or a binary kernel dump written next to the reports.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Csv {
        file: &'static str,
        header: &'static [&'static str],
        rows: Vec<Vec<String>>,
    },
    Binary {
        file: &'static str,
        bytes: Vec<u8>,
    },
}

impl Artifact {
    pub fn file(&self) -> &'static str {
        match self {
            Artifact::Csv { file, .. } | Artifact::Binary { file, .. } => file,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(self.file());
        match self {
            Artifact::Csv { header, rows, .. } => {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(*header)?;
                for r in rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            Artifact::Binary { bytes, .. } => std::fs::write(path, bytes)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalogue_ids_unique() {
        let ids: HashSet<_> = CATALOGUE.iter().map(|c| c.id).collect();
        assert_eq!(ids.len(), CATALOGUE.len());
        for c in CATALOGUE {
            assert!(c.id.starts_with(c.stage.as_str()));
        }
    }

    #[test]
    fn missing_residual_fails() {
        let cfg = ScenarioConfig::default();
        let mut r = StageRecorder::new(Stage::Chi, &cfg, &cfg.tolerances);
        r.record("chi.kramers_kronig", 1e-14);
        r.record("chi.conjugation", f64::NAN);
        let rep = r.finish();
        assert!(!rep.pass);
        assert_eq!(rep.failed(), vec!["chi.conjugation"]);
        assert!(rep.to_json().unwrap().contains("\"paper_eq\": \"(4.5)\""));
    }
}
