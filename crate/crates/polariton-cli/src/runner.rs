//! Run a scenario once, or repeatedly under grid refinement, and write the
//! reports.

use std::path::Path;

use serde::Serialize;

use crate::config::{ScenarioConfig, Stage, Tolerances};
use crate::error::CliError;
use crate::pipeline::Pipeline;
use crate::report::{lookup, Artifact, CheckClass, StageReport, FORMAT_VERSION};

/// Reports of one run plus the tables and dumps it produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Serialize)]
struct StageSummary<'a> {
    stage: &'a str,
    pass: bool,
    failed: Vec<&'a str>,
    errors: &'a [String],
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    format_version: u32,
    model: String,
    pass: bool,
    stages: Vec<StageSummary<'a>>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.stages.iter().all(|s| s.pass)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage.as_str())
    }

    /// Every failed check as `stage/check_id`, plus stage-level errors.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.failed().into_iter().map(String::from));
            out.extend(s.errors.iter().map(|e| format!("{}: {e}", s.stage)));
        }
        out
    }

    pub fn write(&self, dir: &Path, model: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        for s in &self.stages {
            s.write(dir)?;
        }
        let summary = RunSummary {
            format_version: FORMAT_VERSION,
            model: model.to_string(),
            pass: self.pass(),
            stages: self
                .stages
                .iter()
                .map(|s| StageSummary {
                    stage: &s.stage,
                    pass: s.pass,
                    failed: s.failed(),
                    errors: &s.errors,
                })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        std::fs::write(dir.join("summary.json"), json)?;
        for a in &self.artifacts {
            a.write(dir)?;
        }
        Ok(())
    }
}

/// Run `stages` on `cfg`; numerical failures end up in the reports.
pub fn run(cfg: &ScenarioConfig, stages: &[Stage], tol: &Tolerances) -> Result<RunReport, CliError> {
    cfg.check_resources()?;
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let mut p = Pipeline::new(cfg, tol);
    let reports = stages.iter().map(|&s| p.run_stage(s)).collect();
    let artifacts = stages.iter().flat_map(|&s| p.artifacts(s)).collect();
    Ok(RunReport {
        stages: reports,
        artifacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelInfo {
    pub n_nodes: usize,
    pub eta: f64,
    pub delta_omega: f64,
}

/// Residual sequence of one check across refinement levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCheck {
    pub check_id: String,
    pub paper_eq: String,
    pub class: CheckClass,
    pub residuals: Vec<Option<f64>>,
    /// `r_i / r_(i+1)` between consecutive levels.
    pub ratios: Vec<Option<f64>>,
    /// Least-squares exponent `p` in `r ~ (delta omega)^p`.
    pub order: Option<f64>,
    /// `rate`: every ratio must reach `tolerance`. `bound`: every level must
    /// pass its own tolerance.
    pub criterion: &'static str,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub format_version: u32,
    pub model: String,
    pub lattice_n: usize,
    pub levels: Vec<LevelInfo>,
    pub pass: bool,
    pub checks: Vec<ConvergenceCheck>,
    pub errors: Vec<String>,
}

fn fitted_order(r: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = r
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.filter(|x| *x > 0.0).map(|x| (-(i as f64), x.log2())))
        .collect();
    if pts.len() < 2 || pts.len() != r.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Rerun the suite at `levels` resolutions, doubling the node count (and so
/// halving `delta omega` and `eta`) each time.
pub fn refine(cfg: &ScenarioConfig, levels: usize, tol: &Tolerances) -> Result<ConvergenceReport, CliError> {
    if levels < 2 {
        return Err(CliError::Usage(format!("refine needs at least 2 levels, got {levels}")));
    }
    let mut finest = cfg.clone();
    finest.nodes = cfg.nodes << (levels - 1);
    finest.check_resources()?;

    let mut runs = Vec::with_capacity(levels);
    let mut info = Vec::with_capacity(levels);
    for i in 0..levels {
        let mut c = cfg.clone();
        c.nodes = cfg.nodes << i;
        let r = run(&c, &cfg.stages, tol)?;
        info.push(LevelInfo {
            n_nodes: c.nodes,
            eta: c.eta_factor * c.omega_max / c.nodes as f64,
            delta_omega: c.omega_max / c.nodes as f64,
        });
        runs.push(r);
    }

    let mut errors = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        for s in &r.stages {
            errors.extend(s.errors.iter().map(|e| format!("level {i} {}: {e}", s.stage)));
        }
    }
    let mut checks = Vec::new();
    for s in &runs[0].stages {
        for c0 in &s.checks {
            let id = c0.check_id.as_str();
            let per_level: Vec<_> = runs
                .iter()
                .map(|r| r.stages.iter().flat_map(|s| &s.checks).find(|c| c.check_id == id))
                .collect();
            let residuals: Vec<Option<f64>> = per_level.iter().map(|c| c.and_then(|c| c.residual)).collect();
            let ratios: Vec<Option<f64>> = residuals
                .windows(2)
                .map(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                    _ => None,
                })
                .collect();
            let class = lookup(id).class;
            let (criterion, tolerance, pass) = if class == CheckClass::Regularized {
                // a step between two residuals already at roundoff has no rate to measure
                let floor = |x: Option<f64>| x.is_some_and(|x| x <= tol.exact);
                let pass = ratios
                    .iter()
                    .zip(residuals.windows(2))
                    .all(|(r, w)| r.is_some_and(|r| r >= tol.refinement) || (floor(w[0]) && floor(w[1])));
                ("rate", tol.refinement, pass)
            } else {
                let pass = per_level.iter().all(|c| c.is_some_and(|c| c.pass));
                ("bound", c0.tolerance, pass)
            };
            checks.push(ConvergenceCheck {
                check_id: id.to_string(),
                paper_eq: c0.paper_eq.clone(),
                class,
                order: fitted_order(&residuals),
                residuals,
                ratios,
                criterion,
                tolerance,
                pass,
            });
        }
    }
    Ok(ConvergenceReport {
        format_version: FORMAT_VERSION,
        model: cfg.model.to_string(),
        lattice_n: cfg.n_per_axis,
        levels: info,
        pass: errors.is_empty() && checks.iter().all(|c| c.pass),
        checks,
        errors,
    })
}

impl ConvergenceReport {
    pub fn check(&self, id: &str) -> Option<&ConvergenceCheck> {
        self.checks.iter().find(|c| c.check_id == id)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(dir.join("refine.json"), json)?;
        let mut w = csv::Writer::from_path(dir.join("refine.csv"))?;
        w.write_record(["check_id", "level", "n_nodes", "eta", "residual"])?;
        for c in &self.checks {
            for (i, (r, l)) in c.residuals.iter().zip(&self.levels).enumerate() {
                w.write_record([
                    c.check_id.clone(),
                    i.to_string(),
                    l.n_nodes.to_string(),
                    format!("{:e}", l.eta),
                    r.map(|x| format!("{x:e}")).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_of_halving_sequence() {
        let r = [Some(1.0), Some(0.5), Some(0.25)];
        assert!((fitted_order(&r).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(fitted_order(&[Some(1.0), None]), None);
    }

    #[test]
    fn single_level_rejected() {
        let cfg = ScenarioConfig::default();
        assert!(matches!(refine(&cfg, 1, &cfg.tolerances), Err(CliError::Usage(_))));
    }

    #[test]
    fn resource_guard() {
        let cfg = ScenarioConfig {
            max_dimension: 100,
            ..ScenarioConfig::default()
        };
        assert!(matches!(run(&cfg, &[Stage::Chi], &cfg.tolerances), Err(CliError::Resource { .. })));
        let cfg = ScenarioConfig {
            max_dimension: 200,
            nodes: 16,
            ..ScenarioConfig::default()
        };
        assert!(run(&cfg, &[Stage::Model], &cfg.tolerances).is_ok());
        assert!(matches!(refine(&cfg, 3, &cfg.tolerances), Err(CliError::Resource { .. })));
    }
}
