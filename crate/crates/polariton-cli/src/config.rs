//! Scenario configuration: a sectioned key-value file, one per scenario.
//!
//! ```ini
//! [lattice]
//! n = 1
//! spacing = 1.0
//!
//! [grid]
//! nodes = 16
//! omega_max = 3.0
//! eta_factor = 2.0
//!
//! [model]
//! id = local_lorentz
//!
//! [stages]
//! run = model, chi, green, diag, fields, bath, oracle
//! ```
//!
//! Every key has a default, so a file only lists what differs. Unknown
//! sections or keys are rejected to catch typos.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;
use polariton::{ModelId, ModelParams};

use crate::error::CliError;

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Model,
    Chi,
    Green,
    Diag,
    Fields,
    Bath,
    Oracle,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Model,
        Stage::Chi,
        Stage::Green,
        Stage::Diag,
        Stage::Fields,
        Stage::Bath,
        Stage::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Chi => "chi",
            Stage::Green => "green",
            Stage::Diag => "diag",
            Stage::Fields => "fields",
            Stage::Bath => "bath",
            Stage::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown stage `{s}`")))
    }
}

/// Tolerances per class of check.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Identities that close exactly on the discrete grid.
    pub exact: f64,
    /// Symmetries of the Green function on random draws.
    pub green: f64,
    /// Vacuum closed forms and structural assertions.
    pub structural: f64,
    /// Bound on regularized residuals at a single resolution. These
    /// vanish only as the grid is refined; `refine` tests the rate.
    pub regularized: f64,
    /// Allowed factor between two routes to the same regularized identity.
    pub agreement: f64,
    /// Multiple of the Green-solve residual allowed for Maxwell and
    /// constitutive consistency.
    pub consistency: f64,
    /// Minimum residual decrease per refinement step.
    pub refinement: f64,
    /// Allowed relative deviation of the asymptotic decay ratio from 16.
    pub decay: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-10,
            green: 1e-9,
            structural: 1e-12,
            regularized: 4.0,
            agreement: 3.0,
            consistency: 10.0,
            refinement: 1.8,
            decay: 0.3,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, s: f64) -> Self {
        Tolerances {
            exact: self.exact * s,
            green: self.green * s,
            structural: self.structural * s,
            regularized: self.regularized * s,
            agreement: self.agreement * s,
            consistency: self.consistency * s,
            refinement: self.refinement / s,
            decay: self.decay * s,
        }
    }
}

/// Deliberate defects used as violator fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations {
    /// Amplitude of a non-symmetric constant added to `chi(z)`.
    pub chi_asymmetry: f64,
    /// Factor applied to the bath coefficient `h1`.
    pub h1_scale: f64,
}

impl Default for Violations {
    fn default() -> Self {
        Violations {
            chi_asymmetry: 0.0,
            h1_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_per_axis: usize,
    pub spacing: f64,
    pub nodes: usize,
    pub omega_max: f64,
    pub eta_factor: f64,
    pub model: ModelId,
    pub params: ModelParams,
    pub stages: Vec<Stage>,
    pub tolerances: Tolerances,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub draws: usize,
    /// Refuse runs whose canonical dimension would exceed this.
    pub max_dimension: usize,
    pub violations: Violations,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_per_axis: 1,
            spacing: 1.0,
            nodes: 16,
            omega_max: 3.0,
            eta_factor: 2.0,
            model: ModelId::LocalLorentz,
            params: ModelParams::default(),
            stages: Stage::ALL.to_vec(),
            tolerances: Tolerances::default(),
            output: None,
            seed: 0,
            draws: 20,
            max_dimension: 20_000,
            violations: Violations::default(),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("lattice", &["n", "spacing"]),
    ("grid", &["nodes", "omega_max", "eta_factor"]),
    (
        "model",
        &["id", "omega0", "gamma", "plasma", "scale", "ratio", "axis", "ell", "dispersion"],
    ),
    ("stages", &["run"]),
    (
        "tolerances",
        &["exact", "green", "structural", "regularized", "agreement", "consistency", "refinement", "decay"],
    ),
    ("output", &["dir"]),
    ("random", &["seed", "draws"]),
    ("limits", &["max_dimension"]),
    ("violations", &["chi_asymmetry", "h1_scale"]),
];

fn get<T: FromStr>(ini: &Ini, section: &str, key: &str, default: T) -> Result<T, CliError> {
    match ini.section(Some(section)).and_then(|s| s.get(key)) {
        None => Ok(default),
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("[{section}] {key}: cannot parse `{raw}`"))),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if props.iter().next().is_some() {
                    return Err(CliError::Config("keys outside any section".into()));
                }
                continue;
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| CliError::Config(format!("unknown section [{name}]")))?
                .1;
            for (key, _) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(CliError::Config(format!("unknown key `{key}` in [{name}]")));
                }
            }
        }

        let d = ScenarioConfig::default();
        let dp = &d.params;
        let dt = &d.tolerances;
        let model: String = get(&ini, "model", "id", d.model.as_str().to_string())?;
        let model = model.parse().map_err(|e: polariton::Error| CliError::Config(e.to_string()))?;
        let stages = match ini.section(Some("stages")).and_then(|s| s.get("run")) {
            None => d.stages.clone(),
            Some(list) => {
                let mut v = list
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Stage::from_str)
                    .collect::<Result<Vec<_>, _>>()?;
                v.sort();
                v.dedup();
                v
            }
        };
        let dir: String = get(&ini, "output", "dir", String::new())?;
        let cfg = ScenarioConfig {
            n_per_axis: get(&ini, "lattice", "n", d.n_per_axis)?,
            spacing: get(&ini, "lattice", "spacing", d.spacing)?,
            nodes: get(&ini, "grid", "nodes", d.nodes)?,
            omega_max: get(&ini, "grid", "omega_max", d.omega_max)?,
            eta_factor: get(&ini, "grid", "eta_factor", d.eta_factor)?,
            model,
            params: ModelParams {
                omega0: get(&ini, "model", "omega0", dp.omega0)?,
                gamma: get(&ini, "model", "gamma", dp.gamma)?,
                plasma: get(&ini, "model", "plasma", dp.plasma)?,
                scale: get(&ini, "model", "scale", dp.scale)?,
                ratio: get(&ini, "model", "ratio", dp.ratio)?,
                axis: get(&ini, "model", "axis", dp.axis)?,
                ell: get(&ini, "model", "ell", dp.ell)?,
                dispersion: get(&ini, "model", "dispersion", dp.dispersion)?,
            },
            stages,
            tolerances: Tolerances {
                exact: get(&ini, "tolerances", "exact", dt.exact)?,
                green: get(&ini, "tolerances", "green", dt.green)?,
                structural: get(&ini, "tolerances", "structural", dt.structural)?,
                regularized: get(&ini, "tolerances", "regularized", dt.regularized)?,
                agreement: get(&ini, "tolerances", "agreement", dt.agreement)?,
                consistency: get(&ini, "tolerances", "consistency", dt.consistency)?,
                refinement: get(&ini, "tolerances", "refinement", dt.refinement)?,
                decay: get(&ini, "tolerances", "decay", dt.decay)?,
            },
            output: if dir.is_empty() { None } else { Some(PathBuf::from(dir)) },
            seed: get(&ini, "random", "seed", d.seed)?,
            draws: get(&ini, "random", "draws", d.draws)?,
            max_dimension: get(&ini, "limits", "max_dimension", d.max_dimension)?,
            violations: Violations {
                chi_asymmetry: get(&ini, "violations", "chi_asymmetry", d.violations.chi_asymmetry)?,
                h1_scale: get(&ini, "violations", "h1_scale", d.violations.h1_scale)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n_per_axis == 0 {
            return bad("lattice.n must be positive".into());
        }
        if self.nodes == 0 {
            return bad("grid.nodes must be positive".into());
        }
        for (name, x) in [
            ("lattice.spacing", self.spacing),
            ("grid.omega_max", self.omega_max),
            ("grid.eta_factor", self.eta_factor),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        let t = &self.tolerances;
        for (name, x) in [
            ("exact", t.exact),
            ("green", t.green),
            ("structural", t.structural),
            ("regularized", t.regularized),
            ("agreement", t.agreement),
            ("consistency", t.consistency),
            ("refinement", t.refinement),
            ("decay", t.decay),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("tolerances.{name} must be positive, got {x}"));
            }
        }
        if self.stages.is_empty() {
            return bad("stages.run is empty".into());
        }
        if !(self.violations.h1_scale.is_finite() && self.violations.chi_asymmetry.is_finite()) {
            return bad("violations must be finite".into());
        }
        Ok(())
    }

    /// Serialize back to the sectioned format; `parse` inverts it exactly.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let p = &self.params;
        let t = &self.tolerances;
        ini.with_section(Some("lattice"))
            .set("n", self.n_per_axis.to_string())
            .set("spacing", fmt_f(self.spacing));
        ini.with_section(Some("grid"))
            .set("nodes", self.nodes.to_string())
            .set("omega_max", fmt_f(self.omega_max))
            .set("eta_factor", fmt_f(self.eta_factor));
        ini.with_section(Some("model"))
            .set("id", self.model.as_str())
            .set("omega0", fmt_f(p.omega0))
            .set("gamma", fmt_f(p.gamma))
            .set("plasma", fmt_f(p.plasma))
            .set("scale", fmt_f(p.scale))
            .set("ratio", fmt_f(p.ratio))
            .set("axis", p.axis.to_string())
            .set("ell", fmt_f(p.ell))
            .set("dispersion", fmt_f(p.dispersion));
        let stages: Vec<&str> = self.stages.iter().map(|s| s.as_str()).collect();
        ini.with_section(Some("stages")).set("run", stages.join(", "));
        ini.with_section(Some("tolerances"))
            .set("exact", fmt_f(t.exact))
            .set("green", fmt_f(t.green))
            .set("structural", fmt_f(t.structural))
            .set("regularized", fmt_f(t.regularized))
            .set("agreement", fmt_f(t.agreement))
            .set("consistency", fmt_f(t.consistency))
            .set("refinement", fmt_f(t.refinement))
            .set("decay", fmt_f(t.decay));
        if let Some(dir) = &self.output {
            ini.with_section(Some("output")).set("dir", dir.to_string_lossy());
        }
        ini.with_section(Some("random"))
            .set("seed", self.seed.to_string())
            .set("draws", self.draws.to_string());
        ini.with_section(Some("limits")).set("max_dimension", self.max_dimension.to_string());
        ini.with_section(Some("violations"))
            .set("chi_asymmetry", fmt_f(self.violations.chi_asymmetry))
            .set("h1_scale", fmt_f(self.violations.h1_scale));
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ini output is utf-8")
    }

    /// Size of the canonical basis, `2 (3M) + 2 (3M K)`.
    pub fn canonical_dimension(&self) -> usize {
        let n3 = 3 * self.n_per_axis.pow(3);
        2 * n3 + 2 * n3 * self.nodes
    }

    pub fn check_resources(&self) -> Result<(), CliError> {
        let dim = self.canonical_dimension();
        if dim > self.max_dimension {
            return Err(CliError::Resource {
                dimension: dim,
                cap: self.max_dimension,
            });
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let c = ScenarioConfig::parse("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = ScenarioConfig {
            model: ModelId::GaussianNonlocal,
            n_per_axis: 2,
            stages: vec![Stage::Chi, Stage::Green],
            output: Some("out/x".into()),
            ..ScenarioConfig::default()
        };
        c.params.ell = 0.1 + 0.2;
        c.violations.h1_scale = 1.1;
        let back = ScenarioConfig::parse(&c.to_ini_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(ScenarioConfig::parse("[grid]\nnodez = 4\n").is_err());
        assert!(ScenarioConfig::parse("[gird]\nnodes = 4\n").is_err());
        assert!(ScenarioConfig::parse("[grid]\nnodes = four\n").is_err());
        assert!(ScenarioConfig::parse("[tolerances]\nexact = -1\n").is_err());
        assert!(ScenarioConfig::parse("[stages]\nrun = chi, magic\n").is_err());
        assert!(ScenarioConfig::parse("[model]\nid = drude\n").is_err());
    }

    #[test]
    fn stage_list_sorted() {
        let c = ScenarioConfig::parse("[stages]\nrun = green, chi, green\n").unwrap();
        assert_eq!(c.stages, vec![Stage::Chi, Stage::Green]);
    }
}
