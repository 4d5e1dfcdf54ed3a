use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polariton_cli::runner::{refine, run};
use polariton_cli::{CliError, ScenarioConfig, Stage};

#[derive(Parser)]
#[command(name = "polariton", version, about = "Build, solve and verify damped-polariton scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the random draws; overrides the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiply every tolerance by this factor.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Coupling constraints and the structure tensor.
    Model(Common),
    /// Susceptibility identities.
    Chi(Common),
    /// Green-function solve and symmetries.
    Green(Common),
    /// Mode kernels and their commutators.
    Diag(Common),
    /// Field and noise operators.
    Fields(Common),
    /// Bath operators.
    Bath(Common),
    /// Brute-force Hamiltonian checks.
    Oracle(Common),
    /// Every stage listed in the config.
    VerifyAll(Common),
    /// Convergence study under grid refinement.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Number of resolutions, at least 2.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn load(c: &Common) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", c.config.display())))?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if !(c.tol_scale.is_finite() && c.tol_scale > 0.0) {
        return Err(CliError::Usage(format!("--tol-scale must be positive, got {}", c.tol_scale)));
    }
    cfg.tolerances = cfg.tolerances.scaled(c.tol_scale);
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("polariton-out"));
    Ok((cfg, out))
}

fn execute(cmd: Command) -> Result<bool, CliError> {
    let (common, stage) = match &cmd {
        Command::Model(c) => (c, Some(Stage::Model)),
        Command::Chi(c) => (c, Some(Stage::Chi)),
        Command::Green(c) => (c, Some(Stage::Green)),
        Command::Diag(c) => (c, Some(Stage::Diag)),
        Command::Fields(c) => (c, Some(Stage::Fields)),
        Command::Bath(c) => (c, Some(Stage::Bath)),
        Command::Oracle(c) => (c, Some(Stage::Oracle)),
        Command::VerifyAll(c) => (c, None),
        Command::Refine { common, .. } => (common, None),
    };
    let (cfg, out) = load(common)?;
    if let Command::Refine { levels, .. } = cmd {
        let rep = refine(&cfg, levels, &cfg.tolerances)?;
        rep.write(&out)?;
        for c in &rep.checks {
            let seq: Vec<String> = c
                .residuals
                .iter()
                .map(|r| r.map_or("-".into(), |x| format!("{x:.3e}")))
                .collect();
            println!(
                "{} {:<34} {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.check_id,
                seq.join(" -> ")
            );
        }
        for e in &rep.errors {
            println!("ERROR {e}");
        }
        return Ok(rep.pass);
    }
    let stages = stage.map_or_else(|| cfg.stages.clone(), |s| vec![s]);
    let rep = run(&cfg, &stages, &cfg.tolerances)?;
    rep.write(&out, cfg.model.as_str())?;
    for s in &rep.stages {
        println!("{} {}", if s.pass { "PASS" } else { "FAIL" }, s.stage);
        for c in s.checks.iter().filter(|c| !c.pass) {
            let r = c.residual.map_or("n/a".into(), |x| format!("{x:.3e}"));
            let note = c.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
            println!("  failed {} residual {r} tolerance {:.1e}{note}", c.check_id, c.tolerance);
        }
        for e in &s.errors {
            println!("  error {e}");
        }
    }
    Ok(rep.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("polariton: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
