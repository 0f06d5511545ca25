use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemoflow::config::SimConfig;
use chemoflow::error::RunError;
use chemoflow::experiments::{
    certify_trajectory, certify_very_weak, run_epsilon_sweep, run_mms, run_regime_compare, run_single,
    snapshot_cutoff, RunOutput,
};
use chemoflow::io::{write_scalar_vtk, write_vector_vtk};
use chemoflow::manufactured::MmsMode;
use chemoflow::trajectory::TrajectoryRecord;

#[derive(Parser, Debug)]
#[command(name = "chemoflow", version, about = "Porous-medium chemotaxis-fluid simulator and weak-solution certifier")]
struct Cli {
    /// TOML configuration; the built-in m = 1.5 reference run when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the generated test functions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Proceed past CFL violations.
    #[arg(long, global = true)]
    force_cfl: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single gated run: ledger, snapshots and the very-weak certificate.
    Run,
    /// Repeat the run for decreasing epsilons.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.03,0.01")]
        epsilons: Vec<f64>,
    },
    /// Manufactured-solution refinement study.
    Mms {
        #[arg(long, value_delimiter = ',', default_value = "coupled,cell,signal,fluid")]
        modes: Vec<String>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Compare the weak (m = 1.8) and very-weak regimes on identical data.
    Compare,
    /// Re-evaluate the weak residuals on a stored trajectory.
    Certify {
        #[arg(long)]
        trajectory: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<MmsMode, RunError> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| chemoflow::error::ConfigError::Invalid(format!("unknown mms mode {s}")).into())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(chemoflow::error::FieldError::from)?;
    fs::write(dir.join(name), text).map_err(chemoflow::error::FieldError::from)?;
    Ok(())
}

fn write_run(dir: &Path, cfg: &SimConfig, out: &RunOutput) -> Result<(), RunError> {
    write(dir, "config.toml", &cfg.emit())?;
    write(dir, "ledger.csv", &out.ledger.samples_csv())?;
    write(dir, "windows.csv", &out.ledger.windows_csv())?;
    write(dir, "stats.csv", &out.stats.to_text())?;
    if cfg.output.snapshots {
        out.trajectory.save(&dir.join("trajectory"))?;
    }
    if cfg.output.vtk {
        let vtk = dir.join("vtk");
        fs::create_dir_all(&vtk).map_err(chemoflow::error::FieldError::from)?;
        for (k, s) in out.trajectory.snapshots.iter().enumerate() {
            write_scalar_vtk(&vtk.join(format!("n_{k:05}.vtk")), &s.n, "n", s.t)?;
            write_scalar_vtk(&vtk.join(format!("c_{k:05}.vtk")), &s.c, "c", s.t)?;
            write_vector_vtk(&vtk.join(format!("u_{k:05}.vtk")), &s.u, "u", s.t)?;
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::reference(),
    };
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.certify.seed = s;
    }
    cfg.numerics.force_cfl |= cli.force_cfl;
    let dir = cfg.output.dir.clone();
    match &cli.command {
        Command::Run => {
            let out = match run_single(&cfg) {
                Ok(o) => o,
                Err(e) => {
                    if let RunError::Invariant { dump, .. } = &e {
                        write(&dir, "violation.txt", &format!("{e}\n{dump}"))?;
                    }
                    return Err(e);
                }
            };
            write_run(&dir, &cfg, &out)?;
            let m = cfg.model.m;
            if m > 4.0 / 3.0 && m < 2.0 {
                let cf = &cfg.certify;
                let time = snapshot_cutoff(&out.trajectory, cf.support_fraction, cf.flat_fraction);
                let cert =
                    certify_very_weak(&out.trajectory, time, cf.seed, cf.test_functions, cfg.tolerances.tol_super)?;
                write(&dir, "certificate.txt", &cert.to_text())?;
                println!("run finished: {} steps, certificate {}", out.stats.steps, pass(cert.passed()));
                return Ok(cert.passed());
            }
            println!("run finished: {} steps", out.stats.steps);
            Ok(true)
        }
        Command::Sweep { epsilons } => {
            let rep = run_epsilon_sweep(&cfg, epsilons)?;
            write(&dir, "sweep.csv", &rep.to_text())?;
            print!("{}", rep.to_text());
            Ok(rep.passed)
        }
        Command::Mms { modes, levels } => {
            let modes: Vec<MmsMode> = modes.iter().map(|s| parse_mode(s)).collect::<Result<_, _>>()?;
            let rep = run_mms(&cfg, &modes, levels.unwrap_or(cfg.mms.levels))?;
            write(&dir, "mms.csv", &rep.to_text())?;
            print!("{}", rep.to_text());
            Ok(rep.passed())
        }
        Command::Compare => {
            let rep = run_regime_compare(&cfg)?;
            write(&dir, "regime.txt", &rep.to_text())?;
            print!("{}", rep.to_text());
            Ok(rep.passed())
        }
        Command::Certify { trajectory } => {
            let traj = TrajectoryRecord::load(trajectory)?;
            let cert = certify_trajectory(&traj, &cfg)?;
            write(&dir, "certificate.txt", &cert.to_text())?;
            print!("{}", cert.to_text());
            Ok(cert.passed())
        }
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
