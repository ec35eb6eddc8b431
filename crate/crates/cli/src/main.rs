use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mav_nmpc::audit::{gradient_audit, GradientAuditConfig};
use mav_nmpc::dynamics::{MavState, NU};
use mav_nmpc::export::{export_csv, export_estimator_csv, ExportOptions};
use mav_nmpc::ocp::ShootingProblem;
use mav_nmpc::panoc::PanocSolver;
use mav_nmpc::scenario::ScenarioConfig;
use mav_nmpc::sim::run_closed_loop;
use nalgebra::Vector3;

/// Matrix-free NMPC for MAV obstacle avoidance.
#[derive(Parser)]
#[command(name = "mav-nmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write trajectory and diagnostics CSVs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulated duration (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the estimator trace to this CSV.
        #[arg(long)]
        estimator: Option<PathBuf>,
        /// Write zeros in the wall-clock columns so repeated runs are byte-identical.
        #[arg(long)]
        deterministic: bool,
    },
    /// Compare the adjoint gradient against finite differences.
    Gradcheck {
        #[arg(long)]
        scenario: PathBuf,
        /// Random probes per horizon.
        #[arg(long, default_value_t = 100)]
        n_probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve a single NMPC problem from the given state.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated `px,py,pz,vx,vy,vz,roll,pitch`.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        /// Index of the reference to track.
        #[arg(long, default_value_t = 0)]
        reference: usize,
        /// Absolute time of the first prediction step (s).
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
}

fn parse_state(row: &str) -> anyhow::Result<MavState> {
    let values = row
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {f:?} in --state"))
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    if values.len() != 8 {
        bail!(
            "--state needs 8 values (px,py,pz,vx,vy,vz,roll,pitch), got {}",
            values.len()
        );
    }
    let state = MavState {
        p: Vector3::new(values[0], values[1], values[2]),
        v: Vector3::new(values[3], values[4], values[5]),
        roll: values[6],
        pitch: values[7],
    };
    if !state.is_finite() {
        bail!("--state must be finite");
    }
    Ok(state)
}

fn simulate(
    scenario: PathBuf,
    out: PathBuf,
    diag: PathBuf,
    seed: Option<u64>,
    duration: Option<f64>,
    estimator: Option<PathBuf>,
    deterministic: bool,
) -> anyhow::Result<()> {
    let mut cfg = ScenarioConfig::load(&scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(duration) = duration {
        cfg.duration = duration;
    }
    let log = run_closed_loop(&cfg)?;
    let opts = ExportOptions {
        include_timing: !deterministic,
    };
    export_csv(&log, &out, &diag, opts)?;
    if let Some(path) = estimator {
        export_estimator_csv(&log, &path)?;
    }
    println!("ticks={}", log.rows.len());
    println!("converged_fraction={:.4}", log.converged_fraction());
    println!("max_penetration={:.6}", log.max_penetration());
    println!("max_physical_penetration={:.6}", log.max_physical_penetration());
    println!("reference_switches={}", log.switch_ticks().len());
    if !deterministic {
        println!("mean_solve_time_ms={:.3}", log.mean_solve_time().as_secs_f64() * 1e3);
    }
    Ok(())
}

fn gradcheck(scenario: PathBuf, probes: usize, seed: u64) -> anyhow::Result<()> {
    let cfg = ScenarioConfig::load(&scenario)?;
    let audit = GradientAuditConfig {
        probes,
        seed,
        ..GradientAuditConfig::default()
    };
    let report = gradient_audit(&cfg.ocp_config(0)?, &audit)?;
    for h in &report.per_horizon {
        println!(
            "horizon={} probes={} max_relative_error={:.3e}",
            h.horizon, h.probes, h.max_relative_error
        );
    }
    println!("max_relative_error={:.3e}", report.max_relative_error());
    Ok(())
}

fn solve(scenario: PathBuf, state: &str, reference: usize, time: f64) -> anyhow::Result<()> {
    let cfg = ScenarioConfig::load(&scenario)?;
    if reference >= cfg.schedule.len() {
        bail!(
            "--reference {reference} out of range (schedule has {})",
            cfg.schedule.len()
        );
    }
    let x0 = parse_state(state)?;
    let ocp = cfg.ocp_config(reference)?;
    let problem = ShootingProblem::new(&ocp, &x0).starting_at(time);
    let mut solver = PanocSolver::new(cfg.solver.clone())?;
    let sol = solver.solve(&problem, &ocp.input_box(), &ocp.reference_sequence())?;
    let d = &sol.diagnostics;
    println!("status={}", d.status.as_str());
    println!("iterations={}", d.iterations);
    println!("residual_norm={:.3e}", d.residual_norm);
    println!("residual_inf={:.3e}", d.residual_inf);
    println!("cost={:.9e}", d.cost);
    println!("solve_time_ms={:.3}", d.solve_time.as_secs_f64() * 1e3);
    println!("k,Td,roll_d,pitch_d");
    for (k, block) in sol.u.chunks(NU).enumerate() {
        println!("{k},{},{},{}", block[0], block[1], block[2]);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            diag,
            seed,
            duration,
            estimator,
            deterministic,
        } => simulate(scenario, out, diag, seed, duration, estimator, deterministic),
        Command::Gradcheck {
            scenario,
            n_probes,
            seed,
        } => gradcheck(scenario, n_probes, seed),
        Command::Solve {
            scenario,
            state,
            reference,
            time,
        } => solve(scenario, &state, reference, time),
    }
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .downcast_ref::<mav_nmpc::Error>()
        .map_or("usage", mav_nmpc::Error::kind);
    let msg = format!("{err:#}").replace('\n', " ");
    format!("error: {kind}: {msg}")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("error: usage: {}", msg.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
