//! CSV output of a closed-loop run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::sim::{LogRow, TrajectoryLog};
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "t,px,py,pz,vx,vy,vz,roll,pitch,Td,roll_d,pitch_d,uT,ref_idx,dist_axis";
pub const DIAGNOSTICS_HEADER: &str = "t,iters,solve_time_s,avg_iter_time_s,res_inf,status,C_hat,P";
pub const ESTIMATOR_HEADER: &str = "t,uT,a_m,accepted,C_hat,P";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    /// Write measured wall-clock times. When false the timing columns are
    /// zero so that repeated runs produce identical files.
    pub include_timing: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions { include_timing: true }
    }
}

/// Formats like C's `%.9g`.
pub fn format_g9(x: f64) -> String {
    format_g(x, 9)
}

fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn trajectory_line(row: &LogRow) -> String {
    let s = &row.state;
    let c = &row.command;
    let fields = [
        row.t,
        s.p.x,
        s.p.y,
        s.p.z,
        s.v.x,
        s.v.y,
        s.v.z,
        s.roll,
        s.pitch,
        c.thrust,
        c.roll_ref,
        c.pitch_ref,
        row.signal,
    ];
    let mut line: Vec<String> = fields.iter().map(|&v| format_g9(v)).collect();
    line.push(row.reference_index.to_string());
    line.push(format_g9(row.distance_to_axis));
    line.join(",")
}

fn diagnostics_line(row: &LogRow, opts: ExportOptions) -> String {
    let (solve, avg) = if opts.include_timing {
        (row.solve_time.as_secs_f64(), row.avg_iteration_time.as_secs_f64())
    } else {
        (0.0, 0.0)
    };
    [
        format_g9(row.t),
        row.iterations.to_string(),
        format_g9(solve),
        format_g9(avg),
        format_g9(row.residual_inf),
        row.status.as_str().to_string(),
        format_g9(row.thrust_constant_estimate),
        format_g9(row.estimate_variance),
    ]
    .join(",")
}

fn estimator_line(row: &LogRow) -> String {
    [
        format_g9(row.t),
        format_g9(row.signal),
        format_g9(row.accel_measurement),
        u8::from(row.accepted).to_string(),
        format_g9(row.thrust_constant_estimate),
        format_g9(row.estimate_variance),
    ]
    .join(",")
}

pub fn write_trajectory<W: Write>(log: &TrajectoryLog, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for row in &log.rows {
        writeln!(out, "{}", trajectory_line(row))?;
    }
    Ok(())
}

pub fn write_diagnostics<W: Write>(log: &TrajectoryLog, out: &mut W, opts: ExportOptions) -> std::io::Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for row in &log.rows {
        writeln!(out, "{}", diagnostics_line(row, opts))?;
    }
    Ok(())
}

pub fn write_estimator_trace<W: Write>(log: &TrajectoryLog, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{ESTIMATOR_HEADER}")?;
    for row in &log.rows {
        writeln!(out, "{}", estimator_line(row))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Writes the trajectory and diagnostics CSVs.
pub fn export_csv(log: &TrajectoryLog, trajectory: &Path, diagnostics: &Path, opts: ExportOptions) -> Result<()> {
    write_file(trajectory, |w| write_trajectory(log, w))?;
    write_file(diagnostics, |w| write_diagnostics(log, w, opts))
}

pub fn export_estimator_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_file(path, |w| write_estimator_trace(log, w))
}
