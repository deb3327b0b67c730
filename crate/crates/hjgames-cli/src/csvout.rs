//! CSV export with full round-trip float formatting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hjgames_core::{Real, RealTrajectory, StateSlice};

use crate::CliError;

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt_f64(v: Real) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", path.display())))
}

/// Writes a level slice as `x1,...,xn,value` rows.
pub fn write_slice(path: &Path, slice: &StateSlice<Real>) -> Result<(), CliError> {
    let mut w = open(path)?;
    let io = |e: std::io::Error| CliError::config(format!("write failed: {e}"));
    let n = slice.axes().len();
    let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    header.push("value".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;

    let counts: Vec<usize> = slice.axes().iter().map(|a| a.count()).collect();
    let mut coords = vec![0.0; n];
    for (node, v) in slice.values().iter().enumerate() {
        let mut rem = node;
        for k in (0..n).rev() {
            coords[k] = slice.axes()[k].coord(rem % counts[k]);
            rem /= counts[k];
        }
        let mut row: Vec<String> = coords.iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*v));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a trajectory as `s,x1..xn,z,a1..,b1..,c,L` rows.
pub fn write_trajectory(path: &Path, traj: &RealTrajectory) -> Result<(), CliError> {
    let mut w = open(path)?;
    let io = |e: std::io::Error| CliError::config(format!("write failed: {e}"));
    let n = traj.states.first().map_or(0, |s| s.len());
    let ma = traj.controls_a.first().map_or(0, |a| a.len());
    let mb = traj.controls_b.first().map_or(0, |b| b.len());
    let mut header = vec!["s".to_string()];
    header.extend((1..=n).map(|k| format!("x{k}")));
    header.push("z".into());
    header.extend((1..=ma).map(|k| format!("a{k}")));
    header.extend((1..=mb).map(|k| format!("b{k}")));
    header.push("c".into());
    header.push("L".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;

    for i in 0..traj.times.len() {
        let mut row = vec![fmt_f64(traj.times[i])];
        row.extend(traj.states[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(traj.z_values[i]));
        row.extend(traj.controls_a[i].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.controls_b[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(traj.constraint_trace[i]));
        row.push(fmt_f64(traj.stage_cost_trace[i]));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips_exactly() {
        for v in [0.1, -2.6, 1.0 / 3.0, 9.81e-7, 123456.78901234567, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }
}
