//! Columnar trajectory export for external plotting.
//!
//! The file is comma-separated with one header line:
//! `t,x,y,z,roll,pitch,yaw,q0,...,q{n-1}`. Times are in seconds, positions
//! in metres and angles in radians. Values are written with enough digits
//! to parse back to the identical `f64`.

use crate::harness::episode::EpisodeLog;
use crate::harness::HarnessError;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

pub fn trajectory_header(num_joints: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "x", "y", "z", "roll", "pitch", "yaw"].iter().map(|s| s.to_string()).collect();
    cols.extend((0..num_joints).map(|j| format!("q{j}")));
    cols
}

pub fn export_trajectory(log: &EpisodeLog, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let joints = log.steps.first().map_or(0, |s| s.q.len());
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", trajectory_header(joints).join(","))?;
    for s in &log.steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.pose.iter().chain(&s.q).map(f64::to_string));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Header and rows of an exported trajectory.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let mut lines = std::io::BufReader::new(std::fs::File::open(path)?).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l?.split(',').map(str::to_string).collect(),
        None => return Err(HarnessError::Config("trajectory file has no header".into())),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse().map_err(|_| HarnessError::Config(format!("row {}: bad number `{v}`", i + 1))))
            .collect::<Result<_, _>>()?;
        if row.len() != header.len() {
            return Err(HarnessError::Config(format!("row {} has {} columns, header has {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
