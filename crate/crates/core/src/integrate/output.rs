//! Trajectory files.
//!
//! CSV: header `t,Z,p,Sz,dW1,dW2`, one row per recorded time.
//!
//! Binary (little-endian):
//! - file header: 8-byte magic `SMRFMTR1`, `u64` trajectory count;
//! - per trajectory: `u64` seed, `u64` record count, then records of six
//!   `f64` values `(t, Z, p, Sz, dW1, dW2)`, 48 bytes each.
//!
//! Missing noise channels are written as zero.

use super::{IntegrateError, TrajectoryResult};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

pub const BINARY_MAGIC: &[u8; 8] = b"SMRFMTR1";
pub const BINARY_RECORD_BYTES: usize = 48;

fn row(traj: &TrajectoryResult, k: usize) -> [f64; 6] {
    let dw = |c: usize| {
        traj.dw
            .get(c)
            .and_then(|v| v.get(k))
            .copied()
            .unwrap_or(0.0)
    };
    [
        traj.times[k],
        traj.z[k],
        traj.p[k],
        traj.sz[k],
        dw(0),
        dw(1),
    ]
}

pub fn write_csv(path: &Path, traj: &TrajectoryResult) -> Result<(), IntegrateError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,Z,p,Sz,dW1,dW2")?;
    for k in 0..traj.times.len() {
        let r = row(traj, k);
        writeln!(w, "{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary(path: &Path, trajectories: &[TrajectoryResult]) -> Result<(), IntegrateError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(trajectories.len() as u64).to_le_bytes())?;
    for traj in trajectories {
        w.write_all(&traj.meta.seed.to_le_bytes())?;
        w.write_all(&(traj.times.len() as u64).to_le_bytes())?;
        for k in 0..traj.times.len() {
            for v in row(traj, k) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a binary trajectory file as `(seed, records)` pairs.
pub fn read_binary(path: &Path) -> Result<Vec<(u64, Vec<[f64; 6]>)>, IntegrateError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || IntegrateError::Invalid(format!("{} is not a trajectory file", path.display()));
    if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
        return Err(bad());
    }
    let mut pos = 8;
    let u64_at = |pos: &mut usize| -> Result<u64, IntegrateError> {
        let s = bytes.get(*pos..*pos + 8).ok_or_else(bad)?;
        *pos += 8;
        Ok(u64::from_le_bytes(s.try_into().expect("8 bytes")))
    };
    let n = u64_at(&mut pos)?;
    let mut out = Vec::new();
    for _ in 0..n {
        let seed = u64_at(&mut pos)?;
        let m = u64_at(&mut pos)? as usize;
        let mut recs = Vec::with_capacity(m);
        for _ in 0..m {
            let mut r = [0.0; 6];
            for v in r.iter_mut() {
                *v = f64::from_bits(u64_at(&mut pos)?);
            }
            recs.push(r);
        }
        out.push((seed, recs));
    }
    if pos != bytes.len() {
        return Err(bad());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{Scheme, StateSnapshot, StepDiagnostics, TrajectoryMeta};
    use crate::linalg::{ONE, ZERO};

    fn sample() -> TrajectoryResult {
        let basis = crate::hilbert::FockBasis::new(2).unwrap();
        let osc = crate::hilbert::fock_state(0, &basis).unwrap();
        TrajectoryResult {
            times: vec![0.0, 0.5, 1.0],
            z: vec![0.1, -0.2, 0.3],
            p: vec![1.0, 2.0, 3.0],
            sz: vec![0.5, 0.25, -0.5],
            dw: vec![vec![0.0, 0.01, -0.02], vec![0.0, 0.03, 0.04]],
            record_dt: 0.5,
            states: vec![],
            final_state: StateSnapshot::Pure(
                crate::hilbert::CompositeState::product([ONE, ZERO], &osc, &basis).unwrap(),
            ),
            truncation_warning: false,
            max_top_population: 0.0,
            diagnostics: StepDiagnostics::default(),
            meta: TrajectoryMeta {
                preset: "x".into(),
                seed: 42,
                scheme: Scheme::EulerMaruyama,
                dt: 0.5,
            },
        }
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = sample();
        write_binary(&path, &[t.clone(), t.clone()]).unwrap();
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 16 + 2 * (16 + 3 * BINARY_RECORD_BYTES));
        let back = read_binary(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].0, 42);
        assert_eq!(back[0].1[2], [1.0, 0.3, 3.0, -0.5, -0.02, 0.04]);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &sample()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,Z,p,Sz,dW1,dW2");
        assert_eq!(lines[2], "0.5,-0.2,2,0.25,0.01,0.03");
    }
}
