// Copyright 2026 Backflow Contributors
// SPDX-License-Identifier: Apache-2.0

//! Artifact emission: series CSV, timing CSV, JSON reports and snapshot
//! dumps.
//!
//! CSV value columns use the shortest round-trip float formatting, so at a
//! fixed master seed the emitted bytes are identical run to run. Binary
//! snapshot dumps are little-endian f64 with a fixed header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::TimingTable;
use crate::error::{Error, Result};
use crate::measures::DistanceSeries;
use crate::trajectory::TrajectoryEnsemble;

/// `t,value,sigma` rows.
pub fn write_series_csv(path: &Path, series: &DistanceSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,value,sigma")?;
    for i in 0..series.len() {
        writeln!(w, "{},{},{}", series.times[i], series.values[i], series.sigmas[i])?;
    }
    Ok(())
}

/// `method,l,n_traj,wall_secs,peak_mem_bytes` rows.
pub fn write_timing_csv(path: &Path, table: &TimingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "method,l,n_traj,wall_secs,peak_mem_bytes")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method.as_str(),
            r.l,
            r.n_traj,
            r.wall_secs,
            r.peak_mem_bytes
        )?;
    }
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Gnuplot-ready columns: indexed blocks `L wall_secs` per method.
pub fn write_gnuplot(path: &Path, table: &TimingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for method in [crate::bench::BenchMethod::Dense, crate::bench::BenchMethod::Gaussian] {
        writeln!(w, "# {} : L wall_secs n_traj", method.as_str())?;
        for r in table.rows_for(method) {
            writeln!(w, "{} {} {}", r.l, r.wall_secs, r.n_traj)?;
        }
        writeln!(w)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    Csv,
    Bin,
}

impl DumpFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DumpFormat::Csv),
            "bin" | "binary" => Ok(DumpFormat::Bin),
            other => Err(Error::Config(format!("unknown dump format `{other}` (use csv or bin)"))),
        }
    }
}

const SNAP_MAGIC: &[u8; 8] = b"BFSNAP01";

/// Dump every (trajectory, time) snapshot into `dir`.
///
/// Binary layout: magic `BFSNAP01`, u32 dim, u32 trajectory index, u64
/// master seed, u64 stream, f64 time, then `dim*dim` row-major complex
/// entries as `re, im` little-endian f64 pairs.
pub fn dump_ensemble(dir: &Path, ens: &TrajectoryEnsemble, format: DumpFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (alpha, traj) in ens.snapshots.iter().enumerate() {
        for (k, snap) in traj.iter().enumerate() {
            let t = ens.times[k];
            let ext = match format {
                DumpFormat::Csv => "csv",
                DumpFormat::Bin => "bin",
            };
            let path = dir.join(format!("snap_a{alpha:05}_k{k:04}.{ext}"));
            let dim = snap.dim();
            match format {
                DumpFormat::Bin => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    w.write_all(SNAP_MAGIC)?;
                    w.write_all(&(dim as u32).to_le_bytes())?;
                    w.write_all(&(alpha as u32).to_le_bytes())?;
                    w.write_all(&ens.schedule.master_seed.to_le_bytes())?;
                    w.write_all(&ens.streams[alpha].to_le_bytes())?;
                    w.write_all(&t.to_le_bytes())?;
                    for r in 0..dim {
                        for c in 0..dim {
                            let z = snap.entries()[(r, c)];
                            w.write_all(&z.re.to_le_bytes())?;
                            w.write_all(&z.im.to_le_bytes())?;
                        }
                    }
                }
                DumpFormat::Csv => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    writeln!(
                        w,
                        "# dim={dim} traj={alpha} stream={} seed={} t={t}",
                        ens.streams[alpha], ens.schedule.master_seed
                    )?;
                    for r in 0..dim {
                        let row: Vec<String> = (0..dim)
                            .map(|c| {
                                let z = snap.entries()[(r, c)];
                                format!("{},{}", z.re, z.im)
                            })
                            .collect();
                        writeln!(w, "{}", row.join(","))?;
                    }
                }
            }
            written.push(path);
        }
    }
    Ok(written)
}

/// Read back a binary snapshot dump; returns (dim, traj, seed, stream, t, entries).
pub fn read_snapshot_bin(
    path: &Path,
) -> Result<(usize, u32, u64, u64, f64, Vec<(f64, f64)>)> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 8 + 4 + 4 + 8 + 8 + 8 || &buf[..8] != SNAP_MAGIC {
        return Err(Error::Shape("not a snapshot dump".into()));
    }
    let rd_u32 = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let rd_u64 = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let rd_f64 = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let dim = rd_u32(8) as usize;
    let traj = rd_u32(12);
    let seed = rd_u64(16);
    let stream = rd_u64(24);
    let t = rd_f64(32);
    let mut entries = Vec::with_capacity(dim * dim);
    let mut off = 40;
    for _ in 0..dim * dim {
        entries.push((rd_f64(off), rd_f64(off + 8)));
        off += 16;
    }
    Ok((dim, traj, seed, stream, t, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ModeSubset;
    use crate::lattice::{build_model, ChainLayout, ModelParams};
    use crate::measures::SeriesKind;
    use crate::trajectory::{initial_product_state, run_ensemble, ScheduleConfig};

    #[test]
    fn series_csv_round_trip_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let series = DistanceSeries {
            kind: SeriesKind::HilbertSchmidt,
            times: vec![0.0, 0.1],
            values: vec![1.0, 0.123456789012345],
            sigmas: vec![0.0, 0.25],
        };
        write_series_csv(&path, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t,value,sigma\n0,1,0\n0.1,0.123456789012345,0.25\n");
    }

    #[test]
    fn binary_snapshot_round_trip() {
        let model = build_model(ModelParams::coupled(1, ChainLayout::SB, 1.0, 1.0, 1.0)).unwrap();
        let schedule = ScheduleConfig::new(0.02, 0.1, 2, 5, 11);
        let obs = ModeSubset::range(0..2);
        let ens = run_ensemble(&model, &schedule, &obs, &initial_product_state(&[true, false]))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = dump_ensemble(dir.path(), &ens, DumpFormat::Bin).unwrap();
        assert_eq!(files.len(), ens.n_traj() * ens.n_times());
        let (dim, traj, seed, stream, t, entries) = read_snapshot_bin(&files[0]).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(traj, 0);
        assert_eq!(seed, 11);
        assert_eq!(stream, 0);
        assert_eq!(t, 0.0);
        let c = ens.snapshots[0][0].entries();
        for (i, (re, im)) in entries.iter().enumerate() {
            let (r, col) = (i / dim, i % dim);
            assert_eq!(*re, c[(r, col)].re);
            assert_eq!(*im, c[(r, col)].im);
        }
    }
}
