//! Feature cache file: a manifest header with the three modality dimensions
//! and normalization statistics, then per-trajectory binary records with
//! little-endian 32-bit float payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::normalize::NormStats;
use crate::{FeatureError, Result, Split, TrajectoryFeatures};

const MAGIC: &[u8; 4] = b"DFC1";

/// Everything the downstream stages need: dimensions, the normalization
/// statistics that were applied, and the records themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub d_m: usize,
    pub d_r: usize,
    pub d_g: usize,
    pub stats: NormStats,
    pub records: Vec<TrajectoryFeatures>,
}

pub fn write_feature_cache(cache: &FeatureCache, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(cache.d_m as u32).to_le_bytes())?;
    w.write_all(&(cache.d_r as u32).to_le_bytes())?;
    w.write_all(&(cache.d_g as u32).to_le_bytes())?;
    w.write_all(&(cache.records.len() as u32).to_le_bytes())?;
    for stats in [&cache.stats.movement, &cache.stats.route, &cache.stats.global] {
        w.write_all(&(stats.len() as u32).to_le_bytes())?;
        for (mean, std) in stats {
            w.write_all(&mean.to_le_bytes())?;
            w.write_all(&std.to_le_bytes())?;
        }
    }
    for r in &cache.records {
        write_str(&mut w, &r.traj_id)?;
        write_str(&mut w, &r.user)?;
        w.write_all(&[match r.split {
            Split::Train => 0u8,
            Split::Test => 1u8,
        }])?;
        w.write_all(&(r.movement.len() as u32).to_le_bytes())?;
        w.write_all(&(r.route.len() as u32).to_le_bytes())?;
        for row in &r.movement {
            check_dim(row.len(), cache.d_m)?;
            write_f32_row(&mut w, row)?;
        }
        for row in &r.route {
            check_dim(row.len(), cache.d_r)?;
            write_f32_row(&mut w, row)?;
        }
        check_dim(r.global.len(), cache.d_g)?;
        write_f32_row(&mut w, &r.global)?;
        for id in &r.segment_ids {
            write_str(&mut w, id)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FeatureError::Cache("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != 1 {
        return Err(FeatureError::Cache(format!("unsupported version {version}")));
    }
    let d_m = read_u32(&mut r)? as usize;
    let d_r = read_u32(&mut r)? as usize;
    let d_g = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(3);
    for _ in 0..3 {
        let len = read_u32(&mut r)? as usize;
        let mut stats = Vec::with_capacity(len);
        for _ in 0..len {
            let mean = read_f64(&mut r)?;
            let std = read_f64(&mut r)?;
            stats.push((mean, std));
        }
        blocks.push(stats);
    }
    let global_stats = blocks.pop().unwrap();
    let route_stats = blocks.pop().unwrap();
    let movement_stats = blocks.pop().unwrap();

    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let traj_id = read_str(&mut r)?;
        let user = read_str(&mut r)?;
        let mut split = [0u8; 1];
        r.read_exact(&mut split)?;
        let split = match split[0] {
            0 => Split::Train,
            1 => Split::Test,
            other => return Err(FeatureError::Cache(format!("bad split tag {other}"))),
        };
        let l_m = read_u32(&mut r)? as usize;
        let l_r = read_u32(&mut r)? as usize;
        let mut movement = Vec::with_capacity(l_m);
        for _ in 0..l_m {
            movement.push(read_f32_row(&mut r, d_m)?);
        }
        let mut route = Vec::with_capacity(l_r);
        for _ in 0..l_r {
            route.push(read_f32_row(&mut r, d_r)?);
        }
        let global = read_f32_row(&mut r, d_g)?;
        let mut segment_ids = Vec::with_capacity(l_r);
        for _ in 0..l_r {
            segment_ids.push(read_str(&mut r)?);
        }
        records.push(TrajectoryFeatures {
            traj_id,
            user,
            split,
            movement,
            route,
            segment_ids,
            global,
        });
    }
    Ok(FeatureCache {
        d_m,
        d_r,
        d_g,
        stats: NormStats {
            movement: movement_stats,
            route: route_stats,
            global: global_stats,
        },
        records,
    })
}

fn check_dim(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(FeatureError::Dim { expected, got });
    }
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let b = s.as_bytes();
    w.write_all(&(b.len() as u16).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| FeatureError::Cache("bad utf-8 string".into()))
}

fn write_f32_row(w: &mut impl Write, row: &[f64]) -> Result<()> {
    for &v in row {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32_row(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 4];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f32::from_le_bytes(buf) as f64);
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
