//! Binary checkpoint and profile-cache formats.
//!
//! Checkpoint: `t: f64`, `dim: u32`, `N: u32`, `L: f64`, then `N^d` complex
//! values as interleaved `(re, im)` `f64` pairs, all little-endian.
//!
//! Profile cache: magic `GSPR`, `version: u32`, `dim: u32`, `r_max: f64`,
//! `n: u64`, then `n` radii, `n` values, `n` slopes and `n` curvatures as
//! little-endian `f64`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::ground_state::{solve_rho, GroundState, RadialMesh, RadialProfile};
use crate::spectral::{Field, Grid};
use crate::{Complex64, Error, Result};

const PROFILE_MAGIC: &[u8; 4] = b"GSPR";
const PROFILE_VERSION: u32 = 1;

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn encode_checkpoint(t: f64, field: &Field) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(24 + 16 * grid.len());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points() as u32).to_le_bytes());
    out.extend_from_slice(&grid.extent().to_le_bytes());
    for z in field.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn write_checkpoint(path: &Path, t: f64, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_checkpoint(t, field))?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint; the field is placed on `grid` when it matches the
/// header, otherwise on a freshly built grid.
pub fn read_checkpoint(path: &Path, grid: Option<&Arc<Grid>>) -> Result<(f64, Field)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let t = read_f64(&mut r)?;
    let dim = read_u32(&mut r)? as usize;
    let points = read_u32(&mut r)? as usize;
    let extent = read_f64(&mut r)?;
    let grid = match grid {
        Some(g) if g.dim() == dim && g.points() == points && g.extent() == extent => g.clone(),
        Some(_) => return Err(Error::GridMismatch),
        None => Grid::new(dim, extent, points)?,
    };
    let raw = read_f64s(&mut r, 2 * grid.len())?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", rest.len())));
    }
    let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok((t, Field::from_values(&grid, values)?))
}

/// One line of a checkpoint index.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub t: f64,
    pub file: String,
}

/// Index text format: one `t file` pair per line, `t` in round-trip form.
pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<()> {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!("{:e} {}\n", e.t, e.file));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let t = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad index line {l:?}")))?;
            let file = it.next().ok_or_else(|| Error::Format(format!("bad index line {l:?}")))?;
            Ok(IndexEntry { t, file: file.to_string() })
        })
        .collect()
}

pub fn encode_profile(p: &RadialProfile) -> Vec<u8> {
    let n = p.values().len();
    let mut out = Vec::with_capacity(28 + 32 * n);
    out.extend_from_slice(PROFILE_MAGIC);
    out.extend_from_slice(&PROFILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(p.dim() as u32).to_le_bytes());
    out.extend_from_slice(&p.r_max().to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for arr in [&p.radii()[..], p.values(), p.slopes(), p.curvatures()] {
        for v in arr {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_profile(bytes: &[u8]) -> Result<RadialProfile> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PROFILE_MAGIC {
        return Err(Error::Format("not a profile cache file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != PROFILE_VERSION {
        return Err(Error::Format(format!("profile cache version {version}, expected {PROFILE_VERSION}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let r_max = read_f64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    if n < 2 || r.len() != 32 * n {
        return Err(Error::Format("profile cache length does not match header".into()));
    }
    let radii = read_f64s(&mut r, n)?;
    let values = read_f64s(&mut r, n)?;
    let slopes = read_f64s(&mut r, n)?;
    let curvatures = read_f64s(&mut r, n)?;
    let dr = r_max / (n - 1) as f64;
    if radii.iter().enumerate().any(|(i, &x)| (x - i as f64 * dr).abs() > 1e-12 * r_max) {
        return Err(Error::Format("profile cache radii are not uniform".into()));
    }
    RadialProfile::from_parts(dim, dr, values, slopes, curvatures)
}

/// Hex digest identifying a `(dim, mesh)` pair.
pub fn mesh_hash(dim: usize, mesh: &RadialMesh) -> String {
    let mut h = Sha256::new();
    h.update(PROFILE_VERSION.to_le_bytes());
    h.update((dim as u64).to_le_bytes());
    h.update(mesh.dr.to_le_bytes());
    h.update(mesh.r_max.to_le_bytes());
    h.update((mesh.substeps as u64).to_le_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, kind: &str, dim: usize, mesh: &RadialMesh) -> PathBuf {
    dir.join(format!("{kind}-d{dim}-{}.bin", mesh_hash(dim, mesh)))
}

/// Loads `Q` and `ρ` from `dir` when cached for this `(dim, mesh)`, otherwise
/// solves and writes them.
pub fn cached_ground_state(dim: usize, mesh: &RadialMesh, dir: &Path) -> Result<Arc<GroundState>> {
    let q_path = cache_path(dir, "q", dim, mesh);
    let rho_path = cache_path(dir, "rho", dim, mesh);
    if let (Ok(qb), Ok(rb)) = (fs::read(&q_path), fs::read(&rho_path)) {
        if let (Ok(q), Ok(rho)) = (decode_profile(&qb), decode_profile(&rb)) {
            if q.dim() == dim && rho.dim() == dim {
                return Ok(Arc::new(GroundState { q, rho }));
            }
        }
    }
    let q = crate::ground_state::solve_ground_state(dim, mesh)?;
    let rho = solve_rho(&q)?;
    fs::create_dir_all(dir)?;
    fs::write(&q_path, encode_profile(&q))?;
    fs::write(&rho_path, encode_profile(&rho))?;
    Ok(Arc::new(GroundState { q, rho }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(2, 4.0, 16).unwrap();
        let f = Field::from_fn(&grid, |x| Complex64::new(x[0].sin(), x[1] * x[0]));
        let path = dir.path().join("c.bin");
        write_checkpoint(&path, -0.125, &f).unwrap();
        let (t, g) = read_checkpoint(&path, Some(&grid)).unwrap();
        assert_eq!(t, -0.125);
        assert_eq!(g.values(), f.values());
        let (_, g) = read_checkpoint(&path, None).unwrap();
        assert_eq!(g.values(), f.values());
        let other = make_grid(2, 4.0, 32).unwrap();
        assert!(matches!(read_checkpoint(&path, Some(&other)), Err(Error::GridMismatch)));
        assert_eq!(fs::metadata(&path).unwrap().len(), 24 + 16 * 256);
    }

    #[test]
    fn index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            IndexEntry { t: 0.1 + 0.2, file: "a.bin".into() },
            IndexEntry { t: -3.5e-9, file: "b.bin".into() },
        ];
        let path = dir.path().join("index.txt");
        write_index(&path, &entries).unwrap();
        assert_eq!(read_index(&path).unwrap(), entries);
    }

    #[test]
    fn profile_round_trip_and_rejects_garbage() {
        let p = RadialProfile::from_parts(1, 0.5, vec![1.0, 0.5, 0.25], vec![0.0, -1.0, -0.5], vec![1.0, 1.0, 1.0])
            .unwrap();
        let bytes = encode_profile(&p);
        assert_eq!(decode_profile(&bytes).unwrap(), p);
        assert!(decode_profile(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_profile(&bad).is_err());
    }

    #[test]
    fn cache_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = RadialMesh { dr: 1.0 / 64.0, r_max: 24.0, substeps: 8 };
        let a = cached_ground_state(1, &mesh, dir.path()).unwrap();
        let b = cached_ground_state(1, &mesh, dir.path()).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.rho, b.rho);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
        assert_ne!(mesh_hash(1, &mesh), mesh_hash(2, &mesh));
    }
}
