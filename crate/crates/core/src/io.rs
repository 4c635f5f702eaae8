//! On-disk formats.
//!
//! * `KRLF1` fields: 8-byte magic `KRLF1\0\0\0`, little-endian `u32 d`,
//!   `u32 components`, `u32 Nx`, `u32 Nv`, `f64 Lx`, `f64 Lv`, then
//!   row-major `f64` samples with position axes outermost and the component
//!   index innermost.
//! * `KRLE1` ensembles: magic `KRLE1\0\0\0`, `u32 d`, `u32 K`, `u32 M`,
//!   `f64 T`, `u64 seed`, then `f64` states path-major
//!   (`x0..x{d-1}, v0..v{d-1}` per node).
//! * Space-time fields: a directory with `manifest.txt` (`T=...`, `K=...`,
//!   one slice file name per line) plus one KRLF1 record per slice.
//! * Reports: CSV with self-describing headers; the leading
//!   `# generated: <unix seconds>` line is the only non-reproducible byte.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{SpaceTimeField, TimeGrid};
use crate::lattice::{AnisotropicLattice, LatticeField};
use crate::sde::PathEnsemble;

const FIELD_MAGIC: &[u8; 8] = b"KRLF1\0\0\0";
const ENSEMBLE_MAGIC: &[u8; 8] = b"KRLE1\0\0\0";

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}
fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}
fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_field(path: &Path, f: &LatticeField) -> Result<()> {
    let lat = f.lattice;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    write_u32(&mut w, lat.d() as u32)?;
    write_u32(&mut w, f.components as u32)?;
    write_u32(&mut w, lat.nx() as u32)?;
    write_u32(&mut w, lat.nv() as u32)?;
    write_f64(&mut w, lat.lx())?;
    write_f64(&mut w, lat.lv())?;
    for v in &f.values {
        write_f64(&mut w, *v)?;
    }
    Ok(())
}

pub fn read_field(path: &Path) -> Result<LatticeField> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format(format!("{}: bad field magic", path.display())));
    }
    let d = read_u32(&mut r)? as usize;
    let components = read_u32(&mut r)? as usize;
    let nx = read_u32(&mut r)? as usize;
    let nv = read_u32(&mut r)? as usize;
    let lx = read_f64(&mut r)?;
    let lv = read_f64(&mut r)?;
    let lattice = AnisotropicLattice::new(d, nx, nv, lx, lv)?;
    let count = lattice.node_count() * components;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(read_f64(&mut r)?);
    }
    LatticeField::new(lattice, components, values)
}

pub fn write_ensemble(path: &Path, e: &PathEnsemble) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(ENSEMBLE_MAGIC)?;
    write_u32(&mut w, e.d as u32)?;
    write_u32(&mut w, e.grid.steps as u32)?;
    write_u32(&mut w, e.paths as u32)?;
    write_f64(&mut w, e.grid.t_end)?;
    w.write_all(&e.master_seed.to_le_bytes())?;
    for v in &e.states {
        write_f64(&mut w, *v)?;
    }
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<PathEnsemble> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(Error::Format(format!("{}: bad ensemble magic", path.display())));
    }
    let d = read_u32(&mut r)? as usize;
    let steps = read_u32(&mut r)? as usize;
    let paths = read_u32(&mut r)? as usize;
    let t_end = read_f64(&mut r)?;
    let master_seed = read_u64(&mut r)?;
    let grid = TimeGrid::new(t_end, steps)?;
    let count = paths * grid.num_nodes() * 2 * d;
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        states.push(read_f64(&mut r)?);
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite states", path.display())));
    }
    let z0 = states[..2 * d].to_vec();
    Ok(PathEnsemble {
        d,
        grid,
        paths,
        z0,
        master_seed,
        states,
        poisoned: vec![false; paths],
        boundary_excursions: 0,
    })
}

/// Ensemble as CSV: `path,t,x0..x{d-1},v0..v{d-1}`.
pub fn write_ensemble_csv(path: &Path, e: &PathEnsemble, timestamp: bool) -> Result<()> {
    let mut header = String::from("path,t");
    for i in 0..e.d {
        header.push_str(&format!(",x{i}"));
    }
    for i in 0..e.d {
        header.push_str(&format!(",v{i}"));
    }
    let mut w = CsvWriter::create(path, &header, timestamp)?;
    for p in 0..e.paths {
        for k in 0..e.grid.num_nodes() {
            let s = e.state(p, k);
            let mut row = format!("{p},{}", e.grid.node(k));
            for v in s {
                row.push_str(&format!(",{v}"));
            }
            w.row(&row)?;
        }
    }
    Ok(())
}

/// Write a space-time field as a manifest directory.
pub fn write_space_time(dir: &Path, f: &SpaceTimeField) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("T={}\n", f.grid.t_end));
    manifest.push_str(&format!("K={}\n", f.grid.steps));
    for (k, slice) in f.slices.iter().enumerate() {
        let name = format!("slice_{k:05}.krlf");
        write_field(&dir.join(&name), slice)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn read_space_time(dir: &Path) -> Result<SpaceTimeField> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut t_end = None;
    let mut steps = None;
    let mut names = Vec::new();
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(v) = line.strip_prefix("T=") {
            t_end = Some(v.parse::<f64>().map_err(|e| Error::Format(format!("manifest T: {e}")))?);
        } else if let Some(v) = line.strip_prefix("K=") {
            steps = Some(v.parse::<usize>().map_err(|e| Error::Format(format!("manifest K: {e}")))?);
        } else {
            names.push(line.to_string());
        }
    }
    let grid = TimeGrid::new(
        t_end.ok_or_else(|| Error::Format("manifest missing T".into()))?,
        steps.ok_or_else(|| Error::Format("manifest missing K".into()))?,
    )?;
    let slices: Result<Vec<LatticeField>> =
        names.iter().map(|n| read_field(&dir.join(n))).collect();
    SpaceTimeField::new(grid, slices?)
}

/// CSV writer with an optional `# generated:` timestamp line (the only line
/// excluded from reproducibility comparisons).
pub struct CsvWriter {
    w: BufWriter<fs::File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str, timestamp: bool) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        if timestamp {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(w, "# generated: {now}")?;
        }
        writeln!(w, "{header}")?;
        Ok(Self { w })
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    pub fn comment(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "# {line}")?;
        Ok(())
    }
}

/// Read a CSV with the timestamp line stripped (for byte-comparisons).
pub fn read_csv_normalized(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with("# generated:"))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_ensemble, AnalyticDrift, DriftSource, SdeConfig};

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lat = AnisotropicLattice::new(2, 6, 4, 1.5, 2.5).unwrap();
        let mut f = LatticeField::zeros(lat, 2);
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        let p = dir.path().join("f.krlf");
        write_field(&p, &f).unwrap();
        let g = read_field(&p).unwrap();
        assert_eq!(f, g);
        // header layout: magic + 4 u32 + 2 f64 + payload
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"KRLF1\0\0\0");
        assert_eq!(bytes.len(), 8 + 16 + 16 + f.values.len() * 8);
    }

    #[test]
    fn ensemble_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SdeConfig {
            d: 1,
            z0: vec![0.5, -0.25],
            t_end: 0.5,
            steps: 8,
            paths: 6,
            master_seed: 99,
            b2: None,
        };
        let e = simulate_ensemble(&cfg, &DriftSource::Analytic(AnalyticDrift::Zero)).unwrap();
        let p = dir.path().join("e.krle");
        write_ensemble(&p, &e).unwrap();
        let g = read_ensemble(&p).unwrap();
        assert_eq!(e.states, g.states);
        assert_eq!(g.z0, vec![0.5, -0.25]);
        assert_eq!(g.master_seed, 99);
    }

    #[test]
    fn space_time_round_trip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let lat = AnisotropicLattice::new(1, 8, 8, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.25, 3).unwrap();
        let f = SpaceTimeField::from_fn(grid, lat, |t, z| t + z[0] * z[1]);
        let sub = dir.path().join("stf");
        write_space_time(&sub, &f).unwrap();
        let manifest = std::fs::read_to_string(sub.join("manifest.txt")).unwrap();
        assert!(manifest.starts_with("T=0.25\nK=3\n"));
        let g = read_space_time(&sub).unwrap();
        assert_eq!(f.slices.len(), g.slices.len());
        for (a, b) in f.slices.iter().zip(g.slices.iter()) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn csv_normalization_strips_only_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut w = CsvWriter::create(&p, "a,b", true).unwrap();
        w.row("1,2").unwrap();
        w.comment("slope=3").unwrap();
        drop(w);
        let norm = read_csv_normalized(&p).unwrap();
        assert_eq!(norm, "a,b\n1,2\n# slope=3");
    }
}
