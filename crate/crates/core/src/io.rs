//! Plain binary container formats and 16-bit graymap export.
//!
//! All multi-byte values are little-endian; grids are stored as f32 on disk
//! (in-memory math is f64).
//!
//! - `VAMV` volume: magic `VAMV`, u32 nx, ny, nz, f32 spacing_um, then
//!   nx·ny·nz f32 values, x fastest, then y, then z.
//! - `VAMS` sinogram: magic `VAMS`, u32 n_angles, nu, f32 angles (degrees),
//!   then angle-major f32 data.
//! - `VAMP` projection set: magic `VAMP`, u32 n_angles, nu, nv, f32 angles,
//!   then angle-major images, u fastest within each image. The format
//!   carries no pixel spacing; readers default to 1 µm/px and callers
//!   override when they know better.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::grid::Volume;
use crate::projector::{ProjectionSet, Sinogram};

/// Refuse to allocate for headers claiming more elements than this.
const MAX_ELEMENTS: u64 = 1 << 31;

fn write_f64_as_f32<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len().min(1 << 20) * 4);
    for chunk in data.chunks(1 << 18) {
        buf.clear();
        for &v in chunk {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_f32_as_f64<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn check_magic<R: Read>(r: &mut R, expected: &[u8; 4], what: &str) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(Error::Format(format!(
            "bad magic {magic:?} for {what}, expected {expected:?}"
        )));
    }
    Ok(())
}

fn checked_product(dims: &[u64], what: &str) -> Result<usize> {
    let mut total = 1u64;
    for &d in dims {
        if d == 0 {
            return Err(Error::Format(format!("{what}: zero dimension in header")));
        }
        total = total
            .checked_mul(d)
            .filter(|&t| t <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("{what}: header claims an absurd size")))?;
    }
    Ok(total as usize)
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"VAMV")?;
    w.write_u32::<LE>(volume.nx as u32)?;
    w.write_u32::<LE>(volume.ny as u32)?;
    w.write_u32::<LE>(volume.nz as u32)?;
    w.write_f32::<LE>(volume.spacing_um as f32)?;
    write_f64_as_f32(&mut w, volume.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, b"VAMV", "volume")?;
    let nx = r.read_u32::<LE>()? as u64;
    let ny = r.read_u32::<LE>()? as u64;
    let nz = r.read_u32::<LE>()? as u64;
    let spacing = r.read_f32::<LE>()? as f64;
    let count = checked_product(&[nx, ny, nz], "volume")?;
    let data = read_f32_as_f64(&mut r, count)?;
    Volume::new(nx as usize, ny as usize, nz as usize, spacing, data)
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"VAMS")?;
    w.write_u32::<LE>(sino.n_angles() as u32)?;
    w.write_u32::<LE>(sino.nu() as u32)?;
    write_f64_as_f32(&mut w, sino.angles())?;
    write_f64_as_f32(&mut w, sino.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, b"VAMS", "sinogram")?;
    let n_angles = r.read_u32::<LE>()? as u64;
    let nu = r.read_u32::<LE>()? as u64;
    let count = checked_product(&[n_angles, nu], "sinogram")?;
    let angles = read_f32_as_f64(&mut r, n_angles as usize)?;
    let data = read_f32_as_f64(&mut r, count)?;
    Sinogram::new(angles, nu as usize, data)
}

pub fn write_projections(path: &Path, set: &ProjectionSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"VAMP")?;
    w.write_u32::<LE>(set.n_angles() as u32)?;
    w.write_u32::<LE>(set.nu() as u32)?;
    w.write_u32::<LE>(set.nv() as u32)?;
    write_f64_as_f32(&mut w, set.angles())?;
    write_f64_as_f32(&mut w, set.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_projections(path: &Path) -> Result<ProjectionSet> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, b"VAMP", "projection set")?;
    let n_angles = r.read_u32::<LE>()? as u64;
    let nu = r.read_u32::<LE>()? as u64;
    let nv = r.read_u32::<LE>()? as u64;
    let count = checked_product(&[n_angles, nu, nv], "projection set")?;
    let angles = read_f32_as_f64(&mut r, n_angles as usize)?;
    let data = read_f32_as_f64(&mut r, count)?;
    ProjectionSet::new(angles, nu as usize, nv as usize, 1.0, data)
}

/// Export any scalar image as a 16-bit binary portable graymap, min/max
/// scaled, with the scaling recorded in a `<name>.txt` sidecar.
pub fn write_pgm16(path: &Path, data: &[f64], nx: usize, ny: usize) -> Result<()> {
    if data.len() != nx * ny {
        return Err(Error::DimensionMismatch(format!(
            "pgm data length {} != {nx}x{ny}",
            data.len()
        )));
    }
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { 65535.0 / (max - min) } else { 0.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    let mut buf = Vec::with_capacity(nx * 2);
    for row in data.chunks(nx) {
        buf.clear();
        for &v in row {
            let level = ((v - min) * scale).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&level.to_be_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    let sidecar = path.with_file_name(format!(
        "{}.txt",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    let mut s = File::create(sidecar)?;
    write!(
        s,
        "format: pgm16 min-max scaled\nmin: {min}\nmax: {max}\npixel = round((value - min) / (max - min) * 65535)\n"
    )?;
    Ok(())
}
