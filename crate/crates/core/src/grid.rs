//! Shared grid types and resampling primitives.
//!
//! Conventions used throughout the toolkit:
//! - `Volume` data is row-major with x fastest, then y, then z (z = axial level).
//! - The rotation axis projects onto detector column `c0 = (nu - 1) / 2`
//!   (fractional for even detectors).
//! - Angles are degrees in `[0, 180)`, strictly increasing; a projection at
//!   angle θ integrates along rays perpendicular to the direction
//!   `(cos θ, sin θ)`, with detector coordinate `s = x·cos θ + y·sin θ`
//!   measured from the rotation axis in pixels.

use crate::error::{Error, Result};

/// Center coordinate of an n-sample grid axis, in pixels.
///
/// This is the symmetric center of an even- or odd-length axis; fractional
/// centers avoid a half-pixel bias for even detectors.
pub fn center_coord(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Detector/rotation geometry conventions for a `nu`-column detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub nu: usize,
}

impl GridGeometry {
    pub fn new(nu: usize) -> Self {
        GridGeometry { nu }
    }

    /// Column onto which the rotation axis projects: `(nu - 1) / 2`.
    pub fn center_column(&self) -> f64 {
        center_coord(self.nu)
    }

    /// Checks an acquisition angle list: non-empty, strictly increasing,
    /// every angle in `[0, 180)`.
    pub fn validate_angles(angles: &[f64]) -> Result<()> {
        if angles.is_empty() {
            return Err(Error::Empty("angle list".into()));
        }
        for (i, &a) in angles.iter().enumerate() {
            if !a.is_finite() || !(0.0..180.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "angle[{i}] = {a} outside [0, 180)"
                )));
            }
            if i > 0 && a <= angles[i - 1] {
                return Err(Error::InvalidArgument(format!(
                    "angles not strictly increasing at index {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Detector axis direction `(cos θ, sin θ)` for an angle in degrees.
pub fn detector_axis(theta_deg: f64) -> (f64, f64) {
    let t = theta_deg.to_radians();
    (t.cos(), t.sin())
}

/// Ray direction `(-sin θ, cos θ)`, perpendicular to the detector axis.
pub fn ray_direction(theta_deg: f64) -> (f64, f64) {
    let t = theta_deg.to_radians();
    (-t.sin(), t.cos())
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("{what} contains NaN/Inf")));
    }
    Ok(())
}

/// 2D scalar density grid (a reconstructed slice or a projection frame),
/// x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub nx: usize,
    pub ny: usize,
    /// Micrometers per pixel (isotropic).
    pub spacing_um: f64,
    data: Vec<f64>,
}

impl Slice {
    pub fn new(nx: usize, ny: usize, spacing_um: f64, data: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("slice dimensions must be positive".into()));
        }
        if spacing_um <= 0.0 || !spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing_um} must be > 0")));
        }
        if data.len() != nx * ny {
            return Err(Error::DimensionMismatch(format!(
                "slice data length {} != {nx}x{ny}",
                data.len()
            )));
        }
        check_finite(&data, "slice")?;
        Ok(Slice { nx, ny, spacing_um, data })
    }

    pub fn zeros(nx: usize, ny: usize, spacing_um: f64) -> Self {
        Slice { nx, ny, spacing_um, data: vec![0.0; nx * ny] }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.nx + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.nx + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.nx..(y + 1) * self.nx]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// 3D scalar density grid with physical spacing; x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Micrometers per voxel (isotropic).
    pub spacing_um: f64,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(nx: usize, ny: usize, nz: usize, spacing_um: f64, data: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument("volume dimensions must be positive".into()));
        }
        if spacing_um <= 0.0 || !spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing_um} must be > 0")));
        }
        if data.len() != nx * ny * nz {
            return Err(Error::DimensionMismatch(format!(
                "volume data length {} != {nx}x{ny}x{nz}",
                data.len()
            )));
        }
        check_finite(&data, "volume")?;
        Ok(Volume { nx, ny, nz, spacing_um, data })
    }

    pub fn zeros(nx: usize, ny: usize, nz: usize, spacing_um: f64) -> Self {
        Volume { nx, ny, nz, spacing_um, data: vec![0.0; nx * ny * nz] }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    /// Borrow axial level `z` as a contiguous nx×ny plane.
    pub fn plane(&self, z: usize) -> &[f64] {
        let n = self.nx * self.ny;
        &self.data[z * n..(z + 1) * n]
    }

    /// Copy axial level `z` out as a `Slice`.
    pub fn axial_slice(&self, z: usize) -> Slice {
        Slice {
            nx: self.nx,
            ny: self.ny,
            spacing_um: self.spacing_um,
            data: self.plane(z).to_vec(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Block-average an image by an integer factor. Each output pixel is the
/// arithmetic mean of the factor×factor input block; spacing grows by the
/// same factor. The factor must divide both dimensions.
pub fn rebin(image: &Slice, factor: usize) -> Result<Slice> {
    if factor == 0 {
        return Err(Error::InvalidArgument("rebin factor must be positive".into()));
    }
    if image.nx % factor != 0 || image.ny % factor != 0 {
        return Err(Error::DimensionMismatch(format!(
            "rebin factor {factor} does not divide {}x{}",
            image.nx, image.ny
        )));
    }
    let (onx, ony) = (image.nx / factor, image.ny / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; onx * ony];
    for oy in 0..ony {
        for ox in 0..onx {
            let mut sum = 0.0;
            for dy in 0..factor {
                let row = image.row(oy * factor + dy);
                for dx in 0..factor {
                    sum += row[ox * factor + dx];
                }
            }
            out[oy * onx + ox] = sum * norm;
        }
    }
    Ok(Slice {
        nx: onx,
        ny: ony,
        spacing_um: image.spacing_um * factor as f64,
        data: out,
    })
}

/// Raw-buffer sub-pixel shift used by both `Slice` shifts and projection
/// frames: `out(u, v) = bilinear(input, u - du, v - dv)`, zero outside.
pub(crate) fn shift_image(data: &[f64], nx: usize, ny: usize, du: f64, dv: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    // Integer shifts permute pixels exactly; the bilinear path below would
    // also be exact here, this avoids the per-pixel weight arithmetic.
    if du.fract() == 0.0 && dv.fract() == 0.0 {
        let (diu, div) = (du as i64, dv as i64);
        for v in 0..ny as i64 {
            let sv = v - div;
            if sv < 0 || sv >= ny as i64 {
                continue;
            }
            for u in 0..nx as i64 {
                let su = u - diu;
                if su < 0 || su >= nx as i64 {
                    continue;
                }
                out[(v * nx as i64 + u) as usize] = data[(sv * nx as i64 + su) as usize];
            }
        }
        return out;
    }
    let fetch = |u: i64, v: i64| -> f64 {
        if u < 0 || v < 0 || u >= nx as i64 || v >= ny as i64 {
            0.0
        } else {
            data[(v * nx as i64 + u) as usize]
        }
    };
    for v in 0..ny {
        let sv = v as f64 - dv;
        let v0 = sv.floor();
        let fv = sv - v0;
        let v0 = v0 as i64;
        for u in 0..nx {
            let su = u as f64 - du;
            let u0 = su.floor();
            let fu = su - u0;
            let u0 = u0 as i64;
            let a = fetch(u0, v0);
            let b = fetch(u0 + 1, v0);
            let c = fetch(u0, v0 + 1);
            let d = fetch(u0 + 1, v0 + 1);
            out[v * nx + u] =
                a * (1.0 - fu) * (1.0 - fv) + b * fu * (1.0 - fv) + c * (1.0 - fu) * fv + d * fu * fv;
        }
    }
    out
}

/// Shift an image by a fractional number of columns (`du`) and rows (`dv`).
///
/// `out(u, v) = bilinear(input, u - du, v - dv)`; samples outside the input
/// read as zero, so content shifts toward +u/+v for positive arguments.
pub fn shift_subpixel(image: &Slice, du: f64, dv: f64) -> Result<Slice> {
    if !du.is_finite() || !dv.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite shift ({du}, {dv})")));
    }
    Ok(Slice {
        nx: image.nx,
        ny: image.ny,
        spacing_um: image.spacing_um,
        data: shift_image(&image.data, image.nx, image.ny, du, dv),
    })
}
