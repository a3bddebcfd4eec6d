//! Synthetic 3D samples with known geometry, plus a closed-form projection
//! oracle for ellipsoid compositions.
//!
//! Components are axis-aligned ellipsoids or cuboids placed relative to the
//! volume center, each adding its density to every voxel whose center it
//! contains. An optional dense marker bead acts as a trackable fixed point.

use crate::error::{Error, Result};
use crate::grid::{center_coord, detector_axis, GridGeometry, Volume};
use crate::projector::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Ellipsoid,
    Cuboid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub kind: ComponentKind,
    /// Center in voxels, relative to the volume center.
    pub center: [f64; 3],
    /// Semi-axes in voxels (half-widths for cuboids).
    pub semi_axes: [f64; 3],
    /// Additive density contribution.
    pub density: f64,
}

/// Dense bead acting as a trackable fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub center: [f64; 3],
    pub radius: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhantomSpec {
    pub components: Vec<Component>,
    pub marker: Option<Marker>,
}

impl PhantomSpec {
    /// Checks the spec against a target grid: every component (and the
    /// marker) must lie fully inside the reconstructable cylinder of radius
    /// `min(nx, ny)/2 - 2`, and the marker must be strictly denser than any
    /// possible summed background value.
    pub fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        let safe_radius = nx.min(ny) as f64 / 2.0 - 2.0;
        let check = |cx: f64, cy: f64, extent: f64, what: &str| -> Result<()> {
            let reach = (cx * cx + cy * cy).sqrt() + extent;
            if reach > safe_radius {
                return Err(Error::InvalidArgument(format!(
                    "{what} reaches {reach:.2} px from the rotation axis, outside the safe cylinder radius {safe_radius:.2}"
                )));
            }
            Ok(())
        };
        for (i, c) in self.components.iter().enumerate() {
            let extent = match c.kind {
                ComponentKind::Ellipsoid => c.semi_axes[0].max(c.semi_axes[1]),
                ComponentKind::Cuboid => c.semi_axes[0].hypot(c.semi_axes[1]),
            };
            check(c.center[0], c.center[1], extent, &format!("component {i}"))?;
        }
        if let Some(m) = &self.marker {
            check(m.center[0], m.center[1], m.radius, "marker")?;
            let background_max: f64 = self.components.iter().map(|c| c.density.max(0.0)).sum();
            if m.density <= background_max {
                return Err(Error::InvalidArgument(format!(
                    "marker density {} does not exceed the maximum summed background density {background_max}",
                    m.density
                )));
            }
        }
        Ok(())
    }

    /// All geometry (components and marker) as ellipsoids, if possible.
    /// Cuboids have no closed-form chord, so their presence is an error.
    fn ellipsoids(&self) -> Result<Vec<Component>> {
        let mut out = Vec::with_capacity(self.components.len() + 1);
        for (i, c) in self.components.iter().enumerate() {
            if c.kind != ComponentKind::Ellipsoid {
                return Err(Error::InvalidArgument(format!(
                    "component {i} is not an ellipsoid; the analytic oracle only covers closed forms"
                )));
            }
            out.push(*c);
        }
        if let Some(m) = &self.marker {
            out.push(Component {
                kind: ComponentKind::Ellipsoid,
                center: m.center,
                semi_axes: [m.radius; 3],
                density: m.density,
            });
        }
        Ok(out)
    }

    fn all_components(&self) -> Vec<Component> {
        let mut out = self.components.clone();
        if let Some(m) = &self.marker {
            out.push(Component {
                kind: ComponentKind::Ellipsoid,
                center: m.center,
                semi_axes: [m.radius; 3],
                density: m.density,
            });
        }
        out
    }
}

/// Rasterize a phantom onto a voxel grid. A voxel takes the summed density
/// of all components containing its center; no antialiasing, so voxel-count
/// oracles stay exact.
pub fn generate_phantom(
    spec: &PhantomSpec,
    nx: usize,
    ny: usize,
    nz: usize,
    spacing_um: f64,
) -> Result<Volume> {
    spec.validate(nx, ny)?;
    let mut volume = Volume::zeros(nx, ny, nz, spacing_um);
    if spacing_um <= 0.0 || !spacing_um.is_finite() {
        return Err(Error::InvalidArgument(format!("spacing {spacing_um} must be > 0")));
    }
    let (cx, cy, cz) = (center_coord(nx), center_coord(ny), center_coord(nz));
    for comp in spec.all_components() {
        let center = [cx + comp.center[0], cy + comp.center[1], cz + comp.center[2]];
        // Bounding box in grid coordinates, clamped to the volume.
        let lo = |c: f64, a: f64| ((c - a).floor().max(0.0)) as usize;
        let hi = |c: f64, a: f64, n: usize| ((c + a).ceil().min(n as f64 - 1.0)).max(0.0) as usize;
        let (x0, x1) = (lo(center[0], comp.semi_axes[0]), hi(center[0], comp.semi_axes[0], nx));
        let (y0, y1) = (lo(center[1], comp.semi_axes[1]), hi(center[1], comp.semi_axes[1], ny));
        let (z0, z1) = (lo(center[2], comp.semi_axes[2]), hi(center[2], comp.semi_axes[2], nz));
        let data = volume.data_mut();
        for z in z0..=z1 {
            let dz = z as f64 - center[2];
            for y in y0..=y1 {
                let dy = y as f64 - center[1];
                let row = (z * ny + y) * nx;
                for x in x0..=x1 {
                    let dx = x as f64 - center[0];
                    let inside = match comp.kind {
                        ComponentKind::Ellipsoid => {
                            let q = (dx / comp.semi_axes[0]).powi(2)
                                + (dy / comp.semi_axes[1]).powi(2)
                                + (dz / comp.semi_axes[2]).powi(2);
                            q <= 1.0
                        }
                        ComponentKind::Cuboid => {
                            dx.abs() <= comp.semi_axes[0]
                                && dy.abs() <= comp.semi_axes[1]
                                && dz.abs() <= comp.semi_axes[2]
                        }
                    };
                    if inside {
                        data[row + x] += comp.density;
                    }
                }
            }
        }
    }
    Ok(volume)
}

/// Exact line integrals through the ellipse cross-sections of an
/// all-ellipsoid phantom at one axial level.
///
/// For an origin-centered ellipse with semi-axes (a, b) and density ρ the
/// chord integral at detector coordinate s is `2ρ·(ab/L²)·√(L² − s²)` for
/// |s| < L, where `L² = a²cos²θ + b²sin²θ`; off-center components shift the
/// abscissa by `x₀cos θ + y₀sin θ`, and contributions sum.
pub fn analytic_sinogram(
    spec: &PhantomSpec,
    nx: usize,
    ny: usize,
    nz: usize,
    slice_z: usize,
    angles: &[f64],
) -> Result<Sinogram> {
    spec.validate(nx, ny)?;
    if slice_z >= nz {
        return Err(Error::InvalidArgument(format!("slice_z {slice_z} outside 0..{nz}")));
    }
    let components = spec.ellipsoids()?;
    let nu = nx;
    let c0 = GridGeometry::new(nu).center_column();
    let cz = center_coord(nz);
    // Per-component ellipse cross-section at this axial level.
    struct Section {
        a: f64,
        b: f64,
        x0: f64,
        y0: f64,
        density: f64,
    }
    let sections: Vec<Section> = components
        .iter()
        .filter_map(|c| {
            let dz = slice_z as f64 - (cz + c.center[2]);
            let t = dz / c.semi_axes[2];
            if t.abs() >= 1.0 {
                return None;
            }
            let shrink = (1.0 - t * t).sqrt();
            Some(Section {
                a: c.semi_axes[0] * shrink,
                b: c.semi_axes[1] * shrink,
                x0: c.center[0],
                y0: c.center[1],
                density: c.density,
            })
        })
        .collect();
    let mut data = vec![0.0; angles.len() * nu];
    for (ai, &theta) in angles.iter().enumerate() {
        let (cos_t, sin_t) = detector_axis(theta);
        let row = &mut data[ai * nu..(ai + 1) * nu];
        for sec in &sections {
            let l2 = sec.a * sec.a * cos_t * cos_t + sec.b * sec.b * sin_t * sin_t;
            if l2 <= 0.0 {
                continue;
            }
            let shift = sec.x0 * cos_t + sec.y0 * sin_t;
            let scale = 2.0 * sec.density * sec.a * sec.b / l2;
            for (u, value) in row.iter_mut().enumerate() {
                let s = u as f64 - c0 - shift;
                let rem = l2 - s * s;
                if rem > 0.0 {
                    *value += scale * rem.sqrt();
                }
            }
        }
    }
    Sinogram::new(angles.to_vec(), nu, data)
}

/// Parse a plain-text phantom spec. One component per line:
///
/// ```text
/// # comment
/// ellipsoid CX CY CZ  A B C  DENSITY
/// cuboid    CX CY CZ  A B C  DENSITY
/// marker    CX CY CZ  RADIUS DENSITY
/// ```
///
/// Centers are voxels relative to the volume center; axes are semi-axes
/// (half-widths for cuboids). `#` starts a comment; blank lines are ignored;
/// at most one marker line is allowed.
pub fn parse_spec(text: &str) -> Result<PhantomSpec> {
    let mut spec = PhantomSpec::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Format(format!("phantom spec line {}: {msg}", lineno + 1));
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| bad(&format!("expected a number, got {s:?}")))?;
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
            Ok(v)
        };
        match fields[0] {
            kind @ ("ellipsoid" | "cuboid") => {
                if fields.len() != 8 {
                    return Err(bad("expected: kind cx cy cz a b c density"));
                }
                let vals: Vec<f64> = fields[1..].iter().map(|s| num(s)).collect::<Result<_>>()?;
                if vals[3] <= 0.0 || vals[4] <= 0.0 || vals[5] <= 0.0 {
                    return Err(bad("semi-axes must be positive"));
                }
                spec.components.push(Component {
                    kind: if kind == "ellipsoid" {
                        ComponentKind::Ellipsoid
                    } else {
                        ComponentKind::Cuboid
                    },
                    center: [vals[0], vals[1], vals[2]],
                    semi_axes: [vals[3], vals[4], vals[5]],
                    density: vals[6],
                });
            }
            "marker" => {
                if fields.len() != 6 {
                    return Err(bad("expected: marker cx cy cz radius density"));
                }
                if spec.marker.is_some() {
                    return Err(bad("more than one marker"));
                }
                let vals: Vec<f64> = fields[1..].iter().map(|s| num(s)).collect::<Result<_>>()?;
                if vals[3] <= 0.0 {
                    return Err(bad("marker radius must be positive"));
                }
                spec.marker = Some(Marker {
                    center: [vals[0], vals[1], vals[2]],
                    radius: vals[3],
                    density: vals[4],
                });
            }
            other => return Err(bad(&format!("unknown component kind {other:?}"))),
        }
    }
    Ok(spec)
}

/// Inverse of [`parse_spec`]: a canonical textual form of a spec.
pub fn format_spec(spec: &PhantomSpec) -> String {
    let mut out = String::new();
    for c in &spec.components {
        let kind = match c.kind {
            ComponentKind::Ellipsoid => "ellipsoid",
            ComponentKind::Cuboid => "cuboid",
        };
        out.push_str(&format!(
            "{kind} {} {} {} {} {} {} {}\n",
            c.center[0], c.center[1], c.center[2], c.semi_axes[0], c.semi_axes[1], c.semi_axes[2], c.density
        ));
    }
    if let Some(m) = &spec.marker {
        out.push_str(&format!(
            "marker {} {} {} {} {}\n",
            m.center[0], m.center[1], m.center[2], m.radius, m.density
        ));
    }
    out
}

/// Tooth-like sample scaled to a grid: enamel shell (positive outer plus
/// negative inner pair), low-density pulp chamber, two roots, the whole
/// crown offset from the rotation axis so fixed-point orbits have real
/// amplitude.
pub fn tooth_spec(nx: usize, ny: usize, nz: usize) -> PhantomSpec {
    let n = nx.min(ny) as f64;
    let h = nz as f64;
    let (ox, oy) = (0.055 * n, -0.04 * n);
    let ell = |center: [f64; 3], axes: [f64; 3], density: f64| Component {
        kind: ComponentKind::Ellipsoid,
        center: [center[0] + ox, center[1] + oy, center[2]],
        semi_axes: axes,
        density,
    };
    // Crown toward z = 0 (detector row 0), roots toward z = nz - 1; the apex
    // tracker's "smallest row above threshold" then lands on the crown dome.
    // About 20% of the height is left empty at both ends so vertically
    // shifted projections keep the whole sample on the detector.
    PhantomSpec {
        components: vec![
            // Crown: enamel = outer alone, dentin = outer+inner, pulp adds further.
            ell([0.0, 0.0, -0.14 * h], [0.330 * n, 0.270 * n, 0.155 * h], 1.8),
            ell([0.0, 0.0, -0.135 * h], [0.265 * n, 0.215 * n, 0.120 * h], -0.8),
            ell([0.01 * n, 0.0, -0.125 * h], [0.120 * n, 0.090 * n, 0.070 * h], -0.7),
            // Roots.
            ell([-0.10 * n, 0.01 * n, 0.11 * h], [0.095 * n, 0.115 * n, 0.185 * h], 1.0),
            ell([0.10 * n, 0.03 * n, 0.10 * h], [0.090 * n, 0.105 * n, 0.175 * h], 1.0),
        ],
        marker: None,
    }
}

/// [`tooth_spec`] plus a dense bead above the crown, for marker tracking.
pub fn tooth_spec_with_marker(nx: usize, ny: usize, nz: usize) -> PhantomSpec {
    let n = nx.min(ny) as f64;
    let h = nz as f64;
    let mut spec = tooth_spec(nx, ny, nz);
    spec.marker = Some(Marker {
        center: [0.12 * n, -0.09 * n, -0.20 * h],
        radius: 2.5,
        density: 100.0,
    });
    spec
}
