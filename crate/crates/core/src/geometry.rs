//! Microphone array geometries in spherical coordinates.
//!
//! Angles follow the physics convention: `theta` is the polar (zenith) angle
//! measured from +z, `phi` the azimuth measured in the xy-plane from +x.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const THETA_TOLERANCE: f64 = 1e-12;
const CENTROID_TOLERANCE: f64 = 1e-9;

/// A point `(r, theta, phi)` with `theta ∈ [0, π]` and `phi ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    /// Builds a normalized coordinate. `theta` within 1e-12 of `[0, π]` is
    /// clamped, anything further out is rejected; `phi` is wrapped.
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r.is_finite() && theta.is_finite() && phi.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite coordinate ({r}, {theta}, {phi})"
            )));
        }
        if r < 0.0 {
            return Err(Error::InvalidGeometry(format!("negative radius {r}")));
        }
        if !(-THETA_TOLERANCE..=PI + THETA_TOLERANCE).contains(&theta) {
            return Err(Error::InvalidGeometry(format!(
                "polar angle {theta} outside [0, pi]"
            )));
        }
        Ok(Self {
            r,
            theta: theta.clamp(0.0, PI),
            phi: wrap_azimuth(phi),
        })
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        spherical_to_cartesian(self)
    }
}

/// Wraps an azimuth into `[0, 2π)`.
pub fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Converts a Cartesian point to spherical coordinates. The origin maps to
/// `(0, 0, 0)`.
pub fn cartesian_to_spherical(x: f64, y: f64, z: f64) -> SphericalCoord {
    let rho = x.hypot(y);
    let r = rho.hypot(z);
    if r == 0.0 {
        return SphericalCoord {
            r: 0.0,
            theta: 0.0,
            phi: 0.0,
        };
    }
    // atan2 form of arccos(z / r); well conditioned near the poles.
    let theta = rho.atan2(z);
    let phi = if rho == 0.0 { 0.0 } else { wrap_azimuth(y.atan2(x)) };
    SphericalCoord { r, theta, phi }
}

pub fn spherical_to_cartesian(c: &SphericalCoord) -> [f64; 3] {
    let (st, ct) = c.theta.sin_cos();
    let (sp, cp) = c.phi.sin_cos();
    [c.r * st * cp, c.r * st * sp, c.r * ct]
}

/// An ordered microphone array. Channel `i` of any multichannel signal
/// belongs to `mics[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub name: String,
    pub mics: Vec<SphericalCoord>,
    /// True when the Cartesian mean of the microphone positions is the origin.
    pub centroid_referenced: bool,
}

/// The array families understood by [`builtin_geometry`].
#[derive(Clone, Debug, PartialEq)]
pub enum GeometryKind {
    UniformCircular { count: usize, radius: f64 },
    Square { side: f64 },
    Binaural { spacing: f64 },
    Custom(Vec<[f64; 3]>),
}

impl ArrayGeometry {
    fn from_spherical(name: impl Into<String>, mics: Vec<SphericalCoord>) -> Self {
        let centroid = centroid(&mics.iter().map(|m| m.to_cartesian()).collect::<Vec<_>>());
        let centroid_referenced = centroid.iter().all(|v| v.abs() <= CENTROID_TOLERANCE);
        Self {
            name: name.into(),
            mics,
            centroid_referenced,
        }
    }

    /// Translates arbitrary Cartesian positions so that their centroid is the
    /// origin, then converts them to spherical coordinates.
    pub fn from_cartesian(name: impl Into<String>, positions: &[[f64; 3]]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("no microphones".into()));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite microphone position".into()));
        }
        let c = centroid(positions);
        let mics = positions
            .iter()
            .map(|p| cartesian_to_spherical(p[0] - c[0], p[1] - c[1], p[2] - c[2]))
            .collect();
        Ok(Self {
            name: name.into(),
            mics,
            centroid_referenced: true,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn cartesian(&self) -> Vec<[f64; 3]> {
        self.mics.iter().map(SphericalCoord::to_cartesian).collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.mics.iter().map(|m| m.r).fold(0.0, f64::max)
    }

    /// All microphones lie on the equator (`theta == π/2` exactly).
    pub fn is_planar(&self) -> bool {
        self.mics.iter().all(|m| m.theta == FRAC_PI_2)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(text)?;
        file.into_geometry()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GeometryFile {
            name: self.name.clone(),
            unit: "m".into(),
            mics: self.cartesian(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// On-disk geometry description: Cartesian positions in meters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryFile {
    pub name: String,
    #[serde(default = "default_unit")]
    pub unit: String,
    pub mics: Vec<[f64; 3]>,
}

fn default_unit() -> String {
    "m".into()
}

impl GeometryFile {
    pub fn into_geometry(self) -> Result<ArrayGeometry> {
        if self.unit != "m" {
            return Err(Error::InvalidGeometry(format!(
                "unsupported unit {:?}, expected \"m\"",
                self.unit
            )));
        }
        ArrayGeometry::from_cartesian(self.name, &self.mics)
    }
}

fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / n)
}

fn require_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{what} must be positive, got {v}")))
    }
}

pub fn builtin_geometry(kind: GeometryKind) -> Result<ArrayGeometry> {
    match kind {
        GeometryKind::UniformCircular { count, radius } => {
            if count == 0 {
                return Err(Error::InvalidGeometry("circular array needs at least one mic".into()));
            }
            require_positive("radius", radius)?;
            let mics = (0..count)
                .map(|i| SphericalCoord {
                    r: radius,
                    theta: FRAC_PI_2,
                    phi: TAU * i as f64 / count as f64,
                })
                .collect();
            Ok(ArrayGeometry::from_spherical(format!("circular{count}"), mics))
        }
        GeometryKind::Square { side } => {
            require_positive("side length", side)?;
            let r = side / std::f64::consts::SQRT_2;
            let mics = (0..4)
                .map(|i| SphericalCoord {
                    r,
                    theta: FRAC_PI_2,
                    phi: PI / 4.0 + FRAC_PI_2 * i as f64,
                })
                .collect();
            Ok(ArrayGeometry::from_spherical("square", mics))
        }
        GeometryKind::Binaural { spacing } => {
            require_positive("spacing", spacing)?;
            let r = spacing / 2.0;
            let mics = vec![
                SphericalCoord { r, theta: FRAC_PI_2, phi: FRAC_PI_2 },
                SphericalCoord { r, theta: FRAC_PI_2, phi: 3.0 * FRAC_PI_2 },
            ];
            Ok(ArrayGeometry::from_spherical("binaural", mics))
        }
        GeometryKind::Custom(points) => ArrayGeometry::from_cartesian("custom", &points),
    }
}

/// Keeps the microphones at `indices` (in that order) and re-references them
/// to their own centroid by a pure translation.
pub fn subset_geometry(g: &ArrayGeometry, indices: &[usize]) -> Result<ArrayGeometry> {
    let n = g.num_mics();
    if indices.len() < 2 {
        return Err(Error::InvalidSubset(format!(
            "subset needs at least 2 microphones, got {}",
            indices.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidSubset(format!("index {i} out of range for {n} mics")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidSubset(format!("duplicate index {i}")));
        }
    }
    let identity = indices.len() == n && indices.iter().enumerate().all(|(k, &i)| k == i);
    if identity && g.centroid_referenced {
        return Ok(g.clone());
    }
    let positions: Vec<[f64; 3]> = indices.iter().map(|&i| g.mics[i].to_cartesian()).collect();
    ArrayGeometry::from_cartesian(format!("{}[subset]", g.name), &positions)
}

/// Smallest source distance satisfying the far-field condition `d > 8 r² f / c`,
/// evaluated at the largest microphone radius.
pub fn far_field_min_distance(g: &ArrayGeometry, f_max: f64, c: f64) -> Result<f64> {
    if !(f_max > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!(
            "frequency and sound speed must be positive (f_max={f_max}, c={c})"
        )));
    }
    let r = g.max_radius();
    Ok(8.0 * r * r * f_max / c)
}
