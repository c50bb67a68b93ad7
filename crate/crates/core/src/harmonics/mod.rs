//! Associated Legendre functions, complex spherical harmonics and the discrete
//! spherical harmonic transform matrix.
//!
//! Convention: no Condon–Shortley phase. `P_n^m` for `m ≥ 0` is
//! `(1 - x²)^{m/2} d^m/dx^m P_n(x)` with a positive sign, and
//!
//! ```text
//! Y_n^m(θ, φ) = sqrt((2n+1)/(4π) · (n-m)!/(n+m)!) · P_n^m(cos θ) · e^{imφ},  m ≥ 0
//! Y_n^{-m}    = (-1)^m · conj(Y_n^m)
//! ```
//!
//! Many libraries (scipy, boost) include `(-1)^m` in `P_n^m`; values here
//! differ from those by that sign for odd positive `m`.

pub mod quadrature;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;

pub use quadrature::{
    equal_weight_polar_nodes, gauss_legendre, quadrature_sht, QuadratureGrid,
};

/// Number of spherical harmonic channels up to and including order `order`.
pub fn num_channels(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Flat channel index `n² + n + m`.
pub fn sh_index(n: usize, m: i64) -> Result<usize> {
    if m.unsigned_abs() as usize > n {
        return Err(Error::Domain(format!("|m| = {} exceeds order n = {n}", m.abs())));
    }
    Ok(((n * n + n) as i64 + m) as usize)
}

/// Inverse of [`sh_index`].
pub fn sh_degree_order(c: usize) -> (usize, i64) {
    let n = (c as f64).sqrt() as usize;
    // guard against sqrt rounding for large c
    let n = if (n + 1) * (n + 1) <= c { n + 1 } else if n * n > c { n - 1 } else { n };
    (n, c as i64 - (n * n + n) as i64)
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `(cos θ, sin θ)` with the equator and the poles snapped to exact values, so
/// that equatorial microphones produce exact zeros where `P_n^m(0) = 0`.
fn polar_cos_sin(theta: f64) -> (f64, f64) {
    if theta == FRAC_PI_2 {
        (0.0, 1.0)
    } else if theta == 0.0 {
        (1.0, 0.0)
    } else if theta == PI {
        (-1.0, 0.0)
    } else {
        let (s, c) = theta.sin_cos();
        (c, s.abs())
    }
}

/// Upward recurrence in `n` seeded with `P_m^m = (2m-1)!! s^m`, where
/// `s = sqrt(1 - x²)` is supplied by the caller.
fn legendre_with_sine(n: usize, m: usize, x: f64, s: f64) -> f64 {
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= (2 * k - 1) as f64 * s;
    }
    if n == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for l in (m + 2)..=n {
        let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Unnormalized associated Legendre function `P_n^m(x)` for `0 ≤ m ≤ n`,
/// without the Condon–Shortley phase.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    if m > n {
        return Err(Error::Domain(format!("m = {m} exceeds n = {n}")));
    }
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!("|x| = {} exceeds 1", x.abs())));
    }
    let x = x.clamp(-1.0, 1.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    Ok(legendre_with_sine(n, m, x, s))
}

/// `sqrt((2n+1)/(4π) · (n-m)!/(n+m)!)` with the factorial ratio taken in log space.
fn normalization(n: usize, m: usize) -> f64 {
    let log_ratio = ln_factorial(n - m) - ln_factorial(n + m);
    ((2 * n + 1) as f64 / (4.0 * PI) * log_ratio.exp()).sqrt()
}

/// Complex spherical harmonic `Y_n^m(θ, φ)`; see the module docs for the
/// phase convention.
pub fn sph_harmonic(n: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
    let am = m.unsigned_abs() as usize;
    if am > n {
        return Err(Error::Domain(format!("|m| = {am} exceeds order n = {n}")));
    }
    let (x, s) = polar_cos_sin(theta);
    let y = normalization(n, am) * legendre_with_sine(n, am, x, s);
    let pos = Complex64::from_polar(1.0, am as f64 * phi) * y;
    if m >= 0 {
        Ok(pos)
    } else if am % 2 == 0 {
        Ok(pos.conj())
    } else {
        Ok(-pos.conj())
    }
}

/// The discrete transform `p_nm ≈ (4π/I) Σ_i p_i conj(Y_n^m(θ_i, φ_i))` for a
/// fixed geometry, stored as a `C × I` matrix.
///
/// Besides the complex weights the plan carries a real packing of the same
/// map for real-valued microphone signals: channel `(n, 0)` holds
/// `Re p_n0`, channel `(n, m>0)` holds `Re p_nm` and channel `(n, -m)` holds
/// `Im p_nm`. Since `p_{n,-m} = (-1)^m conj(p_nm)` for real pressure, this is a
/// bijection onto the complex coefficients with exactly `(N+1)²` real channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ShtPlan {
    geometry: ArrayGeometry,
    order: usize,
    weights: Vec<Complex64>,
    real_weights: Vec<f64>,
}

impl ShtPlan {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_channels(&self) -> usize {
        num_channels(self.order)
    }

    pub fn num_mics(&self) -> usize {
        self.geometry.num_mics()
    }

    /// Complex weight matrix, row-major `C × I`.
    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn weight(&self, c: usize, i: usize) -> Complex64 {
        self.weights[c * self.num_mics() + i]
    }

    /// Real-packed weight matrix, row-major `C × I`.
    pub fn real_weights(&self) -> &[f64] {
        &self.real_weights
    }

    /// Complex coefficients from per-microphone complex amplitudes.
    pub fn apply_complex(&self, pressures: &[Complex64]) -> Result<Vec<Complex64>> {
        let i_count = self.num_mics();
        if pressures.len() != i_count {
            return Err(Error::Shape(format!(
                "expected {i_count} microphone values, got {}",
                pressures.len()
            )));
        }
        Ok(self
            .weights
            .chunks_exact(i_count)
            .map(|row| row.iter().zip(pressures).map(|(w, p)| w * p).sum())
            .collect())
    }

    /// Real-packed coefficients from one real sample per microphone.
    pub fn apply_real(&self, pressures: &[f64]) -> Result<Vec<f64>> {
        let i_count = self.num_mics();
        if pressures.len() != i_count {
            return Err(Error::Shape(format!(
                "expected {i_count} microphone values, got {}",
                pressures.len()
            )));
        }
        Ok(self
            .real_weights
            .chunks_exact(i_count)
            .map(|row| row.iter().zip(pressures).map(|(w, p)| w * p).sum())
            .collect())
    }
}

/// Recovers complex coefficients `p_nm` (all `m`) from real-packed channels.
pub fn unpack_real(packed: &[f64]) -> Vec<Complex64> {
    (0..packed.len())
        .map(|c| {
            let (n, m) = sh_degree_order(c);
            let am = m.unsigned_abs() as usize;
            if m == 0 {
                return Complex64::new(packed[c], 0.0);
            }
            let base = n * n + n;
            let p = Complex64::new(packed[base + am], packed[base - am]);
            if m > 0 {
                p
            } else if am % 2 == 0 {
                p.conj()
            } else {
                -p.conj()
            }
        })
        .collect()
}

/// Packs complex coefficients of a real field into real channels.
pub fn pack_complex(coeffs: &[Complex64]) -> Vec<f64> {
    (0..coeffs.len())
        .map(|c| {
            let (n, m) = sh_degree_order(c);
            let base = n * n + n;
            if m < 0 {
                coeffs[base + m.unsigned_abs() as usize].im
            } else {
                coeffs[c].re
            }
        })
        .collect()
}

pub fn build_plan(g: &ArrayGeometry, order: usize) -> Result<ShtPlan> {
    let i_count = g.num_mics();
    if i_count == 0 {
        return Err(Error::InvalidGeometry("no microphones".into()));
    }
    let c_count = num_channels(order);
    let scale = 4.0 * PI / i_count as f64;
    let mut weights = Vec::with_capacity(c_count * i_count);
    for c in 0..c_count {
        let (n, m) = sh_degree_order(c);
        for mic in &g.mics {
            weights.push(sph_harmonic(n, m, mic.theta, mic.phi)?.conj() * scale);
        }
    }
    let mut real_weights = Vec::with_capacity(c_count * i_count);
    for c in 0..c_count {
        let (n, m) = sh_degree_order(c);
        let src = n * n + n + m.unsigned_abs() as usize;
        for i in 0..i_count {
            let w = weights[src * i_count + i];
            real_weights.push(if m < 0 { w.im } else { w.re });
        }
    }
    Ok(ShtPlan {
        geometry: g.clone(),
        order,
        weights,
        real_weights,
    })
}
