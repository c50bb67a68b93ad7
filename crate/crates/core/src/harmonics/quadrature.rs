//! Sphere quadrature: Gauss–Legendre in `cos θ` times a uniform azimuth grid,
//! plus the equal-weight (Chebyshev) polar nodes used to build virtual arrays
//! on which the plain `4π/I` sum is exact.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{num_channels, sh_degree_order, sph_harmonic};
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes `x_1..x_n` in `[-1, 1]` for which `(2/n) Σ f(x_i)` integrates
/// polynomials up to degree `n` exactly (degree `n + 1` for even `n`).
///
/// Real nodes exist only for `n ∈ {1, …, 7, 9}`; other sizes are rejected.
pub fn equal_weight_polar_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 || n == 8 || n > 9 {
        return Err(Error::Domain(format!(
            "equal-weight polar rule with {n} nodes has no real solution"
        )));
    }
    // power sums of the nodes: Σ x^k = n/(k+1) for even k, 0 for odd k
    let power_sum = |k: usize| if k % 2 == 0 { n as f64 / (k + 1) as f64 } else { 0.0 };
    // Newton's identities → elementary symmetric polynomials
    let mut e = vec![1.0; n + 1];
    for k in 1..=n {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * power_sum(i);
        }
        e[k] = acc / k as f64;
    }
    // monic node polynomial, coefficients from highest power down
    let coeffs: Vec<f64> = (0..=n)
        .map(|k| if k % 2 == 0 { e[k] } else { -e[k] })
        .collect();
    let eval = |x: f64| coeffs.iter().fold(0.0, |acc, c| acc * x + c);
    let deriv = |x: f64| {
        coeffs[..n]
            .iter()
            .enumerate()
            .fold(0.0, |acc, (k, c)| acc * x + c * (n - k) as f64)
    };

    let steps = 20_000;
    let mut roots = Vec::with_capacity(n);
    let mut prev_x = -1.0;
    let mut prev_v = eval(prev_x);
    for s in 1..=steps {
        let x = -1.0 + 2.0 * s as f64 / steps as f64;
        let v = eval(x);
        if v == 0.0 {
            roots.push(x);
        } else if prev_v != 0.0 && v.signum() != prev_v.signum() {
            let (mut lo, mut hi) = (prev_x, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if eval(mid).signum() == eval(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut r = 0.5 * (lo + hi);
            for _ in 0..3 {
                let d = deriv(r);
                if d != 0.0 {
                    r -= eval(r) / d;
                }
            }
            roots.push(r);
        }
        prev_x = x;
        prev_v = v;
    }
    if roots.len() != n {
        return Err(Error::Domain(format!(
            "found {} of {n} equal-weight nodes",
            roots.len()
        )));
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let a = 0.5 * (roots[n - 1 - i] - roots[i]);
        roots[i] = -a;
        roots[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        roots[n / 2] = 0.0;
    }
    Ok(roots)
}

/// Product grid of `n_theta` Gauss–Legendre nodes in `cos θ` and `n_phi`
/// uniformly spaced azimuths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl QuadratureGrid {
    /// Smallest grid integrating products of order-`order` harmonics exactly.
    pub fn minimal(order: usize) -> Self {
        Self {
            n_theta: order + 1,
            n_phi: 2 * order + 1,
        }
    }

    /// `(theta, phi, weight)` triples; the weights sum to 4π.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let (nodes, weights) = gauss_legendre(self.n_theta);
        let dphi = TAU / self.n_phi as f64;
        let mut out = Vec::with_capacity(self.n_theta * self.n_phi);
        for (x, w) in nodes.iter().zip(&weights) {
            let theta = x.clamp(-1.0, 1.0).acos();
            for k in 0..self.n_phi {
                out.push((theta, k as f64 * dphi, w * dphi));
            }
        }
        out
    }
}

/// Numerical `∫∫ field · conj(Y_n^m) sin θ dθ dφ` for every `(n, m)` up to
/// `order`, in flat channel order. Exact when `field` is band-limited to the
/// grid's resolution minus `order`.
pub fn quadrature_sht<F>(field: F, order: usize, grid: QuadratureGrid) -> Result<Vec<Complex64>>
where
    F: Fn(f64, f64) -> Complex64,
{
    let need = QuadratureGrid::minimal(order);
    if grid.n_theta < need.n_theta || grid.n_phi < need.n_phi {
        return Err(Error::InsufficientResolution(format!(
            "order {order} needs at least {}x{} nodes, got {}x{}",
            need.n_theta, need.n_phi, grid.n_theta, grid.n_phi
        )));
    }
    let channels = num_channels(order);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); channels];
    for (theta, phi, w) in grid.points() {
        let f = field(theta, phi) * w;
        for (c, acc) in coeffs.iter_mut().enumerate() {
            let (n, m) = sh_degree_order(c);
            *acc += f * sph_harmonic(n, m, theta, phi)?.conj();
        }
    }
    Ok(coeffs)
}
