//! Far-field plane-wave rendering onto microphone arrays, plus additive noise.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{spherical_to_cartesian, ArrayGeometry, SphericalCoord};
use crate::harmonics::quadrature::equal_weight_polar_nodes;
use crate::io::{read_wav, WavAudio};

/// Speed of sound in air at room temperature, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWaveSource {
    /// Polar angle of the arrival direction, `[0, π]`.
    pub theta: f64,
    /// Azimuth of the arrival direction.
    pub phi: f64,
    pub signal: Vec<f64>,
    pub level: f64,
}

impl PlaneWaveSource {
    pub fn new(theta: f64, phi: f64, signal: Vec<f64>, level: f64) -> Result<Self> {
        let dir = SphericalCoord::new(1.0, theta, phi)?;
        if !level.is_finite() {
            return Err(Error::Domain(format!("source level {level} is not finite")));
        }
        if signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("source signal contains non-finite samples".into()));
        }
        Ok(Self {
            theta: dir.theta,
            phi: dir.phi,
            signal,
            level,
        })
    }

    /// Unit vector pointing from the array towards the source.
    pub fn direction(&self) -> [f64; 3] {
        unit_vector(self.theta, self.phi)
    }
}

fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    spherical_to_cartesian(&SphericalCoord { r: 1.0, theta, phi })
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Arrival delay of each microphone relative to the array origin, in seconds.
/// Negative values mean the wavefront reaches the microphone early.
pub fn plane_wave_delays(theta: f64, phi: f64, g: &ArrayGeometry, c: f64) -> Vec<f64> {
    let u = unit_vector(theta, phi);
    g.cartesian().into_iter().map(|x| -dot(u, x) / c).collect()
}

/// Circularly delays `signal` by `delay` samples using a linear phase ramp.
///
/// The buffer length should be odd so that no Nyquist bin exists; the result
/// is then real and has exactly the input energy.
pub fn fractional_delay(signal: &[f64], delay: f64) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        // signed frequency index keeps the ramp conjugate-symmetric
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if n % 2 == 0 && k == n / 2 {
            // Nyquist: only a real factor preserves symmetry
            *v *= (PI * delay).cos();
            continue;
        }
        *v *= Complex64::from_polar(1.0, -TAU * kk * delay / n as f64);
    }
    inv.process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

/// Renders one plane-wave source onto every microphone of `g`.
/// Output is `I × L` with `L` the source length.
pub fn render_plane_wave(
    src: &PlaneWaveSource,
    g: &ArrayGeometry,
    fs: f64,
    c: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(fs > 0.0 && fs.is_finite()) || !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("sample rate {fs} and sound speed {c} must be positive")));
    }
    let len = src.signal.len();
    let delays: Vec<f64> = plane_wave_delays(src.theta, src.phi, g, c)
        .into_iter()
        .map(|t| t * fs)
        .collect();
    let max_shift = delays.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let pad = max_shift.ceil() as usize + 1;
    let mut total = len + 2 * pad;
    if total % 2 == 0 {
        total += 1;
    }
    let mut padded = vec![0.0; total];
    for (dst, s) in padded[pad..pad + len].iter_mut().zip(&src.signal) {
        *dst = s * src.level;
    }
    Ok(delays
        .iter()
        .map(|&d| fractional_delay(&padded, d)[pad..pad + len].to_vec())
        .collect())
}

/// Sum of several rendered sources, zero-padded to the longest.
pub fn render_sources(
    sources: &[PlaneWaveSource],
    g: &ArrayGeometry,
    fs: f64,
    c: f64,
) -> Result<Vec<Vec<f64>>> {
    let len = sources.iter().map(|s| s.signal.len()).max().unwrap_or(0);
    let mut out = vec![vec![0.0; len]; g.num_mics()];
    for src in sources {
        for (acc, ch) in out.iter_mut().zip(render_plane_wave(src, g, fs, c)?) {
            acc.iter_mut().zip(ch).for_each(|(a, v)| *a += v);
        }
    }
    Ok(out)
}

/// Complex pressure of a unit narrowband plane wave at each microphone,
/// `exp(i k u·x)` with `k = 2π f / c`.
pub fn plane_wave_amplitudes(
    theta: f64,
    phi: f64,
    g: &ArrayGeometry,
    freq: f64,
    c: f64,
) -> Vec<Complex64> {
    let k = TAU * freq / c;
    let u = unit_vector(theta, phi);
    g.cartesian()
        .into_iter()
        .map(|x| Complex64::from_polar(1.0, k * dot(u, x)))
        .collect()
}

/// The same field evaluated at a direction on a sphere of radius `r`.
pub fn plane_wave_field(theta_s: f64, phi_s: f64, k: f64, r: f64) -> impl Fn(f64, f64) -> Complex64 {
    let u = unit_vector(theta_s, phi_s);
    move |theta, phi| Complex64::from_polar(1.0, k * r * dot(u, unit_vector(theta, phi)))
}

/// Virtual spherical array whose plain `4π/I` sum integrates products of
/// harmonics exactly up to combined degree `n_theta` (polar) and
/// `n_phi - 1` (azimuth).
///
/// Polar nodes are equal-weight, so only `n_theta ∈ {1..7, 9}` are available.
pub fn virtual_sphere(n_theta: usize, n_phi: usize, radius: f64) -> Result<ArrayGeometry> {
    if n_phi == 0 || !(radius > 0.0) {
        return Err(Error::InvalidGeometry("virtual sphere needs azimuths and a positive radius".into()));
    }
    let nodes = equal_weight_polar_nodes(n_theta)?;
    let mut mics = Vec::with_capacity(n_theta * n_phi);
    for x in nodes {
        let theta = x.clamp(-1.0, 1.0).acos();
        for j in 0..n_phi {
            mics.push(SphericalCoord::new(radius, theta, TAU * j as f64 / n_phi as f64)?);
        }
    }
    Ok(ArrayGeometry {
        name: format!("virtual-sphere-{n_theta}x{n_phi}"),
        mics,
        centroid_referenced: true,
    })
}

fn energy(signal: &[Vec<f64>]) -> f64 {
    signal.iter().flatten().map(|v| v * v).sum()
}

/// Adds seeded Gaussian noise scaled so that the total signal-to-noise power
/// ratio is exactly `snr_db`.
pub fn add_white_noise(signal: &[Vec<f64>], snr_db: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !snr_db.is_finite() {
        return Err(Error::Domain(format!("SNR {snr_db} dB is not finite")));
    }
    let es = energy(signal);
    if !(es > 0.0) {
        return Err(Error::CannotSetSnr);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = signal
        .iter()
        .map(|ch| ch.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let en = energy(&noise);
    if !(en > 0.0) {
        return Err(Error::CannotSetSnr);
    }
    let scale = (es / en / 10f64.powf(snr_db / 10.0)).sqrt();
    Ok(signal
        .iter()
        .zip(noise)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + scale * b).collect())
        .collect())
}

/// One source in a scene file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneSource {
    /// `[polar, azimuth]` in degrees.
    pub direction: [f64; 2],
    pub wav: PathBuf,
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

/// JSON scene description; relative paths resolve against the file's directory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub sources: Vec<SceneSource>,
    pub geometry: PathBuf,
    pub fs: u32,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub speed_of_sound: Option<f64>,
}

impl Scene {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Renders the scene into a multichannel recording.
    pub fn render(&self, base_dir: &Path) -> Result<(ArrayGeometry, WavAudio)> {
        if self.fs == 0 {
            return Err(Error::Config("scene sample rate must be positive".into()));
        }
        let geometry = ArrayGeometry::load(base_dir.join(&self.geometry))?;
        let mut sources = Vec::with_capacity(self.sources.len());
        for s in &self.sources {
            let audio = read_wav(base_dir.join(&s.wav))?;
            if audio.sample_rate != self.fs {
                return Err(Error::Config(format!(
                    "{} is sampled at {} Hz, scene expects {} Hz",
                    s.wav.display(),
                    audio.sample_rate,
                    self.fs
                )));
            }
            if audio.channels.len() != 1 {
                return Err(Error::Config(format!("{} is not mono", s.wav.display())));
            }
            let signal = audio.channels.into_iter().next().unwrap_or_default();
            sources.push(PlaneWaveSource::new(
                s.direction[0].to_radians(),
                s.direction[1].to_radians(),
                signal,
                s.gain,
            )?);
        }
        let c = self.speed_of_sound.unwrap_or(SPEED_OF_SOUND);
        let mut channels = render_sources(&sources, &geometry, self.fs as f64, c)?;
        if let Some(snr) = self.snr_db {
            channels = add_white_noise(&channels, snr, self.seed)?;
        }
        Ok((
            geometry,
            WavAudio {
                sample_rate: self.fs,
                channels,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_geometry, GeometryKind};
    use crate::harmonics::quadrature::{quadrature_sht, QuadratureGrid};
    use crate::harmonics::{build_plan, sh_degree_order};
    use proptest::prelude::*;

    fn chirp(len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let t = i as f64 / 16000.0;
                (TAU * (200.0 + 1500.0 * t) * t).sin() * (-((i as f64 - 400.0) / 150.0).powi(2)).exp()
            })
            .collect()
    }

    #[test]
    fn broadside_is_identical() {
        let g = builtin_geometry(GeometryKind::UniformCircular { count: 6, radius: 0.05 }).unwrap();
        let src = PlaneWaveSource::new(0.0, 0.0, chirp(800), 1.0).unwrap();
        let out = render_plane_wave(&src, &g, 16000.0, SPEED_OF_SOUND).unwrap();
        for ch in &out {
            for (a, b) in ch.iter().zip(&src.signal) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn peak_lag(a: &[f64], b: &[f64], max_lag: i64) -> i64 {
        (-max_lag..=max_lag)
            .max_by(|&x, &y| {
                let xc = |lag: i64| -> f64 {
                    (0..a.len() as i64)
                        .filter_map(|i| {
                            let j = i + lag;
                            (j >= 0 && j < b.len() as i64).then(|| a[i as usize] * b[j as usize])
                        })
                        .sum()
                };
                xc(x).partial_cmp(&xc(y)).unwrap()
            })
            .unwrap()
    }

    #[test]
    fn axial_pair_delay() {
        // spacing chosen so the delay is a whole number of samples
        let fs = 16000.0;
        let d = 4.0 * SPEED_OF_SOUND / fs;
        let g = ArrayGeometry::from_cartesian("pair", &[[0.0, 0.0, d / 2.0], [0.0, 0.0, -d / 2.0]]).unwrap();
        let src = PlaneWaveSource::new(0.0, 0.0, chirp(800), 1.0).unwrap();
        let out = render_plane_wave(&src, &g, fs, SPEED_OF_SOUND).unwrap();
        let delays = plane_wave_delays(0.0, 0.0, &g, SPEED_OF_SOUND);
        assert!((delays[1] - delays[0] - d / SPEED_OF_SOUND).abs() < 1e-15);
        // the lower mic hears the wave 4 samples later
        assert_eq!(peak_lag(&out[0], &out[1], 10), 4);
        for i in 10..790 {
            assert!((out[1][i + 4] - out[0][i]).abs() < 1e-9);
        }
    }

    #[test]
    fn oblique_delays_match_geometry() {
        let g = builtin_geometry(GeometryKind::UniformCircular { count: 8, radius: 0.1 }).unwrap();
        let (theta, phi) = (1.1, 0.7);
        let fs = 16000.0;
        // smooth pulse whose delayed copy can be evaluated in closed form
        let pulse = |t: f64| (-((t - 400.0) / 60.0).powi(2)).exp() * (TAU * 500.0 * t / fs).sin();
        let sig: Vec<f64> = (0..800).map(|i| pulse(i as f64)).collect();
        let src = PlaneWaveSource::new(theta, phi, sig, 0.5).unwrap();
        let out = render_plane_wave(&src, &g, fs, SPEED_OF_SOUND).unwrap();
        for (mic, ch) in g.mics.iter().zip(&out) {
            let x = mic.to_cartesian();
            let u = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let tau = -(u[0] * x[0] + u[1] * x[1] + u[2] * x[2]) / SPEED_OF_SOUND;
            for (i, a) in ch.iter().enumerate() {
                assert!((a - 0.5 * pulse(i as f64 - tau * fs)).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn fractional_delay_preserves_energy(
            sig in proptest::collection::vec(-1.0f64..1.0, 1..200),
            delay in -50.0f64..50.0,
        ) {
            let mut s = sig;
            if s.len() % 2 == 0 {
                s.push(0.0);
            }
            let e_in: f64 = s.iter().map(|v| v * v).sum();
            let out = fractional_delay(&s, delay);
            let e_out: f64 = out.iter().map(|v| v * v).sum();
            prop_assert!((e_out - e_in).abs() <= 1e-9 * e_in.max(1e-300));
        }
    }

    #[test]
    fn integer_delay_is_a_shift() {
        let s: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let out = fractional_delay(&s, 3.0);
        for i in 0..11 {
            assert!((out[(i + 3) % 11] - s[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_snr() {
        let sig: Vec<Vec<f64>> = vec![(0..16000).map(|i| (TAU * 440.0 * i as f64 / 16000.0).sin() * 2f64.sqrt()).collect()];
        for snr in [0.0, 20.0] {
            let noisy = add_white_noise(&sig, snr, 7).unwrap();
            let es = energy(&sig);
            let en: f64 = noisy[0].iter().zip(&sig[0]).map(|(a, b)| (a - b).powi(2)).sum();
            let measured = 10.0 * (es / en).log10();
            assert!((measured - snr).abs() < 0.1, "{measured}");
        }
        assert_eq!(add_white_noise(&sig, 5.0, 3).unwrap(), add_white_noise(&sig, 5.0, 3).unwrap());
        assert_ne!(add_white_noise(&sig, 5.0, 3).unwrap(), add_white_noise(&sig, 5.0, 4).unwrap());
        assert!(matches!(add_white_noise(&[vec![0.0; 10]], 0.0, 0), Err(Error::CannotSetSnr)));
    }

    #[test]
    fn discrete_matches_quadrature_for_plane_wave() {
        let order = 4;
        let (radius, freq) = (0.05, 1000.0);
        let k = TAU * freq / SPEED_OF_SOUND;
        let g = virtual_sphere(9, 16, radius).unwrap();
        assert!(g.num_mics() >= 2 * (order + 1) * (order + 1));
        let plan = build_plan(&g, order).unwrap();
        let (ts, ps) = (1.0, 2.3);
        let discrete = plan.apply_complex(&plane_wave_amplitudes(ts, ps, &g, freq, SPEED_OF_SOUND)).unwrap();
        let exact = quadrature_sht(plane_wave_field(ts, ps, k, radius), order, QuadratureGrid { n_theta: 30, n_phi: 61 }).unwrap();
        for (c, (d, q)) in discrete.iter().zip(&exact).enumerate() {
            assert!((d - q).norm() < 0.01 * q.norm(), "channel {c}: {d} vs {q}");
        }
    }

    #[test]
    fn azimuth_rotation_steers_phase() {
        let order = 4;
        let g = virtual_sphere(9, 32, 0.1).unwrap();
        let plan = build_plan(&g, order).unwrap();
        let (ts, ps, dphi) = (0.8, 0.4, 1.234);
        let a = plan.apply_complex(&plane_wave_amplitudes(ts, ps, &g, 2000.0, SPEED_OF_SOUND)).unwrap();
        let b = plan.apply_complex(&plane_wave_amplitudes(ts, ps + dphi, &g, 2000.0, SPEED_OF_SOUND)).unwrap();
        for (c, (x, y)) in a.iter().zip(&b).enumerate() {
            let (_, m) = sh_degree_order(c);
            let want = x * Complex64::from_polar(1.0, -(m as f64) * dphi);
            assert!((y - want).norm() < 1e-6, "channel {c}");
        }
    }

    #[test]
    fn virtual_sphere_rejects_missing_rule() {
        assert!(virtual_sphere(8, 10, 1.0).is_err());
        assert!(virtual_sphere(9, 0, 1.0).is_err());
    }
}
