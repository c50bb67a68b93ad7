//! Waveforms to spherical harmonic magnitude spectra, random microphone subset
//! augmentation, and streaming chunk segmentation.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{subset_geometry, ArrayGeometry};
use crate::harmonics::{build_plan, ShtPlan};
use crate::stft::{magnitude_tensor, MagnitudeTensor, Spectrogram, Stft, StftConfig};

fn check_multichannel(wavs: &[Vec<f64>], expected: usize) -> Result<usize> {
    if wavs.len() != expected {
        return Err(Error::Shape(format!(
            "signal has {} channels, geometry has {expected} microphones",
            wavs.len()
        )));
    }
    let len = wavs.first().map_or(0, Vec::len);
    if wavs.iter().any(|w| w.len() != len) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    if wavs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain("non-finite input sample".into()));
    }
    Ok(len)
}

/// Mixes `I × L` microphone signals into `C × L` real-packed spherical
/// harmonic signals. The weights are frequency independent, so the mixing is
/// applied sample by sample in the time domain.
pub fn sht_transform(wavs: &[Vec<f64>], plan: &ShtPlan) -> Result<Vec<Vec<f64>>> {
    let i_count = plan.num_mics();
    let len = check_multichannel(wavs, i_count)?;
    let weights = plan.real_weights();
    Ok(weights
        .par_chunks_exact(i_count)
        .map(|row| {
            let mut out = vec![0.0; len];
            for (w, x) in row.iter().zip(wavs) {
                // exact-zero rows (equatorial nulls) stay +0.0
                if *w == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(x) {
                    *o += w * v;
                }
            }
            out
        })
        .collect())
}

/// Applies the plan's real weights bin by bin to per-microphone spectra.
pub fn spectral_mix(spectra: &[Spectrogram], plan: &ShtPlan) -> Result<Vec<Spectrogram>> {
    let i_count = plan.num_mics();
    if spectra.len() != i_count {
        return Err(Error::Shape(format!(
            "{} spectra for {i_count} microphones",
            spectra.len()
        )));
    }
    let (frames, bins) = (spectra[0].frames, spectra[0].bins);
    if spectra.iter().any(|s| s.frames != frames || s.bins != bins) {
        return Err(Error::Shape("spectrograms differ in shape".into()));
    }
    Ok(plan
        .real_weights()
        .chunks_exact(i_count)
        .map(|row| {
            let mut data = vec![num_complex::Complex64::new(0.0, 0.0); frames * bins];
            for (w, s) in row.iter().zip(spectra) {
                for (o, v) in data.iter_mut().zip(&s.data) {
                    *o += v * *w;
                }
            }
            Spectrogram { frames, bins, data }
        })
        .collect())
}

/// SHT mixing, per-channel STFT and magnitude extraction with a prepared plan.
pub fn frontend_with_plan(
    wavs: &[Vec<f64>],
    plan: &ShtPlan,
    cfg: &StftConfig,
) -> Result<MagnitudeTensor> {
    let sh = sht_transform(wavs, plan)?;
    let analyzer = Stft::new(*cfg)?;
    let spectra = sh
        .par_iter()
        .map(|x| analyzer.process(x))
        .collect::<Result<Vec<_>>>()?;
    magnitude_tensor(&spectra)
}

/// Waveforms `I × L` to the magnitude tensor `(N+1)² × T × F`.
pub fn frontend(
    wavs: &[Vec<f64>],
    geometry: &ArrayGeometry,
    order: usize,
    cfg: &StftConfig,
) -> Result<MagnitudeTensor> {
    let plan = build_plan(geometry, order)?;
    frontend_with_plan(wavs, &plan, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandShtPolicy {
    pub min_channels: usize,
    /// `None` means all microphones.
    pub max_channels: Option<usize>,
    pub seed: u64,
}

impl Default for RandShtPolicy {
    fn default() -> Self {
        Self {
            min_channels: 2,
            max_channels: None,
            seed: 0,
        }
    }
}

impl RandShtPolicy {
    fn bounds(&self, mics: usize) -> Result<(usize, usize)> {
        if mics < 2 {
            return Err(Error::CannotSubset(mics));
        }
        let max = self.max_channels.unwrap_or(mics);
        if !(2 <= self.min_channels && self.min_channels <= max && max <= mics) {
            return Err(Error::Config(format!(
                "subset bounds must satisfy 2 <= {} <= {max} <= {mics}",
                self.min_channels
            )));
        }
        Ok((self.min_channels, max))
    }
}

/// One random-subset draw: the selected channel indices (ascending), their
/// signals, the re-referenced geometry and its freshly built plan.
#[derive(Clone, Debug)]
pub struct RandShtDraw {
    pub indices: Vec<usize>,
    pub wavs: Vec<Vec<f64>>,
    pub geometry: ArrayGeometry,
    pub plan: ShtPlan,
}

/// Seeded stream of random microphone subsets.
pub struct RandSht {
    policy: RandShtPolicy,
    rng: ChaCha8Rng,
}

impl RandSht {
    pub fn new(policy: RandShtPolicy) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            policy,
        }
    }

    /// Draws only the index set: size uniform in the policy bounds, members
    /// uniform without replacement, returned ascending.
    pub fn draw_indices(&mut self, mics: usize) -> Result<Vec<usize>> {
        let (lo, hi) = self.policy.bounds(mics)?;
        let k = self.rng.random_range(lo..=hi);
        let mut idx = rand::seq::index::sample(&mut self.rng, mics, k).into_vec();
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn draw(
        &mut self,
        wavs: &[Vec<f64>],
        geometry: &ArrayGeometry,
        order: usize,
    ) -> Result<RandShtDraw> {
        check_multichannel(wavs, geometry.num_mics())?;
        let indices = self.draw_indices(geometry.num_mics())?;
        let sub = subset_geometry(geometry, &indices)?;
        let plan = build_plan(&sub, order)?;
        Ok(RandShtDraw {
            wavs: indices.iter().map(|&i| wavs[i].clone()).collect(),
            indices,
            geometry: sub,
            plan,
        })
    }
}

pub fn rand_sht_select(
    wavs: &[Vec<f64>],
    geometry: &ArrayGeometry,
    order: usize,
    policy: RandShtPolicy,
) -> Result<RandShtDraw> {
    RandSht::new(policy).draw(wavs, geometry, order)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_ms: f64,
    pub left_ms: f64,
    pub right_ms: f64,
    /// Range from which training-mode chunk durations are drawn.
    pub jitter_ms: (f64, f64),
    /// Probability that a training-mode chunk keeps its right context.
    pub right_context_prob: f64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            chunk_ms: 400.0,
            left_ms: 800.0,
            right_ms: 400.0,
            jitter_ms: (350.0, 450.0),
            right_context_prob: 0.5,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.jitter_ms;
        if !(self.chunk_ms > 0.0 && self.left_ms > 0.0 && self.right_ms > 0.0 && lo > 0.0) {
            return Err(Error::Config("chunk durations must be positive".into()));
        }
        if !(lo <= self.chunk_ms && self.chunk_ms <= hi) {
            return Err(Error::Config(format!(
                "jitter range [{lo}, {hi}] ms must contain the chunk size {} ms",
                self.chunk_ms
            )));
        }
        if !(0.0..=1.0).contains(&self.right_context_prob) {
            return Err(Error::Config("right-context probability outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkMode {
    /// Fixed chunk size, no right context.
    Test,
    /// Jittered chunk sizes, right context kept at random.
    Train { seed: u64 },
}

/// Index ranges of one streaming chunk and its contexts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkSegment {
    pub left: Range<usize>,
    pub chunk: Range<usize>,
    pub right: Range<usize>,
}

/// Tiles `len` units (samples, or frames) sampled at `rate` units per second
/// into consecutive chunks.
///
/// Chunks cover `0..len` without gaps or overlap. The final chunk holds the
/// remainder and may be shorter than the nominal (or minimum jittered) size.
/// Left context is truncated at the stream start; right context at the end.
pub fn split_chunks(
    len: usize,
    rate: f64,
    cfg: &ChunkConfig,
    mode: ChunkMode,
) -> Result<Vec<ChunkSegment>> {
    cfg.validate()?;
    if !(rate > 0.0) {
        return Err(Error::Config(format!("unit rate must be positive, got {rate}")));
    }
    let units = |ms: f64| ((ms * rate / 1000.0).round() as usize).max(1);
    let left_len = units(cfg.left_ms);
    let right_len = units(cfg.right_ms);
    let (jit_lo, jit_hi) = (units(cfg.jitter_ms.0), units(cfg.jitter_ms.1));
    let mut rng = match mode {
        ChunkMode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ChunkMode::Test => None,
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let size = match rng.as_mut() {
            Some(r) => r.random_range(jit_lo..=jit_hi),
            None => units(cfg.chunk_ms),
        };
        let end = (start + size).min(len);
        let keep_right = match rng.as_mut() {
            Some(r) => r.random_bool(cfg.right_context_prob),
            None => false,
        };
        let right = if keep_right {
            end..(end + right_len).min(len)
        } else {
            end..end
        };
        out.push(ChunkSegment {
            left: start.saturating_sub(left_len)..start,
            chunk: start..end,
            right,
        });
        start = end;
    }
    Ok(out)
}
