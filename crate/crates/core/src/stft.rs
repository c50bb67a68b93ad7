//! Framing and one-sided spectra.
//!
//! Frames start at sample 0 with no centering or padding, so a signal of `L`
//! samples yields `1 + (L - frame_len) / hop` frames. Each frame is windowed,
//! zero-padded at the end to `fft_size`, and transformed.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `0.5 - 0.5 cos(2πn / N)`, `n = 0..N`.
    PeriodicHann,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 16 kHz, 25 ms frames, 10 ms hop, 512-point FFT, periodic Hann.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_size: 512,
            frame_len: 400,
            hop: 160,
            window: WindowKind::PeriodicHann,
        }
    }
}

impl StftConfig {
    /// 25 ms / 10 ms framing at an arbitrary rate with the next power-of-two FFT.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let frame_len = ((sample_rate as u64 * 25).div_ceil(1000)) as usize;
        let hop = ((sample_rate as u64 * 10).div_ceil(1000)) as usize;
        Self {
            sample_rate,
            fft_size: frame_len.next_power_of_two(),
            frame_len,
            hop,
            window: WindowKind::PeriodicHann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.fft_size == 0 || self.frame_len == 0 || self.hop == 0 {
            return Err(Error::Config(format!("STFT parameters must be positive: {self:?}")));
        }
        if self.frame_len > self.fft_size {
            return Err(Error::Config(format!(
                "frame length {} exceeds FFT size {}",
                self.frame_len, self.fft_size
            )));
        }
        if self.hop > self.frame_len {
            return Err(Error::Config(format!(
                "hop {} exceeds frame length {}",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples, or `None` if shorter than a frame.
    pub fn num_frames(&self, len: usize) -> Option<usize> {
        (len >= self.frame_len).then(|| 1 + (len - self.frame_len) / self.hop)
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.frame_len;
        match self.window {
            WindowKind::PeriodicHann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; n],
        }
    }
}

/// Complex one-sided spectrogram of one channel, row-major `T × F`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn at(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }
}

/// Reusable analyzer holding the window and the FFT plan.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            window: cfg.window(),
            cfg,
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn process(&self, signal: &[f64]) -> Result<Spectrogram> {
        let frames = self.cfg.num_frames(signal.len()).ok_or(Error::TooShort {
            len: signal.len(),
            frame_len: self.cfg.frame_len,
        })?;
        let bins = self.cfg.num_bins();
        let n = self.cfg.fft_size;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut data = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            let start = t * self.cfg.hop;
            let frame = &signal[start..start + self.cfg.frame_len];
            for (b, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex64::new(x * w, 0.0);
            }
            buf[self.cfg.frame_len..].fill(Complex64::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(Spectrogram { frames, bins, data })
    }
}

pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.process(signal)
}

/// Magnitudes `A[c, t, f] = |P_c(t, f)|`, row-major `C × T × F`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeTensor {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl MagnitudeTensor {
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.frames, self.bins]
    }

    pub fn at(&self, c: usize, t: usize, f: usize) -> f64 {
        self.data[(c * self.frames + t) * self.bins + f]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.frames * self.bins;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::new(vec![self.channels, self.frames, self.bins], self.data)
            .expect("magnitude tensor shape is consistent by construction")
    }
}

pub fn magnitude_tensor(spectra: &[Spectrogram]) -> Result<MagnitudeTensor> {
    let (frames, bins) = spectra
        .first()
        .map(|s| (s.frames, s.bins))
        .unwrap_or((0, 0));
    if spectra
        .iter()
        .any(|s| s.frames != frames || s.bins != bins || s.data.len() != frames * bins)
    {
        return Err(Error::Shape("spectrograms differ in shape".into()));
    }
    let data = spectra
        .iter()
        .flat_map(|s| s.data.iter().map(|z| z.norm()))
        .collect();
    Ok(MagnitudeTensor {
        channels: spectra.len(),
        frames,
        bins,
        data,
    })
}
