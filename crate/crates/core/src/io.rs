//! File formats crossing the CLI boundary: multichannel WAV and `SHT1` tensors.
//!
//! `SHT1` layout (little-endian):
//!
//! ```text
//! b"SHT1" | u32 rank | u32 dims[rank] | u8 dtype (0 = f32) | f32 payload, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SHT1_MAGIC: &[u8; 4] = b"SHT1";
pub const SHT1_DTYPE_F32: u8 = 0;
const SHT1_MAX_RANK: u32 = 16;

pub fn write_sht1<W: Write>(mut w: W, tensor: &Tensor) -> Result<()> {
    w.write_all(SHT1_MAGIC)?;
    w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &d in tensor.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::TensorFormat(format!("dimension {d} does not fit in u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[SHT1_DTYPE_F32])?;
    let mut payload = Vec::with_capacity(tensor.len() * 4);
    for &v in tensor.data() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_sht1<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_sht1(&bytes)
}

pub fn parse_sht1(bytes: &[u8]) -> Result<Tensor> {
    let err = |msg: &str| Error::TensorFormat(msg.to_string());
    if bytes.len() < 9 || &bytes[..4] != SHT1_MAGIC {
        return Err(err("missing SHT1 magic"));
    }
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| err("truncated header"))
    };
    let rank = u32_at(4)?;
    if rank > SHT1_MAX_RANK {
        return Err(err("unreasonable tensor rank"));
    }
    let dims: Vec<usize> = (0..rank as usize)
        .map(|k| u32_at(8 + 4 * k).map(|d| d as usize))
        .collect::<Result<_>>()?;
    let dtype_off = 8 + 4 * rank as usize;
    let dtype = *bytes.get(dtype_off).ok_or_else(|| err("truncated header"))?;
    if dtype != SHT1_DTYPE_F32 {
        return Err(Error::TensorFormat(format!("unsupported dtype code {dtype}")));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err("tensor size overflows"))?;
    let payload = &bytes[dtype_off + 1..];
    if payload.len() != count.checked_mul(4).ok_or_else(|| err("tensor size overflows"))? {
        return Err(Error::TensorFormat(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(dims, data)
}

pub fn save_sht1(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_sht1(&mut buf, tensor)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_sht1(path: impl AsRef<Path>) -> Result<Tensor> {
    parse_sht1(&std::fs::read(path)?)
}

/// Deinterleaved audio; `channels[i]` is microphone `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WavAudio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

/// Reads integer PCM (scaled to `[-1, 1)`) or IEEE float WAV files.
pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, v) in channels.iter_mut().zip(frame) {
            ch.push(*v);
        }
    }
    Ok(WavAudio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavSampleFormat {
    Pcm16,
    Float32,
}

pub fn write_wav(path: impl AsRef<Path>, audio: &WavAudio, format: WavSampleFormat) -> Result<()> {
    let n_ch = audio.channels.len();
    if n_ch == 0 || n_ch > u16::MAX as usize {
        return Err(Error::Shape(format!("cannot write {n_ch} channels")));
    }
    let len = audio.channels[0].len();
    if audio.channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    let spec = hound::WavSpec {
        channels: n_ch as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: match format {
            WavSampleFormat::Pcm16 => 16,
            WavSampleFormat::Float32 => 32,
        },
        sample_format: match format {
            WavSampleFormat::Pcm16 => hound::SampleFormat::Int,
            WavSampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for t in 0..len {
        for ch in &audio.channels {
            match format {
                WavSampleFormat::Float32 => writer.write_sample(ch[t] as f32)?,
                WavSampleFormat::Pcm16 => {
                    let v = (ch[t] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v)?
                }
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
