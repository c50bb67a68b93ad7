//! Analytic FLOP and parameter accounting.
//!
//! Counting conventions: a multiply-accumulate is 2 FLOPs, an `n`-point FFT is
//! `5 n log2 n` FLOPs, other elementwise arithmetic is 1 FLOP per operation and
//! a transcendental (exp, log, sqrt-based normalizer, sigmoid, tanh) is 4 FLOPs.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::num_channels;
use crate::ssafn::SsafnConfig;
use crate::stft::StftConfig;

pub const FLOPS_PER_MAC: u64 = 2;
pub const FLOPS_PER_TRANSCENDENTAL: u64 = 4;

/// Machine-readable statement of the conventions above.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Conventions {
    pub flops_per_mac: u64,
    pub fft: String,
    pub elementwise: String,
    pub flops_per_transcendental: u64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            flops_per_mac: FLOPS_PER_MAC,
            fft: "5*n*log2(n) per n-point complex FFT".into(),
            elementwise: "1 FLOP per add/mul/compare".into(),
            flops_per_transcendental: FLOPS_PER_TRANSCENDENTAL,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    pub flops: u64,
    pub params: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CostModel {
    pub model: String,
    pub layers: Vec<LayerCost>,
}

impl CostModel {
    fn new(model: &str) -> Self {
        Self {
            model: model.into(),
            layers: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, kind: &str, flops: u64, params: u64) {
        self.layers.push(LayerCost {
            name: name.into(),
            kind: kind.into(),
            flops,
            params,
        });
    }

    pub fn total_flops(&self) -> u64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn flops_of(&self, prefix: &str) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.name.starts_with(prefix))
            .map(|l| l.flops)
            .sum()
    }

    pub fn params_of(&self, prefix: &str) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.name.starts_with(prefix))
            .map(|l| l.params)
            .sum()
    }
}

/// Everything that determines the cost of the SHT pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mics: usize,
    pub order: usize,
    pub stft: StftConfig,
    pub ssafn: SsafnConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mics: 8,
            order: 4,
            stft: StftConfig::default(),
            ssafn: SsafnConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.ssafn.validate()?;
        if self.mics == 0 {
            return Err(Error::Config("pipeline needs at least one microphone".into()));
        }
        if num_channels(self.order) != self.ssafn.channels {
            return Err(Error::Config(format!(
                "order {} gives {} channels, network expects {}",
                self.order,
                num_channels(self.order),
                self.ssafn.channels
            )));
        }
        if self.stft.num_bins() != self.ssafn.bins {
            return Err(Error::Config(format!(
                "STFT gives {} bins, network expects {}",
                self.stft.num_bins(),
                self.ssafn.bins
            )));
        }
        Ok(())
    }
}

fn check_seconds(seconds: f64) -> Result<()> {
    if !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(Error::Domain(format!("input duration {seconds} s is invalid")));
    }
    Ok(())
}

fn samples(seconds: f64, rate: u32) -> u64 {
    (seconds * rate as f64).round() as u64
}

fn frames(len: u64, stft: &StftConfig) -> u64 {
    stft.num_frames(len as usize).unwrap_or(0) as u64
}

fn fft_flops(n: usize) -> u64 {
    (5.0 * n as f64 * (n as f64).log2()).round() as u64
}

/// Dense layer on `rows` inputs: MACs, bias adds and an optional activation.
fn dense(rows: u64, input: u64, output: u64, activation: u64) -> (u64, u64) {
    let flops = rows * output * (FLOPS_PER_MAC * input + 1 + activation);
    (flops, input * output + output)
}

/// Per-layer cost of the SHT mixing, STFT and network for `seconds` of audio.
pub fn shtnet_cost(seconds: f64, cfg: &PipelineConfig) -> Result<CostModel> {
    check_seconds(seconds)?;
    cfg.validate()?;
    let n = &cfg.ssafn;
    let (c, f) = (n.channels as u64, n.bins as u64);
    let cr = n.reduced_channels() as u64;
    let i = cfg.mics as u64;
    let l = samples(seconds, cfg.stft.sample_rate);
    let t = frames(l, &cfg.stft);
    let ctf = c * t * f;
    let tf = t * f;
    let tr = FLOPS_PER_TRANSCENDENTAL;

    let mut m = CostModel::new("shtnet");
    m.push("sht.mixing", "matmul", FLOPS_PER_MAC * c * i * l, 0);
    m.push(
        "stft",
        "fft",
        c * t * (cfg.stft.frame_len as u64 + fft_flops(cfg.stft.fft_size)),
        0,
    );
    // |z| = sqrt(re² + im²)
    m.push("stft.magnitude", "elementwise", ctf * (3 + tr), 0);

    if n.use_joint_attention {
        for block in 0..2 {
            for inner in 0..2 {
                let k = n.cbam_kernels[2 * block + inner] as u64;
                let p = format!("joint{block}.cbam{inner}");
                let (fc1, fc1_p) = dense(1, c, cr, 1);
                let (fc2, fc2_p) = dense(1, cr, c, tr);
                m.push(format!("{p}.channel"), "mlp", ctf + fc1 + fc2 + ctf, fc1_p + fc2_p);
                let conv = tf * (FLOPS_PER_MAC * 2 * k * k + 1 + tr);
                m.push(format!("{p}.spatial"), "conv2d", 2 * ctf + conv + ctf, 2 * k * k + 1);
            }
            let p = format!("joint{block}.coord");
            let (reduce, reduce_p) = dense(t + f, c, cr, tr);
            let (time, time_p) = dense(t, cr, c, tr);
            let (freq, freq_p) = dense(f, cr, c, tr);
            m.push(
                p,
                "coord-attention",
                2 * ctf + reduce + time + freq + 2 * ctf,
                reduce_p + time_p + freq_p,
            );
            m.push(format!("joint{block}.residual"), "elementwise", 3 * ctf, 0);
        }
    }

    if n.use_rsacc {
        let e = n.embed_dim as u64;
        m.push("rsacc.normalize", "elementwise", ctf * tr + 6 * ctf, 0);
        let (proj, proj_p) = dense(c * t, f, 2 * e + 1, 0);
        m.push("rsacc.projection", "matmul", proj, proj_p);
        let attn = t * c * c * (FLOPS_PER_MAC * e + 1 + tr + 2 + FLOPS_PER_MAC);
        m.push("rsacc.attention", "attention", attn, 0);
        m.push("rsacc.combine", "matmul", FLOPS_PER_MAC * ctf, 0);
    } else {
        m.push("combine.mean", "elementwise", ctf + tf, 0);
    }

    if n.use_mhsa {
        let d = n.attn_dim as u64;
        let h = n.heads as u64;
        let dh = d / h;
        let (qkv, qkv_p) = dense(t, f, 3 * d, 0);
        m.push("mhsa.projection", "matmul", qkv, qkv_p);
        let attn = h * t * t * (2 * FLOPS_PER_MAC * dh + 1 + tr + 2);
        m.push("mhsa.attention", "attention", attn, 0);
        let (out, out_p) = dense(t, d, f, 0);
        m.push("mhsa.out", "matmul", out, out_p);
        let (ffn1, ffn1_p) = dense(t, f, n.ffn_dim as u64, 1);
        let (ffn2, ffn2_p) = dense(t, n.ffn_dim as u64, f, tr);
        m.push("mhsa.ffn", "mlp", ffn1 + ffn2 + tf, ffn1_p + ffn2_p);
    }
    Ok(m)
}

/// Total FLOPs of the SHT pipeline for `seconds` of input.
pub fn flops_shtnet(seconds: f64, cfg: &PipelineConfig) -> Result<u64> {
    Ok(shtnet_cost(seconds, cfg)?.total_flops())
}

/// Mask-estimating BLSTM baseline with per-layer projections, applied
/// independently to every microphone and followed by MVDR beamforming.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlstmConfig {
    pub layers: usize,
    pub hidden: usize,
    pub projection: usize,
    pub mics: usize,
    pub stft: StftConfig,
    /// Number of mask heads (speech and noise).
    pub masks: usize,
}

impl Default for BlstmConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 320,
            projection: 320,
            mics: 8,
            stft: StftConfig::default(),
            masks: 2,
        }
    }
}

pub fn blstm_cost(seconds: f64, cfg: &BlstmConfig) -> Result<CostModel> {
    check_seconds(seconds)?;
    cfg.stft.validate()?;
    let h = cfg.hidden as u64;
    let f = cfg.stft.num_bins() as u64;
    let i = cfg.mics as u64;
    let l = samples(seconds, cfg.stft.sample_rate);
    let t = frames(l, &cfg.stft);
    let tr = FLOPS_PER_TRANSCENDENTAL;
    // complex multiply-accumulate
    let cmac = 8;

    let mut m = CostModel::new("blstm");
    m.push("stft", "fft", i * t * (cfg.stft.frame_len as u64 + fft_flops(cfg.stft.fft_size)), 0);
    m.push("stft.magnitude", "elementwise", i * t * f * (3 + tr), 0);
    let mut input = f;
    for layer in 0..cfg.layers {
        // four gates, two bias vectors per direction
        let params = 2 * (4 * h * (input + h) + 8 * h);
        // 4h(in+h) MACs, bias adds, 3 sigmoids + 2 tanh, 4 elementwise cell ops
        let per_step = FLOPS_PER_MAC * 4 * h * (input + h) + 8 * h + 5 * tr * h + 4 * h;
        m.push(format!("blstm{layer}"), "lstm", i * 2 * t * per_step, params);
        let (proj, proj_p) = dense(t, 2 * h, cfg.projection as u64, tr);
        m.push(format!("blstm{layer}.projection"), "matmul", i * proj, proj_p);
        input = cfg.projection as u64;
    }
    let (mask, mask_p) = dense(t, input, f, tr);
    m.push("masks", "matmul", i * cfg.masks as u64 * mask, cfg.masks as u64 * mask_p);
    // speech and noise covariances, inverse + filter per bin, filter application
    m.push("mvdr.covariance", "matmul", 2 * t * f * i * i * cmac, 0);
    m.push("mvdr.solve", "matmul", f * (i * i * i + 2 * i * i) * cmac, 0);
    m.push("mvdr.apply", "matmul", t * f * i * cmac, 0);
    Ok(m)
}

pub fn flops_blstm_baseline(seconds: f64) -> Result<u64> {
    Ok(blstm_cost(seconds, &BlstmConfig::default())?.total_flops())
}

/// `1 - shtnet / baseline` at the given duration.
pub fn flop_reduction(seconds: f64, cfg: &PipelineConfig, baseline: &BlstmConfig) -> Result<f64> {
    let ours = shtnet_cost(seconds, cfg)?.total_flops() as f64;
    let theirs = blstm_cost(seconds, baseline)?.total_flops() as f64;
    if theirs == 0.0 {
        return Err(Error::Domain("baseline cost is zero at this duration".into()));
    }
    Ok(1.0 - ours / theirs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Shtnet,
    Blstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Shtnet => "shtnet",
            ModelKind::Blstm => "blstm",
        }
    }

    pub fn cost(self, seconds: f64) -> Result<CostModel> {
        match self {
            ModelKind::Shtnet => shtnet_cost(seconds, &PipelineConfig::default()),
            ModelKind::Blstm => blstm_cost(seconds, &BlstmConfig::default()),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shtnet" => Ok(ModelKind::Shtnet),
            "blstm" => Ok(ModelKind::Blstm),
            other => Err(Error::Config(format!("unknown model {other:?}; expected shtnet or blstm"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub model: String,
    pub seconds: f64,
    pub gflops: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CostCurve {
    pub conventions: Conventions,
    pub points: Vec<CurvePoint>,
}

/// GFLOPs of every model at every duration, model-major.
pub fn emit_cost_curve(seconds: &[f64], models: &[ModelKind]) -> Result<CostCurve> {
    let mut points = Vec::with_capacity(seconds.len() * models.len());
    for &model in models {
        for &s in seconds {
            points.push(CurvePoint {
                model: model.name().into(),
                seconds: s,
                gflops: model.cost(s)?.total_flops() as f64 / 1e9,
            });
        }
    }
    Ok(CostCurve {
        conventions: Conventions::default(),
        points,
    })
}

impl CostCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,seconds,gflops\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{:.6}", p.model, p.seconds, p.gflops);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
