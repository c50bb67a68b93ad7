//! Forward passes of the individual attention stages on `C × T × F` tensors.
//!
//! Linear weights are stored `in × out` and applied as `y = x W + b`.

use rayon::prelude::*;

use super::ops::{gemm_strided, hard_swish, linear, relu, sigmoid, softmax_in_place};
use super::SsafnWeights;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor added before the logarithm in the channel combinator.
pub const LOG_FLOOR: f64 = 1e-8;
/// Variance floor of the mean-variance normalization.
pub const MVN_FLOOR: f64 = 1e-8;

fn dims3(a: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    a.expect_rank(what, 3)?;
    Ok((a.shape()[0], a.shape()[1], a.shape()[2]))
}

fn expect_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{what}: expected {n} values, got {}", v.len())));
    }
    Ok(())
}

/// Parameters of one CBAM instance.
#[derive(Clone, Copy, Debug)]
pub struct CbamParams<'a> {
    /// `C × C_r`
    pub fc1_w: &'a [f64],
    pub fc1_b: &'a [f64],
    /// `C_r × C`
    pub fc2_w: &'a [f64],
    pub fc2_b: &'a [f64],
    /// `2 × k × k`; plane 0 sees the channel mean, plane 1 the channel max.
    pub conv_w: &'a [f64],
    pub conv_b: f64,
    pub kernel: usize,
}

impl<'a> CbamParams<'a> {
    pub fn from_weights(w: &'a SsafnWeights, block: usize, inner: usize) -> Self {
        let p = format!("joint{block}.cbam{inner}");
        Self {
            fc1_w: w.get(&format!("{p}.fc1.weight")),
            fc1_b: w.get(&format!("{p}.fc1.bias")),
            fc2_w: w.get(&format!("{p}.fc2.weight")),
            fc2_b: w.get(&format!("{p}.fc2.bias")),
            conv_w: w.get(&format!("{p}.conv.weight")),
            conv_b: w.get(&format!("{p}.conv.bias"))[0],
            kernel: w.config().cbam_kernels[2 * block + inner],
        }
    }

    fn check(&self, c: usize) -> Result<usize> {
        let cr = self.fc1_b.len();
        expect_len("cbam fc1 weight", self.fc1_w, c * cr)?;
        expect_len("cbam fc2 weight", self.fc2_w, cr * c)?;
        expect_len("cbam fc2 bias", self.fc2_b, c)?;
        if self.kernel % 2 == 0 {
            return Err(Error::Shape(format!("cbam kernel {} is not odd", self.kernel)));
        }
        expect_len("cbam conv weight", self.conv_w, 2 * self.kernel * self.kernel)?;
        Ok(cr)
    }
}

/// Per-channel gates from global average pooling through the reduction MLP.
pub fn cbam_channel_gates(a: &Tensor, p: &CbamParams) -> Result<Vec<f64>> {
    let (c, t, f) = dims3(a, "cbam input")?;
    p.check(c)?;
    let plane = t * f;
    let pooled: Vec<f64> = a
        .data()
        .chunks_exact(plane.max(1))
        .take(c)
        .map(|ch| ch.iter().sum::<f64>() / plane as f64)
        .collect();
    let hidden: Vec<f64> = linear(&pooled, 1, p.fc1_w, p.fc1_b, c)
        .into_iter()
        .map(relu)
        .collect();
    Ok(linear(&hidden, 1, p.fc2_w, p.fc2_b, p.fc1_b.len())
        .into_iter()
        .map(sigmoid)
        .collect())
}

/// Channel-mean and channel-max maps of `scale[c] · a[c]`.
fn pooled_maps(a: &[f64], c: usize, plane: usize, scale: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; plane];
    let mut max = vec![f64::NEG_INFINITY; plane];
    for (ci, ch) in a.chunks_exact(plane.max(1)).take(c).enumerate() {
        let g = scale.map(|s| s[ci]);
        for ((m, x), &v) in mean.iter_mut().zip(max.iter_mut()).zip(ch) {
            let v = g.map_or(v, |g| v * g);
            *m += v;
            *x = x.max(v);
        }
    }
    for m in &mut mean {
        *m /= c as f64;
    }
    (mean, max)
}

fn spatial_conv(mean: &[f64], max: &[f64], t: usize, f: usize, p: &CbamParams) -> Vec<f64> {
    let plane = t * f;
    let k = p.kernel;
    let half = k / 2;
    let mut gate = vec![0.0; plane];
    gate.par_chunks_mut(f.max(1))
        .enumerate()
        .for_each(|(ti, row)| {
            row.fill(p.conv_b);
            for (map, wplane) in [mean, max].into_iter().zip(p.conv_w.chunks_exact(k * k)) {
                for di in 0..k {
                    // source row ti + di - half, skipped when it falls in the zero padding
                    let Some(tt) = (ti + di).checked_sub(half).filter(|&tt| tt < t) else {
                        continue;
                    };
                    let src = &map[tt * f..(tt + 1) * f];
                    for (dj, &wv) in wplane[di * k..(di + 1) * k].iter().enumerate() {
                        // out[fi] += wv * src[fi + dj - half] over the in-range fi
                        let (lo, hi) = if dj >= half {
                            (0, f.saturating_sub(dj - half))
                        } else {
                            ((half - dj).min(f), f)
                        };
                        if lo >= hi {
                            continue;
                        }
                        let shift = dj as isize - half as isize;
                        let src_lo = (lo as isize + shift) as usize;
                        for (o, v) in row[lo..hi].iter_mut().zip(&src[src_lo..]) {
                            *o += wv * v;
                        }
                    }
                }
            }
            row.iter_mut().for_each(|g| *g = sigmoid(*g));
        });
    gate
}

/// `T × F` gate from a same-padded convolution over the channel-mean and
/// channel-max maps.
pub fn cbam_spatial_gate(a: &Tensor, p: &CbamParams) -> Result<Vec<f64>> {
    let (c, t, f) = dims3(a, "cbam input")?;
    p.check(c)?;
    let (mean, max) = pooled_maps(a.data(), c, t * f, None);
    Ok(spatial_conv(&mean, &max, t, f, p))
}

/// Channel gating followed by spatial gating; shape preserved.
pub fn cbam_forward(a: &Tensor, p: &CbamParams) -> Result<Tensor> {
    let (c, t, f) = dims3(a, "cbam input")?;
    let gates = cbam_channel_gates(a, p)?;
    let plane = t * f;
    // the channel-gated tensor is never materialized
    let (mean, max) = pooled_maps(a.data(), c, plane, Some(&gates));
    let spatial = spatial_conv(&mean, &max, t, f, p);
    let mut out = vec![0.0; a.len()];
    if plane > 0 {
        out.par_chunks_exact_mut(plane)
            .zip(a.data().par_chunks_exact(plane))
            .zip(&gates)
            .for_each(|((o, ch), g)| {
                for ((o, v), s) in o.iter_mut().zip(ch).zip(&spatial) {
                    *o = v * g * s;
                }
            });
    }
    Tensor::new(vec![c, t, f], out)
}

/// Parameters of one coordinate-attention instance.
#[derive(Clone, Copy, Debug)]
pub struct CoordParams<'a> {
    /// `C × C_r`
    pub reduce_w: &'a [f64],
    pub reduce_b: &'a [f64],
    /// `C_r × C`
    pub time_w: &'a [f64],
    pub time_b: &'a [f64],
    /// `C_r × C`
    pub freq_w: &'a [f64],
    pub freq_b: &'a [f64],
}

impl<'a> CoordParams<'a> {
    pub fn from_weights(w: &'a SsafnWeights, block: usize) -> Self {
        let p = format!("joint{block}.coord");
        Self {
            reduce_w: w.get(&format!("{p}.reduce.weight")),
            reduce_b: w.get(&format!("{p}.reduce.bias")),
            time_w: w.get(&format!("{p}.time.weight")),
            time_b: w.get(&format!("{p}.time.bias")),
            freq_w: w.get(&format!("{p}.freq.weight")),
            freq_b: w.get(&format!("{p}.freq.bias")),
        }
    }
}

/// Time gates `C × T` and frequency gates `C × F`.
pub fn coord_gates(a: &Tensor, p: &CoordParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, t, f) = dims3(a, "coordinate attention input")?;
    let cr = p.reduce_b.len();
    expect_len("coord reduce weight", p.reduce_w, c * cr)?;
    for (what, w, b) in [("time", p.time_w, p.time_b), ("freq", p.freq_w, p.freq_b)] {
        expect_len(&format!("coord {what} weight"), w, cr * c)?;
        expect_len(&format!("coord {what} bias"), b, c)?;
    }
    // positions: T time descriptors followed by F frequency descriptors,
    // laid out position-major so the shared transform is one matrix product
    let positions = t + f;
    let mut desc = vec![0.0; positions * c];
    let (inv_t, inv_f) = (1.0 / t as f64, 1.0 / f as f64);
    let mut freq_sum = vec![0.0; f];
    for ci in 0..c {
        freq_sum.fill(0.0);
        for (ti, row) in a.data()[ci * t * f..(ci + 1) * t * f].chunks_exact(f.max(1)).enumerate() {
            desc[ti * c + ci] = row.iter().sum::<f64>() * inv_f;
            freq_sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        for (fi, s) in freq_sum.iter().enumerate() {
            desc[(t + fi) * c + ci] = s * inv_t;
        }
    }
    let z: Vec<f64> = linear(&desc, positions, p.reduce_w, p.reduce_b, c)
        .into_iter()
        .map(hard_swish)
        .collect();
    let gt = linear(&z[..t * cr], t, p.time_w, p.time_b, cr);
    let gf = linear(&z[t * cr..], f, p.freq_w, p.freq_b, cr);
    // transpose to channel-major
    let mut time_gate = vec![0.0; c * t];
    let mut freq_gate = vec![0.0; c * f];
    for ci in 0..c {
        for ti in 0..t {
            time_gate[ci * t + ti] = sigmoid(gt[ti * c + ci]);
        }
        for fi in 0..f {
            freq_gate[ci * f + fi] = sigmoid(gf[fi * c + ci]);
        }
    }
    Ok((time_gate, freq_gate))
}

pub fn coord_attention_forward(a: &Tensor, p: &CoordParams) -> Result<Tensor> {
    let (_, t, f) = dims3(a, "coordinate attention input")?;
    let (tg, fg) = coord_gates(a, p)?;
    let mut out = vec![0.0; a.len()];
    if t * f > 0 {
        out.par_chunks_exact_mut(t * f)
            .zip(a.data().par_chunks_exact(t * f))
            .enumerate()
            .for_each(|(ci, (ch, src))| {
                for (ti, (row, s)) in ch.chunks_exact_mut(f).zip(src.chunks_exact(f)).enumerate() {
                    let g = tg[ci * t + ti];
                    for ((o, v), h) in row.iter_mut().zip(s).zip(&fg[ci * f..(ci + 1) * f]) {
                        *o = v * (g * h);
                    }
                }
            });
    }
    Tensor::new(a.shape().to_vec(), out)
}

fn add_residual(mut x: Tensor, a: &Tensor) -> Tensor {
    x.data_mut()
        .par_chunks_mut(4096)
        .zip(a.data().par_chunks(4096))
        .for_each(|(x, a)| x.iter_mut().zip(a).for_each(|(x, a)| *x = a + *x));
    x
}

/// `A + Coord(A + CBAM₂(A + CBAM₁(A)))`.
pub fn joint_attention_block(a: &Tensor, w: &SsafnWeights, block: usize) -> Result<Tensor> {
    let inner = add_residual(cbam_forward(a, &CbamParams::from_weights(w, block, 0))?, a);
    let outer = add_residual(cbam_forward(&inner, &CbamParams::from_weights(w, block, 1))?, a);
    Ok(add_residual(
        coord_attention_forward(&outer, &CoordParams::from_weights(w, block))?,
        a,
    ))
}

#[derive(Clone, Copy, Debug)]
pub struct RsaccParams<'a> {
    /// `F × E`
    pub query_w: &'a [f64],
    pub query_b: &'a [f64],
    /// `F × E`
    pub key_w: &'a [f64],
    pub key_b: &'a [f64],
    /// `F × 1`
    pub value_w: &'a [f64],
    pub value_b: f64,
}

impl<'a> RsaccParams<'a> {
    pub fn from_weights(w: &'a SsafnWeights) -> Self {
        Self {
            query_w: w.get("rsacc.query.weight"),
            query_b: w.get("rsacc.query.bias"),
            key_w: w.get("rsacc.key.weight"),
            key_b: w.get("rsacc.key.bias"),
            value_w: w.get("rsacc.value.weight"),
            value_b: w.get("rsacc.value.bias")[0],
        }
    }
}

/// Log compression with a floor, then per-(channel, bin) normalization to zero
/// mean and unit variance across time.
pub fn log_mvn(a: &Tensor) -> Result<Tensor> {
    let (c, t, f) = dims3(a, "rsacc input")?;
    if let Some(v) = a.data().iter().find(|v| !(**v + LOG_FLOOR > 0.0)) {
        return Err(Error::NumericDomain(format!(
            "channel combinator input {v} is not positive after flooring"
        )));
    }
    let mut x = vec![0.0; a.len()];
    if t * f > 0 {
        x.par_chunks_exact_mut(t * f)
            .zip(a.data().par_chunks_exact(t * f))
            .for_each(|(ch, src)| {
                ch.iter_mut().zip(src).for_each(|(x, v)| *x = (v + LOG_FLOOR).ln());
                // statistics per bin, accumulated frame by frame
                let mut mean = vec![0.0; f];
                for row in ch.chunks_exact(f) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= t as f64);
                let mut var = vec![0.0; f];
                for row in ch.chunks_exact(f) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m).powi(2);
                    }
                }
                let inv: Vec<f64> = var.iter().map(|s| 1.0 / (s / t as f64 + MVN_FLOOR).sqrt()).collect();
                for row in ch.chunks_exact_mut(f) {
                    for ((v, m), i) in row.iter_mut().zip(&mean).zip(&inv) {
                        *v = (*v - m) * i;
                    }
                }
            });
    }
    Tensor::new(vec![c, t, f], x)
}

/// Attention probabilities `T × C × C` and combination weights `T × C`.
pub fn rsacc_attention(a: &Tensor, p: &RsaccParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, t, f) = dims3(a, "rsacc input")?;
    let e = p.query_b.len();
    expect_len("rsacc query weight", p.query_w, f * e)?;
    expect_len("rsacc key weight", p.key_w, f * e)?;
    expect_len("rsacc key bias", p.key_b, e)?;
    expect_len("rsacc value weight", p.value_w, f)?;
    let x = log_mvn(a)?;
    // fused projection: rows are (channel, frame) pairs
    let width = 2 * e + 1;
    let mut fused = vec![0.0; f * width];
    for fi in 0..f {
        let row = &mut fused[fi * width..(fi + 1) * width];
        row[..e].copy_from_slice(&p.query_w[fi * e..(fi + 1) * e]);
        row[e..2 * e].copy_from_slice(&p.key_w[fi * e..(fi + 1) * e]);
        row[2 * e] = p.value_w[fi];
    }
    let mut bias = Vec::with_capacity(width);
    bias.extend_from_slice(p.query_b);
    bias.extend_from_slice(p.key_b);
    bias.push(p.value_b);
    let qkv = linear(x.data(), c * t, &fused, &bias, f);
    let row = |ci: usize, ti: usize| &qkv[(ci * t + ti) * width..(ci * t + ti + 1) * width];
    let scale = 1.0 / (e as f64).sqrt();
    let mut probs = vec![0.0; t * c * c];
    let mut weights = vec![0.0; t * c];
    probs
        .par_chunks_mut((c * c).max(1))
        .zip(weights.par_chunks_mut(c.max(1)))
        .enumerate()
        .for_each(|(ti, (pt, wt))| {
            for ci in 0..c {
                let q = &row(ci, ti)[..e];
                let scores = &mut pt[ci * c..(ci + 1) * c];
                for (cj, s) in scores.iter_mut().enumerate() {
                    let k = &row(cj, ti)[e..2 * e];
                    *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(scores);
                wt[ci] = scores
                    .iter()
                    .enumerate()
                    .map(|(cj, pr)| pr * row(cj, ti)[2 * e])
                    .sum();
            }
        });
    Ok((probs, weights))
}

/// Collapses `C × T × F` to `T × F` with attention-derived channel weights.
pub fn rsacc_forward(a: &Tensor, p: &RsaccParams) -> Result<Tensor> {
    let (c, t, f) = dims3(a, "rsacc input")?;
    let (_, w) = rsacc_attention(a, p)?;
    Ok(weighted_channel_sum(a, c, t, f, |ti, ci| w[ti * c + ci]))
}

/// Plain channel mean; stands in for the combinator when it is ablated.
pub fn channel_mean(a: &Tensor) -> Result<Tensor> {
    let (c, t, f) = dims3(a, "channel mean input")?;
    let inv = 1.0 / c as f64;
    Ok(weighted_channel_sum(a, c, t, f, |_, _| inv))
}

fn weighted_channel_sum(
    a: &Tensor,
    c: usize,
    t: usize,
    f: usize,
    weight: impl Fn(usize, usize) -> f64 + Sync,
) -> Tensor {
    let mut out = vec![0.0; t * f];
    if f > 0 {
        out.par_chunks_mut(f).enumerate().for_each(|(ti, row)| {
            for ci in 0..c {
                let w = weight(ti, ci);
                let src = &a.data()[(ci * t + ti) * f..(ci * t + ti + 1) * f];
                for (o, v) in row.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        });
    }
    Tensor::new(vec![t, f], out).expect("shape by construction")
}

#[derive(Clone, Copy, Debug)]
pub struct MhsaParams<'a> {
    pub heads: usize,
    /// `F × D` each
    pub query_w: &'a [f64],
    pub query_b: &'a [f64],
    pub key_w: &'a [f64],
    pub key_b: &'a [f64],
    pub value_w: &'a [f64],
    pub value_b: &'a [f64],
    /// `D × F`
    pub out_w: &'a [f64],
    pub out_b: &'a [f64],
    /// `F × H`
    pub ffn1_w: &'a [f64],
    pub ffn1_b: &'a [f64],
    /// `H × F`
    pub ffn2_w: &'a [f64],
    pub ffn2_b: &'a [f64],
}

impl<'a> MhsaParams<'a> {
    pub fn from_weights(w: &'a SsafnWeights) -> Self {
        Self {
            heads: w.config().heads,
            query_w: w.get("mhsa.query.weight"),
            query_b: w.get("mhsa.query.bias"),
            key_w: w.get("mhsa.key.weight"),
            key_b: w.get("mhsa.key.bias"),
            value_w: w.get("mhsa.value.weight"),
            value_b: w.get("mhsa.value.bias"),
            out_w: w.get("mhsa.out.weight"),
            out_b: w.get("mhsa.out.bias"),
            ffn1_w: w.get("mhsa.ffn1.weight"),
            ffn1_b: w.get("mhsa.ffn1.bias"),
            ffn2_w: w.get("mhsa.ffn2.weight"),
            ffn2_b: w.get("mhsa.ffn2.bias"),
        }
    }

    fn check(&self, f: usize) -> Result<(usize, usize)> {
        let d = self.query_b.len();
        let h = self.ffn1_b.len();
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::Shape(format!("{d} attention dims not divisible by {} heads", self.heads)));
        }
        for (what, w, b) in [
            ("query", self.query_w, self.query_b),
            ("key", self.key_w, self.key_b),
            ("value", self.value_w, self.value_b),
        ] {
            expect_len(&format!("mhsa {what} weight"), w, f * d)?;
            expect_len(&format!("mhsa {what} bias"), b, d)?;
        }
        expect_len("mhsa out weight", self.out_w, d * f)?;
        expect_len("mhsa out bias", self.out_b, f)?;
        expect_len("mhsa ffn1 weight", self.ffn1_w, f * h)?;
        expect_len("mhsa ffn2 weight", self.ffn2_w, h * f)?;
        expect_len("mhsa ffn2 bias", self.ffn2_b, f)?;
        Ok((d, h))
    }
}

/// Multi-head self-attention over frames: returns the per-head attention
/// probabilities (`heads × T × T`) and the concatenated head outputs (`T × D`).
pub fn mhsa_attention(x: &Tensor, p: &MhsaParams) -> Result<(Vec<f64>, Vec<f64>)> {
    x.expect_rank("mhsa input", 2)?;
    let (t, f) = (x.shape()[0], x.shape()[1]);
    let (d, _) = p.check(f)?;
    let dh = d / p.heads;
    let q = linear(x.data(), t, p.query_w, p.query_b, f);
    let k = linear(x.data(), t, p.key_w, p.key_b, f);
    let v = linear(x.data(), t, p.value_w, p.value_b, f);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = Vec::with_capacity(p.heads * t * t);
    let mut concat = vec![0.0; t * d];
    for h in 0..p.heads {
        // head slices are strided views into the T × D projections
        let qh: Vec<f64> = (0..t).flat_map(|i| q[i * d + h * dh..i * d + (h + 1) * dh].to_vec()).collect();
        let mut scores = if t > 0 && dh > 0 {
            gemm_strided(t, dh, t, &qh, &k[h * dh..], 1, d)
        } else {
            vec![0.0; t * t]
        };
        for row in scores.chunks_exact_mut(t.max(1)) {
            row.iter_mut().for_each(|s| *s *= scale);
            softmax_in_place(row);
        }
        let oh = if t > 0 && dh > 0 {
            gemm_strided(t, t, dh, &scores, &v[h * dh..], d, 1)
        } else {
            vec![0.0; t * dh]
        };
        for i in 0..t {
            concat[i * d + h * dh..i * d + (h + 1) * dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
        }
        probs.extend_from_slice(&scores);
    }
    Ok((probs, concat))
}

/// `X ⊙ σ(FFN(MHSA(X)))` on a `T × F` spectrogram.
pub fn mhsa_postfilter(x: &Tensor, p: &MhsaParams) -> Result<Tensor> {
    x.expect_rank("mhsa input", 2)?;
    let (t, f) = (x.shape()[0], x.shape()[1]);
    let (d, h) = p.check(f)?;
    let (_, concat) = mhsa_attention(x, p)?;
    let attended = linear(&concat, t, p.out_w, p.out_b, d);
    let hidden: Vec<f64> = linear(&attended, t, p.ffn1_w, p.ffn1_b, f)
        .into_iter()
        .map(relu)
        .collect();
    let mask = linear(&hidden, t, p.ffn2_w, p.ffn2_b, h);
    let data = x
        .data()
        .iter()
        .zip(&mask)
        .map(|(v, m)| v * sigmoid(*m))
        .collect();
    Tensor::new(vec![t, f], data)
}
