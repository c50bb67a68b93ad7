//! Scalar-loop reference implementation of the network, written from the
//! layer definitions with explicit indices and no shared kernels.

use shfront::ssafn::SsafnWeights;

/// `[c][t][f]`
pub type Cube = Vec<Vec<Vec<f64>>>;
/// `[t][f]`
pub type Plane = Vec<Vec<f64>>;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn hswish(x: f64) -> f64 {
    let r = if x + 3.0 < 0.0 { 0.0 } else if x + 3.0 > 6.0 { 6.0 } else { x + 3.0 };
    x * r / 6.0
}

/// `y[j] = b[j] + Σ_i x[i] W[i][j]` with `W` stored row-major `in × out`.
fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    let mut y = vec![0.0; out];
    for j in 0..out {
        let mut acc = b[j];
        for i in 0..x.len() {
            acc += x[i] * w[i * out + j];
        }
        y[j] = acc;
    }
    y
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in v {
        if x > m {
            m = x;
        }
    }
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn cube_from_flat(c: usize, t: usize, f: usize, data: &[f64]) -> Cube {
    (0..c)
        .map(|ci| (0..t).map(|ti| (0..f).map(|fi| data[(ci * t + ti) * f + fi]).collect()).collect())
        .collect()
}

pub fn flat(c: &Cube) -> Vec<f64> {
    c.iter().flatten().flatten().copied().collect()
}

pub fn flat2(p: &Plane) -> Vec<f64> {
    p.iter().flatten().copied().collect()
}

pub fn cbam(a: &Cube, w: &SsafnWeights, block: usize, inner: usize) -> Cube {
    let p = format!("joint{block}.cbam{inner}");
    let k = w.config().cbam_kernels[2 * block + inner];
    let (c, t, f) = (a.len(), a[0].len(), a[0][0].len());
    let mut pooled = vec![0.0; c];
    for ci in 0..c {
        let mut s = 0.0;
        for ti in 0..t {
            for fi in 0..f {
                s += a[ci][ti][fi];
            }
        }
        pooled[ci] = s / (t * f) as f64;
    }
    let h: Vec<f64> = dense(&pooled, w.get(&format!("{p}.fc1.weight")), w.get(&format!("{p}.fc1.bias")))
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.0 })
        .collect();
    let g: Vec<f64> = dense(&h, w.get(&format!("{p}.fc2.weight")), w.get(&format!("{p}.fc2.bias")))
        .into_iter()
        .map(sigmoid)
        .collect();
    let mut x = a.clone();
    for ci in 0..c {
        for ti in 0..t {
            for fi in 0..f {
                x[ci][ti][fi] *= g[ci];
            }
        }
    }
    let kw = w.get(&format!("{p}.conv.weight"));
    let kb = w.get(&format!("{p}.conv.bias"))[0];
    let half = (k / 2) as i64;
    let mut mean = vec![vec![0.0; f]; t];
    let mut max = vec![vec![f64::NEG_INFINITY; f]; t];
    for ti in 0..t {
        for fi in 0..f {
            for ci in 0..c {
                mean[ti][fi] += x[ci][ti][fi] / c as f64;
                if x[ci][ti][fi] > max[ti][fi] {
                    max[ti][fi] = x[ci][ti][fi];
                }
            }
        }
    }
    let mut out = x.clone();
    for ti in 0..t {
        for fi in 0..f {
            let mut acc = kb;
            for (plane, map) in [&mean, &max].iter().enumerate() {
                for di in 0..k {
                    for dj in 0..k {
                        let tt = ti as i64 + di as i64 - half;
                        let ff = fi as i64 + dj as i64 - half;
                        if tt >= 0 && tt < t as i64 && ff >= 0 && ff < f as i64 {
                            acc += kw[(plane * k + di) * k + dj] * map[tt as usize][ff as usize];
                        }
                    }
                }
            }
            let s = sigmoid(acc);
            for ci in 0..c {
                out[ci][ti][fi] = x[ci][ti][fi] * s;
            }
        }
    }
    out
}

pub fn coord(a: &Cube, w: &SsafnWeights, block: usize) -> Cube {
    let p = format!("joint{block}.coord");
    let (c, t, f) = (a.len(), a[0].len(), a[0][0].len());
    let rw = w.get(&format!("{p}.reduce.weight"));
    let rb = w.get(&format!("{p}.reduce.bias"));
    let mut gt = vec![vec![0.0; t]; c];
    for ti in 0..t {
        let d: Vec<f64> = (0..c).map(|ci| a[ci][ti].iter().sum::<f64>() / f as f64).collect();
        let z: Vec<f64> = dense(&d, rw, rb).into_iter().map(hswish).collect();
        let g = dense(&z, w.get(&format!("{p}.time.weight")), w.get(&format!("{p}.time.bias")));
        for ci in 0..c {
            gt[ci][ti] = sigmoid(g[ci]);
        }
    }
    let mut gf = vec![vec![0.0; f]; c];
    for fi in 0..f {
        let d: Vec<f64> = (0..c).map(|ci| (0..t).map(|ti| a[ci][ti][fi]).sum::<f64>() / t as f64).collect();
        let z: Vec<f64> = dense(&d, rw, rb).into_iter().map(hswish).collect();
        let g = dense(&z, w.get(&format!("{p}.freq.weight")), w.get(&format!("{p}.freq.bias")));
        for ci in 0..c {
            gf[ci][fi] = sigmoid(g[ci]);
        }
    }
    let mut out = a.clone();
    for ci in 0..c {
        for ti in 0..t {
            for fi in 0..f {
                out[ci][ti][fi] = a[ci][ti][fi] * gt[ci][ti] * gf[ci][fi];
            }
        }
    }
    out
}

fn plus(a: &Cube, b: &Cube) -> Cube {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect()).collect())
        .collect()
}

pub fn joint(a: &Cube, w: &SsafnWeights, block: usize) -> Cube {
    let s1 = plus(a, &cbam(a, w, block, 0));
    let s2 = plus(a, &cbam(&s1, w, block, 1));
    plus(a, &coord(&s2, w, block))
}

pub fn rsacc(a: &Cube, w: &SsafnWeights) -> Plane {
    let (c, t, f) = (a.len(), a[0].len(), a[0][0].len());
    let mut x = vec![vec![vec![0.0; f]; t]; c];
    for ci in 0..c {
        for fi in 0..f {
            let logs: Vec<f64> = (0..t).map(|ti| (a[ci][ti][fi] + 1e-8).ln()).collect();
            let mean = logs.iter().sum::<f64>() / t as f64;
            let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
            for ti in 0..t {
                x[ci][ti][fi] = (logs[ti] - mean) / (var + 1e-8).sqrt();
            }
        }
    }
    let e = w.config().embed_dim;
    let mut out = vec![vec![0.0; f]; t];
    for ti in 0..t {
        let q: Vec<Vec<f64>> = (0..c).map(|ci| dense(&x[ci][ti], w.get("rsacc.query.weight"), w.get("rsacc.query.bias"))).collect();
        let k: Vec<Vec<f64>> = (0..c).map(|ci| dense(&x[ci][ti], w.get("rsacc.key.weight"), w.get("rsacc.key.bias"))).collect();
        let v: Vec<f64> = (0..c).map(|ci| dense(&x[ci][ti], w.get("rsacc.value.weight"), w.get("rsacc.value.bias"))[0]).collect();
        for ci in 0..c {
            let scores: Vec<f64> = (0..c)
                .map(|cj| (0..e).map(|d| q[ci][d] * k[cj][d]).sum::<f64>() / (e as f64).sqrt())
                .collect();
            let p = softmax(&scores);
            let wc: f64 = (0..c).map(|cj| p[cj] * v[cj]).sum();
            for fi in 0..f {
                out[ti][fi] += wc * a[ci][ti][fi];
            }
        }
    }
    out
}

pub fn channel_mean(a: &Cube) -> Plane {
    let (c, t, f) = (a.len(), a[0].len(), a[0][0].len());
    let mut out = vec![vec![0.0; f]; t];
    for ti in 0..t {
        for fi in 0..f {
            for ci in 0..c {
                out[ti][fi] += a[ci][ti][fi] / c as f64;
            }
        }
    }
    out
}

pub fn mhsa(x: &Plane, w: &SsafnWeights) -> Plane {
    let t = x.len();
    let heads = w.config().heads;
    let d = w.config().attn_dim;
    let dh = d / heads;
    let q: Vec<Vec<f64>> = x.iter().map(|r| dense(r, w.get("mhsa.query.weight"), w.get("mhsa.query.bias"))).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|r| dense(r, w.get("mhsa.key.weight"), w.get("mhsa.key.bias"))).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|r| dense(r, w.get("mhsa.value.weight"), w.get("mhsa.value.bias"))).collect();
    let mut concat = vec![vec![0.0; d]; t];
    for h in 0..heads {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..dh).map(|z| q[i][h * dh + z] * k[j][h * dh + z]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let p = softmax(&scores);
            for z in 0..dh {
                concat[i][h * dh + z] = (0..t).map(|j| p[j] * v[j][h * dh + z]).sum();
            }
        }
    }
    let mut out = x.clone();
    for i in 0..t {
        let o = dense(&concat[i], w.get("mhsa.out.weight"), w.get("mhsa.out.bias"));
        let hid: Vec<f64> = dense(&o, w.get("mhsa.ffn1.weight"), w.get("mhsa.ffn1.bias"))
            .into_iter()
            .map(|v| if v > 0.0 { v } else { 0.0 })
            .collect();
        let m = dense(&hid, w.get("mhsa.ffn2.weight"), w.get("mhsa.ffn2.bias"));
        for fi in 0..out[i].len() {
            out[i][fi] = x[i][fi] * sigmoid(m[fi]);
        }
    }
    out
}

pub fn forward(a: &Cube, w: &SsafnWeights) -> Plane {
    let cfg = *w.config();
    let mut x = a.clone();
    if cfg.use_joint_attention {
        x = joint(&x, w, 0);
        x = joint(&x, w, 1);
    }
    let y = if cfg.use_rsacc { rsacc(&x, w) } else { channel_mean(&x) };
    if cfg.use_mhsa {
        mhsa(&y, w)
    } else {
        y
    }
}
