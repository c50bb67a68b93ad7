//! Spatial-spectral attention fusion network: maps a `C × T × F` magnitude
//! tensor to a single-channel `T × F` spectrogram.

pub mod layers;
mod ops;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use layers::{
    cbam_forward, channel_mean, coord_attention_forward, joint_attention_block, mhsa_attention,
    mhsa_postfilter, rsacc_attention, rsacc_forward, CbamParams, CoordParams, MhsaParams,
    RsaccParams,
};
pub use weights::{init_weights, param_count, param_specs, ParamSpec, SsafnWeights, SSAF_MAGIC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsafnConfig {
    pub channels: usize,
    pub bins: usize,
    /// Query/key width of the channel combinator.
    pub embed_dim: usize,
    pub heads: usize,
    pub attn_dim: usize,
    pub ffn_dim: usize,
    /// Spatial kernels of the four CBAMs, block by block.
    pub cbam_kernels: [usize; 4],
    pub reduction: usize,
    pub use_joint_attention: bool,
    pub use_rsacc: bool,
    pub use_mhsa: bool,
}

impl Default for SsafnConfig {
    fn default() -> Self {
        Self {
            channels: 25,
            bins: 257,
            embed_dim: 64,
            heads: 2,
            attn_dim: 64,
            ffn_dim: 512,
            cbam_kernels: [9, 7, 5, 3],
            reduction: 5,
            use_joint_attention: true,
            use_rsacc: true,
            use_mhsa: true,
        }
    }
}

impl SsafnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("bins", self.bins),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("attn_dim", self.attn_dim),
            ("ffn_dim", self.ffn_dim),
            ("reduction", self.reduction),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if let Some(k) = self.cbam_kernels.iter().find(|k| **k % 2 == 0) {
            return Err(Error::Config(format!("CBAM kernel {k} must be odd")));
        }
        if self.attn_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "attn_dim {} not divisible by {} heads",
                self.attn_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Hidden width of the channel-reduction MLPs.
    pub fn reduced_channels(&self) -> usize {
        (self.channels / self.reduction).max(1)
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn without_joint_attention(mut self) -> Self {
        self.use_joint_attention = false;
        self
    }

    pub fn without_rsacc(mut self) -> Self {
        self.use_rsacc = false;
        self
    }

    pub fn without_mhsa(mut self) -> Self {
        self.use_mhsa = false;
        self
    }
}

/// Full forward pass. Input must be finite and shaped
/// `[channels, T, bins]`; non-negative magnitudes are expected.
pub fn ssafn_forward(input: &Tensor, weights: &SsafnWeights) -> Result<Tensor> {
    let cfg = weights.config();
    input.expect_rank("network input", 3)?;
    let shape = input.shape();
    if shape[0] != cfg.channels || shape[2] != cfg.bins {
        return Err(Error::Shape(format!(
            "network expects [{}, T, {}], got {:?}",
            cfg.channels, cfg.bins, shape
        )));
    }
    input.check_finite("network input")?;
    let mut a = input.clone();
    if cfg.use_joint_attention {
        for block in 0..2 {
            a = joint_attention_block(&a, weights, block)?;
        }
    }
    let combined = if cfg.use_rsacc {
        rsacc_forward(&a, &RsaccParams::from_weights(weights))?
    } else {
        channel_mean(&a)?
    };
    if cfg.use_mhsa {
        mhsa_postfilter(&combined, &MhsaParams::from_weights(weights))
    } else {
        Ok(combined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SsafnConfig {
        SsafnConfig {
            channels: 4,
            bins: 6,
            embed_dim: 4,
            heads: 2,
            attn_dim: 4,
            ffn_dim: 8,
            cbam_kernels: [3, 3, 3, 1],
            reduction: 2,
            ..SsafnConfig::default()
        }
    }

    fn input(c: usize, t: usize, f: usize) -> Tensor {
        let data = (0..c * t * f).map(|i| 0.1 + ((i * 37) % 11) as f64 * 0.3).collect();
        Tensor::new(vec![c, t, f], data).unwrap()
    }

    #[test]
    fn default_shapes() {
        let w = init_weights(&SsafnConfig::default(), 1).unwrap();
        let out = ssafn_forward(&input(25, 5, 257), &w).unwrap();
        assert_eq!(out.shape(), [5, 257]);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ablations_keep_shape() {
        for cfg in [
            small().without_joint_attention(),
            small().without_rsacc(),
            small().without_mhsa(),
            small().without_joint_attention().without_rsacc().without_mhsa(),
        ] {
            let w = init_weights(&cfg, 2).unwrap();
            let out = ssafn_forward(&input(4, 3, 6), &w).unwrap();
            assert_eq!(out.shape(), [3, 6]);
        }
    }

    #[test]
    fn fully_ablated_is_channel_mean() {
        let cfg = small().without_joint_attention().without_rsacc().without_mhsa();
        let w = init_weights(&cfg, 0).unwrap();
        assert_eq!(w.param_count(), 0);
        let x = input(4, 2, 6);
        let out = ssafn_forward(&x, &w).unwrap();
        for ti in 0..2 {
            for fi in 0..6 {
                let want: f64 = (0..4).map(|c| x.data()[(c * 2 + ti) * 6 + fi]).sum::<f64>() / 4.0;
                assert!((out.data()[ti * 6 + fi] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let w = init_weights(&small(), 0).unwrap();
        assert!(matches!(ssafn_forward(&input(3, 2, 6), &w), Err(Error::Shape(_))));
        assert!(matches!(ssafn_forward(&input(4, 2, 5), &w), Err(Error::Shape(_))));
        let mut x = input(4, 2, 6);
        x.data_mut()[3] = f64::NAN;
        assert!(ssafn_forward(&x, &w).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SsafnConfig::default();
        c.cbam_kernels[1] = 4;
        assert!(c.validate().is_err());
        let c = SsafnConfig { attn_dim: 63, ..SsafnConfig::default() };
        assert!(c.validate().is_err());
        assert_eq!(SsafnConfig::default().reduced_channels(), 5);
        assert_eq!(SsafnConfig::default().with_channels(4).reduced_channels(), 1);
    }
}
