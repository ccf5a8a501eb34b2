//! Learnable tensors of the Q-network, their shapes and initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Mat;
use super::QNetError;

/// Network dimensions. `embed_dim` must be divisible by `heads`; one
/// unshared encoder is built per entry of `periods`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperParams {
    /// Features per step of the base sequence.
    pub feature_dim: usize,
    /// Features per step of the per-period observation sequences.
    pub obs_feature_dim: usize,
    /// Steps d in every input window.
    pub window: usize,
    /// Embedding dimension n.
    pub embed_dim: usize,
    /// Attention heads h.
    pub heads: usize,
    /// Encoder layers L.
    pub layers: usize,
    /// Period minutes of the observation sequences, in fusion order.
    pub periods: Vec<u32>,
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), QNetError> {
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(QNetError::BadHyper("embed_dim must be a positive multiple of heads"));
        }
        if self.feature_dim == 0 || self.obs_feature_dim == 0 || self.window == 0 {
            return Err(QNetError::BadHyper("feature dims and window must be positive"));
        }
        if self.layers == 0 {
            return Err(QNetError::BadHyper("need at least one encoder layer"));
        }
        if self.periods.is_empty() {
            return Err(QNetError::EmptyPeriodSet);
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub ln1_gain: Mat,
    pub ln1_bias: Mat,
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln2_gain: Mat,
    pub ln2_bias: Mat,
    pub w_ff1: Mat,
    pub b_ff1: Mat,
    pub w_ff2: Mat,
    pub b_ff2: Mat,
}

/// Token projection, L self-attention layers and the flatten-dense compressor.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w_in: Mat,
    pub b_in: Mat,
    pub layers: Vec<EncoderLayerParams>,
    pub w_compress: Mat,
    pub b_compress: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    pub hyper: HyperParams,
    /// Fixed sinusoidal positional table (n x d); saved with checkpoints but
    /// not trained.
    pub pos_enc: Mat,
    pub seq: EncoderParams,
    pub w_flags: Mat,
    pub b_flags: Mat,
    pub obs: Vec<EncoderParams>,
    pub w_bilinear: Mat,
    pub w_head: Mat,
    pub b_head: Mat,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Mat {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

fn encoder_init(rng: &mut ChaCha8Rng, input_dim: usize, hyper: &HyperParams) -> EncoderParams {
    let n = hyper.embed_dim;
    let d = hyper.window;
    let layers = (0..hyper.layers)
        .map(|_| EncoderLayerParams {
            ln1_gain: Mat::from_fn(n, 1, |_, _| 1.0),
            ln1_bias: Mat::zeros(n, 1),
            wq: xavier(rng, n, n, n, n),
            wk: xavier(rng, n, n, n, n),
            wv: xavier(rng, n, n, n, n),
            wo: xavier(rng, n, n, n, n),
            ln2_gain: Mat::from_fn(n, 1, |_, _| 1.0),
            ln2_bias: Mat::zeros(n, 1),
            w_ff1: xavier(rng, 4 * n, n, n, 4 * n),
            b_ff1: Mat::zeros(4 * n, 1),
            w_ff2: xavier(rng, n, 4 * n, 4 * n, n),
            b_ff2: Mat::zeros(n, 1),
        })
        .collect();
    EncoderParams {
        w_in: xavier(rng, n, input_dim, input_dim, n),
        b_in: Mat::zeros(n, 1),
        layers,
        w_compress: xavier(rng, n, n * d, n * d, n),
        b_compress: Mat::zeros(n, 1),
    }
}

/// Sinusoidal position table: rows alternate sin/cos over geometric
/// wavelengths, columns are positions.
pub fn sinusoidal_positions(embed_dim: usize, window: usize) -> Mat {
    Mat::from_fn(embed_dim, window, |r, c| {
        let pair = (r / 2 * 2) as f64;
        let rate = 10_000f64.powf(-pair / embed_dim as f64);
        let angle = c as f64 * rate;
        if r % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl QNetworkParams {
    pub fn init(hyper: HyperParams, seed: u64) -> Result<QNetworkParams, QNetError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = hyper.embed_dim;
        let seq = encoder_init(&mut rng, hyper.feature_dim, &hyper);
        let w_flags = xavier(&mut rng, n, n + 2, n + 2, n);
        let b_flags = Mat::zeros(n, 1);
        let obs = hyper
            .periods
            .iter()
            .map(|_| encoder_init(&mut rng, hyper.obs_feature_dim, &hyper))
            .collect();
        let w_bilinear = xavier(&mut rng, n, n, n, n);
        // Small head: initial Q-values start near zero so early targets are
        // driven by rewards rather than initialization noise.
        let mut w_head = xavier(&mut rng, 2, 2 * n, 2 * n, 2);
        w_head.scale_assign(0.05);
        let b_head = Mat::zeros(2, 1);
        let pos_enc = sinusoidal_positions(n, hyper.window);
        Ok(QNetworkParams {
            hyper,
            pos_enc,
            seq,
            w_flags,
            b_flags,
            obs,
            w_bilinear,
            w_head,
            b_head,
        })
    }

    /// Same shapes, all trainable tensors zero. Used as a gradient container.
    pub fn zeros_like(&self) -> QNetworkParams {
        let mut out = self.clone();
        for (_, t) in out.named_tensors_mut() {
            t.scale_assign(0.0);
        }
        out
    }

    /// Trainable tensors in a fixed order with stable names. The positional
    /// table is a buffer, not a parameter, and is not listed.
    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        collect_encoder(&mut out, "seq", &self.seq);
        out.push(("flags.w".into(), &self.w_flags));
        out.push(("flags.b".into(), &self.b_flags));
        for (i, enc) in self.obs.iter().enumerate() {
            collect_encoder(&mut out, &format!("obs{i}"), enc);
        }
        out.push(("fuse.w".into(), &self.w_bilinear));
        out.push(("head.w".into(), &self.w_head));
        out.push(("head.b".into(), &self.b_head));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::new();
        collect_encoder_mut(&mut out, "seq", &mut self.seq);
        out.push(("flags.w".into(), &mut self.w_flags));
        out.push(("flags.b".into(), &mut self.b_flags));
        for (i, enc) in self.obs.iter_mut().enumerate() {
            collect_encoder_mut(&mut out, &format!("obs{i}"), enc);
        }
        out.push(("fuse.w".into(), &mut self.w_bilinear));
        out.push(("head.w".into(), &mut self.w_head));
        out.push(("head.b".into(), &mut self.b_head));
        out
    }
}

fn collect_encoder<'a>(out: &mut Vec<(String, &'a Mat)>, prefix: &str, enc: &'a EncoderParams) {
    out.push((format!("{prefix}.in.w"), &enc.w_in));
    out.push((format!("{prefix}.in.b"), &enc.b_in));
    for (l, layer) in enc.layers.iter().enumerate() {
        let p = format!("{prefix}.l{l}");
        out.push((format!("{p}.ln1.g"), &layer.ln1_gain));
        out.push((format!("{p}.ln1.b"), &layer.ln1_bias));
        out.push((format!("{p}.attn.wq"), &layer.wq));
        out.push((format!("{p}.attn.wk"), &layer.wk));
        out.push((format!("{p}.attn.wv"), &layer.wv));
        out.push((format!("{p}.attn.wo"), &layer.wo));
        out.push((format!("{p}.ln2.g"), &layer.ln2_gain));
        out.push((format!("{p}.ln2.b"), &layer.ln2_bias));
        out.push((format!("{p}.ff1.w"), &layer.w_ff1));
        out.push((format!("{p}.ff1.b"), &layer.b_ff1));
        out.push((format!("{p}.ff2.w"), &layer.w_ff2));
        out.push((format!("{p}.ff2.b"), &layer.b_ff2));
    }
    out.push((format!("{prefix}.compress.w"), &enc.w_compress));
    out.push((format!("{prefix}.compress.b"), &enc.b_compress));
}

fn collect_encoder_mut<'a>(
    out: &mut Vec<(String, &'a mut Mat)>,
    prefix: &str,
    enc: &'a mut EncoderParams,
) {
    out.push((format!("{prefix}.in.w"), &mut enc.w_in));
    out.push((format!("{prefix}.in.b"), &mut enc.b_in));
    for (l, layer) in enc.layers.iter_mut().enumerate() {
        let p = format!("{prefix}.l{l}");
        out.push((format!("{p}.ln1.g"), &mut layer.ln1_gain));
        out.push((format!("{p}.ln1.b"), &mut layer.ln1_bias));
        out.push((format!("{p}.attn.wq"), &mut layer.wq));
        out.push((format!("{p}.attn.wk"), &mut layer.wk));
        out.push((format!("{p}.attn.wv"), &mut layer.wv));
        out.push((format!("{p}.attn.wo"), &mut layer.wo));
        out.push((format!("{p}.ln2.g"), &mut layer.ln2_gain));
        out.push((format!("{p}.ln2.b"), &mut layer.ln2_bias));
        out.push((format!("{p}.ff1.w"), &mut layer.w_ff1));
        out.push((format!("{p}.ff1.b"), &mut layer.b_ff1));
        out.push((format!("{p}.ff2.w"), &mut layer.w_ff2));
        out.push((format!("{p}.ff2.b"), &mut layer.b_ff2));
    }
    out.push((format!("{prefix}.compress.w"), &mut enc.w_compress));
    out.push((format!("{prefix}.compress.b"), &mut enc.b_compress));
}
