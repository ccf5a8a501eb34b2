//! Forward and reverse passes of the Q-network.
//!
//! Pipeline: the base window goes through a pre-norm transformer encoder,
//! is flattened and compressed to an n-vector, combined with the resistance
//! flag and holding time, then fused with the per-period encodings through
//! bilinear channel attention; a linear head maps the 2n concatenation to
//! the two action values. Gradients are hand-written reverse mode and are
//! checked against central finite differences in the test suite.

use crate::env::MarketState;

use super::params::{EncoderLayerParams, EncoderParams, QNetworkParams};
use super::tensor::{softmax_rows, softmax_rows_backward, Mat};
use super::QNetError;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh through a single exp, which costs half of libm's tanh; the forward
/// pass is activation-bound at these matrix sizes. Tiny arguments return x
/// itself, which is exact to 1e-24 and keeps the cancellation region out of
/// (e-1).
#[inline]
fn tanh_fast(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        x
    } else if x > 20.0 {
        1.0
    } else if x < -20.0 {
        -1.0
    } else {
        let e = (2.0 * x).exp();
        (e - 1.0) / (e + 1.0)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh_fast(GELU_C * (x + GELU_A * x * x * x)))
}

fn gelu_deriv(x: f64) -> f64 {
    let t = tanh_fast(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Layer norm over each column (one token per column). Loops run row-major
/// with per-column accumulators so every scan is contiguous.
struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Mat, gain: &Mat, bias: &Mat) -> (Mat, LnCache) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; d];
    for r in 0..n {
        for ((vv, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            let dv = v - m;
            *vv += dv * dv;
        }
    }
    let inv_std: Vec<f64> =
        var.iter().map(|v| 1.0 / (v / n as f64 + LN_EPS).sqrt()).collect();

    let mut xhat = Mat::zeros(n, d);
    let mut out = Mat::zeros(n, d);
    for r in 0..n {
        let g = gain.at(r, 0);
        let b = bias.at(r, 0);
        let xr = x.row(r);
        let hr = xhat.row_mut(r);
        for c in 0..d {
            hr[c] = (xr[c] - mean[c]) * inv_std[c];
        }
        let or = out.row_mut(r);
        for c in 0..d {
            or[c] = g * hr[c] + b;
        }
    }
    (out, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    cache: &LnCache,
    gain: &Mat,
    dy: &Mat,
    dgain: &mut Mat,
    dbias: &mut Mat,
) -> Mat {
    let (n, d) = dy.shape();
    let mut mean_dxhat = vec![0.0f64; d];
    let mut mean_dxhat_xhat = vec![0.0f64; d];
    for r in 0..n {
        let g = gain.at(r, 0);
        let dr = dy.row(r);
        let hr = cache.xhat.row(r);
        let mut grow = 0.0;
        let mut brow = 0.0;
        for c in 0..d {
            let dxh = dr[c] * g;
            mean_dxhat[c] += dxh;
            mean_dxhat_xhat[c] += dxh * hr[c];
            grow += dr[c] * hr[c];
            brow += dr[c];
        }
        *dgain.at_mut(r, 0) += grow;
        *dbias.at_mut(r, 0) += brow;
    }
    for c in 0..d {
        mean_dxhat[c] /= n as f64;
        mean_dxhat_xhat[c] /= n as f64;
    }
    let mut dx = Mat::zeros(n, d);
    for r in 0..n {
        let g = gain.at(r, 0);
        let dr = dy.row(r);
        let hr = cache.xhat.row(r);
        let xr = dx.row_mut(r);
        for c in 0..d {
            let dxh = dr[c] * g;
            xr[c] = cache.inv_std[c] * (dxh - mean_dxhat[c] - hr[c] * mean_dxhat_xhat[c]);
        }
    }
    dx
}

struct LayerTrace {
    ln1: LnCache,
    n1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    concat: Mat,
    ln2: LnCache,
    n2: Mat,
    ffn_u: Mat,
    ffn_g: Mat,
}

/// Intermediates of one encoder application (Eq.-8/9 stage).
pub struct EncoderTrace {
    x: Mat,
    layers: Vec<LayerTrace>,
    /// Encoder output H1, n x d.
    pub(crate) h1: Mat,
    /// Compressed vector H2 = tanh(Wc flatten(H1) + bc), n x 1.
    pub(crate) h2: Mat,
}

impl EncoderTrace {
    /// Attention probability matrices (query rows, key columns), layer-major
    /// then head-major. Rows sum to one.
    pub fn attention_probs(&self) -> impl Iterator<Item = &Mat> {
        self.layers.iter().flat_map(|l| l.probs.iter())
    }

    pub fn output(&self) -> &Mat {
        &self.h1
    }

    pub fn compressed(&self) -> &Mat {
        &self.h2
    }
}

fn encoder_layer_forward(
    layer: &EncoderLayerParams,
    z_in: &Mat,
    heads: usize,
) -> (Mat, LayerTrace) {
    let (n, _d) = z_in.shape();
    let dh = n / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (n1, ln1) = layer_norm(z_in, &layer.ln1_gain, &layer.ln1_bias);
    let q = layer.wq.matmul(&n1);
    let k = layer.wk.matmul(&n1);
    let v = layer.wv.matmul(&n1);

    let mut concat = Mat::zeros(n, z_in.cols());
    let mut probs = Vec::with_capacity(heads);
    for j in 0..heads {
        let qj = q.row_block(j * dh, dh);
        let kj = k.row_block(j * dh, dh);
        let vj = v.row_block(j * dh, dh);
        let mut scores = qj.matmul_tn(&kj);
        scores.scale_assign(scale);
        softmax_rows(&mut scores);
        let oj = vj.matmul_nt(&scores);
        concat.set_row_block(j * dh, &oj);
        probs.push(scores);
    }
    let a_out = layer.wo.matmul(&concat);

    let mut z_mid = z_in.clone();
    z_mid.add_assign(&a_out);

    let (n2, ln2) = layer_norm(&z_mid, &layer.ln2_gain, &layer.ln2_bias);
    let mut ffn_u = layer.w_ff1.matmul(&n2);
    ffn_u.add_col_broadcast_assign(&layer.b_ff1);
    let ffn_g = ffn_u.map(gelu);
    let mut f_out = layer.w_ff2.matmul(&ffn_g);
    f_out.add_col_broadcast_assign(&layer.b_ff2);

    let mut z_out = z_mid;
    z_out.add_assign(&f_out);

    (z_out, LayerTrace { ln1, n1, q, k, v, probs, concat, ln2, n2, ffn_u, ffn_g })
}

fn encoder_layer_backward(
    layer: &EncoderLayerParams,
    grads: &mut EncoderLayerParams,
    trace: &LayerTrace,
    heads: usize,
    dz_out: &Mat,
) -> Mat {
    let (n, _d) = dz_out.shape();
    let dh = n / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // Feed-forward branch: z_out = z_mid + W2 gelu(W1 n2 + b1) + b2.
    let df = dz_out; // residual passes dz_out through unchanged
    grads.w_ff2.add_assign(&df.matmul_nt(&trace.ffn_g));
    grads.b_ff2.add_assign(&df.sum_cols());
    let dg = layer.w_ff2.matmul_tn(df);
    let mut du = dg;
    for (duv, uv) in du.data_mut().iter_mut().zip(trace.ffn_u.data()) {
        *duv *= gelu_deriv(*uv);
    }
    grads.w_ff1.add_assign(&du.matmul_nt(&trace.n2));
    grads.b_ff1.add_assign(&du.sum_cols());
    let dn2 = layer.w_ff1.matmul_tn(&du);

    let mut dz_mid =
        layer_norm_backward(&trace.ln2, &layer.ln2_gain, &dn2, &mut grads.ln2_gain, &mut grads.ln2_bias);
    dz_mid.add_assign(dz_out);

    // Attention branch: z_mid = z_in + Wo concat(heads).
    let da = &dz_mid;
    grads.wo.add_assign(&da.matmul_nt(&trace.concat));
    let dconcat = layer.wo.matmul_tn(da);

    let mut dq = Mat::zeros(n, dz_out.cols());
    let mut dk = Mat::zeros(n, dz_out.cols());
    let mut dv = Mat::zeros(n, dz_out.cols());
    for j in 0..heads {
        let doj = dconcat.row_block(j * dh, dh);
        let p = &trace.probs[j];
        let vj = trace.v.row_block(j * dh, dh);
        let qj = trace.q.row_block(j * dh, dh);
        let kj = trace.k.row_block(j * dh, dh);

        // oj = vj p^T
        let dvj = doj.matmul(p);
        let dp = doj.matmul_tn(&vj);
        let mut ds = softmax_rows_backward(p, &dp);
        ds.scale_assign(scale);
        // scores = qj^T kj * scale
        let dqj = kj.matmul_nt(&ds);
        let dkj = qj.matmul(&ds);

        dq.set_row_block(j * dh, &dqj);
        dk.set_row_block(j * dh, &dkj);
        dv.set_row_block(j * dh, &dvj);
    }

    grads.wq.add_assign(&dq.matmul_nt(&trace.n1));
    grads.wk.add_assign(&dk.matmul_nt(&trace.n1));
    grads.wv.add_assign(&dv.matmul_nt(&trace.n1));

    let mut dn1 = layer.wq.matmul_tn(&dq);
    dn1.add_assign(&layer.wk.matmul_tn(&dk));
    dn1.add_assign(&layer.wv.matmul_tn(&dv));

    let mut dz_in =
        layer_norm_backward(&trace.ln1, &layer.ln1_gain, &dn1, &mut grads.ln1_gain, &mut grads.ln1_bias);
    dz_in.add_assign(&dz_mid);
    dz_in
}

/// Encoder stage (Eq. 8): project each step to the embedding, add the
/// positional table and run the pre-norm self-attention layers. Input is
/// features x steps; output H1 is n x d.
pub fn encode_sequence(
    enc: &EncoderParams,
    pos_enc: &Mat,
    seq: &Mat,
    heads: usize,
) -> Result<EncoderTrace, QNetError> {
    if seq.rows() != enc.w_in.cols() {
        return Err(QNetError::ShapeMismatch(format!(
            "sequence has {} features, projection expects {}",
            seq.rows(),
            enc.w_in.cols()
        )));
    }
    if seq.cols() != pos_enc.cols() || pos_enc.rows() != enc.w_in.rows() {
        return Err(QNetError::ShapeMismatch(format!(
            "sequence window {} with positional table {}x{}",
            seq.cols(),
            pos_enc.rows(),
            pos_enc.cols()
        )));
    }
    if !seq.all_finite() {
        return Err(QNetError::NonFinite("input sequence"));
    }

    let mut z = enc.w_in.matmul(seq);
    z.add_col_broadcast_assign(&enc.b_in);
    z.add_assign(pos_enc);

    let mut layers = Vec::with_capacity(enc.layers.len());
    for layer in &enc.layers {
        let (z_next, trace) = encoder_layer_forward(layer, &z, heads);
        layers.push(trace);
        z = z_next;
    }

    let h2 = compress(enc, &z);
    Ok(EncoderTrace { x: seq.clone(), layers, h1: z, h2 })
}

/// Compression stage (Eq. 9): flatten H1 row-major and squash through the
/// dense layer, tanh keeps every component in (-1, 1).
pub fn compress(enc: &EncoderParams, h1: &Mat) -> Mat {
    let flat = Mat::from_vec(h1.len(), 1, h1.data().to_vec());
    let mut pre = enc.w_compress.matmul(&flat);
    pre.add_assign(&enc.b_compress);
    pre.map(tanh_fast)
}

/// Flag-injection stage (Eq. 10-11): concat [H2, ResFlag, HoldTime] and
/// apply the dense layer with tanh.
pub fn inject_flags(w_flags: &Mat, b_flags: &Mat, h2: &Mat, res_flag: f64, hold_time: f64) -> Mat {
    let n = h2.rows();
    let mut u = Vec::with_capacity(n + 2);
    u.extend_from_slice(h2.data());
    u.push(res_flag);
    u.push(hold_time);
    let u = Mat::from_vec(n + 2, 1, u);
    let mut pre = w_flags.matmul(&u);
    pre.add_assign(b_flags);
    pre.map(tanh_fast)
}

/// Channel attention (Eq. 12-14): bilinear scores a_p = O_p^T W H4,
/// softmax-normalized into weights, then the weighted sum of the O_p.
pub fn fuse_periods(
    w_bilinear: &Mat,
    h4: &Mat,
    obs_vecs: &[&Mat],
) -> Result<(Mat, Vec<f64>), QNetError> {
    if obs_vecs.is_empty() {
        return Err(QNetError::EmptyPeriodSet);
    }
    let wq = w_bilinear.matmul(h4);
    let scores: Vec<f64> = obs_vecs
        .iter()
        .map(|o| o.data().iter().zip(wq.data()).map(|(a, b)| a * b).sum())
        .collect();
    let mut sm = Mat::from_vec(1, scores.len(), scores);
    softmax_rows(&mut sm);
    let weights = sm.data().to_vec();
    let mut fused = Mat::zeros(h4.rows(), 1);
    for (o, &e) in obs_vecs.iter().zip(&weights) {
        fused.add_scaled_assign(o, e);
    }
    Ok((fused, weights))
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    pub(crate) seq: EncoderTrace,
    h4: Mat,
    obs: Vec<EncoderTrace>,
    weights: Vec<f64>,
    wq_h4: Mat,
    fused: Mat,
    res_flag: f64,
    hold_time: f64,
    q: [f64; 2],
}

impl ForwardTrace {
    pub fn q(&self) -> [f64; 2] {
        self.q
    }

    /// Channel-attention weights e_p, summing to one.
    pub fn fusion_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn obs_traces(&self) -> &[EncoderTrace] {
        &self.obs
    }
}

/// Full forward pass; the trace feeds [`backward`].
pub fn forward(
    params: &QNetworkParams,
    state: &MarketState,
) -> Result<ForwardTrace, QNetError> {
    if state.obs.len() != params.obs.len() {
        return Err(QNetError::ShapeMismatch(format!(
            "state has {} period sequences, network expects {}",
            state.obs.len(),
            params.obs.len()
        )));
    }
    if !(state.res_flag.is_finite() && state.hold_time.is_finite()) {
        return Err(QNetError::NonFinite("state flags"));
    }

    let seq = encode_sequence(&params.seq, &params.pos_enc, &state.seq, params.hyper.heads)?;
    let h4 = inject_flags(&params.w_flags, &params.b_flags, &seq.h2, state.res_flag, state.hold_time);

    let mut obs = Vec::with_capacity(params.obs.len());
    for (enc, mat) in params.obs.iter().zip(&state.obs) {
        obs.push(encode_sequence(enc, &params.pos_enc, mat, params.hyper.heads)?);
    }

    let obs_vecs: Vec<&Mat> = obs.iter().map(|t| &t.h2).collect();
    let (fused, weights) = fuse_periods(&params.w_bilinear, &h4, &obs_vecs)?;
    let wq_h4 = params.w_bilinear.matmul(&h4);

    let n = params.hyper.embed_dim;
    let mut z = Vec::with_capacity(2 * n);
    z.extend_from_slice(h4.data());
    z.extend_from_slice(fused.data());
    let z = Mat::from_vec(2 * n, 1, z);
    let mut qv = params.w_head.matmul(&z);
    qv.add_assign(&params.b_head);
    let q = [qv.at(0, 0), qv.at(1, 0)];
    if !q[0].is_finite() || !q[1].is_finite() {
        return Err(QNetError::NonFinite("q values"));
    }

    Ok(ForwardTrace { seq, h4, obs, weights, wq_h4, fused, res_flag: state.res_flag, hold_time: state.hold_time, q })
}

/// Action values for a state.
pub fn q_values(params: &QNetworkParams, state: &MarketState) -> Result<[f64; 2], QNetError> {
    forward(params, state).map(|t| t.q)
}

fn encoder_backward(
    enc: &EncoderParams,
    grads: &mut EncoderParams,
    trace: &EncoderTrace,
    heads: usize,
    dh2: &Mat,
) {
    // Compression: h2 = tanh(Wc flat + bc).
    let mut dpre = dh2.clone();
    for (g, y) in dpre.data_mut().iter_mut().zip(trace.h2.data()) {
        *g *= 1.0 - y * y;
    }
    let flat = Mat::from_vec(trace.h1.len(), 1, trace.h1.data().to_vec());
    grads.w_compress.add_assign(&dpre.matmul_nt(&flat));
    grads.b_compress.add_assign(&dpre);
    let dflat = enc.w_compress.matmul_tn(&dpre);
    let mut dz = Mat::from_vec(trace.h1.rows(), trace.h1.cols(), dflat.data().to_vec());

    for i in (0..enc.layers.len()).rev() {
        dz = encoder_layer_backward(&enc.layers[i], &mut grads.layers[i], &trace.layers[i], heads, &dz);
    }

    // Projection: z0 = W_in x + b_in + pos_enc (positional table is fixed).
    grads.w_in.add_assign(&dz.matmul_nt(&trace.x));
    grads.b_in.add_assign(&dz.sum_cols());
}

/// Accumulate exact reverse-mode gradients of `dq . q` into `grads`
/// (a [`QNetworkParams::zeros_like`] container).
pub fn backward(
    params: &QNetworkParams,
    trace: &ForwardTrace,
    dq: [f64; 2],
    grads: &mut QNetworkParams,
) {
    let n = params.hyper.embed_dim;
    let dqv = Mat::from_vec(2, 1, vec![dq[0], dq[1]]);

    // Head: q = W_head [h4; fused] + b_head.
    let mut z = Vec::with_capacity(2 * n);
    z.extend_from_slice(trace.h4.data());
    z.extend_from_slice(trace.fused.data());
    let z = Mat::from_vec(2 * n, 1, z);
    grads.w_head.add_assign(&dqv.matmul_nt(&z));
    grads.b_head.add_assign(&dqv);
    let dz = params.w_head.matmul_tn(&dqv);
    let mut dh4 = Mat::from_vec(n, 1, dz.data()[..n].to_vec());
    let dfused = Mat::from_vec(n, 1, dz.data()[n..].to_vec());

    // Fusion: fused = sum_p e_p O_p with e = softmax(a), a_p = O_p^T W h4.
    let de: Vec<f64> = trace
        .obs
        .iter()
        .map(|t| t.h2.data().iter().zip(dfused.data()).map(|(a, b)| a * b).sum())
        .collect();
    let e = Mat::from_vec(1, trace.weights.len(), trace.weights.clone());
    let de = Mat::from_vec(1, de.len(), de);
    let da = softmax_rows_backward(&e, &de);

    for (i, (obs_trace, enc)) in trace.obs.iter().zip(&params.obs).enumerate() {
        let da_p = da.at(0, i);
        // dO_p from the weighted sum and from its bilinear score.
        let mut dop = Mat::zeros(n, 1);
        dop.add_scaled_assign(&dfused, trace.weights[i]);
        dop.add_scaled_assign(&trace.wq_h4, da_p);
        // dW from a_p = O_p^T W h4.
        grads.w_bilinear.add_assign(&{
            let mut outer = obs_trace.h2.matmul_nt(&trace.h4);
            outer.scale_assign(da_p);
            outer
        });
        // dh4 contribution through the score: da_p * W^T O_p.
        dh4.add_scaled_assign(&params.w_bilinear.matmul_tn(&obs_trace.h2), da_p);

        let grads_enc = &mut grads.obs[i];
        encoder_backward(enc, grads_enc, obs_trace, params.hyper.heads, &dop);
    }

    // Flags: h4 = tanh(W_flags [h2; res; hold] + b_flags).
    let mut dpre = dh4;
    for (g, y) in dpre.data_mut().iter_mut().zip(trace.h4.data()) {
        *g *= 1.0 - y * y;
    }
    let mut u = Vec::with_capacity(n + 2);
    u.extend_from_slice(trace.seq.h2.data());
    u.push(trace.res_flag);
    u.push(trace.hold_time);
    let u = Mat::from_vec(n + 2, 1, u);
    grads.w_flags.add_assign(&dpre.matmul_nt(&u));
    grads.b_flags.add_assign(&dpre);
    let du = params.w_flags.matmul_tn(&dpre);
    let dh2 = Mat::from_vec(n, 1, du.data()[..n].to_vec());

    encoder_backward(&params.seq, &mut grads.seq, &trace.seq, params.hyper.heads, &dh2);
}
