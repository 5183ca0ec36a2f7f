//! Toy learned compressor: MLP encoder, scalar quantizer with a learned
//! codebook, factorized categorical prior, MLP decoder.
//!
//! The quantizer is straight-through: the forward pass snaps every latent to
//! its nearest center (hard one-hot), the backward pass differentiates the
//! relaxation `softmax(-τ (z - c_k)^2)` instead. Both the distortion and the
//! rate flow back through that relaxation into the encoder and the codebook;
//! the rate also trains the prior logits directly.
//!
//! Rate is the cross-entropy of the hard symbols under the prior, in bits,
//! summed over latents and divided by the input dimension (bits per input
//! dimension, the analog of bits per pixel). Distortion is the MSE per input
//! dimension.

use std::f64::consts::LN_2;

use super::{BatchLosses, ObjectiveModel, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::math::{Matrix, RealVec, SeededRng};

/// Codebook min-gap below which centers are treated as collapsed.
pub const COLLAPSE_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressorSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub codebook_size: usize,
    pub ste_temperature: f64,
}

impl Default for CompressorSpec {
    fn default() -> Self {
        Self {
            input_dim: 16,
            latent_dim: 8,
            hidden_dim: 32,
            codebook_size: 8,
            ste_temperature: 10.0,
        }
    }
}

impl CompressorSpec {
    /// Same network with half the latent channels.
    pub fn half_capacity(&self) -> Self {
        Self {
            latent_dim: (self.latent_dim / 2).max(1),
            ..self.clone()
        }
    }

    /// `latent_dim * log2(K)` bits per sample.
    pub fn capacity_bits_per_sample(&self) -> f64 {
        self.latent_dim as f64 * (self.codebook_size as f64).log2()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        if self.codebook_size < 2 {
            return Err(Error::invalid("codebook_size", "must be >= 2"));
        }
        if !(self.ste_temperature > 0.0 && self.ste_temperature.is_finite()) {
            return Err(Error::invalid("ste_temperature", "must be > 0"));
        }
        Ok(())
    }
}

/// Offsets of each weight block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    enc_w1: usize,
    enc_b1: usize,
    enc_w2: usize,
    enc_b2: usize,
    codebook: usize,
    dec_w1: usize,
    dec_b1: usize,
    dec_w2: usize,
    dec_b2: usize,
    prior: usize,
}

#[derive(Debug, Clone)]
pub struct Compressor {
    spec: CompressorSpec,
    layout: ParamLayout,
    off: Offsets,
}

impl Compressor {
    pub fn new(spec: CompressorSpec) -> Result<Self> {
        spec.validate()?;
        let (n, h, l, k) = (
            spec.input_dim,
            spec.hidden_dim,
            spec.latent_dim,
            spec.codebook_size,
        );
        let enc = h * n + h + l * h + l;
        let dec = h * l + h + n * h + n;
        let layout = ParamLayout::new([
            ("encoder", enc),
            ("codebook", k),
            ("decoder", dec),
            ("prior", l * k),
        ])?;
        let enc_w1 = 0;
        let enc_b1 = enc_w1 + h * n;
        let enc_w2 = enc_b1 + h;
        let enc_b2 = enc_w2 + l * h;
        let codebook = enc_b2 + l;
        let dec_w1 = codebook + k;
        let dec_b1 = dec_w1 + h * l;
        let dec_w2 = dec_b1 + h;
        let dec_b2 = dec_w2 + n * h;
        let prior = dec_b2 + n;
        debug_assert_eq!(prior + l * k, layout.len());
        Ok(Self {
            spec,
            layout,
            off: Offsets {
                enc_w1,
                enc_b1,
                enc_w2,
                enc_b2,
                codebook,
                dec_w1,
                dec_b1,
                dec_w2,
                dec_b2,
                prior,
            },
        })
    }

    pub fn spec(&self) -> &CompressorSpec {
        &self.spec
    }

    /// Encoder outputs (pre-quantization latents) for every row of `batch`.
    pub fn encode(&self, params: &[f64], batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut out = Matrix::zeros(batch.rows(), self.spec.latent_dim);
        let mut hidden = vec![0.0; self.spec.hidden_dim];
        for (i, x) in batch.iter_rows().enumerate() {
            self.encoder_forward(params, x, &mut hidden, out.row_mut(i));
        }
        Ok(out)
    }

    /// Hard symbol index for every latent of every row.
    pub fn symbols(&self, params: &[f64], batch: &Matrix) -> Result<Vec<usize>> {
        let z = self.encode(params, batch)?;
        let codebook = &params[self.off.codebook..self.off.codebook + self.spec.codebook_size];
        Ok(z.data().iter().map(|&v| nearest(codebook, v)).collect())
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch.cols() != self.spec.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.spec.input_dim,
                got: batch.cols(),
            });
        }
        Ok(())
    }

    fn encoder_forward(&self, p: &[f64], x: &[f64], hidden: &mut [f64], z: &mut [f64]) {
        let s = &self.spec;
        let o = &self.off;
        affine(
            &p[o.enc_w1..o.enc_b1],
            &p[o.enc_b1..o.enc_w2],
            x,
            hidden,
            s.input_dim,
        );
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        affine(
            &p[o.enc_w2..o.enc_b2],
            &p[o.enc_b2..o.codebook],
            hidden,
            z,
            s.hidden_dim,
        );
    }

    /// Backpropagates the distortion and rate upstreams `dz_d`, `dz_r` through
    /// the encoder in one pass.
    #[allow(clippy::too_many_arguments)]
    fn encoder_backward(
        &self,
        p: &[f64],
        x: &[f64],
        hidden: &[f64],
        dz_d: &[f64],
        dz_r: &[f64],
        dh_d: &mut [f64],
        dh_r: &mut [f64],
        grad_d: &mut [f64],
        grad_r: &mut [f64],
    ) {
        let s = &self.spec;
        let o = &self.off;
        let hd = s.hidden_dim;
        let w2 = &p[o.enc_w2..o.enc_b2];
        dh_d.iter_mut().for_each(|v| *v = 0.0);
        dh_r.iter_mut().for_each(|v| *v = 0.0);
        for (r, (&dd, &dr)) in dz_d.iter().zip(dz_r).enumerate() {
            grad_d[o.enc_b2 + r] += dd;
            grad_r[o.enc_b2 + r] += dr;
            let row = &w2[r * hd..(r + 1) * hd];
            let base = o.enc_w2 + r * hd;
            for i in 0..hd {
                grad_d[base + i] += dd * hidden[i];
                grad_r[base + i] += dr * hidden[i];
                dh_d[i] += dd * row[i];
                dh_r[i] += dr * row[i];
            }
        }
        let n = s.input_dim;
        for r in 0..hd {
            let deriv = 1.0 - hidden[r] * hidden[r];
            let (dd, dr) = (dh_d[r] * deriv, dh_r[r] * deriv);
            grad_d[o.enc_b1 + r] += dd;
            grad_r[o.enc_b1 + r] += dr;
            let base = o.enc_w1 + r * n;
            for i in 0..n {
                grad_d[base + i] += dd * x[i];
                grad_r[base + i] += dr * x[i];
            }
        }
    }
}

/// Index of the nearest center; ties resolve to the lowest index.
fn nearest(codebook: &[f64], z: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in codebook.iter().enumerate() {
        let d = (z - c) * (z - c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// `out = W x + b`, with `W` row-major `out.len() x in_dim`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64], in_dim: usize) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * in_dim..(r + 1) * in_dim];
        *o = b[r] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// Accumulates weight and bias gradients of `out = W x + b` and writes `dx`.
#[allow(clippy::too_many_arguments)]
fn affine_backward(
    w: &[f64],
    x: &[f64],
    dout: &[f64],
    dx: &mut [f64],
    grad: &mut [f64],
    w_off: usize,
    b_off: usize,
    in_dim: usize,
) {
    dx.iter_mut().for_each(|v| *v = 0.0);
    for (r, &d) in dout.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[b_off + r] += d;
        let row = &w[r * in_dim..(r + 1) * in_dim];
        let grow = &mut grad[w_off + r * in_dim..w_off + (r + 1) * in_dim];
        for i in 0..in_dim {
            grow[i] += d * x[i];
            dx[i] += d * row[i];
        }
    }
}

/// Soft assignment `softmax(-τ (z - c_k)^2)` written into `soft`.
fn soft_assignment(codebook: &[f64], z: f64, tau: f64, soft: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (s, c) in soft.iter_mut().zip(codebook) {
        *s = -tau * (z - c) * (z - c);
        max = max.max(*s);
    }
    let mut total = 0.0;
    for s in soft.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    soft.iter_mut().for_each(|s| *s /= total);
}

/// Straight-through backward of one latent.
///
/// `upstream[k]` is the loss gradient with respect to the assignment weight of
/// center `k`. The relaxation turns that into a gradient on `z` (returned) and
/// on each center (accumulated into `grad_codebook`).
pub(crate) fn ste_backward(
    codebook: &[f64],
    z: f64,
    tau: f64,
    soft: &[f64],
    upstream: &[f64],
    grad_codebook: &mut [f64],
) -> f64 {
    let mean: f64 = soft.iter().zip(upstream).map(|(s, g)| s * g).sum();
    let mut dz = 0.0;
    for k in 0..codebook.len() {
        // d/du_k of the softmax contracted with upstream.
        let du = soft[k] * (upstream[k] - mean);
        let diff = z - codebook[k];
        dz += du * (-2.0 * tau * diff);
        grad_codebook[k] += du * (2.0 * tau * diff);
    }
    dz
}

/// Row-wise log-softmax of the prior logits (natural log).
fn prior_log_probs(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, dst) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (d, v) in dst.iter_mut().zip(row) {
            *d = v - lse;
        }
    }
    out
}

fn min_gap(codebook: &[f64]) -> f64 {
    let mut sorted = codebook.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Full forward and straight-through backward pass.
pub fn compressor_forward(
    model: &Compressor,
    params: &ParamVector,
    batch: &Matrix,
) -> Result<BatchLosses> {
    if params.len() != model.layout.len() {
        return Err(Error::LengthMismatch {
            expected: model.layout.len(),
            got: params.len(),
        });
    }
    model.check_batch(batch)?;
    let s = &model.spec;
    let o = model.off;
    let p = params.as_slice();
    let (n, h, l, k) = (s.input_dim, s.hidden_dim, s.latent_dim, s.codebook_size);
    let tau = s.ste_temperature;
    let codebook = &p[o.codebook..o.codebook + k];
    let log_probs = prior_log_probs(&p[o.prior..o.prior + l * k], k);

    let norm = (batch.rows() * n) as f64;
    let dist_scale = 2.0 / norm;
    let rate_scale = 1.0 / (norm * LN_2);

    let mut grad_rate = vec![0.0; p.len()];
    let mut grad_dist = vec![0.0; p.len()];
    let mut rate_bits = 0.0;
    let mut sq_err = 0.0;

    let mut h1 = vec![0.0; h];
    let mut z = vec![0.0; l];
    let mut q = vec![0.0; l];
    let mut sym = vec![0usize; l];
    let mut soft = vec![0.0; l * k];
    let mut h2 = vec![0.0; h];
    let mut xhat = vec![0.0; n];
    let mut d_xhat = vec![0.0; n];
    let mut d_h2 = vec![0.0; h];
    let mut d_q = vec![0.0; l];
    let mut d_z = vec![0.0; l];
    let mut d_zr = vec![0.0; l];
    let mut d_h1 = vec![0.0; h];
    let mut d_h1r = vec![0.0; h];
    let mut upstream = vec![0.0; k];
    // Prior gradient is Σ_batch (p - onehot); the p part is added once at the end.
    let mut symbol_counts = vec![0.0; l * k];

    for x in batch.iter_rows() {
        model.encoder_forward(p, x, &mut h1, &mut z);
        for j in 0..l {
            let kj = nearest(codebook, z[j]);
            sym[j] = kj;
            q[j] = codebook[kj];
            soft_assignment(codebook, z[j], tau, &mut soft[j * k..(j + 1) * k]);
            rate_bits -= log_probs[j * k + kj] / LN_2;
        }

        affine(&p[o.dec_w1..o.dec_b1], &p[o.dec_b1..o.dec_w2], &q, &mut h2, l);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        affine(&p[o.dec_w2..o.dec_b2], &p[o.dec_b2..o.prior], &h2, &mut xhat, h);
        for i in 0..n {
            let e = xhat[i] - x[i];
            sq_err += e * e;
            d_xhat[i] = dist_scale * e;
        }
        if !sq_err.is_finite() {
            return Err(Error::non_finite("compressor activations"));
        }

        // Distortion path: decoder, then straight-through quantizer, then encoder.
        affine_backward(
            &p[o.dec_w2..o.dec_b2],
            &h2,
            &d_xhat,
            &mut d_h2,
            &mut grad_dist,
            o.dec_w2,
            o.dec_b2,
            h,
        );
        for (d, hv) in d_h2.iter_mut().zip(&h2) {
            *d *= 1.0 - hv * hv;
        }
        affine_backward(
            &p[o.dec_w1..o.dec_b1],
            &q,
            &d_h2,
            &mut d_q,
            &mut grad_dist,
            o.dec_w1,
            o.dec_b1,
            l,
        );
        for j in 0..l {
            // Direct path q_j = sum_k a_k c_k, with the soft weights standing in for a.
            for (g, a) in grad_dist[o.codebook..o.codebook + k].iter_mut().zip(&soft[j * k..(j + 1) * k]) {
                *g += d_q[j] * a;
            }
            for (u, c) in upstream.iter_mut().zip(codebook) {
                *u = d_q[j] * c;
            }
            d_z[j] = ste_backward(
                codebook,
                z[j],
                tau,
                &soft[j * k..(j + 1) * k],
                &upstream,
                &mut grad_dist[o.codebook..o.codebook + k],
            );
        }

        // Rate path: prior logits directly, codebook and encoder through the relaxation.
        for j in 0..l {
            let lp = &log_probs[j * k..(j + 1) * k];
            symbol_counts[j * k + sym[j]] += 1.0;
            for m in 0..k {
                upstream[m] = -lp[m] * rate_scale;
            }
            d_zr[j] = ste_backward(
                codebook,
                z[j],
                tau,
                &soft[j * k..(j + 1) * k],
                &upstream,
                &mut grad_rate[o.codebook..o.codebook + k],
            );
        }
        model.encoder_backward(
            p,
            x,
            &h1,
            &d_z,
            &d_zr,
            &mut d_h1,
            &mut d_h1r,
            &mut grad_dist,
            &mut grad_rate,
        );
    }
    let rows = batch.rows() as f64;
    for (i, (lp, count)) in log_probs.iter().zip(&symbol_counts).enumerate() {
        grad_rate[o.prior + i] += rate_scale * (rows * lp.exp() - count);
    }

    let mut losses = BatchLosses::checked(rate_bits / norm, sq_err / norm, grad_rate, grad_dist)?;
    losses.codebook_min_gap = Some(min_gap(codebook));
    Ok(losses)
}

impl ObjectiveModel for Compressor {
    fn name(&self) -> &str {
        "compressor"
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.spec.input_dim)
    }

    fn capacity_bits(&self) -> Option<f64> {
        Some(self.spec.capacity_bits_per_sample() / self.spec.input_dim as f64)
    }

    /// Fan-in uniform weights, zero biases, uniform prior, and a codebook laid
    /// out as a uniform grid over the range of the initial encoder's outputs on
    /// `calibration`.
    fn init_params(&self, rng: &mut SeededRng, calibration: &Matrix) -> Result<ParamVector> {
        let s = &self.spec;
        let o = self.off;
        let mut p = vec![0.0; self.layout.len()];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut SeededRng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[range] {
                *v = rng.uniform_range(-bound, bound);
            }
        };
        fill(o.enc_w1..o.enc_b1, s.input_dim, rng);
        fill(o.enc_w2..o.enc_b2, s.hidden_dim, rng);
        fill(o.dec_w1..o.dec_b1, s.latent_dim, rng);
        fill(o.dec_w2..o.dec_b2, s.hidden_dim, rng);

        let z = self.encode(&p, calibration)?;
        let lo = z.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo > 1e-6 { (lo, hi) } else { (-1.0, 1.0) };
        let k = s.codebook_size;
        for i in 0..k {
            p[o.codebook + i] = lo + (hi - lo) * i as f64 / (k - 1) as f64;
        }
        ParamVector::new(RealVec::new(p)?, self.layout.clone())
    }

    fn evaluate(&self, params: &ParamVector, batch: &Matrix) -> Result<BatchLosses> {
        compressor_forward(self, params, batch)
    }

    fn smooth_segments(&self) -> Vec<String> {
        vec!["decoder".into(), "prior".into()]
    }

    fn sample_check_point(&self, rng: &mut SeededRng) -> Result<(ParamVector, Matrix)> {
        let n = self.spec.input_dim;
        let rows = 8;
        let data: Vec<f64> = (0..rows * n).map(|_| rng.standard_normal()).collect();
        let batch = Matrix::new(rows, n, data)?;
        let mut params = self.init_params(rng, &batch)?.values.into_inner();
        let prior = self.layout.segment("prior").expect("prior segment").range();
        let dec = self.layout.segment("decoder").expect("decoder segment").range();
        for v in &mut params[prior] {
            *v = rng.uniform_range(-1.0, 1.0);
        }
        for v in &mut params[dec] {
            *v += rng.uniform_range(-0.2, 0.2);
        }
        Ok((ParamVector::new(RealVec::new(params)?, self.layout.clone())?, batch))
    }
}
