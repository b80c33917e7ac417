//! Small GRU encoder-decoder with exact hand-written reverse-mode gradients.
//!
//! Everything is plain `f64` vectors: parameters are named [`Tensor`]s, the
//! forward pass records per-step caches, and [`ToyModel::backward`] replays
//! them in reverse. Gradients flow only through the log-probability outputs;
//! sampled conditioning tokens are treated as data.

use std::rc::Rc;

use ocd_core::seq::{Sequence, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hyper-parameters of the toy encoder-decoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Content tokens; the output distribution covers `vocab_size + 1`
    /// entries with eos last.
    pub vocab_size: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub use_attention: bool,
    pub seed: u64,
}

fn default_embed_dim() -> usize {
    32
}

fn default_hidden_dim() -> usize {
    64
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("vocab_size must be >= 1, got {0}")]
    VocabTooSmall(usize),
    #[error("embed_dim and hidden_dim must be >= 1")]
    ZeroDim,
    #[error("encoder input must be non-empty")]
    EmptyInput,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < 1 {
            return Err(ModelError::VocabTooSmall(self.vocab_size));
        }
        if self.embed_dim < 1 || self.hidden_dim < 1 {
            return Err(ModelError::ZeroDim);
        }
        Ok(())
    }

    /// Embedding row used for the begin-of-sequence pseudo-token.
    pub fn bos_index(&self) -> usize {
        self.vocab_size
    }

    /// Width of the output distribution (`vocab ∪ {eos}`).
    pub fn output_dim(&self) -> usize {
        self.vocab_size + 1
    }

    fn feat_dim(&self) -> usize {
        if self.use_attention {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Dense row-major tensor; matrices are `[in][out]` so `y = x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    fn xavier(shape: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(shape.len(), 2);
        let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape[0] * shape[1])
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }
}

/// `out[o] = Σ_i x[i] W[i][o] (+ b[o])`
fn affine(x: &[f64], w: &Tensor, b: Option<&Tensor>, out: &mut [f64]) {
    match b {
        Some(b) => out.copy_from_slice(&b.data),
        None => out.fill(0.0),
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &w_io) in w.row(i).iter().enumerate() {
            out[o] += xi * w_io;
        }
    }
}

/// Accumulate `dW[i][o] += x[i] dy[o]` and return `dx[i] = Σ_o W[i][o] dy[o]`.
fn affine_backward(x: &[f64], w: &Tensor, dw: &mut Tensor, dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        let wr = w.row(i);
        let dwr = dw.row_mut(i);
        let mut acc = 0.0;
        for (o, &d) in dy.iter().enumerate() {
            dwr[o] += xi * d;
            acc += wr[o] * d;
        }
        dx[i] = acc;
    }
    dx
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights of one gated recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub wz: Tensor,
    pub wr: Tensor,
    pub wh: Tensor,
    pub uz: Tensor,
    pub ur: Tensor,
    pub uh: Tensor,
    pub bz: Tensor,
    pub br: Tensor,
    pub bh: Tensor,
}

impl GruWeights {
    fn zeros(input: usize, hidden: usize) -> Self {
        GruWeights {
            wz: Tensor::zeros(&[input, hidden]),
            wr: Tensor::zeros(&[input, hidden]),
            wh: Tensor::zeros(&[input, hidden]),
            uz: Tensor::zeros(&[hidden, hidden]),
            ur: Tensor::zeros(&[hidden, hidden]),
            uh: Tensor::zeros(&[hidden, hidden]),
            bz: Tensor::zeros(&[hidden]),
            br: Tensor::zeros(&[hidden]),
            bh: Tensor::zeros(&[hidden]),
        }
    }

    fn xavier(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        GruWeights {
            wz: Tensor::xavier(&[input, hidden], rng),
            wr: Tensor::xavier(&[input, hidden], rng),
            wh: Tensor::xavier(&[input, hidden], rng),
            uz: Tensor::xavier(&[hidden, hidden], rng),
            ur: Tensor::xavier(&[hidden, hidden], rng),
            uh: Tensor::xavier(&[hidden, hidden], rng),
            bz: Tensor::zeros(&[hidden]),
            br: Tensor::zeros(&[hidden]),
            bh: Tensor::zeros(&[hidden]),
        }
    }
}

/// All trainable tensors, addressable by name for the optimizer, checkpoints
/// and finite-difference tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed: Tensor,
    pub enc: GruWeights,
    pub dec: GruWeights,
    pub w_att: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        ModelParams {
            embed: Tensor::zeros(&[v + 1, e]),
            enc: GruWeights::zeros(e, h),
            dec: GruWeights::zeros(e, h),
            w_att: Tensor::zeros(&[h, h]),
            w_out: Tensor::zeros(&[config.feat_dim(), v + 1]),
            b_out: Tensor::zeros(&[v + 1]),
        }
    }

    /// Xavier-uniform matrices, zero biases; deterministic in the seed.
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        ModelParams {
            embed: Tensor::xavier(&[v + 1, e], &mut rng),
            enc: GruWeights::xavier(e, h, &mut rng),
            dec: GruWeights::xavier(e, h, &mut rng),
            w_att: Tensor::xavier(&[h, h], &mut rng),
            w_out: Tensor::xavier(&[config.feat_dim(), v + 1], &mut rng),
            b_out: Tensor::zeros(&[v + 1]),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("embed", &self.embed),
            ("enc.wz", &self.enc.wz),
            ("enc.wr", &self.enc.wr),
            ("enc.wh", &self.enc.wh),
            ("enc.uz", &self.enc.uz),
            ("enc.ur", &self.enc.ur),
            ("enc.uh", &self.enc.uh),
            ("enc.bz", &self.enc.bz),
            ("enc.br", &self.enc.br),
            ("enc.bh", &self.enc.bh),
            ("dec.wz", &self.dec.wz),
            ("dec.wr", &self.dec.wr),
            ("dec.wh", &self.dec.wh),
            ("dec.uz", &self.dec.uz),
            ("dec.ur", &self.dec.ur),
            ("dec.uh", &self.dec.uh),
            ("dec.bz", &self.dec.bz),
            ("dec.br", &self.dec.br),
            ("dec.bh", &self.dec.bh),
            ("w_att", &self.w_att),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("embed", &mut self.embed),
            ("enc.wz", &mut self.enc.wz),
            ("enc.wr", &mut self.enc.wr),
            ("enc.wh", &mut self.enc.wh),
            ("enc.uz", &mut self.enc.uz),
            ("enc.ur", &mut self.enc.ur),
            ("enc.uh", &mut self.enc.uh),
            ("enc.bz", &mut self.enc.bz),
            ("enc.br", &mut self.enc.br),
            ("enc.bh", &mut self.enc.bh),
            ("dec.wz", &mut self.dec.wz),
            ("dec.wr", &mut self.dec.wr),
            ("dec.wh", &mut self.dec.wh),
            ("dec.uz", &mut self.dec.uz),
            ("dec.ur", &mut self.dec.ur),
            ("dec.uh", &mut self.dec.uh),
            ("dec.bz", &mut self.dec.bz),
            ("dec.br", &mut self.dec.br),
            ("dec.bh", &mut self.dec.bh),
            ("w_att", &mut self.w_att),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-step cache of a GRU cell application.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    hc: Vec<f64>,
    pub h: Vec<f64>,
}

fn gru_forward(w: &GruWeights, x: Vec<f64>, h_prev: Vec<f64>) -> GruStepCache {
    let hdim = w.bz.data.len();
    let mut az = vec![0.0; hdim];
    let mut ar = vec![0.0; hdim];
    let mut ah = vec![0.0; hdim];
    affine(&x, &w.wz, Some(&w.bz), &mut az);
    affine(&x, &w.wr, Some(&w.br), &mut ar);
    affine(&x, &w.wh, Some(&w.bh), &mut ah);
    let mut tmp = vec![0.0; hdim];
    affine(&h_prev, &w.uz, None, &mut tmp);
    for (a, t) in az.iter_mut().zip(&tmp) {
        *a += t;
    }
    affine(&h_prev, &w.ur, None, &mut tmp);
    for (a, t) in ar.iter_mut().zip(&tmp) {
        *a += t;
    }
    let z: Vec<f64> = az.iter().map(|&a| sigmoid(a)).collect();
    let r: Vec<f64> = ar.iter().map(|&a| sigmoid(a)).collect();
    let rh: Vec<f64> = r.iter().zip(&h_prev).map(|(&ri, &hi)| ri * hi).collect();
    affine(&rh, &w.uh, None, &mut tmp);
    for (a, t) in ah.iter_mut().zip(&tmp) {
        *a += t;
    }
    let hc: Vec<f64> = ah.iter().map(|&a| a.tanh()).collect();
    let h: Vec<f64> = z
        .iter()
        .zip(&hc)
        .zip(&h_prev)
        .map(|((&zi, &hci), &hpi)| (1.0 - zi) * hpi + zi * hci)
        .collect();
    GruStepCache {
        x,
        h_prev,
        z,
        r,
        hc,
        h,
    }
}

/// Returns `(dx, dh_prev)` and accumulates weight gradients into `g`.
fn gru_backward(
    w: &GruWeights,
    g: &mut GruWeights,
    cache: &GruStepCache,
    dh: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let hdim = dh.len();
    let mut dz = vec![0.0; hdim];
    let mut dhc = vec![0.0; hdim];
    let mut dh_prev = vec![0.0; hdim];
    for i in 0..hdim {
        dz[i] = dh[i] * (cache.hc[i] - cache.h_prev[i]);
        dhc[i] = dh[i] * cache.z[i];
        dh_prev[i] = dh[i] * (1.0 - cache.z[i]);
    }
    let dah: Vec<f64> = dhc
        .iter()
        .zip(&cache.hc)
        .map(|(&d, &hc)| d * (1.0 - hc * hc))
        .collect();
    let daz: Vec<f64> = dz
        .iter()
        .zip(&cache.z)
        .map(|(&d, &z)| d * z * (1.0 - z))
        .collect();

    let rh: Vec<f64> = cache
        .r
        .iter()
        .zip(&cache.h_prev)
        .map(|(&r, &h)| r * h)
        .collect();
    let drh = affine_backward(&rh, &w.uh, &mut g.uh, &dah);
    let dr: Vec<f64> = drh
        .iter()
        .zip(&cache.h_prev)
        .map(|(&d, &h)| d * h)
        .collect();
    for i in 0..hdim {
        dh_prev[i] += drh[i] * cache.r[i];
    }
    let dar: Vec<f64> = dr
        .iter()
        .zip(&cache.r)
        .map(|(&d, &r)| d * r * (1.0 - r))
        .collect();

    for i in 0..hdim {
        g.bz.data[i] += daz[i];
        g.br.data[i] += dar[i];
        g.bh.data[i] += dah[i];
    }
    let mut dx = affine_backward(&cache.x, &w.wz, &mut g.wz, &daz);
    for (d, v) in dx
        .iter_mut()
        .zip(affine_backward(&cache.x, &w.wr, &mut g.wr, &dar))
    {
        *d += v;
    }
    for (d, v) in dx
        .iter_mut()
        .zip(affine_backward(&cache.x, &w.wh, &mut g.wh, &dah))
    {
        *d += v;
    }
    for (d, v) in dh_prev
        .iter_mut()
        .zip(affine_backward(&cache.h_prev, &w.uz, &mut g.uz, &daz))
    {
        *d += v;
    }
    for (d, v) in dh_prev
        .iter_mut()
        .zip(affine_backward(&cache.h_prev, &w.ur, &mut g.ur, &dar))
    {
        *d += v;
    }
    (dx, dh_prev)
}

#[derive(Debug, Clone)]
struct AttnCache {
    query: Vec<f64>,
    alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DecStepCache {
    gru: GruStepCache,
    attn: Option<AttnCache>,
    feat: Vec<f64>,
    logprobs: Vec<f64>,
}

/// Recorded forward pass over one example; feeds [`ToyModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    enc: Vec<GruStepCache>,
    dec: Vec<DecStepCache>,
    /// Embedding-table rows consumed by the encoder, one per input token.
    enc_tokens: Vec<usize>,
    /// Embedding-table rows consumed by the decoder (bos first).
    prev_rows: Vec<usize>,
}

impl ForwardPass {
    pub fn logprobs(&self) -> Vec<Vec<f64>> {
        self.dec.iter().map(|d| d.logprobs.clone()).collect()
    }

    pub fn step_logprobs(&self, t: usize) -> &[f64] {
        &self.dec[t].logprobs
    }

    pub fn steps(&self) -> usize {
        self.dec.len()
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - log_z).collect()
}

/// The toy encoder-decoder: config plus parameters.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl ToyModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(ToyModel { config, params })
    }

    fn embed_row(&self, row: usize) -> Vec<f64> {
        self.params.embed.row(row).to_vec()
    }

    /// Left-to-right encoder pass; the summary is the final hidden state.
    pub fn encode(&self, x: &Sequence) -> Result<Vec<GruStepCache>, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut caches = Vec::with_capacity(x.len());
        let mut h = vec![0.0; self.config.hidden_dim];
        for &t in x.tokens() {
            assert!(
                (t as usize) < self.config.vocab_size,
                "token {t} out of vocabulary"
            );
            let cache = gru_forward(&self.params.enc, self.embed_row(t as usize), h);
            h = cache.h.clone();
            caches.push(cache);
        }
        Ok(caches)
    }

    fn dec_step(
        &self,
        h_prev: Vec<f64>,
        prev_row: usize,
        enc_states: &[Vec<f64>],
    ) -> DecStepCache {
        let gru = gru_forward(&self.params.dec, self.embed_row(prev_row), h_prev);
        let h = &gru.h;
        let (attn, feat) = if self.config.use_attention {
            let hdim = self.config.hidden_dim;
            let mut query = vec![0.0; hdim];
            affine(h, &self.params.w_att, None, &mut query);
            let scores: Vec<f64> = enc_states
                .iter()
                .map(|s| s.iter().zip(&query).map(|(a, b)| a * b).sum())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut alphas: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
            let z: f64 = alphas.iter().sum();
            for a in &mut alphas {
                *a /= z;
            }
            let mut context = vec![0.0; hdim];
            for (a, s) in alphas.iter().zip(enc_states) {
                for (c, v) in context.iter_mut().zip(s) {
                    *c += a * v;
                }
            }
            let mut feat = h.clone();
            feat.extend_from_slice(&context);
            (Some(AttnCache { query, alphas }), feat)
        } else {
            (None, h.clone())
        };
        let mut logits = vec![0.0; self.config.output_dim()];
        affine(&feat, &self.params.w_out, Some(&self.params.b_out), &mut logits);
        let logprobs = log_softmax(&logits);
        DecStepCache {
            gru,
            attn,
            feat,
            logprobs,
        }
    }

    /// Run encoder and decoder with a fixed list of conditioning tokens.
    ///
    /// `conditioning[t]` is the token the decoder consumes *before* emitting
    /// step `t + 1`; step 0 always consumes the begin-of-sequence row. The
    /// number of output steps is `conditioning.len() + 1`.
    pub fn forward(&self, x: &Sequence, conditioning: &[TokenId]) -> Result<ForwardPass, ModelError> {
        let enc = self.encode(x)?;
        let enc_states: Vec<Vec<f64>> = enc.iter().map(|c| c.h.clone()).collect();
        let mut prev_rows = Vec::with_capacity(conditioning.len() + 1);
        prev_rows.push(self.config.bos_index());
        for &t in conditioning {
            assert!(
                (t as usize) < self.config.vocab_size,
                "conditioning token {t} out of vocabulary"
            );
            prev_rows.push(t as usize);
        }
        let mut dec = Vec::with_capacity(prev_rows.len());
        let mut h = enc_states.last().unwrap().clone();
        for &row in &prev_rows {
            let cache = self.dec_step(h, row, &enc_states);
            h = cache.gru.h.clone();
            dec.push(cache);
        }
        Ok(ForwardPass {
            enc,
            dec,
            enc_tokens: x.tokens().iter().map(|&t| t as usize).collect(),
            prev_rows,
        })
    }

    /// Exact gradients of a scalar loss given its gradient w.r.t. the output
    /// logits at every decoder step.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &[Vec<f64>]) -> ModelParams {
        assert_eq!(dlogits.len(), pass.dec.len());
        let mut g = ModelParams::zeros(&self.config);
        let hdim = self.config.hidden_dim;
        let n_enc = pass.enc.len();
        let mut denc_states = vec![vec![0.0; hdim]; n_enc];
        let enc_states: Vec<&Vec<f64>> = pass.enc.iter().map(|c| &c.h).collect();

        let mut dh_next = vec![0.0; hdim];
        for (t, (cache, dl)) in pass.dec.iter().zip(dlogits).enumerate().rev() {
            let dfeat = affine_backward(&cache.feat, &self.params.w_out, &mut g.w_out, dl);
            for (b, &d) in g.b_out.data.iter_mut().zip(dl) {
                *b += d;
            }
            let mut dh: Vec<f64> = dfeat[..hdim].to_vec();
            for (d, n) in dh.iter_mut().zip(&dh_next) {
                *d += n;
            }
            if let Some(attn) = &cache.attn {
                let dcontext = &dfeat[hdim..];
                let dalphas: Vec<f64> = enc_states
                    .iter()
                    .map(|s| s.iter().zip(dcontext).map(|(a, b)| a * b).sum())
                    .collect();
                for (i, s) in denc_states.iter_mut().enumerate() {
                    for (d, c) in s.iter_mut().zip(dcontext) {
                        *d += attn.alphas[i] * c;
                    }
                }
                let dot: f64 = attn
                    .alphas
                    .iter()
                    .zip(&dalphas)
                    .map(|(&a, &d)| a * d)
                    .sum();
                let dscores: Vec<f64> = attn
                    .alphas
                    .iter()
                    .zip(&dalphas)
                    .map(|(&a, &d)| a * (d - dot))
                    .collect();
                let mut dquery = vec![0.0; hdim];
                for (i, s) in enc_states.iter().enumerate() {
                    for (q, v) in dquery.iter_mut().zip(s.iter()) {
                        *q += dscores[i] * v;
                    }
                    for (d, qv) in denc_states[i].iter_mut().zip(&attn.query) {
                        *d += dscores[i] * qv;
                    }
                }
                let dh_att = affine_backward(&cache.gru.h, &self.params.w_att, &mut g.w_att, &dquery);
                for (d, v) in dh.iter_mut().zip(dh_att) {
                    *d += v;
                }
            }
            let (dx, dh_prev) = gru_backward(&self.params.dec, &mut g.dec, &cache.gru, &dh);
            let row = pass.prev_rows[t];
            for (gv, d) in g.embed.row_mut(row).iter_mut().zip(dx) {
                *gv += d;
            }
            dh_next = dh_prev;
        }
        // The first decoder state is the encoder summary.
        for (d, n) in denc_states[n_enc - 1].iter_mut().zip(&dh_next) {
            *d += n;
        }

        let mut dh_enc = vec![0.0; hdim];
        for (i, cache) in pass.enc.iter().enumerate().rev() {
            for (d, v) in dh_enc.iter_mut().zip(&denc_states[i]) {
                *d += v;
            }
            let (dx, dh_prev) = gru_backward(&self.params.enc, &mut g.enc, cache, &dh_enc);
            for (gv, d) in g.embed.row_mut(pass.enc_tokens[i]).iter_mut().zip(dx) {
                *gv += d;
            }
            dh_enc = dh_prev;
        }
        g
    }

}

/// Adam hyper-parameters with global-norm clipping applied first.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// First/second-moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: &ModelConfig) -> Self {
        OptimizerState {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            step: 0,
        }
    }
}

/// One bias-corrected adaptive update, in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    hp: &AdamParams,
) {
    let norm = grads.global_norm();
    let scale = if norm > hp.clip_norm && norm > 0.0 {
        hp.clip_norm / norm
    } else {
        1.0
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let gs = grads.tensors();
    let moments = state
        .m
        .tensors_mut()
        .into_iter()
        .zip(state.v.tensors_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in
        params.tensors_mut().into_iter().zip(gs).zip(moments)
    {
        assert_eq!(p.shape, g.shape, "gradient shape mismatch");
        for i in 0..p.data.len() {
            let grad = g.data[i] * scale;
            m.data[i] = hp.beta1 * m.data[i] + (1.0 - hp.beta1) * grad;
            v.data[i] = hp.beta2 * v.data[i] + (1.0 - hp.beta2) * grad * grad;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            p.data[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
}

/// Step interface shared by the toy model, decoding and test stubs.
pub trait SeqModel {
    type State: Clone;

    /// Number of content tokens; output vectors have `vocab_size + 1` entries
    /// with eos last.
    fn vocab_size(&self) -> usize;

    /// Condition on the input and return the initial decoder state.
    fn start(&self, x: &Sequence) -> Self::State;

    /// Consume the previous token (`None` at the first step) and return the
    /// log-probability vector over `vocab ∪ {eos}` plus the next state.
    fn step(&self, state: &Self::State, prev: Option<TokenId>) -> (Vec<f64>, Self::State);
}

/// Incremental decoder state of [`ToyModel`].
#[derive(Debug, Clone)]
pub struct ToyState {
    h: Vec<f64>,
    enc_states: Rc<Vec<Vec<f64>>>,
}

impl SeqModel for ToyModel {
    type State = ToyState;

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn start(&self, x: &Sequence) -> ToyState {
        let enc = self.encode(x).expect("non-empty input");
        let enc_states: Vec<Vec<f64>> = enc.into_iter().map(|c| c.h).collect();
        let h = enc_states.last().unwrap().clone();
        ToyState {
            h,
            enc_states: Rc::new(enc_states),
        }
    }

    fn step(&self, state: &ToyState, prev: Option<TokenId>) -> (Vec<f64>, ToyState) {
        let row = match prev {
            None => self.config.bos_index(),
            Some(t) => {
                assert!(
                    (t as usize) < self.config.vocab_size,
                    "token {t} out of vocabulary"
                );
                t as usize
            }
        };
        let cache = self.dec_step(state.h.clone(), row, &state.enc_states);
        (
            cache.logprobs,
            ToyState {
                h: cache.gru.h,
                enc_states: Rc::clone(&state.enc_states),
            },
        )
    }
}
