//! A small conditional sequence model with exact gradients.
//!
//! Encoder: the mean of the source symbol embeddings, `c = mean_t E_src[x_t]`.
//! Decoder: a single tanh recurrence started from `h_0 = tanh(W_init c + b_init)`:
//!
//! ```text
//! h_m = tanh(W_h h_{m-1} + W_u E_tgt[y_{m-1}] + W_c c + b_h),   y_0 = BOS
//! z_m = W_o h_m + b_o,   p_m = softmax(z_m)
//! ```
//!
//! Everything runs in `f64` so gradients can be checked against finite
//! differences and sequence probabilities against exhaustive enumeration.

mod checkpoint;
mod vocab;

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::Sentence;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use vocab::{Vocab, BOS, EOS, PAD, RESERVED, UNK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            src_vocab: 0,
            tgt_vocab: 0,
            embed_dim: 32,
            hidden_dim: 64,
            max_decode_len: 30,
            init_scale: 0.08,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_decode_len", self.max_decode_len),
        ] {
            if v == 0 {
                problems.push(format!("{name}: must be at least 1"));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            problems.push("init_scale: must be finite and non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// All model weights. The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub e_src: Array2<f64>,
    pub e_tgt: Array2<f64>,
    pub w_init: Array2<f64>,
    pub b_init: Array1<f64>,
    pub w_h: Array2<f64>,
    pub w_u: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b_h: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
}

pub const BLOCK_NAMES: [&str; 10] = [
    "e_src", "e_tgt", "w_init", "b_init", "w_h", "w_u", "w_c", "b_h", "w_o", "b_o",
];

macro_rules! for_blocks {
    ($self:expr, $method:ident) => {
        [
            $self.e_src.$method(),
            $self.e_tgt.$method(),
            $self.w_init.$method(),
            $self.b_init.$method(),
            $self.w_h.$method(),
            $self.w_u.$method(),
            $self.w_c.$method(),
            $self.b_h.$method(),
            $self.w_o.$method(),
            $self.b_o.$method(),
        ]
    };
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, h) = (cfg.embed_dim, cfg.hidden_dim);
        ModelParams {
            e_src: Array2::zeros((cfg.src_vocab, d)),
            e_tgt: Array2::zeros((cfg.tgt_vocab, d)),
            w_init: Array2::zeros((h, d)),
            b_init: Array1::zeros(h),
            w_h: Array2::zeros((h, h)),
            w_u: Array2::zeros((h, d)),
            w_c: Array2::zeros((h, d)),
            b_h: Array1::zeros(h),
            w_o: Array2::zeros((cfg.tgt_vocab, h)),
            b_o: Array1::zeros(cfg.tgt_vocab),
        }
    }

    /// Uniform(-init_scale, init_scale) entries drawn from a stream seeded by
    /// `cfg.seed`, block by block in [`BLOCK_NAMES`] order.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scale = cfg.init_scale;
        for block in params.blocks_mut() {
            for v in block.iter_mut() {
                *v = if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 };
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            e_src: Array2::zeros(self.e_src.raw_dim()),
            e_tgt: Array2::zeros(self.e_tgt.raw_dim()),
            w_init: Array2::zeros(self.w_init.raw_dim()),
            b_init: Array1::zeros(self.b_init.raw_dim()),
            w_h: Array2::zeros(self.w_h.raw_dim()),
            w_u: Array2::zeros(self.w_u.raw_dim()),
            w_c: Array2::zeros(self.w_c.raw_dim()),
            b_h: Array1::zeros(self.b_h.raw_dim()),
            w_o: Array2::zeros(self.w_o.raw_dim()),
            b_o: Array1::zeros(self.b_o.raw_dim()),
        }
    }

    pub fn shapes(&self) -> [Vec<usize>; 10] {
        for_blocks!(self, shape).map(<[usize]>::to_vec)
    }

    /// Row-major views of every block, in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 10] {
        for_blocks!(self, as_slice).map(|b| b.expect("blocks are standard layout"))
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 10] {
        for_blocks!(self, as_slice_mut).map(|b| b.expect("blocks are standard layout"))
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v *= alpha;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(cfg).shapes();
        for ((name, want), got) in BLOCK_NAMES.iter().zip(expected).zip(self.shapes()) {
            if want != got {
                return Err(Error::ShapeMismatch {
                    block: (*name).to_owned(),
                    expected: want,
                    found: got,
                });
            }
        }
        Ok(())
    }

    fn check_src(&self, id: u32) -> Result<()> {
        check_id(id, self.e_src.nrows())
    }

    fn check_tgt(&self, id: u32) -> Result<()> {
        check_id(id, self.e_tgt.nrows())
    }

    pub fn tgt_vocab(&self) -> usize {
        self.b_o.len()
    }
}

fn check_id(id: u32, size: usize) -> Result<()> {
    if (id as usize) < size {
        Ok(())
    } else {
        Err(Error::TokenOutOfRange { id, size })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
    pub step: usize,
}

pub fn encode(params: &ModelParams, source: &[u32]) -> Result<Array1<f64>> {
    if source.is_empty() {
        return Err(Error::EmptyInput("source sequence is empty"));
    }
    let mut c = Array1::zeros(params.e_src.ncols());
    for &s in source {
        params.check_src(s)?;
        c += &params.e_src.row(s as usize);
    }
    c /= source.len() as f64;
    Ok(c)
}

pub fn initial_state(params: &ModelParams, source: &[u32]) -> Result<DecoderState> {
    let c = encode(params, source)?;
    let h = (params.w_init.dot(&c) + &params.b_init).mapv(f64::tanh);
    Ok(DecoderState { h, c, step: 0 })
}

/// One decoder step: consumes `prev` and returns the next state and logits.
pub fn step(params: &ModelParams, state: &DecoderState, prev: u32) -> Result<(DecoderState, Array1<f64>)> {
    params.check_tgt(prev)?;
    let x = params.e_tgt.row(prev as usize);
    let a = params.w_h.dot(&state.h) + params.w_u.dot(&x) + params.w_c.dot(&state.c) + &params.b_h;
    let h = a.mapv(f64::tanh);
    let logits = params.w_o.dot(&h) + &params.b_o;
    Ok((
        DecoderState {
            h,
            c: state.c.clone(),
            step: state.step + 1,
        },
        logits,
    ))
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.mapv(|z| z - lse)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

struct Trace {
    c: Array1<f64>,
    /// `hs[0]` is the initial state, `hs[m]` the state after consuming `prevs[m-1]`.
    hs: Vec<Array1<f64>>,
    prevs: Vec<u32>,
    log_probs: Vec<Array1<f64>>,
}

fn forward(params: &ModelParams, source: &[u32], tokens: &[u32]) -> Result<Trace> {
    let init = initial_state(params, source)?;
    let mut hs = Vec::with_capacity(tokens.len() + 1);
    let mut prevs = Vec::with_capacity(tokens.len());
    let mut log_probs = Vec::with_capacity(tokens.len());
    let mut state = init;
    hs.push(state.h.clone());
    let mut prev = BOS;
    for &y in tokens {
        params.check_tgt(y)?;
        let (next, logits) = step(params, &state, prev)?;
        log_probs.push(log_softmax(logits.view()));
        hs.push(next.h.clone());
        prevs.push(prev);
        state = next;
        prev = y;
    }
    Ok(Trace {
        c: state.c,
        hs,
        prevs,
        log_probs,
    })
}

fn add_outer(dst: &mut Array2<f64>, col: &Array1<f64>, row: ArrayView1<f64>) {
    for (mut r, &a) in dst.rows_mut().into_iter().zip(col.iter()) {
        if a != 0.0 {
            r.scaled_add(a, &row);
        }
    }
}

/// Backpropagates `dlogits[m] = dF/dz_{m+1}` through the recurrence.
fn backward(params: &ModelParams, source: &[u32], trace: &Trace, dlogits: &[Array1<f64>]) -> ModelParams {
    let mut g = params.zeros_like();
    let mut dc: Array1<f64> = Array1::zeros(trace.c.len());
    let mut dh_next: Array1<f64> = Array1::zeros(params.b_h.len());
    for m in (1..trace.hs.len()).rev() {
        let h_m = &trace.hs[m];
        let h_prev = &trace.hs[m - 1];
        let dz = &dlogits[m - 1];
        add_outer(&mut g.w_o, dz, h_m.view());
        g.b_o += dz;
        let dh = params.w_o.t().dot(dz) + &dh_next;
        let da = dh * &h_m.mapv(|v| 1.0 - v * v);
        add_outer(&mut g.w_h, &da, h_prev.view());
        let prev = trace.prevs[m - 1] as usize;
        add_outer(&mut g.w_u, &da, params.e_tgt.row(prev));
        g.e_tgt.row_mut(prev).scaled_add(1.0, &params.w_u.t().dot(&da));
        add_outer(&mut g.w_c, &da, trace.c.view());
        dc += &params.w_c.t().dot(&da);
        g.b_h += &da;
        dh_next = params.w_h.t().dot(&da);
    }
    let h0 = &trace.hs[0];
    let da0 = dh_next * &h0.mapv(|v| 1.0 - v * v);
    add_outer(&mut g.w_init, &da0, trace.c.view());
    g.b_init += &da0;
    dc += &params.w_init.t().dot(&da0);
    let share = 1.0 / source.len() as f64;
    for &s in source {
        g.e_src.row_mut(s as usize).scaled_add(share, &dc);
    }
    g
}

/// Teacher-forced log-probability of `tokens` with no end-of-sequence
/// requirement. A sequence cut at the decode length limit is scored this way.
pub fn score_tokens(params: &ModelParams, source: &[u32], tokens: &[u32]) -> Result<f64> {
    let trace = forward(params, source, tokens)?;
    Ok(tokens.iter().zip(&trace.log_probs).map(|(&y, lp)| lp[y as usize]).sum())
}

pub fn sequence_log_prob(params: &ModelParams, source: &[u32], target: &[u32]) -> Result<f64> {
    if target.last() != Some(&EOS) {
        return Err(Error::MissingEos);
    }
    score_tokens(params, source, target)
}

/// Ancestral sampling at temperature 1 until EOS or `max_len` tokens.
pub fn sample_sequence_with<R: Rng + ?Sized>(
    params: &ModelParams,
    source: &[u32],
    rng: &mut R,
    max_len: usize,
) -> Result<Vec<u32>> {
    if max_len == 0 {
        return Err(Error::config("max_len: must be at least 1"));
    }
    let mut state = initial_state(params, source)?;
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let (next, logits) = step(params, &state, prev)?;
        let probs = softmax(logits.view());
        let dist =
            WeightedIndex::new(probs.iter()).map_err(|e| Error::NonFinite(format!("sampling distribution: {e}")))?;
        let y = dist.sample(rng) as u32;
        out.push(y);
        if y == EOS {
            break;
        }
        state = next;
        prev = y;
    }
    Ok(out)
}

pub fn sample_sequence(params: &ModelParams, source: &[u32], seed: u64, max_len: usize) -> Result<Vec<u32>> {
    sample_sequence_with(params, source, &mut ChaCha8Rng::seed_from_u64(seed), max_len)
}

/// Label-smoothed cross-entropy, averaged over non-PAD target positions, and
/// its gradient. The smoothed target puts `1 - eps` on the gold token plus
/// `eps / (V - 1)` on every non-PAD token.
pub fn ce_grad(params: &ModelParams, source: &[u32], target: &[u32], eps: f64) -> Result<(f64, ModelParams)> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::config("label_smoothing: must be in [0, 1)"));
    }
    let v = params.tgt_vocab();
    if eps > 0.0 && v < 2 {
        return Err(Error::config("label smoothing needs a target vocabulary of at least 2"));
    }
    let trace = forward(params, source, target)?;
    let positions = target.iter().filter(|&&y| y != PAD).count();
    if positions == 0 {
        return Err(Error::EmptyInput("target has no non-PAD positions"));
    }
    let norm = 1.0 / positions as f64;
    let spread = if v > 1 { eps / (v - 1) as f64 } else { 0.0 };
    let mut loss = 0.0;
    let mut dlogits = Vec::with_capacity(target.len());
    for (&y, lp) in target.iter().zip(&trace.log_probs) {
        if y == PAD {
            dlogits.push(Array1::zeros(v));
            continue;
        }
        let mut q = Array1::from_elem(v, spread);
        q[PAD as usize] = 0.0;
        q[y as usize] += 1.0 - eps;
        loss -= q.iter().zip(lp.iter()).map(|(qi, li)| qi * li).sum::<f64>();
        let p = lp.mapv(f64::exp);
        dlogits.push((p - q) * norm);
    }
    Ok((loss * norm, backward(params, source, &trace, &dlogits)))
}

/// `log p(tokens | source)` and its gradient; no EOS requirement.
pub fn tokens_logprob_grad(params: &ModelParams, source: &[u32], tokens: &[u32]) -> Result<(f64, ModelParams)> {
    let trace = forward(params, source, tokens)?;
    let mut total = 0.0;
    let dlogits: Vec<Array1<f64>> = tokens
        .iter()
        .zip(&trace.log_probs)
        .map(|(&y, lp)| {
            total += lp[y as usize];
            let mut d = lp.mapv(|l| -l.exp());
            d[y as usize] += 1.0;
            d
        })
        .collect();
    Ok((total, backward(params, source, &trace, &dlogits)))
}

/// Gradient of `log p(target | source)`; `target` must end with EOS.
pub fn logprob_grad(params: &ModelParams, source: &[u32], target: &[u32]) -> Result<ModelParams> {
    if target.last() != Some(&EOS) {
        return Err(Error::MissingEos);
    }
    Ok(tokens_logprob_grad(params, source, target)?.1)
}

/// Model weights bundled with the vocabularies they index.
#[derive(Debug, Clone, PartialEq)]
pub struct Translator {
    pub config: ModelConfig,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub params: ModelParams,
}

impl Translator {
    /// Builds vocabularies from a training corpus and initializes weights.
    /// Vocabulary sizes in `base` are overwritten.
    pub fn for_corpus(train: &Corpus, base: &ModelConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training corpus is empty"));
        }
        let src_vocab = Vocab::build(train.examples().iter().flat_map(|e| e.source.iter()));
        let tgt_vocab = Vocab::build(
            train
                .examples()
                .iter()
                .flat_map(|e| e.references.iter())
                .flat_map(|r| r.tokens().iter()),
        );
        let config = ModelConfig {
            src_vocab: src_vocab.len(),
            tgt_vocab: tgt_vocab.len(),
            ..base.clone()
        };
        let params = ModelParams::init(&config)?;
        Ok(Translator {
            config,
            src_vocab,
            tgt_vocab,
            params,
        })
    }

    pub fn encode_source<S: AsRef<str>>(&self, source: &[S]) -> Vec<u32> {
        self.src_vocab.encode(source)
    }

    /// Target ids followed by EOS.
    pub fn encode_target(&self, sentence: &Sentence) -> Vec<u32> {
        let mut ids = self.tgt_vocab.encode(sentence.tokens());
        ids.push(EOS);
        ids
    }

    /// Decoded sentence and whether it was empty (and replaced by `<unk>`).
    pub fn detokenize(&self, ids: &[u32]) -> (Sentence, bool) {
        detokenize(&self.tgt_vocab, ids)
    }
}

pub fn detokenize(vocab: &Vocab, ids: &[u32]) -> (Sentence, bool) {
    let tokens = vocab.decode(ids);
    if tokens.is_empty() {
        (Sentence::new(RESERVED[UNK as usize]), true)
    } else {
        (Sentence::from_tokens(tokens), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny(seed: u64) -> (ModelConfig, ModelParams) {
        let cfg = ModelConfig {
            src_vocab: 5,
            tgt_vocab: 6,
            embed_dim: 4,
            hidden_dim: 5,
            max_decode_len: 4,
            init_scale: 0.5,
            seed,
        };
        let p = ModelParams::init(&cfg).unwrap();
        (cfg, p)
    }

    #[test]
    fn encode_is_mean_of_rows() {
        let (_, p) = tiny(1);
        assert_eq!(encode(&p, &[2]).unwrap(), p.e_src.row(2).to_owned());
        let two = encode(&p, &[1, 3]).unwrap();
        let expect = (&p.e_src.row(1) + &p.e_src.row(3)) / 2.0;
        for (a, b) in two.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(encode(&p, &[3, 1]).unwrap(), encode(&p, &[1, 3]).unwrap());
    }

    #[test]
    fn out_of_range_ids_error() {
        let (_, p) = tiny(1);
        assert!(matches!(encode(&p, &[9]), Err(Error::TokenOutOfRange { id: 9, .. })));
        let st = initial_state(&p, &[1]).unwrap();
        assert!(matches!(step(&p, &st, 60), Err(Error::TokenOutOfRange { .. })));
        assert!(encode(&p, &[]).is_err());
    }

    #[test]
    fn zero_params_give_uniform_softmax() {
        let (cfg, _) = tiny(1);
        let p = ModelParams::zeros(&cfg);
        let st = initial_state(&p, &[1, 2]).unwrap();
        let (_, logits) = step(&p, &st, BOS).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
        let probs = softmax(logits.view());
        assert!(probs.iter().all(|&q| (q - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_sums_to_one() {
        let (_, p) = tiny(3);
        let st = initial_state(&p, &[0, 4]).unwrap();
        let (_, logits) = step(&p, &st, BOS).unwrap();
        assert!((softmax(logits.view()).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_log_prob() {
        let (cfg, _) = tiny(1);
        let p = ModelParams::zeros(&cfg);
        let lp = sequence_log_prob(&p, &[1], &[4, 5, EOS]).unwrap();
        assert_abs_diff_eq!(lp, -3.0 * 6f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn missing_eos_errors() {
        let (_, p) = tiny(1);
        assert!(matches!(sequence_log_prob(&p, &[1], &[4, 5]), Err(Error::MissingEos)));
        assert!(matches!(logprob_grad(&p, &[1], &[4]), Err(Error::MissingEos)));
    }

    #[test]
    fn appending_a_token_lowers_log_prob() {
        let (_, p) = tiny(2);
        let short = score_tokens(&p, &[1], &[4, 5]).unwrap();
        let long = score_tokens(&p, &[1], &[4, 5, 3]).unwrap();
        assert!(long < short);
    }

    #[test]
    fn uniform_ce_is_log_v() {
        let (cfg, _) = tiny(1);
        let p = ModelParams::zeros(&cfg);
        let (loss, _) = ce_grad(&p, &[1], &[4, EOS], 0.0).unwrap();
        assert_abs_diff_eq!(loss, 6f64.ln(), epsilon = 1e-12);
        let (smoothed, _) = ce_grad(&p, &[1], &[4, EOS], 0.2).unwrap();
        assert_abs_diff_eq!(smoothed, 6f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ce_rejects_bad_smoothing() {
        let (_, p) = tiny(1);
        assert!(ce_grad(&p, &[1], &[EOS], 1.0).is_err());
    }

    #[test]
    fn pad_positions_are_masked() {
        let (_, p) = tiny(4);
        // A PAD position must not add to the loss or its normalizer.
        let (with_pad, _) = ce_grad(&p, &[1], &[4, PAD], 0.0).unwrap();
        let lp = score_tokens(&p, &[1], &[4]).unwrap();
        assert_abs_diff_eq!(with_pad, -lp, epsilon = 1e-12);
    }

    #[test]
    fn eos_forcing_bias_gives_immediate_eos() {
        let (_, mut p) = tiny(5);
        p.b_o[EOS as usize] = 1e3;
        assert_eq!(sample_sequence(&p, &[1], 9, 5).unwrap(), vec![EOS]);
    }

    #[test]
    fn sampling_is_seeded() {
        let (_, p) = tiny(6);
        let a = sample_sequence(&p, &[1, 2], 11, 8).unwrap();
        assert_eq!(a, sample_sequence(&p, &[1, 2], 11, 8).unwrap());
        assert!(a.len() <= 8);
    }

    #[test]
    fn init_is_seeded() {
        let (_, a) = tiny(1);
        let (_, b) = tiny(1);
        let (_, c) = tiny(2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unused_source_rows_get_zero_gradient() {
        let (_, p) = tiny(7);
        let g = logprob_grad(&p, &[1, 3], &[4, EOS]).unwrap();
        for row in [0, 2, 4] {
            assert!(g.e_src.row(row).iter().all(|&v| v == 0.0));
        }
        assert!(g.e_src.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn shape_check_reports_block() {
        let (cfg, mut p) = tiny(1);
        p.b_o = Array1::zeros(3);
        assert!(matches!(p.check_shapes(&cfg), Err(Error::ShapeMismatch { block, .. }) if block == "b_o"));
    }
}
