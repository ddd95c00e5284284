//! Autoregressive tactic policy: a linear softmax over hashed features.
//!
//! Logits are `z_v = sum_{i active} W[v][i]`. Families are summed
//! separately in ascending bin order and combined as
//! `((ngram + conjunction) + context) + structure`, so the cached per-state scorer and the
//! one-shot functions agree bit for bit.

pub mod features;
pub mod tokens;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, RngCore};

pub use features::{featurize, FeatureVector, BIAS_INDEX, FEATURE_DIM, HASH_SEED};
pub use tokens::{detokenize, tokenize, Token, TokenSequence, MAX_TACTIC_TOKENS, VOCAB};

use features::{
    conjunction_indices, context_indices, focus_keys, ngram_indices, previous_tokens, state_structure_keys,
    structure_indices,
};
use crate::kernel::ProofState;

/// Trainable weights, logically a `VOCAB x FEATURE_DIM` matrix.
///
/// Stored feature-major (`weights[i * VOCAB + v]`) so one active feature
/// touches a contiguous block of 16 logits.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    weights: Vec<f64>,
    pub seed: u64,
    pub version: String,
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams { weights: alloc::vec![0.0; VOCAB * FEATURE_DIM], seed: 0, version: "zero".to_string() }
    }

    /// Builds params from a `VOCAB x FEATURE_DIM` row-major matrix.
    pub fn from_row_major(rows: &[f64], seed: u64, version: &str) -> Option<Self> {
        if rows.len() != VOCAB * FEATURE_DIM {
            return None;
        }
        let mut p = PolicyParams::zeros();
        for v in 0..VOCAB {
            for i in 0..FEATURE_DIM {
                p.weights[i * VOCAB + v] = rows[v * FEATURE_DIM + i];
            }
        }
        p.seed = seed;
        p.version = version.to_string();
        Some(p)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut rows = alloc::vec![0.0; VOCAB * FEATURE_DIM];
        for v in 0..VOCAB {
            for i in 0..FEATURE_DIM {
                rows[v * FEATURE_DIM + i] = self.weights[i * VOCAB + v];
            }
        }
        rows
    }

    pub fn weight(&self, token: usize, feature: usize) -> f64 {
        self.weights[feature * VOCAB + token]
    }

    pub fn set_weight(&mut self, token: usize, feature: usize, value: f64) {
        self.weights[feature * VOCAB + token] = value;
    }

    /// Flat feature-major storage, the layout shared with [`Gradient`].
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    /// `self += scale * grad`.
    pub fn add_scaled(&mut self, grad: &Gradient, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.values) {
            *w += scale * g;
        }
    }

    fn family_sum(&self, indices: &[u32], out: &mut [f64; VOCAB]) {
        for &i in indices {
            let row = &self.weights[i as usize * VOCAB..(i as usize + 1) * VOCAB];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
    }
}

/// Dense gradient in the same flat layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Default for Gradient {
    fn default() -> Self {
        Gradient::zeros()
    }
}

impl Gradient {
    pub fn zeros() -> Self {
        Gradient { values: alloc::vec![0.0; VOCAB * FEATURE_DIM] }
    }

    pub fn get(&self, token: usize, feature: usize) -> f64 {
        self.values[feature * VOCAB + token]
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|g| g * g).sum())
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|g| *g *= s);
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Gradient, s: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// Flat coordinates with a nonzero entry.
    pub fn support(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(i, _)| i).collect()
    }
}

/// A token sequence with its untempered log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSample {
    pub tokens: TokenSequence,
    pub per_token_logprob: Vec<f64>,
    pub total_logprob: f64,
}

impl ScoredSample {
    fn from_parts(tokens: TokenSequence, per_token_logprob: Vec<f64>) -> Self {
        let total_logprob = per_token_logprob.iter().sum();
        ScoredSample { tokens, per_token_logprob, total_logprob }
    }
}

/// `log softmax(z / temperature)`.
pub fn log_softmax(logits: &[f64; VOCAB], temperature: f64) -> [f64; VOCAB] {
    let mut scaled = *logits;
    if temperature != 1.0 {
        scaled.iter_mut().for_each(|z| *z /= temperature);
    }
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(scaled.iter().map(|z| libm::exp(z - m)).sum::<f64>());
    scaled.map(|z| z - lse)
}

/// Per-state scorer that caches the state-dependent part of the logits.
pub struct StateScorer<'p> {
    params: &'p PolicyParams,
    state: String,
    parsed: Option<ProofState>,
    state_keys: Vec<Vec<u8>>,
    ngram_sum: [f64; VOCAB],
    conj: [Option<[f64; VOCAB]>; VOCAB],
}

impl<'p> StateScorer<'p> {
    pub fn new(params: &'p PolicyParams, state: &str) -> Self {
        let mut ngram_sum = [0.0; VOCAB];
        params.family_sum(&ngram_indices(state), &mut ngram_sum);
        let parsed = ProofState::parse(state).ok();
        let state_keys = parsed.as_ref().map(state_structure_keys).unwrap_or_default();
        StateScorer { params, state: state.to_string(), parsed, state_keys, ngram_sum, conj: [None; VOCAB] }
    }

    pub fn logits(&mut self, prefix: &[Token], position: usize) -> [f64; VOCAB] {
        let (_, p1) = previous_tokens(prefix, position);
        let conj = match self.conj[p1.id()] {
            Some(c) => c,
            None => {
                let mut c = [0.0; VOCAB];
                self.params.family_sum(&conjunction_indices(&self.state, p1), &mut c);
                self.conj[p1.id()] = Some(c);
                c
            }
        };
        let mut ctx = [0.0; VOCAB];
        self.params.family_sum(&context_indices(prefix, position), &mut ctx);
        let mut keys = self.state_keys.clone();
        if let Some(s) = &self.parsed {
            keys.extend(focus_keys(s, prefix, position));
        }
        let mut structure = [0.0; VOCAB];
        self.params.family_sum(&structure_indices(&keys, prefix, position), &mut structure);
        let mut z = [0.0; VOCAB];
        for v in 0..VOCAB {
            z[v] = ((self.ngram_sum[v] + conj[v]) + ctx[v]) + structure[v];
        }
        z
    }

    pub fn logprobs(&mut self, prefix: &[Token], position: usize, temperature: f64) -> [f64; VOCAB] {
        log_softmax(&self.logits(prefix, position), temperature)
    }

    /// Untempered per-token log-probs of a given sequence.
    pub fn score(&mut self, tokens: &TokenSequence) -> ScoredSample {
        let per_token = (0..tokens.len())
            .map(|t| self.logprobs(&tokens.0, t, 1.0)[tokens.0[t].id()])
            .collect();
        ScoredSample::from_parts(tokens.clone(), per_token)
    }

    /// Ancestral sampling at `temperature`; log-probs are recorded at
    /// temperature 1. Stops at EOS or forces EOS as the 12th token.
    pub fn sample<R: RngCore + ?Sized>(&mut self, temperature: f64, rng: &mut R) -> ScoredSample {
        let mut tokens = Vec::with_capacity(MAX_TACTIC_TOKENS);
        let mut logps = Vec::with_capacity(MAX_TACTIC_TOKENS);
        loop {
            let position = tokens.len();
            let z = self.logits(&tokens, position);
            let untempered = log_softmax(&z, 1.0);
            let next = if position + 1 == MAX_TACTIC_TOKENS {
                Token::Eos
            } else {
                let tempered = if temperature == 1.0 { untempered } else { log_softmax(&z, temperature) };
                draw(&tempered, rng)
            };
            tokens.push(next);
            logps.push(untempered[next.id()]);
            if next == Token::Eos {
                break;
            }
        }
        ScoredSample::from_parts(TokenSequence(tokens), logps)
    }
}

fn draw<R: RngCore + ?Sized>(logprobs: &[f64; VOCAB], rng: &mut R) -> Token {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, lp) in logprobs.iter().enumerate() {
        acc += libm::exp(*lp);
        if u < acc {
            return Token::ALL[v];
        }
    }
    // Rounding left the cumulative sum just below 1; take the last token
    // with nonzero mass.
    let last = logprobs.iter().rposition(|lp| *lp > f64::NEG_INFINITY).unwrap_or(VOCAB - 1);
    Token::ALL[last]
}

/// `log softmax(z / temperature)` for the token at `position`.
pub fn token_logprobs(
    params: &PolicyParams,
    state: &str,
    prefix: &[Token],
    position: usize,
    temperature: f64,
) -> [f64; VOCAB] {
    StateScorer::new(params, state).logprobs(prefix, position, temperature)
}

/// Untempered log-probability of every token in `tokens`.
pub fn sequence_logprob(params: &PolicyParams, state: &str, tokens: &TokenSequence) -> ScoredSample {
    StateScorer::new(params, state).score(tokens)
}

pub fn sample_tactic<R: RngCore + ?Sized>(
    params: &PolicyParams,
    state: &str,
    temperature: f64,
    rng: &mut R,
) -> ScoredSample {
    StateScorer::new(params, state).sample(temperature, rng)
}

/// `exp(-log p(y_t | ...))` per token.
pub fn token_perplexities(per_token_logprob: &[f64]) -> Vec<f64> {
    per_token_logprob.iter().map(|lp| libm::exp(-lp)).collect()
}

/// `exp(-(1/T) sum_t log p(y_t | ...))` from recorded log-probs.
pub fn perplexity_from_logprobs(per_token_logprob: &[f64]) -> f64 {
    let n = per_token_logprob.len() as f64;
    libm::exp(-per_token_logprob.iter().sum::<f64>() / n)
}

/// Sequence perplexity under `params`: the geometric mean of inverse token
/// probabilities. `tokens` must be nonempty.
///
/// Evaluated as `2^(mean_t log2(1 / p_t))` from the softmax probabilities
/// themselves, which is exact whenever every `p_t` is a power of two (the
/// uniform policy gives exactly 16).
pub fn sequence_perplexity(params: &PolicyParams, state: &str, tokens: &TokenSequence) -> f64 {
    let mut scorer = StateScorer::new(params, state);
    let bits: f64 = (0..tokens.len())
        .map(|t| {
            let z = scorer.logits(&tokens.0, t);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e = z.map(|x| libm::exp(x - m));
            let p = e[tokens.0[t].id()] / e.iter().sum::<f64>();
            libm::log2(1.0 / p)
        })
        .sum();
    libm::exp2(bits / tokens.len() as f64)
}

/// Adds `sum_t coeff[t] * grad log p(y_t | ...)` into `out` and returns the
/// per-token log-probs.
///
/// `d log p(y) / d W[v][i] = x_i (1{v = y} - p_v)` with binary `x_i`.
pub fn accumulate_logprob_gradient(
    params: &PolicyParams,
    state: &str,
    tokens: &TokenSequence,
    coeff: &[f64],
    out: &mut Gradient,
) -> Vec<f64> {
    let mut scorer = StateScorer::new(params, state);
    let mut logps = Vec::with_capacity(tokens.len());
    for (t, &y) in tokens.0.iter().enumerate() {
        let lp = scorer.logprobs(&tokens.0, t, 1.0);
        logps.push(lp[y.id()]);
        let c = coeff[t];
        if c == 0.0 {
            continue;
        }
        let mut delta = [0.0; VOCAB];
        for v in 0..VOCAB {
            delta[v] = -c * libm::exp(lp[v]);
        }
        delta[y.id()] += c;
        for i in featurize(state, &tokens.0, t).indices {
            let block = &mut out.values[i as usize * VOCAB..(i as usize + 1) * VOCAB];
            for (g, d) in block.iter_mut().zip(&delta) {
                *g += d;
            }
        }
    }
    logps
}

/// One supervised example: a state and the tactic tokens to imitate.
pub type NllExample = (String, TokenSequence);

/// Mean NLL and its gradient.
///
/// Each example contributes its per-token mean NLL; examples are then
/// averaged, so a batch gradient is the mean of per-example gradients.
pub fn nll_gradient(params: &PolicyParams, batch: &[NllExample]) -> (f64, Gradient) {
    let mut grad = Gradient::zeros();
    let mut loss = 0.0;
    let b = batch.len() as f64;
    for (state, tokens) in batch {
        let t = tokens.len() as f64;
        let coeff = alloc::vec![-1.0 / (b * t); tokens.len()];
        let logps = accumulate_logprob_gradient(params, state, tokens, &coeff, &mut grad);
        loss -= logps.iter().sum::<f64>() / (b * t);
    }
    (loss, grad)
}

/// Mean NLL only (same reduction as [`nll_gradient`]).
pub fn mean_nll(params: &PolicyParams, batch: &[NllExample]) -> f64 {
    let b = batch.len() as f64;
    batch
        .iter()
        .map(|(state, tokens)| {
            let s = sequence_logprob(params, state, tokens);
            -s.total_logprob / (tokens.len() as f64 * b)
        })
        .sum()
}
