//! The DPO family.
//!
//! With sequence log-likelihood `L(y) = sum_t log pi(y_t | s, y_<t)`, the
//! pairwise loss is `-log sigmoid(m)` where
//!
//! ```text
//! DPO / UAPO:       m = beta * [(L_theta(w) - L_ref(w)) - (L_theta(l) - L_ref(l))]
//! PW-DPO / PW-UAPO: same, with L replaced by the weighted token mean
//!                   sum_t w_t log pi(y_t) / sum_t w_t,
//!                   w_t = clip((tau / (PPL_t + eps))^alpha, delta_min, delta_max),
//!                   PPL_t = exp(-log pi_ref(y_t | ...)).
//! ```
//!
//! The token weights depend only on the frozen reference, so they are
//! constants in the gradient and are shared by the policy and reference
//! terms of the same sequence. UAPO differs from DPO only in the pairs it is
//! given (stagnant losers included), never in the loss.

use alloc::vec::Vec;

use rand::{seq::SliceRandom, RngCore};

use crate::curation::PreferencePair;
use crate::error::{Error, Result};
use crate::policy::{accumulate_logprob_gradient, sequence_logprob, Gradient, PolicyParams, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PreferenceMethod {
    Dpo,
    Uapo,
    PwDpo,
    PwUapo,
}

impl PreferenceMethod {
    pub fn is_weighted(self) -> bool {
        matches!(self, PreferenceMethod::PwDpo | PreferenceMethod::PwUapo)
    }

    /// Whether the method's dataset includes stagnant (u=1) losers.
    pub fn uses_stagnant_losers(self) -> bool {
        matches!(self, PreferenceMethod::Uapo | PreferenceMethod::PwUapo)
    }

    pub fn name(self) -> &'static str {
        match self {
            PreferenceMethod::Dpo => "dpo",
            PreferenceMethod::Uapo => "uapo",
            PreferenceMethod::PwDpo => "pw-dpo",
            PreferenceMethod::PwUapo => "pw-uapo",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [PreferenceMethod::Dpo, PreferenceMethod::Uapo, PreferenceMethod::PwDpo, PreferenceMethod::PwUapo]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpoConfig {
    pub beta: f64,
    pub method: PreferenceMethod,
    pub tau_weight: f64,
    pub epsilon_weight: f64,
    pub alpha_weight: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.01,
            method: PreferenceMethod::PwUapo,
            tau_weight: 1.08,
            epsilon_weight: 1e-8,
            alpha_weight: 1.0,
            delta_min: 0.0,
            delta_max: 1.0,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.delta_min >= 0.0
            && self.delta_min <= self.delta_max
            && self.tau_weight > 0.0
            && self.epsilon_weight >= 0.0
            && self.alpha_weight > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "need beta > 0, 0 <= delta_min <= delta_max, tau > 0, eps >= 0, alpha > 0".into(),
            ))
        }
    }
}

/// Diagnostics of a loss evaluation over a set of pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// Mean of `s_theta(s, y_w) - s_theta(s, y_l)`, the sigmoid argument.
    pub margin_mean: f64,
    pub grad_norm: f64,
    pub pair_count: usize,
    /// Sequences whose token weights summed to zero and fell back to the
    /// unweighted mean.
    pub weight_fallbacks: usize,
}

/// Reference side of a log-ratio score.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    Params(&'a PolicyParams),
    /// Frozen per-token reference log-probs.
    LogProbs(&'a [f64]),
}

/// `beta * (log pi_theta(y|s) - log pi_ref(y|s))` with untempered sums.
pub fn dpo_score(params: &PolicyParams, reference: Reference<'_>, state: &str, tokens: &TokenSequence, beta: f64) -> f64 {
    let theta = sequence_logprob(params, state, tokens).per_token_logprob;
    let reference: Vec<f64> = match reference {
        Reference::Params(r) => sequence_logprob(r, state, tokens).per_token_logprob,
        Reference::LogProbs(lp) => lp.to_vec(),
    };
    beta * (theta.iter().sum::<f64>() - reference.iter().sum::<f64>())
}

/// `-log sigmoid(m)`, evaluated without overflow.
pub fn neg_log_sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        libm::log1p(libm::exp(-m))
    } else {
        -m + libm::log1p(libm::exp(m))
    }
}

/// `sigmoid(-m)`, the magnitude of `d(-log sigmoid(m))/dm`.
fn sigmoid_neg(m: f64) -> f64 {
    if m >= 0.0 {
        let e = libm::exp(-m);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(m))
    }
}

/// Token weights from reference per-token log-probs.
pub fn token_weights(ref_per_token_logprob: &[f64], config: &DpoConfig) -> Vec<f64> {
    ref_per_token_logprob
        .iter()
        .map(|lp| {
            let ppl = libm::exp(-lp);
            let raw = libm::pow(config.tau_weight / (ppl + config.epsilon_weight), config.alpha_weight);
            raw.clamp(config.delta_min, config.delta_max)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedLogProb {
    pub value: f64,
    /// True if the weights summed to zero and the plain mean was used.
    pub fallback: bool,
}

/// `sum_t w_t lp_t / sum_t w_t`; falls back to the plain mean when the
/// weights sum to zero.
pub fn weighted_seq_logprob(per_token_logprob: &[f64], weights: &[f64]) -> WeightedLogProb {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let num: f64 = per_token_logprob.iter().zip(weights).map(|(lp, w)| w * lp).sum();
        WeightedLogProb { value: num / total, fallback: false }
    } else {
        let n = per_token_logprob.len() as f64;
        WeightedLogProb { value: per_token_logprob.iter().sum::<f64>() / n, fallback: true }
    }
}

/// Normalized weights actually applied to the per-token log-probs, plus
/// the fallback flag.
fn effective_weights(weights: &[f64]) -> (Vec<f64>, bool) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        (weights.iter().map(|w| w / total).collect(), false)
    } else {
        let n = weights.len() as f64;
        (alloc::vec![1.0 / n; weights.len()], true)
    }
}

/// One pair's loss, margin and gradient, plus the number of weight fallbacks.
struct PairEval {
    loss: f64,
    margin: f64,
    fallbacks: usize,
}

fn eval_pair(
    params: &PolicyParams,
    pair: &PreferencePair,
    config: &DpoConfig,
    weighted: bool,
    grad: Option<(&mut Gradient, f64)>,
) -> PairEval {
    let theta_w = sequence_logprob(params, &pair.state, &pair.winner_tokens).per_token_logprob;
    let theta_l = sequence_logprob(params, &pair.state, &pair.loser_tokens).per_token_logprob;
    let (ref_w, ref_l) = (&pair.ref_winner_logprobs, &pair.ref_loser_logprobs);
    // Per-token coefficients c_t such that d(side score)/d lp_t = c_t.
    let (margin, cw, cl, fallbacks) = if weighted {
        let ww = token_weights(ref_w, config);
        let wl = token_weights(ref_l, config);
        let (tw, tl) = (weighted_seq_logprob(&theta_w, &ww), weighted_seq_logprob(&theta_l, &wl));
        let (rw, rl) = (weighted_seq_logprob(ref_w, &ww), weighted_seq_logprob(ref_l, &wl));
        let margin = config.beta * ((tw.value - rw.value) - (tl.value - rl.value));
        let (cw, _) = effective_weights(&ww);
        let (cl, _) = effective_weights(&wl);
        (margin, cw, cl, tw.fallback as usize + tl.fallback as usize)
    } else {
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        let margin = config.beta * ((sum(&theta_w) - sum(ref_w)) - (sum(&theta_l) - sum(ref_l)));
        (margin, alloc::vec![1.0; theta_w.len()], alloc::vec![1.0; theta_l.len()], 0)
    };
    let loss = neg_log_sigmoid(margin);
    if let Some((g, scale)) = grad {
        let k = -sigmoid_neg(margin) * config.beta * scale;
        let cw: Vec<f64> = cw.iter().map(|c| k * c).collect();
        let cl: Vec<f64> = cl.iter().map(|c| -k * c).collect();
        accumulate_logprob_gradient(params, &pair.state, &pair.winner_tokens, &cw, g);
        accumulate_logprob_gradient(params, &pair.state, &pair.loser_tokens, &cl, g);
    }
    PairEval { loss, margin, fallbacks }
}

/// Pairwise DPO loss and its gradient (DPO and UAPO).
pub fn dpo_loss(params: &PolicyParams, pair: &PreferencePair, config: &DpoConfig) -> Result<(f64, Gradient)> {
    if config.method.is_weighted() {
        return Err(Error::Precondition("dpo_loss needs method dpo or uapo".into()));
    }
    config.validate()?;
    let mut g = Gradient::zeros();
    let e = eval_pair(params, pair, config, false, Some((&mut g, 1.0)));
    Ok((e.loss, g))
}

/// Perplexity-weighted DPO loss and its gradient (PW-DPO and PW-UAPO).
pub fn pw_dpo_loss(params: &PolicyParams, pair: &PreferencePair, config: &DpoConfig) -> Result<(f64, Gradient)> {
    if !config.method.is_weighted() {
        return Err(Error::Precondition("pw_dpo_loss needs method pw-dpo or pw-uapo".into()));
    }
    config.validate()?;
    let mut g = Gradient::zeros();
    let e = eval_pair(params, pair, config, true, Some((&mut g, 1.0)));
    Ok((e.loss, g))
}

/// Mean loss over `pairs` under the configured method, with its gradient
/// when `with_gradient` is set.
pub fn pair_loss(
    params: &PolicyParams,
    pairs: &[PreferencePair],
    config: &DpoConfig,
    with_gradient: bool,
) -> Result<(LossReport, Option<Gradient>)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Precondition("preference set must be nonempty".into()));
    }
    let n = pairs.len() as f64;
    let mut grad = with_gradient.then(Gradient::zeros);
    let mut report = LossReport { pair_count: pairs.len(), ..LossReport::default() };
    for pair in pairs {
        let e = eval_pair(params, pair, config, config.method.is_weighted(), grad.as_mut().map(|g| (g, 1.0 / n)));
        report.loss += e.loss / n;
        report.margin_mean += e.margin / n;
        report.weight_fallbacks += e.fallbacks;
    }
    if let Some(g) = &grad {
        report.grad_norm = g.norm();
    }
    Ok((report, grad))
}

#[derive(Clone, Debug)]
pub struct PreferenceRun {
    pub params: PolicyParams,
    /// Full-set report before the first update.
    pub initial: LossReport,
    /// Full-set report after the last update.
    pub last: LossReport,
    /// Mini-batch report of every step.
    pub curve: Vec<LossReport>,
}

/// Mini-batch gradient descent on the configured preference loss.
///
/// The reference enters only through the frozen log-probs stored in each
/// pair. Batches are drawn by reshuffling the pair list each pass.
pub fn preference_train<R: RngCore + ?Sized>(
    params: &PolicyParams,
    pairs: &[PreferencePair],
    config: &DpoConfig,
    steps: usize,
    learning_rate: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<PreferenceRun> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Precondition("preference set must be nonempty".into()));
    }
    if batch_size < 1 || !(learning_rate > 0.0) {
        return Err(Error::Config("batch size must be >= 1 and learning rate > 0".into()));
    }
    let mut theta = params.clone();
    let (initial, _) = pair_loss(&theta, pairs, config, false)?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(steps);
    let mut batch = Vec::with_capacity(batch_size);
    for step in 0..steps {
        batch.clear();
        while batch.len() < batch_size.min(pairs.len()) {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(pairs[order[cursor]].clone());
            cursor += 1;
        }
        let (report, grad) = pair_loss(&theta, &batch, config, true)?;
        if !report.loss.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if let Some(g) = grad {
            theta.add_scaled(&g, -learning_rate);
        }
        curve.push(report);
    }
    let (last, _) = pair_loss(&theta, pairs, config, false)?;
    if !last.loss.is_finite() || !theta.all_finite() {
        return Err(Error::NonFinite { step: steps });
    }
    Ok(PreferenceRun { params: theta, initial, last, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::fixtures::{random_pairs, random_params};
    use crate::training::gradcheck::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(method: PreferenceMethod) -> DpoConfig {
        DpoConfig { method, ..DpoConfig::default() }
    }

    /// Independent restatement: plain sums / weighted means, then softplus.
    fn oracle_loss(params: &PolicyParams, pair: &PreferencePair, c: &DpoConfig) -> f64 {
        let lw = sequence_logprob(params, &pair.state, &pair.winner_tokens).per_token_logprob;
        let ll = sequence_logprob(params, &pair.state, &pair.loser_tokens).per_token_logprob;
        let agg = |lp: &[f64], reference: &[f64]| -> f64 {
            if c.method.is_weighted() {
                let w: Vec<f64> = reference
                    .iter()
                    .map(|r| libm::pow(c.tau_weight / (libm::exp(-r) + c.epsilon_weight), c.alpha_weight))
                    .map(|w| w.max(c.delta_min).min(c.delta_max))
                    .collect();
                let z: f64 = w.iter().sum();
                let mean = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / z;
                mean(lp) - mean(reference)
            } else {
                lp.iter().sum::<f64>() - reference.iter().sum::<f64>()
            }
        };
        let m = c.beta * (agg(&lw, &pair.ref_winner_logprobs) - agg(&ll, &pair.ref_loser_logprobs));
        libm::log(1.0 + libm::exp(-m))
    }

    #[test]
    fn token_weight_values() {
        let c = DpoConfig::default();
        // PPL 2 -> 1.08 / 2; PPL 1 -> clipped to 1; PPL 1e6 -> ~1e-6.
        let w = token_weights(&[-libm::log(2.0), 0.0, -libm::log(1e6)], &c);
        assert!((w[0] - 0.54).abs() < 1e-8);
        assert_eq!(w[1], 1.0);
        assert!((w[2] - 1.08e-6).abs() < 1e-12);
        let sq = DpoConfig { alpha_weight: 2.0, ..c };
        assert!((token_weights(&[-libm::log(2.0)], &sq)[0] - 0.2916).abs() < 1e-8);
    }

    #[test]
    fn weighted_mean_and_fallback() {
        let r = weighted_seq_logprob(&[-1.0, -3.0], &[1.0, 3.0]);
        assert_eq!(r, WeightedLogProb { value: -2.5, fallback: false });
        let f = weighted_seq_logprob(&[-1.0, -3.0], &[0.0, 0.0]);
        assert_eq!(f, WeightedLogProb { value: -2.0, fallback: true });
    }

    #[test]
    fn fallback_is_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::zeros();
        let pairs = random_pairs(&mut rng, &p, 5);
        let c = DpoConfig { delta_min: 0.0, delta_max: 0.0, ..cfg(PreferenceMethod::PwDpo) };
        let (report, _) = pair_loss(&p, &pairs, &c, false).unwrap();
        assert_eq!(report.weight_fallbacks, 10);
        assert!((report.loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_is_ln2_at_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference = random_params(&mut rng, 0.3);
        let pairs = random_pairs(&mut rng, &reference, 100);
        for method in [PreferenceMethod::Dpo, PreferenceMethod::PwDpo, PreferenceMethod::Uapo, PreferenceMethod::PwUapo] {
            for pair in &pairs {
                let (loss, _) = pair_loss(&reference, core::slice::from_ref(pair), &cfg(method), false).unwrap();
                assert!((loss.loss - core::f64::consts::LN_2).abs() < 1e-12, "{method:?}: {}", loss.loss);
            }
        }
    }

    #[test]
    fn matches_oracle_away_from_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference = random_params(&mut rng, 0.2);
        let theta = random_params(&mut rng, 0.5);
        let pairs = random_pairs(&mut rng, &reference, 30);
        for method in [PreferenceMethod::Dpo, PreferenceMethod::PwDpo] {
            let c = DpoConfig { beta: 0.7, ..cfg(method) };
            for pair in &pairs {
                let got = if method.is_weighted() { pw_dpo_loss(&theta, pair, &c) } else { dpo_loss(&theta, pair, &c) };
                let want = oracle_loss(&theta, pair, &c);
                assert!((got.unwrap().0 - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_weights_reduce_to_mean_dpo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reference = random_params(&mut rng, 0.3);
        let theta = random_params(&mut rng, 0.3);
        let pairs = random_pairs(&mut rng, &reference, 100);
        let c = DpoConfig { delta_min: 1.0, delta_max: 1.0, beta: 0.5, ..cfg(PreferenceMethod::PwDpo) };
        for pair in &pairs {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let lw = sequence_logprob(&theta, &pair.state, &pair.winner_tokens).per_token_logprob;
            let ll = sequence_logprob(&theta, &pair.state, &pair.loser_tokens).per_token_logprob;
            let m = c.beta
                * ((mean(&lw) - mean(&pair.ref_winner_logprobs)) - (mean(&ll) - mean(&pair.ref_loser_logprobs)));
            let (pw, _) = pw_dpo_loss(&theta, pair, &c).unwrap();
            assert!((pw - neg_log_sigmoid(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_negates_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = random_params(&mut rng, 0.2);
        let theta = random_params(&mut rng, 0.4);
        for pair in random_pairs(&mut rng, &reference, 20) {
            let c = DpoConfig { beta: 0.3, ..cfg(PreferenceMethod::Dpo) };
            let (a, _) = dpo_loss(&theta, &pair, &c).unwrap();
            let (b, _) = dpo_loss(&theta, &pair.swapped(), &c).unwrap();
            // softplus(-m) - softplus(m) = -m
            let m = dpo_score(&theta, Reference::LogProbs(&pair.ref_winner_logprobs), &pair.state, &pair.winner_tokens, c.beta)
                - dpo_score(&theta, Reference::LogProbs(&pair.ref_loser_logprobs), &pair.state, &pair.loser_tokens, c.beta);
            assert!((a - b + m).abs() < 1e-12);
        }
    }

    #[test]
    fn dpo_score_reference_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reference = random_params(&mut rng, 0.2);
        let theta = random_params(&mut rng, 0.2);
        let pair = &random_pairs(&mut rng, &reference, 1)[0];
        let a = dpo_score(&theta, Reference::Params(&reference), &pair.state, &pair.winner_tokens, 0.01);
        let b = dpo_score(&theta, Reference::LogProbs(&pair.ref_winner_logprobs), &pair.state, &pair.winner_tokens, 0.01);
        assert_eq!(a, b);
        assert_eq!(dpo_score(&theta, Reference::Params(&theta), &pair.state, &pair.winner_tokens, 0.01), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let reference = random_params(&mut rng, 0.2);
        let theta = random_params(&mut rng, 0.2);
        let pairs = random_pairs(&mut rng, &reference, 6);
        for method in [PreferenceMethod::Dpo, PreferenceMethod::PwDpo] {
            let c = DpoConfig { beta: 0.5, ..cfg(method) };
            let (_, g) = pair_loss(&theta, &pairs, &c, true).unwrap();
            let g = g.unwrap();
            let report = finite_diff_check(
                |p| pair_loss(p, &pairs, &c, false).unwrap().0.loss,
                &theta,
                &g,
                64,
                5e-3,
                &mut rng,
            )
            .unwrap();
            assert!(report.passes(1e-5), "{method:?}: {report:?}");
        }
    }

    #[test]
    fn training_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reference = random_params(&mut rng, 0.1);
        let pairs = random_pairs(&mut rng, &reference, 20);
        for method in [PreferenceMethod::Dpo, PreferenceMethod::PwUapo] {
            let c = DpoConfig { beta: 0.1, ..cfg(method) };
            let run = preference_train(&reference, &pairs, &c, 40, 2.0, 8, &mut rng).unwrap();
            assert_eq!(run.curve.len(), 40);
            assert!((run.initial.loss - core::f64::consts::LN_2).abs() < 1e-12);
            assert!(run.last.loss < run.initial.loss, "{method:?}: {:?}", run.last);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let p = PolicyParams::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = random_pairs(&mut rng, &p, 1);
        let bad = DpoConfig { delta_min: 0.5, delta_max: 0.2, ..DpoConfig::default() };
        assert!(matches!(pair_loss(&p, &pairs, &bad, false), Err(Error::Config(_))));
        assert!(matches!(pair_loss(&p, &[], &DpoConfig::default(), false), Err(Error::Precondition(_))));
        assert!(dpo_loss(&p, &pairs[0], &cfg(PreferenceMethod::PwDpo)).is_err());
    }
}
