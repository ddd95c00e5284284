use alloc::vec::Vec;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::policy::{mean_nll, nll_gradient, NllExample, PolicyParams};

#[derive(Clone, Debug, PartialEq)]
pub struct SftConfig {
    pub epochs: usize,
    pub learning_rate_start: f64,
    pub learning_rate_end: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig { epochs: 2, learning_rate_start: 0.5, learning_rate_end: 0.05, batch_size: 16, rng_seed: 0 }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate_end > 0.0) || !(self.learning_rate_start >= self.learning_rate_end) {
            return Err(Error::Config("learning rates must satisfy start >= end > 0".into()));
        }
        Ok(())
    }
}

/// Cosine decay from `start` (step 0) to `end` (last step).
pub fn cosine_learning_rate(start: f64, end: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps <= 1 {
        return start;
    }
    let progress = step as f64 / (total_steps - 1) as f64;
    end + 0.5 * (start - end) * (1.0 + libm::cos(core::f64::consts::PI * progress))
}

#[derive(Clone, Debug)]
pub struct SftRun {
    pub params: PolicyParams,
    /// Mean NLL on the corpus before training, then after each epoch.
    pub epoch_nll: Vec<f64>,
    pub steps: usize,
}

/// Mini-batch gradient descent on mean NLL with a cosine-decayed rate.
///
/// Fails with [`Error::Diverged`] if the final corpus NLL is above the
/// initial one.
pub fn sft_train(params: &PolicyParams, corpus: &[NllExample], config: &SftConfig) -> Result<SftRun> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Precondition("SFT corpus must be nonempty".into()));
    }
    let mut theta = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let batches_per_epoch = corpus.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_nll = alloc::vec![mean_nll(&theta, corpus)];
    let mut step = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| corpus[i].clone()));
            let (loss, grad) = nll_gradient(&theta, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFinite { step });
            }
            let lr = cosine_learning_rate(config.learning_rate_start, config.learning_rate_end, step, total_steps);
            theta.add_scaled(&grad, -lr);
            step += 1;
        }
        epoch_nll.push(mean_nll(&theta, corpus));
    }
    let initial_loss = epoch_nll[0];
    let final_loss = *epoch_nll.last().unwrap_or(&initial_loss);
    if !final_loss.is_finite() {
        return Err(Error::NonFinite { step });
    }
    if final_loss > initial_loss {
        return Err(Error::Diverged { initial_loss, final_loss });
    }
    Ok(SftRun { params: theta, epoch_nll, steps: step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tactic;
    use crate::policy::{token_logprobs, tokenize, Token};
    use alloc::string::ToString;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_learning_rate(0.5, 0.05, 0, 10), 0.5);
        assert!((cosine_learning_rate(0.5, 0.05, 9, 10) - 0.05).abs() < 1e-15);
        let mid = cosine_learning_rate(0.5, 0.05, 5, 11);
        assert!((mid - 0.275).abs() < 1e-12);
    }

    #[test]
    fn single_example_learns_rfl() {
        let state = "S(0) = S(0)";
        let corpus = alloc::vec![(state.to_string(), tokenize(&Tactic::Rfl))];
        let cfg = SftConfig { epochs: 50, batch_size: 1, ..SftConfig::default() };
        let run = sft_train(&PolicyParams::zeros(), &corpus, &cfg).unwrap();
        assert_eq!(run.steps, 50);
        let p = libm::exp(token_logprobs(&run.params, state, &[], 0, 1.0)[Token::Rfl.id()]);
        assert!(p > 0.9, "p(RFL) = {p}");
        assert!(run.epoch_nll.last().unwrap() < &run.epoch_nll[0]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            sft_train(&PolicyParams::zeros(), &[], &SftConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn duplicated_example_trains_identically() {
        let ex = ("S(0) = S(0)".to_string(), tokenize(&Tactic::Rfl));
        let cfg = SftConfig { epochs: 3, batch_size: 4, ..SftConfig::default() };
        let one = sft_train(&PolicyParams::zeros(), &[ex.clone()], &cfg).unwrap();
        let two = sft_train(&PolicyParams::zeros(), &[ex.clone(), ex], &cfg).unwrap();
        assert_eq!(one.params, two.params);
    }
}
