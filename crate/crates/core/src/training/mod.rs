//! Losses, gradients and optimizers: SFT on verified steps and the
//! DPO family (DPO, UAPO, PW-DPO, PW-UAPO).
//!
//! Everything uses plain mini-batch gradient descent; gradients are
//! analytic and can be checked with [`gradcheck::finite_diff_check`].

pub mod gradcheck;
pub mod preference;
pub mod sft;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use preference::{
    dpo_loss, dpo_score, pair_loss, preference_train, pw_dpo_loss, token_weights, weighted_seq_logprob, DpoConfig,
    LossReport, PreferenceMethod, PreferenceRun, Reference, WeightedLogProb,
};
pub use sft::{cosine_learning_rate, sft_train, SftConfig, SftRun};

#[cfg(test)]
pub(crate) mod fixtures {
    use alloc::string::ToString;
    use alloc::vec::Vec;

    use rand::Rng;

    use crate::curation::PreferencePair;
    use crate::kernel::{Direction, RuleId, Tactic};
    use crate::policy::{tokenize, PolicyParams, TokenSequence};
    use crate::search::Utility;

    const STATES: [&str; 5] = [
        "add(S(0),0) = S(0)",
        "S(S(0)) = add(S(0),S(0))",
        "mul(x,S(0)) = x",
        "add(add(x,y),z) = add(x,add(y,z))",
        "0 = 0",
    ];

    /// Every weight drawn uniformly from `[-scale, scale]`.
    pub fn random_params<R: Rng>(rng: &mut R, scale: f64) -> PolicyParams {
        let mut p = PolicyParams::zeros();
        for w in p.as_mut_slice() {
            *w = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn random_tactic_tokens<R: Rng>(rng: &mut R) -> TokenSequence {
        let t = match rng.random_range(0..3) {
            0 => Tactic::Rfl,
            1 => Tactic::Sym,
            _ => {
                let rule = RuleId::ALL[rng.random_range(0..6)];
                let dir = if rng.random_bool(0.5) { Direction::L2R } else { Direction::R2L };
                let len = rng.random_range(1..=4);
                let path: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
                Tactic::Rw { rule, direction: dir, path: crate::kernel::GoalPath(path) }
            }
        };
        tokenize(&t)
    }

    /// Pairs over fixed states with frozen log-probs from `reference`.
    pub fn random_pairs<R: Rng>(rng: &mut R, reference: &PolicyParams, n: usize) -> Vec<PreferencePair> {
        (0..n)
            .map(|_| {
                let mut pair = PreferencePair {
                    state: STATES[rng.random_range(0..STATES.len())].to_string(),
                    winner_tokens: random_tactic_tokens(rng),
                    loser_tokens: random_tactic_tokens(rng),
                    loser_utility: if rng.random_bool(0.5) { Utility::Invalid } else { Utility::Stagnant },
                    ref_winner_logprobs: Vec::new(),
                    ref_loser_logprobs: Vec::new(),
                };
                pair.attach_reference(reference);
                pair
            })
            .collect()
    }
}
