//! Turning search trees into training data.
//!
//! Utility labels: a kernel-rejected transition is `Invalid` (0); an
//! accepted transition on the found proof path is `Proven` (2); every other
//! accepted transition is `Stagnant` (1). Labels are per tree.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::policy::{sequence_logprob, sequence_perplexity, PolicyParams, TokenSequence};
use crate::search::{SearchTree, Utility};

/// Where a supervised example came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceTag {
    Lib,
    Book,
    Pro,
    EiRound(u32),
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::Lib => f.write_str("Lib"),
            SourceTag::Book => f.write_str("Book"),
            SourceTag::Pro => f.write_str("Pro"),
            SourceTag::EiRound(n) => write!(f, "EI-round-{n}"),
        }
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Lib" => Ok(SourceTag::Lib),
            "Book" => Ok(SourceTag::Book),
            "Pro" => Ok(SourceTag::Pro),
            _ => s
                .strip_prefix("EI-round-")
                .and_then(|n| n.parse().ok())
                .map(SourceTag::EiRound)
                .ok_or_else(|| Error::Config(alloc::format!("unknown source tag `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SftExample {
    pub state: String,
    pub tokens: TokenSequence,
    pub source: SourceTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub state: String,
    pub winner_tokens: TokenSequence,
    pub loser_tokens: TokenSequence,
    pub loser_utility: Utility,
    pub ref_winner_logprobs: Vec<f64>,
    pub ref_loser_logprobs: Vec<f64>,
}

impl PreferencePair {
    /// The same pair with winner and loser exchanged (used for antisymmetry
    /// checks; the result is not a well-formed utility pair).
    pub fn swapped(&self) -> PreferencePair {
        PreferencePair {
            state: self.state.clone(),
            winner_tokens: self.loser_tokens.clone(),
            loser_tokens: self.winner_tokens.clone(),
            loser_utility: self.loser_utility,
            ref_winner_logprobs: self.ref_loser_logprobs.clone(),
            ref_loser_logprobs: self.ref_winner_logprobs.clone(),
        }
    }

    /// Recomputes the frozen reference log-probs under `reference`.
    pub fn attach_reference(&mut self, reference: &PolicyParams) {
        self.ref_winner_logprobs = sequence_logprob(reference, &self.state, &self.winner_tokens).per_token_logprob;
        self.ref_loser_logprobs = sequence_logprob(reference, &self.state, &self.loser_tokens).per_token_logprob;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub source: SourceTag,
    pub count: usize,
    pub avg_sequence_ppl: f64,
}

/// Assigns a utility to every transition.
pub fn label_tree(tree: &SearchTree) -> SearchTree {
    let mut out = tree.clone();
    let on_path: Vec<usize> = tree.proof_edges().unwrap_or_default();
    for (i, e) in out.edges.iter_mut().enumerate() {
        e.utility = Some(if !e.valid {
            Utility::Invalid
        } else if on_path.contains(&i) {
            Utility::Proven
        } else {
            Utility::Stagnant
        });
    }
    out
}

/// One example per `Proven` transition, in proof order.
pub fn extract_sft(tree: &SearchTree, source: SourceTag) -> Vec<SftExample> {
    tree.proof_edges()
        .unwrap_or_default()
        .into_iter()
        .map(|i| &tree.edges[i])
        .filter(|e| e.utility == Some(Utility::Proven))
        .map(|e| SftExample { state: e.from_state.clone(), tokens: e.tactic_tokens.clone(), source })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceConfig {
    pub losers_per_winner: usize,
    /// When set, the probability mass given to stagnant (u=1) candidates at
    /// each draw; invalid candidates share the rest. `None` samples all
    /// candidates uniformly.
    pub loser_class_bias: Option<f64>,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        PreferenceConfig { losers_per_winner: 4, loser_class_bias: None }
    }
}

/// Pairs each proof-path tactic with up to `losers_per_winner` of its
/// sibling transitions (u in {0, 1}), sampled without replacement, and
/// attaches reference log-probs for both sides.
pub fn extract_preferences<R: RngCore + ?Sized>(
    tree: &SearchTree,
    reference: &PolicyParams,
    config: &PreferenceConfig,
    rng: &mut R,
) -> Result<Vec<PreferencePair>> {
    if config.losers_per_winner < 1 {
        return Err(Error::Precondition("losers_per_winner must be >= 1".into()));
    }
    if let Some(b) = config.loser_class_bias {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config("loser_class_bias must lie in [0, 1]".into()));
        }
    }
    let mut pairs = Vec::new();
    for w in tree.proof_edges().unwrap_or_default() {
        let winner = &tree.edges[w];
        if winner.utility != Some(Utility::Proven) {
            continue;
        }
        let mut candidates: Vec<usize> = tree
            .edges_from(winner.from_node)
            .filter(|&i| {
                let e = &tree.edges[i];
                matches!(e.utility, Some(Utility::Invalid | Utility::Stagnant)) && e.tactic_tokens != winner.tactic_tokens
            })
            .collect();
        let chosen = match config.loser_class_bias {
            None => sample_uniform(&mut candidates, config.losers_per_winner, rng),
            Some(bias) => sample_biased(tree, candidates, config.losers_per_winner, bias, rng),
        };
        for l in chosen {
            let loser = &tree.edges[l];
            let mut pair = PreferencePair {
                state: winner.from_state.clone(),
                winner_tokens: winner.tactic_tokens.clone(),
                loser_tokens: loser.tactic_tokens.clone(),
                loser_utility: loser.utility.unwrap_or(Utility::Invalid),
                ref_winner_logprobs: Vec::new(),
                ref_loser_logprobs: Vec::new(),
            };
            pair.attach_reference(reference);
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

/// Partial Fisher-Yates: the first `k` of a uniform shuffle.
fn sample_uniform<R: RngCore + ?Sized>(items: &mut [usize], k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(items.len());
    for i in 0..k {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
    items[..k].to_vec()
}

fn sample_biased<R: RngCore + ?Sized>(
    tree: &SearchTree,
    mut items: Vec<usize>,
    k: usize,
    bias: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut out = Vec::new();
    while out.len() < k && !items.is_empty() {
        let stagnant = items.iter().filter(|&&i| tree.edges[i].utility == Some(Utility::Stagnant)).count();
        let invalid = items.len() - stagnant;
        let weight = |i: usize| -> f64 {
            match tree.edges[i].utility {
                Some(Utility::Stagnant) if invalid == 0 => 1.0,
                Some(Utility::Stagnant) => bias / stagnant as f64,
                _ if stagnant == 0 => 1.0,
                _ => (1.0 - bias) / invalid as f64,
            }
        };
        let total: f64 = items.iter().map(|&i| weight(i)).sum();
        if total <= 0.0 {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = items.len() - 1;
        for (pos, &i) in items.iter().enumerate() {
            u -= weight(i);
            if u < 0.0 {
                pick = pos;
                break;
            }
        }
        out.push(items.remove(pick));
    }
    out
}

/// Per-source count and mean sequence perplexity, ordered by source.
pub fn corpus_ppl_stats(corpus: &[SftExample], params: &PolicyParams) -> Result<Vec<CorpusStats>> {
    if corpus.is_empty() {
        return Err(Error::Precondition("corpus must be nonempty".into()));
    }
    let mut groups: BTreeMap<SourceTag, (usize, f64)> = BTreeMap::new();
    for ex in corpus {
        let ppl = sequence_perplexity(params, &ex.state, &ex.tokens);
        let g = groups.entry(ex.source).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += ppl;
    }
    Ok(groups
        .into_iter()
        .map(|(source, (count, sum))| CorpusStats { source, count, avg_sequence_ppl: sum / count as f64 })
        .collect())
}

/// Keeps, in order, the examples with sequence perplexity below `threshold`.
pub fn ppl_filter(corpus: &[SftExample], params: &PolicyParams, threshold: f64) -> Result<Vec<SftExample>> {
    if !(threshold > 1.0) {
        return Err(Error::Precondition("perplexity threshold must exceed 1".into()));
    }
    Ok(corpus
        .iter()
        .filter(|ex| sequence_perplexity(params, &ex.state, &ex.tokens) < threshold)
        .cloned()
        .collect())
}

/// Default filtering threshold on sequence perplexity.
pub const DEFAULT_PPL_THRESHOLD: f64 = 5.0;
