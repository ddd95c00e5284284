//! Pass@n evaluation, the expert-iteration driver and the τ ablation.
//!
//! Searches over different goals run on the rayon pool against a shared
//! read-only checkpoint; results are collected in goal order, so output is
//! identical for any thread count.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stepprover_core::bench::{generate_excluding, BenchmarkSuite, Split};
use stepprover_core::curation::{
    corpus_ppl_stats, extract_preferences, extract_sft, label_tree, PreferencePair, SftExample, SourceTag,
};
use stepprover_core::kernel::apply_tactic;
use stepprover_core::policy::{tokenize, NllExample};
use stepprover_core::search::{best_first_search, SearchConfig, SearchTree, Utility};
use stepprover_core::training::{preference_train, sft_train, LossReport, PreferenceMethod, SftConfig};
use stepprover_core::{PolicyParams, ProofState};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::StatsRow;

/// SplitMix64 finalizer; derives independent stream seeds from a run seed.
pub fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const STREAM_TRAIN_SEARCH: u64 = 1;
pub const STREAM_SFT: u64 = 2;
pub const STREAM_PREF_EXTRACT: u64 = 3;
pub const STREAM_PREF_TRAIN: u64 = 4;
pub const STREAM_SEED_CORPUS: u64 = 5;

/// Search seed of goal `index` in `round` (round 0 for standalone search).
pub fn search_seed(seed: u64, round: usize, index: usize) -> u64 {
    mix_seed(seed, STREAM_TRAIN_SEARCH, ((round as u64) << 32) | index as u64)
}

// ---------------------------------------------------------------- evaluation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttemptSummary {
    pub seed: u64,
    pub proved: bool,
    pub expansions: usize,
    pub transitions: usize,
    pub invalid: usize,
    /// Valid transitions off the proof path (u = 1).
    pub stagnant: usize,
}

impl AttemptSummary {
    pub fn of(tree: &SearchTree, seed: u64) -> Self {
        let labeled = label_tree(tree);
        let count = |u| labeled.edges.iter().filter(|e| e.utility == Some(u)).count();
        AttemptSummary {
            seed,
            proved: tree.is_proved(),
            expansions: tree.expansions_used,
            transitions: tree.edges.len(),
            invalid: count(Utility::Invalid),
            stagnant: count(Utility::Stagnant),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GoalEval {
    pub goal: String,
    /// Index of the first successful attempt (restart mode), or the
    /// budget slice in which the single search succeeded (accumulate mode).
    pub solved_attempt: Option<usize>,
    pub attempts: Vec<AttemptSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PassReport {
    pub n: usize,
    pub pass1: f64,
    pub pass_n: f64,
    pub accumulate_budget: bool,
    pub goals: Vec<GoalEval>,
}

impl PassReport {
    /// Fraction solved within the first `k` attempts (`k <= n`).
    pub fn pass_at(&self, k: usize) -> f64 {
        let solved = self.goals.iter().filter(|g| g.solved_attempt.is_some_and(|a| a < k)).count();
        solved as f64 / self.goals.len() as f64
    }

    /// First-attempt summaries of goals proved on attempt 0.
    pub fn first_attempt_solved(&self) -> impl Iterator<Item = (usize, &AttemptSummary)> {
        self.goals.iter().enumerate().filter(|(_, g)| g.solved_attempt == Some(0)).map(|(i, g)| (i, &g.attempts[0]))
    }
}

/// Pass@1 and Pass@n over `goals`.
///
/// Restart mode: attempt `a` is a fresh search seeded `base_seed + a` with
/// `per_search_budget` expansions; a goal stops at its first success, so
/// Pass@k for every `k <= n` is determined by the same attempts.
/// Accumulate mode: one search seeded `base_seed` with `n *
/// per_search_budget` expansions; it counts for Pass@1 if it closed within
/// the first `per_search_budget` expansions.
pub fn evaluate_pass_at_n(
    params: &PolicyParams,
    goals: &[ProofState],
    n: usize,
    per_search_budget: usize,
    base_seed: u64,
    search: &SearchConfig,
    accumulate_budget: bool,
) -> Result<PassReport> {
    if n < 1 || per_search_budget < 1 {
        return Err(CliError::Precondition("n and per-search budget must be >= 1".into()));
    }
    if goals.is_empty() {
        return Err(CliError::Precondition("evaluation needs at least one goal".into()));
    }
    let evals: Vec<Result<GoalEval>> = goals
        .par_iter()
        .map(|goal| {
            let mut attempts = Vec::new();
            let mut solved_attempt = None;
            if accumulate_budget {
                let cfg = SearchConfig { node_budget: n * per_search_budget, rng_seed: base_seed, ..search.clone() };
                let tree = best_first_search(params, goal, &cfg)?;
                if tree.is_proved() {
                    solved_attempt = Some((tree.expansions_used - 1) / per_search_budget);
                }
                attempts.push(AttemptSummary::of(&tree, base_seed));
            } else {
                for a in 0..n {
                    let seed = base_seed.wrapping_add(a as u64);
                    let cfg = SearchConfig { node_budget: per_search_budget, rng_seed: seed, ..search.clone() };
                    let tree = best_first_search(params, goal, &cfg)?;
                    attempts.push(AttemptSummary::of(&tree, seed));
                    if tree.is_proved() {
                        solved_attempt = Some(a);
                        break;
                    }
                }
            }
            Ok(GoalEval { goal: goal.serialize(), solved_attempt, attempts })
        })
        .collect();
    let goals = evals.into_iter().collect::<Result<Vec<_>>>()?;
    let mut report = PassReport { n, pass1: 0.0, pass_n: 0.0, accumulate_budget, goals };
    report.pass1 = report.pass_at(1);
    report.pass_n = report.pass_at(n);
    Ok(report)
}

/// Median of a nonempty list (mean of the middle two for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median per-token reference perplexity over both sides of every pair;
/// a data-driven choice of the PW τ.
pub fn median_reference_token_ppl(pairs: &[PreferencePair]) -> Option<f64> {
    let ppl: Vec<f64> = pairs
        .iter()
        .flat_map(|p| p.ref_winner_logprobs.iter().chain(&p.ref_loser_logprobs))
        .map(|lp| (-lp).exp())
        .collect();
    median(&ppl)
}

/// Search-efficiency comparison of two checkpoints over the (goal, seed)
/// searches that both prove.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EfficiencyComparison {
    pub searches_per_goal: usize,
    pub common_solved: usize,
    pub median_expansions_before: f64,
    pub median_expansions_after: f64,
    pub stagnant_per_solved_before: f64,
    pub stagnant_per_solved_after: f64,
}

impl EfficiencyComparison {
    /// Median expansions do not increase and stagnant transitions per
    /// solved search strictly decrease.
    pub fn improved(&self) -> bool {
        self.median_expansions_after <= self.median_expansions_before
            && self.stagnant_per_solved_after < self.stagnant_per_solved_before
    }
}

/// Runs `searches_per_goal` searches (seeds `base_seed + s`) per goal with
/// each checkpoint and compares them on the searches both prove. `None` if
/// no search is proved by both.
pub fn compare_efficiency(
    before: &PolicyParams,
    after: &PolicyParams,
    goals: &[ProofState],
    searches_per_goal: usize,
    base_seed: u64,
    search: &SearchConfig,
) -> Result<Option<EfficiencyComparison>> {
    let runs: Vec<(u64, &ProofState)> = goals
        .iter()
        .flat_map(|g| (0..searches_per_goal as u64).map(move |s| (base_seed.wrapping_add(s), g)))
        .collect();
    let pairs: Vec<Result<(AttemptSummary, AttemptSummary)>> = runs
        .par_iter()
        .map(|&(seed, goal)| {
            let cfg = SearchConfig { rng_seed: seed, ..search.clone() };
            let b = AttemptSummary::of(&best_first_search(before, goal, &cfg)?, seed);
            let a = AttemptSummary::of(&best_first_search(after, goal, &cfg)?, seed);
            Ok((b, a))
        })
        .collect();
    let common: Vec<(AttemptSummary, AttemptSummary)> =
        pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().filter(|(b, a)| b.proved && a.proved).collect();
    if common.is_empty() {
        return Ok(None);
    }
    let n = common.len() as f64;
    let before_exp: Vec<f64> = common.iter().map(|(b, _)| b.expansions as f64).collect();
    let after_exp: Vec<f64> = common.iter().map(|(_, a)| a.expansions as f64).collect();
    Ok(Some(EfficiencyComparison {
        searches_per_goal,
        common_solved: common.len(),
        median_expansions_before: median(&before_exp).unwrap_or(0.0),
        median_expansions_after: median(&after_exp).unwrap_or(0.0),
        stagnant_per_solved_before: common.iter().map(|(b, _)| b.stagnant as f64).sum::<f64>() / n,
        stagnant_per_solved_after: common.iter().map(|(_, a)| a.stagnant as f64).sum::<f64>() / n,
    }))
}

// ---------------------------------------------------------------- expert iteration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EiRoundReport {
    pub round_index: usize,
    pub theorems_attempted: usize,
    pub theorems_proved: usize,
    pub new_sft_examples: usize,
    pub new_preference_pairs: usize,
    pub sft_pool_size: usize,
    pub pass1: f64,
    pub pass_n: f64,
    pub n: usize,
    pub corpus_ppl_by_source: Vec<StatsRow>,
    pub sft_nll_by_epoch: Vec<f64>,
    pub preference_method: Option<String>,
    pub preference_initial_loss: Option<f64>,
    pub preference_final_loss: Option<f64>,
    pub preference_weight_fallbacks: usize,
}

/// Everything one round produced.
#[derive(Clone, Debug)]
pub struct RoundOutput {
    pub report: EiRoundReport,
    /// Checkpoint after SFT, before any preference training (the reference).
    pub post_sft: PolicyParams,
    /// Checkpoint at the end of the round.
    pub params: PolicyParams,
    pub trees: Vec<(SearchTree, SearchConfig)>,
    pub new_sft: Vec<SftExample>,
    /// Preference pairs of this round with references from `post_sft`.
    pub pairs: Vec<PreferencePair>,
    /// Mini-batch loss of every preference step (empty without one).
    pub pref_curve: Vec<LossReport>,
    pub heldout: PassReport,
}

#[derive(Clone, Debug)]
pub struct EiRun {
    pub baseline: PassReport,
    pub seed_corpus: Vec<SftExample>,
    pub rounds: Vec<RoundOutput>,
}

impl EiRun {
    pub fn final_params(&self) -> &PolicyParams {
        &self.rounds.last().expect("at least one round").params
    }
}

/// Witness-proof SFT examples of `count` fresh goals disjoint from `suite`.
pub fn seed_corpus(suite: &BenchmarkSuite, config: &RunConfig) -> Result<Vec<SftExample>> {
    if config.seed_corpus_goals == 0 {
        return Ok(Vec::new());
    }
    let exclude: BTreeSet<String> = suite.goals.iter().map(|g| g.goal.serialize()).collect();
    let book = generate_excluding(
        config.seed_corpus_goals,
        &config.seed_corpus_mix,
        mix_seed(config.seed, STREAM_SEED_CORPUS, 0),
        &exclude,
    )?;
    let mut out = Vec::new();
    for g in &book.goals {
        let mut state = g.goal.clone();
        for tactic in &g.witness {
            out.push(SftExample { state: state.serialize(), tokens: tokenize(tactic), source: SourceTag::Book });
            state = apply_tactic(&state, tactic).map_err(stepprover_core::Error::from)?;
        }
    }
    Ok(out)
}

fn nll_examples(pool: &[SftExample]) -> Vec<NllExample> {
    pool.iter().map(|e| (e.state.clone(), e.tokens.clone())).collect()
}

/// Appends examples not already present as an exact (state, tokens) pair.
fn merge_into_pool(pool: &mut Vec<SftExample>, seen: &mut BTreeSet<(String, Vec<u8>)>, new: &[SftExample]) {
    for ex in new {
        if seen.insert((ex.state.clone(), ex.tokens.ids())) {
            pool.push(ex.clone());
        }
    }
}

/// Keeps the pairs a method trains on: DPO variants use invalid losers
/// only; UAPO variants also use stagnant ones.
pub fn select_pairs(pairs: &[PreferencePair], method: PreferenceMethod) -> Vec<PreferencePair> {
    pairs
        .iter()
        .filter(|p| method.uses_stagnant_losers() || p.loser_utility == Utility::Invalid)
        .cloned()
        .collect()
}

/// Runs `config.ei_rounds` rounds of search, labeling, extraction, SFT on
/// the accumulated pool, optional preference training and Heldout
/// evaluation. The seed corpus, if any, is fitted before round-1 search and
/// stays in the pool.
pub fn run_expert_iteration(config: &RunConfig, suite: &BenchmarkSuite) -> Result<EiRun> {
    config.validate()?;
    let train: Vec<ProofState> = suite.split(Split::Train).iter().map(|g| g.goal.clone()).collect();
    let heldout: Vec<ProofState> = suite.split(Split::Heldout).iter().map(|g| g.goal.clone()).collect();
    if train.is_empty() || heldout.is_empty() {
        return Err(CliError::Precondition("suite needs nonempty Train and Heldout splits".into()));
    }
    let evaluate = |params: &PolicyParams| {
        evaluate_pass_at_n(
            params,
            &heldout,
            config.pass_n,
            config.per_search_budget,
            config.seed,
            &config.search,
            config.accumulate_budget,
        )
    };
    let sft_config = |round: usize| SftConfig { rng_seed: mix_seed(config.seed, STREAM_SFT, round as u64), ..config.sft.clone() };

    let mut params = PolicyParams::zeros();
    params.seed = config.seed;
    let baseline = evaluate(&params)?;

    let seed_corpus = seed_corpus(suite, config)?;
    let mut pool = Vec::new();
    let mut seen = BTreeSet::new();
    merge_into_pool(&mut pool, &mut seen, &seed_corpus);
    if !pool.is_empty() {
        params = sft_train(&params, &nll_examples(&pool), &sft_config(0))?.params;
    }

    let mut rounds = Vec::new();
    for round in 1..=config.ei_rounds {
        let trees: Vec<(SearchTree, SearchConfig)> = train
            .par_iter()
            .enumerate()
            .map(|(i, goal)| {
                let cfg = SearchConfig {
                    rng_seed: search_seed(config.seed, round, i),
                    ..config.search.clone()
                };
                best_first_search(&params, goal, &cfg).map(|t| (label_tree(&t), cfg))
            })
            .collect::<std::result::Result<_, _>>()?;
        let proved = trees.iter().filter(|(t, _)| t.is_proved()).count();
        if proved == 0 {
            return Err(CliError::Precondition(format!(
                "round {round} proved none of {} Train goals (cold start): the policy never closes a goal within \
                 budget {}; fit a seed corpus (bench.seed_corpus_goals) or raise search.budget",
                train.len(),
                config.search.node_budget
            )));
        }

        let new_sft: Vec<SftExample> =
            trees.iter().flat_map(|(t, _)| extract_sft(t, SourceTag::EiRound(round as u32))).collect();
        let before = pool.len();
        merge_into_pool(&mut pool, &mut seen, &new_sft);
        debug_assert!(pool.len() >= before);
        let sft = sft_train(&params, &nll_examples(&pool), &sft_config(round))?;
        let post_sft = sft.params;

        let mut pairs = Vec::new();
        for (i, (tree, _)) in trees.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, STREAM_PREF_EXTRACT, ((round as u64) << 32) | i as u64));
            pairs.extend(extract_preferences(tree, &post_sft, &config.preference, &mut rng)?);
        }

        let mut next = post_sft.clone();
        let (mut pref_initial, mut pref_final, mut fallbacks) = (None, None, 0);
        let mut pref_curve = Vec::new();
        if let Some(pt) = config.preference_training() {
            let chosen = select_pairs(&pairs, pt.method);
            if !chosen.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, STREAM_PREF_TRAIN, round as u64));
                let run = preference_train(&post_sft, &chosen, &pt.dpo, pt.steps, pt.learning_rate, pt.batch_size, &mut rng)?;
                pref_initial = Some(run.initial.loss);
                pref_final = Some(run.last.loss);
                fallbacks = run.last.weight_fallbacks;
                pref_curve = run.curve;
                next = run.params;
            }
        }
        next.seed = config.seed;
        next.version = format!("ei-round-{round}");
        params = next;

        let heldout_report = evaluate(&params)?;
        let stats = corpus_ppl_stats(&pool, &params)?;
        let report = EiRoundReport {
            round_index: round,
            theorems_attempted: train.len(),
            theorems_proved: proved,
            new_sft_examples: pool.len() - before,
            new_preference_pairs: pairs.len(),
            sft_pool_size: pool.len(),
            pass1: heldout_report.pass1,
            pass_n: heldout_report.pass_n,
            n: config.pass_n,
            corpus_ppl_by_source: stats.iter().map(StatsRow::from).collect(),
            sft_nll_by_epoch: sft.epoch_nll,
            preference_method: config.method.map(|m| m.name().to_string()),
            preference_initial_loss: pref_initial,
            preference_final_loss: pref_final,
            preference_weight_fallbacks: fallbacks,
        };
        rounds.push(RoundOutput {
            report,
            post_sft,
            params: params.clone(),
            trees,
            new_sft,
            pairs,
            pref_curve,
            heldout: heldout_report,
        });
    }
    Ok(EiRun { baseline, seed_corpus, rounds })
}

// ---------------------------------------------------------------- ablation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub tau: f64,
    pub pass1: f64,
    #[serde(rename = "passN")]
    pub pass_n: f64,
}

/// The full pipeline once per τ with every seed held fixed; one row per τ
/// from the final round's Heldout evaluation.
pub fn run_tau_ablation(config: &RunConfig, suite: &BenchmarkSuite, taus: &[f64]) -> Result<Vec<AblationRow>> {
    match config.method {
        Some(m) if m.is_weighted() => {}
        _ => return Err(CliError::Precondition("τ ablation needs pref.method pw-dpo or pw-uapo".into())),
    }
    if taus.is_empty() {
        return Err(CliError::Usage("give at least one τ value".into()));
    }
    taus.iter()
        .map(|&tau| {
            let mut c = config.clone();
            c.dpo.tau_weight = tau;
            let run = run_expert_iteration(&c, suite)?;
            let last = &run.rounds.last().expect("at least one round").report;
            Ok(AblationRow { tau, pass1: last.pass1, pass_n: last.pass_n })
        })
        .collect()
}
