//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected. Every key can be overridden on the command
//! line with `--set key=value`, and `--seed` / `STEPPROVER_SEED` override
//! `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use stepprover_core::bench::TierMix;
use stepprover_core::curation::PreferenceConfig;
use stepprover_core::search::SearchConfig;
use stepprover_core::training::{DpoConfig, PreferenceMethod, SftConfig};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "STEPPROVER_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceTraining {
    pub method: PreferenceMethod,
    pub dpo: DpoConfig,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub bench_count: usize,
    pub bench_mix: TierMix,
    /// Witness-proof goals (disjoint from the suite) fitted before round 1.
    pub seed_corpus_goals: usize,
    /// Tier mix of the seed corpus; all tiers by default so every rule,
    /// including the loop-inducing ones, has some prior mass.
    pub seed_corpus_mix: TierMix,
    pub search: SearchConfig,
    pub sft: SftConfig,
    pub preference: PreferenceConfig,
    pub dpo: DpoConfig,
    /// `None` runs SFT-only expert iteration.
    pub method: Option<PreferenceMethod>,
    pub pref_steps: usize,
    pub pref_learning_rate: f64,
    pub pref_batch_size: usize,
    pub ei_rounds: usize,
    pub pass_n: usize,
    pub per_search_budget: usize,
    pub accumulate_budget: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            bench_count: 200,
            bench_mix: TierMix::EASY_MEDIUM,
            seed_corpus_goals: 60,
            seed_corpus_mix: TierMix::ALL,
            search: SearchConfig::default(),
            sft: SftConfig::default(),
            preference: PreferenceConfig::default(),
            dpo: DpoConfig::default(),
            method: None,
            pref_steps: 100,
            pref_learning_rate: 2.0,
            pref_batch_size: 32,
            ei_rounds: 2,
            pass_n: 8,
            per_search_budget: 400,
            accumulate_budget: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::Usage(format!("bad value `{value}` for `{key}`")))
}

fn parse_method(key: &str, value: &str) -> Result<Option<PreferenceMethod>> {
    if value == "none" {
        return Ok(None);
    }
    PreferenceMethod::from_name(value)
        .map(Some)
        .ok_or_else(|| CliError::Usage(format!("bad value `{value}` for `{key}` (none|dpo|uapo|pw-dpo|pw-uapo)")))
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "bench.count",
        "bench.mix",
        "bench.seed_corpus_goals",
        "bench.seed_corpus_mix",
        "search.width",
        "search.temperature",
        "search.alpha",
        "search.budget",
        "search.max_depth",
        "sft.epochs",
        "sft.lr_start",
        "sft.lr_end",
        "sft.batch",
        "pref.method",
        "pref.beta",
        "pref.tau",
        "pref.eps",
        "pref.alpha",
        "pref.delta_min",
        "pref.delta_max",
        "pref.steps",
        "pref.lr",
        "pref.batch",
        "pref.losers_per_winner",
        "pref.loser_class_bias",
        "ei.rounds",
        "eval.n",
        "eval.budget",
        "eval.accumulate_budget",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "bench.count" => self.bench_count = parse(key, v)?,
            "bench.mix" => self.bench_mix = v.parse().map_err(|e| CliError::Usage(format!("{e}")))?,
            "bench.seed_corpus_goals" => self.seed_corpus_goals = parse(key, v)?,
            "bench.seed_corpus_mix" => self.seed_corpus_mix = v.parse().map_err(|e| CliError::Usage(format!("{e}")))?,
            "search.width" => self.search.expansion_width = parse(key, v)?,
            "search.temperature" => self.search.sampling_temperature = parse(key, v)?,
            "search.alpha" => self.search.length_norm_alpha = parse(key, v)?,
            "search.budget" => self.search.node_budget = parse(key, v)?,
            "search.max_depth" => self.search.max_depth = parse(key, v)?,
            "sft.epochs" => self.sft.epochs = parse(key, v)?,
            "sft.lr_start" => self.sft.learning_rate_start = parse(key, v)?,
            "sft.lr_end" => self.sft.learning_rate_end = parse(key, v)?,
            "sft.batch" => self.sft.batch_size = parse(key, v)?,
            "pref.method" => self.method = parse_method(key, v)?,
            "pref.beta" => self.dpo.beta = parse(key, v)?,
            "pref.tau" => self.dpo.tau_weight = parse(key, v)?,
            "pref.eps" => self.dpo.epsilon_weight = parse(key, v)?,
            "pref.alpha" => self.dpo.alpha_weight = parse(key, v)?,
            "pref.delta_min" => self.dpo.delta_min = parse(key, v)?,
            "pref.delta_max" => self.dpo.delta_max = parse(key, v)?,
            "pref.steps" => self.pref_steps = parse(key, v)?,
            "pref.lr" => self.pref_learning_rate = parse(key, v)?,
            "pref.batch" => self.pref_batch_size = parse(key, v)?,
            "pref.losers_per_winner" => self.preference.losers_per_winner = parse(key, v)?,
            "pref.loser_class_bias" => {
                self.preference.loser_class_bias = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "ei.rounds" => self.ei_rounds = parse(key, v)?,
            "eval.n" => self.pass_n = parse(key, v)?,
            "eval.budget" => self.per_search_budget = parse(key, v)?,
            "eval.accumulate_budget" => self.accumulate_budget = parse(key, v)?,
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_pairs(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ei_rounds < 1 || self.pass_n < 1 || self.per_search_budget < 1 || self.bench_count < 1 {
            return Err(CliError::Usage("ei.rounds, eval.n, eval.budget and bench.count must be >= 1".into()));
        }
        self.search.validate()?;
        self.sft.validate()?;
        self.dpo.validate()?;
        if self.method.is_some() && (self.pref_steps < 1 || self.pref_batch_size < 1 || !(self.pref_learning_rate > 0.0)) {
            return Err(CliError::Usage("pref.steps, pref.batch must be >= 1 and pref.lr > 0".into()));
        }
        Ok(())
    }

    /// Canonical flat text: every key in [`Self::KEYS`] order. Parsing it
    /// back yields an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let method = self.method.map_or("none", |m| m.name());
        let bias = self.preference.loser_class_bias.map_or("none".to_string(), |b| b.to_string());
        let values = [
            self.seed.to_string(),
            self.bench_count.to_string(),
            self.bench_mix.to_string(),
            self.seed_corpus_goals.to_string(),
            self.seed_corpus_mix.to_string(),
            self.search.expansion_width.to_string(),
            self.search.sampling_temperature.to_string(),
            self.search.length_norm_alpha.to_string(),
            self.search.node_budget.to_string(),
            self.search.max_depth.to_string(),
            self.sft.epochs.to_string(),
            self.sft.learning_rate_start.to_string(),
            self.sft.learning_rate_end.to_string(),
            self.sft.batch_size.to_string(),
            method.to_string(),
            self.dpo.beta.to_string(),
            self.dpo.tau_weight.to_string(),
            self.dpo.epsilon_weight.to_string(),
            self.dpo.alpha_weight.to_string(),
            self.dpo.delta_min.to_string(),
            self.dpo.delta_max.to_string(),
            self.pref_steps.to_string(),
            self.pref_learning_rate.to_string(),
            self.pref_batch_size.to_string(),
            self.preference.losers_per_winner.to_string(),
            bias,
            self.ei_rounds.to_string(),
            self.pass_n.to_string(),
            self.per_search_budget.to_string(),
            self.accumulate_budget.to_string(),
        ];
        Self::KEYS.iter().copied().zip(values).collect()
    }

    pub fn preference_training(&self) -> Option<PreferenceTraining> {
        self.method.map(|method| PreferenceTraining {
            method,
            dpo: DpoConfig { method, ..self.dpo.clone() },
            steps: self.pref_steps,
            learning_rate: self.pref_learning_rate,
            batch_size: self.pref_batch_size,
        })
    }
}

/// Parses `key = value` lines into an ordered map (later lines win).
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Reads the seed override from the environment, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an integer"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 9\npref.method = pw-uapo # comment\npref.loser_class_bias = 0.25\n\nsearch.temperature=1.1")
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.method, Some(PreferenceMethod::PwUapo));
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_and_bad_value_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("search.widht", "3").is_err());
        assert!(c.set("search.width", "three").is_err());
        assert!(c.set("pref.method", "ppo").is_err());
        assert!(c.apply_text("no equals sign").is_err());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let c = RunConfig { ei_rounds: 0, ..RunConfig::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn keys_and_pairs_align() {
        assert_eq!(RunConfig::KEYS.len(), RunConfig::default().pairs().len());
        let mut c = RunConfig::default();
        for (k, v) in RunConfig::default().pairs() {
            c.set(k, &v).unwrap();
        }
        assert_eq!(c, RunConfig::default());
    }
}
