//! JSONL/CSV/text file formats. Field names are documented in
//! `docs/FORMATS.md` and are stable.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stepprover_core::bench::{BenchGoal, BenchmarkSuite, Split, Tier};
use stepprover_core::curation::{CorpusStats, PreferencePair, SftExample, SourceTag};
use stepprover_core::kernel::{apply_tactic, parse_tactic};
use stepprover_core::policy::{detokenize, sequence_logprob, sequence_perplexity, Token};
use stepprover_core::search::{node_priority, Outcome, SearchConfig, SearchNode, SearchTree, TransitionRecord, Utility};
use stepprover_core::{KernelErrorKind, PolicyParams, ProofState, Tactic, TokenSequence};

use crate::error::{CliError, Result};

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::format(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Precondition(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Precondition(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// CSV rows, header included, from any row type with named fields.
pub fn csv_string<R: Serialize>(rows: &[R]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

fn token_names(tokens: &TokenSequence) -> Vec<String> {
    tokens.0.iter().map(|t| t.name().to_string()).collect()
}

fn parse_tokens(names: &[String]) -> std::result::Result<TokenSequence, String> {
    names
        .iter()
        .map(|n| Token::from_name(n).ok_or_else(|| format!("unknown token `{n}`")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(TokenSequence)
}

fn tactic_text(tokens: &TokenSequence) -> Option<String> {
    stepprover_core::policy::detokenize(tokens).ok().map(|t| t.to_string())
}

// ---------------------------------------------------------------- goals

/// One `lhs = rhs` goal per line; blank lines and `#` comments ignored.
pub fn read_goals(path: &Path) -> Result<Vec<ProofState>> {
    let text = read_text(path)?;
    parse_goals(&text).map_err(|(line, m)| CliError::format(path, line, m))
}

pub fn parse_goals(text: &str) -> std::result::Result<Vec<ProofState>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| ProofState::parse(l.trim()).map_err(|e| (i + 1, e.message)))
        .collect()
}

pub fn goals_text(goals: &[ProofState]) -> String {
    goals.iter().map(|g| g.serialize() + "\n").collect()
}

/// Benchmark file: one goal per line followed by tab-separated tier,
/// split and witness proof (tactics joined by `; `).
pub fn suite_text(suite: &BenchmarkSuite) -> String {
    let mut out = format!("# generator_seed={}\n", suite.generator_seed);
    for g in &suite.goals {
        let witness: Vec<String> = g.witness.iter().map(|t| t.to_string()).collect();
        out += &format!("{}\t{}\t{}\t{}\n", g.goal.serialize(), g.tier, g.split, witness.join("; "));
    }
    out
}

pub fn parse_suite(text: &str) -> std::result::Result<BenchmarkSuite, (usize, String)> {
    let mut seed = 0;
    let mut goals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(rest) = line.strip_prefix("# generator_seed=") {
            seed = rest.trim().parse().map_err(|_| (n, "bad generator seed".to_string()))?;
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let goal = ProofState::parse(cols[0]).map_err(|e| (n, e.message))?;
        // Bare goal lines default to a Train/Easy goal without a witness.
        let tier: Tier = cols.get(1).map(|t| t.parse()).transpose().map_err(|e| (n, format!("{e}")))?.unwrap_or(Tier::Easy);
        let split: Split =
            cols.get(2).map(|s| s.parse()).transpose().map_err(|e| (n, format!("{e}")))?.unwrap_or(Split::Train);
        let witness = match cols.get(3).map(|w| w.trim()).filter(|w| !w.is_empty()) {
            Some(w) => w.split(';').map(|t| parse_tactic(t.trim())).collect::<std::result::Result<Vec<_>, _>>().map_err(|e| (n, e.message))?,
            None => Vec::new(),
        };
        goals.push(BenchGoal { goal, tier, split, witness });
    }
    Ok(BenchmarkSuite { goals, generator_seed: seed })
}

pub fn read_suite(path: &Path) -> Result<BenchmarkSuite> {
    parse_suite(&read_text(path)?).map_err(|(line, m)| CliError::format(path, line, m))
}

// ---------------------------------------------------------------- corpus

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusRecord {
    pub state: String,
    pub tactic_text: String,
    pub tokens: Vec<String>,
    /// Per-token log-probs (temperature 1) under the checkpoint that wrote
    /// the file.
    pub per_token_log_prob: Vec<f64>,
    pub ppl: f64,
    pub source: String,
}

impl CorpusRecord {
    pub fn new(ex: &SftExample, params: &PolicyParams) -> Self {
        CorpusRecord {
            state: ex.state.clone(),
            tactic_text: tactic_text(&ex.tokens).unwrap_or_default(),
            tokens: token_names(&ex.tokens),
            per_token_log_prob: sequence_logprob(params, &ex.state, &ex.tokens).per_token_logprob,
            ppl: sequence_perplexity(params, &ex.state, &ex.tokens),
            source: ex.source.to_string(),
        }
    }

    pub fn to_example(&self) -> std::result::Result<SftExample, String> {
        Ok(SftExample {
            state: self.state.clone(),
            tokens: parse_tokens(&self.tokens)?,
            source: self.source.parse().map_err(|e| format!("{e}"))?,
        })
    }
}

pub fn write_corpus(path: &Path, corpus: &[SftExample], params: &PolicyParams) -> Result<()> {
    let records: Vec<CorpusRecord> = corpus.iter().map(|ex| CorpusRecord::new(ex, params)).collect();
    write_jsonl(path, &records)
}

pub fn read_corpus(path: &Path) -> Result<Vec<SftExample>> {
    read_jsonl::<CorpusRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_example().map_err(|m| CliError::format(path, i + 1, m)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsRow {
    pub source_tag: String,
    pub count: usize,
    pub avg_ppl: f64,
}

impl From<&CorpusStats> for StatsRow {
    fn from(s: &CorpusStats) -> Self {
        StatsRow { source_tag: s.source.to_string(), count: s.count, avg_ppl: s.avg_sequence_ppl }
    }
}

// ---------------------------------------------------------------- preferences

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreferenceRecord {
    pub state: String,
    pub winner_tactic: String,
    pub loser_tactic: Option<String>,
    pub winner_tokens: Vec<String>,
    pub loser_tokens: Vec<String>,
    pub loser_utility: u8,
    pub ref_winner_log_prob: Vec<f64>,
    pub ref_loser_log_prob: Vec<f64>,
}

impl From<&PreferencePair> for PreferenceRecord {
    fn from(p: &PreferencePair) -> Self {
        PreferenceRecord {
            state: p.state.clone(),
            winner_tactic: tactic_text(&p.winner_tokens).unwrap_or_default(),
            loser_tactic: tactic_text(&p.loser_tokens),
            winner_tokens: token_names(&p.winner_tokens),
            loser_tokens: token_names(&p.loser_tokens),
            loser_utility: p.loser_utility.value(),
            ref_winner_log_prob: p.ref_winner_logprobs.clone(),
            ref_loser_log_prob: p.ref_loser_logprobs.clone(),
        }
    }
}

impl PreferenceRecord {
    pub fn to_pair(&self) -> std::result::Result<PreferencePair, String> {
        let pair = PreferencePair {
            state: self.state.clone(),
            winner_tokens: parse_tokens(&self.winner_tokens)?,
            loser_tokens: parse_tokens(&self.loser_tokens)?,
            loser_utility: Utility::from_value(self.loser_utility).ok_or("bad loser utility")?,
            ref_winner_logprobs: self.ref_winner_log_prob.clone(),
            ref_loser_logprobs: self.ref_loser_log_prob.clone(),
        };
        if pair.ref_winner_logprobs.len() != pair.winner_tokens.len()
            || pair.ref_loser_logprobs.len() != pair.loser_tokens.len()
        {
            return Err("reference log-prob length differs from token count".into());
        }
        Ok(pair)
    }
}

pub fn write_preferences(path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    let records: Vec<PreferenceRecord> = pairs.iter().map(PreferenceRecord::from).collect();
    write_jsonl(path, &records)
}

pub fn read_preferences(path: &Path) -> Result<Vec<PreferencePair>> {
    read_jsonl::<PreferenceRecord>(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_pair().map_err(|m| CliError::format(path, i + 1, m)))
        .collect()
}

// ---------------------------------------------------------------- traces

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchConfigRecord {
    pub expansion_width: usize,
    pub sampling_temperature: f64,
    pub length_norm_alpha: f64,
    pub node_budget: usize,
    pub max_depth: usize,
    pub rng_seed: u64,
}

impl From<&SearchConfig> for SearchConfigRecord {
    fn from(c: &SearchConfig) -> Self {
        SearchConfigRecord {
            expansion_width: c.expansion_width,
            sampling_temperature: c.sampling_temperature,
            length_norm_alpha: c.length_norm_alpha,
            node_budget: c.node_budget,
            max_depth: c.max_depth,
            rng_seed: c.rng_seed,
        }
    }
}

impl From<&SearchConfigRecord> for SearchConfig {
    fn from(c: &SearchConfigRecord) -> Self {
        SearchConfig {
            expansion_width: c.expansion_width,
            sampling_temperature: c.sampling_temperature,
            length_norm_alpha: c.length_norm_alpha,
            node_budget: c.node_budget,
            max_depth: c.max_depth,
            rng_seed: c.rng_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceHeader {
    pub format_version: u32,
    pub goal: String,
    pub config: SearchConfigRecord,
    /// `proved` or `budget_exhausted`.
    pub outcome: String,
    pub closing_node: Option<usize>,
    pub expansions_used: usize,
    pub expansion_order: Vec<usize>,
    pub transition_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransitionLine {
    pub from_node: usize,
    pub from_state: String,
    pub tactic: Option<String>,
    pub tokens: Vec<String>,
    pub per_token_log_prob: Vec<f64>,
    pub valid: bool,
    pub error: Option<String>,
    pub child: Option<usize>,
    pub utility: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "camelCase")]
pub enum TraceLine {
    Header(TraceHeader),
    Transition(TransitionLine),
}

pub const TRACE_FORMAT_VERSION: u32 = 1;

fn error_name(kind: KernelErrorKind) -> &'static str {
    match kind {
        KernelErrorKind::ParseError => "ParseError",
        KernelErrorKind::NoMatch => "NoMatch",
        KernelErrorKind::BadPath => "BadPath",
        KernelErrorKind::AlreadyClosed => "AlreadyClosed",
    }
}

fn error_kind(name: &str) -> Option<KernelErrorKind> {
    [KernelErrorKind::ParseError, KernelErrorKind::NoMatch, KernelErrorKind::BadPath, KernelErrorKind::AlreadyClosed]
        .into_iter()
        .find(|k| error_name(*k) == name)
}

pub fn trace_lines(tree: &SearchTree, config: &SearchConfig) -> Vec<TraceLine> {
    let (outcome, closing_node) = match tree.outcome {
        Outcome::Proved { closing_node } => ("proved", Some(closing_node)),
        Outcome::BudgetExhausted => ("budget_exhausted", None),
    };
    let mut lines = vec![TraceLine::Header(TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        goal: tree.goal.serialize(),
        config: config.into(),
        outcome: outcome.into(),
        closing_node,
        expansions_used: tree.expansions_used,
        expansion_order: tree.expansion_order.clone(),
        transition_count: tree.edges.len(),
    })];
    lines.extend(tree.edges.iter().map(|e| {
        TraceLine::Transition(TransitionLine {
            from_node: e.from_node,
            from_state: e.from_state.clone(),
            tactic: e.tactic.as_ref().map(|t| t.to_string()),
            tokens: token_names(&e.tactic_tokens),
            per_token_log_prob: e.per_token_logprob.clone(),
            valid: e.valid,
            error: e.error.map(|k| error_name(k).to_string()),
            child: e.child,
            utility: e.utility.map(Utility::value),
        })
    }));
    lines
}

/// Rebuilds the tree: node states are recomputed by re-applying each
/// recorded tactic with the kernel.
fn rebuild_tree(header: &TraceHeader, transitions: &[TransitionLine]) -> std::result::Result<SearchTree, String> {
    let goal = ProofState::parse(&header.goal).map_err(|e| e.message)?;
    let config = SearchConfig::from(&header.config);
    let mut tree = SearchTree {
        goal: goal.clone(),
        nodes: vec![SearchNode {
            id: 0,
            parent: None,
            state: goal,
            incoming_tactic: None,
            incoming_edge: None,
            incoming_logprob: 0.0,
            path_logprob: 0.0,
            depth: 0,
            priority: 0.0,
        }],
        edges: Vec::with_capacity(transitions.len()),
        outcome: match (header.outcome.as_str(), header.closing_node) {
            ("proved", Some(closing_node)) => Outcome::Proved { closing_node },
            ("budget_exhausted", None) => Outcome::BudgetExhausted,
            _ => return Err(format!("bad outcome `{}`", header.outcome)),
        },
        expansions_used: header.expansions_used,
        expansion_order: header.expansion_order.clone(),
    };
    for t in transitions {
        let tokens = parse_tokens(&t.tokens)?;
        // Tokens are authoritative; the text form is for readers (an empty
        // rewrite path detokenizes but has no parseable text).
        let tactic: Option<Tactic> = detokenize(&tokens).ok();
        if t.tactic.as_deref() != tactic.as_ref().map(|x| x.to_string()).as_deref() {
            return Err("tactic text disagrees with its tokens".into());
        }
        let parent = tree.nodes.get(t.from_node).cloned().ok_or("transition from unknown node")?;
        if let Some(child) = t.child {
            if child != tree.nodes.len() {
                return Err("child ids must be assigned in order".into());
            }
            let tac = tactic.as_ref().ok_or("child without tactic")?;
            let state = apply_tactic(&parent.state, tac).map_err(|e| e.message)?;
            let incoming: f64 = t.per_token_log_prob.iter().sum();
            let path_logprob = parent.path_logprob + incoming;
            let depth = parent.depth + 1;
            tree.nodes.push(SearchNode {
                id: child,
                parent: Some(parent.id),
                state,
                incoming_tactic: tactic.clone(),
                incoming_edge: Some(tree.edges.len()),
                incoming_logprob: incoming,
                path_logprob,
                depth,
                priority: node_priority(path_logprob, depth, config.length_norm_alpha),
            });
        }
        tree.edges.push(TransitionRecord {
            from_node: t.from_node,
            from_state: t.from_state.clone(),
            tactic,
            tactic_tokens: tokens,
            per_token_logprob: t.per_token_log_prob.clone(),
            valid: t.valid,
            error: t.error.as_deref().map(|n| error_kind(n).ok_or("unknown error kind")).transpose()?,
            child: t.child,
            utility: t.utility.map(|u| Utility::from_value(u).ok_or("bad utility")).transpose()?,
        });
    }
    Ok(tree)
}

/// Writes trees back to back, each as a header followed by its transitions.
pub fn write_traces(path: &Path, trees: &[(SearchTree, SearchConfig)]) -> Result<()> {
    let lines: Vec<TraceLine> = trees.iter().flat_map(|(t, c)| trace_lines(t, c)).collect();
    write_jsonl(path, &lines)
}

pub fn read_traces(path: &Path) -> Result<Vec<(SearchTree, SearchConfig)>> {
    let lines: Vec<TraceLine> = read_jsonl(path)?;
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let TraceLine::Header(header) = &lines[i] else {
            return Err(CliError::format(path, i + 1, "expected a header record"));
        };
        let body = lines.get(i + 1..i + 1 + header.transition_count).ok_or_else(|| {
            CliError::format(path, i + 1, "trace ends before its declared transitions")
        })?;
        let transitions: Vec<TransitionLine> = body
            .iter()
            .map(|l| match l {
                TraceLine::Transition(t) => Ok(t.clone()),
                TraceLine::Header(_) => Err(CliError::format(path, i + 1, "header inside a trace body")),
            })
            .collect::<Result<_>>()?;
        let tree = rebuild_tree(header, &transitions).map_err(|m| CliError::format(path, i + 1, m))?;
        out.push((tree, SearchConfig::from(&header.config)));
        i += 1 + header.transition_count;
    }
    Ok(out)
}

/// Flushes `text` to stdout, ignoring a closed pipe.
pub fn print(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

pub fn source_tag(text: &str) -> Result<SourceTag> {
    text.parse().map_err(CliError::from)
}
