//! Best-first proof search and the exhaustive breadth-first oracle.
//!
//! Frontier priority for a node at depth `d >= 1` is the sum of the
//! incoming sequence log-probs along its root path divided by `d^alpha`;
//! the root has priority 0. Ties pop the lower node id first. Each pop costs
//! one unit of the node budget and samples `k` candidate tactics; identical
//! token sequences within one expansion are kept once, and every kept
//! candidate is recorded whether or not the kernel accepts it.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, KernelErrorKind, Result};
use crate::kernel::{apply_tactic, applicable_tactics, ProofState, Tactic};
use crate::policy::{detokenize, PolicyParams, StateScorer, TokenSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub expansion_width: usize,
    pub sampling_temperature: f64,
    pub length_norm_alpha: f64,
    pub node_budget: usize,
    pub max_depth: usize,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            expansion_width: 4,
            sampling_temperature: 1.3,
            length_norm_alpha: 2.0,
            node_budget: 400,
            max_depth: 20,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.into()));
        if self.expansion_width < 1 {
            return bad("expansion width must be >= 1");
        }
        if !(self.sampling_temperature > 0.0) {
            return bad("sampling temperature must be > 0");
        }
        if !(self.length_norm_alpha >= 0.0) {
            return bad("length normalization alpha must be >= 0");
        }
        if self.node_budget < 1 {
            return bad("node budget must be >= 1");
        }
        if self.max_depth < 1 {
            return bad("max depth must be >= 1");
        }
        Ok(())
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub state: ProofState,
    pub incoming_tactic: Option<Tactic>,
    /// Index into [`SearchTree::edges`] of the transition that created this node.
    pub incoming_edge: Option<usize>,
    /// Total sequence log-prob of the incoming tactic.
    pub incoming_logprob: f64,
    /// Sum of incoming log-probs from the root.
    pub path_logprob: f64,
    pub depth: usize,
    pub priority: f64,
}

/// Utility of a state-tactic pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Utility {
    /// Rejected by the kernel.
    Invalid = 0,
    /// Accepted, but not part of the found proof.
    Stagnant = 1,
    /// On the verified proof path.
    Proven = 2,
}

impl Utility {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Utility> {
        match v {
            0 => Some(Utility::Invalid),
            1 => Some(Utility::Stagnant),
            2 => Some(Utility::Proven),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub from_node: NodeId,
    pub from_state: String,
    /// `None` when the tokens do not parse as a tactic.
    pub tactic: Option<Tactic>,
    pub tactic_tokens: TokenSequence,
    pub per_token_logprob: Vec<f64>,
    pub valid: bool,
    pub error: Option<KernelErrorKind>,
    /// Present only when the successor was added to the tree.
    pub child: Option<NodeId>,
    pub utility: Option<Utility>,
}

impl TransitionRecord {
    pub fn total_logprob(&self) -> f64 {
        self.per_token_logprob.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// `closing_node` holds the closed state; its root path is the proof.
    Proved { closing_node: NodeId },
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTree {
    pub goal: ProofState,
    pub nodes: Vec<SearchNode>,
    pub edges: Vec<TransitionRecord>,
    pub outcome: Outcome,
    pub expansions_used: usize,
    /// Node ids in the order they were popped.
    pub expansion_order: Vec<NodeId>,
}

impl SearchTree {
    pub fn is_proved(&self) -> bool {
        matches!(self.outcome, Outcome::Proved { .. })
    }

    /// Edge indices from the root to the closing node, in proof order.
    pub fn proof_edges(&self) -> Option<Vec<usize>> {
        let Outcome::Proved { closing_node } = self.outcome else {
            return None;
        };
        let mut out = Vec::new();
        let mut cur = closing_node;
        while let Some(e) = self.nodes[cur].incoming_edge {
            out.push(e);
            cur = self.nodes[cur].parent?;
        }
        out.reverse();
        Some(out)
    }

    /// Indices of the transitions recorded while expanding `node`.
    pub fn edges_from(&self, node: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from_node == node).map(|(i, _)| i)
    }
}

#[derive(Debug)]
struct FrontierEntry {
    priority: f64,
    id: NodeId,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FrontierEntry {}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: higher priority first, then lower id.
        self.priority.total_cmp(&other.priority).then_with(|| other.id.cmp(&self.id))
    }
}

/// Priority of a node at `depth` with cumulative log-prob `path_logprob`.
pub fn node_priority(path_logprob: f64, depth: usize, alpha: f64) -> f64 {
    if depth == 0 {
        0.0
    } else {
        path_logprob / libm::pow(depth as f64, alpha)
    }
}

/// Runs best-first search with an RNG seeded from `config.rng_seed`.
pub fn best_first_search(params: &PolicyParams, goal: &ProofState, config: &SearchConfig) -> Result<SearchTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    best_first_search_with_rng(params, goal, config, &mut rng)
}

pub fn best_first_search_with_rng<R: RngCore + ?Sized>(
    params: &PolicyParams,
    goal: &ProofState,
    config: &SearchConfig,
    rng: &mut R,
) -> Result<SearchTree> {
    config.validate()?;
    if goal.closed {
        return Err(Error::Precondition("search goal is already closed".into()));
    }
    let mut tree = SearchTree {
        goal: goal.clone(),
        nodes: alloc::vec![SearchNode {
            id: 0,
            parent: None,
            state: goal.clone(),
            incoming_tactic: None,
            incoming_edge: None,
            incoming_logprob: 0.0,
            path_logprob: 0.0,
            depth: 0,
            priority: 0.0,
        }],
        edges: Vec::new(),
        outcome: Outcome::BudgetExhausted,
        expansions_used: 0,
        expansion_order: Vec::new(),
    };
    let mut frontier = BinaryHeap::new();
    frontier.push(FrontierEntry { priority: 0.0, id: 0 });

    while tree.expansions_used < config.node_budget {
        let Some(FrontierEntry { id, .. }) = frontier.pop() else { break };
        tree.expansions_used += 1;
        tree.expansion_order.push(id);
        let parent = tree.nodes[id].clone();
        let state_text = parent.state.serialize();
        let mut scorer = StateScorer::new(params, &state_text);
        let mut seen: Vec<TokenSequence> = Vec::with_capacity(config.expansion_width);
        let mut closing = None;

        for _ in 0..config.expansion_width {
            let sample = scorer.sample(config.sampling_temperature, rng);
            if seen.contains(&sample.tokens) {
                continue;
            }
            seen.push(sample.tokens.clone());
            let edge_index = tree.edges.len();
            let mut record = TransitionRecord {
                from_node: id,
                from_state: state_text.clone(),
                tactic: None,
                tactic_tokens: sample.tokens,
                per_token_logprob: sample.per_token_logprob,
                valid: false,
                error: None,
                child: None,
                utility: None,
            };
            let parsed = detokenize(&record.tactic_tokens);
            record.tactic = parsed.as_ref().ok().cloned();
            let applied = parsed.and_then(|t| apply_tactic(&parent.state, &t));
            match applied {
                Err(e) => record.error = Some(e.kind),
                Ok(next) => {
                    record.valid = true;
                    let depth = parent.depth + 1;
                    let enqueue = !next.closed && depth < config.max_depth && !on_root_path(&tree, id, &next);
                    if next.closed || enqueue {
                        let path_logprob = parent.path_logprob + sample.total_logprob;
                        let child = tree.nodes.len();
                        let priority = node_priority(path_logprob, depth, config.length_norm_alpha);
                        tree.nodes.push(SearchNode {
                            id: child,
                            parent: Some(id),
                            state: next.clone(),
                            incoming_tactic: record.tactic.clone(),
                            incoming_edge: Some(edge_index),
                            incoming_logprob: sample.total_logprob,
                            path_logprob,
                            depth,
                            priority,
                        });
                        record.child = Some(child);
                        if next.closed {
                            closing.get_or_insert(child);
                        } else {
                            frontier.push(FrontierEntry { priority, id: child });
                        }
                    }
                }
            }
            tree.edges.push(record);
        }

        if let Some(closing_node) = closing {
            tree.outcome = Outcome::Proved { closing_node };
            break;
        }
    }
    Ok(tree)
}

/// True if `state` equals the state of `node` or any of its ancestors.
fn on_root_path(tree: &SearchTree, node: NodeId, state: &ProofState) -> bool {
    let mut cur = Some(node);
    while let Some(id) = cur {
        if tree.nodes[id].state == *state {
            return true;
        }
        cur = tree.nodes[id].parent;
    }
    false
}

/// Root-to-closure state-tactic pairs of a proved tree.
pub fn proof_path(tree: &SearchTree) -> Option<Vec<(ProofState, Tactic)>> {
    let edges = tree.proof_edges()?;
    edges
        .into_iter()
        .map(|e| {
            let rec = &tree.edges[e];
            Some((tree.nodes[rec.from_node].state.clone(), rec.tactic.clone()?))
        })
        .collect()
}

/// Breadth-first enumeration of every applicable tactic up to `max_depth`
/// steps; true iff some tactic sequence of that length or less closes the
/// goal. Exponential: intended for tiny goals and depths up to about 5.
pub fn exhaustive_oracle(goal: &ProofState, max_depth: usize) -> bool {
    if goal.closed {
        return true;
    }
    let mut seen = BTreeSet::new();
    seen.insert(goal.clone());
    let mut layer = alloc::vec![goal.clone()];
    for depth in 0..max_depth {
        // A state at `depth` needs one more step (`Rfl`) to close.
        if layer.iter().any(|s| s.lhs == s.rhs) {
            return true;
        }
        if depth + 1 == max_depth {
            break;
        }
        let mut next_layer = Vec::new();
        for s in &layer {
            for (_, next) in applicable_tactics(s) {
                if !next.closed && seen.insert(next.clone()) {
                    next_layer.push(next);
                }
            }
        }
        if next_layer.is_empty() {
            break;
        }
        layer = next_layer;
    }
    false
}
