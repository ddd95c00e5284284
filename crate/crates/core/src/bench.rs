//! Seeded toy benchmark generator.
//!
//! Goals come from fixed templates, each with a scripted witness proof:
//!
//! | tier   | templates                                              | proof length |
//! |--------|--------------------------------------------------------|--------------|
//! | Easy   | `t = t`, `add(t,0) = t`, `add(t,S(0)) = S(t)` (+ flips) | 1..=3        |
//! | Medium | `add(t,n) = S^n(t)` for numeral `n >= 2` (+ flips)     | 4..=8        |
//! | Hard   | commutation / association / `mul` unfolding            | 2..=14       |
//!
//! Every emitted goal replays its witness; Easy goals additionally pass the
//! exhaustive oracle at depth 3.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{replay, Direction, GoalPath, ProofState, RuleId, Tactic};
use crate::search::exhaustive_oracle;
use crate::term::Term;

/// Oracle depth used to certify Easy goals.
pub const EASY_ORACLE_DEPTH: usize = 3;
pub const MAX_PROOF_LEN: [usize; 3] = [3, 8, 14];

const VARS: [&str; 4] = ["x", "y", "z", "w"];
const MAX_NUMERAL: usize = 12;
const MAX_STEPS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Medium, Tier::Hard];

    pub fn max_proof_len(self) -> usize {
        MAX_PROOF_LEN[self as usize]
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Tier::Easy),
            "medium" => Ok(Tier::Medium),
            "hard" => Ok(Tier::Hard),
            _ => Err(Error::Config(alloc::format!("unknown tier `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Heldout,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Heldout => "heldout",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "heldout" => Ok(Split::Heldout),
            _ => Err(Error::Config(alloc::format!("unknown split `{s}`"))),
        }
    }
}

/// Relative tier weights; e.g. `easy=1,medium=1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TierMix {
    pub easy: u32,
    pub medium: u32,
    pub hard: u32,
}

impl TierMix {
    pub const EASY_ONLY: TierMix = TierMix { easy: 1, medium: 0, hard: 0 };
    pub const EASY_MEDIUM: TierMix = TierMix { easy: 1, medium: 1, hard: 0 };
    pub const ALL: TierMix = TierMix { easy: 1, medium: 1, hard: 1 };

    fn weight(&self, tier: Tier) -> u32 {
        match tier {
            Tier::Easy => self.easy,
            Tier::Medium => self.medium,
            Tier::Hard => self.hard,
        }
    }

    fn total(&self) -> u32 {
        self.easy + self.medium + self.hard
    }
}

impl Default for TierMix {
    fn default() -> Self {
        TierMix::EASY_MEDIUM
    }
}

impl fmt::Display for TierMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "easy={},medium={},hard={}", self.easy, self.medium, self.hard)
    }
}

impl FromStr for TierMix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut mix = TierMix { easy: 0, medium: 0, hard: 0 };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (tier, weight) = match part.split_once('=') {
                Some((t, w)) => (t.trim().parse::<Tier>()?, w.trim().parse::<u32>().map_err(|_| bad_mix(s))?),
                None => (part.parse::<Tier>()?, 1),
            };
            match tier {
                Tier::Easy => mix.easy = weight,
                Tier::Medium => mix.medium = weight,
                Tier::Hard => mix.hard = weight,
            }
        }
        if mix.total() == 0 {
            return Err(bad_mix(s));
        }
        Ok(mix)
    }
}

fn bad_mix(s: &str) -> Error {
    Error::Config(alloc::format!("bad tier mix `{s}`; expected e.g. `easy=1,medium=2`"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchGoal {
    pub goal: ProofState,
    pub tier: Tier,
    pub split: Split,
    pub witness: Vec<Tactic>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSuite {
    pub goals: Vec<BenchGoal>,
    pub generator_seed: u64,
}

impl BenchmarkSuite {
    pub fn split(&self, split: Split) -> Vec<&BenchGoal> {
        self.goals.iter().filter(|g| g.split == split).collect()
    }

    pub fn train(&self) -> Vec<&BenchGoal> {
        self.split(Split::Train)
    }

    pub fn heldout(&self) -> Vec<&BenchGoal> {
        self.split(Split::Heldout)
    }
}

fn rw(rule: RuleId, path: Vec<u8>) -> Tactic {
    Tactic::Rw { rule, direction: Direction::L2R, path: GoalPath(path) }
}

fn prefixed(side: u8, rest: &[u8]) -> Vec<u8> {
    let mut p = alloc::vec![side];
    p.extend_from_slice(rest);
    p
}

/// Steps evaluating `add(t, S^n(0))` located at `at` down to `S^n(t)`.
fn eval_add(at: &[u8], n: usize) -> Vec<Tactic> {
    let mut steps = Vec::new();
    let mut path = at.to_vec();
    for _ in 0..n {
        steps.push(rw(RuleId::R2, path.clone()));
        path.push(0);
    }
    steps.push(rw(RuleId::R1, path));
    steps
}

/// A random small operand: a numeral, a variable, or `S^k` of a variable.
fn operand<R: Rng>(rng: &mut R) -> Term {
    match rng.random_range(0..3) {
        0 => Term::numeral(rng.random_range(0..=MAX_NUMERAL)),
        1 => Term::var(VARS[rng.random_range(0..VARS.len())]),
        _ => Term::succ_n(rng.random_range(1..=3), Term::var(VARS[rng.random_range(0..VARS.len())])),
    }
}

/// One goal and its witness; `lhs = rhs` where the witness rewrites the
/// "work" side, then optionally flipped so the work side is on the right.
fn sample_goal<R: Rng>(tier: Tier, rng: &mut R) -> (ProofState, Vec<Tactic>) {
    let (work, done, script): (Term, Term, Vec<Tactic>) = match tier {
        Tier::Easy => {
            let t = operand(rng);
            match rng.random_range(0..3) {
                0 => (t.clone(), t, Vec::new()),
                1 => (Term::add(t.clone(), Term::zero()), t, eval_add(&[], 0)),
                _ => (Term::add(t.clone(), Term::numeral(1)), Term::succ(t), eval_add(&[], 1)),
            }
        }
        Tier::Medium => {
            let t = operand(rng);
            let n = rng.random_range(2..=MAX_STEPS);
            (Term::add(t.clone(), Term::numeral(n)), Term::succ_n(n, t), eval_add(&[], n))
        }
        Tier::Hard => {
            let t = operand(rng);
            match rng.random_range(0..4) {
                // add(0,t) -> add(t,0) -> t
                0 => (Term::add(Term::zero(), t.clone()), t, alloc::vec![rw(RuleId::R5, alloc::vec![])]
                    .into_iter()
                    .chain(eval_add(&[], 0))
                    .collect()),
                // add(add(t,a),b) -> add(t,add(a,b)) -> add(t,S^b(a))
                1 => {
                    let a = rng.random_range(0..=MAX_NUMERAL / 2);
                    let b = rng.random_range(1..=MAX_STEPS);
                    let mut script = alloc::vec![rw(RuleId::R6, alloc::vec![])];
                    script.extend(eval_add(&[1], b));
                    (
                        Term::add(Term::add(t.clone(), Term::numeral(a)), Term::numeral(b)),
                        Term::add(t, Term::numeral(a + b)),
                        script,
                    )
                }
                // mul(t,S(0)) -> add(mul(t,0),t) -> add(0,t) -> add(t,0) -> t
                2 => (
                    Term::mul(t.clone(), Term::numeral(1)),
                    t,
                    alloc::vec![
                        rw(RuleId::R4, alloc::vec![]),
                        rw(RuleId::R3, alloc::vec![0]),
                        rw(RuleId::R5, alloc::vec![]),
                        rw(RuleId::R1, alloc::vec![]),
                    ],
                ),
                // mul(t,S(S(0))) -> ... -> add(t,t)
                _ => (
                    Term::mul(t.clone(), Term::numeral(2)),
                    Term::add(t.clone(), t),
                    alloc::vec![
                        rw(RuleId::R4, alloc::vec![]),
                        rw(RuleId::R4, alloc::vec![0]),
                        rw(RuleId::R3, alloc::vec![0, 0]),
                        rw(RuleId::R5, alloc::vec![0]),
                        rw(RuleId::R1, alloc::vec![0]),
                    ],
                ),
            }
        }
    };
    let flip = rng.random_bool(0.5);
    let side = if flip { 1 } else { 0 };
    let mut witness: Vec<Tactic> = script
        .into_iter()
        .map(|t| match t {
            Tactic::Rw { rule, direction, path } => Tactic::Rw { rule, direction, path: GoalPath(prefixed(side, &path.0)) },
            other => other,
        })
        .collect();
    witness.push(Tactic::Rfl);
    let goal = if flip { ProofState::new(done, work) } else { ProofState::new(work, done) };
    (goal, witness)
}

fn certified(goal: &ProofState, witness: &[Tactic], tier: Tier) -> bool {
    witness.len() <= tier.max_proof_len()
        && replay(goal, witness)
        && (tier != Tier::Easy || exhaustive_oracle(goal, EASY_ORACLE_DEPTH))
}

/// Draws `count` distinct goals with tiers in proportion to `mix`.
///
/// The last `count / 4` goals of a seeded shuffle form the Heldout split;
/// goals are distinct as serialized strings, so the splits are disjoint.
pub fn generate_benchmark(count: usize, mix: &TierMix, seed: u64) -> Result<BenchmarkSuite> {
    generate_excluding(count, mix, seed, &BTreeSet::new())
}

/// As [`generate_benchmark`], skipping any goal whose serialization is in
/// `exclude` (used to keep auxiliary goal pools disjoint from a suite).
pub fn generate_excluding(count: usize, mix: &TierMix, seed: u64, exclude: &BTreeSet<String>) -> Result<BenchmarkSuite> {
    if count < 1 {
        return Err(Error::Precondition("benchmark count must be >= 1".into()));
    }
    if mix.total() == 0 {
        return Err(Error::Config("tier mix has zero total weight".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Tier quotas by largest remainder, so small suites respect the mix.
    let tiers: Vec<Tier> = Tier::ALL.into_iter().filter(|t| mix.weight(*t) > 0).collect();
    let total = mix.total() as usize;
    let mut quotas: Vec<usize> = tiers.iter().map(|t| count * mix.weight(*t) as usize / total).collect();
    let mut order: Vec<usize> = (0..tiers.len()).collect();
    order.sort_by_key(|&i| core::cmp::Reverse((count * mix.weight(tiers[i]) as usize) % total));
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(count - assigned) {
        quotas[i] += 1;
    }

    let mut seen = exclude.clone();
    let mut goals = Vec::with_capacity(count);
    for (tier, quota) in tiers.iter().zip(quotas) {
        let mut made = 0;
        let mut attempts = 0;
        while made < quota {
            attempts += 1;
            if attempts > 200 * quota + 1000 {
                return Err(Error::Precondition(alloc::format!(
                    "could not draw {quota} distinct {tier} goals"
                )));
            }
            let (goal, witness) = sample_goal(*tier, &mut rng);
            if !certified(&goal, &witness, *tier) || !seen.insert(goal.serialize()) {
                continue;
            }
            goals.push(BenchGoal { goal, tier: *tier, split: Split::Train, witness });
            made += 1;
        }
    }
    goals.shuffle(&mut rng);
    let heldout = count / 4;
    for g in goals.iter_mut().rev().take(heldout) {
        g.split = Split::Heldout;
    }
    Ok(BenchmarkSuite { goals, generator_seed: seed })
}
