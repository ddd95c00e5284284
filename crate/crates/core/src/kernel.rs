//! The rewriting kernel: proof states, the six axioms, tactics and replay.
//!
//! A goal is an equality `lhs = rhs` between terms. Positions inside the
//! goal are digit paths whose first digit picks the side (`0` = lhs,
//! `1` = rhs) and whose remaining digits descend into children. Variables in
//! goals are opaque constants; only rule pattern variables are bound during
//! matching, and `Rfl` closes a goal only on syntactic identity.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{KernelError, KernelErrorKind};
use crate::term::{parse_term, Term};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProofState {
    pub lhs: Term,
    pub rhs: Term,
    pub closed: bool,
}

impl ProofState {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        ProofState { lhs, rhs, closed: false }
    }

    /// Parses `<lhs> = <rhs>`.
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        let mut parts = text.split('=');
        let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(KernelError::new(
                KernelErrorKind::ParseError,
                "goal must contain exactly one '='",
            ));
        };
        Ok(ProofState::new(parse_term(l)?, parse_term(r)?))
    }

    /// Canonical `<lhs> = <rhs>` text. Closed states carry no extra marker:
    /// they are never expanded, so the text is only used as a policy context
    /// and as a map key for open states.
    pub fn serialize(&self) -> String {
        alloc::format!("{} = {}", self.lhs, self.rhs)
    }

    pub fn side(&self, digit: u8) -> Option<&Term> {
        match digit {
            0 => Some(&self.lhs),
            1 => Some(&self.rhs),
            _ => None,
        }
    }

    fn side_mut(&mut self, digit: u8) -> Option<&mut Term> {
        match digit {
            0 => Some(&mut self.lhs),
            1 => Some(&mut self.rhs),
            _ => None,
        }
    }

    /// Subterm at a goal-level path (first digit selects the side).
    pub fn subterm(&self, path: &GoalPath) -> Option<&Term> {
        let (&first, rest) = path.0.split_first()?;
        self.side(first)?.subterm(rest)
    }

    /// Every addressable goal-level path, lhs positions first.
    pub fn positions(&self) -> Vec<GoalPath> {
        let mut out = Vec::new();
        for (digit, side) in [(0u8, &self.lhs), (1u8, &self.rhs)] {
            for p in side.positions() {
                let mut full = alloc::vec![digit];
                full.extend(p);
                out.push(GoalPath(full));
            }
        }
        out
    }
}

impl fmt::Display for ProofState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// A digit path into a goal equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalPath(pub Vec<u8>);

impl GoalPath {
    /// Parses a string over `{0,1}`.
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        text.bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(KernelError::new(KernelErrorKind::ParseError, "path digits must be 0 or 1")),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(GoalPath)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for GoalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
}

impl RuleId {
    pub const ALL: [RuleId; 6] = [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4, RuleId::R5, RuleId::R6];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RuleId> {
        RuleId::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    L2R,
    R2L,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub id: RuleId,
    pub lhs: Term,
    pub rhs: Term,
}

/// The six fixed axioms. R5 and R6 are loop-inducing on purpose.
pub fn fixed_axioms() -> Vec<RewriteRule> {
    RuleId::ALL.iter().map(|&id| axiom(id)).collect()
}

/// Builds one axiom's pattern pair.
pub fn axiom(id: RuleId) -> RewriteRule {
    let x = || Term::var("x");
    let y = || Term::var("y");
    let z = || Term::var("z");
    let (lhs, rhs) = match id {
        RuleId::R1 => (Term::add(x(), Term::Zero), x()),
        RuleId::R2 => (Term::add(x(), Term::succ(y())), Term::succ(Term::add(x(), y()))),
        RuleId::R3 => (Term::mul(x(), Term::Zero), Term::Zero),
        RuleId::R4 => (Term::mul(x(), Term::succ(y())), Term::add(Term::mul(x(), y()), x())),
        RuleId::R5 => (Term::add(x(), y()), Term::add(y(), x())),
        RuleId::R6 => (
            Term::add(Term::add(x(), y()), z()),
            Term::add(x(), Term::add(y(), z())),
        ),
    };
    RewriteRule { id, lhs, rhs }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tactic {
    Rfl,
    Sym,
    Rw { rule: RuleId, direction: Direction, path: GoalPath },
}

impl Tactic {
    pub fn rw(rule: RuleId, direction: Direction, path: &str) -> Tactic {
        Tactic::Rw {
            rule,
            direction,
            path: GoalPath::parse(path).expect("path literal over {0,1}"),
        }
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tactic::Rfl => f.write_str("rfl"),
            Tactic::Sym => f.write_str("sym"),
            Tactic::Rw { rule, direction, path } => {
                let dir = match direction {
                    Direction::L2R => "->",
                    Direction::R2L => "<-",
                };
                write!(f, "rw {rule:?} {dir} {path}")
            }
        }
    }
}

/// Parses the text form produced by `Display` (`rfl`, `sym`, `rw R1 -> 0`).
pub fn parse_tactic(text: &str) -> Result<Tactic, KernelError> {
    let err = || KernelError::new(KernelErrorKind::ParseError, alloc::format!("bad tactic `{text}`"));
    let mut words = text.split_whitespace();
    let tactic = match words.next() {
        Some("rfl") => Tactic::Rfl,
        Some("sym") => Tactic::Sym,
        Some("rw") => {
            let rule = match words.next().ok_or_else(err)? {
                "R1" => RuleId::R1,
                "R2" => RuleId::R2,
                "R3" => RuleId::R3,
                "R4" => RuleId::R4,
                "R5" => RuleId::R5,
                "R6" => RuleId::R6,
                _ => return Err(err()),
            };
            let direction = match words.next().ok_or_else(err)? {
                "->" => Direction::L2R,
                "<-" => Direction::R2L,
                _ => return Err(err()),
            };
            let path = GoalPath::parse(words.next().ok_or_else(err)?)?;
            Tactic::Rw { rule, direction, path }
        }
        _ => return Err(err()),
    };
    if words.next().is_some() {
        return Err(err());
    }
    Ok(tactic)
}

type Subst<'a> = BTreeMap<&'a str, &'a Term>;

/// First-order matching of `pattern` against `term`; pattern variables bind,
/// term variables are constants.
fn matches<'a>(pattern: &'a Term, term: &'a Term, subst: &mut Subst<'a>) -> bool {
    match (pattern, term) {
        (Term::Var(name), _) => match subst.get(name.as_str()) {
            Some(bound) => *bound == term,
            None => {
                subst.insert(name.as_str(), term);
                true
            }
        },
        (Term::Zero, Term::Zero) => true,
        (Term::Succ(p), Term::Succ(t)) => matches(p, t, subst),
        (Term::Add(p1, p2), Term::Add(t1, t2)) | (Term::Mul(p1, p2), Term::Mul(t1, t2)) => {
            matches(p1, t1, subst) && matches(p2, t2, subst)
        }
        _ => false,
    }
}

fn instantiate(pattern: &Term, subst: &Subst<'_>) -> Option<Term> {
    Some(match pattern {
        Term::Var(name) => (*subst.get(name.as_str())?).clone(),
        Term::Zero => Term::Zero,
        Term::Succ(p) => Term::succ(instantiate(p, subst)?),
        Term::Add(a, b) => Term::add(instantiate(a, subst)?, instantiate(b, subst)?),
        Term::Mul(a, b) => Term::mul(instantiate(a, subst)?, instantiate(b, subst)?),
    })
}

/// Rewrites `term` at its root with `rule` in `direction`.
pub fn rewrite_root(term: &Term, rule: RuleId, direction: Direction) -> Result<Term, KernelError> {
    let ax = axiom(rule);
    let (from, to) = match direction {
        Direction::L2R => (&ax.lhs, &ax.rhs),
        Direction::R2L => (&ax.rhs, &ax.lhs),
    };
    let mut subst = Subst::new();
    if !matches(from, term, &mut subst) {
        return Err(KernelError::new(
            KernelErrorKind::NoMatch,
            alloc::format!("{rule:?} {direction:?} does not match {term}"),
        ));
    }
    instantiate(to, &subst).ok_or_else(|| {
        KernelError::new(
            KernelErrorKind::NoMatch,
            alloc::format!("{rule:?} {direction:?} leaves a pattern variable unbound"),
        )
    })
}

/// Applies one tactic. Pure and deterministic.
pub fn apply_tactic(state: &ProofState, tactic: &Tactic) -> Result<ProofState, KernelError> {
    if state.closed {
        return Err(KernelError::new(KernelErrorKind::AlreadyClosed, "goal already closed"));
    }
    match tactic {
        Tactic::Rfl => {
            if state.lhs == state.rhs {
                Ok(ProofState { closed: true, ..state.clone() })
            } else {
                Err(KernelError::new(KernelErrorKind::NoMatch, "sides differ"))
            }
        }
        Tactic::Sym => Ok(ProofState::new(state.rhs.clone(), state.lhs.clone())),
        Tactic::Rw { rule, direction, path } => {
            let bad_path = || KernelError::new(KernelErrorKind::BadPath, alloc::format!("no subterm at `{path}`"));
            let (&first, rest) = path.0.split_first().ok_or_else(bad_path)?;
            let target = state.side(first).and_then(|s| s.subterm(rest)).ok_or_else(bad_path)?;
            let replacement = rewrite_root(target, *rule, *direction)?;
            let mut next = state.clone();
            let slot = next
                .side_mut(first)
                .and_then(|s| s.subterm_mut(rest))
                .ok_or_else(bad_path)?;
            *slot = replacement;
            Ok(next)
        }
    }
}

/// Folds `tactics` from `goal`; the proof is verified iff every step
/// succeeds and the final state is closed.
pub fn replay(goal: &ProofState, tactics: &[Tactic]) -> bool {
    let mut state = goal.clone();
    for t in tactics {
        match apply_tactic(&state, t) {
            Ok(next) => state = next,
            Err(_) => return false,
        }
    }
    state.closed
}

/// Every tactic the kernel accepts from `state`, paired with the successor.
/// Order: `Rfl`, `Sym`, then rewrites by rule, direction and position.
pub fn applicable_tactics(state: &ProofState) -> Vec<(Tactic, ProofState)> {
    let mut out = Vec::new();
    if state.closed {
        return out;
    }
    for t in [Tactic::Rfl, Tactic::Sym] {
        if let Ok(next) = apply_tactic(state, &t) {
            out.push((t, next));
        }
    }
    let positions = state.positions();
    for rule in RuleId::ALL {
        for direction in [Direction::L2R, Direction::R2L] {
            for path in &positions {
                let t = Tactic::Rw { rule, direction, path: path.clone() };
                if let Ok(next) = apply_tactic(state, &t) {
                    out.push((t, next));
                }
            }
        }
    }
    out
}
