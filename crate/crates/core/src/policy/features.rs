//! Hashed sparse features of (state text, previous tokens, position).
//!
//! The `D = 4096` feature bins are split into disjoint families so that
//! families never collide with each other:
//!
//! | bins          | family                                            |
//! |---------------|---------------------------------------------------|
//! | 0             | bias                                              |
//! | 1 ..= 8       | position bucket `min(position, 7)`                |
//! | 9 ..= 24      | previous token (BOS at position 0)                |
//! | 25 ..= 280    | previous token pair (BOS-padded), `16 * p2 + p1`  |
//! | 281 .. 1305   | state byte n-grams, n = 1..=3 (hashed)            |
//! | 1305 .. 3584  | state n-gram x previous token (hashed)            |
//! | 3584 .. 4096  | term structure x (previous token, rule) (hashed)  |
//!
//! Hashed bins use 64-bit FNV-1a over `HASH_SEED` (8 bytes, little endian),
//! then a family tag byte (`b'n'`, `b'c'` or `b's'`), then for the
//! conjunction family the previous token id byte and for the structure
//! family the previous token id byte and the rule byte (the `R1..R6` token
//! id after a leading `RW`, else 255), then the key bytes. The bin is
//! `family_base + hash % family_size`. Every family is a set: repeated
//! keys activate their bin once.
//!
//! Structure keys describe the parsed state (nothing if it does not parse):
//!
//! * `=` when both sides are syntactically equal;
//! * per side `s` in `L`/`R`: `h s <head>`, plus `a s`, `m s`, `v s` when
//!   the side contains an `add`, a `mul` or a variable;
//! * inside a rewrite path (prefix `RW rule dir d1 .. dk`, `k >= 1`), the
//!   subterm the digits so far point at: `f <head>`, `0 <head of child 0>`,
//!   `1 <head of child 1>` and `F <head> <child heads>`, or `fx` when the
//!   digits leave the term.
//!
//! Heads are `0`, `S`, `+`, `*`, `v`; a missing child is `-`.

use alloc::vec::Vec;

use super::tokens::{Token, VOCAB};
use crate::kernel::ProofState;
use crate::term::{Tag, Term};

/// Number of feature bins.
pub const FEATURE_DIM: usize = 4096;
/// Fixed hash seed.
pub const HASH_SEED: u64 = 0x9E37_79B9_7F4A_7C15;
pub const BIAS_INDEX: u32 = 0;
/// Positions at or beyond this share the last bucket.
pub const POSITION_BUCKETS: usize = 8;

const POSITION_BASE: u32 = 1;
const PREV1_BASE: u32 = POSITION_BASE + POSITION_BUCKETS as u32;
const PAIR_BASE: u32 = PREV1_BASE + VOCAB as u32;
const NGRAM_BASE: u32 = PAIR_BASE + (VOCAB * VOCAB) as u32;
const NGRAM_BINS: u32 = 1024;
const CONJ_BASE: u32 = NGRAM_BASE + NGRAM_BINS;
const STRUCT_BINS: u32 = 512;
const STRUCT_BASE: u32 = FEATURE_DIM as u32 - STRUCT_BINS;
const CONJ_BINS: u32 = STRUCT_BASE - CONJ_BASE;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn seeded(tag: u8) -> u64 {
    fnv1a(fnv1a(FNV_OFFSET, &HASH_SEED.to_le_bytes()), &[tag])
}

/// Active feature bins, sorted ascending and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
}

impl FeatureVector {
    pub fn contains(&self, index: u32) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn ngrams(state: &str) -> impl Iterator<Item = &[u8]> {
    let b = state.as_bytes();
    (1..=3usize).flat_map(move |n| b.windows(n))
}

/// The n-gram family for a state, sorted and deduplicated.
pub fn ngram_indices(state: &str) -> Vec<u32> {
    let base = seeded(b'n');
    let mut out: Vec<u32> = ngrams(state)
        .map(|g| NGRAM_BASE + (fnv1a(base, g) % NGRAM_BINS as u64) as u32)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// The n-gram x previous-token family, sorted and deduplicated.
pub fn conjunction_indices(state: &str, prev: Token) -> Vec<u32> {
    let base = fnv1a(seeded(b'c'), &[prev as u8]);
    let mut out: Vec<u32> = ngrams(state)
        .map(|g| CONJ_BASE + (fnv1a(base, g) % CONJ_BINS as u64) as u32)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// The previous two tokens before `position`, BOS-padded.
pub fn previous_tokens(prefix: &[Token], position: usize) -> (Token, Token) {
    let at = |k: usize| -> Token {
        position
            .checked_sub(k)
            .and_then(|i| prefix.get(i).copied())
            .unwrap_or(Token::Bos)
    };
    (at(2), at(1))
}

/// Bias, position bucket, previous token and previous pair, ascending.
pub fn context_indices(prefix: &[Token], position: usize) -> [u32; 4] {
    let (p2, p1) = previous_tokens(prefix, position);
    [
        BIAS_INDEX,
        POSITION_BASE + position.min(POSITION_BUCKETS - 1) as u32,
        PREV1_BASE + p1 as u32,
        PAIR_BASE + (p2 as u32) * VOCAB as u32 + p1 as u32,
    ]
}

fn head(t: Option<&Term>) -> u8 {
    match t.map(Term::tag) {
        None => b'-',
        Some(Tag::Zero) => b'0',
        Some(Tag::Succ) => b'S',
        Some(Tag::Add) => b'+',
        Some(Tag::Mul) => b'*',
        Some(Tag::Var) => b'v',
    }
}

fn contains(t: &Term, tag: Tag) -> bool {
    t.tag() == tag || t.children().into_iter().any(|c| contains(c, tag))
}

/// Rewrite-path digits in `prefix[..position]`, if the prefix is
/// `RW rule dir` followed only by digits.
fn path_digits(prefix: &[Token], position: usize) -> Option<Vec<u8>> {
    let p = prefix.get(..position)?;
    if p.len() < 3 || p[0] != Token::Rw {
        return None;
    }
    p[3..]
        .iter()
        .map(|t| match t {
            Token::D0 => Some(0),
            Token::D1 => Some(1),
            _ => None,
        })
        .collect()
}

/// State-only structure keys (equality, heads and contents of each side).
pub fn state_structure_keys(state: &ProofState) -> Vec<Vec<u8>> {
    let mut keys = Vec::new();
    if state.lhs == state.rhs {
        keys.push(alloc::vec![b'=']);
    }
    for (s, side) in [(b'L', &state.lhs), (b'R', &state.rhs)] {
        keys.push(alloc::vec![b'h', s, head(Some(side))]);
        for (k, tag) in [(b'a', Tag::Add), (b'm', Tag::Mul), (b'v', Tag::Var)] {
            if contains(side, tag) {
                keys.push(alloc::vec![k, s]);
            }
        }
    }
    keys
}

/// Keys describing the subterm addressed by the rewrite-path digits so far.
pub fn focus_keys(state: &ProofState, prefix: &[Token], position: usize) -> Vec<Vec<u8>> {
    let Some(digits) = path_digits(prefix, position) else {
        return Vec::new();
    };
    let Some((&side, rest)) = digits.split_first() else {
        return Vec::new();
    };
    match state.side(side).and_then(|t| t.subterm(rest)) {
        None => alloc::vec![alloc::vec![b'f', b'x']],
        Some(t) => {
            let (h, c0, c1) = (head(Some(t)), head(t.child(0)), head(t.child(1)));
            alloc::vec![
                alloc::vec![b'f', h],
                alloc::vec![b'0', c0],
                alloc::vec![b'1', c1],
                alloc::vec![b'F', h, c0, c1],
            ]
        }
    }
}

/// The rule byte keyed into the structure family.
fn rule_byte(prefix: &[Token], position: usize) -> u8 {
    match prefix.get(..position) {
        Some([Token::Rw, r, ..]) if (Token::R1.id()..=Token::R6.id()).contains(&r.id()) => r.id() as u8,
        _ => 255,
    }
}

/// The structure family for the given keys, sorted and deduplicated.
pub fn structure_indices(keys: &[Vec<u8>], prefix: &[Token], position: usize) -> Vec<u32> {
    let (_, p1) = previous_tokens(prefix, position);
    let base = fnv1a(seeded(b's'), &[p1 as u8, rule_byte(prefix, position)]);
    let mut out: Vec<u32> =
        keys.iter().map(|k| STRUCT_BASE + (fnv1a(base, k) % STRUCT_BINS as u64) as u32).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// All structure keys for a state text (none if it does not parse).
pub fn structure_keys(state: &str, prefix: &[Token], position: usize) -> Vec<Vec<u8>> {
    match ProofState::parse(state) {
        Ok(s) => {
            let mut keys = state_structure_keys(&s);
            keys.extend(focus_keys(&s, prefix, position));
            keys
        }
        Err(_) => Vec::new(),
    }
}

/// Features for predicting the token at `position` given `prefix`.
///
/// The families occupy increasing bin ranges, so concatenating them keeps
/// the result sorted.
pub fn featurize(state: &str, prefix: &[Token], position: usize) -> FeatureVector {
    let (_, p1) = previous_tokens(prefix, position);
    let mut indices = Vec::new();
    indices.extend_from_slice(&context_indices(prefix, position));
    indices.extend(ngram_indices(state));
    indices.extend(conjunction_indices(state, p1));
    indices.extend(structure_indices(&structure_keys(state, prefix, position), prefix, position));
    FeatureVector { indices }
}
