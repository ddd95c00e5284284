//! The fixed 16-token tactic vocabulary.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{KernelError, KernelErrorKind};
use crate::kernel::{Direction, GoalPath, RuleId, Tactic};

/// Vocabulary size.
pub const VOCAB: usize = 16;

/// Longest sequence the sampler emits, EOS included.
pub const MAX_TACTIC_TOKENS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Token {
    Rfl = 0,
    Sym = 1,
    Rw = 2,
    R1 = 3,
    R2 = 4,
    R3 = 5,
    R4 = 6,
    R5 = 7,
    R6 = 8,
    DirL = 9,
    DirR = 10,
    D0 = 11,
    D1 = 12,
    PathEnd = 13,
    Eos = 14,
    /// Start-of-tactic marker. Only ever appears as feature context; sampling
    /// it yields an unparseable tactic.
    Bos = 15,
}

impl Token {
    pub const ALL: [Token; VOCAB] = [
        Token::Rfl,
        Token::Sym,
        Token::Rw,
        Token::R1,
        Token::R2,
        Token::R3,
        Token::R4,
        Token::R5,
        Token::R6,
        Token::DirL,
        Token::DirR,
        Token::D0,
        Token::D1,
        Token::PathEnd,
        Token::Eos,
        Token::Bos,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Token> {
        Token::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Token::Rfl => "RFL",
            Token::Sym => "SYM",
            Token::Rw => "RW",
            Token::R1 => "R1",
            Token::R2 => "R2",
            Token::R3 => "R3",
            Token::R4 => "R4",
            Token::R5 => "R5",
            Token::R6 => "R6",
            Token::DirL => "DIR_L",
            Token::DirR => "DIR_R",
            Token::D0 => "D0",
            Token::D1 => "D1",
            Token::PathEnd => "PATH_END",
            Token::Eos => "EOS",
            Token::Bos => "BOS",
        }
    }

    pub fn from_name(name: &str) -> Option<Token> {
        Token::ALL.iter().copied().find(|t| t.name() == name)
    }

    fn rule(self) -> Option<RuleId> {
        match self {
            Token::R1 => Some(RuleId::R1),
            Token::R2 => Some(RuleId::R2),
            Token::R3 => Some(RuleId::R3),
            Token::R4 => Some(RuleId::R4),
            Token::R5 => Some(RuleId::R5),
            Token::R6 => Some(RuleId::R6),
            _ => None,
        }
    }

    fn for_rule(rule: RuleId) -> Token {
        Token::ALL[Token::R1.id() + rule.index()]
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A tactic in token form. Sampled sequences may be ill-formed; only
/// [`tokenize`] guarantees a trailing EOS.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSequence(pub Vec<Token>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_eos(&self) -> bool {
        self.0.last() == Some(&Token::Eos)
    }

    pub fn ids(&self) -> Vec<u8> {
        self.0.iter().map(|t| *t as u8).collect()
    }

    pub fn from_ids(ids: &[u8]) -> Option<Self> {
        ids.iter().map(|&i| Token::from_id(i as usize)).collect::<Option<Vec<_>>>().map(TokenSequence)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.name())?;
        }
        Ok(())
    }
}

pub fn tokenize(tactic: &Tactic) -> TokenSequence {
    let mut out = Vec::with_capacity(8);
    match tactic {
        Tactic::Rfl => out.push(Token::Rfl),
        Tactic::Sym => out.push(Token::Sym),
        Tactic::Rw { rule, direction, path } => {
            out.push(Token::Rw);
            out.push(Token::for_rule(*rule));
            out.push(match direction {
                Direction::L2R => Token::DirL,
                Direction::R2L => Token::DirR,
            });
            out.extend(path.0.iter().map(|&d| if d == 0 { Token::D0 } else { Token::D1 }));
            out.push(Token::PathEnd);
        }
    }
    out.push(Token::Eos);
    TokenSequence(out)
}

/// Strict inverse of [`tokenize`]; anything else is a syntax error.
pub fn detokenize(tokens: &TokenSequence) -> Result<Tactic, KernelError> {
    let err = || {
        KernelError::new(
            KernelErrorKind::ParseError,
            alloc::format!("ill-formed tactic tokens [{tokens}]"),
        )
    };
    let t = &tokens.0;
    match t.as_slice() {
        [Token::Rfl, Token::Eos] => Ok(Tactic::Rfl),
        [Token::Sym, Token::Eos] => Ok(Tactic::Sym),
        [Token::Rw, rule, dir, rest @ ..] => {
            let rule = rule.rule().ok_or_else(err)?;
            let direction = match dir {
                Token::DirL => Direction::L2R,
                Token::DirR => Direction::R2L,
                _ => return Err(err()),
            };
            let [digits @ .., Token::PathEnd, Token::Eos] = rest else {
                return Err(err());
            };
            let path = digits
                .iter()
                .map(|d| match d {
                    Token::D0 => Ok(0),
                    Token::D1 => Ok(1),
                    _ => Err(err()),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            Ok(Tactic::Rw { rule, direction, path: GoalPath(path) })
        }
        _ => Err(err()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodings() {
        assert_eq!(tokenize(&Tactic::Rfl).0, [Token::Rfl, Token::Eos]);
        assert_eq!(
            tokenize(&Tactic::rw(RuleId::R1, Direction::L2R, "0")).0,
            [Token::Rw, Token::R1, Token::DirL, Token::D0, Token::PathEnd, Token::Eos]
        );
        assert_eq!(detokenize(&tokenize(&Tactic::Sym)).unwrap(), Tactic::Sym);
    }

    #[test]
    fn ids_are_dense() {
        for (i, t) in Token::ALL.iter().enumerate() {
            assert_eq!(t.id(), i);
            assert_eq!(Token::from_name(t.name()), Some(*t));
        }
    }

    #[test]
    fn rejects_ill_formed() {
        let bad: [&[Token]; 6] = [
            &[Token::Rfl],
            &[Token::Rfl, Token::Rfl, Token::Eos],
            &[Token::Rw, Token::R1, Token::DirL, Token::D0, Token::Eos],
            &[Token::Rw, Token::DirL, Token::R1, Token::D0, Token::PathEnd, Token::Eos],
            &[Token::Bos, Token::Eos],
            &[Token::Eos],
        ];
        for b in bad {
            let e = detokenize(&TokenSequence(b.to_vec())).unwrap_err();
            assert_eq!(e.kind, KernelErrorKind::ParseError);
        }
    }
}
