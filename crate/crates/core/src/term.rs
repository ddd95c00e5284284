//! Terms of the toy arithmetic calculus and their canonical prefix syntax.
//!
//! The grammar is
//!
//! ```text
//! term := "0" | "S(" term ")" | "add(" term "," term ")" | "mul(" term "," term ")" | var
//! var  := [a-z][a-z0-9_]*        (except the reserved words `add` and `mul`)
//! ```
//!
//! Whitespace is accepted around tokens when parsing and never emitted when
//! serializing, so `parse(serialize(t)) == t` and serialization is canonical.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{KernelError, KernelErrorKind};

/// Longest accepted variable name.
pub const MAX_VAR_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Zero,
    Succ(Box<Term>),
    Add(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Var(String),
}

/// Constructor tag of a [`Term`], independent of its children.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Zero,
    Succ,
    Add,
    Mul,
    Var,
}

impl Tag {
    pub fn arity(self) -> usize {
        match self {
            Tag::Zero | Tag::Var => 0,
            Tag::Succ => 1,
            Tag::Add | Tag::Mul => 2,
        }
    }
}

impl Term {
    pub fn zero() -> Term {
        Term::Zero
    }

    pub fn succ(t: Term) -> Term {
        Term::Succ(Box::new(t))
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(Box::new(a), Box::new(b))
    }

    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    /// The numeral `S^n(0)`.
    pub fn numeral(n: usize) -> Term {
        (0..n).fold(Term::Zero, |acc, _| Term::succ(acc))
    }

    /// `S^n(t)`.
    pub fn succ_n(n: usize, t: Term) -> Term {
        (0..n).fold(t, |acc, _| Term::succ(acc))
    }

    pub fn tag(&self) -> Tag {
        match self {
            Term::Zero => Tag::Zero,
            Term::Succ(_) => Tag::Succ,
            Term::Add(..) => Tag::Add,
            Term::Mul(..) => Tag::Mul,
            Term::Var(_) => Tag::Var,
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Zero | Term::Var(_) => Vec::new(),
            Term::Succ(a) => alloc::vec![&**a],
            Term::Add(a, b) | Term::Mul(a, b) => alloc::vec![&**a, &**b],
        }
    }

    /// The child at `index`, if the constructor has one there.
    pub fn child(&self, index: u8) -> Option<&Term> {
        match (self, index) {
            (Term::Succ(a), 0) | (Term::Add(a, _), 0) | (Term::Mul(a, _), 0) => Some(a),
            (Term::Add(_, b), 1) | (Term::Mul(_, b), 1) => Some(b),
            _ => None,
        }
    }

    pub fn child_mut(&mut self, index: u8) -> Option<&mut Term> {
        match (self, index) {
            (Term::Succ(a), 0) | (Term::Add(a, _), 0) | (Term::Mul(a, _), 0) => Some(a),
            (Term::Add(_, b), 1) | (Term::Mul(_, b), 1) => Some(b),
            _ => None,
        }
    }

    /// Subterm reached by following child indices from this term.
    pub fn subterm(&self, path: &[u8]) -> Option<&Term> {
        path.iter().try_fold(self, |t, &i| t.child(i))
    }

    pub fn subterm_mut(&mut self, path: &[u8]) -> Option<&mut Term> {
        let mut cur = self;
        for &i in path {
            cur = cur.child_mut(i)?;
        }
        Some(cur)
    }

    /// Number of constructor nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Every position in the term, in pre-order, as child-index paths.
    pub fn positions(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<u8>, &Term)> = alloc::vec![(Vec::new(), self)];
        while let Some((path, t)) = stack.pop() {
            let n = t.tag().arity();
            for i in (0..n).rev() {
                let mut p = path.clone();
                p.push(i as u8);
                stack.push((p, t.child(i as u8).expect("arity")));
            }
            out.push(path);
        }
        out
    }

    /// True when the term contains no variables.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            _ => self.children().iter().all(|c| c.is_ground()),
        }
    }

    /// Arity and name well-formedness, checked recursively.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Term::Var(name) => valid_var_name(name),
            _ => {
                self.children().len() == self.tag().arity()
                    && self.children().iter().all(|c| c.is_well_formed())
            }
        }
    }

    /// Canonical prefix serialization.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.write_into(&mut s);
        s
    }

    fn write_into(&self, out: &mut String) {
        match self {
            Term::Zero => out.push('0'),
            Term::Var(name) => out.push_str(name),
            Term::Succ(a) => {
                out.push_str("S(");
                a.write_into(out);
                out.push(')');
            }
            Term::Add(a, b) | Term::Mul(a, b) => {
                out.push_str(if matches!(self, Term::Add(..)) { "add(" } else { "mul(" });
                a.write_into(out);
                out.push(',');
                b.write_into(out);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

pub fn valid_var_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= MAX_VAR_LEN
        && bytes[0].is_ascii_lowercase()
        && bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
        && name != "add"
        && name != "mul"
}

/// Parses a term in canonical prefix syntax.
pub fn parse_term(text: &str) -> Result<Term, KernelError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> KernelError {
        KernelError::new(
            KernelErrorKind::ParseError,
            alloc::format!("{what} at byte {}", self.pos),
        )
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), KernelError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&alloc::format!("expected '{}'", byte as char)))
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        // ASCII-only by construction.
        core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn term(&mut self) -> Result<Term, KernelError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident();
        match name {
            "" => Err(self.error("expected a term")),
            "0" => Ok(Term::Zero),
            "S" => {
                self.expect(b'(')?;
                let a = self.term()?;
                self.expect(b')')?;
                Ok(Term::succ(a))
            }
            "add" | "mul" => {
                let is_add = name == "add";
                self.expect(b'(')?;
                let a = self.term()?;
                self.expect(b',')?;
                let b = self.term()?;
                self.expect(b')')?;
                Ok(if is_add { Term::add(a, b) } else { Term::mul(a, b) })
            }
            other if valid_var_name(other) => Ok(Term::Var(other.to_string())),
            _ => {
                self.pos = start;
                Err(self.error("invalid identifier"))
            }
        }
    }
}
