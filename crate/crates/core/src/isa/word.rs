use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use super::{Locality, Perm, PermPair, ParseWordError};

/// Integer standing for an infinite upper bound in `gete`/`subseg`.
pub const INFINITY_CODE: i64 = -42;

/// Upper bound of a capability range (inclusive).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    Addr(BigInt),
    Infinity,
}

impl Bound {
    pub fn as_int(&self) -> BigInt {
        match self {
            Bound::Addr(a) => a.clone(),
            Bound::Infinity => BigInt::from(INFINITY_CODE),
        }
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Bound::Addr(a), Bound::Addr(b)) => a.cmp(b),
            (Bound::Addr(_), Bound::Infinity) => Ordering::Less,
            (Bound::Infinity, Bound::Addr(_)) => Ordering::Greater,
            (Bound::Infinity, Bound::Infinity) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Addr(a) => write!(f, "{a}"),
            Bound::Infinity => f.write_str("inf"),
        }
    }
}

/// Capability: authority over `[base, end]`, currently pointing at `addr`.
///
/// `base` is a natural number; `addr` is an integer and may lie outside
/// the range.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Capability {
    pub pair: PermPair,
    pub base: BigInt,
    pub end: Bound,
    pub addr: BigInt,
}

impl Capability {
    pub fn new(
        perm: Perm,
        loc: Locality,
        base: impl Into<BigInt>,
        end: Bound,
        addr: impl Into<BigInt>,
    ) -> Self {
        Capability {
            pair: PermPair::new(perm, loc),
            base: base.into(),
            end,
            addr: addr.into(),
        }
    }

    /// Bounded capability with `end` given as an address.
    pub fn span(
        perm: Perm,
        loc: Locality,
        base: impl Into<BigInt>,
        end: impl Into<BigInt>,
        addr: impl Into<BigInt>,
    ) -> Self {
        Capability::new(perm, loc, base, Bound::Addr(end.into()), addr)
    }

    pub fn perm(&self) -> Perm {
        self.pair.perm
    }

    pub fn loc(&self) -> Locality {
        self.pair.loc
    }

    pub fn is_local(&self) -> bool {
        self.pair.loc == Locality::Local
    }

    pub fn within_bounds(&self) -> bool {
        self.base <= self.addr && Bound::Addr(self.addr.clone()) <= self.end
    }

    pub fn with_addr(&self, addr: BigInt) -> Self {
        Capability {
            addr,
            ..self.clone()
        }
    }

    /// Turn an enter capability into the read-execute capability it unseals to.
    pub fn promote(&self) -> Self {
        if self.pair.perm == Perm::E {
            Capability {
                pair: PermPair::new(Perm::Rx, self.pair.loc),
                ..self.clone()
            }
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cap {} {} {} {} {}",
            self.pair.perm, self.pair.loc, self.base, self.end, self.addr
        )
    }
}

/// Machine word: an unbounded integer or a capability.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Word {
    Int(BigInt),
    Cap(Capability),
}

impl Word {
    pub fn int(n: impl Into<BigInt>) -> Word {
        Word::Int(n.into())
    }

    pub fn zero() -> Word {
        Word::Int(BigInt::zero())
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Word::Int(n) => Some(n),
            Word::Cap(_) => None,
        }
    }

    pub fn as_cap(&self) -> Option<&Capability> {
        match self {
            Word::Cap(c) => Some(c),
            Word::Int(_) => None,
        }
    }

    pub fn is_cap(&self) -> bool {
        matches!(self, Word::Cap(_))
    }

    pub fn is_zero_int(&self) -> bool {
        matches!(self, Word::Int(n) if n.is_zero())
    }

    pub fn is_local_cap(&self) -> bool {
        matches!(self, Word::Cap(c) if c.is_local())
    }

    /// Truthiness used by `jnz`: capabilities are always non-zero.
    pub fn non_zero(&self) -> bool {
        !self.is_zero_int()
    }

    /// Enter capabilities become read-execute; everything else is unchanged.
    pub fn promote(&self) -> Word {
        match self {
            Word::Cap(c) => Word::Cap(c.promote()),
            w => w.clone(),
        }
    }
}

impl Default for Word {
    fn default() -> Self {
        Word::zero()
    }
}

impl From<Capability> for Word {
    fn from(c: Capability) -> Self {
        Word::Cap(c)
    }
}

impl From<i64> for Word {
    fn from(n: i64) -> Self {
        Word::Int(n.into())
    }
}

impl From<BigInt> for Word {
    fn from(n: BigInt) -> Self {
        Word::Int(n)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Int(n) => write!(f, "int {n}"),
            Word::Cap(c) => c.fmt(f),
        }
    }
}

pub(crate) fn parse_int(tok: &str) -> Result<BigInt, ParseWordError> {
    tok.parse::<BigInt>()
        .map_err(|_| ParseWordError::new(format!("expected an integer, found `{tok}`")))
}

fn parse_nat(tok: &str) -> Result<BigInt, ParseWordError> {
    let n = parse_int(tok)?;
    if n.is_negative() {
        return Err(ParseWordError::new(format!("expected an address, found `{tok}`")));
    }
    Ok(n)
}

impl Word {
    /// Parse a word from already split tokens (`int n` or `cap p l b e a`).
    pub fn from_tokens(toks: &[&str]) -> Result<Word, ParseWordError> {
        match toks {
            ["int", n] => Ok(Word::Int(parse_int(n)?)),
            ["cap", perm, loc, base, end, addr] => {
                let end = if *end == "inf" {
                    Bound::Infinity
                } else {
                    Bound::Addr(parse_nat(end)?)
                };
                Ok(Word::Cap(Capability {
                    pair: PermPair::new(perm.parse()?, loc.parse()?),
                    base: parse_nat(base)?,
                    end,
                    addr: parse_int(addr)?,
                }))
            }
            _ => Err(ParseWordError::new(format!(
                "malformed word `{}`",
                toks.join(" ")
            ))),
        }
    }
}

impl FromStr for Word {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        Word::from_tokens(&toks)
    }
}
