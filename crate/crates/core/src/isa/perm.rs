use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use super::ParseWordError;

/// Access permission carried by a capability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Perm {
    O,
    Ro,
    Rw,
    Rwl,
    Rx,
    E,
    Rwx,
    Rwlx,
}

impl Perm {
    pub const ALL: [Perm; 8] = [
        Perm::O,
        Perm::Ro,
        Perm::Rw,
        Perm::Rwl,
        Perm::Rx,
        Perm::E,
        Perm::Rwx,
        Perm::Rwlx,
    ];

    /// Integer code used by `getp`, `restrict` and `reqperm`.
    pub fn code(self) -> u8 {
        match self {
            Perm::O => 0,
            Perm::Ro => 1,
            Perm::Rw => 2,
            Perm::Rwl => 3,
            Perm::Rx => 4,
            Perm::E => 5,
            Perm::Rwx => 6,
            Perm::Rwlx => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Perm> {
        Perm::ALL.get(code as usize).copied()
    }

    /// Permissions that `self` can be weakened to, itself included.
    fn down_set(self) -> &'static [Perm] {
        use Perm::*;
        match self {
            O => &[O],
            Ro => &[Ro, O],
            E => &[E, O],
            Rw => &[Rw, Ro, O],
            Rx => &[Rx, E, Ro, O],
            Rwl => &[Rwl, Rw, Ro, O],
            Rwx => &[Rwx, Rw, Rx, E, Ro, O],
            Rwlx => &[Rwlx, Rwl, Rwx, Rw, Rx, E, Ro, O],
        }
    }

    /// `self ⊑ other` in the permission order.
    pub fn flows_to(self, other: Perm) -> bool {
        other.down_set().contains(&self)
    }

    pub fn can_read(self) -> bool {
        matches!(
            self,
            Perm::Ro | Perm::Rx | Perm::Rw | Perm::Rwl | Perm::Rwx | Perm::Rwlx
        )
    }

    pub fn can_write(self) -> bool {
        matches!(self, Perm::Rw | Perm::Rwl | Perm::Rwx | Perm::Rwlx)
    }

    pub fn can_execute(self) -> bool {
        matches!(self, Perm::Rx | Perm::Rwx | Perm::Rwlx)
    }

    pub fn can_write_local(self) -> bool {
        matches!(self, Perm::Rwl | Perm::Rwlx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Perm::O => "o",
            Perm::Ro => "ro",
            Perm::Rw => "rw",
            Perm::Rwl => "rwl",
            Perm::Rx => "rx",
            Perm::E => "e",
            Perm::Rwx => "rwx",
            Perm::Rwlx => "rwlx",
        }
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Perm {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Perm::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| ParseWordError::new(format!("unknown permission `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locality {
    Local,
    Global,
}

impl Locality {
    pub fn code(self) -> u8 {
        match self {
            Locality::Local => 0,
            Locality::Global => 1,
        }
    }

    pub fn flows_to(self, other: Locality) -> bool {
        self == Locality::Local || other == Locality::Global
    }

    pub fn name(self) -> &'static str {
        match self {
            Locality::Local => "local",
            Locality::Global => "global",
        }
    }
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Locality {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Locality::Local),
            "global" => Ok(Locality::Global),
            _ => Err(ParseWordError::new(format!("unknown locality `{s}`"))),
        }
    }
}

/// A permission together with a locality, ordered pointwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PermPair {
    pub perm: Perm,
    pub loc: Locality,
}

impl PermPair {
    pub const fn new(perm: Perm, loc: Locality) -> Self {
        PermPair { perm, loc }
    }

    pub fn all() -> impl Iterator<Item = PermPair> {
        Perm::ALL.into_iter().flat_map(|perm| {
            [Locality::Local, Locality::Global]
                .into_iter()
                .map(move |loc| PermPair { perm, loc })
        })
    }

    pub fn flows_to(self, other: PermPair) -> bool {
        self.perm.flows_to(other.perm) && self.loc.flows_to(other.loc)
    }

    pub fn code(self) -> u8 {
        2 * self.perm.code() + self.loc.code()
    }

    /// Total decoding: anything outside `0..16` maps to `(o, local)`.
    pub fn decode(n: &BigInt) -> PermPair {
        match n.to_u8() {
            Some(c) if c < 16 => PermPair {
                perm: Perm::from_code(c / 2).expect("code below 8"),
                loc: if c % 2 == 0 {
                    Locality::Local
                } else {
                    Locality::Global
                },
            },
            _ => PermPair::new(Perm::O, Locality::Local),
        }
    }
}

impl fmt::Display for PermPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.perm, self.loc)
    }
}
