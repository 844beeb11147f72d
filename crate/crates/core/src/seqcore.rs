//! Residue arithmetic over `Z_L` and the sequence data model.
//!
//! A protocol sequence of period `L` is represented by its characteristic
//! set, the slots in `[0, L)` where the sequence is 1. Relative shifts act on
//! characteristic sets by translation modulo `L`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported period.
pub const MAX_PERIOD: u64 = (1 << 31) - 1;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Inverse of `a` modulo `m` by extended Euclid, if `gcd(a, m) = 1`.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return None;
    }
    Some(s0.rem_euclid(m as i128) as u64)
}

/// `(a - b) mod m` for `a, b < m`.
#[inline]
pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + m - b
    }
}

/// `(a + b) mod m` for `a, b < m`.
#[inline]
pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Reduces a signed shift into `[0, L)`.
#[inline]
pub fn reduce_shift(tau: i64, period: u64) -> u64 {
    tau.rem_euclid(period as i64) as u64
}

/// Slots in `Z_L` where one protocol sequence transmits.
///
/// Elements are kept sorted ascending, so equality is set equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSet", into = "RawSet")]
pub struct CharacteristicSet {
    period: u64,
    elements: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawSet {
    period: u64,
    elements: Vec<u64>,
}

impl TryFrom<RawSet> for CharacteristicSet {
    type Error = Error;

    fn try_from(raw: RawSet) -> Result<Self> {
        CharacteristicSet::new(raw.period, raw.elements)
    }
}

impl From<CharacteristicSet> for RawSet {
    fn from(set: CharacteristicSet) -> Self {
        RawSet { period: set.period, elements: set.elements }
    }
}

impl CharacteristicSet {
    /// Builds a set from elements already in `[0, L)`. Order is irrelevant;
    /// duplicates and out-of-range values are rejected.
    pub fn new(period: u64, elements: impl IntoIterator<Item = u64>) -> Result<Self> {
        if period == 0 {
            return Err(Error::ZeroPeriod);
        }
        if period > MAX_PERIOD {
            return Err(Error::InvalidArgument(format!("period {period} exceeds {MAX_PERIOD}")));
        }
        let mut elements: Vec<u64> = elements.into_iter().collect();
        if let Some(&e) = elements.iter().find(|&&e| e >= period) {
            return Err(Error::ElementOutOfRange { element: e, period });
        }
        elements.sort_unstable();
        if let Some(w) = elements.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateElement(w[0]));
        }
        if elements.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(CharacteristicSet { period, elements })
    }

    /// Builds a set from arbitrary integers, reducing each modulo `L`.
    /// Values that collide after reduction are still rejected.
    pub fn from_residues(period: u64, values: impl IntoIterator<Item = i64>) -> Result<Self> {
        if period == 0 {
            return Err(Error::ZeroPeriod);
        }
        Self::new(period, values.into_iter().map(|v| reduce_shift(v, period)))
    }

    pub(crate) fn from_sorted_unchecked(period: u64, elements: Vec<u64>) -> Self {
        debug_assert!(elements.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(elements.last().is_none_or(|&e| e < period));
        CharacteristicSet { period, elements }
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Sorted elements.
    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    /// Hamming weight `|I|`.
    pub fn weight(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, slot: u64) -> bool {
        self.elements.binary_search(&(slot % self.period)).is_ok()
    }

    /// `I + tau` in `Z_L`.
    pub fn shift(&self, tau: u64) -> CharacteristicSet {
        let l = self.period;
        let tau = tau % l;
        if tau == 0 {
            return self.clone();
        }
        // Elements >= L - tau wrap to the front; the result stays sorted
        // after rotating the two runs.
        let split = self.elements.partition_point(|&e| e < l - tau);
        let mut out = Vec::with_capacity(self.elements.len());
        out.extend(self.elements[split..].iter().map(|&e| e + tau - l));
        out.extend(self.elements[..split].iter().map(|&e| e + tau));
        CharacteristicSet::from_sorted_unchecked(l, out)
    }

    /// Shift by a signed amount, reduced modulo `L`.
    pub fn shift_signed(&self, tau: i64) -> CharacteristicSet {
        self.shift(reduce_shift(tau, self.period))
    }

    /// Binary `(0,1)` sequence of length `L`.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut bits = vec![0u8; self.period as usize];
        for &e in &self.elements {
            bits[e as usize] = 1;
        }
        bits
    }

    /// `self \ other`; `None` when nothing is left.
    pub fn difference(&self, other: &CharacteristicSet) -> Option<CharacteristicSet> {
        let rest: Vec<u64> =
            self.elements.iter().copied().filter(|e| other.elements.binary_search(e).is_err()).collect();
        (!rest.is_empty()).then(|| CharacteristicSet::from_sorted_unchecked(self.period, rest))
    }
}

/// Hamming weight of a characteristic set.
pub fn weight(set: &CharacteristicSet) -> usize {
    set.weight()
}

/// Translation of a characteristic set by `tau` in `Z_L`.
pub fn shift(set: &CharacteristicSet, tau: u64) -> CharacteristicSet {
    set.shift(tau)
}

impl fmt::Display for CharacteristicSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{{", self.period)?;
        for (n, e) in self.elements.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for CharacteristicSet {
    type Err = Error;

    /// Parses the canonical `L:{e1,e2,...}` form. Whitespace is tolerated and
    /// elements may appear in any order.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (period, rest) =
            s.split_once(':').ok_or_else(|| Error::Parse(format!("missing ':' in {s:?}")))?;
        let period: u64 =
            period.trim().parse().map_err(|_| Error::Parse(format!("bad period in {s:?}")))?;
        let body = rest
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| Error::Parse(format!("expected {{...}} in {s:?}")))?;
        let elements = body
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u64>().map_err(|_| Error::Parse(format!("bad element {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        CharacteristicSet::new(period, elements)
    }
}

/// Characteristic sets of the users sharing one channel, all with the same
/// period. Users are indexed from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSequenceSet")]
pub struct SequenceSet {
    period: u64,
    members: Vec<CharacteristicSet>,
}

#[derive(Deserialize)]
struct RawSequenceSet {
    members: Vec<CharacteristicSet>,
}

impl TryFrom<RawSequenceSet> for SequenceSet {
    type Error = Error;

    fn try_from(raw: RawSequenceSet) -> Result<Self> {
        SequenceSet::new(raw.members)
    }
}

impl SequenceSet {
    /// At least one member is required; operations that need two or more
    /// users check that themselves.
    pub fn new(members: Vec<CharacteristicSet>) -> Result<Self> {
        let first = members.first().ok_or(Error::TooFewMembers { required: 1, got: 0 })?;
        let period = first.period();
        if let Some(m) = members.iter().find(|m| m.period() != period) {
            return Err(Error::PeriodMismatch(period, m.period()));
        }
        Ok(SequenceSet { period, members })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn members(&self) -> &[CharacteristicSet] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&CharacteristicSet> {
        self.members.get(index).ok_or(Error::IndexOutOfRange { index, len: self.members.len() })
    }

    /// `Some(w)` when every member has weight `w`.
    pub fn constant_weight(&self) -> Option<usize> {
        let w = self.members[0].weight();
        self.members.iter().all(|m| m.weight() == w).then_some(w)
    }

    pub(crate) fn require_users(&self, required: usize) -> Result<()> {
        if self.members.len() < required {
            return Err(Error::TooFewMembers { required, got: self.members.len() });
        }
        Ok(())
    }

    /// First `count` members as a new set.
    pub fn truncated(&self, count: usize) -> Result<SequenceSet> {
        self.require_users(count)?;
        SequenceSet::new(self.members[..count].to_vec())
    }

    /// Parses one canonical set per non-empty line; `#` starts a comment.
    pub fn parse_lines(text: &str) -> Result<SequenceSet> {
        let members = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<CharacteristicSet>>>()?;
        SequenceSet::new(members)
    }

    /// One canonical set per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for m in &self.members {
            out.push_str(&m.to_string());
            out.push('\n');
        }
        out
    }
}

/// Element of `Z_p ⊗ Z_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrtPair {
    pub a: u64,
    pub b: u64,
}

impl CrtPair {
    pub fn new(a: u64, b: u64) -> Self {
        CrtPair { a, b }
    }
}

impl fmt::Display for CrtPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}
