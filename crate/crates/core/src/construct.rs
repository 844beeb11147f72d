//! CRTm and CRT sequence families.
//!
//! Both constructions work in `Z_p ⊗ Z_q` with `p` the smallest prime above
//! `M` and `q = 2M - 1`, then pull each set back to `Z_{pq}` through the
//! Chinese-remainder isomorphism `x ↦ (x mod p, x mod q)`.
//!
//! Row `j < p` is the progression with generator `(j, 1)` and row `p` the one
//! with generator `(1, 0)`. CRTm keeps `y = 0..=M` (weight `M + 1`), CRT drops
//! the last term (`y = 0..M`, weight `M`).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{gcd, mod_inverse, mul_mod, CharacteristicSet, CrtPair, SequenceSet};

/// Deterministic trial division.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) || n.is_multiple_of(3) {
        return false;
    }
    let mut d = 5u64;
    while d * d <= n {
        if n.is_multiple_of(d) || n.is_multiple_of(d + 2) {
            return false;
        }
        d += 6;
    }
    true
}

/// Least prime strictly greater than `m`.
pub fn smallest_prime_greater_than(m: u64) -> u64 {
    let mut n = m + 1;
    while !is_prime(n) {
        n += 1;
    }
    n
}

/// The ring isomorphism `Z_{pq} → Z_p ⊗ Z_q` and its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrtMap {
    p: u64,
    q: u64,
    // Idempotents: e_p ≡ 1 (mod p), ≡ 0 (mod q); e_q the other way round.
    e_p: u64,
    e_q: u64,
}

impl CrtMap {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if p == 0 || q == 0 || gcd(p, q) != 1 {
            return Err(Error::NotCoprime(p, q));
        }
        let n = p * q;
        let e_p = mul_mod(q, mod_inverse(q % p, p).ok_or(Error::NotCoprime(p, q))?, n);
        let e_q = mul_mod(p, mod_inverse(p % q, q).ok_or(Error::NotCoprime(p, q))?, n);
        Ok(CrtMap { p, q, e_p, e_q })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn modulus(&self) -> u64 {
        self.p * self.q
    }

    pub fn forward(&self, x: u64) -> Result<CrtPair> {
        if x >= self.modulus() {
            return Err(Error::ResidueOutOfRange { value: x, modulus: self.modulus() });
        }
        Ok(CrtPair::new(x % self.p, x % self.q))
    }

    pub fn inverse(&self, pair: CrtPair) -> Result<u64> {
        if pair.a >= self.p {
            return Err(Error::ResidueOutOfRange { value: pair.a, modulus: self.p });
        }
        if pair.b >= self.q {
            return Err(Error::ResidueOutOfRange { value: pair.b, modulus: self.q });
        }
        let n = self.modulus();
        Ok((mul_mod(pair.a, self.e_p, n) + mul_mod(pair.b, self.e_q, n)) % n)
    }
}

/// `(x mod p, x mod q)`.
pub fn crt_forward(x: u64, p: u64, q: u64) -> Result<CrtPair> {
    CrtMap::new(p, q)?.forward(x)
}

/// The unique `x < pq` mapping to `pair`.
pub fn crt_inverse(pair: CrtPair, p: u64, q: u64) -> Result<u64> {
    CrtMap::new(p, q)?.inverse(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Crtm,
    Crt,
}

impl Construction {
    /// Number of progression terms per sequence for `M` users.
    pub fn weight(self, m: u64) -> u64 {
        match self {
            Construction::Crtm => m + 1,
            Construction::Crt => m,
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Crtm => "crtm",
            Construction::Crt => "crt",
        })
    }
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crtm" => Ok(Construction::Crtm),
            "crt" => Ok(Construction::Crt),
            other => Err(Error::InvalidArgument(format!("unknown construction {other:?}"))),
        }
    }
}

/// All `p + 1` sequences of a CRTm (or truncated CRT) construction for `M`
/// users, with the generator of each row kept alongside its elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrtmFamily {
    construction: Construction,
    m: u64,
    crt: CrtMap,
    generators: Vec<CrtPair>,
    sequences: Vec<CharacteristicSet>,
}

impl CrtmFamily {
    pub fn build(construction: Construction, m: u64) -> Result<Self> {
        if m < 4 {
            return Err(Error::UserCountTooSmall(m));
        }
        let p = smallest_prime_greater_than(m);
        let q = 2 * m - 1;
        let crt = CrtMap::new(p, q)?;
        let terms = construction.weight(m);
        let generators: Vec<CrtPair> =
            (0..p).map(|j| CrtPair::new(j, 1)).chain(std::iter::once(CrtPair::new(1, 0))).collect();
        let sequences = generators
            .iter()
            .map(|g| {
                let elements = (0..terms)
                    .map(|y| crt.inverse(CrtPair::new(g.a * y % p, g.b * y % q)))
                    .collect::<Result<Vec<u64>>>()?;
                CharacteristicSet::new(crt.modulus(), elements)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CrtmFamily { construction, m, crt, generators, sequences })
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// Intended user count `M`.
    pub fn m(&self) -> u64 {
        self.m
    }

    /// The prime `p_M`.
    pub fn p(&self) -> u64 {
        self.crt.p()
    }

    /// `2M - 1`.
    pub fn q(&self) -> u64 {
        self.crt.q()
    }

    pub fn period(&self) -> u64 {
        self.crt.modulus()
    }

    pub fn weight(&self) -> usize {
        self.construction.weight(self.m) as usize
    }

    pub fn crt(&self) -> &CrtMap {
        &self.crt
    }

    pub fn sequences(&self) -> &[CharacteristicSet] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn generators(&self) -> &[CrtPair] {
        &self.generators
    }

    /// Generator of row `j` pulled back to `Z_L`.
    pub fn generator_residue(&self, j: usize) -> Result<u64> {
        let g = self.generators.get(j).ok_or(Error::IndexOutOfRange { index: j, len: self.len() })?;
        self.crt.inverse(*g)
    }

    /// Progression position `y` of slot `x` in row `j`, if `x` belongs to it.
    pub fn position_of(&self, j: usize, x: u64) -> Option<u64> {
        let g = self.generators.get(j)?;
        let pair = self.crt.forward(x).ok()?;
        let (p, q) = (self.p(), self.q());
        let y = if g.b == 1 { pair.b } else { pair.a };
        let terms = self.construction.weight(self.m);
        (y < terms && pair.a == g.a * y % p && pair.b == g.b * y % q).then_some(y)
    }

    /// Every row as a sequence set.
    pub fn to_sequence_set(&self) -> SequenceSet {
        SequenceSet::new(self.sequences.clone()).expect("family rows share one period")
    }

    /// The rows named by `indices`, in the given order.
    pub fn select_users(&self, indices: &[usize]) -> Result<SequenceSet> {
        select_users(self, indices)
    }

    /// Row indices `p_M + 1 - M ..= p_M`. These skip row 1, the consecutive
    /// block `{0, 1, ..., w-1}`, whose clustered slots give a much longer
    /// wait from a random start than any other row.
    pub fn default_user_indices(&self) -> Vec<usize> {
        let p = self.p() as usize;
        (p + 1 - self.m as usize..=p).collect()
    }

    /// The `M` rows used when no explicit selection is given.
    pub fn default_users(&self) -> SequenceSet {
        self.select_users(&self.default_user_indices()).expect("indices lie inside the family")
    }
}

pub fn build_crtm(m: u64) -> Result<CrtmFamily> {
    CrtmFamily::build(Construction::Crtm, m)
}

/// CRT family: the CRTm rows with the final progression term removed.
pub fn build_crt_family(m: u64) -> Result<CrtmFamily> {
    CrtmFamily::build(Construction::Crt, m)
}

/// All `p_M + 1` CRT sequences of weight `M`.
pub fn build_crt(m: u64) -> Result<SequenceSet> {
    Ok(build_crt_family(m)?.to_sequence_set())
}

pub fn select_users(family: &CrtmFamily, indices: &[usize]) -> Result<SequenceSet> {
    let mut seen = HashSet::with_capacity(indices.len());
    let mut members = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = family.sequences.get(i).ok_or(Error::IndexOutOfRange { index: i, len: family.len() })?;
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
        members.push(s.clone());
    }
    SequenceSet::new(members)
}
