//! Period lower bounds for UI sets and the CRTm period ratio.
//!
//! All inequalities are evaluated in exact integers; ratios are kept as
//! fractions and only rendered as decimals for output.

use serde::Serialize;

use crate::construct::{is_prime, smallest_prime_greater_than};
use crate::error::{Error, Result};
use crate::seqcore::gcd;

/// Largest `L` for which the packing search runs.
pub const PACKING_LIMIT: u64 = 1_000_000;

/// Reading of "number of distinct relatively prime divisors of `L` between
/// 2 and `k`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PiMode {
    /// Distinct primes `p | L` with `p <= k`.
    #[default]
    Prime,
    /// Largest set of pairwise-coprime divisors of `L` in `[2, k]`, by search.
    Packing,
}

impl std::str::FromStr for PiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prime" => Ok(PiMode::Prime),
            "packing" => Ok(PiMode::Packing),
            other => Err(Error::InvalidArgument(format!("unknown pi mode {other:?}"))),
        }
    }
}

/// Distinct prime factors of `n`, ascending.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn divisors_in(l: u64, lo: u64, hi: u64) -> Vec<u64> {
    (lo..=hi.min(l)).filter(|d| l.is_multiple_of(*d)).collect()
}

fn max_coprime_packing(cands: &[u64], chosen: &mut Vec<u64>, best: &mut usize) {
    if chosen.len() + cands.len() <= *best {
        return;
    }
    let Some((&first, rest)) = cands.split_first() else {
        *best = (*best).max(chosen.len());
        return;
    };
    if chosen.iter().all(|&c| gcd(c, first) == 1) {
        chosen.push(first);
        max_coprime_packing(rest, chosen, best);
        chosen.pop();
    }
    max_coprime_packing(rest, chosen, best);
}

/// `π(L, k)` under the chosen reading. Zero when `k < 2`.
pub fn pi_count(l: u64, k: u64, mode: PiMode) -> Result<u64> {
    if l < 2 {
        return Err(Error::InvalidArgument(format!("pi_count needs L >= 2, got {l}")));
    }
    if k < 2 {
        return Ok(0);
    }
    match mode {
        PiMode::Prime => Ok(prime_factors(l).into_iter().filter(|&p| p <= k).count() as u64),
        PiMode::Packing => {
            if l > PACKING_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "packing search limited to L <= {PACKING_LIMIT}, got {l}"
                )));
            }
            let cands = divisors_in(l, 2, k);
            let mut best = 0;
            max_coprime_packing(&cands, &mut Vec::new(), &mut best);
            Ok(best as u64)
        }
    }
}

/// `⌈8M²/9⌉`, the period bound for any UI set of `M` users.
pub fn lower_bound_general(m: u64) -> u64 {
    (8 * m * m).div_ceil(9)
}

/// `(2M-4)M - 2π(L, 2M-4)(M-2) - 2M + 1`, the bound for equi-difference UI
/// sets of weight `M + 1`. Can be nonpositive for large `π`.
pub fn lower_bound_eq9(m: u64, l: u64, mode: PiMode) -> Result<i64> {
    if m < 4 {
        return Err(Error::UserCountTooSmall(m));
    }
    let pi = pi_count(l, 2 * m - 4, mode)? as i64;
    let m = m as i64;
    Ok((2 * m - 4) * m - 2 * pi * (m - 2) - 2 * m + 1)
}

/// `p_M (2M - 1)`.
pub fn crtm_period(m: u64) -> u64 {
    smallest_prime_greater_than(m) * (2 * m - 1)
}

/// Exact `numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// `self >= other` by cross-multiplication.
    pub fn ge(self, other: Ratio) -> bool {
        self.numerator as u128 * other.denominator as u128 >= other.numerator as u128 * self.denominator as u128
    }

    pub fn lt(self, other: Ratio) -> bool {
        !self.ge(other)
    }
}

/// Decimal with six significant digits.
pub fn six_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `L_crtm / 2M²` for each `M`.
pub fn ratio_trend(ms: &[u64]) -> Result<Vec<(u64, Ratio)>> {
    ms.iter()
        .map(|&m| {
            if m < 4 {
                return Err(Error::UserCountTooSmall(m));
            }
            Ok((m, Ratio { numerator: crtm_period(m), denominator: 2 * m * m }))
        })
        .collect()
}

/// `M = p - 1` for every prime `5 <= p <= max_prime`.
pub fn prime_minus_one_users(max_prime: u64) -> Vec<u64> {
    (5..=max_prime).filter(|&p| is_prime(p)).map(|p| p - 1).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub m: u64,
    pub p: u64,
    pub l_crtm: u64,
    pub lb_general: u64,
    pub lb_eq9: i64,
    pub pi_count: u64,
    pub ratio: Ratio,
}

impl BoundReport {
    pub fn new(m: u64, mode: PiMode) -> Result<Self> {
        if m < 4 {
            return Err(Error::UserCountTooSmall(m));
        }
        let p = smallest_prime_greater_than(m);
        let l = p * (2 * m - 1);
        Ok(BoundReport {
            m,
            p,
            l_crtm: l,
            lb_general: lower_bound_general(m),
            lb_eq9: lower_bound_eq9(m, l, mode)?,
            pi_count: pi_count(l, 2 * m - 4, mode)?,
            ratio: Ratio { numerator: l, denominator: 2 * m * m },
        })
    }

    /// Both lower bounds hold for the CRTm period.
    pub fn consistent(&self) -> bool {
        self.l_crtm as i64 >= self.lb_eq9 && self.l_crtm >= self.lb_general
    }

    pub const CSV_HEADER: &'static str = "M,p_M,L,lb_general,lb_eq9,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.m,
            self.p,
            self.l_crtm,
            self.lb_general,
            self.lb_eq9,
            six_significant(self.ratio.to_f64())
        )
    }
}
