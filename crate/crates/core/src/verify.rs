//! User-irrepressibility checks.
//!
//! A set is UI when no user's characteristic set can be covered by the union
//! of shifted copies of the others. Two independent routes decide this:
//!
//! * exhaustive search over shift patterns (raw enumeration, or an exact
//!   backtracking cover search that branches on which user covers the first
//!   uncovered slot);
//! * for constant weight `M + 1`, the pairwise characterization: every
//!   `H_{I_i I_j} <= 2`, and every residual `I_i \ (I_k + τ_k)` with
//!   `k ∈ B_i`, `τ_k ∈ T_{i,k}` meets every other `I_j` in at most one slot
//!   under any shift.
//!
//! Only relative shifts matter, so the probed user always sits at shift 0.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::construct::CrtmFamily;
use crate::correlate::{differences, hamming_crosscorr, CorrelationProfile};
use crate::error::{Error, Result};
use crate::seqcore::{sub_mod, CharacteristicSet, SequenceSet};

/// Default ceiling on shift patterns (or search nodes) explored.
pub const DEFAULT_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Lemma2,
}

/// How the exhaustive route explores shift patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// All `L^(M-1)` patterns in lexicographic order.
    #[default]
    Enumerate,
    /// Backtracking on the first uncovered slot; the budget counts nodes.
    CoverSearch,
}

/// Certificate that a set is not UI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `shifts[j]` for every user; `shifts[user] = 0`. The shifted others
    /// cover `I_user`.
    Cover { user: usize, shifts: Vec<u64> },
    /// `H_{I_i I_j}(shift) = value > 2`.
    PairCorrelation { i: usize, j: usize, shift: u64, value: usize },
    /// `H_{I_{i,k,τ_k} I_j}(tau_j) = value >= 2`.
    ResidualCorrelation { i: usize, k: usize, tau_k: u64, j: usize, tau_j: u64, value: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UiVerdict {
    pub is_ui: bool,
    pub method: Method,
    pub witness: Option<Witness>,
    /// Pairwise route only: whether the difference-set phrasing of the
    /// residual clause (`d*(I_{i,k,τ}) ∩ d*(I_j) = ∅`) gave the same answer
    /// as the correlation bound on every checked tuple.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difference_form_agrees: Option<bool>,
}

impl UiVerdict {
    fn ui(method: Method) -> Self {
        UiVerdict { is_ui: true, method, witness: None, difference_form_agrees: None }
    }

    fn blocked(method: Method, witness: Witness) -> Self {
        UiVerdict { is_ui: false, method, witness: Some(witness), difference_form_agrees: None }
    }
}

fn pattern_count(period: u64, others: usize) -> u128 {
    let mut n: u128 = 1;
    for _ in 0..others {
        n = n.saturating_mul(period as u128);
    }
    n
}

/// For each other user `j` and shift `τ`, the slots of `I_i` hit by
/// `I_j + τ`, as a bitset over positions in `I_i`.
struct CoverTable {
    period: usize,
    words: usize,
    others: Vec<usize>,
    masks: Vec<Vec<u64>>,
}

impl CoverTable {
    fn new(set: &SequenceSet, i: usize) -> Self {
        let target = &set.members()[i];
        let l = set.period();
        let words = target.weight().div_ceil(64);
        let others: Vec<usize> = (0..set.len()).filter(|&j| j != i).collect();
        let masks = others
            .iter()
            .map(|&j| {
                let mut m = vec![0u64; l as usize * words];
                for (pos, &x) in target.elements().iter().enumerate() {
                    for &y in set.members()[j].elements() {
                        let tau = sub_mod(x, y, l) as usize;
                        m[tau * words + pos / 64] |= 1 << (pos % 64);
                    }
                }
                m
            })
            .collect();
        CoverTable { period: l as usize, words, others, masks }
    }

    fn mask(&self, slot: usize, tau: usize) -> &[u64] {
        &self.masks[slot][tau * self.words..(tau + 1) * self.words]
    }

    fn full(&self, weight: usize) -> Vec<u64> {
        let mut f = vec![u64::MAX; self.words];
        let rem = weight % 64;
        if rem != 0 {
            f[self.words - 1] = (1u64 << rem) - 1;
        }
        f
    }
}

fn witness_shifts(users: usize, others: &[usize], taus: &[usize]) -> Vec<u64> {
    let mut shifts = vec![0u64; users];
    for (&j, &t) in others.iter().zip(taus) {
        shifts[j] = t as u64;
    }
    shifts
}

fn enumerate_cover(set: &SequenceSet, i: usize) -> Option<Vec<u64>> {
    let table = CoverTable::new(set, i);
    let w = set.members()[i].weight();
    let full = table.full(w);
    let digits = table.others.len();
    let l = table.period;
    let words = table.words;
    if digits == 0 {
        return None;
    }
    let mut taus = vec![0usize; digits];
    // prefix[d] = OR of masks for digits 0..=d
    let mut prefix = vec![0u64; digits * words];
    let recompute = |prefix: &mut Vec<u64>, taus: &[usize], from: usize| {
        for d in from..digits {
            for k in 0..words {
                let prev = if d == 0 { 0 } else { prefix[(d - 1) * words + k] };
                prefix[d * words + k] = prev | table.mask(d, taus[d])[k];
            }
        }
    };
    recompute(&mut prefix, &taus, 0);
    loop {
        if prefix[(digits - 1) * words..].iter().zip(&full).all(|(a, b)| a == b) {
            return Some(witness_shifts(set.len(), &table.others, &taus));
        }
        // odometer increment, last digit fastest
        let mut d = digits;
        loop {
            if d == 0 {
                return None;
            }
            d -= 1;
            taus[d] += 1;
            if taus[d] < l {
                break;
            }
            taus[d] = 0;
        }
        recompute(&mut prefix, &taus, d);
    }
}

struct CoverSearch<'a> {
    table: &'a CoverTable,
    target: &'a CharacteristicSet,
    members: &'a [CharacteristicSet],
    used: Vec<bool>,
    taus: Vec<usize>,
    nodes: u128,
    budget: u128,
}

impl CoverSearch<'_> {
    fn run(&mut self, uncovered: &[u64]) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { needed: self.nodes, budget: self.budget });
        }
        let Some(word) = uncovered.iter().position(|&x| x != 0) else {
            return Ok(true);
        };
        let remaining = self.used.iter().filter(|&&u| !u).count();
        if remaining == 0 {
            return Ok(false);
        }
        let pos = word * 64 + uncovered[word].trailing_zeros() as usize;
        let x = self.target.elements()[pos];
        let l = self.target.period();
        for d in 0..self.table.others.len() {
            if self.used[d] {
                continue;
            }
            let j = self.table.others[d];
            let mut shifts: Vec<usize> =
                self.members[j].elements().iter().map(|&y| sub_mod(x, y, l) as usize).collect();
            shifts.sort_unstable();
            for tau in shifts {
                let next: Vec<u64> =
                    uncovered.iter().zip(self.table.mask(d, tau)).map(|(u, m)| u & !m).collect();
                self.used[d] = true;
                self.taus[d] = tau;
                if self.run(&next)? {
                    return Ok(true);
                }
                self.used[d] = false;
                self.taus[d] = 0;
            }
        }
        Ok(false)
    }
}

fn search_cover(set: &SequenceSet, i: usize, budget: u128) -> Result<Option<Vec<u64>>> {
    let table = CoverTable::new(set, i);
    let target = &set.members()[i];
    let full = table.full(target.weight());
    let digits = table.others.len();
    let mut search = CoverSearch {
        table: &table,
        target,
        members: set.members(),
        used: vec![false; digits],
        taus: vec![0; digits],
        nodes: 0,
        budget,
    };
    if search.run(&full)? {
        Ok(Some(witness_shifts(set.len(), &table.others, &search.taus)))
    } else {
        Ok(None)
    }
}

/// Whether user `i` is unblocked under every shift pattern of the others,
/// by raw enumeration of all `L^(M-1)` patterns.
pub fn is_unblocked_exhaustive(set: &SequenceSet, i: usize, budget: u128) -> Result<UiVerdict> {
    is_unblocked_exhaustive_with(set, i, budget, SearchStrategy::Enumerate)
}

pub fn is_unblocked_exhaustive_with(
    set: &SequenceSet,
    i: usize,
    budget: u128,
    strategy: SearchStrategy,
) -> Result<UiVerdict> {
    set.get(i)?;
    let cover = match strategy {
        SearchStrategy::Enumerate => {
            let needed = pattern_count(set.period(), set.len() - 1);
            if needed > budget {
                return Err(Error::BudgetExceeded { needed, budget });
            }
            enumerate_cover(set, i)
        }
        SearchStrategy::CoverSearch => search_cover(set, i, budget)?,
    };
    Ok(match cover {
        Some(shifts) => UiVerdict::blocked(Method::Exhaustive, Witness::Cover { user: i, shifts }),
        None => UiVerdict::ui(Method::Exhaustive),
    })
}

/// Every user checked by raw enumeration; the first blocked user (lowest
/// index) and its lexicographically first covering pattern are reported.
pub fn is_ui_exhaustive(set: &SequenceSet, budget: u128) -> Result<UiVerdict> {
    is_ui_exhaustive_with(set, budget, SearchStrategy::Enumerate)
}

pub fn is_ui_exhaustive_with(set: &SequenceSet, budget: u128, strategy: SearchStrategy) -> Result<UiVerdict> {
    set.require_users(2)?;
    if strategy == SearchStrategy::Enumerate {
        let needed = pattern_count(set.period(), set.len() - 1);
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
    }
    for i in 0..set.len() {
        let v = is_unblocked_exhaustive_with(set, i, budget, strategy)?;
        if !v.is_ui {
            return Ok(v);
        }
    }
    Ok(UiVerdict::ui(Method::Exhaustive))
}

/// Which `k` the residual clause ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lemma2Mode {
    /// `k ∈ B_i`.
    #[default]
    BestInterferers,
    /// Every `k` with `H_{I_i I_k} = 2`, whether or not it is in `B_i`.
    Strict,
}

fn require_weight_m_plus_one(set: &SequenceSet) -> Result<()> {
    let expected = set.len() + 1;
    for (index, s) in set.members().iter().enumerate() {
        if s.weight() != expected {
            return Err(Error::WeightMismatch { index, expected, got: s.weight() });
        }
    }
    Ok(())
}

/// Pairwise characterization for constant weight `M + 1`.
pub fn is_ui_lemma2(set: &SequenceSet) -> Result<UiVerdict> {
    is_ui_lemma2_with(set, Lemma2Mode::BestInterferers)
}

pub fn is_ui_lemma2_with(set: &SequenceSet, mode: Lemma2Mode) -> Result<UiVerdict> {
    set.require_users(2)?;
    require_weight_m_plus_one(set)?;
    let prof = CorrelationProfile::new(set)?;
    let m = set.len();

    for i in 0..m {
        for j in i + 1..m {
            let pair = prof.pair(i, j)?;
            if pair.value > 2 {
                let w = Witness::PairCorrelation { i, j, shift: pair.shifts[0], value: pair.value };
                return Ok(UiVerdict::blocked(Method::Lemma2, w));
            }
        }
    }

    let members = set.members();
    let l = set.period();
    let member_diffs: Vec<DiffBits> = members.iter().map(|s| DiffBits::of(s.elements(), l)).collect();
    let mut counter = ShiftCounter::new(l);
    let mut agrees = true;
    for i in 0..m {
        // A residual lies inside `I_i`, so it can only collide twice with a
        // user that already collides twice with `I_i`.
        let partners: Vec<usize> = (0..m).filter(|&j| j != i && prof.max(i, j).unwrap_or(0) >= 2).collect();
        if partners.is_empty() {
            continue;
        }
        let ks: Vec<usize> = match mode {
            Lemma2Mode::BestInterferers => prof.best_interferers(i)?,
            Lemma2Mode::Strict => (0..m).filter(|&k| k != i && prof.max(i, k).unwrap_or(0) == 2).collect(),
        };
        for k in ks {
            for &tau_k in prof.maximizing_shifts(i, k)? {
                let rest = prof.residual(i, k, tau_k)?;
                let rest_diffs = DiffBits::list(rest.elements(), l);
                for &j in partners.iter().filter(|&&j| j != k) {
                    let (value, tau_j) = counter.max_crosscorr(rest.elements(), members[j].elements());
                    let disjoint = !rest_diffs.iter().any(|&d| member_diffs[j].contains(d));
                    agrees &= disjoint == (value <= 1);
                    if value >= 2 {
                        let w = Witness::ResidualCorrelation { i, k, tau_k, j, tau_j, value };
                        let mut v = UiVerdict::blocked(Method::Lemma2, w);
                        v.difference_form_agrees = Some(agrees);
                        return Ok(v);
                    }
                }
            }
        }
    }
    let mut v = UiVerdict::ui(Method::Lemma2);
    v.difference_form_agrees = Some(agrees);
    Ok(v)
}

/// `d*(I)` as a bitset over `Z_L`.
struct DiffBits {
    words: Vec<u64>,
}

impl DiffBits {
    fn list(elements: &[u64], l: u64) -> Vec<u64> {
        let mut out = Vec::with_capacity(elements.len() * elements.len());
        for &a in elements {
            out.extend(elements.iter().filter(|&&b| b != a).map(|&b| sub_mod(a, b, l)));
        }
        out
    }

    fn of(elements: &[u64], l: u64) -> Self {
        let mut words = vec![0u64; (l as usize).div_ceil(64)];
        for d in Self::list(elements, l) {
            words[(d / 64) as usize] |= 1 << (d % 64);
        }
        DiffBits { words }
    }

    fn contains(&self, d: u64) -> bool {
        self.words[(d / 64) as usize] >> (d % 64) & 1 == 1
    }
}

/// Difference histogram over `Z_L`, reset after every use.
struct ShiftCounter {
    period: u64,
    counts: Vec<u32>,
    touched: Vec<u64>,
}

impl ShiftCounter {
    fn new(period: u64) -> Self {
        ShiftCounter { period, counts: vec![0; period as usize], touched: Vec::new() }
    }

    /// Largest `|A ∩ (B + τ)|` and the smallest `τ` attaining it.
    fn max_crosscorr(&mut self, a: &[u64], b: &[u64]) -> (usize, u64) {
        let mut best = (0u32, 0u64);
        for &x in a {
            for &y in b {
                let t = sub_mod(x, y, self.period);
                let c = &mut self.counts[t as usize];
                if *c == 0 {
                    self.touched.push(t);
                }
                *c += 1;
                if *c > best.0 || (*c == best.0 && t < best.1) {
                    best = (*c, t);
                }
            }
        }
        for t in self.touched.drain(..) {
            self.counts[t as usize] = 0;
        }
        (best.0 as usize, best.1)
    }
}

/// Residuals `I_{i,k,τ_k}` and `I_{j,l,τ_l}` sharing a nonzero difference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Proposition1Violation {
    pub i: usize,
    pub k: usize,
    pub tau_k: u64,
    pub j: usize,
    pub l: usize,
    pub tau_l: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Proposition1Report {
    pub holds: bool,
    /// Tuples checked, counting `(i, j)` and `(j, i)` once each.
    pub checked: usize,
    pub violations: Vec<Proposition1Violation>,
}

/// Disjointness of residual difference sets, a necessary condition for a
/// constant-weight `M + 1` UI set: for `i ≠ j`, `k ∈ B_i`, `τ_k ∈ T_{i,k}`,
/// `l ∈ B_j`, `τ_l ∈ T_{j,l}` with `{i,k} ≠ {j,l}`,
/// `d*(I_{i,k,τ_k}) ∩ d*(I_{j,l,τ_l}) = ∅`.
pub fn check_proposition1(set: &SequenceSet) -> Result<Proposition1Report> {
    set.require_users(2)?;
    require_weight_m_plus_one(set)?;
    let prof = CorrelationProfile::new(set)?;
    let members = set.members();
    let l = set.period();

    struct Residual {
        i: usize,
        k: usize,
        tau: u64,
        diffs: BTreeSet<u64>,
    }
    let mut residuals = Vec::new();
    for i in 0..set.len() {
        for k in prof.best_interferers(i)? {
            for &tau in prof.maximizing_shifts(i, k)? {
                let rest = members[i].difference(&members[k].shift(tau));
                let diffs = rest.map(|r| differences(r.elements(), l)).unwrap_or_default();
                residuals.push(Residual { i, k, tau, diffs });
            }
        }
    }

    let same_pair = |a: &Residual, b: &Residual| (a.i == b.i && a.k == b.k) || (a.i == b.k && a.k == b.i);

    let mut checked = 0;
    let mut violations = Vec::new();
    for (x, a) in residuals.iter().enumerate() {
        for b in &residuals[x + 1..] {
            if a.i == b.i || same_pair(a, b) {
                continue;
            }
            checked += 1;
            if !a.diffs.is_disjoint(&b.diffs) {
                violations.push(Proposition1Violation { i: a.i, k: a.k, tau_k: a.tau, j: b.i, l: b.k, tau_l: b.tau });
            }
        }
    }
    Ok(Proposition1Report { holds: violations.is_empty(), checked, violations })
}

/// True when `shifts` (one per user) makes the others cover `I_user`.
pub fn is_cover(set: &SequenceSet, user: usize, shifts: &[u64]) -> Result<bool> {
    let target = set.get(user)?;
    if shifts.len() != set.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} shifts, got {}",
            set.len(),
            shifts.len()
        )));
    }
    let covered: BTreeSet<u64> = set
        .members()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != user)
        .flat_map(|(j, s)| s.shift(shifts[j]).elements().to_vec())
        .collect();
    Ok(target.elements().iter().all(|x| covered.contains(x)))
}

/// Re-derives the violation a witness claims. `Ok(true)` means it holds.
pub fn replay_witness(set: &SequenceSet, witness: &Witness) -> Result<bool> {
    let members = set.members();
    match *witness {
        Witness::Cover { user, ref shifts } => is_cover(set, user, shifts),
        Witness::PairCorrelation { i, j, shift, value } => {
            Ok(value > 2 && hamming_crosscorr(set.get(i)?, set.get(j)?, shift)? == value)
        }
        Witness::ResidualCorrelation { i, k, tau_k, j, tau_j, value } => {
            set.get(j)?;
            if j == i || j == k {
                return Ok(false);
            }
            let prof = CorrelationProfile::new(set)?;
            if !prof.best_interferers(i)?.contains(&k) {
                return Ok(false);
            }
            let rest = prof.residual(i, k, tau_k)?;
            Ok(value >= 2 && hamming_crosscorr(&rest, &members[j], tau_j)? == value)
        }
    }
}

/// Extends fixed shifts for some users into a full cover of `I_user`,
/// giving each remaining user the shift that hits the most still-uncovered
/// slots (ties: smallest shift). `None` if the greedy pass falls short.
pub fn complete_cover(set: &SequenceSet, user: usize, fixed: &[(usize, u64)]) -> Result<Option<Vec<u64>>> {
    let target = set.get(user)?.clone();
    let l = set.period();
    let mut shifts = vec![0u64; set.len()];
    let mut assigned = vec![false; set.len()];
    assigned[user] = true;
    let mut uncovered: BTreeSet<u64> = target.elements().iter().copied().collect();
    for &(j, tau) in fixed {
        let s = set.get(j)?;
        if j == user || assigned[j] {
            return Err(Error::InvalidArgument(format!("user {j} fixed twice or is the target")));
        }
        assigned[j] = true;
        shifts[j] = tau % l;
        for x in s.shift(tau).elements() {
            uncovered.remove(x);
        }
    }
    for j in 0..set.len() {
        if assigned[j] || uncovered.is_empty() {
            continue;
        }
        let s = &set.members()[j];
        let mut best = (0usize, 0u64);
        for &x in &uncovered {
            for &y in s.elements() {
                let tau = sub_mod(x, y, l);
                let gain = s.shift(tau).elements().iter().filter(|e| uncovered.contains(e)).count();
                if gain > best.0 || (gain == best.0 && tau < best.1) {
                    best = (gain, tau);
                }
            }
        }
        shifts[j] = best.1;
        for x in s.shift(best.1).elements() {
            uncovered.remove(x);
        }
    }
    Ok(uncovered.is_empty().then_some(shifts))
}

impl Witness {
    /// Explicit covering pattern for this witness. Correlation witnesses are
    /// completed greedily, which always succeeds for constant weight `M + 1`.
    pub fn cover_pattern(&self, set: &SequenceSet) -> Result<Option<(usize, Vec<u64>)>> {
        Ok(match *self {
            Witness::Cover { user, ref shifts } => Some((user, shifts.clone())),
            Witness::PairCorrelation { i, j, shift, .. } => {
                complete_cover(set, i, &[(j, shift)])?.map(|s| (i, s))
            }
            Witness::ResidualCorrelation { i, k, tau_k, j, tau_j, .. } => {
                complete_cover(set, i, &[(k, tau_k), (j, tau_j)])?.map(|s| (i, s))
            }
        })
    }
}

/// Progression positions `(y_i, y_j)` of the coinciding slots of rows `i`
/// and `j` of a family at every shift where they coincide twice.
pub fn collided_positions(family: &CrtmFamily, i: usize, j: usize) -> Result<Vec<(u64, Vec<(u64, u64)>)>> {
    let rows = family.sequences();
    let (a, b) = (
        rows.get(i).ok_or(Error::IndexOutOfRange { index: i, len: rows.len() })?,
        rows.get(j).ok_or(Error::IndexOutOfRange { index: j, len: rows.len() })?,
    );
    let l = family.period();
    let mut out = Vec::new();
    for (tau, count) in crate::correlate::correlation_support(a, b)? {
        if count < 2 {
            continue;
        }
        let mut hits = Vec::new();
        for &x in a.elements() {
            let y = sub_mod(x, tau, l);
            if b.contains(y) {
                let yi = family.position_of(i, x).expect("slot of row i");
                let yj = family.position_of(j, y).expect("slot of row j");
                hits.push((yi, yj));
            }
        }
        out.push((tau, hits));
    }
    Ok(out)
}
