//! Hamming cross-correlation and difference-set analytics.
//!
//! `H(τ) = |I1 ∩ (I2 + τ)|` is nonzero only for `τ ∈ I1 - I2`, so the full
//! correlation profile comes from a histogram of the `w1·w2` pairwise
//! differences rather than `L` separate intersections.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::seqcore::{add_mod, mul_mod, sub_mod, CharacteristicSet, SequenceSet};

fn same_period(a: &CharacteristicSet, b: &CharacteristicSet) -> Result<u64> {
    if a.period() != b.period() {
        return Err(Error::PeriodMismatch(a.period(), b.period()));
    }
    Ok(a.period())
}

/// `H_{I1 I2}(τ) = |I1 ∩ (I2 + τ)|`.
pub fn hamming_crosscorr(a: &CharacteristicSet, b: &CharacteristicSet, tau: u64) -> Result<usize> {
    same_period(a, b)?;
    let shifted = b.shift(tau);
    let (x, y) = (a.elements(), shifted.elements());
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(n)
}

/// Maximum cross-correlation and every shift attaining it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaxCorrelation {
    pub value: usize,
    /// Ascending.
    pub shifts: Vec<u64>,
}

/// Sorted `(τ, H(τ))` for every `τ` with `H(τ) > 0`.
pub fn correlation_support(a: &CharacteristicSet, b: &CharacteristicSet) -> Result<Vec<(u64, usize)>> {
    let l = same_period(a, b)?;
    let mut diffs: Vec<u64> = Vec::with_capacity(a.weight() * b.weight());
    for &x in a.elements() {
        diffs.extend(b.elements().iter().map(|&y| sub_mod(x, y, l)));
    }
    diffs.sort_unstable();
    let mut out: Vec<(u64, usize)> = Vec::new();
    for d in diffs {
        match out.last_mut() {
            Some((t, c)) if *t == d => *c += 1,
            _ => out.push((d, 1)),
        }
    }
    Ok(out)
}

pub fn max_crosscorr(a: &CharacteristicSet, b: &CharacteristicSet) -> Result<MaxCorrelation> {
    let support = correlation_support(a, b)?;
    let value = support.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let shifts = support.iter().filter(|&&(_, c)| c == value).map(|&(t, _)| t).collect();
    Ok(MaxCorrelation { value, shifts })
}

/// Maximum cross-correlation over distinct pairs.
pub fn lambda_c(set: &SequenceSet) -> Result<usize> {
    CorrelationProfile::new(set)?.lambda_c()
}

/// Worst interferers `B_i` of user `i`.
pub fn best_interferers(set: &SequenceSet, i: usize) -> Result<Vec<usize>> {
    CorrelationProfile::new(set)?.best_interferers(i)
}

/// `I_i \ (I_k + τ)` for a maximizing shift `τ ∈ T_{i,k}`.
pub fn residual(set: &SequenceSet, i: usize, k: usize, tau: u64) -> Result<CharacteristicSet> {
    CorrelationProfile::new(set)?.residual(i, k, tau)
}

/// Pairwise correlation data of a sequence set, filled in on first use.
///
/// Cell `(i, k)` holds `H_{I_i I_k}` and `T_{i,k}`, the shifts of `I_k`
/// attaining it.
pub struct CorrelationProfile<'a> {
    set: &'a SequenceSet,
    cells: Vec<OnceLock<MaxCorrelation>>,
}

impl<'a> CorrelationProfile<'a> {
    pub fn new(set: &'a SequenceSet) -> Result<Self> {
        set.require_users(2)?;
        let m = set.len();
        Ok(CorrelationProfile { set, cells: (0..m * m).map(|_| OnceLock::new()).collect() })
    }

    pub fn set(&self) -> &SequenceSet {
        self.set
    }

    pub fn users(&self) -> usize {
        self.set.len()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.users() {
            return Err(Error::IndexOutOfRange { index: i, len: self.users() });
        }
        Ok(())
    }

    /// `H_{I_i I_k}` with its maximizing shifts.
    pub fn pair(&self, i: usize, k: usize) -> Result<&MaxCorrelation> {
        self.check(i)?;
        self.check(k)?;
        let m = self.users();
        let members = self.set.members();
        Ok(self.cells[i * m + k].get_or_init(|| {
            max_crosscorr(&members[i], &members[k]).expect("members share one period")
        }))
    }

    pub fn max(&self, i: usize, k: usize) -> Result<usize> {
        Ok(self.pair(i, k)?.value)
    }

    /// `T_{i,k}`.
    pub fn maximizing_shifts(&self, i: usize, k: usize) -> Result<&[u64]> {
        Ok(&self.pair(i, k)?.shifts)
    }

    /// Matrix of `H_{I_i I_j}`; the diagonal holds the weights.
    pub fn matrix(&self) -> Vec<Vec<usize>> {
        let m = self.users();
        (0..m).map(|i| (0..m).map(|j| self.max(i, j).expect("in range")).collect()).collect()
    }

    pub fn lambda_c(&self) -> Result<usize> {
        let m = self.users();
        let mut best = 0;
        for i in 0..m {
            for j in i + 1..m {
                best = best.max(self.max(i, j)?);
            }
        }
        Ok(best)
    }

    /// Largest `H_{I_i I_j}` over `j ≠ i`.
    pub fn max_interference(&self, i: usize) -> Result<usize> {
        self.check(i)?;
        let mut best = 0;
        for j in (0..self.users()).filter(|&j| j != i) {
            best = best.max(self.max(i, j)?);
        }
        Ok(best)
    }

    /// `B_i`: all `k ≠ i` attaining the largest `H_{I_i I_k}`.
    pub fn best_interferers(&self, i: usize) -> Result<Vec<usize>> {
        let top = self.max_interference(i)?;
        let mut out = Vec::new();
        for k in (0..self.users()).filter(|&k| k != i) {
            if self.max(i, k)? == top {
                out.push(k);
            }
        }
        Ok(out)
    }

    pub fn residual(&self, i: usize, k: usize, tau: u64) -> Result<CharacteristicSet> {
        if i == k {
            self.check(i)?;
            return Err(Error::SameUser(i));
        }
        if self.maximizing_shifts(i, k)?.binary_search(&tau).is_err() {
            return Err(Error::NotMaximizingShift { i, k, shift: tau });
        }
        let members = self.set.members();
        members[i].difference(&members[k].shift(tau)).ok_or(Error::EmptySet)
    }
}

/// Nonzero differences of a slice of residues; empty for fewer than two.
pub(crate) fn differences(elements: &[u64], period: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for &a in elements {
        for &b in elements {
            if a != b {
                out.insert(sub_mod(a, b, period));
            }
        }
    }
    out
}

/// `d*(I)`, the nonzero pairwise differences modulo `L`.
pub fn diff_set(set: &CharacteristicSet) -> Result<BTreeSet<u64>> {
    if set.weight() < 2 {
        return Err(Error::WeightTooSmall { required: 2, got: set.weight() });
    }
    Ok(differences(set.elements(), set.period()))
}

/// `|d*(I)| < 2|I| - 2`.
pub fn is_exceptional(set: &CharacteristicSet) -> Result<bool> {
    Ok(diff_set(set)?.len() < 2 * set.weight() - 2)
}

/// `I = {s, s+g, ..., s+(w-1)g}` in `Z_L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progression {
    pub start: u64,
    pub generator: u64,
}

impl Progression {
    /// Starts at 0, the form used to define equi-difference sets.
    pub fn is_anchored(&self) -> bool {
        self.start == 0
    }
}

fn progression_matches(set: &CharacteristicSet, start: u64, g: u64) -> bool {
    let l = set.period();
    let mut terms: Vec<u64> = Vec::with_capacity(set.weight());
    let mut x = start;
    for _ in 0..set.weight() {
        terms.push(x);
        x = add_mod(x, g, l);
    }
    terms.sort_unstable();
    terms == set.elements()
}

/// Detects an arithmetic progression in `Z_L`, trying every element of
/// `d*(I)` as the common difference. A progression starting at 0 is
/// preferred; among those the smallest generator is returned.
pub fn arithmetic_progression(set: &CharacteristicSet) -> Option<Progression> {
    if set.weight() == 1 {
        return Some(Progression { start: set.elements()[0], generator: 0 });
    }
    let candidates = differences(set.elements(), set.period());
    if set.contains(0) {
        if let Some(&g) = candidates.iter().find(|&&g| progression_matches(set, 0, g)) {
            return Some(Progression { start: 0, generator: g });
        }
    }
    for &g in &candidates {
        for &s in set.elements() {
            if progression_matches(set, s, g) {
                return Some(Progression { start: s, generator: g });
            }
        }
    }
    None
}

/// Generator of an equi-difference set, or of a translated progression when
/// no 0-anchored form exists.
pub fn equi_difference_generator(set: &CharacteristicSet) -> Option<u64> {
    arithmetic_progression(set).map(|p| p.generator)
}

/// `{0, g, ..., (w-1)g}` in `Z_L`.
pub fn equi_difference_set(period: u64, generator: u64, weight: usize) -> Result<CharacteristicSet> {
    CharacteristicSet::new(period, (0..weight as u64).map(|y| mul_mod(generator % period, y, period)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(l: u64, e: &[u64]) -> CharacteristicSet {
        CharacteristicSet::new(l, e.iter().copied()).unwrap()
    }

    fn four_user_set() -> SequenceSet {
        SequenceSet::new(vec![
            set(35, &[0, 10, 15, 25, 30]),
            set(35, &[0, 4, 13, 17, 26]),
            set(35, &[0, 8, 16, 24, 32]),
            set(35, &[0, 6, 12, 18, 24]),
        ])
        .unwrap()
    }

    // Brute force over every shift via explicit set intersection.
    fn brute_max(a: &CharacteristicSet, b: &CharacteristicSet) -> (usize, Vec<u64>) {
        let l = a.period();
        let values: Vec<usize> = (0..l)
            .map(|t| {
                let bs: BTreeSet<u64> = b.elements().iter().map(|y| (y + t) % l).collect();
                a.elements().iter().filter(|x| bs.contains(x)).count()
            })
            .collect();
        let max = *values.iter().max().unwrap();
        (max, (0..l).filter(|&t| values[t as usize] == max).collect())
    }

    #[test]
    fn crosscorr_examples() {
        let c = four_user_set();
        let m = c.members();
        assert_eq!(hamming_crosscorr(&m[2], &m[3], 0).unwrap(), 2);
        assert_eq!(hamming_crosscorr(&m[0], &m[0], 0).unwrap(), 5);
        for t in 0..35 {
            assert!(hamming_crosscorr(&m[0], &m[1], t).unwrap() <= 1);
        }
        let other = set(36, &[0]);
        assert_eq!(hamming_crosscorr(&m[0], &other, 0), Err(Error::PeriodMismatch(35, 36)));
        assert!(max_crosscorr(&m[0], &other).is_err());
    }

    #[test]
    fn max_crosscorr_examples() {
        let c = four_user_set();
        let m = c.members();
        assert_eq!(max_crosscorr(&m[2], &m[3]).unwrap(), MaxCorrelation { value: 2, shifts: vec![0, 8] });
        assert_eq!(max_crosscorr(&m[1], &m[3]).unwrap().value, 2);
        let own = max_crosscorr(&m[0], &m[0]).unwrap();
        assert_eq!(own.value, 5);
        assert!(own.shifts.contains(&0));
    }

    #[test]
    fn max_crosscorr_agrees_with_brute_force() {
        let c = four_user_set();
        for a in c.members() {
            for b in c.members() {
                let fast = max_crosscorr(a, b).unwrap();
                assert_eq!((fast.value, fast.shifts), brute_max(a, b));
            }
        }
    }

    #[test]
    fn four_user_set_profile() {
        let c = four_user_set();
        let prof = CorrelationProfile::new(&c).unwrap();
        assert_eq!(prof.lambda_c().unwrap(), 2);
        let h = prof.matrix();
        assert_eq!(h[0][1..], [1, 1, 1]);
        assert_eq!(h[1][2..], [1, 2]);
        assert_eq!(h[2][3], 2);
        assert_eq!(prof.best_interferers(0).unwrap(), vec![1, 2, 3]);
        assert_eq!(prof.best_interferers(1).unwrap(), vec![3]);
        assert_eq!(prof.best_interferers(2).unwrap(), vec![3]);
        assert_eq!(prof.best_interferers(3).unwrap(), vec![1, 2]);
        assert_eq!(prof.maximizing_shifts(2, 3).unwrap(), &[0, 8]);
        assert_eq!(prof.residual(2, 3, 0).unwrap(), set(35, &[8, 16, 32]));
        assert_eq!(prof.residual(2, 3, 8).unwrap(), set(35, &[0, 16, 24]));
        assert_eq!(prof.residual(2, 3, 1), Err(Error::NotMaximizingShift { i: 2, k: 3, shift: 1 }));
        assert_eq!(prof.residual(2, 2, 0), Err(Error::SameUser(2)));
        assert!(prof.best_interferers(4).is_err());
    }

    #[test]
    fn two_user_set_and_disjoint_residual() {
        let c = SequenceSet::new(vec![set(10, &[0, 1]), set(10, &[5])]).unwrap();
        assert_eq!(best_interferers(&c, 0).unwrap(), vec![1]);
        // H = 1 at every shift in {0-5, 1-5}; removing one hit leaves one slot.
        assert_eq!(residual(&c, 0, 1, 5).unwrap(), set(10, &[1]));
        let single = SequenceSet::new(vec![set(10, &[0])]).unwrap();
        assert_eq!(lambda_c(&single), Err(Error::TooFewMembers { required: 2, got: 1 }));
    }

    #[test]
    fn lambda_c_of_constructions() {
        let crtm = crate::construct::build_crtm(6).unwrap().to_sequence_set();
        assert_eq!(lambda_c(&crtm).unwrap(), 2);
        for m in [6, 8, 10] {
            assert_eq!(lambda_c(&crate::construct::build_crt(m).unwrap()).unwrap(), 1, "m = {m}");
        }
    }

    #[test]
    fn diff_set_examples() {
        let i1 = set(35, &[0, 10, 15, 25, 30]);
        assert_eq!(diff_set(&i1).unwrap().into_iter().collect::<Vec<_>>(), vec![5, 10, 15, 20, 25, 30]);
        assert!(is_exceptional(&i1).unwrap());
        assert_eq!(diff_set(&set(20, &[0, 7])).unwrap().into_iter().collect::<Vec<_>>(), vec![7, 13]);
        assert_eq!(diff_set(&set(20, &[3])), Err(Error::WeightTooSmall { required: 2, got: 1 }));
        assert!(is_exceptional(&set(20, &[0, 10])).unwrap());
        let run = set(50, &[0, 1, 2, 3, 4, 5]);
        assert_eq!(diff_set(&run).unwrap().len(), 10);
        assert!(!is_exceptional(&run).unwrap());
    }

    #[test]
    fn example3_difference_intersections() {
        let i1 = set(40, &[0, 7, 14, 21, 28, 35]);
        let i2 = set(40, &[0, 9, 18, 27, 36, 5]);
        let i3 = set(40, &[0, 17, 34, 11, 28, 5]);
        for (a, b) in [(&i1, &i2), (&i2, &i3), (&i1, &i3)] {
            assert_eq!(max_crosscorr(a, b).unwrap().value, 2);
        }
        let inter = |a: &CharacteristicSet, b: &CharacteristicSet| -> Vec<u64> {
            diff_set(a).unwrap().intersection(&diff_set(b).unwrap()).copied().collect()
        };
        assert_eq!(inter(&i1, &i2), vec![5, 35]);
        assert_eq!(inter(&i2, &i3), vec![5, 35]);
        assert_eq!(inter(&i1, &i3), vec![5, 12, 28, 35]);
    }

    #[test]
    fn generators() {
        let c = four_user_set();
        let g: Vec<_> = c.members().iter().map(|s| equi_difference_generator(s).unwrap()).collect();
        // 15, 13, 8, 6 all generate; for I_1 the smaller 15 is the first
        // match, I_2's 13 likewise.
        assert_eq!(g, vec![15, 13, 8, 6]);
        let i0 = set(77, &[0, 56, 35, 14, 70, 49, 28]);
        assert_eq!(equi_difference_generator(&i0), Some(56));
        assert_eq!(equi_difference_generator(&set(12, &[0, 1, 3])), None);
        let wrapped = arithmetic_progression(&set(12, &[0, 3, 9])).unwrap();
        assert_eq!(wrapped, Progression { start: 9, generator: 3 });
        let moved = set(40, &[3, 10, 17, 24]);
        assert_eq!(arithmetic_progression(&moved), Some(Progression { start: 3, generator: 7 }));
        assert!(!arithmetic_progression(&moved).unwrap().is_anchored());
        assert_eq!(equi_difference_set(35, 8, 5).unwrap(), c.members()[2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pair() -> impl Strategy<Value = (CharacteristicSet, CharacteristicSet)> {
            (2u64..80).prop_flat_map(|l| {
                let s = move || {
                    proptest::collection::btree_set(0..l, 1..=(l as usize).min(8))
                        .prop_map(move |e| CharacteristicSet::new(l, e).unwrap())
                };
                (s(), s())
            })
        }

        proptest! {
            #[test]
            fn histogram_matches_brute_force((a, b) in arb_pair()) {
                let fast = max_crosscorr(&a, &b).unwrap();
                prop_assert_eq!((fast.value, fast.shifts), brute_max(&a, &b));
            }

            #[test]
            fn correlation_is_symmetric_and_sums_to_product((a, b) in arb_pair()) {
                prop_assert_eq!(max_crosscorr(&a, &b).unwrap().value, max_crosscorr(&b, &a).unwrap().value);
                let total: usize = (0..a.period()).map(|t| hamming_crosscorr(&a, &b, t).unwrap()).sum();
                prop_assert_eq!(total, a.weight() * b.weight());
            }

            #[test]
            fn generated_progressions_are_detected(l in 3u64..120, g in 1u64..120, w in 2usize..8) {
                let g = g % l;
                prop_assume!(g != 0);
                if let Ok(s) = equi_difference_set(l, g, w) {
                    let found = arithmetic_progression(&s).unwrap();
                    prop_assert!(found.is_anchored());
                    prop_assert_eq!(equi_difference_set(l, found.generator, w).unwrap(), s);
                }
            }
        }
    }
}
