//! Supports (sorted feature index sets) and the combinatorics around them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::function::factorial::ln_binomial as statrs_ln_binomial;

use crate::error::{Error, Result};

/// A strictly increasing set of 0-based feature indices.
///
/// Ordering is lexicographic on the index sequence, which is the tie-break
/// used everywhere scores are equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Support(Vec<usize>);

impl Support {
    /// Builds a support from arbitrary indices, sorting them. Duplicates are
    /// rejected.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("support contains duplicate indices"));
        }
        Ok(Support(indices))
    }

    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Support(indices)
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Support(
            mask.iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        )
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn to_mask(&self, p: usize) -> Vec<bool> {
        let mut mask = vec![false; p];
        for &i in &self.0 {
            mask[i] = true;
        }
        mask
    }

    pub fn intersection_len(&self, other: &Support) -> usize {
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }

    /// Number of indices of `self` that are not in `reference`, i.e. the
    /// mistake count of `self` relative to `reference`.
    pub fn mistakes_from(&self, reference: &Support) -> usize {
        self.len() - self.intersection_len(reference)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Formats as semicolon-joined 1-based indices, e.g. `1;3;5`.
    pub fn to_one_based_string(&self) -> String {
        self.0
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_one_based_string().replace(';', ","))
    }
}

/// Parses semicolon- or comma-separated 1-based indices.
impl FromStr for Support {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Support::default());
        }
        let mut indices = Vec::new();
        for tok in s.split([';', ',']) {
            let tok = tok.trim();
            let one_based: usize = tok
                .parse()
                .map_err(|_| Error::invalid(format!("bad support index {tok:?}")))?;
            if one_based == 0 {
                return Err(Error::invalid("support indices are 1-based"));
            }
            indices.push(one_based - 1);
        }
        Support::new(indices)
    }
}

/// Exact binomial coefficient, or `None` on u128 overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Natural log of the binomial coefficient; exact when it fits in u128.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    match binomial(n, k) {
        Some(c) if c < (1u128 << 63) => (c as f64).ln(),
        _ => statrs_ln_binomial(n as u64, k as u64),
    }
}

/// Lexicographic iterator over all size-`k` subsets of `0..n`.
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Combinations { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Support;

    fn next(&mut self) -> Option<Support> {
        let cur = self.current.as_mut()?;
        let out = Support::from_sorted(cur.clone());
        let k = cur.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if cur[i] < self.n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Uniform size-`k` subset of `0..n` by Floyd's algorithm.
pub fn sample_uniform_support<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Support {
    assert!(k <= n);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in n - k..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    Support::from_sorted(chosen)
}

/// Uniform support with exactly `k` mistakes relative to `center`: drop `k`
/// members of `center` and add `k` non-members, each choice uniform.
pub fn sample_at_mistakes<R: Rng + ?Sized>(
    center: &Support,
    p: usize,
    k: usize,
    rng: &mut R,
) -> Support {
    let s = center.len();
    assert!(k <= s && k <= p - s);
    let outside: Vec<usize> = (0..p).filter(|i| !center.contains(*i)).collect();
    let drop = sample_uniform_support(s, k, rng);
    let add = sample_uniform_support(outside.len(), k, rng);
    let mut indices: Vec<usize> = center
        .indices()
        .iter()
        .enumerate()
        .filter(|(pos, _)| !drop.contains(*pos))
        .map(|(_, &i)| i)
        .collect();
    indices.extend(add.indices().iter().map(|&pos| outside[pos]));
    indices.sort_unstable();
    Support::from_sorted(indices)
}

/// All supports obtained from `center` by exchanging one member for one
/// non-member, in lexicographic order.
pub fn one_swap_neighbors(center: &Support, p: usize) -> Vec<Support> {
    let mut out = Vec::with_capacity(center.len() * (p - center.len()));
    for &drop in center.indices() {
        for add in (0..p).filter(|i| !center.contains(*i)) {
            let mut idx: Vec<usize> = center
                .indices()
                .iter()
                .copied()
                .filter(|&i| i != drop)
                .collect();
            idx.push(add);
            idx.sort_unstable();
            out.push(Support::from_sorted(idx));
        }
    }
    out.sort();
    out
}
