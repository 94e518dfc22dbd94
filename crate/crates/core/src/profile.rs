//! Profile decomposition of the sample space: the subset of center items a
//! list shares with the center determines everything about the list except
//! how those shared items interleave.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{TopKGmm, TopKList, Universe};

/// Default ceiling on the number of feasible profiles a distribution may hold.
pub const DEFAULT_PROFILE_CAP: u64 = 1 << 26;

/// Largest k the bitmask representation supports.
const MAX_K: usize = 128;

/// A subset of center ranks `1..=k`, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Profile {
    mask: u128,
    k: u16,
}

impl Profile {
    pub fn from_ranks<I: IntoIterator<Item = usize>>(ranks: I, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!(
                "profile needs 1 <= k <= {MAX_K}, got {k}"
            )));
        }
        let mut mask = 0u128;
        for r in ranks {
            if r < 1 || r > k {
                return Err(Error::InvalidParameter(format!(
                    "center rank {r} outside 1..={k}"
                )));
            }
            mask |= 1 << (r - 1);
        }
        Ok(Profile { mask, k: k as u16 })
    }

    pub fn empty(k: usize) -> Result<Self> {
        Profile::from_ranks(std::iter::empty(), k)
    }

    pub fn full(k: usize) -> Result<Self> {
        Profile::from_ranks(1..=k, k)
    }

    pub(crate) fn from_mask(mask: u128, k: usize) -> Self {
        Profile { mask, k: k as u16 }
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// Number of shared center items.
    pub fn ell(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn contains(&self, rank: usize) -> bool {
        rank >= 1 && rank <= self.k() && (self.mask >> (rank - 1)) & 1 == 1
    }

    /// Member ranks in ascending order.
    pub fn members(&self) -> Vec<usize> {
        (1..=self.k()).filter(|&r| self.contains(r)).collect()
    }

    pub(crate) fn mask(&self) -> u128 {
        self.mask
    }

    /// A profile is feasible when enough non-center items exist to fill the
    /// remaining positions.
    pub fn is_feasible(&self, universe: Universe) -> bool {
        let k = self.k();
        k - self.ell() <= universe.size() as usize - k
    }
}

/// The set of center ranks whose items appear in `tau`.
pub fn profile_of(tau: &TopKList, center: &TopKList) -> Result<Profile> {
    if tau.universe() != center.universe() {
        return Err(Error::UniverseMismatch);
    }
    let ranks = center
        .items()
        .iter()
        .enumerate()
        .filter(|(_, &c)| tau.contains(c))
        .map(|(idx, _)| idx + 1);
    Profile::from_ranks(ranks, center.k())
}

fn check_feasible(s: &Profile, model: &TopKGmm) -> Result<()> {
    if s.k() != model.k() || !s.is_feasible(model.universe()) {
        return Err(Error::InfeasibleProfile);
    }
    Ok(())
}

/// Within-profile constant part of the weighted displacement: every list with
/// profile `s` has displacement `profile_f(s) + sum_{j in s} w_j * I_j`.
///
/// Single descending pass over the center ranks, O(k).
pub fn profile_f(s: &Profile, model: &TopKGmm) -> Result<f64> {
    check_feasible(s, model)?;
    let k = model.k();
    let u = model.universe().size() as usize;
    let ell = s.ell();
    let missing = (k - ell) as f64;
    let base_p = (u - k) as f64 - missing;
    let q_pairs = missing * (missing - 1.0) / 2.0;

    let mut total = model.w0() * model.p() * q_pairs.max(0.0);
    let mut x = 0.0; // members seen so far (ranks above j)
    let mut y = 0.0; // non-members seen so far
    for j in (1..=k).rev() {
        if s.contains(j) {
            x += 1.0;
        } else {
            let i_j = missing + x;
            let p_j = base_p + y;
            total += model.weight_of_rank(j) * (i_j + model.p() * p_j);
            y += 1.0;
        }
    }
    Ok(total)
}

fn ln_binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return f64::NEG_INFINITY;
    }
    (1..=r)
        .map(|t| (((n - r + t) as f64) / t as f64).ln())
        .sum()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|t| (t as f64).ln()).sum()
}

/// Geometric partial sum `sum_{r=0}^{terms} exp(-beta * w * r)`.
fn geometric_sum(beta_w: f64, terms: usize) -> f64 {
    let q = (-beta_w).exp();
    let mut acc = 1.0;
    let mut pow = 1.0;
    for _ in 0..terms {
        pow *= q;
        acc += pow;
    }
    acc
}

/// Within-profile normalizer: the summed relative mass of all lists sharing
/// profile `s`, so that `exp(-beta * f(S)) * Z(S)` is proportional to the
/// total model mass of the profile.
pub fn profile_z(s: &Profile, model: &TopKGmm) -> Result<f64> {
    check_feasible(s, model)?;
    let k = model.k();
    let u = model.universe().size() as usize;
    let ell = s.ell();
    let missing = k - ell;

    let mut z = 1.0;
    for t in 1..=missing {
        z *= ((u - k - missing + t) as f64) / t as f64; // binomial factor
    }
    for t in 2..=missing {
        z *= t as f64; // (k - ell)!
    }
    for (idx, rank) in s.members().into_iter().enumerate() {
        z *= geometric_sum(model.beta() * model.weight_of_rank(rank), k - (idx + 1));
    }
    Ok(z)
}

/// `ln(exp(-beta f(S)) * Z(S))`, the log-space weight used by the
/// distribution builder. Safe for parameters where the plain product would
/// overflow or underflow.
fn ln_profile_weight(s: &Profile, model: &TopKGmm) -> Result<f64> {
    let k = model.k();
    let u = model.universe().size() as usize;
    let ell = s.ell();
    let missing = k - ell;
    let mut ln_w = -model.beta() * profile_f(s, model)?;
    ln_w += ln_binomial(u - k, missing) + ln_factorial(missing);
    for (idx, rank) in s.members().into_iter().enumerate() {
        ln_w += geometric_sum(model.beta() * model.weight_of_rank(rank), k - (idx + 1)).ln();
    }
    Ok(ln_w)
}

/// Normalized distribution over all feasible profiles, with prefix sums for
/// O(log) sampling. Immutable and shareable once built.
#[derive(Debug, Clone)]
pub struct ProfileDistribution {
    k: usize,
    masks: Vec<u128>,
    /// Shifted-exponent weights: `exp(ln_w - max_ln_w)`.
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
    index: HashMap<u128, usize>,
}

fn count_feasible(k: usize, gamma: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for t in 0..=gamma {
        total = total.saturating_add(binom);
        binom = binom
            .saturating_mul((k - t) as u128)
            .checked_div((t + 1) as u128)
            .unwrap_or(u128::MAX);
    }
    total
}

/// Next k-bit mask with the same popcount (Gosper's hack).
fn next_same_popcount(v: u128) -> u128 {
    let c = v & v.wrapping_neg();
    let r = v + c;
    (((r ^ v) >> 2) / c) | r
}

pub fn profile_distribution(model: &TopKGmm) -> Result<ProfileDistribution> {
    profile_distribution_with_cap(model, DEFAULT_PROFILE_CAP)
}

pub fn profile_distribution_with_cap(
    model: &TopKGmm,
    cap: u64,
) -> Result<ProfileDistribution> {
    let k = model.k();
    let u = model.universe().size() as usize;
    if k > MAX_K {
        return Err(Error::InvalidParameter(format!(
            "k = {k} above the supported profile limit {MAX_K}"
        )));
    }
    let gamma = k.min(u - k);
    let count = count_feasible(k, gamma);
    if count > cap as u128 {
        return Err(Error::ProfileSpaceTooLarge { count, cap });
    }

    // Enumerate by number of missing center items, smallest first, masks
    // ascending within each class. The order is part of the contract: it
    // fixes the reduction order and the sampling prefix sums.
    let full: u128 = if k == 128 { u128::MAX } else { (1u128 << k) - 1 };
    let mut masks = Vec::with_capacity(count as usize);
    let mut ln_weights = Vec::with_capacity(count as usize);
    for missing in 0..=gamma {
        let mut comp: u128 = if missing == 0 { 0 } else { (1u128 << missing) - 1 };
        loop {
            let mask = full ^ comp;
            let profile = Profile::from_mask(mask, k);
            ln_weights.push(ln_profile_weight(&profile, model)?);
            masks.push(mask);
            if missing == 0 {
                break;
            }
            comp = next_same_popcount(comp);
            if comp > full {
                break;
            }
        }
    }

    let max_ln = ln_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = ln_weights.iter().map(|lw| (lw - max_ln).exp()).collect();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let index = masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    Ok(ProfileDistribution {
        k,
        masks,
        weights,
        cumulative,
        total: acc,
        index,
    })
}

impl ProfileDistribution {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn profile_at(&self, idx: usize) -> Profile {
        Profile::from_mask(self.masks[idx], self.k)
    }

    pub fn prob_at(&self, idx: usize) -> f64 {
        self.weights[idx] / self.total
    }

    /// Probability of a profile; zero for profiles not in the support.
    pub fn prob_of(&self, s: &Profile) -> f64 {
        self.index
            .get(&s.mask())
            .map(|&i| self.prob_at(i))
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Profile, f64)> + '_ {
        (0..self.len()).map(|i| (self.profile_at(i), self.prob_at(i)))
    }
}

/// Draws a profile with probability proportional to its weight, by binary
/// search on the prefix-sum table.
pub fn sample_profile<R: Rng + ?Sized>(dist: &ProfileDistribution, rng: &mut R) -> Profile {
    let r = rng.random::<f64>() * dist.total;
    let idx = dist
        .cumulative
        .partition_point(|&c| c <= r)
        .min(dist.len() - 1);
    dist.profile_at(idx)
}
