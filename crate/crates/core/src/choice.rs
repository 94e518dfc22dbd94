//! Choice semantics over assortments: the deterministic choice function,
//! exact choice probabilities by a per-profile dynamic program, a brute-force
//! enumeration oracle, and mixtures.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;

use crate::enumerate::exact_pmf_with_cap;
use crate::error::{Error, Result};
use crate::profile::{profile_distribution, Profile, ProfileDistribution};
use crate::types::{ItemId, TopKGmm, TopKList, Universe};

/// An offered subset of purchasable items. The no-purchase option is always
/// implicitly available: choices range over `A + {0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assortment {
    items: Vec<ItemId>,
    universe: Universe,
}

impl Assortment {
    /// Builds an assortment; items must be distinct, non-null, and in range.
    /// An empty assortment is legal (only the no-purchase option remains).
    pub fn new(mut items: Vec<ItemId>, universe: Universe) -> Result<Self> {
        if !universe.has_null() {
            return Err(Error::InvalidParameter(
                "assortments need a universe with a no-purchase option".into(),
            ));
        }
        items.sort_unstable();
        for pair in items.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateItem(pair[0]));
            }
        }
        for &id in &items {
            if id == 0 {
                return Err(Error::InvalidParameter(
                    "the no-purchase option cannot be offered explicitly".into(),
                ));
            }
            if !universe.contains(id) {
                return Err(Error::ItemOutOfRange {
                    id,
                    u: universe.size(),
                });
            }
        }
        Ok(Assortment { items, universe })
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn size(&self) -> usize {
        self.items.len()
    }

    /// `A + {0}` in ascending id order (0 first).
    pub fn members_with_null(&self) -> Vec<ItemId> {
        let mut m = Vec::with_capacity(self.items.len() + 1);
        m.push(0);
        m.extend_from_slice(&self.items);
        m
    }
}

/// Selection probabilities over the members of an assortment plus the
/// no-purchase option, keyed by item id in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDistribution {
    probs: Vec<(ItemId, f64)>,
}

impl ChoiceDistribution {
    /// Builds from (id, probability) pairs sorted by id.
    pub fn from_sorted(probs: Vec<(ItemId, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (idx, &(id, p)) in probs.iter().enumerate() {
            if idx > 0 && probs[idx - 1].0 >= id {
                return Err(Error::InvalidParameter(
                    "choice distribution keys must be strictly increasing".into(),
                ));
            }
            if !(p >= -1e-12 && p <= 1.0 + 1e-9) {
                return Err(Error::InvalidParameter(format!(
                    "probability {p} for item {id} outside [0, 1]"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "choice distribution sums to {total}, not 1"
            )));
        }
        Ok(ChoiceDistribution { probs })
    }

    pub fn entries(&self) -> &[(ItemId, f64)] {
        &self.probs
    }

    /// Probability of `id`; zero for ids outside the support.
    pub fn prob(&self, id: ItemId) -> f64 {
        self.probs
            .binary_search_by_key(&id, |&(x, _)| x)
            .map(|i| self.probs[i].1)
            .unwrap_or(0.0)
    }

    /// One `item probability` line per member, sorted by item id.
    pub fn write_lines<W: Write>(&self, out: &mut W) -> Result<()> {
        for &(id, p) in &self.probs {
            writeln!(out, "{id} {p}")?;
        }
        Ok(())
    }
}

/// One observed decision: the offered assortment and the option taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceObservation {
    pub assortment: Assortment,
    pub chosen: ItemId,
}

impl ChoiceObservation {
    pub fn new(assortment: Assortment, chosen: ItemId) -> Result<Self> {
        if chosen != 0 && !assortment.items().contains(&chosen) {
            return Err(Error::ChoiceOutsideAssortment(chosen));
        }
        Ok(ChoiceObservation { assortment, chosen })
    }
}

/// The member of `A + {0}` ranked highest by `tau`; when `tau` ranks none of
/// them, a uniform draw over `A + {0}`.
pub fn choice<R: Rng + ?Sized>(tau: &TopKList, a: &Assortment, rng: &mut R) -> Result<ItemId> {
    if tau.universe() != a.universe() {
        return Err(Error::UniverseMismatch);
    }
    let members = a.members_with_null();
    let mut best: Option<(usize, ItemId)> = None;
    for &m in &members {
        if let Some(pos) = tau.position_of(m) {
            if best.map(|(bp, _)| pos < bp).unwrap_or(true) {
                best = Some((pos, m));
            }
        }
    }
    Ok(match best {
        Some((_, id)) => id,
        None => members[rng.random_range(0..members.len())],
    })
}

/// Filler-eligible members of `A + {0}`: those that are not center items and
/// can therefore only enter a list as fillers.
fn filler_eligible_members(model: &TopKGmm, a: &Assortment) -> Vec<ItemId> {
    a.members_with_null()
        .into_iter()
        .filter(|&m| model.center_rank_of(m).is_none())
        .collect()
}

/// Probability that no filler-eligible member is drawn among `g` uniform
/// fillers from a pool of `m` non-center items.
fn avoid_all_probability(m: usize, eligible: usize, g: usize) -> f64 {
    let mut p = 1.0;
    for t in 0..g {
        let num = (m as f64 - eligible as f64 - t as f64).max(0.0);
        p *= num / (m - t) as f64;
    }
    p
}

/// Per-member probability that a list with profile `s` misses all of
/// `A + {0}` and the uniform tie-break picks that member.
///
/// Zero as soon as the profile shares an item with `A + {0}`; otherwise only
/// the non-center members of `A + {0}` can be hit by the filler draw.
pub fn pi_bar(s: &Profile, a: &Assortment, model: &TopKGmm) -> Result<f64> {
    if a.universe() != model.universe() {
        return Err(Error::UniverseMismatch);
    }
    if s.k() != model.k() || !s.is_feasible(model.universe()) {
        return Err(Error::InfeasibleProfile);
    }
    let shares_item = a
        .members_with_null()
        .iter()
        .any(|&x| model.center_rank_of(x).map(|r| s.contains(r)).unwrap_or(false));
    if shares_item {
        return Ok(0.0);
    }
    let m = model.universe().size() as usize - model.k();
    let eligible = filler_eligible_members(model, a).len();
    let g = model.k() - s.ell();
    Ok(avoid_all_probability(m, eligible, g) / (a.size() + 1) as f64)
}

/// Insertion pmf of one repeated-insertion step: positions `0..=len` weighted
/// by `exp(-beta * w * x)`, returned with its cumulative sums.
fn insertion_pmf(beta_w: f64, len: usize) -> (Vec<f64>, Vec<f64>) {
    let q = (-beta_w).exp();
    let mut pmf = Vec::with_capacity(len + 1);
    let mut pow = 1.0;
    let mut total = 0.0;
    for _ in 0..=len {
        pmf.push(pow);
        total += pow;
        pow *= q;
    }
    let mut cdf = Vec::with_capacity(len + 1);
    let mut acc = 0.0;
    for v in &mut pmf {
        *v /= total;
        acc += *v;
        cdf.push(acc);
    }
    (pmf, cdf)
}

/// Case-(ii) winner probabilities for one profile: for each member of
/// `A + {0}`, the probability that a list with profile `s` ranks it above
/// every other member. Also returns the probability that the list misses
/// `A + {0}` entirely.
fn profile_winner_probs(
    model: &TopKGmm,
    a: &Assortment,
    members: &[ItemId],
    s: &Profile,
) -> (Vec<f64>, f64) {
    let k = model.k();
    let u = model.universe().size() as usize;
    let ell = s.ell();
    let g = k - ell;
    let m = u - k;

    // Candidates that can ever appear in the list: filler-eligible members
    // plus shared center members.
    let mut cand_ids: Vec<ItemId> = Vec::new();
    for &x in members {
        match model.center_rank_of(x) {
            None => cand_ids.push(x),
            Some(r) if s.contains(r) => cand_ids.push(x),
            Some(_) => {}
        }
    }
    let cand_of: HashMap<ItemId, usize> =
        cand_ids.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let n_cand = cand_ids.len();
    let eligible = cand_ids
        .iter()
        .filter(|&&x| model.center_rank_of(x).is_none())
        .count();

    // pi[c][j-1]: c is the best-ranked member so far and sits at position j.
    let mut pi = vec![vec![0.0f64; k]; n_cand];
    let mut none = avoid_all_probability(m, eligible, g);
    if eligible > 0 {
        let mut prefix = 1.0;
        for j in 1..=g {
            let val = prefix / (m - (j - 1)) as f64;
            for (c, &id) in cand_ids.iter().enumerate() {
                if model.center_rank_of(id).is_none() {
                    pi[c][j - 1] = val;
                }
            }
            prefix *= ((m - eligible) as f64 - (j - 1) as f64).max(0.0) / (m - (j - 1)) as f64;
        }
    }

    // Insert shared center items lowest priority first, mirroring the
    // sampler's loop.
    let ranks_desc: Vec<usize> = s.members().into_iter().rev().collect();
    for (step, &rank) in ranks_desc.iter().enumerate() {
        let len = g + step; // list length before this insertion
        let item = model.center().items()[rank - 1];
        let (ins, cdf) = insertion_pmf(model.beta() * model.weight_of_rank(rank), len);
        let pr_le = |t: i64| -> f64 {
            if t < 0 {
                0.0
            } else if t as usize >= len {
                1.0
            } else {
                cdf[t as usize]
            }
        };

        let mut next = vec![vec![0.0f64; k]; n_cand];
        if let Some(&c_new) = cand_of.get(&item) {
            // The inserted item is itself a choice option: it wins whenever it
            // lands above the previous winner (or when there was none).
            let mut col_tail = vec![0.0f64; len + 2];
            for j in (1..=len).rev() {
                let col: f64 = (0..n_cand).map(|c| pi[c][j - 1]).sum();
                col_tail[j] = col_tail[j + 1] + col;
            }
            for j in 1..=len + 1 {
                next[c_new][j - 1] = ins[j - 1] * (none + col_tail.get(j).copied().unwrap_or(0.0));
            }
            for c in 0..n_cand {
                if c == c_new {
                    continue;
                }
                for j in 1..=len {
                    next[c][j - 1] += pi[c][j - 1] * (1.0 - pr_le(j as i64 - 1));
                }
            }
            none = 0.0;
        } else {
            // Not a choice option: the winner keeps its position when the new
            // item lands below it, and shifts down one slot otherwise.
            for c in 0..n_cand {
                for j in 1..=len + 1 {
                    let stay = if j <= len {
                        pi[c][j - 1] * (1.0 - pr_le(j as i64 - 1))
                    } else {
                        0.0
                    };
                    let shifted = if j >= 2 {
                        pi[c][j - 2] * pr_le(j as i64 - 2)
                    } else {
                        0.0
                    };
                    next[c][j - 1] = stay + shifted;
                }
            }
        }
        pi = next;
    }

    let mut winner = vec![0.0f64; members.len()];
    for (idx, &x) in members.iter().enumerate() {
        if let Some(&c) = cand_of.get(&x) {
            winner[idx] = pi[c].iter().sum();
        }
    }
    debug_assert!(
        (winner.iter().sum::<f64>() + none - 1.0).abs() < 1e-9,
        "per-profile winner mass plus miss mass must be 1"
    );
    (winner, none)
}

/// Exact choice probabilities under the model, by dynamic programming over
/// profiles. Equals [`choice_prob_bruteforce`] on every instance small enough
/// to enumerate.
pub fn dypchip(model: &TopKGmm, a: &Assortment) -> Result<ChoiceDistribution> {
    let dist = profile_distribution(model)?;
    dypchip_precomputed(model, &dist, a)
}

/// [`dypchip`] against a profile distribution that was computed once and is
/// being reused across assortments.
pub fn dypchip_precomputed(
    model: &TopKGmm,
    dist: &ProfileDistribution,
    a: &Assortment,
) -> Result<ChoiceDistribution> {
    if a.universe() != model.universe() {
        return Err(Error::UniverseMismatch);
    }
    let members = a.members_with_null();
    let tie = 1.0 / members.len() as f64;
    let mut totals = vec![0.0f64; members.len()];
    for (s, pr_s) in dist.iter() {
        let (winner, none) = profile_winner_probs(model, a, &members, &s);
        debug_assert!({
            let closed = pi_bar(&s, a, model)?;
            (closed - none * tie).abs() < 1e-12
        });
        for (idx, w) in winner.iter().enumerate() {
            totals[idx] += pr_s * (w + none * tie);
        }
    }
    ChoiceDistribution::from_sorted(members.into_iter().zip(totals).collect())
}

/// Choice probabilities by direct summation over every list in the universe:
/// the enumeration oracle for [`dypchip`].
pub fn choice_prob_bruteforce(model: &TopKGmm, a: &Assortment) -> Result<ChoiceDistribution> {
    choice_prob_bruteforce_with_cap(model, a, crate::enumerate::DEFAULT_ENUMERATION_CAP)
}

pub fn choice_prob_bruteforce_with_cap(
    model: &TopKGmm,
    a: &Assortment,
    cap: u64,
) -> Result<ChoiceDistribution> {
    if a.universe() != model.universe() {
        return Err(Error::UniverseMismatch);
    }
    let pmf = exact_pmf_with_cap(model, cap)?;
    let members = a.members_with_null();
    let tie = 1.0 / members.len() as f64;
    let mut totals = vec![0.0f64; members.len()];
    for (tau, prob) in pmf.entries() {
        let mut best: Option<(usize, usize)> = None;
        for (idx, &m) in members.iter().enumerate() {
            if let Some(pos) = tau.position_of(m) {
                if best.map(|(bp, _)| pos < bp).unwrap_or(true) {
                    best = Some((pos, idx));
                }
            }
        }
        match best {
            Some((_, idx)) => totals[idx] += prob,
            None => {
                for t in totals.iter_mut() {
                    *t += prob * tie;
                }
            }
        }
    }
    ChoiceDistribution::from_sorted(members.into_iter().zip(totals).collect())
}

/// Convex combination of single-center models sharing one universe.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    components: Vec<(TopKGmm, f64)>,
}

impl MixtureModel {
    pub fn new(components: Vec<(TopKGmm, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs components".into()));
        }
        let universe = components[0].0.universe();
        let mut total = 0.0;
        for (model, alpha) in &components {
            if model.universe() != universe {
                return Err(Error::UniverseMismatch);
            }
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "mixture weight {alpha} outside (0, 1]"
                )));
            }
            total += alpha;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(MixtureModel { components })
    }

    pub fn components(&self) -> &[(TopKGmm, f64)] {
        &self.components
    }
}

/// Choice probabilities of a mixture: the pointwise convex combination of its
/// components' probabilities.
pub fn mixture_choice_prob(mix: &MixtureModel, a: &Assortment) -> Result<ChoiceDistribution> {
    let members = a.members_with_null();
    let mut totals = vec![0.0f64; members.len()];
    for (model, alpha) in mix.components() {
        let dist = dypchip(model, a)?;
        for (idx, &m) in members.iter().enumerate() {
            totals[idx] += alpha * dist.prob(m);
        }
    }
    ChoiceDistribution::from_sorted(members.into_iter().zip(totals).collect())
}
