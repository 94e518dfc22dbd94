//! Core domain types: universes, top-k lists, the weighted model, and the
//! inversion-vector decomposition of disagreements against a center.

use crate::error::{Error, Result};

/// Item identifier. Ids are dense integers `0..u`; id 0 denotes the
/// no-purchase option when the universe carries one.
pub type ItemId = u32;

/// The ground set the lists are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Universe {
    u: u32,
    has_null: bool,
}

impl Universe {
    /// Universe of `u` ordinary items, no reserved no-purchase option.
    pub fn plain(u: u32) -> Result<Self> {
        if u < 2 {
            return Err(Error::InvalidParameter(format!(
                "universe needs at least 2 items, got {u}"
            )));
        }
        Ok(Universe { u, has_null: false })
    }

    /// Universe of `u` purchase options where id 0 is the no-purchase option.
    pub fn with_null(u: u32) -> Result<Self> {
        if u < 2 {
            return Err(Error::InvalidParameter(format!(
                "universe needs at least 2 items, got {u}"
            )));
        }
        Ok(Universe { u, has_null: true })
    }

    /// Total number of distinct options, including the no-purchase option.
    pub fn size(&self) -> u32 {
        self.u
    }

    pub fn has_null(&self) -> bool {
        self.has_null
    }

    pub fn contains(&self, id: ItemId) -> bool {
        id < self.u
    }

    /// Ids of options a seller can actually offer (excludes the no-purchase
    /// option when present).
    pub fn purchasable(&self) -> impl Iterator<Item = ItemId> {
        let start = if self.has_null { 1 } else { 0 };
        start..self.u
    }
}

/// A strict ordering of `k` distinct items; everything else is incomparable
/// below it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopKList {
    items: Vec<ItemId>,
    universe: Universe,
}

impl TopKList {
    /// Validates and builds a top-k list.
    pub fn new(items: Vec<ItemId>, universe: Universe) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyList);
        }
        if items.len() > universe.size() as usize {
            return Err(Error::KExceedsUniverse {
                k: items.len(),
                u: universe.size(),
            });
        }
        let mut seen = vec![false; universe.size() as usize];
        for &id in &items {
            if !universe.contains(id) {
                return Err(Error::ItemOutOfRange {
                    id,
                    u: universe.size(),
                });
            }
            if seen[id as usize] {
                return Err(Error::DuplicateItem(id));
            }
            seen[id as usize] = true;
        }
        Ok(TopKList { items, universe })
    }

    /// Identity list `start, start+1, ..., start+k-1`, the conventional center.
    pub fn identity(k: usize, universe: Universe) -> Result<Self> {
        let start = if universe.has_null() { 1 } else { 0 };
        let items: Vec<ItemId> = (start..start + k as u32).collect();
        TopKList::new(items, universe)
    }

    pub(crate) fn new_unchecked(items: Vec<ItemId>, universe: Universe) -> Self {
        debug_assert!(TopKList::new(items.clone(), universe).is_ok());
        TopKList { items, universe }
    }

    pub fn k(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    /// 0-based position of `id`, or `None` when it is ranked below the top-k.
    pub fn position_of(&self, id: ItemId) -> Option<usize> {
        self.items.iter().position(|&x| x == id)
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.items.contains(&id)
    }
}

/// Validated construction of a top-k list; the canonical entry point.
pub fn validate_topk_list(items: &[ItemId], universe: Universe) -> Result<TopKList> {
    TopKList::new(items.to_vec(), universe)
}

/// Generalized Mallows model over top-k lists: mass decays exponentially in
/// the weighted disagreement against a center list.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKGmm {
    center: TopKList,
    beta: f64,
    p: f64,
    /// `w[0]` charges pairs of non-center items; `w[i]` charges the item at
    /// center rank `i`.
    w: Vec<f64>,
    /// Center items with their 1-based ranks, sorted by item id.
    center_sorted: Vec<(ItemId, u16)>,
}

impl TopKGmm {
    pub fn new(center: TopKList, beta: f64, p: f64, w: Vec<f64>) -> Result<Self> {
        let k = center.k();
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be > 0, got {p}")));
        }
        if w.len() != k + 1 {
            return Err(Error::InvalidParameter(format!(
                "weight vector must have length k+1 = {}, got {}",
                k + 1,
                w.len()
            )));
        }
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("weights must be non-negative".into()));
        }
        let mut center_sorted: Vec<(ItemId, u16)> = center
            .items()
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, (i + 1) as u16))
            .collect();
        center_sorted.sort_unstable();
        Ok(TopKGmm {
            center,
            beta,
            p,
            w,
            center_sorted,
        })
    }

    /// Model with all weights equal to one.
    pub fn unweighted(center: TopKList, beta: f64, p: f64) -> Result<Self> {
        let k = center.k();
        TopKGmm::new(center, beta, p, vec![1.0; k + 1])
    }

    pub fn center(&self) -> &TopKList {
        &self.center
    }

    pub fn universe(&self) -> Universe {
        self.center.universe()
    }

    pub fn k(&self) -> usize {
        self.center.k()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn w0(&self) -> f64 {
        self.w[0]
    }

    /// Weight of the item at center rank `rank` (1-based).
    pub fn weight_of_rank(&self, rank: usize) -> f64 {
        self.w[rank]
    }

    /// 1-based center rank of `id`, or `None` for non-center items.
    pub fn center_rank_of(&self, id: ItemId) -> Option<usize> {
        self.center_sorted
            .binary_search_by_key(&id, |&(x, _)| x)
            .ok()
            .map(|i| self.center_sorted[i].1 as usize)
    }

    /// Center item ids in ascending order.
    pub fn center_ids_sorted(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.center_sorted.iter().map(|&(id, _)| id)
    }
}

/// Disagreement decomposition of a list against a center: order flips charged
/// to ranked center items (`i`), comparable-vs-incomparable pairs charged to
/// ranked center items (`p`), and the pair count among non-center items (`q`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InversionVectors {
    /// `i[r-1]` = inversions charged to the item at center rank `r`.
    pub i: Vec<u32>,
    /// `p[r-1]` = incomparable lower-priority partners of the item at center
    /// rank `r`, counted over the whole universe.
    pub p: Vec<u32>,
    /// Number of pairs of non-center items ranked by the list.
    pub q: u64,
    /// Number of center items the list shares with the center.
    pub ell: usize,
}

/// Computes the inversion vectors of `tau` against `center`.
///
/// Priority order: center items by rank, then all non-center items as one
/// incomparable class. `i` counts lower-priority items that `tau` ranks above
/// a center item; `p` counts lower-priority items that join a center item in
/// the unranked tail.
pub fn inversion_vectors(tau: &TopKList, center: &TopKList) -> Result<InversionVectors> {
    if tau.universe() != center.universe() {
        return Err(Error::UniverseMismatch);
    }
    let u = tau.universe().size() as usize;
    let k = center.k();
    // rank[x] = 1-based center rank, or k+1 for non-center items.
    let mut rank = vec![(k + 1) as u32; u];
    for (idx, &c) in center.items().iter().enumerate() {
        rank[c as usize] = (idx + 1) as u32;
    }
    let mut in_tau = vec![false; u];
    for &x in tau.items() {
        in_tau[x as usize] = true;
    }

    let mut i_vec = vec![0u32; k];
    let mut p_vec = vec![0u32; k];
    let mut ell = 0usize;
    let non_center_in_tau = tau
        .items()
        .iter()
        .filter(|&&x| rank[x as usize] as usize == k + 1)
        .count() as u32;

    for (idx, &c) in center.items().iter().enumerate() {
        let r = (idx + 1) as u32;
        if let Some(pos) = tau.position_of(c) {
            ell += 1;
            // Lower-priority items ranked above c by tau.
            i_vec[idx] = tau.items()[..pos]
                .iter()
                .filter(|&&x| rank[x as usize] > r)
                .count() as u32;
        } else {
            // c is unranked: every tau item of lower priority inverts it.
            let s_below = center.items()[idx + 1..]
                .iter()
                .filter(|&&x| in_tau[x as usize])
                .count() as u32;
            i_vec[idx] = s_below + non_center_in_tau;
            // Lower-priority items sharing the unranked tail with c.
            let center_below_unranked = center.items()[idx + 1..]
                .iter()
                .filter(|&&x| !in_tau[x as usize])
                .count() as u32;
            let non_center_unranked = (u as u32 - k as u32) - non_center_in_tau;
            p_vec[idx] = center_below_unranked + non_center_unranked;
        }
    }

    let unmatched = (tau.k() - ell) as u64;
    let q = unmatched * unmatched.saturating_sub(1) / 2;
    Ok(InversionVectors {
        i: i_vec,
        p: p_vec,
        q,
        ell,
    })
}

/// Weighted disagreement of `tau` against the model center:
/// `w0 * p * Q + sum_i w_i * (I_i + p * P_i)`.
pub fn weighted_displacement(tau: &TopKList, model: &TopKGmm) -> Result<f64> {
    let inv = inversion_vectors(tau, model.center())?;
    let mut total = model.w0() * model.p() * inv.q as f64;
    for r in 1..=model.k() {
        total += model.weight_of_rank(r) * (inv.i[r - 1] as f64 + model.p() * inv.p[r - 1] as f64);
    }
    Ok(total)
}

/// Unnormalized model mass `exp(-beta * displacement)`.
pub fn unnormalized_mass(tau: &TopKList, model: &TopKGmm) -> Result<f64> {
    Ok((-model.beta() * weighted_displacement(tau, model)?).exp())
}
