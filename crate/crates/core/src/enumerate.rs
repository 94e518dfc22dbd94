//! Exhaustive enumeration of top-k lists and the exact model distribution,
//! the desk-scale oracle everything else is checked against.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::{unnormalized_mass, TopKGmm, TopKList, Universe};

/// Default ceiling on `u!/(u-k)!` for enumeration-based operations.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Number of ordered arrangements of k distinct items, `u!/(u-k)!`.
pub fn arrangement_count(u: u32, k: usize) -> u128 {
    let mut count: u128 = 1;
    for t in 0..k as u128 {
        count = count.saturating_mul(u as u128 - t);
    }
    count
}

/// Yields every ordered arrangement of `k` distinct items exactly once, in
/// lexicographic order.
pub fn enumerate_all(universe: Universe, k: usize) -> Result<Vec<TopKList>> {
    enumerate_all_with_cap(universe, k, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_all_with_cap(universe: Universe, k: usize, cap: u64) -> Result<Vec<TopKList>> {
    let u = universe.size();
    if k == 0 || k > u as usize {
        return Err(Error::KExceedsUniverse { k, u });
    }
    let count = arrangement_count(u, k);
    if count > cap as u128 {
        return Err(Error::InstanceTooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = Vec::with_capacity(k);
    let mut used = vec![false; u as usize];
    fn rec(
        u: u32,
        k: usize,
        universe: Universe,
        prefix: &mut Vec<u32>,
        used: &mut [bool],
        out: &mut Vec<TopKList>,
    ) {
        if prefix.len() == k {
            out.push(TopKList::new_unchecked(prefix.clone(), universe));
            return;
        }
        for id in 0..u {
            if !used[id as usize] {
                used[id as usize] = true;
                prefix.push(id);
                rec(u, k, universe, prefix, used, out);
                prefix.pop();
                used[id as usize] = false;
            }
        }
    }
    rec(u, k, universe, &mut prefix, &mut used, &mut out);
    Ok(out)
}

/// The exact probability mass function of a model, computed by full
/// enumeration. Only viable under the enumeration cap.
#[derive(Debug, Clone)]
pub struct ExactPmf {
    entries: Vec<(TopKList, f64)>,
    index: HashMap<Vec<u32>, usize>,
}

impl ExactPmf {
    pub fn entries(&self) -> &[(TopKList, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Probability of an exact list (ordered), zero if absent.
    pub fn prob_of(&self, items: &[u32]) -> f64 {
        self.index
            .get(items)
            .map(|&i| self.entries[i].1)
            .unwrap_or(0.0)
    }
}

pub fn exact_pmf(model: &TopKGmm) -> Result<ExactPmf> {
    exact_pmf_with_cap(model, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_pmf_with_cap(model: &TopKGmm, cap: u64) -> Result<ExactPmf> {
    let lists = enumerate_all_with_cap(model.universe(), model.k(), cap)?;
    // Work on shifted exponents so large beta cannot underflow everything.
    let displacements: Vec<f64> = lists
        .iter()
        .map(|t| crate::types::weighted_displacement(t, model))
        .collect::<Result<_>>()?;
    let d_min = displacements.iter().cloned().fold(f64::INFINITY, f64::min);
    let masses: Vec<f64> = displacements
        .iter()
        .map(|d| (-model.beta() * (d - d_min)).exp())
        .collect();
    let total: f64 = masses.iter().sum();
    let mut entries = Vec::with_capacity(lists.len());
    let mut index = HashMap::with_capacity(lists.len());
    for (list, mass) in lists.into_iter().zip(masses) {
        index.insert(list.items().to_vec(), entries.len());
        entries.push((list, mass / total));
    }
    Ok(ExactPmf { entries, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::kendall_p_distance;

    fn plain(u: u32) -> Universe {
        Universe::plain(u).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_all(plain(3), 1).unwrap().len(), 3);
        assert_eq!(enumerate_all(plain(4), 2).unwrap().len(), 12);
        assert_eq!(enumerate_all(plain(6), 3).unwrap().len(), 120);
    }

    #[test]
    fn enumeration_is_duplicate_free() {
        let lists = enumerate_all(plain(5), 3).unwrap();
        let set: std::collections::HashSet<Vec<u32>> =
            lists.iter().map(|t| t.items().to_vec()).collect();
        assert_eq!(set.len(), lists.len());
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate_all_with_cap(plain(100), 5, 1000),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn uniform_limit_at_beta_zero() {
        let center = TopKList::new(vec![0, 1], plain(4)).unwrap();
        let model = TopKGmm::unweighted(center, 0.0, 1.0).unwrap();
        let pmf = exact_pmf(&model).unwrap();
        assert_eq!(pmf.len(), 12);
        for (_, prob) in pmf.entries() {
            assert!((prob - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pmf_normalizes() {
        let center = TopKList::new(vec![2, 0, 3], plain(5)).unwrap();
        let model = TopKGmm::new(center, 1.3, 0.6, vec![0.5, 2.0, 1.0, 0.1]).unwrap();
        let pmf = exact_pmf(&model).unwrap();
        let total: f64 = pmf.entries().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_unweighted_case_matches_classic_mallows() {
        // k = u = 3, unit weights: mass proportional to exp(-beta * KendallTau).
        let universe = plain(3);
        let center = TopKList::identity(3, universe).unwrap();
        let beta = 0.8;
        let model = TopKGmm::unweighted(center.clone(), beta, 1.0).unwrap();
        let pmf = exact_pmf(&model).unwrap();
        let perms = enumerate_all(universe, 3).unwrap();
        let masses: Vec<f64> = perms
            .iter()
            .map(|t| (-beta * kendall_p_distance(t, &center, 1.0).unwrap()).exp())
            .collect();
        let z: f64 = masses.iter().sum();
        for (perm, mass) in perms.iter().zip(masses) {
            let expected = mass / z;
            assert!((pmf.prob_of(perm.items()) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_beta_shrinks_displaced_mass() {
        let universe = plain(5);
        let center = TopKList::identity(2, universe).unwrap();
        let tau = vec![4u32, 3];
        let mut last_ratio = f64::INFINITY;
        for beta in [0.0, 0.3, 0.8, 1.5] {
            let model = TopKGmm::unweighted(center.clone(), beta, 1.0).unwrap();
            let pmf = exact_pmf(&model).unwrap();
            let ratio = pmf.prob_of(&tau) / pmf.prob_of(center.items());
            assert!(ratio <= last_ratio);
            if beta > 0.0 {
                assert!(ratio < last_ratio || last_ratio == f64::INFINITY);
            }
            last_ratio = ratio;
        }
    }
}
