//! Profile-based repeated-insertion sampling: draw a profile, lay down
//! uniform fillers, then insert the shared center items at geometrically
//! weighted positions.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::profile::{profile_distribution, sample_profile, Profile, ProfileDistribution};
use crate::types::{ItemId, TopKGmm, TopKList, Universe};

/// Draws an insertion position `j in 0..=list_len` with probability
/// proportional to `exp(-beta * weight * j)`; `j` existing elements end up
/// above the inserted one.
///
/// Inverse-CDF on the closed-form geometric partial sums, O(1) per draw.
pub fn prim_insert_position<R: Rng + ?Sized>(
    weight: f64,
    beta: f64,
    list_len: usize,
    rng: &mut R,
) -> usize {
    if list_len == 0 {
        return 0;
    }
    let bw = beta * weight;
    if bw <= 1e-12 {
        return rng.random_range(0..=list_len);
    }
    let q = (-bw).exp();
    let u: f64 = rng.random();
    // Smallest j with CDF(j) > u, CDF(j) = (1 - q^(j+1)) / (1 - q^(L+1)).
    let x = 1.0 - u * (1.0 - q.powi(list_len as i32 + 1));
    if x <= 0.0 {
        return list_len;
    }
    let j = (x.ln() / q.ln()).floor() as i64;
    j.clamp(0, list_len as i64) as usize
}

/// Index-mapped view of the non-center items, used to draw fillers without
/// materializing the full universe per sample.
#[derive(Debug, Clone)]
struct FillerPool {
    sorted_center: Vec<ItemId>,
    pool_len: usize,
}

impl FillerPool {
    fn new(universe: Universe, center: &TopKList) -> Self {
        let mut sorted_center = center.items().to_vec();
        sorted_center.sort_unstable();
        FillerPool {
            sorted_center,
            pool_len: universe.size() as usize - center.k(),
        }
    }

    /// The idx-th smallest non-center id.
    fn id_at(&self, idx: usize) -> ItemId {
        let mut idx = idx as u32;
        let mut base = 0u32;
        for &c in &self.sorted_center {
            let gap = c - base;
            if idx < gap {
                return base + idx;
            }
            idx -= gap;
            base = c + 1;
        }
        base + idx
    }

    /// Uniformly random ordered sample of `count` distinct non-center items:
    /// partial Fisher-Yates over a sparse index map.
    fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<ItemId> {
        let mut overrides: HashMap<usize, usize> = HashMap::new();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let j = rng.random_range(i..self.pool_len);
            let vj = overrides.get(&j).copied().unwrap_or(j);
            let vi = overrides.get(&i).copied().unwrap_or(i);
            overrides.insert(j, vi);
            out.push(self.id_at(vj));
        }
        out
    }
}

/// Uniformly random ordered sequence of `count` distinct non-center items.
pub fn sample_fillers<R: Rng + ?Sized>(
    universe: Universe,
    count: usize,
    center: &TopKList,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    let available = universe.size() as usize - center.k();
    if count > available {
        return Err(Error::NotEnoughFillers { count, available });
    }
    Ok(FillerPool::new(universe, center).draw(count, rng))
}

fn prim_sample_with_pool<R: Rng + ?Sized>(
    model: &TopKGmm,
    pool: &FillerPool,
    s: &Profile,
    rng: &mut R,
) -> TopKList {
    let ell = s.ell();
    let mut arranged = pool.draw(model.k() - ell, rng);
    // Insert shared center items lowest priority first; earlier insertions
    // never count toward a later item's inversions.
    for rank in (1..=model.k()).rev() {
        if !s.contains(rank) {
            continue;
        }
        let j = prim_insert_position(
            model.weight_of_rank(rank),
            model.beta(),
            arranged.len(),
            rng,
        );
        arranged.insert(j, model.center().items()[rank - 1]);
    }
    TopKList::new_unchecked(arranged, model.universe())
}

/// Samples a list from `T(S)`: conditioned on the profile, the result has
/// probability proportional to `exp(-beta * sum_{j in S} w_j * I_j)`.
pub fn prim_sample<R: Rng + ?Sized>(
    model: &TopKGmm,
    s: &Profile,
    rng: &mut R,
) -> Result<TopKList> {
    if s.k() != model.k() || !s.is_feasible(model.universe()) {
        return Err(Error::InfeasibleProfile);
    }
    let pool = FillerPool::new(model.universe(), model.center());
    Ok(prim_sample_with_pool(model, &pool, s, rng))
}

/// Ready-to-sample state: the model, its precomputed profile distribution,
/// and the seed recorded for replay. Shareable across concurrent samplers;
/// each consumer owns its RNG stream.
#[derive(Debug, Clone)]
pub struct SamplerState {
    model: TopKGmm,
    dist: ProfileDistribution,
    pool: FillerPool,
    seed: u64,
}

impl SamplerState {
    pub fn new(model: TopKGmm, seed: u64) -> Result<Self> {
        let dist = profile_distribution(&model)?;
        let pool = FillerPool::new(model.universe(), model.center());
        Ok(SamplerState {
            model,
            dist,
            pool,
            seed,
        })
    }

    pub fn model(&self) -> &TopKGmm {
        &self.model
    }

    pub fn distribution(&self) -> &ProfileDistribution {
        &self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// RNG for the default stream.
    pub fn rng(&self) -> ChaCha8Rng {
        self.rng_for_stream(0)
    }

    /// Independent RNG stream for concurrent consumers; the stream id is
    /// mixed into the generator, not the seed.
    pub fn rng_for_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// One exact draw from the model: sample a profile, then insert within it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TopKList {
        let s = sample_profile(&self.dist, rng);
        prim_sample_with_pool(&self.model, &self.pool, &s, rng)
    }

    /// Writes `count` samples in the batch format: a header line
    /// `# topkgmm-samples u=<u> k=<k> seed=<seed>` followed by one
    /// space-separated list per line.
    pub fn write_samples<W: Write>(&self, count: usize, out: &mut W) -> Result<()> {
        let mut rng = self.rng();
        writeln!(
            out,
            "# topkgmm-samples u={} k={} seed={}",
            self.model.universe().size(),
            self.model.k(),
            self.seed
        )?;
        for _ in 0..count {
            let tau = self.sample(&mut rng);
            let line: Vec<String> = tau.items().iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate_all, exact_pmf};
    use crate::profile::profile_of;
    use std::collections::HashMap;

    fn plain(u: u32) -> Universe {
        Universe::plain(u).unwrap()
    }

    fn list(items: &[u32], u: u32) -> TopKList {
        TopKList::new(items.to_vec(), plain(u)).unwrap()
    }

    #[test]
    fn insert_position_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..64 {
            assert_eq!(prim_insert_position(1.0, 5.0, 0, &mut rng), 0);
        }
    }

    #[test]
    fn insert_position_uniform_at_beta_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 120_000;
        let len = 5;
        let mut counts = vec![0usize; len + 1];
        for _ in 0..n {
            counts[prim_insert_position(2.0, 0.0, len, &mut rng)] += 1;
        }
        let expected = n as f64 / (len + 1) as f64;
        let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn insert_position_matches_closed_form_for_len_one() {
        // Pr(0) = 1 / (1 + exp(-beta * w)).
        let (beta, w) = (0.9, 1.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let zeros = (0..n)
            .filter(|_| prim_insert_position(w, beta, 1, &mut rng) == 0)
            .count();
        let p0 = 1.0 / (1.0 + (-beta * w).exp());
        let sigma = (n as f64 * p0 * (1.0 - p0)).sqrt();
        assert!((zeros as f64 - n as f64 * p0).abs() < 4.0 * sigma);
    }

    #[test]
    fn insert_position_geometric_ratios() {
        let (beta, w, len) = (0.5, 1.0, 6usize);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400_000;
        let mut counts = vec![0usize; len + 1];
        for _ in 0..n {
            counts[prim_insert_position(w, beta, len, &mut rng)] += 1;
        }
        let q = (-beta * w).exp();
        let total: f64 = (0..=len).map(|j| q.powi(j as i32)).sum();
        for (j, &c) in counts.iter().enumerate() {
            let p = q.powi(j as i32) / total;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - n as f64 * p).abs() < 4.0 * sigma,
                "position {j}: {c} vs expected {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn filler_pool_indexing_skips_center() {
        let center = list(&[2, 5, 0], 8);
        let pool = FillerPool::new(plain(8), &center);
        let ids: Vec<u32> = (0..pool.pool_len).map(|i| pool.id_at(i)).collect();
        assert_eq!(ids, vec![1, 3, 4, 6, 7]);
    }

    #[test]
    fn sample_fillers_edge_cases() {
        let center = list(&[1, 2], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_fillers(plain(4), 0, &center, &mut rng)
            .unwrap()
            .is_empty());
        assert!(matches!(
            sample_fillers(plain(4), 3, &center, &mut rng),
            Err(Error::NotEnoughFillers { .. })
        ));
        // count = u - k: a uniform permutation of the complement.
        let got = sample_fillers(plain(4), 2, &center, &mut rng).unwrap();
        let mut sorted = got.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 3]);
    }

    #[test]
    fn sample_fillers_is_uniform() {
        let center = list(&[1, 2], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut first = HashMap::new();
        for _ in 0..n {
            let f = sample_fillers(plain(4), 1, &center, &mut rng).unwrap();
            *first.entry(f[0]).or_insert(0usize) += 1;
        }
        let sigma = (n as f64 * 0.25).sqrt();
        for id in [0u32, 3] {
            let c = first.get(&id).copied().unwrap_or(0) as f64;
            assert!((c - n as f64 * 0.5).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn prim_sample_stays_in_profile() {
        let center = list(&[1, 3, 5], 8);
        let model = TopKGmm::new(center.clone(), 0.6, 0.5, vec![1.0, 2.0, 1.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mask_ranks in [vec![], vec![1], vec![2, 3], vec![1, 2, 3]] {
            let s = Profile::from_ranks(mask_ranks.iter().copied(), 3).unwrap();
            for _ in 0..200 {
                let tau = prim_sample(&model, &s, &mut rng).unwrap();
                assert_eq!(profile_of(&tau, &center).unwrap(), s);
            }
        }
    }

    #[test]
    fn prim_sample_full_permutation_when_no_fillers() {
        let universe = plain(3);
        let center = TopKList::identity(3, universe).unwrap();
        let model = TopKGmm::unweighted(center, 0.7, 1.0).unwrap();
        let s = Profile::full(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tau = prim_sample(&model, &s, &mut rng).unwrap();
        assert_eq!(tau.k(), 3);
    }

    #[test]
    fn within_profile_ratio_matches_model() {
        // u=4, k=2, S={1}: Pr((1,x)) / Pr((x,1)) = exp(beta * w_1).
        let center = list(&[1, 2], 4);
        let (beta, w1) = (0.8, 1.5);
        let model = TopKGmm::new(center, beta, 1.0, vec![1.0, w1, 0.7]).unwrap();
        let s = Profile::from_ranks([1], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
        for _ in 0..n {
            let tau = prim_sample(&model, &s, &mut rng).unwrap();
            *counts.entry(tau.items().to_vec()).or_insert(0) += 1;
        }
        for x in [3u32, 0] {
            let above = counts.get(&vec![1, x]).copied().unwrap_or(0) as f64;
            let below = counts.get(&vec![x, 1]).copied().unwrap_or(0) as f64;
            let ratio = above / below;
            let expected = (beta * w1).exp();
            // Delta-method tolerance on a ratio of binomial counts.
            let se = ratio * (1.0 / above + 1.0 / below).sqrt();
            assert!(
                (ratio - expected).abs() < 3.0 * se,
                "x={x}: ratio {ratio} vs {expected}"
            );
        }
    }

    #[test]
    fn conditional_law_matches_restricted_pmf() {
        // Conditional frequencies over T(S) track exact_pmf restricted to
        // T(S) and renormalized.
        let universe = plain(5);
        let center = TopKList::identity(2, universe).unwrap();
        let model = TopKGmm::new(center.clone(), 0.9, 0.5, vec![1.0, 1.8, 0.6]).unwrap();
        let s = Profile::from_ranks([2], 2).unwrap();
        let pmf = exact_pmf(&model).unwrap();

        let mut restricted: HashMap<Vec<u32>, f64> = HashMap::new();
        for tau in enumerate_all(universe, 2).unwrap() {
            if profile_of(&tau, &center).unwrap() == s {
                restricted.insert(tau.items().to_vec(), pmf.prob_of(tau.items()));
            }
        }
        let z: f64 = restricted.values().sum();

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 1_000_000usize;
        let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
        for _ in 0..n {
            let tau = prim_sample(&model, &s, &mut rng).unwrap();
            *counts.entry(tau.items().to_vec()).or_insert(0) += 1;
        }
        let tv: f64 = restricted
            .iter()
            .map(|(items, p)| {
                let emp = counts.get(items).copied().unwrap_or(0) as f64 / n as f64;
                (emp - p / z).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "conditional TV distance {tv}");
    }

    #[test]
    fn marginal_matches_exact_pmf() {
        let universe = plain(6);
        let center = TopKList::new(vec![1, 4, 2], universe).unwrap();
        let model = TopKGmm::new(center, 0.7, 0.5, vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        let state = SamplerState::new(model.clone(), 77).unwrap();
        let pmf = exact_pmf(&model).unwrap();
        let mut rng = state.rng();
        let n = 1_000_000usize;
        let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
        for _ in 0..n {
            let tau = state.sample(&mut rng);
            *counts.entry(tau.items().to_vec()).or_insert(0) += 1;
        }
        let mut tv = 0.0;
        for (tau, p) in pmf.entries() {
            let emp = counts.get(tau.items()).copied().unwrap_or(0) as f64 / n as f64;
            tv += (emp - p).abs();
        }
        assert!(tv / 2.0 < 0.01, "TV distance {}", tv / 2.0);
    }

    #[test]
    fn seeded_streams_replay_and_differ() {
        let center = list(&[1, 2, 3], 9);
        let model = TopKGmm::unweighted(center, 0.4, 1.0).unwrap();
        let state = SamplerState::new(model, 123).unwrap();
        let batch = |stream: u64| -> Vec<Vec<u32>> {
            let mut rng = state.rng_for_stream(stream);
            (0..50).map(|_| state.sample(&mut rng).items().to_vec()).collect()
        };
        assert_eq!(batch(0), batch(0));
        assert_ne!(batch(0), batch(1));
    }

    #[test]
    fn batch_output_format() {
        let center = list(&[1, 2, 3, 4], 8);
        let model = TopKGmm::unweighted(center, 0.5, 1.0).unwrap();
        let state = SamplerState::new(model, 7).unwrap();
        let mut buf = Vec::new();
        state.write_samples(10, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "# topkgmm-samples u=8 k=4 seed=7");
        for line in &lines[1..] {
            assert_eq!(line.split_whitespace().count(), 4);
        }
    }
}
