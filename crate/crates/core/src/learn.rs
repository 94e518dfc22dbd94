//! Active learning of the model center from choice queries: identify an
//! assortment's top element from repeated choices, discover the center's
//! membership and size, and sort the center by tournaments.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand_chacha::ChaCha8Rng;

use crate::choice::{choice, Assortment, ChoiceObservation};
use crate::error::{Error, Result};
use crate::prim::SamplerState;
use crate::types::{ItemId, TopKGmm, TopKList, Universe};

/// A metered query interface: each call offers one assortment and returns one
/// independently drawn choice.
pub trait ChoiceOracle {
    fn universe(&self) -> Universe;
    fn query(&mut self, a: &Assortment) -> Result<ItemId>;
    fn queries_used(&self) -> u64;
}

/// Oracle backed by a model: each query samples a fresh list and applies the
/// choice function.
pub struct ModelOracle {
    state: SamplerState,
    rng: ChaCha8Rng,
    queries: u64,
}

impl ModelOracle {
    pub fn new(model: TopKGmm, seed: u64) -> Result<Self> {
        let state = SamplerState::new(model, seed)?;
        let rng = state.rng();
        Ok(ModelOracle {
            state,
            rng,
            queries: 0,
        })
    }
}

impl ChoiceOracle for ModelOracle {
    fn universe(&self) -> Universe {
        self.state.model().universe()
    }

    fn query(&mut self, a: &Assortment) -> Result<ItemId> {
        self.queries += 1;
        let tau = self.state.sample(&mut self.rng);
        choice(&tau, a, &mut self.rng)
    }

    fn queries_used(&self) -> u64 {
        self.queries
    }
}

/// Oracle backed by a dataset: each query applies the choice function to a
/// uniformly drawn stored list.
pub struct DataOracle {
    records: Vec<TopKList>,
    universe: Universe,
    rng: ChaCha8Rng,
    queries: u64,
}

impl DataOracle {
    pub fn new(records: Vec<TopKList>, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let universe = match records.first() {
            Some(r) => r.universe(),
            None => return Err(Error::EmptyDataset),
        };
        if records.iter().any(|r| r.universe() != universe) {
            return Err(Error::UniverseMismatch);
        }
        Ok(DataOracle {
            records,
            universe,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queries: 0,
        })
    }
}

impl ChoiceOracle for DataOracle {
    fn universe(&self) -> Universe {
        self.universe
    }

    fn query(&mut self, a: &Assortment) -> Result<ItemId> {
        use rand::Rng;
        self.queries += 1;
        let idx = self.rng.random_range(0..self.records.len());
        let tau = self.records[idx].clone();
        choice(&tau, a, &mut self.rng)
    }

    fn queries_used(&self) -> u64 {
        self.queries
    }
}

/// Pairwise win-minus-loss counts over the members of one assortment.
#[derive(Debug, Clone)]
pub struct ComparisonTally {
    members: Vec<ItemId>,
    x: Vec<i64>,
    m: u64,
}

impl ComparisonTally {
    pub fn new(a: &Assortment) -> Self {
        let members = a.members_with_null();
        let n = members.len();
        ComparisonTally {
            members,
            x: vec![0; n * n],
            m: 0,
        }
    }

    fn index_of(&self, id: ItemId) -> Result<usize> {
        self.members
            .binary_search(&id)
            .map_err(|_| Error::ChoiceOutsideAssortment(id))
    }

    /// Records one choice: +1 against every other member, and the mirror -1.
    pub fn record(&mut self, chosen: ItemId) -> Result<()> {
        let c = self.index_of(chosen)?;
        let n = self.members.len();
        self.m += 1;
        for other in 0..n {
            if other != c {
                self.x[c * n + other] += 1;
                self.x[other * n + c] -= 1;
            }
        }
        Ok(())
    }

    pub fn members(&self) -> &[ItemId] {
        &self.members
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn x(&self, i: ItemId, j: ItemId) -> Result<i64> {
        let (a, b) = (self.index_of(i)?, self.index_of(j)?);
        Ok(self.x[a * self.members.len() + b])
    }

    /// Normalized tally `X / m`.
    pub fn y(&self, i: ItemId, j: ItemId) -> Result<f64> {
        Ok(self.x(i, j)? as f64 / self.m.max(1) as f64)
    }

    /// Tie-break score: total wins minus losses of `id` across the row.
    pub fn row_sum(&self, id: ItemId) -> Result<i64> {
        let i = self.index_of(id)?;
        let n = self.members.len();
        Ok((0..n).map(|j| self.x[i * n + j]).sum())
    }

    /// The unique member whose normalized margin over every other member
    /// exceeds `threshold`, when one exists.
    pub fn winner(&self, threshold: f64) -> Option<ItemId> {
        if self.m == 0 {
            return None;
        }
        let n = self.members.len();
        'outer: for i in 0..n {
            for j in 0..n {
                if i != j && (self.x[i * n + j] as f64 / self.m as f64) <= threshold {
                    continue 'outer;
                }
            }
            return Some(self.members[i]);
        }
        None
    }
}

/// Margin an assortment winner must clear: `1 / (2 * (|A| + 1))`.
pub fn find_top_threshold(assortment_size: usize) -> f64 {
    1.0 / (2.0 * (assortment_size + 1) as f64)
}

/// Identifies the center-top member of an assortment from recorded choices:
/// the unique member beating every other by more than the threshold margin.
/// `None` signals (with high probability) that no member is a center item.
pub fn find_top(a: &Assortment, choices: &[ItemId]) -> Result<Option<ItemId>> {
    let mut tally = ComparisonTally::new(a);
    for &c in choices {
        tally.record(c)?;
    }
    Ok(tally.winner(find_top_threshold(a.size())))
}

/// Queries the oracle `m` times on one assortment and applies the winner
/// rule; the tally is returned for score bookkeeping.
pub fn run_find_top(
    oracle: &mut dyn ChoiceOracle,
    a: &Assortment,
    m: usize,
) -> Result<(Option<ItemId>, ComparisonTally)> {
    let mut tally = ComparisonTally::new(a);
    for _ in 0..m {
        let c = oracle.query(a)?;
        tally.record(c)?;
    }
    Ok((tally.winner(find_top_threshold(a.size())), tally))
}

/// Output of a center-learning run.
#[derive(Debug, Clone)]
pub struct LearnedCenter {
    k_hat: usize,
    items: Vec<ItemId>,
    universe: Universe,
    queries_used: u64,
    /// Accumulated win-minus-loss score per item, the tie-break key.
    scores: HashMap<ItemId, i64>,
}

impl LearnedCenter {
    pub fn k_hat(&self) -> usize {
        self.k_hat
    }

    /// Learned center items in learned priority order.
    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    /// The learned center as a list; fails when no center item was found.
    pub fn tau_hat(&self) -> Result<TopKList> {
        TopKList::new(self.items.clone(), self.universe)
    }

    pub fn queries_used(&self) -> u64 {
        self.queries_used
    }

    pub fn score_of(&self, id: ItemId) -> i64 {
        self.scores.get(&id).copied().unwrap_or(0)
    }

    /// Truncates the learned center to its first `cap` items.
    pub fn truncated(mut self, cap: usize) -> Self {
        if self.items.len() > cap {
            self.items.truncate(cap);
            self.k_hat = cap;
        }
        self
    }
}

fn accumulate_scores(scores: &mut HashMap<ItemId, i64>, tally: &ComparisonTally) {
    for &id in tally.members() {
        *scores.entry(id).or_insert(0) += tally.row_sum(id).expect("member of own tally");
    }
}

/// Discovers which items belong to the center and how many there are, by
/// repeatedly offering size-r assortments of unknown items; found items move
/// to the confirmed set, losing assortments to the rejected set. The center
/// is then ordered by [`sortcntr`].
pub fn bucchoi(oracle: &mut dyn ChoiceOracle, r: usize, m: usize) -> Result<LearnedCenter> {
    if r < 1 || m < 1 {
        return Err(Error::InvalidParameter(
            "bucchoi needs r >= 1 and m >= 1".into(),
        ));
    }
    let universe = oracle.universe();
    let mut unknown: BTreeSet<ItemId> = universe.purchasable().collect();
    let mut confirmed: Vec<ItemId> = Vec::new();
    let mut rejected: BTreeSet<ItemId> = BTreeSet::new();
    let mut scores: HashMap<ItemId, i64> = HashMap::new();

    while !unknown.is_empty() {
        let mut items: Vec<ItemId> = unknown.iter().take(r).copied().collect();
        if items.len() < r {
            // Pad from the rejected pool, lowest ids first, for determinism.
            for &b in rejected.iter() {
                if items.len() == r {
                    break;
                }
                items.push(b);
            }
        }
        if items.len() < r {
            return Err(Error::PaddingExhausted);
        }
        let a = Assortment::new(items, universe)?;
        let (winner, tally) = run_find_top(oracle, &a, m)?;
        accumulate_scores(&mut scores, &tally);
        match winner {
            Some(w) if unknown.contains(&w) => {
                confirmed.push(w);
                unknown.remove(&w);
            }
            // A winner from the rejected pool or the no-purchase option is a
            // statistical artifact; the unknowns in this assortment lost to a
            // non-center element, so they are treated as non-center too.
            _ => {
                for &x in a.items() {
                    unknown.remove(&x);
                    rejected.insert(x);
                }
                for &c in &confirmed {
                    rejected.remove(&c);
                }
            }
        }
    }

    let ordered = sortcntr(&confirmed, r, m, &rejected, oracle)?;
    Ok(LearnedCenter {
        k_hat: ordered.len(),
        items: ordered,
        universe,
        queries_used: oracle.queries_used(),
        scores,
    })
}

/// Repeated find-top with the failure policy: on a miss, retry the assortment
/// with doubled sample size, at most three times.
fn find_top_with_retries(
    oracle: &mut dyn ChoiceOracle,
    a: &Assortment,
    m: usize,
    accept: &BTreeSet<ItemId>,
    scores: &mut HashMap<ItemId, i64>,
) -> Result<ItemId> {
    let mut budget = m;
    for _ in 0..4 {
        let (winner, tally) = run_find_top(oracle, a, budget)?;
        accumulate_scores(scores, &tally);
        if let Some(w) = winner {
            if accept.contains(&w) {
                return Ok(w);
            }
        }
        budget *= 2;
    }
    Err(Error::TournamentFailure(format!(
        "no winner on assortment {:?} after retries; sample size miscalibrated",
        a.items()
    )))
}

/// Orders a set of known center items by selection-sort tournaments: each
/// round partitions the remaining candidates into size-r assortments (padded
/// from the rejected pool), keeps each assortment's winner, and repeats until
/// a single survivor takes the next rank.
pub fn sortcntr(
    items: &[ItemId],
    r: usize,
    m: usize,
    padding: &BTreeSet<ItemId>,
    oracle: &mut dyn ChoiceOracle,
) -> Result<Vec<ItemId>> {
    let universe = oracle.universe();
    // Tournaments need at least binary assortments to shrink the field.
    let r = r.max(2);
    let mut remaining: BTreeSet<ItemId> = items.iter().copied().collect();
    let mut out = Vec::with_capacity(remaining.len());
    let mut scores: HashMap<ItemId, i64> = HashMap::new();

    while remaining.len() > 1 {
        let mut field: Vec<ItemId> = remaining.iter().copied().collect();
        while field.len() > 1 {
            let candidates: BTreeSet<ItemId> = field.iter().copied().collect();
            let mut winners = Vec::new();
            for chunk in field.chunks(r) {
                if chunk.len() == 1 {
                    // A lone survivor advances without a query.
                    winners.push(chunk[0]);
                    continue;
                }
                let mut a_items = chunk.to_vec();
                for &b in padding.iter() {
                    if a_items.len() == r {
                        break;
                    }
                    if !a_items.contains(&b) {
                        a_items.push(b);
                    }
                }
                let a = Assortment::new(a_items, universe)?;
                let w = find_top_with_retries(oracle, &a, m, &candidates, &mut scores)?;
                winners.push(w);
            }
            field = winners;
        }
        out.push(field[0]);
        remaining.remove(&field[0]);
    }
    out.extend(remaining);
    Ok(out)
}

/// Center learning with singleton then pairwise assortments: phase one keeps
/// every item that beats the no-purchase option on its own; phase two orders
/// the kept items by pairwise duels, residual incomparabilities broken by
/// descending accumulated win-minus-loss score, then by id.
pub fn bucchoi2(oracle: &mut dyn ChoiceOracle, m: usize) -> Result<LearnedCenter> {
    if m < 1 {
        return Err(Error::InvalidParameter("bucchoi2 needs m >= 1".into()));
    }
    let universe = oracle.universe();
    let mut kept: Vec<ItemId> = Vec::new();
    let mut scores: HashMap<ItemId, i64> = HashMap::new();

    for i in universe.purchasable() {
        let a = Assortment::new(vec![i], universe)?;
        let (winner, tally) = run_find_top(oracle, &a, m)?;
        accumulate_scores(&mut scores, &tally);
        if winner == Some(i) {
            kept.push(i);
        }
    }

    let mut wins: HashMap<ItemId, usize> = HashMap::new();
    for (idx, &i) in kept.iter().enumerate() {
        for &j in &kept[idx + 1..] {
            let a = Assortment::new(vec![i, j], universe)?;
            let (winner, tally) = run_find_top(oracle, &a, m)?;
            accumulate_scores(&mut scores, &tally);
            match winner {
                Some(w) if w == i || w == j => *wins.entry(w).or_insert(0) += 1,
                _ => {}
            }
        }
    }

    let mut ordered = kept;
    ordered.sort_by(|a, b| {
        let wa = wins.get(a).copied().unwrap_or(0);
        let wb = wins.get(b).copied().unwrap_or(0);
        wb.cmp(&wa)
            .then_with(|| {
                let sa = scores.get(a).copied().unwrap_or(0);
                let sb = scores.get(b).copied().unwrap_or(0);
                sb.cmp(&sa)
            })
            .then_with(|| a.cmp(b))
    });

    Ok(LearnedCenter {
        k_hat: ordered.len(),
        items: ordered,
        universe,
        queries_used: oracle.queries_used(),
        scores,
    })
}

/// Writes a choice log: header `# choicelog u=<u>`, then one line
/// `<chosen> : <assortment ids>` per observation.
pub fn write_choice_log<W: Write>(
    universe: Universe,
    observations: &[ChoiceObservation],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "# choicelog u={}", universe.size())?;
    for obs in observations {
        let ids: Vec<String> = obs.assortment.items().iter().map(|x| x.to_string()).collect();
        writeln!(out, "{} : {}", obs.chosen, ids.join(" "))?;
    }
    Ok(())
}

/// Reads a choice log written by [`write_choice_log`].
pub fn read_choice_log<R: BufRead>(reader: R) -> Result<(Universe, Vec<ChoiceObservation>)> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Malformed("empty choice log".into()))?;
    let header = header?;
    let u: u32 = header
        .strip_prefix("# choicelog u=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad choice log header: {header}")))?;
    let universe = Universe::with_null(u)?;
    let mut observations = Vec::new();
    for (line_no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (chosen_str, items_str) = line.split_once(':').ok_or(Error::MalformedLine {
            line: line_no + 1,
            msg: "missing ':' separator".into(),
        })?;
        let chosen: u32 = chosen_str.trim().parse().map_err(|_| Error::MalformedLine {
            line: line_no + 1,
            msg: format!("bad chosen id {chosen_str:?}"),
        })?;
        let items: Vec<u32> = items_str
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| Error::MalformedLine {
                    line: line_no + 1,
                    msg: format!("bad item id {t:?}"),
                })
            })
            .collect::<Result<_>>()?;
        let assortment = Assortment::new(items, universe)?;
        observations.push(ChoiceObservation::new(assortment, chosen)?);
    }
    Ok((universe, observations))
}
