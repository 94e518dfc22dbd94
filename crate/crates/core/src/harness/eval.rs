//! Out-of-sample evaluation of choice predictors against empirical choice
//! frequencies, and the (p, beta) grid search.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice::{choice, Assortment, ChoiceDistribution};
use crate::error::{Error, Result};
use crate::learn::bucchoi2;
use crate::mnl::{mnl_choice_prob, MnlModel};
use crate::profile::{profile_distribution, ProfileDistribution};
use crate::types::{TopKGmm, TopKList, Universe};

use super::PreferenceDataset;

/// Anything that maps an assortment to a choice distribution.
pub trait ChoicePredictor: Sync {
    fn name(&self) -> String;
    /// (p, beta) when the predictor has them; echoed into reports.
    fn params(&self) -> (Option<f64>, Option<f64>) {
        (None, None)
    }
    fn predict(&self, a: &Assortment) -> Result<ChoiceDistribution>;
}

/// Model predictor with its profile distribution computed once.
pub struct GmmPredictor {
    model: TopKGmm,
    dist: ProfileDistribution,
}

impl GmmPredictor {
    pub fn new(model: TopKGmm) -> Result<Self> {
        let dist = profile_distribution(&model)?;
        Ok(GmmPredictor { model, dist })
    }

    pub fn model(&self) -> &TopKGmm {
        &self.model
    }
}

impl ChoicePredictor for GmmPredictor {
    fn name(&self) -> String {
        "topkgmm".into()
    }

    fn params(&self) -> (Option<f64>, Option<f64>) {
        (Some(self.model.p()), Some(self.model.beta()))
    }

    fn predict(&self, a: &Assortment) -> Result<ChoiceDistribution> {
        crate::choice::dypchip_precomputed(&self.model, &self.dist, a)
    }
}

pub struct MnlPredictor(pub MnlModel);

impl ChoicePredictor for MnlPredictor {
    fn name(&self) -> String {
        "mnl".into()
    }

    fn predict(&self, a: &Assortment) -> Result<ChoiceDistribution> {
        mnl_choice_prob(&self.0, a)
    }
}

/// Frequency estimate of the choice distribution from repeated dataset
/// queries on one assortment.
pub fn empirical_choice_probs<R: Rng + ?Sized>(
    data: &PreferenceDataset,
    a: &Assortment,
    samples: usize,
    rng: &mut R,
) -> Result<ChoiceDistribution> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let members = a.members_with_null();
    let mut counts = vec![0usize; members.len()];
    for _ in 0..samples {
        let record = &data.records()[rng.random_range(0..data.len())];
        let c = choice(record, a, rng)?;
        let idx = members.binary_search(&c).expect("choice is a member");
        counts[idx] += 1;
    }
    let total = samples as f64;
    ChoiceDistribution::from_sorted(
        members
            .into_iter()
            .zip(counts.into_iter().map(|c| c as f64 / total))
            .collect(),
    )
}

/// `count` uniformly random size-`size` assortments of purchasable items.
pub fn draw_assortments<R: Rng + ?Sized>(
    universe: Universe,
    count: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Assortment>> {
    let pool: Vec<u32> = universe.purchasable().collect();
    if size > pool.len() {
        return Err(Error::InvalidParameter(format!(
            "assortment size {size} exceeds the {} purchasable items",
            pool.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = rand::seq::index::sample(rng, pool.len(), size);
        let items: Vec<u32> = idx.iter().map(|i| pool[i]).collect();
        out.push(Assortment::new(items, universe)?);
    }
    Ok(out)
}

/// Evaluation protocol parameters; echoed into every report.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub num_assortments: usize,
    pub assortment_size: usize,
    pub samples_per_assortment: usize,
    pub seed: u64,
}

/// Per-assortment and mean absolute prediction errors, with the full
/// configuration used to produce them.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean_abs_error: f64,
    pub per_assortment: Vec<(Vec<u32>, f64)>,
    pub predictor: String,
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub config: EvalConfig,
}

impl EvalReport {
    /// Tab-separated table: one row per assortment, then the summary row.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# predictor={} p={} beta={} r={} assortments={} samples={} seed={}",
            self.predictor,
            self.p.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            self.beta.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            self.config.assortment_size,
            self.config.num_assortments,
            self.config.samples_per_assortment,
            self.config.seed,
        )?;
        writeln!(out, "assortment\tabs_error")?;
        for (items, err) in &self.per_assortment {
            let ids: Vec<String> = items.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}\t{}", ids.join(","), err)?;
        }
        writeln!(out, "mean\t{}", self.mean_abs_error)?;
        Ok(())
    }
}

fn abs_error(predicted: &ChoiceDistribution, empirical: &ChoiceDistribution) -> f64 {
    let entries = empirical.entries();
    let total: f64 = entries
        .iter()
        .map(|&(id, emp)| (predicted.prob(id) - emp).abs())
        .sum();
    total / entries.len() as f64
}

/// Draws assortments, estimates empirical choice frequencies from the test
/// data, and scores the predictor by mean absolute deviation per member,
/// averaged over assortments.
pub fn evaluate(
    predictor: &dyn ChoicePredictor,
    test: &PreferenceDataset,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let assortments = draw_assortments(
        test.universe(),
        config.num_assortments,
        config.assortment_size,
        &mut rng,
    )?;
    let empirical: Vec<ChoiceDistribution> = assortments
        .iter()
        .map(|a| empirical_choice_probs(test, a, config.samples_per_assortment, &mut rng))
        .collect::<Result<_>>()?;
    evaluate_against(predictor, &assortments, &empirical, config)
}

/// Scores a predictor against already-drawn assortments and empirical
/// estimates; grid cells share these to stay comparable.
pub fn evaluate_against(
    predictor: &dyn ChoicePredictor,
    assortments: &[Assortment],
    empirical: &[ChoiceDistribution],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut per_assortment = Vec::with_capacity(assortments.len());
    let mut total = 0.0;
    for (a, emp) in assortments.iter().zip(empirical) {
        let predicted = predictor.predict(a)?;
        let err = abs_error(&predicted, emp);
        total += err;
        per_assortment.push((a.items().to_vec(), err));
    }
    let (p, beta) = predictor.params();
    Ok(EvalReport {
        mean_abs_error: total / assortments.len().max(1) as f64,
        per_assortment,
        predictor: predictor.name(),
        p,
        beta,
        config: config.clone(),
    })
}

/// Grid-search protocol parameters.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub p_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// Queries per find-top call when learning the center from the train
    /// split.
    pub learn_m: usize,
    /// The learned center is truncated to this many items.
    pub k_cap: usize,
    pub learn_seed: u64,
    pub eval: EvalConfig,
}

/// Error table over the (p, beta) grid, the winning cell, and the center the
/// cells share.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub p_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// `errors[i][j]` = error at `(p_grid[i], beta_grid[j])`.
    pub errors: Vec<Vec<f64>>,
    pub best: (f64, f64, f64),
    pub center: TopKList,
}

impl GridResult {
    /// Tab-separated table, beta across, p down.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        let header: Vec<String> = self.beta_grid.iter().map(|b| format!("beta={b}")).collect();
        writeln!(out, "p\\beta\t{}", header.join("\t"))?;
        for (i, p) in self.p_grid.iter().enumerate() {
            let row: Vec<String> = self.errors[i].iter().map(|e| format!("{e:.6}")).collect();
            writeln!(out, "{p}\t{}", row.join("\t"))?;
        }
        writeln!(
            out,
            "# best p={} beta={} error={:.6}",
            self.best.0, self.best.1, self.best.2
        )?;
        Ok(())
    }
}

/// Learns one center from the train split, then scores every (p, beta) cell
/// against shared empirical estimates from the test split. Cells evaluate in
/// parallel; the reduction order is fixed by the grid layout.
pub fn grid_search(
    train: &PreferenceDataset,
    test: &PreferenceDataset,
    config: &GridConfig,
) -> Result<GridResult> {
    let mut oracle = train.oracle(config.learn_seed)?;
    let learned = bucchoi2(&mut oracle, config.learn_m)?.truncated(config.k_cap);
    let center = learned.tau_hat().map_err(|_| {
        Error::DegenerateLog("no center item survived phase one of center learning".into())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.eval.seed);
    let assortments = draw_assortments(
        test.universe(),
        config.eval.num_assortments,
        config.eval.assortment_size,
        &mut rng,
    )?;
    let empirical: Vec<ChoiceDistribution> = assortments
        .iter()
        .map(|a| empirical_choice_probs(test, a, config.eval.samples_per_assortment, &mut rng))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..config.p_grid.len())
        .flat_map(|i| (0..config.beta_grid.len()).map(move |j| (i, j)))
        .collect();
    let cell_errors: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            let model = TopKGmm::unweighted(
                center.clone(),
                config.beta_grid[j],
                config.p_grid[i],
            )?;
            let predictor = GmmPredictor::new(model)?;
            let report = evaluate_against(&predictor, &assortments, &empirical, &config.eval)?;
            Ok(report.mean_abs_error)
        })
        .collect::<Result<_>>()?;

    let mut errors = vec![vec![0.0; config.beta_grid.len()]; config.p_grid.len()];
    let mut best = (config.p_grid[0], config.beta_grid[0], f64::INFINITY);
    for (&(i, j), &err) in cells.iter().zip(&cell_errors) {
        errors[i][j] = err;
        if err < best.2 {
            best = (config.p_grid[i], config.beta_grid[j], err);
        }
    }
    Ok(GridResult {
        p_grid: config.p_grid.clone(),
        beta_grid: config.beta_grid.clone(),
        errors,
        best,
        center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{read_orders, OrderFormat};
    use crate::prim::SamplerState;
    use std::collections::HashMap;

    fn synthetic_dataset(model: &TopKGmm, n: usize, seed: u64) -> PreferenceDataset {
        let state = SamplerState::new(model.clone(), seed).unwrap();
        let mut rng = state.rng();
        let records: Vec<TopKList> = (0..n).map(|_| state.sample(&mut rng)).collect();
        PreferenceDataset::from_records(records).unwrap()
    }

    #[test]
    fn empirical_probs_sum_to_one_and_degenerate_case() {
        let universe = Universe::with_null(6).unwrap();
        let rec = TopKList::new(vec![3, 1], universe).unwrap();
        let data = PreferenceDataset::from_records(vec![rec]).unwrap();
        let a = Assortment::new(vec![1, 3], universe).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = empirical_choice_probs(&data, &a, 500, &mut rng).unwrap();
        assert_eq!(dist.prob(3), 1.0);
        let total: f64 = dist.entries().iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_probs_match_uniform_model_on_full_dataset() {
        // A dataset holding every list once behaves like the beta=0 model.
        let universe = Universe::with_null(4).unwrap();
        let lists = crate::enumerate::enumerate_all(universe, 2).unwrap();
        let data = PreferenceDataset::from_records(lists).unwrap();
        let center = TopKList::new(vec![1, 2], universe).unwrap();
        let model = TopKGmm::unweighted(center, 0.0, 1.0).unwrap();
        let a = Assortment::new(vec![1, 3], universe).unwrap();
        let exact = crate::choice::dypchip(&model, &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let emp = empirical_choice_probs(&data, &a, n, &mut rng).unwrap();
        for &(id, p) in exact.entries() {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((emp.prob(id) - p).abs() < 3.0 * sigma, "id {id}");
        }
    }

    /// Predictor that replays precomputed distributions.
    struct Precomputed(HashMap<Vec<u32>, ChoiceDistribution>);

    impl ChoicePredictor for Precomputed {
        fn name(&self) -> String {
            "precomputed".into()
        }
        fn predict(&self, a: &Assortment) -> Result<ChoiceDistribution> {
            Ok(self.0[a.items()].clone())
        }
    }

    #[test]
    fn evaluate_is_zero_against_itself_and_deterministic() {
        let universe = Universe::with_null(8).unwrap();
        let center = TopKList::new(vec![1, 2, 3], universe).unwrap();
        let model = TopKGmm::unweighted(center, 0.8, 1.0).unwrap();
        let data = synthetic_dataset(&model, 400, 17);
        let config = EvalConfig {
            num_assortments: 12,
            assortment_size: 3,
            samples_per_assortment: 300,
            seed: 23,
        };

        // Reproduce the exact empirical estimates the evaluator will draw.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let assortments =
            draw_assortments(universe, config.num_assortments, config.assortment_size, &mut rng)
                .unwrap();
        let mut map = HashMap::new();
        for a in &assortments {
            let emp =
                empirical_choice_probs(&data, a, config.samples_per_assortment, &mut rng).unwrap();
            map.insert(a.items().to_vec(), emp);
        }
        let report = evaluate(&Precomputed(map), &data, &config).unwrap();
        assert_eq!(report.mean_abs_error, 0.0);

        // Deterministic under a fixed seed.
        let predictor = GmmPredictor::new(model).unwrap();
        let r1 = evaluate(&predictor, &data, &config).unwrap();
        let r2 = evaluate(&predictor, &data, &config).unwrap();
        assert_eq!(r1.mean_abs_error, r2.mean_abs_error);
        assert!(r1.mean_abs_error >= 0.0 && r1.mean_abs_error <= 1.0);
    }

    #[test]
    fn evaluate_tsv_shape() {
        let universe = Universe::with_null(6).unwrap();
        let center = TopKList::new(vec![1, 2], universe).unwrap();
        let model = TopKGmm::unweighted(center, 0.5, 1.0).unwrap();
        let data = synthetic_dataset(&model, 100, 3);
        let config = EvalConfig {
            num_assortments: 4,
            assortment_size: 2,
            samples_per_assortment: 100,
            seed: 1,
        };
        let predictor = GmmPredictor::new(model).unwrap();
        let report = evaluate(&predictor, &data, &config).unwrap();
        let mut buf = Vec::new();
        report.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2 + 4 + 1);
        assert!(text.lines().last().unwrap().starts_with("mean\t"));
    }

    #[test]
    fn grid_search_single_cell_and_self_consistency() {
        // Strong-signal synthetic data: the argmin should sit within one
        // grid step of the generating parameters.
        let universe = Universe::with_null(16).unwrap();
        let center = TopKList::new(vec![3, 7, 1, 12], universe).unwrap();
        let (p0, b0) = (1.0, 0.6);
        let truth = TopKGmm::unweighted(center, b0, p0).unwrap();
        let data = synthetic_dataset(&truth, 4000, 99);
        let (train, test) = data.split(0.8, 5).unwrap();

        let config = GridConfig {
            p_grid: vec![0.5, 1.0, 2.0],
            beta_grid: vec![0.3, 0.6, 1.2],
            learn_m: 400,
            k_cap: 15,
            learn_seed: 11,
            eval: EvalConfig {
                num_assortments: 30,
                assortment_size: 4,
                samples_per_assortment: 2000,
                seed: 31,
            },
        };
        let result = grid_search(&train, &test, &config).unwrap();
        assert_eq!(result.errors.len(), 3);
        assert_eq!(result.errors[0].len(), 3);
        let (bp, bb, be) = result.best;
        let pi = config.p_grid.iter().position(|&x| x == bp).unwrap();
        let bi = config.beta_grid.iter().position(|&x| x == bb).unwrap();
        assert!((pi as i64 - 1).abs() <= 1, "best p {bp}");
        assert!((bi as i64 - 1).abs() <= 1, "best beta {bb}");
        assert!(be <= result.errors[0][0] + 1e-12);

        // Single cell grid still works.
        let single = GridConfig {
            p_grid: vec![1.0],
            beta_grid: vec![0.6],
            ..config.clone()
        };
        let r = grid_search(&train, &test, &single).unwrap();
        assert_eq!(r.errors, vec![vec![r.best.2]]);

        // Reproducible per seed.
        let again = grid_search(&train, &test, &config).unwrap();
        assert_eq!(result.errors, again.errors);
        assert_eq!(result.center.items(), again.center.items());
    }

    #[test]
    fn pipeline_smoke_from_plain_file() {
        let text = "1 2 3\n2 1 3\n1 3 2\n1 2 4\n2 1 4\n1 2 3\n3 1 2\n1 2 5\n";
        let data = read_orders(text.as_bytes(), OrderFormat::Plain, Some(7)).unwrap();
        let mut oracle = data.oracle(9).unwrap();
        let learned = bucchoi2(&mut oracle, 300).unwrap();
        // Items 1 and 2 dominate this toy data.
        assert!(learned.items().starts_with(&[1]));
        assert!(learned.k_hat() >= 2);
    }
}
