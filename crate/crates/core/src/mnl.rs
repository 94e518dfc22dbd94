//! Multinomial-logit baseline: score-proportional choice probabilities and a
//! maximum-likelihood estimator over observed choices.

use nalgebra::{DMatrix, DVector};

use crate::choice::{Assortment, ChoiceDistribution, ChoiceObservation};
use crate::error::{Error, Result};
use crate::types::{ItemId, Universe};

/// One positive score per purchase option; index 0 is the no-purchase option.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlModel {
    scores: Vec<f64>,
}

impl MnlModel {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidParameter(
                "an MNL model needs at least two options".into(),
            ));
        }
        for (id, &s) in scores.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::MissingScore(id as u32));
            }
        }
        Ok(MnlModel { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn universe(&self) -> Universe {
        Universe::with_null(self.scores.len() as u32).expect("validated at construction")
    }

    fn score_of(&self, id: ItemId) -> Result<f64> {
        self.scores
            .get(id as usize)
            .copied()
            .ok_or(Error::MissingScore(id))
    }
}

/// Selection probability proportional to score within the offered set.
pub fn mnl_choice_prob(model: &MnlModel, a: &Assortment) -> Result<ChoiceDistribution> {
    let members = a.members_with_null();
    let mut entries = Vec::with_capacity(members.len());
    let mut total = 0.0;
    for &m in &members {
        let s = model.score_of(m)?;
        entries.push((m, s));
        total += s;
    }
    for e in entries.iter_mut() {
        e.1 /= total;
    }
    ChoiceDistribution::from_sorted(entries)
}

const CLAMP: f64 = 30.0;
const RIDGE: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 200;

/// Maximum-likelihood MNL scores from a choice log, in log-score space with
/// the no-purchase score pinned to 1 (log-score 0).
///
/// Newton iterations on the mean log-likelihood with a tiny ridge; converged
/// when the gradient infinity-norm drops below 1e-8. Log-scores are clamped
/// to +-30 so options that are offered but never chosen stay finite.
pub fn mnl_fit(log: &[ChoiceObservation], universe: Universe) -> Result<MnlModel> {
    if log.is_empty() {
        return Err(Error::DegenerateLog("no observations".into()));
    }
    let u = universe.size() as usize;
    let mut offered = vec![false; u];
    offered[0] = true;
    for obs in log {
        if obs.assortment.universe() != universe {
            return Err(Error::UniverseMismatch);
        }
        for &id in obs.assortment.items() {
            offered[id as usize] = true;
        }
    }
    if let Some(id) = offered.iter().position(|&x| !x) {
        return Err(Error::DegenerateLog(format!("item {id} never offered")));
    }

    let t_inv = 1.0 / log.len() as f64;
    // theta[0] is pinned; free coordinates are 1..u.
    let mut theta = vec![0.0f64; u];

    let objective = |theta: &[f64]| -> f64 {
        let mut nll = 0.0;
        for obs in log {
            let members = obs.assortment.members_with_null();
            let mx = members
                .iter()
                .map(|&m| theta[m as usize])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = members
                .iter()
                .map(|&m| (theta[m as usize] - mx).exp())
                .sum::<f64>()
                .ln()
                + mx;
            nll += lse - theta[obs.chosen as usize];
        }
        let ridge: f64 = theta[1..].iter().map(|x| x * x).sum::<f64>();
        nll * t_inv + 0.5 * RIDGE * ridge
    };

    for _ in 0..MAX_ITERS {
        let n_free = u - 1;
        let mut grad = DVector::<f64>::zeros(n_free);
        let mut hess = DMatrix::<f64>::zeros(n_free, n_free);
        for obs in log {
            let members = obs.assortment.members_with_null();
            let mx = members
                .iter()
                .map(|&m| theta[m as usize])
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = members
                .iter()
                .map(|&m| (theta[m as usize] - mx).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
            for (i, &mi) in members.iter().enumerate() {
                if mi == 0 {
                    continue;
                }
                let fi = mi as usize - 1;
                let indicator = if mi == obs.chosen { 1.0 } else { 0.0 };
                grad[fi] += (probs[i] - indicator) * t_inv;
                for (j, &mj) in members.iter().enumerate() {
                    if mj == 0 {
                        continue;
                    }
                    let fj = mj as usize - 1;
                    let d = if i == j { probs[i] } else { 0.0 };
                    hess[(fi, fj)] += (d - probs[i] * probs[j]) * t_inv;
                }
            }
        }
        for i in 0..n_free {
            grad[i] += RIDGE * theta[i + 1];
            hess[(i, i)] += RIDGE;
        }

        // Projected-gradient convergence: coordinates pinned at the clamp do
        // not count when the gradient pushes outward.
        let max_grad = (0..n_free)
            .map(|i| {
                let th = theta[i + 1];
                if (th <= -CLAMP && grad[i] > 0.0) || (th >= CLAMP && grad[i] < 0.0) {
                    0.0
                } else {
                    grad[i].abs()
                }
            })
            .fold(0.0f64, f64::max);
        if max_grad < GRAD_TOL {
            let scores = theta.iter().map(|t| t.exp()).collect();
            return MnlModel::new(scores);
        }

        let mut jitter = 0.0;
        let step = loop {
            let mut h = hess.clone();
            for i in 0..n_free {
                h[(i, i)] += jitter;
            }
            match h.cholesky() {
                Some(ch) => break ch.solve(&grad),
                None => {
                    jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
                    if jitter > 1.0 {
                        return Err(Error::NonConvergence(
                            "MNL Hessian not positive definite".into(),
                        ));
                    }
                }
            }
        };

        // Backtracking line search on the (strictly convex) objective.
        let base = objective(&theta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = theta.clone();
            for i in 0..n_free {
                trial[i + 1] = (theta[i + 1] - alpha * step[i]).clamp(-CLAMP, CLAMP);
            }
            if objective(&trial) <= base {
                theta = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent direction left at this point: treat as converged if
            // the projected gradient is already tiny, otherwise fail.
            if max_grad < 1e-6 {
                let scores = theta.iter().map(|t| t.exp()).collect();
                return MnlModel::new(scores);
            }
            return Err(Error::NonConvergence("MNL line search stalled".into()));
        }
    }
    Err(Error::NonConvergence(format!(
        "MNL did not reach gradient tolerance in {MAX_ITERS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn with_null(u: u32) -> Universe {
        Universe::with_null(u).unwrap()
    }

    fn assortment(items: &[u32], universe: Universe) -> Assortment {
        Assortment::new(items.to_vec(), universe).unwrap()
    }

    #[test]
    fn score_proportional_probabilities() {
        let model = MnlModel::new(vec![1.0, 2.0, 1.0]).unwrap();
        let a = assortment(&[1, 2], with_null(3));
        let dist = mnl_choice_prob(&model, &a).unwrap();
        assert!((dist.prob(1) - 0.5).abs() < 1e-15);
        assert!((dist.prob(2) - 0.25).abs() < 1e-15);
        assert!((dist.prob(0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn equal_scores_are_uniform() {
        let model = MnlModel::new(vec![3.0; 5]).unwrap();
        let a = assortment(&[1, 3, 4], with_null(5));
        let dist = mnl_choice_prob(&model, &a).unwrap();
        for &(_, p) in dist.entries() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_assortment_goes_to_null() {
        let model = MnlModel::new(vec![1.0, 2.0]).unwrap();
        let a = assortment(&[], with_null(2));
        let dist = mnl_choice_prob(&model, &a).unwrap();
        assert_eq!(dist.entries(), &[(0, 1.0)]);
    }

    #[test]
    fn binary_closed_form_recovery() {
        // Item 1 chosen from {1} twice as often as the no-purchase option:
        // the MLE score ratio is exactly 2.
        let universe = with_null(2);
        let a = assortment(&[1], universe);
        let mut log = Vec::new();
        for _ in 0..400 {
            log.push(ChoiceObservation::new(a.clone(), 1).unwrap());
            log.push(ChoiceObservation::new(a.clone(), 1).unwrap());
            log.push(ChoiceObservation::new(a.clone(), 0).unwrap());
        }
        let model = mnl_fit(&log, universe).unwrap();
        let ratio = model.scores()[1] / model.scores()[0];
        assert!((ratio - 2.0).abs() < 1e-6, "ratio {ratio}");
    }

    #[test]
    fn recovers_known_scores() {
        let universe = with_null(6);
        let truth = MnlModel::new(vec![1.0, 2.0, 0.5, 1.5, 3.0, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut log = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let mut pool: Vec<u32> = (1..6).collect();
            for i in 0..3 {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let a = assortment(&pool[..3], universe);
            let dist = mnl_choice_prob(&truth, &a).unwrap();
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = 0;
            for &(id, p) in dist.entries() {
                acc += p;
                if r < acc {
                    chosen = id;
                    break;
                }
            }
            log.push(ChoiceObservation::new(a, chosen).unwrap());
        }
        let fitted = mnl_fit(&log, universe).unwrap();
        for id in 0..6 {
            let rel = (fitted.scores()[id] - truth.scores()[id]).abs() / truth.scores()[id];
            assert!(rel < 0.05, "item {id}: rel error {rel}");
        }
    }

    #[test]
    fn degenerate_logs_rejected() {
        let universe = with_null(3);
        assert!(matches!(
            mnl_fit(&[], universe),
            Err(Error::DegenerateLog(_))
        ));
        // Item 2 never offered.
        let a = assortment(&[1], universe);
        let log = vec![ChoiceObservation::new(a, 1).unwrap()];
        assert!(matches!(
            mnl_fit(&log, universe),
            Err(Error::DegenerateLog(_))
        ));
    }

    #[test]
    fn never_chosen_option_stays_finite() {
        let universe = with_null(3);
        let a = assortment(&[1, 2], universe);
        let mut log = Vec::new();
        for _ in 0..200 {
            log.push(ChoiceObservation::new(a.clone(), 1).unwrap());
        }
        let model = mnl_fit(&log, universe).unwrap();
        assert!(model.scores().iter().all(|s| s.is_finite() && *s > 0.0));
        assert!(model.scores()[1] > model.scores()[2]);
    }
}
