//! Two-stage Bayesian optimization with a Tree-structured Parzen Estimator
//! style surrogate.
//!
//! Stage 1 scores trials on a validation split: the first
//! [`STARTUP_TRIALS`] are uniform draws, later ones are TPE proposals.
//! Stage 2 re-scores the stage-1 top five with cross-validation, then
//! continues with TPE proposals fitted on the stage-2 history only. The
//! result is the best stage-2 trial.
//!
//! A proposal splits past trials into the top `γ` fraction ("good") and the
//! rest, builds a Parzen density for each group per parameter (Gaussian
//! kernels in unit coordinates plus a uniform prior component; smoothed
//! frequencies for categoricals), draws candidates from the good density,
//! and keeps the one with the highest density ratio `l(x) / g(x)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{best_of, run_trial, EvalMode, Gene, Objective, SearchSpace, Trial, TuneBudget, TuneResult};
use crate::error::{Error, Result};
use crate::seed;

pub const STARTUP_TRIALS: usize = 10;
pub const GAMMA: f64 = 0.25;
pub const CANDIDATES: usize = 64;
pub const STAGE2_SEEDS: usize = 5;

/// Kernel bandwidth in unit coordinates for `n` observations.
fn bandwidth(n: usize) -> f64 {
    (0.5 * (n.max(1) as f64).powf(-0.2)).max(0.05)
}

fn gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Parzen density over one parameter's coordinates.
struct Parzen {
    points: Vec<Gene>,
    cardinality: Option<usize>,
    sigma: f64,
}

impl Parzen {
    fn new(points: Vec<Gene>, cardinality: Option<usize>) -> Self {
        let sigma = bandwidth(points.len());
        Self {
            points,
            cardinality,
            sigma,
        }
    }

    fn density(&self, g: Gene) -> f64 {
        let n = self.points.len() as f64;
        match (g, self.cardinality) {
            (Gene::Cat(c), Some(k)) => {
                let hits = self.points.iter().filter(|p| **p == Gene::Cat(c)).count() as f64;
                (hits + 1.0) / (n + k as f64)
            }
            (Gene::Unit(u), None) => {
                let kernels: f64 = self
                    .points
                    .iter()
                    .map(|p| match p {
                        Gene::Unit(m) => gaussian(u, *m, self.sigma),
                        Gene::Cat(_) => 0.0,
                    })
                    .sum();
                // uniform prior on [0, 1] weighs as one extra observation
                (kernels + 1.0) / (n + 1.0)
            }
            _ => 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Gene {
        let n = self.points.len();
        if let Some(k) = self.cardinality {
            // smoothed frequencies: every category carries one pseudo-count
            let pick = rng.gen_range(0..n + k);
            return if pick < n {
                self.points[pick]
            } else {
                Gene::Cat(pick - n)
            };
        }
        let pick = rng.gen_range(0..=n);
        if pick == n {
            return Gene::Unit(rng.gen::<f64>());
        }
        let Gene::Unit(mu) = self.points[pick] else {
            return Gene::Unit(rng.gen::<f64>());
        };
        let noise = Normal::new(0.0, self.sigma).expect("positive bandwidth");
        Gene::Unit((mu + noise.sample(rng)).clamp(0.0, 1.0))
    }
}

/// Propose the next point from `(genes, objective)` history.
pub(crate) fn tpe_propose(space: &SearchSpace, history: &[(Vec<Gene>, f64)], rng: &mut ChaCha8Rng) -> Vec<Gene> {
    let mut ranked: Vec<usize> = (0..history.len()).collect();
    ranked.sort_by(|&a, &b| history[b].1.total_cmp(&history[a].1).then(a.cmp(&b)));
    let n_good = ((GAMMA * history.len() as f64).ceil() as usize).clamp(1, history.len());
    let (good, bad) = ranked.split_at(n_good);

    let per_param: Vec<(Parzen, Parzen)> = space
        .domains()
        .enumerate()
        .map(|(j, d)| {
            let pick = |idx: &[usize]| idx.iter().map(|&i| history[i].0[j]).collect::<Vec<_>>();
            (
                Parzen::new(pick(good), d.cardinality()),
                Parzen::new(pick(bad), d.cardinality()),
            )
        })
        .collect();

    let mut best: Option<(f64, Vec<Gene>)> = None;
    for _ in 0..CANDIDATES {
        let cand: Vec<Gene> = per_param.iter().map(|(l, _)| l.sample(rng)).collect();
        let score: f64 = per_param
            .iter()
            .zip(&cand)
            .map(|((l, g), x)| l.density(*x).ln() - g.density(*x).ln())
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    best.expect("at least one candidate").1
}

/// Run both stages; returns the best stage-2 trial and the full log.
pub fn tune_bo<O: Objective + ?Sized>(
    space: &SearchSpace,
    objective: &O,
    budget: &TuneBudget,
    seed: u64,
) -> Result<TuneResult> {
    budget.validate()?;
    let mut rng = seed::rng(seed::derive(seed, "bo"));
    let mut trials: Vec<Trial> = Vec::new();

    let mut stage1: Vec<(Vec<Gene>, f64)> = Vec::new();
    for i in 0..budget.bo_stage1_trials {
        let genes = if i < STARTUP_TRIALS {
            space.sample(&mut rng)
        } else {
            tpe_propose(space, &stage1, &mut rng)
        };
        let t = run_trial(
            objective,
            space.decode(&genes),
            EvalMode::Validation,
            trials.len(),
            "bo_stage1",
            seed,
        );
        stage1.push((genes, t.objective));
        trials.push(t);
    }

    let mut ranked: Vec<usize> = (0..stage1.len()).collect();
    ranked.sort_by(|&a, &b| stage1[b].1.total_cmp(&stage1[a].1).then(a.cmp(&b)));
    let mut stage2: Vec<(Vec<Gene>, f64)> = Vec::new();
    for i in 0..budget.bo_stage2_trials {
        let genes = match ranked.get(i).filter(|_| i < STAGE2_SEEDS) {
            Some(&r) => stage1[r].0.clone(),
            None => tpe_propose(space, &stage2, &mut rng),
        };
        let t = run_trial(
            objective,
            space.decode(&genes),
            EvalMode::CrossValidation,
            trials.len(),
            "bo_stage2",
            seed,
        );
        stage2.push((genes, t.objective));
        trials.push(t);
    }

    let best = best_of(trials.iter().filter(|t| t.stage == "bo_stage2"))
        .cloned()
        .ok_or_else(|| Error::InvalidParam("no stage-2 trials".into()))?;
    Ok(TuneResult { best, trials })
}
