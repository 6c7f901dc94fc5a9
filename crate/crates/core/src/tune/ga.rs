//! Genetic algorithm over unit-coordinate genomes.
//!
//! The first generation is the initial population (seeded entries first,
//! uniform draws after). Each later generation keeps the elite unchanged
//! and fills the rest with children bred by tournament selection, uniform
//! crossover and Gaussian mutation. Fine-tune generations then restrict the
//! pool to the best individuals seen so far and halve the mutation scale.
//! Elites carry their score forward and are not evaluated again.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{best_of, run_trial, EvalMode, Gene, Objective, Params, SearchSpace, Trial, TuneBudget, TuneResult};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOperators {
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Mutation standard deviation in unit coordinates.
    pub sigma: f64,
    pub elitism: usize,
    pub finetune_pool: usize,
}

impl Default for GaOperators {
    fn default() -> Self {
        Self {
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            sigma: 0.1,
            elitism: 1,
            finetune_pool: 10,
        }
    }
}

impl GaOperators {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.tournament_size == 0
            || self.finetune_pool == 0
            || !rate_ok(self.crossover_rate)
            || !rate_ok(self.mutation_rate)
            || !(self.sigma.is_finite() && self.sigma >= 0.0)
        {
            return Err(Error::InvalidParam(format!("invalid GA operators: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Individual {
    genes: Vec<Gene>,
    trial: usize,
    score: f64,
}

fn rank(pop: &mut [Individual]) {
    pop.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.trial.cmp(&b.trial)));
}

fn tournament<'a>(pop: &'a [Individual], size: usize, rng: &mut ChaCha8Rng) -> &'a Individual {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.gen_range(0..pop.len())];
        if c.score > best.score || (c.score == best.score && c.trial < best.trial) {
            best = c;
        }
    }
    best
}

fn breed(space: &SearchSpace, pop: &[Individual], ops: &GaOperators, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Gene> {
    let a = tournament(pop, ops.tournament_size, rng);
    let b = tournament(pop, ops.tournament_size, rng);
    let cross = rng.gen::<f64>() < ops.crossover_rate;
    let mut child: Vec<Gene> = a
        .genes
        .iter()
        .zip(&b.genes)
        .map(|(x, y)| if cross && rng.gen::<bool>() { *y } else { *x })
        .collect();
    for (g, d) in child.iter_mut().zip(space.domains()) {
        if rng.gen::<f64>() >= ops.mutation_rate {
            continue;
        }
        *g = match (*g, d.cardinality()) {
            (Gene::Cat(_), Some(k)) => Gene::Cat(rng.gen_range(0..k)),
            (Gene::Unit(u), _) if sigma > 0.0 => {
                let n = Normal::new(0.0, sigma).expect("positive sigma");
                Gene::Unit((u + n.sample(rng)).clamp(0.0, 1.0))
            }
            (other, _) => other,
        };
    }
    child
}

/// Run the GA. Evaluations use cross-validation mode.
pub fn tune_ga<O: Objective + ?Sized>(
    space: &SearchSpace,
    objective: &O,
    budget: &TuneBudget,
    ops: &GaOperators,
    seed: u64,
    initial_population: Option<&[Params]>,
) -> Result<TuneResult> {
    budget.validate()?;
    ops.validate()?;
    if ops.elitism >= budget.ga_population || ops.elitism >= ops.finetune_pool {
        return Err(Error::InvalidParam(format!(
            "elitism {} must be below population {} and fine-tune pool {}",
            ops.elitism, budget.ga_population, ops.finetune_pool
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, "ga"));
    let mut trials: Vec<Trial> = Vec::new();
    let evaluate = |genes: Vec<Gene>, stage: &str, trials: &mut Vec<Trial>| {
        let t = run_trial(
            objective,
            space.decode(&genes),
            EvalMode::CrossValidation,
            trials.len(),
            stage,
            seed,
        );
        let ind = Individual {
            genes,
            trial: t.index,
            score: t.objective,
        };
        trials.push(t);
        ind
    };

    let mut seeds: Vec<Vec<Gene>> = Vec::new();
    for p in initial_population.unwrap_or(&[]).iter().take(budget.ga_population) {
        seeds.push(space.encode(p)?);
    }
    while seeds.len() < budget.ga_population {
        seeds.push(space.sample(&mut rng));
    }
    let mut pop: Vec<Individual> = seeds.into_iter().map(|g| evaluate(g, "ga_gen0", &mut trials)).collect();
    let mut all = pop.clone();

    let step = |pop: &mut Vec<Individual>,
                all: &mut Vec<Individual>,
                size: usize,
                sigma: f64,
                stage: &str,
                trials: &mut Vec<Trial>,
                rng: &mut ChaCha8Rng| {
        rank(pop);
        let mut next: Vec<Individual> = pop[..ops.elitism].to_vec();
        while next.len() < size {
            let child = breed(space, pop, ops, sigma, rng);
            let ind = evaluate(child, stage, trials);
            all.push(ind.clone());
            next.push(ind);
        }
        *pop = next;
    };

    for g in 1..budget.ga_generations {
        step(
            &mut pop,
            &mut all,
            budget.ga_population,
            ops.sigma,
            &format!("ga_gen{g}"),
            &mut trials,
            &mut rng,
        );
    }
    rank(&mut all);
    let pool = ops.finetune_pool.min(all.len());
    pop = all[..pool].to_vec();
    for g in 0..budget.ga_finetune_generations {
        step(
            &mut pop,
            &mut all,
            pool,
            ops.sigma / 2.0,
            &format!("ga_finetune{g}"),
            &mut trials,
            &mut rng,
        );
    }

    let best = best_of(&trials)
        .cloned()
        .ok_or_else(|| Error::InvalidParam("no GA trials".into()))?;
    Ok(TuneResult { best, trials })
}
