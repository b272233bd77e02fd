//! Real-coded genetic algorithm with seeding and elitism.
//!
//! One generation is: evaluate every individual (one evaluator call each,
//! elites included), record the scored population, then build the next
//! population from the elites plus tournament-selected, blended and
//! mutated children. Failed evaluations score [`FITNESS_MIN`] and the run
//! carries on.

mod evaluator;

pub use evaluator::{EvalError, Evaluator, HttpEvaluator, LocalEvaluator, BACKOFF_BASE, BACKOFF_FACTOR};

use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{ControllerParams, FITNESS_MAX, FITNESS_MIN, GENE_COUNT, GENE_HIGH, GENE_LOW};

/// Fitness assigned to an individual whose evaluation failed.
pub const FAILURE_SENTINEL: f64 = FITNESS_MIN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaError {
    #[error("invalid GA config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds {
    pub low: f64,
    pub high: f64,
}

impl GeneBounds {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }
}

impl Default for GeneBounds {
    fn default() -> Self {
        GeneBounds {
            low: GENE_LOW,
            high: GENE_HIGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub pop_size: usize,
    pub n_generations: usize,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of the gene range.
    pub mutation_sigma: f64,
    pub gene_bounds: [GeneBounds; GENE_COUNT],
    pub rng_seed: u64,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    /// Cap on concurrent evaluations within a generation; unset means the
    /// whole population is in flight at once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
}

impl Default for GaConfig {
    /// Desk-scale settings: 10 individuals over 20 generations.
    fn default() -> Self {
        GaConfig {
            pop_size: 10,
            n_generations: 20,
            elite_count: 1,
            tournament_size: 2,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: 0.1,
            gene_bounds: [GeneBounds::default(); GENE_COUNT],
            rng_seed: 42,
            request_timeout_ms: 10_000,
            max_retries: 2,
            max_in_flight: None,
        }
    }
}

impl GaConfig {
    /// 50 individuals over 80 generations, as used for full-size trials.
    pub fn full_scale() -> Self {
        GaConfig {
            pop_size: 50,
            n_generations: 80,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::InvalidConfig(m));
        if self.pop_size < 2 {
            return bad(format!("pop_size must be >= 2, got {}", self.pop_size));
        }
        if self.n_generations == 0 {
            return bad("n_generations must be > 0".into());
        }
        if self.elite_count == 0 || self.elite_count >= self.pop_size {
            return bad(format!(
                "elite_count must satisfy 0 < elite_count < pop_size, got {} with pop_size {}",
                self.elite_count, self.pop_size
            ));
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be > 0".into());
        }
        for (name, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.mutation_sigma.is_finite() && self.mutation_sigma >= 0.0) {
            return bad(format!("mutation_sigma must be >= 0, got {}", self.mutation_sigma));
        }
        for (i, b) in self.gene_bounds.iter().enumerate() {
            if !(b.low.is_finite() && b.high.is_finite() && b.low < b.high) {
                return bad(format!("gene {i}: bounds must satisfy low < high"));
            }
        }
        if self.max_in_flight == Some(0) {
            return bad("max_in_flight must be > 0 when set".into());
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    fn clamp_genes(&self, genes: [f64; GENE_COUNT]) -> ControllerParams {
        let mut out = genes;
        for (g, b) in out.iter_mut().zip(&self.gene_bounds) {
            *g = b.clamp(*g);
        }
        ControllerParams::from_array(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Individual {
    pub genes: ControllerParams,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(genes: ControllerParams) -> Self {
        Individual { genes, fitness: None }
    }

    /// Fitness used for ranking; unevaluated individuals rank as failures.
    pub fn score(&self) -> f64 {
        self.fitness.unwrap_or(FAILURE_SENTINEL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredIndividual {
    pub genes: ControllerParams,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    pub individuals: Vec<ScoredIndividual>,
    pub best_fitness: f64,
}

impl GenerationRecord {
    fn from_population(index: usize, pop: &[Individual]) -> Self {
        let individuals: Vec<ScoredIndividual> = pop
            .iter()
            .map(|ind| ScoredIndividual {
                genes: ind.genes,
                fitness: ind.score(),
            })
            .collect();
        let best_fitness = individuals
            .iter()
            .map(|s| s.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        GenerationRecord {
            index,
            individuals,
            best_fitness,
        }
    }

    pub fn max_fitness(&self) -> f64 {
        self.best_fitness
    }
}

/// Index 0 is `seed` verbatim; the rest are uniform within the gene bounds.
pub fn init_population<R: Rng + ?Sized>(cfg: &GaConfig, seed: ControllerParams, rng: &mut R) -> Vec<Individual> {
    let mut pop = Vec::with_capacity(cfg.pop_size);
    if cfg.pop_size == 0 {
        return pop;
    }
    pop.push(Individual::new(seed));
    while pop.len() < cfg.pop_size {
        let mut genes = [0.0; GENE_COUNT];
        for (g, b) in genes.iter_mut().zip(&cfg.gene_bounds) {
            *g = rng.random_range(b.low..=b.high);
        }
        pop.push(Individual::new(ControllerParams::from_array(genes)));
    }
    pop
}

/// Scores every individual with one evaluator call each, at most
/// `max_in_flight` at a time. Failures and out-of-range answers become
/// [`FAILURE_SENTINEL`].
pub async fn evaluate_population<E: Evaluator>(
    population: &mut [Individual],
    evaluator: &E,
    max_in_flight: Option<usize>,
) {
    let cap = max_in_flight.unwrap_or(population.len()).max(1);
    let genes: Vec<ControllerParams> = population.iter().map(|ind| ind.genes).collect();
    let results: Vec<f64> = stream::iter(genes)
        .map(|g| evaluate_one(evaluator, g))
        .buffered(cap)
        .collect()
        .await;
    for (ind, f) in population.iter_mut().zip(results) {
        ind.fitness = Some(f);
    }
}

async fn evaluate_one<E: Evaluator>(evaluator: &E, genes: ControllerParams) -> f64 {
    match evaluator.evaluate(&genes).await {
        Ok(f) if (FITNESS_MIN..=FITNESS_MAX).contains(&f) => f,
        Ok(f) => {
            tracing::warn!(fitness = f, "evaluator returned out-of-range fitness");
            FAILURE_SENTINEL
        }
        Err(e) => {
            tracing::debug!(error = %e, "evaluation failed, using sentinel");
            FAILURE_SENTINEL
        }
    }
}

/// Index of the fittest among `k` uniform draws with replacement. Ties go
/// to the lower index.
pub fn tournament_select<R: Rng + ?Sized>(population: &[Individual], k: usize, rng: &mut R) -> usize {
    let n = population.len();
    let mut best = rng.random_range(0..n);
    for _ in 1..k {
        let c = rng.random_range(0..n);
        let (fc, fb) = (population[c].score(), population[best].score());
        if fc > fb || (fc == fb && c < best) {
            best = c;
        }
    }
    best
}

/// Per-gene arithmetic blend with the given mixing weights, before clamping.
pub fn blend(
    a: &ControllerParams,
    b: &ControllerParams,
    alphas: &[f64; GENE_COUNT],
) -> ([f64; GENE_COUNT], [f64; GENE_COUNT]) {
    let (a, b) = (a.to_array(), b.to_array());
    let mut ca = [0.0; GENE_COUNT];
    let mut cb = [0.0; GENE_COUNT];
    for i in 0..GENE_COUNT {
        let w = alphas[i];
        ca[i] = w * a[i] + (1.0 - w) * b[i];
        cb[i] = (1.0 - w) * a[i] + w * b[i];
    }
    (ca, cb)
}

/// With probability `crossover_rate` blends the parents gene by gene;
/// otherwise returns copies. Children are clamped to the gene bounds.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &ControllerParams,
    parent_b: &ControllerParams,
    cfg: &GaConfig,
    rng: &mut R,
) -> (ControllerParams, ControllerParams) {
    if rng.random::<f64>() >= cfg.crossover_rate {
        return (
            cfg.clamp_genes(parent_a.to_array()),
            cfg.clamp_genes(parent_b.to_array()),
        );
    }
    let mut alphas = [0.0; GENE_COUNT];
    for a in alphas.iter_mut() {
        *a = rng.random::<f64>();
    }
    let (ca, cb) = blend(parent_a, parent_b, &alphas);
    (cfg.clamp_genes(ca), cfg.clamp_genes(cb))
}

/// Gaussian perturbation of each gene with probability `mutation_rate`.
pub fn mutate<R: Rng + ?Sized>(genes: &ControllerParams, cfg: &GaConfig, rng: &mut R) -> ControllerParams {
    let mut out = genes.to_array();
    for (g, b) in out.iter_mut().zip(&cfg.gene_bounds) {
        if rng.random::<f64>() < cfg.mutation_rate {
            let sd = cfg.mutation_sigma * b.width();
            if let Ok(noise) = Normal::new(0.0, sd) {
                *g += noise.sample(rng);
            }
        }
    }
    cfg.clamp_genes(out)
}

/// Indices of the `count` fittest individuals, best first, ties by index.
pub fn elite_indices(population: &[Individual], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..population.len()).collect();
    // Stable sort keeps lower indices first among equal scores.
    idx.sort_by(|&a, &b| population[b].score().total_cmp(&population[a].score()));
    idx.truncate(count);
    idx
}

/// Elites copied verbatim, remaining slots filled by select, cross, mutate.
pub fn next_generation<R: Rng + ?Sized>(population: &[Individual], cfg: &GaConfig, rng: &mut R) -> Vec<Individual> {
    let target = population.len();
    let mut next: Vec<Individual> = elite_indices(population, cfg.elite_count.min(target))
        .into_iter()
        .map(|i| Individual::new(population[i].genes))
        .collect();
    while next.len() < target {
        let a = tournament_select(population, cfg.tournament_size, rng);
        let b = tournament_select(population, cfg.tournament_size, rng);
        let (ca, cb) = crossover(&population[a].genes, &population[b].genes, cfg, rng);
        next.push(Individual::new(mutate(&ca, cfg, rng)));
        if next.len() < target {
            next.push(Individual::new(mutate(&cb, cfg, rng)));
        }
    }
    next
}

/// One complete, timed GA execution.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRun {
    pub generations: Vec<GenerationRecord>,
    pub start_ts: DateTime<Utc>,
    pub end_ts: DateTime<Utc>,
    pub runtime_s: f64,
    pub evaluations: u64,
}

impl PopulationRun {
    pub fn best_fitness(&self) -> f64 {
        self.generations
            .last()
            .map(|g| g.best_fitness)
            .unwrap_or(FAILURE_SENTINEL)
    }
}

pub async fn run_population<E: Evaluator>(
    cfg: &GaConfig,
    evaluator: &E,
    seed: ControllerParams,
) -> Result<PopulationRun, GaError> {
    run_population_observed(cfg, evaluator, seed, |_| {}).await
}

/// Like [`run_population`], calling `on_generation` after each generation
/// has been evaluated and recorded.
pub async fn run_population_observed<E, F>(
    cfg: &GaConfig,
    evaluator: &E,
    seed: ControllerParams,
    mut on_generation: F,
) -> Result<PopulationRun, GaError>
where
    E: Evaluator,
    F: FnMut(&GenerationRecord),
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let start_ts = Utc::now();
    let clock = Instant::now();

    let mut population = init_population(cfg, seed, &mut rng);
    let mut generations = Vec::with_capacity(cfg.n_generations);
    let mut evaluations = 0u64;
    for index in 0..cfg.n_generations {
        evaluate_population(&mut population, evaluator, cfg.max_in_flight).await;
        evaluations += population.len() as u64;
        let record = GenerationRecord::from_population(index, &population);
        on_generation(&record);
        generations.push(record);
        if index + 1 < cfg.n_generations {
            population = next_generation(&population, cfg, &mut rng);
        }
    }

    let runtime_s = clock.elapsed().as_secs_f64();
    let end_ts = start_ts.max(Utc::now());
    Ok(PopulationRun {
        generations,
        start_ts,
        end_ts,
        runtime_s,
        evaluations,
    })
}
