//! Population-based evolutionary search shared by the covering, ambulance and
//! bus solvers.
//!
//! The kernel is generic over a [`Problem`], which supplies the genome type,
//! a fitness to minimize, and its variation operators. Fitness values are
//! compared with `PartialOrd`, so lexicographic tuples work directly.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fmt::Debug;
use std::hash::{Hash, Hasher};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type EvoRng = ChaCha8Rng;

/// Which search a solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Exact search within the solver's exhaustive bounds, evolutionary beyond.
    #[default]
    Auto,
    Exact,
    Evo,
    Greedy,
}

/// Which search actually produced a solution, with the evolutionary
/// best-fitness history when one ran.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SolveInfo {
    pub mode: SolverMode,
    pub history: Vec<Vec<f64>>,
}

impl SolveInfo {
    pub fn exact() -> Self {
        Self {
            mode: SolverMode::Exact,
            history: Vec::new(),
        }
    }

    pub fn greedy() -> Self {
        Self {
            mode: SolverMode::Greedy,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvoConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            elitism: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvoError {
    #[error("at least one seed candidate is required")]
    NoSeeds,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        if self.population_size < 2 {
            return Err(EvoError::Config("population_size must be at least 2"));
        }
        if self.generations < 1 {
            return Err(EvoError::Config("generations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(EvoError::Config("crossover_rate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(EvoError::Config("mutation_rate must lie in [0, 1]"));
        }
        if self.elitism < 1 || self.elitism >= self.population_size {
            return Err(EvoError::Config("elitism must lie in [1, population_size)"));
        }
        Ok(())
    }
}

/// A minimization problem over some genome encoding.
pub trait Problem: Sync {
    type Genome: Clone + Debug + Hash + Send + Sync;
    type Fitness: Clone + Debug + PartialOrd + Send;

    fn fitness(&self, genome: &Self::Genome) -> Self::Fitness;

    fn crossover(&self, a: &Self::Genome, b: &Self::Genome, rng: &mut EvoRng) -> Self::Genome;

    fn mutate(&self, genome: &mut Self::Genome, rng: &mut EvoRng);

    /// Deterministic fix-up applied after every variation step.
    fn repair(&self, _genome: &mut Self::Genome) {}
}

#[derive(Debug, Clone)]
pub struct Evolution<G, F> {
    pub best: G,
    pub best_fitness: F,
    /// Best-so-far fitness after each generation; never worsens.
    pub history: Vec<F>,
}

fn genome_hash<G: Hash>(g: &G) -> u64 {
    let mut h = DefaultHasher::new();
    g.hash(&mut h);
    h.finish()
}

fn fitness_cmp<F: PartialOrd>(a: &F, b: &F) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Runs the generational loop and returns the best genome ever evaluated.
///
/// Generation 0 is the seeded population; each further generation keeps the
/// `elitism` best members and fills the rest by binary tournament, crossover
/// and mutation. With `mutation_rate == 0` the initial fill is plain copies
/// of the seeds. Identical inputs give identical results.
pub fn evolve<P: Problem>(
    config: &EvoConfig,
    seeds: Vec<P::Genome>,
    problem: &P,
) -> Result<Evolution<P::Genome, P::Fitness>, EvoError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(EvoError::NoSeeds);
    }
    let mut rng = EvoRng::seed_from_u64(config.seed);
    let mut population: Vec<P::Genome> = Vec::with_capacity(config.population_size);
    for mut s in seeds.iter().take(config.population_size).cloned() {
        problem.repair(&mut s);
        population.push(s);
    }
    let n_seeds = population.len();
    let mut i = 0;
    while population.len() < config.population_size {
        let mut g = population[i % n_seeds].clone();
        if config.mutation_rate > 0.0 {
            for _ in 0..rng.random_range(1..=3) {
                problem.mutate(&mut g, &mut rng);
            }
            problem.repair(&mut g);
        }
        population.push(g);
        i += 1;
    }

    let mut best: Option<(P::Genome, P::Fitness)> = None;
    let mut history = Vec::with_capacity(config.generations);
    for generation in 0..config.generations {
        let fitness: Vec<P::Fitness> = population.par_iter().map(|g| problem.fitness(g)).collect();
        let hashes: Vec<u64> = population.iter().map(genome_hash).collect();
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            fitness_cmp(&fitness[a], &fitness[b])
                .then(hashes[a].cmp(&hashes[b]))
                .then(a.cmp(&b))
        });
        let top = order[0];
        let improved = match &best {
            None => true,
            Some((_, f)) => fitness_cmp(&fitness[top], f) == Ordering::Less,
        };
        if improved {
            best = Some((population[top].clone(), fitness[top].clone()));
        }
        history.push(best.as_ref().expect("set above").1.clone());
        if generation + 1 == config.generations {
            break;
        }

        let mut rank = vec![0; population.len()];
        for (r, &idx) in order.iter().enumerate() {
            rank[idx] = r;
        }
        let tournament = |rng: &mut EvoRng| {
            let a = rng.random_range(0..population.len());
            let b = rng.random_range(0..population.len());
            if rank[a] <= rank[b] {
                a
            } else {
                b
            }
        };
        let mut next = Vec::with_capacity(config.population_size);
        next.extend(
            order
                .iter()
                .take(config.elitism)
                .map(|&i| population[i].clone()),
        );
        while next.len() < config.population_size {
            let a = tournament(&mut rng);
            let b = tournament(&mut rng);
            let mut child = if rng.random_bool(config.crossover_rate) {
                problem.crossover(&population[a], &population[b], &mut rng)
            } else {
                population[a].clone()
            };
            if rng.random_bool(config.mutation_rate) {
                problem.mutate(&mut child, &mut rng);
            }
            problem.repair(&mut child);
            next.push(child);
        }
        population = next;
    }
    let (best, best_fitness) = best.expect("at least one generation ran");
    Ok(Evolution {
        best,
        best_fitness,
        history,
    })
}

/// Order crossover (OX1) for permutations of distinct elements: keeps a slice
/// of `a` in place and fills the rest in `b`'s order.
pub fn order_crossover<T: Clone + Eq + Hash>(a: &[T], b: &[T], rng: &mut EvoRng) -> Vec<T> {
    let n = a.len();
    if n < 2 {
        return a.to_vec();
    }
    let mut i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n);
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let kept: HashSet<&T> = a[i..=j].iter().collect();
    let mut fill = b.iter().filter(|x| !kept.contains(x));
    (0..n)
        .map(|k| {
            if (i..=j).contains(&k) {
                a[k].clone()
            } else {
                fill.next().expect("b is a permutation of a").clone()
            }
        })
        .collect()
}

pub fn swap_mutation<T>(g: &mut [T], rng: &mut EvoRng) {
    if g.len() < 2 {
        return;
    }
    let i = rng.random_range(0..g.len());
    let j = rng.random_range(0..g.len());
    g.swap(i, j);
}

pub fn insert_mutation<T>(g: &mut Vec<T>, rng: &mut EvoRng) {
    if g.len() < 2 {
        return;
    }
    let from = rng.random_range(0..g.len());
    let x = g.remove(from);
    let to = rng.random_range(0..=g.len());
    g.insert(to, x);
}

/// Writes `generation,c0,c1,...` rows for a fitness history.
pub fn write_history_csv<F>(
    mut w: impl Write,
    history: &[F],
    headers: &[&str],
    components: impl Fn(&F) -> Vec<f64>,
) -> std::io::Result<()> {
    writeln!(w, "generation,{}", headers.join(","))?;
    for (g, f) in history.iter().enumerate() {
        let cols: Vec<String> = components(f).iter().map(|c| c.to_string()).collect();
        writeln!(w, "{g},{}", cols.join(","))?;
    }
    Ok(())
}
