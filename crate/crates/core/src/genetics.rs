//! Random-key chromosomes and the BRKGA generation step: elite copy, a
//! variable-size mutant batch, and biased multi-parent crossover.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{cmp_scalar, Scalar};

/// Hard ceiling on the mutant fraction.
pub const MUTANT_CAP: f64 = 0.6;

/// How many times an infeasible new member is replaced by a fresh mutant.
pub const INFEASIBLE_RETRIES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneticsError {
    #[error("crossover needs at least two parents, got {0}")]
    TooFewParents(usize),
    #[error("{elite} elite parents requested out of {total}")]
    TooManyEliteParents { elite: usize, total: usize },
    #[error("elite ({elite}) plus mutants ({mutants}) exceed population size {size}")]
    Oversubscribed { elite: usize, mutants: usize, size: usize },
    #[error("unknown bias function {0:?}")]
    UnknownBias(String),
}

/// An `n`-vector of keys in `[0, 1)` and its cached fitness (`+inf` until decoded
/// or when infeasible).
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome<S = f64> {
    pub genes: Vec<f64>,
    pub fitness: S,
}

impl<S: Scalar> Chromosome<S> {
    pub fn new(genes: Vec<f64>) -> Self {
        Self {
            genes,
            fitness: S::infinity(),
        }
    }

    pub fn with_fitness(genes: Vec<f64>, fitness: S) -> Self {
        Self { genes, fitness }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::new((0..n).map(|_| rng.random::<f64>()).collect())
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        self.fitness.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population<S = f64> {
    pub members: Vec<Chromosome<S>>,
}

impl<S: Scalar> Population<S> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Stable sort by non-decreasing fitness.
    pub fn sort(&mut self) {
        self.members.sort_by(|a, b| cmp_scalar(&a.fitness, &b.fitness));
    }

    pub fn best(&self) -> Option<&Chromosome<S>> {
        self.members.first()
    }

    pub fn elite(&self, elite_size: usize) -> &[Chromosome<S>] {
        &self.members[..elite_size.min(self.members.len())]
    }
}

/// `p = ceil(alpha * n)`, at least one.
pub fn population_size(alpha: f64, n: usize) -> usize {
    ceil_fraction(n, alpha).max(1)
}

fn as_ratio(value: f64) -> Ratio<i64> {
    Ratio::approximate_float(value).unwrap_or_else(|| Ratio::from_integer(value.round() as i64))
}

/// `ceil(count * fraction)` computed on the rational the fraction was written
/// as, so `100 * 0.16` is 16 rather than 17.
pub fn ceil_fraction(count: usize, fraction: f64) -> usize {
    let exact = Ratio::from_integer(count as i64) * as_ratio(fraction);
    exact.ceil().to_integer().max(0) as usize
}

/// Non-increasing rank weight used to bias crossover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BiasFunction {
    Constant,
    Logarithmic,
    Linear,
    Polynomial,
    Exponential,
}

impl BiasFunction {
    /// Weight of the parent at 1-based `rank`.
    pub fn weight(&self, rank: usize) -> f64 {
        let r = rank as f64;
        match self {
            BiasFunction::Constant => 1.0,
            BiasFunction::Logarithmic => 1.0 / (r + 1.0).ln(),
            BiasFunction::Linear => 1.0 / r,
            BiasFunction::Polynomial => r.powi(-2),
            BiasFunction::Exponential => (-r).exp(),
        }
    }

    /// Selection probability of each of `parents` ranks.
    pub fn probabilities(&self, parents: usize) -> Vec<f64> {
        let w: Vec<f64> = (1..=parents).map(|r| self.weight(r)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

impl fmt::Display for BiasFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasFunction::Constant => "constant",
            BiasFunction::Logarithmic => "logarithmic",
            BiasFunction::Linear => "linear",
            BiasFunction::Polynomial => "polynomial",
            BiasFunction::Exponential => "exponential",
        })
    }
}

impl FromStr for BiasFunction {
    type Err = GeneticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "1" => Ok(BiasFunction::Constant),
            "logarithmic" | "log" | "1/log(r+1)" => Ok(BiasFunction::Logarithmic),
            "linear" | "1/r" => Ok(BiasFunction::Linear),
            "polynomial" | "quadratic" | "1/r^2" | "1/r2" => Ok(BiasFunction::Polynomial),
            "exponential" | "exp" | "e^-r" => Ok(BiasFunction::Exponential),
            other => Err(GeneticsError::UnknownBias(other.to_string())),
        }
    }
}

/// `initial + min(level * increment, cap - initial)` with `cap = 0.6`, for any
/// numeric type (floats or exact rationals).
pub fn mutant_fraction<T>(initial: T, increment: T, level: u8) -> T
where
    T: Num + PartialOrd + Copy + FromPrimitive,
{
    let cap = T::from_u8(6).expect("6 representable") / T::from_u8(10).expect("10 representable");
    let raised = T::from_u8(level).expect("level representable") * increment;
    let headroom = cap - initial;
    initial + if raised < headroom { raised } else { headroom }
}

/// Variable-mutant state: base fraction, per-level increment and current level (0..=3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutantSchedule {
    pub initial: f64,
    pub increment: f64,
    pub level: u8,
}

impl MutantSchedule {
    pub const MAX_LEVEL: u8 = 3;

    pub fn new(initial: f64, increment: f64) -> Self {
        Self {
            initial,
            increment,
            level: 0,
        }
    }

    pub fn at_level(mut self, level: u8) -> Self {
        self.level = level.min(Self::MAX_LEVEL);
        self
    }

    /// Current mutant fraction, evaluated exactly on the decimal values of the
    /// parameters (so `0.1 + 2 * 0.1` is `0.3`).
    pub fn fraction(&self) -> f64 {
        let exact = mutant_fraction(as_ratio(self.initial), as_ratio(self.increment), self.level);
        exact.to_f64().expect("ratio converts to f64")
    }
}

/// Parameters of one generation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    pub elite_fraction: f64,
    pub total_parents: usize,
    pub elite_parents: usize,
    pub bias: BiasFunction,
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<(), GeneticsError> {
        if self.total_parents < 2 {
            return Err(GeneticsError::TooFewParents(self.total_parents));
        }
        if self.elite_parents > self.total_parents {
            return Err(GeneticsError::TooManyEliteParents {
                elite: self.elite_parents,
                total: self.total_parents,
            });
        }
        Ok(())
    }
}

/// `p` chromosomes of i.i.d. uniform keys; fitness unset.
pub fn init_population<S: Scalar, R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Population<S> {
    Population {
        members: (0..p).map(|_| Chromosome::random(n, rng)).collect(),
    }
}

/// Each offspring gene is copied from the parent of rank `r` with probability
/// `weight(r) / sum(weights)`. `parents` must be ranked by non-decreasing fitness.
pub fn multi_parent_crossover<S: Scalar, R: Rng + ?Sized>(
    parents: &[&Chromosome<S>],
    elite_parents: usize,
    bias: BiasFunction,
    rng: &mut R,
) -> Result<Vec<f64>, GeneticsError> {
    let total = parents.len();
    EvolutionParams {
        elite_fraction: 0.0,
        total_parents: total,
        elite_parents,
        bias,
    }
    .validate()?;
    let weights: Vec<f64> = (1..=total).map(|r| bias.weight(r)).collect();
    let chooser = WeightedIndex::new(&weights).expect("bias weights are positive");
    let n = parents[0].len();
    Ok((0..n).map(|g| parents[chooser.sample(rng)].genes[g]).collect())
}

fn pick<R: Rng + ?Sized>(pool: usize, amount: usize, rng: &mut R) -> Vec<usize> {
    if amount <= pool {
        sample(rng, pool, amount).into_vec()
    } else {
        (0..amount).map(|_| rng.random_range(0..pool)).collect()
    }
}

/// Builds the next generation: `p_e` elite copies, `ceil(p * mutant_fraction)`
/// mutants and crossover offspring for the rest. New members are decoded (in
/// parallel); infeasible ones are replaced by fresh mutants up to
/// [`INFEASIBLE_RETRIES`] times. The result is sorted by fitness.
pub fn evolve_generation<S, R, F>(
    population: &Population<S>,
    params: &EvolutionParams,
    mutant_fraction: f64,
    decode: &F,
    rng: &mut R,
) -> Result<Population<S>, GeneticsError>
where
    S: Scalar,
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> S + Sync,
{
    params.validate()?;
    let p = population.len();
    if p == 0 {
        return Ok(population.clone());
    }
    let n = population.members[0].len();
    let elite = ceil_fraction(p, params.elite_fraction).clamp(1, p);
    let mutants = ceil_fraction(p, mutant_fraction);
    if elite + mutants > p {
        return Err(GeneticsError::Oversubscribed {
            elite,
            mutants,
            size: p,
        });
    }
    let offspring = p - elite - mutants;

    let mut next: Vec<Chromosome<S>> = population.members[..elite].to_vec();
    let mut fresh: Vec<Chromosome<S>> = Vec::with_capacity(p - elite);
    for _ in 0..mutants {
        fresh.push(Chromosome::random(n, rng));
    }

    let non_elite = &population.members[elite..];
    for _ in 0..offspring {
        let mut parents: Vec<&Chromosome<S>> = pick(elite, params.elite_parents, rng)
            .into_iter()
            .map(|i| &population.members[i])
            .collect();
        let rest = params.total_parents - params.elite_parents;
        if non_elite.is_empty() {
            parents.extend(pick(elite, rest, rng).into_iter().map(|i| &population.members[i]));
        } else {
            parents.extend(pick(non_elite.len(), rest, rng).into_iter().map(|i| &non_elite[i]));
        }
        parents.sort_by(|a, b| cmp_scalar(&a.fitness, &b.fitness));
        let genes = multi_parent_crossover(&parents, params.elite_parents, params.bias, rng)?;
        fresh.push(Chromosome::new(genes));
    }

    decode_all(&mut fresh, decode);
    for _ in 0..INFEASIBLE_RETRIES {
        let pending: Vec<usize> = (0..fresh.len()).filter(|&i| !fresh[i].is_feasible()).collect();
        if pending.is_empty() {
            break;
        }
        let mut retries: Vec<Chromosome<S>> = pending.iter().map(|_| Chromosome::random(n, rng)).collect();
        decode_all(&mut retries, decode);
        for (slot, retry) in pending.into_iter().zip(retries) {
            fresh[slot] = retry;
        }
    }

    next.extend(fresh);
    let mut next = Population { members: next };
    next.sort();
    Ok(next)
}

/// Decodes every member in parallel, storing the fitness.
pub fn decode_all<S, F>(members: &mut [Chromosome<S>], decode: &F)
where
    S: Scalar,
    F: Fn(&[f64]) -> S + Sync,
{
    members.par_iter_mut().for_each(|c| c.fitness = decode(&c.genes));
}
