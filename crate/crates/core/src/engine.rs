//! Multi-population BRKGA-VM driver: evolution, path relinking, variable
//! mutant escalation, restarts (optionally preceded by local search) and the
//! stopping rules.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::decoder::DecoderContext;
use crate::genetics::{
    ceil_fraction, decode_all, evolve_generation, init_population, population_size, BiasFunction, Chromosome,
    EvolutionParams, GeneticsError, MutantSchedule, Population,
};
use crate::instance::Instance;
use crate::ipr::{ipr_per, select_pair, DistanceMode, IprBudget, IprParams, Selection};
use crate::scalar::{cmp_scalar, Scalar};
use crate::solution::{encode, Solution};
use crate::vnd::vnd;

/// Share of the remaining wall time granted to local search at a restart.
pub const VND_TIME_SHARE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Evolution, path relinking and restarts.
    #[default]
    Vm,
    /// `Vm` plus local search at every restart.
    VmL,
    /// `Vm` with a constant mutant fraction.
    Mp,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vm => "vm",
            Variant::VmL => "vm+l",
            Variant::Mp => "mp",
        })
    }
}

impl FromStr for Variant {
    type Err = ParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vm" => Ok(Variant::Vm),
            "vm+l" | "vml" | "vm-l" => Ok(Variant::VmL),
            "mp" => Ok(Variant::Mp),
            other => Err(ParamsError::Value {
                key: "variant".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("unknown parameter {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    Value { key: String, value: String },
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// All tunable settings of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Population size factor: `p = ceil(alpha * n)`.
    pub alpha: f64,
    /// Number of independent populations.
    pub m: usize,
    pub pct_e: f64,
    pub pct0_vm: f64,
    pub pct_mi: f64,
    pub pi_t: usize,
    pub pi_e: usize,
    pub phi: BiasFunction,
    pub sel: Selection,
    pub md: f64,
    pub pct_p: f64,
    pub pr_del: f64,
    pub rho: f64,
    /// Non-improving iterations before a restart; 0 disables restarts.
    pub h: usize,
    /// Consecutive non-improving iterations before stopping; 0 disables the rule.
    pub wi: usize,
    pub time_limit_seconds: f64,
    pub seed: u64,
    pub use_vnd: bool,
    /// Escalate at stalls h/8, h/4, h/2 to levels 3, 2, 1 instead of the cumulative milestones.
    pub literal_mutant_schedule: bool,
    pub distance: DistanceMode,
    pub rescan: bool,
    /// Stop as soon as the incumbent is at or below this cost.
    pub target: Option<f64>,
    pub max_iterations: Option<usize>,
}

/// Instance size class used to pick tuned defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeRow {
    TestSmall,
    Medium,
    Large,
}

impl SizeRow {
    pub fn for_customers(n: usize) -> Self {
        if n <= 25 {
            SizeRow::TestSmall
        } else if n <= 50 {
            SizeRow::Medium
        } else {
            SizeRow::Large
        }
    }
}

/// Stall limit before stopping, by instance size.
pub fn default_wi(n_customers: usize) -> usize {
    match n_customers {
        0..=5 => 50,
        6..=10 => 750,
        11..=15 => 2000,
        16..=25 => 2500,
        26..=50 => 1500,
        _ => 1000,
    }
}

/// Tuned defaults for `variant` on an instance with `n_customers` customers.
pub fn default_params(n_customers: usize, variant: Variant) -> SolverParams {
    let row = SizeRow::for_customers(n_customers);
    let local = variant == Variant::VmL;
    // (pct_e, pct0, pct_mi, pi_t, pi_e, md, pct_p, alpha, m, pr_del, h)
    let t = match (local, row) {
        (false, SizeRow::TestSmall) => (0.16, 0.1, 0.1, 4, 2, 0.2, 0.7, 7.0, 4, 0.95, 100),
        (false, SizeRow::Medium) => (0.22, 0.05, 0.1, 7, 2, 0.25, 0.96, 3.0, 6, 0.99, 300),
        (false, SizeRow::Large) => (0.22, 0.05, 0.1, 7, 2, 0.25, 0.96, 3.0, 6, 0.99, 100),
        (true, SizeRow::TestSmall) => (0.10, 0.13, 0.10, 9, 5, 0.59, 0.50, 10.0, 3, 0.95, 100),
        (true, SizeRow::Medium) => (0.16, 0.16, 0.23, 10, 7, 0.38, 0.46, 3.0, 5, 0.99, 300),
        (true, SizeRow::Large) => (0.16, 0.16, 0.23, 10, 7, 0.38, 0.46, 3.0, 5, 0.99, 100),
    };
    SolverParams {
        alpha: t.7,
        m: t.8,
        pct_e: t.0,
        pct0_vm: t.1,
        pct_mi: if variant == Variant::Mp { 0.0 } else { t.2 },
        pi_t: t.3,
        pi_e: t.4,
        phi: BiasFunction::Polynomial,
        sel: Selection::RandS,
        md: t.5,
        pct_p: t.6,
        pr_del: t.9,
        rho: 0.6,
        h: t.10,
        wi: default_wi(n_customers),
        time_limit_seconds: 900.0,
        seed: 1,
        use_vnd: local,
        literal_mutant_schedule: false,
        distance: DistanceMode::Segmented,
        rescan: true,
        target: None,
        max_iterations: None,
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ParamsError> {
    value.parse().map_err(|_| ParamsError::Value {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_flag(key: &str, value: &str) -> Result<bool, ParamsError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ParamsError::Value {
            key: key.into(),
            value: value.into(),
        }),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ParamsError> {
    match value.to_ascii_lowercase().as_str() {
        "" | "none" | "off" => Ok(None),
        _ => parse_value(key, value).map(Some),
    }
}

impl SolverParams {
    /// Sets one field from its textual value. Keys are the field names;
    /// `prDel` is accepted for `pr_del`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ParamsError> {
        let value = value.trim();
        match key.trim() {
            "alpha" => self.alpha = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "pct_e" => self.pct_e = parse_value(key, value)?,
            "pct0_vm" => self.pct0_vm = parse_value(key, value)?,
            "pct_mi" => self.pct_mi = parse_value(key, value)?,
            "pi_t" => self.pi_t = parse_value(key, value)?,
            "pi_e" => self.pi_e = parse_value(key, value)?,
            "phi" => {
                self.phi = value.parse().map_err(|_| ParamsError::Value {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "sel" => {
                self.sel = value.parse().map_err(|_| ParamsError::Value {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "md" => self.md = parse_value(key, value)?,
            "pct_p" => self.pct_p = parse_value(key, value)?,
            "pr_del" | "prDel" => self.pr_del = parse_value(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "h" => self.h = parse_value(key, value)?,
            "wi" => self.wi = parse_value(key, value)?,
            "time_limit_seconds" => self.time_limit_seconds = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "use_vnd" => self.use_vnd = parse_flag(key, value)?,
            "literal_mutant_schedule" => self.literal_mutant_schedule = parse_flag(key, value)?,
            "distance" => {
                self.distance = match value.to_ascii_lowercase().as_str() {
                    "segmented" => DistanceMode::Segmented,
                    "whole" => DistanceMode::Whole,
                    _ => {
                        return Err(ParamsError::Value {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            "rescan" => self.rescan = parse_flag(key, value)?,
            "target" => self.target = parse_optional(key, value)?,
            "max_iterations" => self.max_iterations = parse_optional(key, value)?,
            other => return Err(ParamsError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies a `key=value` file; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ParamsError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ParamsError::Syntax(no + 1))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// `key=value` lines that [`SolverParams::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let distance = match self.distance {
            DistanceMode::Segmented => "segmented",
            DistanceMode::Whole => "whole",
        };
        [
            format!("alpha={}", self.alpha),
            format!("m={}", self.m),
            format!("pct_e={}", self.pct_e),
            format!("pct0_vm={}", self.pct0_vm),
            format!("pct_mi={}", self.pct_mi),
            format!("pi_t={}", self.pi_t),
            format!("pi_e={}", self.pi_e),
            format!("phi={}", self.phi),
            format!("sel={}", self.sel),
            format!("md={}", self.md),
            format!("pct_p={}", self.pct_p),
            format!("pr_del={}", self.pr_del),
            format!("rho={}", self.rho),
            format!("h={}", self.h),
            format!("wi={}", self.wi),
            format!("time_limit_seconds={}", self.time_limit_seconds),
            format!("seed={}", self.seed),
            format!("use_vnd={}", self.use_vnd),
            format!("literal_mutant_schedule={}", self.literal_mutant_schedule),
            format!("distance={distance}"),
            format!("rescan={}", self.rescan),
            format!("target={}", opt(self.target.map(|t| t.to_string()))),
            format!("max_iterations={}", opt(self.max_iterations.map(|t| t.to_string()))),
        ]
        .join("\n")
            + "\n"
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let bad = |msg: String| Err(ParamsError::Invalid(msg));
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        for (name, v) in [
            ("pct_e", self.pct_e),
            ("pct0_vm", self.pct0_vm),
            ("pct_mi", self.pct_mi),
            ("md", self.md),
            ("pct_p", self.pct_p),
            ("pr_del", self.pr_del),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.pi_t < 2 || self.pi_e > self.pi_t {
            return bad(format!("need 2 <= pi_t and pi_e <= pi_t, got pi_t={} pi_e={}", self.pi_t, self.pi_e));
        }
        if !(self.time_limit_seconds >= 0.0) {
            return bad("time_limit_seconds must be non-negative".into());
        }
        Ok(())
    }

    pub fn evolution(&self) -> EvolutionParams {
        EvolutionParams {
            elite_fraction: self.pct_e,
            total_parents: self.pi_t,
            elite_parents: self.pi_e,
            bias: self.phi,
        }
    }

    pub fn ipr(&self) -> IprParams {
        IprParams {
            pct_p: self.pct_p,
            md: self.md,
            sel: self.sel,
            distance: self.distance,
        }
    }

    /// Mutant level reached after `stall` iterations without improvement or restart.
    pub fn mutant_level(&self, stall: usize) -> u8 {
        let h = self.h;
        if h == 0 {
            return 0;
        }
        if self.literal_mutant_schedule {
            let at = |t: usize| t > 0 && stall >= t;
            if at(h / 2) {
                1
            } else if at(h / 4) {
                2
            } else if at(h / 8) {
                3
            } else {
                0
            }
        } else {
            let milestones = [h / 2, h / 2 + h / 4, h / 2 + h / 4 + h / 8];
            milestones.iter().filter(|&&t| t > 0 && stall >= t).count() as u8
        }
    }
}

/// SplitMix64 finalizer of `seed + (index + 1) * golden`; used to derive
/// independent streams.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What the engine needs from a problem.
pub trait SearchProblem<S: Scalar>: Sync {
    type Output: Clone;

    fn chromosome_len(&self) -> usize;
    /// Length of the leading customer segment of a chromosome.
    fn customer_count(&self) -> usize;
    /// Fitness of a chromosome; `+inf` when infeasible.
    fn evaluate(&self, genes: &[f64]) -> S;
    /// Full solution of a feasible chromosome.
    fn materialize(&self, genes: &[f64]) -> Option<Self::Output>;
    fn cost(&self, output: &Self::Output) -> S;
    /// Local improvement of the incumbent, returning the improved output and a
    /// chromosome for it. Called at restarts only when enabled.
    fn improve(&self, _best: &Self::Output, _deadline: Instant) -> Option<(Self::Output, Vec<f64>)> {
        None
    }
}

/// The routing problem seen through the decoder.
#[derive(Debug, Clone, Copy)]
pub struct VrpProblem<'a, S: Scalar = f64> {
    pub decoder: DecoderContext<'a, S>,
}

impl<'a, S: Scalar> VrpProblem<'a, S> {
    pub fn new(instance: &'a Instance<S>, params: &SolverParams) -> Self {
        let mut decoder = DecoderContext::new(instance, params.pr_del, S::of(params.rho));
        decoder.rescan = params.rescan;
        Self { decoder }
    }
}

impl<S: Scalar> SearchProblem<S> for VrpProblem<'_, S> {
    type Output = Solution<S>;

    fn chromosome_len(&self) -> usize {
        self.decoder.instance.num_genes()
    }

    fn customer_count(&self) -> usize {
        self.decoder.instance.num_customers()
    }

    fn evaluate(&self, genes: &[f64]) -> S {
        self.decoder.fitness(genes)
    }

    fn materialize(&self, genes: &[f64]) -> Option<Solution<S>> {
        let out = self.decoder.decode(genes);
        out.is_feasible().then_some(out.solution)
    }

    fn cost(&self, output: &Solution<S>) -> S {
        output.objective
    }

    fn improve(&self, best: &Solution<S>, deadline: Instant) -> Option<(Solution<S>, Vec<f64>)> {
        let inst = self.decoder.instance;
        let improved = vnd(best, inst, self.decoder.rho, Some(deadline)).ok()?;
        if !improved.objective.improves_on(best.objective) {
            return None;
        }
        let chromosome = encode(&improved, inst).ok()?;
        Some((improved, chromosome.genes))
    }
}

/// Hooks for tests and tooling.
pub trait Observer<S: Scalar> {
    fn on_iteration(&mut self, _iteration: usize, _populations: &[Population<S>]) {}
    fn on_restart(&mut self, _before: &[Population<S>], _after: &[Population<S>]) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl<S: Scalar> Observer<S> for Silent {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub seconds: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartEvent {
    pub iteration: usize,
    pub seconds: f64,
    /// Whether local search improved the incumbent at this restart.
    pub improved_by_vnd: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelChange {
    pub iteration: usize,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopReason {
    #[default]
    TimeLimit,
    NoImprovement,
    Target,
    IterationLimit,
    Empty,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::TimeLimit => "time limit",
            StopReason::NoImprovement => "no improvement",
            StopReason::Target => "target reached",
            StopReason::IterationLimit => "iteration limit",
            StopReason::Empty => "nothing to route",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    /// Incumbent improvements; iteration 0 is the initial population.
    pub trace: Vec<TracePoint>,
    pub restarts: Vec<RestartEvent>,
    pub mutant_levels: Vec<LevelChange>,
    pub decodes: u64,
    pub ipr_calls: u64,
    pub ipr_improvements: u64,
    pub vnd_calls: u64,
    pub iterations: usize,
    pub seconds: f64,
    pub stop: StopReason,
}

impl RunStats {
    pub fn best_cost(&self) -> Option<f64> {
        self.trace.last().map(|t| t.cost)
    }

    pub fn time_to_target(&self, target: f64) -> Option<f64> {
        record_target_hit(self, target)
    }
}

/// Time of the first trace point with cost at or below `target`.
pub fn record_target_hit(stats: &RunStats, target: f64) -> Option<f64> {
    stats.trace.iter().find(|t| t.cost <= target).map(|t| t.seconds)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Genetics(#[from] GeneticsError),
    #[error("no feasible solution found ({} iterations, {} decodes)", .0.iterations, .0.decodes)]
    NoSolution(Box<RunStats>),
}

pub struct SearchResult<S, O> {
    pub best: O,
    pub cost: S,
    pub genes: Vec<f64>,
    pub stats: RunStats,
}

struct Counted<'a, P> {
    problem: &'a P,
    decodes: &'a AtomicU64,
}

impl<P> Counted<'_, P> {
    fn evaluate<S: Scalar>(&self, genes: &[f64]) -> S
    where
        P: SearchProblem<S>,
    {
        self.decodes.fetch_add(1, Ordering::Relaxed);
        self.problem.evaluate(genes)
    }
}

struct Incumbent<S, O> {
    cost: S,
    genes: Vec<f64>,
    output: Option<O>,
}

fn best_of<S: Scalar>(populations: &[Population<S>]) -> Option<(usize, &Chromosome<S>)> {
    populations
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.best().map(|c| (i, c)))
        .min_by(|a, b| cmp_scalar(&a.1.fitness, &b.1.fitness).then(a.0.cmp(&b.0)))
}

/// Runs the metaheuristic on any [`SearchProblem`].
pub fn run_search<S, P, O>(
    problem: &P,
    params: &SolverParams,
    observer: &mut O,
) -> Result<SearchResult<S, P::Output>, SolveError>
where
    S: Scalar,
    P: SearchProblem<S>,
    O: Observer<S> + ?Sized,
{
    params.validate()?;
    params.evolution().validate()?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(params.time_limit_seconds.min(1.0e9));
    let decodes = AtomicU64::new(0);
    let counted = Counted {
        problem,
        decodes: &decodes,
    };
    let eval = |g: &[f64]| counted.evaluate::<S>(g);
    let n = problem.chromosome_len();
    let mut stats = RunStats::default();
    let elapsed = || start.elapsed().as_secs_f64();

    if problem.customer_count() == 0 {
        let genes = vec![0.5; n];
        let cost = eval(&genes);
        let best = problem.materialize(&genes);
        stats.iterations = 1;
        stats.decodes = decodes.load(Ordering::Relaxed);
        stats.stop = StopReason::Empty;
        stats.trace.push(TracePoint {
            iteration: 0,
            seconds: elapsed(),
            cost: cost.as_f64(),
        });
        stats.seconds = elapsed();
        return match best {
            Some(best) => Ok(SearchResult {
                best,
                cost,
                genes,
                stats,
            }),
            None => Err(SolveError::NoSolution(Box::new(stats))),
        };
    }

    let p = population_size(params.alpha, n);
    let elite_size = ceil_fraction(p, params.pct_e).clamp(1, p);
    let evolution = params.evolution();
    let ipr_params = params.ipr();
    let customers = problem.customer_count();

    let spawn = |epoch: u64| -> (Vec<Population<S>>, Vec<ChaCha8Rng>) {
        let base = if epoch == 0 { params.seed } else { mix_seed(params.seed, epoch) };
        let mut rngs: Vec<ChaCha8Rng> = (0..params.m)
            .map(|k| ChaCha8Rng::seed_from_u64(mix_seed(base, k as u64)))
            .collect();
        let pops = rngs.iter_mut().map(|rng| init_population(n, p, rng)).collect();
        (pops, rngs)
    };
    let (mut pops, mut rngs) = spawn(0);
    for pop in pops.iter_mut() {
        decode_all(&mut pop.members, &eval);
        pop.sort();
    }
    let mut selection_rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, u64::MAX));

    let mut inc: Incumbent<S, P::Output> = Incumbent {
        cost: S::infinity(),
        genes: Vec::new(),
        output: None,
    };
    let accept = |inc: &mut Incumbent<S, P::Output>, pops: &[Population<S>], stats: &mut RunStats, iteration: usize| {
        let Some((_, best)) = best_of(pops) else { return false };
        if !best.fitness.improves_on(inc.cost) {
            return false;
        }
        let Some(output) = problem.materialize(&best.genes) else { return false };
        inc.cost = best.fitness;
        inc.genes = best.genes.clone();
        inc.output = Some(output);
        stats.trace.push(TracePoint {
            iteration,
            seconds: start.elapsed().as_secs_f64(),
            cost: inc.cost.as_f64(),
        });
        true
    };
    accept(&mut inc, &pops, &mut stats, 0);
    observer.on_iteration(0, &pops);

    let mut iteration = 0usize;
    let mut stall = 0usize;
    let mut since_restart = 0usize;
    let mut level = 0u8;
    let mut restarts = 0u64;
    let target_hit = |cost: S| params.target.is_some_and(|t| cost.as_f64() <= t);

    let stop = loop {
        if target_hit(inc.cost) {
            break StopReason::Target;
        }
        if Instant::now() >= deadline {
            break StopReason::TimeLimit;
        }
        if params.wi > 0 && stall >= params.wi {
            break StopReason::NoImprovement;
        }
        if params.max_iterations.is_some_and(|m| iteration >= m) {
            break StopReason::IterationLimit;
        }
        iteration += 1;

        let fraction = MutantSchedule::new(params.pct0_vm, params.pct_mi).at_level(level).fraction();
        let next: Result<Vec<Population<S>>, GeneticsError> = pops
            .par_iter()
            .zip(rngs.par_iter_mut())
            .map(|(pop, rng)| evolve_generation(pop, &evolution, fraction, &eval, rng))
            .collect();
        pops = next?;

        if let Some(pair) = select_pair(&pops, elite_size, customers, &ipr_params, &mut selection_rng) {
            stats.ipr_calls += 1;
            let base = &pops[pair.base.0].members[pair.base.1].genes;
            let guide = &pops[pair.guide.0].members[pair.guide.1].genes;
            let budget = IprBudget {
                deadline: Some(deadline),
                max_decodes: None,
            };
            let out = ipr_per(base, guide, customers, params.pct_p, &eval, budget);
            let pop = &mut pops[pair.base.0];
            let worst = pop.members.last().map_or(S::infinity(), |c| c.fitness);
            if out.best.fitness.is_finite() && out.best.fitness < worst {
                if out.best.fitness.improves_on(pop.members[0].fitness) {
                    stats.ipr_improvements += 1;
                }
                *pop.members.last_mut().expect("population is non-empty") = out.best;
                pop.sort();
            }
        }

        if accept(&mut inc, &pops, &mut stats, iteration) {
            stall = 0;
            since_restart = 0;
        } else {
            stall += 1;
            since_restart += 1;
        }
        observer.on_iteration(iteration, &pops);

        let wanted = params.mutant_level(since_restart);
        if wanted != level {
            level = wanted;
            stats.mutant_levels.push(LevelChange { iteration, level });
        }

        if params.h > 0 && since_restart >= params.h {
            let mut improved_by_vnd = false;
            let mut preserved = best_of(&pops).map(|(_, c)| c.clone()).expect("populations are non-empty");
            if params.use_vnd {
                if let Some(current) = inc.output.as_ref() {
                    stats.vnd_calls += 1;
                    let now = Instant::now();
                    let remaining = deadline.saturating_duration_since(now);
                    let ls_deadline = now + remaining.mul_f64(VND_TIME_SHARE);
                    if let Some((better, genes)) = problem.improve(current, ls_deadline) {
                        let cost = problem.cost(&better);
                        if cost.improves_on(inc.cost) {
                            improved_by_vnd = true;
                            inc.cost = cost;
                            inc.output = Some(better);
                            inc.genes = genes.clone();
                            stats.trace.push(TracePoint {
                                iteration,
                                seconds: elapsed(),
                                cost: cost.as_f64(),
                            });
                            stall = 0;
                            let fitness = eval(&genes);
                            if fitness <= preserved.fitness {
                                preserved = Chromosome::with_fitness(genes, fitness);
                            }
                        }
                    }
                }
            }
            restarts += 1;
            let before = std::mem::take(&mut pops);
            let (fresh, fresh_rngs) = spawn(restarts);
            pops = fresh;
            rngs = fresh_rngs;
            pops[0].members[0] = preserved;
            for (k, pop) in pops.iter_mut().enumerate() {
                let start_at = usize::from(k == 0);
                decode_all(&mut pop.members[start_at..], &eval);
                pop.sort();
            }
            observer.on_restart(&before, &pops);
            stats.restarts.push(RestartEvent {
                iteration,
                seconds: elapsed(),
                improved_by_vnd,
            });
            since_restart = 0;
            if level != 0 {
                level = 0;
                stats.mutant_levels.push(LevelChange { iteration, level });
            }
            if accept(&mut inc, &pops, &mut stats, iteration) {
                stall = 0;
            }
        }
    };

    stats.iterations = iteration;
    stats.stop = stop;
    stats.decodes = decodes.load(Ordering::Relaxed);
    stats.seconds = elapsed();
    match inc.output {
        Some(best) => Ok(SearchResult {
            best,
            cost: inc.cost,
            genes: inc.genes,
            stats,
        }),
        None => Err(SolveError::NoSolution(Box::new(stats))),
    }
}

/// Solves `instance` with `params`, returning the best solution and run statistics.
pub fn solve<S: Scalar>(instance: &Instance<S>, params: &SolverParams) -> Result<(Solution<S>, RunStats), SolveError> {
    solve_observed(instance, params, &mut Silent)
}

pub fn solve_observed<S: Scalar, O: Observer<S> + ?Sized>(
    instance: &Instance<S>,
    params: &SolverParams,
    observer: &mut O,
) -> Result<(Solution<S>, RunStats), SolveError> {
    let problem = VrpProblem::new(instance, params);
    let result = run_search(&problem, params, observer)?;
    Ok((result.best, result.stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let vm = default_params(25, Variant::Vm);
        assert_eq!((vm.pct_e, vm.pct0_vm, vm.pct_mi, vm.pi_t, vm.pi_e), (0.16, 0.1, 0.1, 4, 2));
        assert_eq!((vm.md, vm.pct_p, vm.alpha, vm.m, vm.pr_del, vm.h), (0.2, 0.7, 7.0, 4, 0.95, 100));
        assert_eq!(vm.phi, BiasFunction::Polynomial);
        let medium = default_params(50, Variant::Vm);
        assert_eq!((medium.alpha, medium.m, medium.pr_del, medium.h), (3.0, 6, 0.99, 300));
        let l = default_params(50, Variant::VmL);
        assert_eq!((l.pct_e, l.pct0_vm, l.pct_mi, l.pi_t, l.pi_e), (0.16, 0.16, 0.23, 10, 7));
        assert_eq!((l.md, l.pct_p, l.alpha, l.m, l.h), (0.38, 0.46, 3.0, 5, 300));
        assert!(l.use_vnd);
        assert_eq!(default_params(100, Variant::Vm).h, 100);
        assert_eq!(default_params(25, Variant::Mp).pct_mi, 0.0);
    }

    #[test]
    fn stall_limits() {
        let wi: Vec<usize> = [5, 10, 15, 25, 50, 100].into_iter().map(default_wi).collect();
        assert_eq!(wi, vec![50, 750, 2000, 2500, 1500, 1000]);
        assert_eq!(default_params(10, Variant::Vm).time_limit_seconds, 900.0);
        assert_eq!(default_params(10, Variant::Vm).rho, 0.6);
    }

    #[test]
    fn params_text_round_trip() {
        let mut p = default_params(25, Variant::VmL);
        p.target = Some(12.5);
        let mut q = default_params(100, Variant::Vm);
        q.apply_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn params_file_errors() {
        let mut p = default_params(5, Variant::Vm);
        assert_eq!(p.apply_text("bogus=1"), Err(ParamsError::UnknownKey("bogus".into())));
        assert_eq!(p.apply_text("# c\nalpha 3"), Err(ParamsError::Syntax(2)));
        assert!(p.apply_text("m=x").is_err());
        p.apply_text("prDel = 0.5 # alias\nphi=1/r").unwrap();
        assert_eq!(p.pr_del, 0.5);
        assert_eq!(p.phi, BiasFunction::Linear);
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut p = default_params(5, Variant::Vm);
        p.pi_e = 9;
        assert!(p.validate().is_err());
        let mut p = default_params(5, Variant::Vm);
        p.rho = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn milestone_levels() {
        let mut p = default_params(5, Variant::Vm);
        p.h = 100;
        let levels: Vec<u8> = [0, 49, 50, 74, 75, 86, 87, 99].iter().map(|&s| p.mutant_level(s)).collect();
        assert_eq!(levels, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        p.literal_mutant_schedule = true;
        let levels: Vec<u8> = [0, 11, 12, 24, 25, 49, 50].iter().map(|&s| p.mutant_level(s)).collect();
        assert_eq!(levels, vec![0, 0, 3, 3, 2, 2, 1]);
        p.h = 0;
        assert_eq!(p.mutant_level(1000), 0);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
        assert_eq!(mix_seed(7, 3), mix_seed(7, 3));
    }

    #[test]
    fn target_hit_lookup() {
        let stats = RunStats {
            trace: vec![
                TracePoint { iteration: 0, seconds: 0.1, cost: 30.0 },
                TracePoint { iteration: 4, seconds: 0.5, cost: 20.0 },
                TracePoint { iteration: 9, seconds: 0.9, cost: 10.0 },
            ],
            ..RunStats::default()
        };
        assert_eq!(record_target_hit(&stats, 5.0), None);
        assert_eq!(record_target_hit(&stats, 1e300), Some(0.1));
        assert_eq!(record_target_hit(&stats, 10.0), Some(0.9));
    }
}
