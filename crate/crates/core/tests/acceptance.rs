//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Budgets default to the full protocol. `VRPOD_ACCEPTANCE_QUICK=1` shrinks
//! instance counts and time limits for development runs (the report says so).
//! `VRPOD_ACCEPTANCE_ONLY=1,4,9` runs a subset. The exit status is non-zero
//! on a failed criterion only with `VRPOD_ACCEPTANCE_STRICT=1`.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use common::{highspy_available, reference_walk, solve_with_highs, RefStep, RHO};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrpod_core::decoder::Decoded;
use vrpod_core::engine::{default_params, mix_seed, run_search, LevelChange, Observer, SearchProblem, Silent};
use vrpod_core::genetics::{mutant_fraction, MutantSchedule, Population};
use vrpod_core::instance::GeneratorConfig;
use vrpod_core::ipr::{ipr_per, ipr_per_traced, IprBudget};
use vrpod_core::{
    check_feasible, exhaustive_solve, export_milp, solve, solve_observed, vnd, DecoderContext, Instance, NetworkType,
    Solution, SolverParams, Variant,
};

const OPT_TOL: f64 = 1e-6;
const ORACLE_BUDGET: u64 = 200_000_000;

struct Scale {
    quick: bool,
}

impl Scale {
    fn pick<T>(&self, full: T, quick: T) -> T {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self { pass: Some(pass), detail }
    }

    fn skip(detail: String) -> Self {
        Self { pass: None, detail }
    }
}

fn networks(i: usize) -> NetworkType {
    [NetworkType::Random, NetworkType::Clustered, NetworkType::Mixed][i % 3]
}

fn optimum(inst: &Instance) -> f64 {
    exhaustive_solve(inst, RHO, ORACLE_BUDGET)
        .expect("oracle within budget")
        .cost()
        .expect("generated instances are feasible")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            (a + b) / 2.0
        }
    }
}

/// 1. Oracle equivalence on |C| in 4..=7 with |D| = |K| = 2.
fn oracle_equivalence(scale: &Scale) -> Outcome {
    let per_size = scale.pick(5, 1);
    let seeds = scale.pick(30u64, 5);
    let limit = scale.pick(10.0, 2.0);
    let (mut runs, mut hits, mut best_hits, mut instances) = (0, 0, 0, 0);
    let mut below = 0;
    for size in 4..=7usize {
        for j in 0..per_size {
            let inst: Instance = GeneratorConfig::new(size, networks(j), 500 + (size * 10 + j) as u64)
                .with_drivers(2, 2)
                .generate()
                .unwrap();
            let opt = optimum(&inst);
            instances += 1;
            let mut best = f64::INFINITY;
            for seed in 0..seeds {
                let mut params = default_params(size, Variant::Vm);
                params.seed = seed;
                params.time_limit_seconds = limit;
                let (sol, _) = solve(&inst, &params).expect("feasible instance");
                runs += 1;
                if (sol.objective - opt).abs() <= OPT_TOL {
                    hits += 1;
                }
                if sol.objective < opt - OPT_TOL {
                    below += 1;
                }
                best = best.min(sol.objective);
            }
            if (best - opt).abs() <= OPT_TOL {
                best_hits += 1;
            }
        }
    }
    let rate = hits as f64 / runs as f64;
    Outcome::check(
        rate >= 0.9 && best_hits == instances && below == 0,
        format!(
            "{hits}/{runs} runs optimal ({:.1}% >= 90%), best-of-{seeds} optimal on {best_hits}/{instances}, {below} below optimum",
            100.0 * rate
        ),
    )
}

fn same_decode(a: &Decoded, b: &Decoded) -> bool {
    a.fitness.to_bits() == b.fitness.to_bits()
        && a.solution.routes.len() == b.solution.routes.len()
        && a.solution.routes.iter().zip(&b.solution.routes).all(|(x, y)| {
            x.driver == y.driver
                && x.visits == y.visits
                && x.load == y.load
                && x.arrival_times.len() == y.arrival_times.len()
                && x.arrival_times.iter().zip(&y.arrival_times).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

/// 2. Decoder determinism with interleaved unrelated decodes.
fn decoder_determinism(scale: &Scale) -> Outcome {
    let count = scale.pick(10_000, 2_000);
    let inst: Instance = GeneratorConfig::new(25, NetworkType::Mixed, 2024).generate().unwrap();
    let ctx = DecoderContext::new(&inst, 0.7, RHO);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let chromosomes: Vec<Vec<f64>> = (0..count).map(|_| (0..inst.num_genes()).map(|_| rng.random()).collect()).collect();
    let first: Vec<Decoded> = chromosomes.iter().map(|g| ctx.decode(g)).collect();
    let mut mismatches = 0;
    for (idx, genes) in chromosomes.iter().enumerate().rev() {
        let noise: Vec<f64> = (0..inst.num_genes()).map(|_| rng.random()).collect();
        let _ = ctx.decode(&noise);
        let again = ctx.decode(genes);
        if !same_decode(&first[idx], &again) || ctx.fitness(genes).to_bits() != first[idx].fitness.to_bits() {
            mismatches += 1;
        }
    }
    let feasible = first.iter().filter(|d| d.is_feasible()).count();
    Outcome::check(
        mismatches == 0,
        format!("{count} chromosomes decoded twice, {mismatches} mismatches ({feasible} feasible)"),
    )
}

/// 3. Feasibility soundness on a tiny corpus.
fn feasibility_soundness(scale: &Scale) -> Outcome {
    let corpus = scale.pick(30usize, 8);
    let (mut checked, mut violations, mut below) = (0usize, 0usize, 0usize);
    let mut worst_gap = f64::INFINITY;
    let mut note = |cost: f64, sol: &Solution, inst: &Instance, opt: f64| {
        checked += 1;
        if !check_feasible(sol, inst).is_feasible() {
            violations += 1;
        }
        worst_gap = worst_gap.min(cost - opt);
        if cost < opt - 1e-9 {
            below += 1;
        }
    };
    for i in 0..corpus {
        let size = 3 + i % 4;
        let inst: Instance = GeneratorConfig::new(size, networks(i), 9_000 + i as u64)
            .with_drivers(1 + i % 2, i % 3)
            .generate()
            .unwrap();
        let opt = optimum(&inst);
        let ctx = DecoderContext::new(&inst, 0.5 + 0.1 * (i % 5) as f64, RHO);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut feasible = Vec::new();
        for _ in 0..500 {
            let genes: Vec<f64> = (0..inst.num_genes()).map(|_| rng.random()).collect();
            let d = ctx.decode(&genes);
            if d.is_feasible() {
                note(d.fitness, &d.solution, &inst, opt);
                feasible.push((genes, d.solution));
            }
        }
        for (_, sol) in feasible.iter().take(50) {
            let improved = vnd(sol, &inst, RHO, None).expect("feasible start");
            note(improved.objective, &improved, &inst, opt);
        }
        for pair in feasible.chunks(2).take(20) {
            if let [(a, _), (b, _)] = pair {
                let out = ipr_per(a, b, inst.num_customers(), 1.0, &|g: &[f64]| ctx.fitness(g), IprBudget::unlimited());
                if out.best.fitness.is_finite() {
                    let d = ctx.decode(&out.best.genes);
                    note(out.best.fitness, &d.solution, &inst, opt);
                }
            }
        }
        for variant in [Variant::Vm, Variant::VmL] {
            let mut params = default_params(size, variant);
            params.max_iterations = Some(60);
            params.h = 20;
            params.seed = i as u64;
            let (sol, _) = solve(&inst, &params).expect("feasible instance");
            note(sol.objective, &sol, &inst, opt);
        }
    }
    Outcome::check(
        violations == 0 && below == 0,
        format!(
            "{checked} heuristic results on {corpus} instances: {violations} infeasible, {below} below optimum (min gap {worst_gap:.3e})"
        ),
    )
}

struct Flat;

impl SearchProblem<f64> for Flat {
    type Output = ();

    fn chromosome_len(&self) -> usize {
        8
    }

    fn customer_count(&self) -> usize {
        5
    }

    fn evaluate(&self, _genes: &[f64]) -> f64 {
        1.0
    }

    fn materialize(&self, _genes: &[f64]) -> Option<()> {
        Some(())
    }

    fn cost(&self, _output: &()) -> f64 {
        1.0
    }
}

/// 4. Variable-mutant schedule values and milestones.
fn mutant_schedule(_: &Scale) -> Outcome {
    let tenth = Ratio::new(1i64, 10);
    let values: Vec<Ratio<i64>> = (0..=3u8).map(|i| mutant_fraction(tenth, tenth, i)).collect();
    let exact = values == vec![Ratio::new(1, 10), Ratio::new(2, 10), Ratio::new(3, 10), Ratio::new(4, 10)];
    let floats: Vec<f64> = (0..=3u8).map(|i| MutantSchedule::new(0.1, 0.1).at_level(i).fraction()).collect();
    let floats_ok = floats == vec![0.1, 0.2, 0.3, 0.4];
    let three = Ratio::new(3i64, 10);
    let cap_ok = mutant_fraction(three, three, 3) == Ratio::new(6, 10) && MutantSchedule::new(0.3, 0.3).at_level(3).fraction() == 0.6;

    let mut params = default_params(5, Variant::Vm);
    params.h = 100;
    params.wi = 0;
    params.max_iterations = Some(200);
    params.time_limit_seconds = 1e6;
    let out = run_search(&Flat, &params, &mut Silent).unwrap();
    let want: Vec<LevelChange> = [(50, 1), (75, 2), (87, 3), (100, 0), (150, 1), (175, 2), (187, 3), (200, 0)]
        .iter()
        .map(|&(iteration, level)| LevelChange { iteration, level })
        .collect();
    let milestones_ok = out.stats.mutant_levels == want;
    let got: Vec<String> = out.stats.mutant_levels.iter().map(|l| format!("{}@{}", l.level, l.iteration)).collect();
    Outcome::check(
        exact && floats_ok && cap_ok && milestones_ok,
        format!(
            "pct(0.1,0.1,i) = {floats:?}, pct(0.3,0.3,3) cap {}, stub levels (h=100) [{}]",
            if cap_ok { "0.6" } else { "wrong" },
            got.join(" ")
        ),
    )
}

#[derive(Default)]
struct Watch {
    best_per_iteration: Vec<f64>,
    restarts: Vec<bool>,
}

fn min_fitness(pops: &[Population]) -> f64 {
    pops.iter().flat_map(|p| p.members.iter()).map(|c| c.fitness).fold(f64::INFINITY, f64::min)
}

impl Observer<f64> for Watch {
    fn on_iteration(&mut self, _iteration: usize, pops: &[Population]) {
        self.best_per_iteration.push(min_fitness(pops));
    }

    fn on_restart(&mut self, before: &[Population], after: &[Population]) {
        let key = |g: &[f64]| g.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
        let old: HashSet<Vec<u64>> = before.iter().flat_map(|p| p.members.iter()).map(|c| key(&c.genes)).collect();
        let survivors: Vec<&vrpod_core::Chromosome> =
            after.iter().flat_map(|p| p.members.iter()).filter(|c| old.contains(&key(&c.genes))).collect();
        let ok = survivors.len() == 1 && survivors[0].fitness == min_fitness(before);
        self.restarts.push(ok);
    }
}

/// 5. Elitism across restarts.
fn elitism(_: &Scale) -> Outcome {
    let inst: Instance = GeneratorConfig::new(25, NetworkType::Random, 77).generate().unwrap();
    let mut params = default_params(25, Variant::Vm);
    params.max_iterations = Some(200);
    params.h = 30;
    params.wi = 0;
    params.time_limit_seconds = 1e6;
    let mut watch = Watch::default();
    let (sol, stats) = solve_observed(&inst, &params, &mut watch).unwrap();
    let trace_ok = stats.trace.windows(2).all(|w| w[1].cost <= w[0].cost);
    let pops_ok = watch.best_per_iteration.windows(2).all(|w| w[1] <= w[0]);
    let snapshots_ok = watch.restarts.iter().all(|&ok| ok);
    let feasible = check_feasible(&sol, &inst).is_feasible();
    Outcome::check(
        trace_ok && pops_ok && snapshots_ok && watch.restarts.len() >= 2 && feasible,
        format!(
            "{} iterations, {} restarts, trace non-increasing {trace_ok}, population best non-increasing {pops_ok}, single survivor per restart {snapshots_ok}",
            stats.iterations,
            watch.restarts.len()
        ),
    )
}

struct Benchmark {
    instances: Vec<Instance>,
    reference: Vec<f64>,
}

fn benchmark_set(scale: &Scale) -> Benchmark {
    let count = scale.pick(10, 3);
    let runs = scale.pick(3u64, 1);
    let limit = scale.pick(20.0, 4.0);
    let instances: Vec<Instance> = (0..count)
        .map(|i| GeneratorConfig::new(25, networks(i), 4_000 + i as u64).generate().unwrap())
        .collect();
    let reference = instances
        .iter()
        .map(|inst| {
            (0..runs)
                .map(|r| {
                    let mut params = default_params(25, Variant::VmL);
                    params.seed = mix_seed(31_337, r);
                    params.time_limit_seconds = limit;
                    solve(inst, &params).expect("feasible instance").0.objective
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Benchmark { instances, reference }
}

/// 6. Time to target: VM against MP.
fn time_to_target(scale: &Scale, bench: &Benchmark) -> Outcome {
    let runs = scale.pick(20u64, 4);
    let cap = scale.pick(10.0, 3.0);
    let mut times = [Vec::new(), Vec::new()];
    let mut hits = [0usize, 0usize];
    for (inst, &reference) in bench.instances.iter().zip(&bench.reference) {
        let target = reference + 0.02 * reference.abs();
        for (v, variant) in [Variant::Vm, Variant::Mp].into_iter().enumerate() {
            for r in 0..runs {
                let mut params: SolverParams = default_params(25, variant);
                params.seed = mix_seed(7, r);
                params.time_limit_seconds = cap;
                params.wi = 0;
                params.target = Some(target);
                let (_, stats) = solve(inst, &params).expect("feasible instance");
                match stats.time_to_target(target) {
                    Some(t) => {
                        hits[v] += 1;
                        times[v].push(t);
                    }
                    None => times[v].push(f64::INFINITY),
                }
            }
        }
    }
    let total = times[0].len();
    let vm = median(&mut times[0]);
    let mp = median(&mut times[1]);
    Outcome::check(
        vm.is_finite() && mp.is_finite() && vm <= 1.1 * mp,
        format!(
            "median TTT vm {vm:.3}s ({}/{total} hit) vs mp {mp:.3}s ({}/{total} hit), need vm <= 1.1 * mp",
            hits[0], hits[1]
        ),
    )
}

/// 7. VM+L against VM under the same time limit.
fn local_search_gain(scale: &Scale, bench: &Benchmark) -> Outcome {
    let limit = scale.pick(60.0, 5.0);
    let mut sums = [0.0, 0.0];
    let mut strict = 0;
    for (i, inst) in bench.instances.iter().enumerate() {
        let mut costs = [0.0; 2];
        for (v, variant) in [Variant::VmL, Variant::Vm].into_iter().enumerate() {
            let mut params = default_params(25, variant);
            params.seed = mix_seed(99, i as u64);
            params.time_limit_seconds = limit;
            costs[v] = solve(inst, &params).expect("feasible instance").0.objective;
            sums[v] += costs[v];
        }
        if costs[0] < costs[1] - OPT_TOL {
            strict += 1;
        }
    }
    let n = bench.instances.len() as f64;
    let (local, plain) = (sums[0] / n, sums[1] / n);
    let need = if scale.quick { 1 } else { 3 };
    Outcome::check(
        local <= plain + OPT_TOL && strict >= need,
        format!(
            "mean best cost vm+l {local:.4} vs vm {plain:.4}, strictly better on {strict}/{} (need {need})",
            bench.instances.len()
        ),
    )
}

/// 8. Exported model solved by HiGHS.
fn milp_export(_: &Scale) -> Outcome {
    if !highspy_available() {
        return Outcome::skip("highspy not importable from python3; run manually with an LP solver".into());
    }
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..5u64 {
        let inst: Instance = GeneratorConfig::new(3 + i as usize % 3, networks(i as usize), 700 + i)
            .with_drivers(2, 2)
            .generate()
            .unwrap();
        let opt = optimum(&inst);
        let lp = export_milp(&inst, RHO, None);
        let deterministic = lp == export_milp(&inst, RHO, None);
        match solve_with_highs(&lp) {
            Ok(v) if deterministic => worst = worst.max((v - opt).abs()),
            Ok(_) => failures.push(format!("instance {i}: export not deterministic")),
            Err(e) => failures.push(format!("instance {i}: {e}")),
        }
    }
    Outcome::check(
        failures.is_empty() && worst <= OPT_TOL,
        format!("5 instances, max |milp - oracle| = {worst:.2e} {}", failures.join("; ")),
    )
}

/// 9. Path relinking against the reference walk.
fn ipr_contract(_: &Scale) -> Outcome {
    let mut mismatches = 0;
    let mut cases = 0;
    let mut steps = 0;
    for seed in 0..100u64 {
        let customers = 2 + seed as usize % 4;
        let inst: Instance = GeneratorConfig::new(customers, networks(seed as usize), 10_000 + seed)
            .with_drivers(1 + seed as usize % 2, 1)
            .generate()
            .unwrap();
        let n = inst.num_genes();
        if n > 8 {
            continue;
        }
        cases += 1;
        let ctx = DecoderContext::new(&inst, 0.8, RHO);
        let decode = |g: &[f64]| ctx.fitness(g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let guide: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let out = ipr_per_traced(&base, &guide, customers, 1.0, &decode, IprBudget::unlimited());
        let (genes, value, reference) = reference_walk(&base, &guide, customers, 1.0, &decode);
        let lib: Vec<RefStep> = out
            .steps
            .iter()
            .map(|s| RefStep {
                evaluated: s.evaluated.iter().map(|&(i, v)| (i + 1, v)).collect(),
                skipped: s.skipped.iter().map(|i| i + 1).collect(),
                committed: s.committed.map(|i| i + 1),
            })
            .collect();
        steps += lib.len();
        let consistent = !out.best.fitness.is_finite() || decode(&out.best.genes).to_bits() == out.best.fitness.to_bits();
        if lib != reference || out.best.genes != genes || out.best.fitness.to_bits() != value.to_bits() || !consistent {
            mismatches += 1;
        }
    }
    Outcome::check(
        mismatches == 0 && cases > 0,
        format!("{cases} walks ({steps} steps) with n <= 8, {mismatches} differ from the reference"),
    )
}

fn main() {
    let scale = Scale {
        quick: std::env::var("VRPOD_ACCEPTANCE_QUICK").is_ok_and(|v| v != "0"),
    };
    let only: Option<HashSet<u32>> = std::env::var("VRPOD_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|s| s.contains(&k));
    println!(
        "acceptance suite ({} budgets)",
        if scale.quick { "QUICK, reduced" } else { "full" }
    );

    let mut failed = 0;
    let mut report = |k: u32, name: &str, run: &dyn Fn() -> Outcome| {
        if !wanted(k) {
            return;
        }
        let start = Instant::now();
        let out = run();
        let tag = match out.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} {k:>2} {name}: {} [{:.1}s]", out.detail, start.elapsed().as_secs_f64());
        let _ = std::io::stdout().flush();
    };

    report(1, "oracle equivalence", &|| oracle_equivalence(&scale));
    report(2, "decoder determinism", &|| decoder_determinism(&scale));
    report(3, "feasibility soundness", &|| feasibility_soundness(&scale));
    report(4, "variable mutant schedule", &|| mutant_schedule(&scale));
    report(5, "elitism and restarts", &|| elitism(&scale));
    if wanted(6) || wanted(7) {
        let start = Instant::now();
        let bench = benchmark_set(&scale);
        println!(
            "     reference costs for 6 and 7 (best of VM+L runs): {:?} [{:.1}s]",
            bench.reference.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        );
        report(6, "time to target vm vs mp", &|| time_to_target(&scale, &bench));
        report(7, "vm+l vs vm", &|| local_search_gain(&scale, &bench));
    }
    report(8, "milp export", &|| milp_export(&scale));
    report(9, "ipr contract", &|| ipr_contract(&scale));
    if wanted(10) {
        println!("INFO 10 large-scale tables: not reproducible without the original instance files and hour-scale budgets; the benchmark command emits the same table shape for any supplied set");
    }
    let strict = std::env::var("VRPOD_ACCEPTANCE_STRICT").is_ok_and(|v| v != "0");
    if failed > 0 {
        println!("{failed} criteria failed");
        if strict {
            std::process::exit(1);
        }
    }
}
