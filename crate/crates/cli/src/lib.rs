//! Command-line front end: solving, instance generation, validation, exact
//! reference solutions, model export and batch experiments.

pub mod experiments;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use vrpod_core::engine::{default_params, ParamsError, SolverParams, Variant};
use vrpod_core::oracle::OracleError;
use vrpod_core::solution::{SolutionIoError, SolutionRecord};
use vrpod_core::{
    check_feasible, evaluate_objective, exhaustive_solve, export_milp, parse_instance, solve, GeneratorConfig, Instance,
    InstanceError, NetworkType, SolveError,
};

pub use experiments::{benchmark, gap_pct, time_to_target, BenchmarkRow, TttRow};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "VRPOD_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Instance { path: PathBuf, source: InstanceError },
    #[error("{path}: {source}")]
    Solution { path: PathBuf, source: SolutionIoError },
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("solution is infeasible")]
    Infeasible,
    #[error("recorded objective {recorded} differs from recomputed {computed}")]
    ObjectiveMismatch { recorded: f64, computed: f64 },
    #[error("{0}")]
    Oracle(String),
}

impl CliError {
    /// 2 for unusable input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. }
            | CliError::Instance { .. }
            | CliError::Solution { .. }
            | CliError::Params(_)
            | CliError::Input(_) => 2,
            _ => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(source: io::Error) -> Self {
        CliError::Write {
            path: PathBuf::from("<stdout>"),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vrpod", version, about = "BRKGA-VM for vehicle routing with occasional drivers and time windows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Algorithm variant: vm, vm+l or mp.
    #[arg(long, default_value = "vm")]
    pub variant: Variant,
    /// Base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Wall-clock limit per run, in seconds.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    /// Non-improving iterations before stopping (0 disables).
    #[arg(long)]
    pub wi: Option<usize>,
    /// Iteration cap, mostly useful for reproducible output.
    #[arg(long = "max-iterations")]
    pub max_iterations: Option<usize>,
    /// key=value parameter file applied over the tuned defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Stop once the cost is at or below this value.
        #[arg(long, allow_negative_numbers = true)]
        target: Option<f64>,
        /// Output directory for the solution and stats files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a random instance.
    Generate {
        #[arg(long)]
        customers: usize,
        /// r, c or rc.
        #[arg(long, default_value = "r")]
        network: NetworkType,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Company vehicles (defaults to the size-class table).
        #[arg(long)]
        company: Option<usize>,
        /// Occasional drivers (defaults to the size-class table).
        #[arg(long)]
        occasional: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a solution file against an instance.
    Validate { instance: PathBuf, solution: PathBuf },
    /// Exact optimum by exhaustive search (small instances only).
    Oracle {
        instance: PathBuf,
        #[arg(long = "node-budget", default_value_t = 500_000_000)]
        node_budget: u64,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        /// Optional path for the optimal solution JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the MILP model in LP format.
    Export {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        /// Override the global big-M.
        #[arg(long = "big-m")]
        big_m: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated seeded runs over a directory of instances.
    Benchmark {
        dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        runs: usize,
        #[command(flatten)]
        run: RunArgs,
        /// CSV with columns instance, cplex, mp (either cost column may be empty).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Time-to-target runs on one instance.
    Ttt {
        instance: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        target: f64,
        #[arg(long, default_value_t = 60)]
        runs: usize,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Applies `VRPOD_THREADS` to the global worker pool, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = read_text(path)?;
    let mut inst: Instance = parse_instance(&text).map_err(|source| CliError::Instance {
        path: path.to_path_buf(),
        source,
    })?;
    if inst.name.is_empty() {
        inst.name = stem(path);
    }
    Ok(inst)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into())
}

/// Tuned defaults, then the parameter file, then the flags. The variant
/// flag has the last word on the fields that define it.
pub fn build_params(n_customers: usize, run: &RunArgs) -> Result<SolverParams, CliError> {
    let mut params = default_params(n_customers, run.variant);
    if let Some(path) = &run.params {
        params.apply_text(&read_text(path)?)?;
    }
    if let Some(seed) = run.seed {
        params.seed = seed;
    }
    if let Some(t) = run.time_limit {
        params.time_limit_seconds = t;
    }
    if let Some(wi) = run.wi {
        params.wi = wi;
    }
    if run.max_iterations.is_some() {
        params.max_iterations = run.max_iterations;
    }
    match run.variant {
        Variant::Mp => {
            params.pct_mi = 0.0;
            params.use_vnd = false;
        }
        Variant::Vm => params.use_vnd = false,
        Variant::VmL => params.use_vnd = true,
    }
    params.validate()?;
    Ok(params)
}

/// Header of the per-run trace CSV.
pub const TRACE_HEADER: [&str; 3] = ["iteration", "seconds", "cost"];

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            instance,
            run,
            target,
            out: dir,
        } => {
            let inst = load_instance(&instance)?;
            let mut params = build_params(inst.num_customers(), &run)?;
            params.target = target.or(params.target);
            let start = Instant::now();
            let (sol, stats) = solve(&inst, &params)?;
            let name = stem(&instance);
            let record = SolutionRecord::from_solution(&sol, &inst.name);
            write_text(&dir.join(format!("{name}.solution.json")), &record.to_json())?;
            let stats_path = dir.join(format!("{name}.stats.csv"));
            let mut w = csv::Writer::from_path(&stats_path).map_err(|e| CliError::Input(format!("{}: {e}", stats_path.display())))?;
            w.write_record(TRACE_HEADER)?;
            for t in &stats.trace {
                w.write_record([t.iteration.to_string(), format!("{:.6}", t.seconds), t.cost.to_string()])?;
            }
            w.flush()?;
            writeln!(
                out,
                "cost {} time {:.3}s iterations {} restarts {} stop {} variant {}",
                sol.objective,
                start.elapsed().as_secs_f64(),
                stats.iterations,
                stats.restarts.len(),
                stats.stop,
                run.variant
            )?;
        }
        Command::Generate {
            customers,
            network,
            seed,
            company,
            occasional,
            out: path,
        } => {
            let mut config = GeneratorConfig::new(customers, network, seed);
            config.company_drivers = company;
            config.occasional_drivers = occasional;
            let inst: Instance = config.generate().map_err(|e| CliError::Input(e.to_string()))?;
            write_text(&path, &inst.to_text())?;
            writeln!(out, "wrote {} ({} customers)", path.display(), inst.num_customers())?;
        }
        Command::Validate { instance, solution } => {
            let inst = load_instance(&instance)?;
            let record = SolutionRecord::from_json(&read_text(&solution)?).map_err(|source| CliError::Solution {
                path: solution.clone(),
                source,
            })?;
            let sol = record.to_solution::<f64>().map_err(|source| CliError::Solution {
                path: solution.clone(),
                source,
            })?;
            let report = check_feasible(&sol, &inst);
            if !report.is_feasible() {
                writeln!(out, "{report}")?;
                return Err(CliError::Infeasible);
            }
            let cost = evaluate_objective(&sol, &inst, 0.6);
            if (cost - record.objective).abs() > 1e-6 * cost.abs().max(1.0) {
                return Err(CliError::ObjectiveMismatch {
                    recorded: record.objective,
                    computed: cost,
                });
            }
            writeln!(out, "feasible, cost {cost}")?;
        }
        Command::Oracle {
            instance,
            node_budget,
            rho,
            out: path,
        } => {
            let inst = load_instance(&instance)?;
            let result = match exhaustive_solve(&inst, rho, node_budget) {
                Ok(r) => r,
                Err(OracleError::BudgetExceeded { nodes, best }) => {
                    let hint = best.map_or("none".to_string(), |b| b.objective.to_string());
                    return Err(CliError::Oracle(format!("node budget {nodes} exceeded, best so far {hint}")));
                }
                Err(e) => return Err(CliError::Oracle(e.to_string())),
            };
            match result.solution {
                Some(sol) => {
                    writeln!(out, "optimum {} nodes {}", sol.objective, result.nodes)?;
                    if let Some(path) = path {
                        write_text(&path, &SolutionRecord::from_solution(&sol, &inst.name).to_json())?;
                    }
                }
                None => {
                    writeln!(out, "infeasible nodes {}", result.nodes)?;
                    return Err(CliError::Infeasible);
                }
            }
        }
        Command::Export {
            instance,
            rho,
            big_m,
            out: path,
        } => {
            let inst = load_instance(&instance)?;
            write_text(&path, &export_milp(&inst, rho, big_m))?;
            writeln!(out, "wrote {}", path.display())?;
        }
        Command::Benchmark {
            dir,
            runs,
            run,
            reference,
            out: out_dir,
        } => {
            let rows = benchmark(&dir, runs, &run, reference.as_deref(), &out_dir, out)?;
            writeln!(out, "{} instances, summary in {}", rows.len(), out_dir.join("benchmark.csv").display())?;
        }
        Command::Ttt {
            instance,
            target,
            runs,
            run,
            out: out_dir,
        } => {
            let rows = time_to_target(&instance, target, runs, &run, &out_dir)?;
            let hit = rows.iter().filter(|r| r.seconds.is_some()).count();
            writeln!(out, "{hit}/{} runs reached {target}", rows.len())?;
        }
    }
    Ok(())
}
