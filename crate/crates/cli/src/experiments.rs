//! Batch experiments: benchmark tables and time-to-target runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use vrpod_core::engine::mix_seed;
use vrpod_core::solve;

use crate::{build_params, load_instance, read_text, stem, CliError, RunArgs};

/// `100 * (cost - reference) / reference`.
pub fn gap_pct(cost: f64, reference: f64) -> f64 {
    100.0 * (cost - reference) / reference
}

pub const RUNS_HEADER: [&str; 5] = ["instance", "run", "seed", "cost", "seconds"];
pub const BENCHMARK_HEADER: [&str; 7] = ["instance", "runs", "mean_cost", "best_cost", "mean_seconds", "gap_pct", "relgap_pct"];
pub const TTT_HEADER: [&str; 3] = ["run", "seed", "time_to_target"];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub instance: String,
    pub runs: usize,
    pub mean_cost: f64,
    pub best_cost: f64,
    pub mean_seconds: f64,
    pub gap_pct: Option<f64>,
    pub relgap_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TttRow {
    pub run: usize,
    pub seed: u64,
    /// `None` when the run timed out.
    pub seconds: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Reference {
    cplex: Option<f64>,
    mp: Option<f64>,
}

fn parse_cell(cell: Option<&str>) -> Result<Option<f64>, CliError> {
    match cell.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("bad reference cost {v:?}"))),
    }
}

fn read_reference(path: &Path) -> Result<BTreeMap<String, Reference>, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let inst_col = col("instance").ok_or_else(|| CliError::Input(format!("{}: missing instance column", path.display())))?;
    let (cplex_col, mp_col) = (col("cplex"), col("mp"));
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let name = record.get(inst_col).unwrap_or_default().to_string();
        let reference = Reference {
            cplex: parse_cell(cplex_col.and_then(|c| record.get(c)))?,
            mp: parse_cell(mp_col.and_then(|c| record.get(c)))?,
        };
        map.insert(name, reference);
    }
    Ok(map)
}

fn csv_writer(path: &Path, comment: &str) -> Result<csv::Writer<fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut file = fs::File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(file, "# {comment}").map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.2}"))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every `*.txt` instance in `dir` `runs` times with seeds
/// `mix_seed(base, r)` and writes `runs.csv` and `benchmark.csv` to `out_dir`.
/// Unreadable instances are skipped with a warning on `log`.
pub fn benchmark(
    dir: &Path,
    runs: usize,
    run: &RunArgs,
    reference: Option<&Path>,
    out_dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<BenchmarkRow>, CliError> {
    let references = reference.map(read_reference).transpose()?.unwrap_or_default();
    let files = instance_files(dir)?;
    let base_seed = run.seed.unwrap_or(1);
    let seed_note = format!("seed for run r = mix_seed({base_seed}, r); variant {}", run.variant);
    let mut per_run = csv_writer(&out_dir.join("runs.csv"), &seed_note)?;
    per_run.write_record(RUNS_HEADER)?;
    let mut rows = Vec::new();

    for path in files {
        let inst = match load_instance(&path) {
            Ok(inst) => inst,
            Err(e) => {
                writeln!(log, "warning: skipping {}: {e}", path.display())?;
                continue;
            }
        };
        let name = stem(&path);
        let mut costs = Vec::with_capacity(runs);
        let mut seconds = Vec::with_capacity(runs);
        for r in 0..runs {
            let seed = mix_seed(base_seed, r as u64);
            let mut args = run.clone();
            args.seed = Some(seed);
            let params = build_params(inst.num_customers(), &args)?;
            let (sol, stats) = solve(&inst, &params)?;
            per_run.write_record([
                name.clone(),
                r.to_string(),
                seed.to_string(),
                sol.objective.to_string(),
                format!("{:.6}", stats.seconds),
            ])?;
            costs.push(sol.objective);
            seconds.push(stats.seconds);
        }
        if costs.is_empty() {
            continue;
        }
        let mean_cost = mean(costs.iter().copied()).expect("non-empty");
        let reference = references.get(&name).copied().unwrap_or_default();
        rows.push(BenchmarkRow {
            instance: name,
            runs,
            mean_cost,
            best_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
            mean_seconds: mean(seconds.iter().copied()).expect("non-empty"),
            gap_pct: reference.cplex.map(|c| gap_pct(mean_cost, c)),
            relgap_pct: reference.mp.map(|m| gap_pct(mean_cost, m)),
        });
    }
    per_run.flush()?;

    let mut summary = csv_writer(&out_dir.join("benchmark.csv"), &seed_note)?;
    summary.write_record(BENCHMARK_HEADER)?;
    for row in &rows {
        summary.write_record([
            row.instance.clone(),
            row.runs.to_string(),
            row.mean_cost.to_string(),
            row.best_cost.to_string(),
            format!("{:.6}", row.mean_seconds),
            opt_cell(row.gap_pct),
            opt_cell(row.relgap_pct),
        ])?;
    }
    if !rows.is_empty() {
        summary.write_record([
            "AVG".to_string(),
            runs.to_string(),
            mean(rows.iter().map(|r| r.mean_cost)).expect("non-empty").to_string(),
            mean(rows.iter().map(|r| r.best_cost)).expect("non-empty").to_string(),
            format!("{:.6}", mean(rows.iter().map(|r| r.mean_seconds)).expect("non-empty")),
            opt_cell(mean(rows.iter().filter_map(|r| r.gap_pct))),
            opt_cell(mean(rows.iter().filter_map(|r| r.relgap_pct))),
        ])?;
    }
    summary.flush()?;
    Ok(rows)
}

/// Runs `runs` seeded solves that stop at `target` and writes `ttt.csv`.
/// Timed-out runs record `inf`. The no-improvement stop is disabled unless
/// `--wi` is given.
pub fn time_to_target(
    instance: &Path,
    target: f64,
    runs: usize,
    run: &RunArgs,
    out_dir: &Path,
) -> Result<Vec<TttRow>, CliError> {
    if !target.is_finite() {
        return Err(CliError::Input(format!("target must be finite, got {target}")));
    }
    let inst = load_instance(instance)?;
    let base_seed = run.seed.unwrap_or(1);
    let mut w = csv_writer(
        &out_dir.join(format!("{}.ttt.csv", stem(instance))),
        &format!("seed for run r = mix_seed({base_seed}, r); variant {}; target {target}", run.variant),
    )?;
    w.write_record(TTT_HEADER)?;
    let mut rows = Vec::with_capacity(runs);
    for r in 0..runs {
        let seed = mix_seed(base_seed, r as u64);
        let mut args = run.clone();
        args.seed = Some(seed);
        args.wi = Some(run.wi.unwrap_or(0));
        let mut params = build_params(inst.num_customers(), &args)?;
        params.target = Some(target);
        let (_, stats) = solve(&inst, &params)?;
        let seconds = stats.time_to_target(target);
        w.write_record([
            r.to_string(),
            seed.to_string(),
            seconds.map_or("inf".to_string(), |s| format!("{s:.6}")),
        ])?;
        rows.push(TttRow { run: r, seed, seconds });
    }
    w.flush()?;
    Ok(rows)
}
