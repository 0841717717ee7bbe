//! Executes runs on a worker pool and writes their results.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use erlay_sim::metrics::{CsvSet, SpyKind};
use erlay_sim::{run, Ledger};

use crate::scenario::RunSpec;
use crate::CliError;

const CSV_FILES: [&str; 4] = ["bandwidth.csv", "latency.csv", "rounds.csv", "spies.csv"];

/// Headline numbers of one run, one row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub run_id: String,
    pub scenario: String,
    pub protocol: String,
    pub nodes: usize,
    pub connectivity: usize,
    pub tx_rate: f64,
    pub seed: u64,
    pub txs: usize,
    pub announcement_bytes_per_node: f64,
    pub announcement_share: f64,
    pub redundancy: f64,
    pub latency_50: Option<f64>,
    pub latency_90: Option<f64>,
    pub latency_100: Option<f64>,
    pub coverage_shortfall: u64,
    pub rounds: usize,
    pub fallback_rate: Option<f64>,
    pub est_correct: Option<f64>,
    pub mean_diff: Option<f64>,
    pub spy_public: Option<f64>,
    pub spy_private: Option<f64>,
}

impl Summary {
    pub fn new(spec: &RunSpec, l: &Ledger) -> Summary {
        let rates = l.round_rates();
        Summary {
            run_id: spec.run_id.clone(),
            scenario: spec.scenario.clone(),
            protocol: l.protocol.clone(),
            nodes: l.n_nodes,
            connectivity: l.connectivity,
            tx_rate: spec.config.tx_rate,
            seed: spec.config.seed,
            txs: l.txs.len(),
            announcement_bytes_per_node: l.announcement_bytes_per_node(),
            announcement_share: l.announcement_share(),
            redundancy: l.redundancy(),
            latency_50: l.reach_latency(0.5),
            latency_90: l.reach_latency(0.9),
            latency_100: l.reach_latency(1.0),
            coverage_shortfall: l.coverage_shortfall(),
            rounds: l.rounds.len(),
            fallback_rate: rates.map(|r| r.fallback),
            est_correct: rates.map(|r| r.est_correct),
            mean_diff: rates.map(|r| r.mean_diff),
            spy_public: l.first_spy_success(SpyKind::Public),
            spy_private: l.first_spy_success(SpyKind::Private),
        }
    }
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    run_id: &'a str,
    scenario: &'a str,
    replicate: u32,
    seed: u64,
    elapsed_s: f64,
    events: u64,
    topology_retries: u32,
    horizon_hit: bool,
    config: &'a erlay_sim::SimConfig,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    master_seed: u64,
    workers: usize,
    runs: Vec<ManifestRun<'a>>,
}

struct Done {
    summary: Summary,
    elapsed_s: f64,
    events: u64,
    retries: u32,
    horizon_hit: bool,
}

/// Run everything in `runs` with up to `workers` threads and write the
/// per-run directories, the combined CSVs and `manifest.json` under `out`.
pub fn execute(runs: &[RunSpec], out: &Path, workers: usize, master_seed: u64) -> Result<Vec<Summary>, CliError> {
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| io_error(&runs_dir, e))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Done, CliError>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    let workers = workers.clamp(1, runs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = runs.get(i) else { break };
                let outcome = run_one(spec, &runs_dir);
                if let Ok(done) = &outcome {
                    eprintln!("{} done in {:.1}s", spec.run_id, done.elapsed_s);
                }
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    let mut finished = Vec::with_capacity(runs.len());
    for r in results.into_inner().unwrap() {
        finished.push(r.expect("every run is picked up")?);
    }

    // Combined files, in run order so the output does not depend on the
    // worker count.
    for name in CSV_FILES {
        let mut combined = Vec::new();
        for (i, spec) in runs.iter().enumerate() {
            let part = fs::read(runs_dir.join(&spec.run_id).join(name)).map_err(|e| io_error(&runs_dir, e))?;
            // Keep the header of the first file only.
            let body = if i == 0 { &part[..] } else { skip_line(&part) };
            combined.extend_from_slice(body);
        }
        write_atomic(&out.join(name), &combined)?;
    }
    let mut summary = csv::Writer::from_writer(Vec::new());
    for d in &finished {
        summary.serialize(&d.summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let summary = summary.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&out.join("summary.csv"), &summary)?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed,
        workers,
        runs: runs
            .iter()
            .zip(&finished)
            .map(|(spec, d)| ManifestRun {
                run_id: &spec.run_id,
                scenario: &spec.scenario,
                replicate: spec.replicate,
                seed: spec.config.seed,
                elapsed_s: d.elapsed_s,
                events: d.events,
                topology_retries: d.retries,
                horizon_hit: d.horizon_hit,
                config: &spec.config,
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&out.join("manifest.json"), &json)?;
    Ok(finished.into_iter().map(|d| d.summary).collect())
}

fn run_one(spec: &RunSpec, runs_dir: &Path) -> Result<Done, CliError> {
    let start = Instant::now();
    let ledger = run(&spec.config).map_err(|e| CliError::Config(format!("{}: {e}", spec.run_id)))?;
    let elapsed_s = start.elapsed().as_secs_f64();

    let mut csv = CsvSet::new(Vec::new(), Vec::new(), Vec::new(), Vec::new()).map_err(runtime)?;
    csv.write(&spec.run_id, &ledger).map_err(runtime)?;
    let parts = csv.into_inner().map_err(runtime)?;

    // Build the run directory under a temporary name and rename it into
    // place, so a reader never sees a half-written run.
    let tmp = runs_dir.join(format!(".{}.tmp", spec.run_id));
    let dest = runs_dir.join(&spec.run_id);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| io_error(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| io_error(&tmp, e))?;
    for (name, bytes) in CSV_FILES.iter().zip(parts) {
        write_synced(&tmp.join(name), &bytes)?;
    }
    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(|e| io_error(&dest, e))?;
    }
    fs::rename(&tmp, &dest).map_err(|e| io_error(&dest, e))?;

    Ok(Done {
        summary: Summary::new(spec, &ledger),
        elapsed_s,
        events: ledger.events,
        retries: ledger.topology_retries,
        horizon_hit: ledger.horizon_hit,
    })
}

fn skip_line(bytes: &[u8]) -> &[u8] {
    match bytes.iter().position(|&b| b == b'\n') {
        Some(i) => &bytes[i + 1..],
        None => &[],
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| io_error(path, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_error(path, e))
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = path.with_file_name(format!(".{name}.tmp"));
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn runtime(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
