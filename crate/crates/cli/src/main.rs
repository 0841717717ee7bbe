use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use erlay_cli::bench::{bench_decode, growth_ratio, DEFAULT_SIZES};
use erlay_cli::runner::{execute, write_atomic};
use erlay_cli::scenario::{ScenarioFile, BUILTIN};
use erlay_cli::CliError;

/// Run relay-protocol simulation scenarios.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Scenario file (TOML); the built-in desk-scale set when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Master seed, overriding the one in the scenario file.
    #[arg(long)]
    seed: Option<u64>,

    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,

    /// Only run the named scenario; repeatable.
    #[arg(long)]
    scenario: Vec<String>,

    /// Time sketch decoding against the difference size and exit.
    #[arg(long)]
    bench_decode: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(args: Args) -> Result<(), CliError> {
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    if args.bench_decode {
        let points = bench_decode(64, &DEFAULT_SIZES, 21, args.seed.unwrap_or(1))?;
        let mut csv = String::from("difference,micros\n");
        println!("{:>10} {:>12}", "difference", "decode_us");
        for p in &points {
            println!("{:>10} {:>12.1}", p.difference, p.micros);
            csv.push_str(&format!("{},{:.3}\n", p.difference, p.micros));
        }
        if let Some(r) = growth_ratio(&points, 50, 100) {
            println!("time(100)/time(50) = {r:.2}");
        }
        std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
        return write_atomic(&args.out.join("bench_decode.csv"), csv.as_bytes());
    }

    let mut file = match &args.config {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::parse(BUILTIN)?,
    };
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let runs = file.expand(&args.scenario)?;
    eprintln!("{} runs, {} workers", runs.len(), args.workers);
    let summaries = execute(&runs, &args.out, args.workers, file.seed)?;
    for s in &summaries {
        let lat = s.latency_100.map_or("-".to_string(), |l| format!("{l:.2}"));
        println!("{:<48} ann/node {:>12.0}  share {:.3}  reach-all {lat}s", s.run_id, s.announcement_bytes_per_node, s.announcement_share);
    }
    Ok(())
}
