use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vfl_core::fl::{partition_noniid, read_idx_labels, QuantityProfile};
use vfl_core::fuzzy::{default_rule_base, FuzzyEvaluator, RuleBase};
use vfl_core::overhead::{overhead_grid, parse_tau_grid, write_overhead_csv, OverheadScenario};
use vfl_core::selection::Scheme;
use vfl_core::sim::{emit_csv, run, write_summary, SimConfig};

#[derive(Parser)]
#[command(name = "vfl-sim", version, about = "Vehicular federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write rounds.csv and summary.json
    Simulate {
        /// JSON config file
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        /// ccs-random, ccs-fuzzy or dcs
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// State-maintenance versus model-exchange overhead over a grid of send intervals
    Overhead {
        /// gboard-ccs, gboard-fuzzy or tokyo
        #[arg(long)]
        preset: String,
        /// start:stop:step in seconds
        #[arg(long, default_value = "1:120:1")]
        tau_grid: String,
        /// Count state messages in one direction only
        #[arg(long)]
        unidirectional: bool,
    },
    /// Score one participant with the fuzzy evaluator
    FuzzyEval {
        /// Sample count
        #[arg(long)]
        sq: f64,
        /// Available throughput in Mbps
        #[arg(long)]
        ta: f64,
        /// Computational capability ratio
        #[arg(long)]
        cc: f64,
        /// Local loss
        #[arg(long)]
        lf: f64,
        #[arg(long, default_value_t = 4500.0)]
        max_sq: f64,
        #[arg(long, default_value_t = 10.4)]
        max_ta: f64,
        #[arg(long, default_value_t = 1.0)]
        max_cc: f64,
        #[arg(long, default_value_t = std::f64::consts::LN_10)]
        max_lf: f64,
        /// Rule table to use instead of the built-in one
        #[arg(long)]
        rule_base: Option<PathBuf>,
    },
    /// Print the built-in 81-rule table
    Rules {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split an IDX label file into per-vehicle label-skewed shards
    Partition {
        /// IDX1 label file
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        classes_per: usize,
        /// Manifest CSV to write
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 30)]
        vehicles: usize,
        #[arg(long, default_value_t = 12)]
        large_vehicles: usize,
        #[arg(long, default_value_t = 4500)]
        large_samples: usize,
        #[arg(long, default_value_t = 45)]
        small_samples: usize,
    },
}

fn read_rules(path: &Path) -> Result<RuleBase> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse().with_context(|| format!("parsing {}", path.display()))
}

fn simulate(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    rounds: Option<usize>,
    scheme: Option<Scheme>,
    workers: Option<usize>,
) -> Result<()> {
    let mut cfg = SimConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = rounds {
        cfg.rounds = r;
    }
    if let Some(s) = scheme {
        cfg.scheme = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let result = run(&cfg)?;
    emit_csv(&result.logs, out.join("rounds.csv"))?;
    write_summary(&result.summary, out.join("summary.json"))?;
    let s = &result.summary;
    println!(
        "{} rounds of {}: final accuracy {:.4}, {:.2} clients selected per round, {} dropped",
        s.rounds, s.scheme, s.final_accuracy, s.mean_selected, s.total_dropped
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            rounds,
            scheme,
            workers,
        } => simulate(&config, &out, seed, rounds, scheme, workers),
        Command::Overhead {
            preset,
            tau_grid,
            unidirectional,
        } => {
            let mut sc = OverheadScenario::preset(&preset)?;
            sc.bidirectional_state = !unidirectional;
            let rows = overhead_grid(&sc, &parse_tau_grid(&tau_grid)?)?;
            write_overhead_csv(&rows, std::io::stdout().lock())?;
            Ok(())
        }
        Command::FuzzyEval {
            sq,
            ta,
            cc,
            lf,
            max_sq,
            max_ta,
            max_cc,
            max_lf,
            rule_base,
        } => {
            let rules = match rule_base {
                Some(p) => read_rules(&p)?,
                None => default_rule_base(),
            };
            let eval = FuzzyEvaluator {
                rules,
                ..FuzzyEvaluator::default()
            };
            let e = eval.evaluate([sq, ta, cc, lf], [max_sq, max_ta, max_cc, max_lf])?;
            println!("score={:.6} level={}", e.score, e.level);
            Ok(())
        }
        Command::Rules { out } => {
            let table = default_rule_base().to_table();
            match out {
                Some(p) => std::fs::write(&p, table).with_context(|| format!("writing {}", p.display())),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::Partition {
            dataset,
            classes_per,
            out,
            seed,
            classes,
            vehicles,
            large_vehicles,
            large_samples,
            small_samples,
        } => {
            if large_vehicles > vehicles {
                bail!("--large-vehicles ({large_vehicles}) exceeds --vehicles ({vehicles})");
            }
            let labels = read_idx_labels(&dataset)?;
            let profile = QuantityProfile::tiered(vehicles, large_vehicles, large_samples, small_samples);
            let manifest = partition_noniid(&labels, classes, classes_per, &profile, seed)?;
            manifest.write_csv(&out)?;
            println!(
                "{} samples over {} vehicles written to {}",
                manifest.vehicles.iter().map(Vec::len).sum::<usize>(),
                manifest.vehicles.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
