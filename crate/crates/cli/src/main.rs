use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use argpet::{cmd_prepare, cmd_report, cmd_sweep, evaluate_cell, plan, run_cell, CellSpec, ExperimentSpec, Overrides};
use argpet_core::evaluation::MetricsTable;
use argpet_core::corpus::Label;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "argpet", version, about = "Few-shot claim, argument and stance classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct SpecArgs {
    /// Experiment file (TOML, or the spec.json written by prepare).
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Cmd {
    /// Downsample, transform and split the corpus.
    Prepare(SpecArgs),
    /// Train and evaluate a single cell.
    Train {
        #[command(flatten)]
        spec: SpecArgs,
        /// Defaults to the first configured proportion.
        #[arg(long)]
        proportion: Option<f64>,
        /// Defaults to the first seed of the plan.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-evaluate a finished cell from its checkpoints.
    Evaluate {
        #[arg(long)]
        cell: PathBuf,
    },
    /// Run every (proportion, seed) cell, then report.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Concurrent worker processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the cell plan without running it.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write per-run and aggregate CSVs for every finished cell below DIR.
    Report { dir: PathBuf },
}

fn resolve(args: &SpecArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    spec.apply(&args.overrides)?;
    Ok(spec)
}

fn print_table(title: &str, names: &[&str], t: &MetricsTable) {
    println!("{title}: accuracy {:.4}  macro-F1 {:.4}", t.accuracy, t.macro_f1);
    for (name, c) in names.iter().zip(&t.classes) {
        println!(
            "  {name:<18} P {:.4}  R {:.4}  F1 {:.4}  n {}",
            c.precision, c.recall, c.f1, c.support
        );
    }
}

fn print_tables(five: &MetricsTable, three: &MetricsTable) {
    let labels: Vec<&str> = Label::ALL.iter().map(|l| l.as_str()).collect();
    print_table("5-class", &labels, five);
    print_table("3-class stance", &["for", "against", "no_stance"], three);
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Prepare(args) => {
            let spec = resolve(&args)?;
            let m = cmd_prepare(&spec)?;
            println!("prepared {}", spec.prepared_dir().display());
            for (split, counts) in &m.counts {
                println!("  {split}: {counts:?}");
            }
        }
        Cmd::Train { spec, proportion, seed } => {
            let spec = resolve(&spec)?;
            let p = proportion.or(spec.proportions.first().copied()).context("no proportion")?;
            let s = seed.or(spec.seed_list().first().copied()).context("no seed")?;
            let cell = CellSpec::new(&spec, p, s);
            let r = run_cell(&cell)?;
            println!("cell {}", cell.dir().display());
            print_tables(&r.metrics, &r.stance3);
        }
        Cmd::Evaluate { cell } => {
            let (five, three, same) = evaluate_cell(&cell)?;
            print_tables(&five, &three);
            println!("matches stored run report: {}", if same { "yes" } else { "no" });
            return Ok(same);
        }
        Cmd::Sweep { spec, jobs, dry_run } => {
            let spec = resolve(&spec)?;
            if dry_run {
                spec.validate()?;
                let cells = plan(&spec);
                for c in &cells {
                    println!("p={} seed={} {}", c.proportion, c.seed, c.dir().display());
                }
                println!("{} cells", cells.len());
                return Ok(true);
            }
            let exe = std::env::current_exe().context("locating the argpet executable")?;
            let r = cmd_sweep(&spec, &exe, jobs)?;
            println!(
                "{} cells: {} skipped, {} succeeded, {} failed",
                r.cells,
                r.skipped,
                r.succeeded,
                r.failed.len()
            );
            for f in &r.failed {
                println!("  failed p={} seed={}: {}", f.proportion, f.seed, f.message);
            }
            if r.skipped + r.succeeded > 0 {
                report(&spec.out)?;
            }
            return Ok(r.failed.is_empty());
        }
        Cmd::Report { dir } => report(&dir)?,
    }
    Ok(true)
}

fn report(dir: &Path) -> Result<()> {
    let s = cmd_report(dir)?;
    println!("{} runs in {} conditions", s.runs, s.conditions);
    for f in &s.files {
        println!("  {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
