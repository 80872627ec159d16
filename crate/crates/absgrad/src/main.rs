use std::path::{Path, PathBuf};
use std::process::ExitCode;

use absgrad::core::attribution::ReversalParams;
use absgrad::core::model::TrainConfig;
use absgrad::core::synth::S1_FRACTION;
use absgrad::fixture::{self, FIXTURE_COUNT, FIXTURE_SEED};
use absgrad::format::write_weights;
use absgrad::harness::Context;
use absgrad::render::Colormap;
use absgrad::report::{average_ratios, emit_report, improvement_ratios, MetricReport, RatioTable, VARIANT_SUFFIXES};
use absgrad::synthval::{emit_synthval, run_sweep, GRIDS, STD_RATIOS};
use absgrad::{Error, Result, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Gradient saliency maps and their evaluation.
#[derive(Parser)]
#[command(name = "absgrad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `cache_dir`; ABSGRAD_CACHE_DIR still wins.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Overrides `dataset` (manifest path).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        let cwd = std::env::current_dir().unwrap_or_default();
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.cache_dir {
            config.cache_dir = cwd.join(dir);
        }
        if let Some(d) = &self.dataset {
            config.dataset = cwd.join(d);
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute saliency maps for every (image, method) into the cache.
    Explain(RunArgs),
    /// Score cached maps and write metrics.csv, metrics.json, means.csv, means.md.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Cache `.rev` variants of every configured method.
    Reverse {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20.0)]
        l: f64,
        #[arg(long, default_value_t = 30.0)]
        m: f64,
    },
    /// Evaluate, then write reports and per-image heatmaps.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Colormap::Heat)]
        colormap: Colormap,
    },
    /// Synthetic four-Gaussian ordering checks and renders.
    Synthval {
        #[arg(long, default_value = "synthval")]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        side: usize,
    },
    /// Variant / base mean ratios from a metrics.json report.
    Ratios {
        #[arg(long)]
        report: PathBuf,
        /// Single-base mode: the base method name.
        #[arg(long, conflicts_with = "bases")]
        base: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "base")]
        variants: Vec<String>,
        /// Averaged mode: base names, each combined with every suffix.
        #[arg(long, value_delimiter = ',')]
        bases: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        suffixes: Vec<String>,
        /// Also write ratios.csv and ratios.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the blob fixture dataset and config; optionally retrain weights.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FIXTURE_COUNT)]
        count: usize,
        #[arg(long, default_value_t = FIXTURE_SEED)]
        seed: u64,
        /// Train the classifier and write its weights to this path.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
    },
}

fn print_issues(kind: &str, issues: &[absgrad::report::Issue]) {
    for i in issues {
        eprintln!("{kind}: {} / {}: {}", i.image, i.method, i.message);
    }
}

fn evaluate_to(config: &RunConfig, out: &Path) -> Result<(Context, MetricReport)> {
    let ctx = Context::open(config)?;
    let report = ctx.evaluate();
    print_issues("missing", &report.missing);
    print_issues("failed", &report.failures);
    for p in emit_report(&report, out)? {
        println!("wrote {}", p.display());
    }
    print!("{}", report.means_markdown());
    Ok((ctx, report))
}

fn write_ratios(table: &RatioTable, out: Option<&Path>) -> Result<()> {
    let csv = table.to_csv()?;
    print!("{csv}");
    if let Some(dir) = out {
        absgrad::format::write_atomic(&dir.join("ratios.csv"), csv.as_bytes())?;
        absgrad::format::write_atomic(&dir.join("ratios.json"), table.to_json()?.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain(args) => {
            let summary = absgrad::run_explain(&args.load()?)?;
            print_issues("failed", &summary.failures);
            println!("computed {} reused {} failed {}", summary.computed, summary.reused, summary.failed);
        }
        Command::Evaluate { run, out } => {
            evaluate_to(&run.load()?, &out)?;
        }
        Command::Reverse { run, l, m } => {
            let (summary, methods) = absgrad::run_reverse(&run.load()?, ReversalParams::new(l, m)?)?;
            print_issues("failed", &summary.failures);
            let labels: Vec<String> = methods.iter().map(|m| m.display_name()).collect();
            println!("{}", labels.join(" "));
            println!("computed {} reused {} failed {}", summary.computed, summary.reused, summary.failed);
        }
        Command::Report { run, out, colormap } => {
            let (ctx, _) = evaluate_to(&run.load()?, &out)?;
            let pngs = ctx.heatmaps(&out.join("heatmaps"), colormap)?;
            println!("wrote {} heatmaps under {}", pngs.len(), out.join("heatmaps").display());
        }
        Command::Synthval { out, side } => {
            if side < 10 {
                return Err(Error::Config("--side must be at least 10".into()));
            }
            let report = run_sweep(side, &GRIDS, &STD_RATIOS)?;
            for p in emit_synthval(&report, &out, GRIDS[0].0)? {
                println!("wrote {}", p.display());
            }
            for c in &report.cases {
                println!(
                    "s2/s1={:<4} lb={:<3} interval={:<3} rcap={:?} {}",
                    c.s2 / c.s1,
                    c.report.lower_bound,
                    c.report.interval,
                    c.report.rcap,
                    if c.report.all_hold() { "ok" } else { "FAILED" }
                );
            }
            println!("s1 = {}·side; all orderings hold: {}", S1_FRACTION, report.all_hold);
        }
        Command::Ratios {
            report,
            base,
            variants,
            bases,
            suffixes,
            out,
        } => {
            let text = std::fs::read_to_string(&report).map_err(|source| Error::Io { path: report.clone(), source })?;
            let report = MetricReport::from_json(&text)?;
            let table = match base {
                Some(base) => improvement_ratios(&report, &base, &variants)?,
                None => {
                    if bases.is_empty() {
                        return Err(Error::Config("give --base with --variants, or --bases".into()));
                    }
                    let suffixes = if suffixes.is_empty() {
                        VARIANT_SUFFIXES.iter().map(|s| s.to_string()).collect()
                    } else {
                        suffixes
                    };
                    average_ratios(&report, &bases, &suffixes)?
                }
            };
            write_ratios(&table, out.as_deref())?;
        }
        Command::Fixture {
            out,
            count,
            seed,
            train,
            epochs,
        } => {
            if let Some(path) = train {
                let model = fixture::train_blob_model(&TrainConfig {
                    epochs,
                    ..TrainConfig::default()
                })?;
                write_weights(&path, &model)?;
                let (train_acc, held_out) = fixture::blob_accuracy(&model);
                println!("wrote {} (train accuracy {train_acc:.3}, held-out {held_out:.3})", path.display());
            }
            let config = fixture::write_fixture(&out, count, seed)?;
            println!("wrote {}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
