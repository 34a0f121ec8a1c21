//! Command-line surface.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lampo::baselines::Method;
use lampo::eval::dataset::{convert_records, write_dataset, ConvertOptions, SourceFormat, Split};
use lampo::eval::render_table;
use lampo::thresholding::{ThresholdStrategy, Window};

use crate::manifest::JobManifest;
use crate::simulate::SweepConfig;

#[derive(Debug, Parser)]
#[command(name = "lampo", version, about = "Few-shot ordinal classification with pairwise preference prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score, threshold and evaluate the test split.
    Classify(JobArgs),
    /// Compute expected, self-supervised and mixture thresholds.
    Calibrate(JobArgs),
    /// Run a pointwise baseline (icl, cc, globale).
    Baseline {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Sweep accuracy against the simulated oracle.
    Simulate(SimulateArgs),
    /// Convert a jsonl/csv/tsv source into the dataset format.
    ConvertDataset(ConvertArgs),
    /// Inspect or prune a comparison cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Args)]
pub struct JobArgs {
    /// Job manifest (TOML).
    pub manifest: PathBuf,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<ThresholdStrategy>,
    /// Search half-width per threshold; `auto` or `unbounded` also accepted.
    #[arg(long)]
    pub window: Option<String>,
    /// Comma-separated demonstration seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl JobArgs {
    pub fn manifest(&self) -> Result<JobManifest> {
        let mut m = JobManifest::load(&self.manifest)?;
        m.resume |= self.resume;
        m.dry_run |= self.dry_run;
        if let Some(p) = self.parallelism {
            m.parallelism = Some(p);
        }
        if let Some(dir) = &self.output_dir {
            m.output_dir = dir.clone();
        }
        if let Some(s) = self.strategy {
            m.run.strategy = s;
        }
        if let Some(w) = &self.window {
            m.run.search.window = parse_window(w)?;
        }
        if let Some(seeds) = &self.seeds {
            m.run.seeds = seeds.clone();
        }
        Ok(m)
    }
}

fn parse_window(s: &str) -> Result<Window> {
    Ok(match s {
        "auto" => Window::Auto,
        "unbounded" => Window::Unbounded,
        n => Window::HalfWidth(
            n.parse()
                .map_err(|_| lampo::Error::Config(format!("window `{n}` is not auto, unbounded or an integer")))?,
        ),
    })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sweep config (TOML); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub shots: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<ThresholdStrategy>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub test_items: Option<usize>,
    #[arg(long)]
    pub probing_size: Option<usize>,
    #[arg(long)]
    pub tie_margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, default_value = "simulation")]
    pub output_dir: PathBuf,
}

impl SimulateArgs {
    pub fn sweep(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => SweepConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(classes, shots, noise, strategies, trials, test_items, probing_size, tie_margin, seed, parallelism);
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "jsonl")]
    pub format: SourceFormat,
    #[arg(long, default_value = "text")]
    pub text_field: String,
    #[arg(long, default_value = "label")]
    pub label_field: String,
    #[arg(long)]
    pub aspect_field: Option<String>,
    /// `demo` or `test`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Demonstration seed (required for the demo split).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Names for integer labels, in index order.
    #[arg(long, value_delimiter = ',')]
    pub label_names: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Summarize entries by template and parsed outcome.
    Inspect { path: PathBuf },
    /// Drop duplicates, unreadable lines and (optionally) other templates.
    Prune {
        path: PathBuf,
        /// Template ids to keep; all when omitted.
        #[arg(long = "keep-template")]
        keep: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Classify(args) => {
            let run = crate::classify::classify(&args.manifest()?)?;
            println!("{}", run.plan);
            if let Some(report) = run.report {
                print!("{}", render_table(std::slice::from_ref(&report)));
            }
        }
        Command::Calibrate(args) => {
            let manifest = args.manifest()?;
            let doc = crate::classify::calibrate(&manifest)?;
            for s in &doc.seeds {
                let c = &s.calibration;
                println!(
                    "seed {}: expected {}, self-supervised {}, mixture {}{}",
                    s.seed,
                    c.expected,
                    c.self_supervised,
                    c.mixture,
                    if s.warning { " (fell back to expected)" } else { "" }
                );
            }
            println!("wrote {}", manifest.output_dir.join("calibration.json").display());
        }
        Command::Baseline { job, method } => {
            let mut manifest = job.manifest()?;
            if let Some(m) = method {
                manifest.run.method = m;
            }
            let run = crate::baseline::baseline(&manifest)?;
            println!("planned pointwise calls: at most {}", run.planned_calls);
            if let Some(report) = run.report {
                print!("{}", render_table(std::slice::from_ref(&report)));
            }
        }
        Command::Simulate(args) => {
            let report = crate::simulate::run_sweep(&args.sweep()?)?;
            report.write(&args.output_dir)?;
            print!("{}", report.table());
        }
        Command::ConvertDataset(args) => {
            let split = match args.split.as_str() {
                "demo" => Split::Demo,
                "test" => Split::Test,
                other => return Err(lampo::Error::Config(format!("unknown split `{other}` (demo, test)")).into()),
            };
            let opts = ConvertOptions {
                format: args.format,
                text_field: args.text_field,
                label_field: args.label_field,
                aspect_field: args.aspect_field,
                split,
                seed: args.seed,
                label_names: args.label_names,
            };
            let records = convert_records(&args.input, &opts)?;
            write_dataset(&args.output, &records)?;
            println!("wrote {} records to {}", records.len(), args.output.display());
        }
        Command::Cache { action } => match action {
            CacheAction::Inspect { path } => {
                println!("{}", serde_json::to_string_pretty(&crate::cache::inspect(&path)?)?);
            }
            CacheAction::Prune { path, keep } => {
                println!("{}", serde_json::to_string_pretty(&crate::cache::prune(&path, &keep)?)?);
            }
        },
    }
    Ok(())
}
