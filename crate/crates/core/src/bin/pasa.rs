use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pasa::data::csv::{NumericColumn, INTERCEPT_NAME};
use pasa::data::{read_csv_all, simulate, write_csv};
use pasa::report::select::planted_term;
use pasa::report::{
    emit_reports, forward_select, pairwise_interactions, run_bench, run_replications, simulate_selection_table,
    BenchConfig, EstimateRecord, FeatureTable, ReplicationConfig, ReportFormat, Term,
};
use pasa::{
    combine_with, run, simulate_all, BatchData, BlockSummary, CsvSchema, FileConfig, GlmFamily, PasaError, Result,
    RunConfig, SimSpec, Strategy,
};

#[derive(Parser)]
#[command(name = "pasa", version, about = "Parallel-and-stream estimation for GLMs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<ReportFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated data as CSV.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model on a CSV file or on simulated data.
    Fit {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        run: RunArgs,
        /// CSV input; simulated data is used when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Outcome column when no schema is configured; every other column is numeric.
        #[arg(long, default_value = "y")]
        outcome: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Also write one JSON summary per block into this directory.
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
    /// Combine block summary JSON files (a directory or a list of files).
    Combine {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        pooled: bool,
    },
    /// Monte-Carlo replication study over a grid of strategies and partitions.
    Replicate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<Strategy>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        q: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Time each strategy on one simulated data set.
    Bench {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        runs: Option<usize>,
        /// Also write per-run timings as CSV here.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Forward selection of pairwise interactions by held-out AUC.
    Select {
        /// CSV input; uses the configured schema. Simulated data when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        train_blocks: Option<usize>,
    },
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_parser = parse_family)]
    family: Option<GlmFamily>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
}

fn parse_family(text: &str) -> std::result::Result<GlmFamily, String> {
    match text {
        "gaussian" | "gaussian_identity" | "linear" => Ok(GlmFamily::GaussianIdentity),
        "bernoulli" | "bernoulli_logit" | "logistic" => Ok(GlmFamily::BernoulliLogit),
        other => Err(format!("unknown family `{other}` (expected gaussian or logistic)")),
    }
}

struct Context {
    file: FileConfig,
    seed: Option<u64>,
    threads: Option<usize>,
    format: ReportFormat,
}

impl Context {
    fn sim(&self, args: &SimArgs) -> SimSpec {
        let mut sim = self.file.sim.clone().unwrap_or_default();
        if let Some(f) = args.family {
            sim.family = f;
        }
        if let Some(n) = args.n {
            sim.n = n;
        }
        if let Some(r) = args.rho {
            sim.rho = r;
        }
        if let Some(s) = self.seed {
            sim.seed = s;
        }
        sim
    }

    fn run(&self, args: Option<&RunArgs>) -> RunConfig {
        let mut run = self.file.run.clone().unwrap_or_default();
        if let Some(a) = args {
            if let Some(s) = a.strategy {
                run.strategy = s;
            }
            if let Some(k) = a.k {
                run.k = k;
            }
            if let Some(q) = a.q {
                run.q = q;
            }
        }
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(t) = self.threads {
            run.threads = t;
        }
        run
    }
}

fn write_output(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn emit_estimate(record: &EstimateRecord, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => write_output(&record.to_json()?),
        ReportFormat::Table => write_output(&record.to_table()),
        ReportFormat::Csv => {
            let mut text = String::from("term,estimate,se,lower,upper\n");
            for (j, iv) in record.intervals.iter().enumerate() {
                let name = record.names.as_ref().map_or_else(|| format!("beta[{j}]"), |n| n[j].clone());
                text.push_str(&format!("{name},{},{},{},{}\n", record.beta[j], iv.se, iv.lower, iv.upper));
            }
            write_output(&text)
        }
    }
}

fn default_schema(path: &Path, outcome: &str) -> Result<CsvSchema> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if !headers.iter().any(|h| h == outcome) {
        return Err(PasaError::Schema(format!("outcome column `{outcome}` not found")));
    }
    Ok(CsvSchema {
        outcome: outcome.to_string(),
        intercept: true,
        numeric: headers
            .iter()
            .filter(|h| *h != outcome)
            .map(|h| NumericColumn { name: h.to_string(), standardize: false, mean: None, sd: None })
            .collect(),
        categorical: Vec::new(),
        interactions: Vec::new(),
        two_pass: false,
        p: None,
    })
}

fn block_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(PasaError::Config("no block summary files found".into()));
    }
    Ok(files)
}

fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Context { file, seed: cli.seed, threads: cli.threads, format: cli.format.unwrap_or_default() };

    match cli.command {
        Command::Simulate { sim, out } => {
            let spec = ctx.sim(&sim);
            let first = usize::from(spec.intercept);
            let columns: Vec<(String, usize)> = (first..spec.p).map(|j| (format!("x{}", j + 1 - first), j)).collect();
            let stream = simulate(&spec, 1 << 14)?;
            match out {
                Some(path) => write_csv(io::BufWriter::new(fs::File::create(path)?), "y", &columns, stream),
                None => write_csv(io::stdout().lock(), "y", &columns, stream),
            }
        }
        Command::Fit { sim, run: run_args, input, outcome, level, summaries } => {
            let cfg = ctx.run(Some(&run_args));
            let spec = ctx.sim(&sim);
            let (data, names, family) = match &input {
                Some(path) => {
                    let schema = match &ctx.file.schema {
                        Some(s) => s.clone(),
                        None => default_schema(path, &outcome)?,
                    };
                    let (data, names) = read_csv_all(path, &schema)?;
                    (data, Some(names), spec.family)
                }
                None => (simulate_all(&spec)?, None, spec.family),
            };
            let est = run(family, &data, &cfg)?;
            if let Some(dir) = summaries {
                fs::create_dir_all(&dir)?;
                for b in &est.per_block {
                    fs::write(dir.join(format!("block_{:05}.json", b.block_id)), b.to_json()?)?;
                }
            }
            emit_estimate(&EstimateRecord::new(&est, level, names)?, ctx.format)
        }
        Command::Combine { inputs, level, pooled } => {
            let blocks = block_files(&inputs)?
                .iter()
                .map(|f| {
                    let text = fs::read_to_string(f)?;
                    BlockSummary::from_json(&text)
                        .map_err(|e| PasaError::Schema(format!("{}: {e}", f.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            let weighting = if pooled { pasa::CombineWeighting::Pooled } else { pasa::CombineWeighting::BlockDispersion };
            let est = combine_with(&blocks, weighting)?;
            emit_estimate(&EstimateRecord::new(&est, level, None)?, ctx.format)
        }
        Command::Replicate { sim, strategy, k, q, reps, level } => {
            let mut base = ReplicationConfig { sim: ctx.sim(&sim), run: ctx.run(None), ..ReplicationConfig::default() };
            let r = &ctx.file.replicate;
            base.reps = reps.or(r.reps).unwrap_or(base.reps);
            base.base_seed = ctx.seed.or(r.base_seed).unwrap_or(base.base_seed);
            base.level = level.or(r.level).unwrap_or(base.level);
            base.threads = ctx.threads.or(r.threads).unwrap_or(base.threads);
            let strategies = if strategy.is_empty() { vec![base.run.strategy] } else { strategy };
            let ks = if k.is_empty() { vec![base.run.k] } else { k };
            let qs = if q.is_empty() { vec![base.run.q] } else { q };
            let mut reports = Vec::new();
            for &s in &strategies {
                let grid: Vec<(usize, usize)> = match s {
                    Strategy::Offline => vec![(1, 1)],
                    Strategy::Mapreduce => ks.iter().map(|&k| (k, 1)).collect(),
                    Strategy::Pasa => ks.iter().flat_map(|&k| qs.iter().map(move |&q| (k, q))).collect(),
                };
                for (k, q) in grid {
                    let cfg = ReplicationConfig {
                        run: RunConfig { strategy: s, k, q, ..base.run.clone() },
                        ..base.clone()
                    };
                    reports.push(run_replications(&cfg)?);
                }
            }
            write_output(&emit_reports(&reports, ctx.format)?)
        }
        Command::Bench { sim, run: run_args, runs, csv_out } => {
            let mut cfg = ctx.file.bench.clone().unwrap_or_default();
            if ctx.file.sim.is_some() || sim.family.is_some() || sim.n.is_some() || sim.rho.is_some() {
                let mut spec = ctx.sim(&sim);
                if ctx.file.sim.is_none() && sim.n.is_none() {
                    spec.n = cfg.sim.n;
                }
                cfg.sim = spec;
            }
            cfg.run = ctx.run(Some(&run_args));
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let report = run_bench(&BenchConfig { ..cfg })?;
            if let Some(path) = csv_out {
                report.write_csv(fs::File::create(path)?)?;
            }
            match ctx.format {
                ReportFormat::Json => write_output(&serde_json::to_string_pretty(&report)?),
                ReportFormat::Csv => report.write_csv(io::stdout().lock()),
                ReportFormat::Table => {
                    let mut text = format!("{:<10} {:>5} {:>4} {:>9} {:>12} {:>12}\n", "strategy", "K", "Q", "N", "C.Time(s)", "R.Time(s)");
                    for s in &report.summaries {
                        text.push_str(&format!(
                            "{:<10} {:>5} {:>4} {:>9} {:>12.4} {:>12.4}\n",
                            s.strategy.name(),
                            s.k,
                            s.q,
                            s.n,
                            s.median_c_time_s,
                            s.median_r_time_s
                        ));
                    }
                    write_output(&text)
                }
            }
        }
        Command::Select { input, n, k, q, train_blocks } => {
            let mut cfg = ctx.file.select.clone().unwrap_or_default();
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(q) = q {
                cfg.q = q;
            }
            if let Some(t) = train_blocks {
                cfg.train_blocks = t;
            }
            if let Some(s) = ctx.seed {
                cfg.seed = s;
            }
            if let Some(t) = ctx.threads {
                cfg.run.threads = t;
            }
            let table = match &input {
                Some(path) => {
                    let schema = ctx
                        .file
                        .schema
                        .clone()
                        .ok_or_else(|| PasaError::Config("select with --input needs a [schema] section".into()))?;
                    let (data, names): (BatchData, Vec<String>) = read_csv_all(path, &schema)?;
                    cfg.intercept = names.iter().any(|n| n == INTERCEPT_NAME);
                    FeatureTable::from_design(&data, &names)?
                }
                None => simulate_selection_table(n, cfg.seed),
            };
            let base: Vec<Term> = table.names().iter().map(|n| Term::main(n)).collect();
            let candidates = pairwise_interactions(&base);
            let trace = forward_select(&base, &candidates, &table, &cfg)?;
            match ctx.format {
                ReportFormat::Table => {
                    let mut text = format!("base AUC {:.6}\n", trace.base_auc);
                    for (t, a) in trace.path.iter().zip(&trace.path_auc) {
                        text.push_str(&format!("+ {t:<24} AUC {a:.6}\n"));
                    }
                    text.push_str(&format!(
                        "final AUC {:.6}; {} models in {:.2}s\n",
                        trace.final_auc, trace.models_evaluated, trace.total_time_s
                    ));
                    if input.is_none() {
                        text.push_str(&format!("planted term: {}\n", planted_term()));
                    }
                    write_output(&text)
                }
                _ => write_output(&serde_json::to_string_pretty(&trace)?),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
