use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lobsim::bridge::{serve, BridgeSession};
use lobsim::config::{Manifest, RunConfig};
use lobsim::error::ErrorClass;
use lobsim::eval::read_daily_csv;
use lobsim::normalize::NormalizerStats;
use lobsim::par::Parallelism;
use lobsim::store::{list_day_files, load_day_auto, FileFormat};
use lobsim::synth::{mix, MarketModel};
use lobsim::{pipeline, Error, Result};

#[derive(Parser)]
#[command(
    name = "lobsim",
    version,
    about = "Depth-20 order-book replay and per-day paired evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-validate day files and write canonical copies.
    Ingest {
        /// Day files or directories of day files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
    },
    /// Run the policy and both baselines on every day and horizon.
    EvalCompare(RunArgs),
    /// Per-day tests, BH adjustment and bootstrap over per-episode CSVs.
    StatsEval {
        /// Per-episode CSVs; defaults to every episodes_*.csv in the output directory.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Figure series (CSV + SVG) from per-day CSVs.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve episodes over the line-delimited JSON protocol.
    BridgeServe {
        #[arg(long, value_enum, default_value_t = Transport::Stdio)]
        transport: Transport,
        /// Address for the socket transport.
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Default horizon when a reset does not name one; first configured horizon otherwise.
        #[arg(long)]
        horizon: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic month of day files.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 28)]
        days: usize,
        #[arg(long, default_value = "2020-02-01")]
        start: NaiveDate,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 86_400)]
        snapshots_per_day: usize,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
    },
    /// Fit observation statistics on random rollouts and save them frozen.
    FitNorm {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

impl From<Format> for FileFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => FileFormat::Csv,
            Format::Binary => FileFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Stdio,
    Socket,
}

/// Flags shared by the commands that take a run configuration. Each one
/// overrides the matching config key.
#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    date_from: Option<String>,
    #[arg(long)]
    date_to: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    k_starts: Option<String>,
    /// Comma-separated horizons in seconds.
    #[arg(long)]
    horizons: Option<String>,
    #[arg(long)]
    start_placement: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    winsorize: Option<String>,
    /// mean or median.
    #[arg(long)]
    aggregate: Option<String>,
    /// greater, less or two-sided.
    #[arg(long)]
    alternative: Option<String>,
    #[arg(long)]
    bootstrap_resamples: Option<String>,
    #[arg(long)]
    impact_k: Option<String>,
    #[arg(long)]
    impact_half_life: Option<String>,
    #[arg(long)]
    taker_fee_bps: Option<String>,
    /// twap, vwap, random, oracle or bridge.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    normalizer: Option<String>,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        let flags = [
            ("data_dir", &self.data_dir),
            ("out_dir", &self.out_dir),
            ("date_from", &self.date_from),
            ("date_to", &self.date_to),
            ("seed", &self.seed),
            ("k_starts", &self.k_starts),
            ("horizons", &self.horizons),
            ("start_placement", &self.start_placement),
            ("alpha", &self.alpha),
            ("winsorize", &self.winsorize),
            ("aggregate", &self.aggregate),
            ("alternative", &self.alternative),
            ("bootstrap_resamples", &self.bootstrap_resamples),
            ("impact_k", &self.impact_k),
            ("impact_half_life", &self.impact_half_life),
            ("taker_fee_bps", &self.taker_fee_bps),
            ("policy", &self.policy),
            ("normalizer", &self.normalizer),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn mode(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }
}

fn echo_manifest(m: &Manifest) {
    for (k, v) in m.summary_lines() {
        eprintln!("{k}: {v}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            inputs,
            out_dir,
            format,
        } => {
            let summary = pipeline::ingest(&inputs, &out_dir, format.into())?;
            for (path, report) in &summary.written {
                println!(
                    "{}\tkept {}/{} rows, clipped {}",
                    path.display(),
                    report.rows_kept,
                    report.rows_in,
                    report.values_clipped
                );
            }
            for (path, why) in &summary.failed {
                eprintln!("failed: {}: {why}", path.display());
            }
            if summary.written.is_empty() {
                return Err(Error::Data("no file passed validation".into()));
            }
        }
        Command::EvalCompare(args) => {
            let cfg = args.config()?;
            let out = pipeline::eval_compare(&cfg, args.mode())?;
            echo_manifest(&out.manifest);
            for p in out.episode_files.iter().chain(&out.daily_files) {
                println!("{}", p.display());
            }
        }
        Command::StatsEval { inputs, run } => {
            let cfg = run.config()?;
            let inputs = if inputs.is_empty() {
                episode_csvs_in(&cfg.out_dir)?
            } else {
                inputs
            };
            let out = pipeline::stats_eval(&inputs, &cfg, run.mode())?;
            for r in &out.results {
                eprintln!(
                    "h={} {}: mean gap {:.6}% p_adj {:.3e} CI [{:.6}, {:.6}]",
                    r.horizon_s, r.baseline, r.mean_gap, r.p_adj, r.ci_low, r.ci_high
                );
            }
            println!("{}", out.csv_path.display());
            println!("{}", out.report_path.display());
        }
        Command::Plot { inputs, out_dir } => {
            let mut daily = Vec::new();
            for p in &inputs {
                let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
                daily.extend(
                    read_daily_csv(BufReader::new(f)).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?,
                );
            }
            for f in lobsim::plot::write_figures(&daily, &out_dir)? {
                println!("{}", f.display());
            }
        }
        Command::BridgeServe {
            transport,
            listen,
            horizon,
            run,
        } => bridge_serve(&run.config()?, transport, &listen, horizon)?,
        Command::Synth {
            out_dir,
            days,
            start,
            seed,
            snapshots_per_day,
            format,
        } => {
            let model = MarketModel {
                snapshots_per_day,
                ..Default::default()
            };
            for p in model.write_month(&out_dir, start, days, seed, format.into())? {
                println!("{}", p.display());
            }
        }
        Command::FitNorm { out, run } => {
            let stats = pipeline::fit_norm(&run.config()?, &out)?;
            eprintln!("fitted on {} observations", stats.count);
            println!("{}\t{}", out.display(), stats.sha256());
        }
    }
    Ok(())
}

fn episode_csvs_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("episodes_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no episodes_*.csv in {}", dir.display())));
    }
    Ok(files)
}

fn bridge_serve(cfg: &RunConfig, transport: Transport, listen: &str, horizon: Option<u64>) -> Result<()> {
    let mut days = Vec::new();
    for (date, path) in list_day_files(&cfg.data_dir)? {
        if cfg.includes(date) {
            days.push(load_day_auto(&path)?.0);
        }
    }
    let normalizer = cfg.normalizer.as_deref().map(NormalizerStats::load).transpose()?;
    let horizon = horizon.unwrap_or(cfg.horizons[0]);
    let setup = cfg.episode_setup();
    match transport {
        Transport::Stdio => {
            let mut session = BridgeSession::new(&days, setup, horizon, normalizer.as_ref(), cfg.seed)?;
            let stdin = std::io::stdin();
            let summary = serve(&mut session, stdin.lock(), std::io::stdout().lock())?;
            eprintln!("served {} episodes, {} steps", summary.episodes, summary.steps);
        }
        Transport::Socket => {
            let listener =
                TcpListener::bind(listen).map_err(|e| Error::Config(format!("cannot listen on {listen}: {e}")))?;
            let addr = listener.local_addr().map_err(|e| Error::Config(e.to_string()))?;
            eprintln!("listening on {addr}");
            let _ = std::io::stderr().flush();
            std::thread::scope(|scope| {
                for (i, conn) in listener.incoming().enumerate() {
                    let Ok(stream) = conn else { continue };
                    let (days, normalizer) = (&days, normalizer.as_ref());
                    scope.spawn(move || {
                        let seed = mix(cfg.seed, i as u64);
                        let Ok(reader) = stream.try_clone() else { return };
                        let result = BridgeSession::new(days, setup, horizon, normalizer, seed)
                            .and_then(|mut s| serve(&mut s, BufReader::new(reader), stream));
                        if let Err(e) = result {
                            eprintln!("connection {i}: {e}");
                        }
                    });
                }
            });
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Stats => 4,
        ErrorClass::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
