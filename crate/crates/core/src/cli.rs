//! Command-line front end: `serve`, `bench` and `analyze`.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unreadable or
//! invalid config), 2 when the invoked module fails at runtime.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis;
use crate::config::RootConfig;
use crate::orchestrator;
use crate::plant::FitnessModel;
use crate::service::{self, DelayDistribution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gabench", version, about = "Distributed GA benchmark: fitness service, campaign runner and runtime analysis")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Print the merged effective config as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the fitness evaluation service.
    Serve(ServeArgs),
    /// Run a benchmark campaign against a fitness service.
    Bench(BenchArgs),
    /// Filter trial records and compare runtime distributions.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    /// none | fixed:MS | exp:MEAN_MS | lognorm:MU,SIGMA
    #[arg(long, value_name = "SPEC")]
    pub latency: Option<DelayDistribution>,
    /// Probability that a request is answered with 503.
    #[arg(long, value_name = "P")]
    pub failure_rate: Option<f64>,
    /// Seed for the latency generator.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "URL")]
    pub service_url: Option<String>,
    #[arg(long, value_name = "S")]
    pub service_label: Option<String>,
    #[arg(long, value_name = "C")]
    pub client_label: Option<String>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Concurrent populations per trial.
    #[arg(long, value_name = "K")]
    pub populations: Option<usize>,
    #[arg(long, value_name = "N")]
    pub pop_size: Option<usize>,
    #[arg(long, value_name = "G")]
    pub generations: Option<usize>,
    /// Seconds between trial starts.
    #[arg(long, value_name = "S")]
    pub interval_s: Option<f64>,
    /// Campaign seed; each population derives its own from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Record files or glob patterns.
    #[arg(long, value_name = "GLOB", num_args = 1..)]
    pub inputs: Vec<String>,
    /// Populations whose generation-0 best is at or below this are failed.
    #[arg(long, value_name = "F")]
    pub threshold: Option<f64>,
    /// Significance level for the KS tests.
    #[arg(long, value_name = "F")]
    pub alpha: Option<f64>,
    /// Also fail populations whose generation 0 scores below the seed controller.
    #[arg(long)]
    pub strict_seed_check: bool,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Applies command-line overrides on top of the file config.
pub fn merge(cli: &Cli, mut cfg: RootConfig) -> RootConfig {
    match &cli.command {
        Some(Command::Serve(a)) => {
            if let Some(p) = a.port {
                cfg.serve.port = p;
            }
            if let Some(d) = a.latency {
                cfg.latency.distribution = d;
            }
            if let Some(r) = a.failure_rate {
                cfg.latency.failure_rate = r;
            }
            if let Some(s) = a.seed {
                cfg.latency.rng_seed = s;
            }
        }
        Some(Command::Bench(a)) => {
            let c = &mut cfg.campaign;
            if let Some(v) = &a.service_url {
                c.service_url = v.clone();
            }
            if let Some(v) = &a.service_label {
                c.service_label = v.clone();
            }
            if let Some(v) = &a.client_label {
                c.client_label = v.clone();
            }
            if let Some(v) = a.trials {
                c.n_trials = v;
            }
            if let Some(v) = a.populations {
                c.populations_per_trial = v;
            }
            if let Some(v) = a.interval_s {
                c.trial_interval_s = v;
            }
            if let Some(v) = &a.out {
                c.out_dir = v.clone();
            }
            if let Some(v) = a.pop_size {
                cfg.ga.pop_size = v;
            }
            if let Some(v) = a.generations {
                cfg.ga.n_generations = v;
            }
            if let Some(v) = a.seed {
                cfg.ga.rng_seed = v;
            }
        }
        Some(Command::Analyze(a)) => {
            if !a.inputs.is_empty() {
                cfg.analyze.inputs = a.inputs.clone();
            }
            if let Some(v) = a.threshold {
                cfg.analyze.threshold = v;
            }
            if let Some(v) = a.alpha {
                cfg.analyze.alpha = v;
            }
            if a.strict_seed_check {
                cfg.analyze.strict_seed_check = true;
            }
            if let Some(v) = &a.out {
                cfg.analyze.out_dir = v.clone();
            }
        }
        None => {}
    }
    cfg
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses `argv`, runs the selected subcommand and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprint!("{rendered}");
            if !rendered.contains("Usage:") {
                use clap::CommandFactory;
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return EXIT_USAGE;
        }
    };

    let file_cfg = match &cli.config {
        Some(path) => match RootConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => RootConfig::default(),
    };
    let cfg = merge(&cli, file_cfg);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }

    if cli.dump_config {
        return match cfg.to_toml() {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUNTIME
            }
        };
    }

    let Some(command) = &cli.command else {
        use clap::CommandFactory;
        eprintln!("{}", Cli::command().render_usage());
        eprintln!("a subcommand is required: serve, bench or analyze (see --help)");
        return EXIT_USAGE;
    };

    init_logging();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start async runtime: {e}");
            return EXIT_RUNTIME;
        }
    };
    match command {
        Command::Serve(_) => runtime.block_on(run_serve(&cfg)),
        Command::Bench(_) => runtime.block_on(run_bench(&cfg)),
        Command::Analyze(_) => run_analyze(&cfg),
    }
}

async fn run_serve(cfg: &RootConfig) -> i32 {
    match service::serve(&cfg.service_config(), cfg.serve.port).await {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

async fn run_bench(cfg: &RootConfig) -> i32 {
    let campaign = cfg.campaign_config();
    let summary = match orchestrator::run_campaign(&campaign).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    println!(
        "{}/{}: {} trials completed, {} records written to {}",
        summary.service_label,
        summary.client_label,
        summary.completed_trials,
        summary.records_written,
        summary.records_path.display()
    );
    if !summary.skipped.is_empty() {
        eprintln!("warning: {} of {} trials skipped", summary.skipped.len(), campaign.n_trials);
        for s in &summary.skipped {
            eprintln!("warning:   trial {}: {}", s.trial_index, s.reason);
        }
    }
    EXIT_OK
}

fn run_analyze(cfg: &RootConfig) -> i32 {
    let a = &cfg.analyze;
    if a.inputs.is_empty() {
        eprintln!("error: analyze needs --inputs <glob...> (or [analyze].inputs in the config)");
        return EXIT_USAGE;
    }
    let seed_fitness = if a.strict_seed_check {
        match FitnessModel::new(cfg.sim) {
            Ok(m) => Some(m.calibration.seed_fitness),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
        }
    } else {
        None
    };
    let result = analysis::expand_inputs(&a.inputs).and_then(|paths| {
        analysis::analyze(&paths, &cfg.filter_options(seed_fitness), a.alpha, &a.out_dir)
    });
    match result {
        Ok(report) => {
            for s in &report.summaries {
                println!(
                    "{}: mean {:.3} s, min {:.3} s, max {:.3} s, n = {}, removed {}",
                    s.pair, s.stats.mean_s, s.stats.min_s, s.stats.max_s, s.stats.n, s.n_removed
                );
            }
            for o in &report.orderings {
                println!("{}: {}", o.client, o.statement());
            }
            for c in &report.unordered_clients {
                println!("{c}: no significant ordering at alpha = {}", report.alpha);
            }
            println!("{} populations removed; report written to {}", report.removals.len(), a.out_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
