mod prep;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use label_remedy::eval::{
    run_suite, run_task, summary_table, write_reports, SuiteConfig, SyntheticSpec, TaskData,
    DATA_DIR_ENV,
};
use label_remedy::{AdapterKind, ExperimentConfig, Method, TaskSpec};

#[derive(Parser)]
#[command(
    name = "label-remedy",
    version,
    about = "Pseudo-label remedy for domain adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one source -> target task.
    Run(RunArgs),
    /// Run every task of a TOML suite file.
    Suite(SuiteArgs),
    /// Convert, subsample, resize or split feature files and write manifests.
    Prep(prep::PrepArgs),
    /// Check the core algorithms against brute-force oracles.
    Selftest(selftest::SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Source dataset name (resolved as `<data-dir>/<name>.manifest`).
    #[arg(long, requires = "target", conflicts_with = "synthetic")]
    source: Option<String>,
    #[arg(long, requires = "source")]
    target: Option<String>,
    /// Synthetic shift task, e.g. `classes=5,per_class=100,dim=20,shift=8,noise=0.9`.
    #[arg(long)]
    synthetic: Option<String>,
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    adapter: Option<AdapterKind>,
    #[arg(long, overrides_with = "no_tsrp")]
    tsrp: bool,
    #[arg(long = "no-tsrp")]
    no_tsrp: bool,
    #[arg(long)]
    rho: Option<f64>,
    /// Inner remedy iterations.
    #[arg(long = "it")]
    inner_iters: Option<usize>,
    /// Outer iterations.
    #[arg(long = "t")]
    outer_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subspace dimension k.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Stop once pseudo labels repeat between outer iterations.
    #[arg(long)]
    early_stop: bool,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Also write predicted target labels.
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    #[arg(long)]
    labels: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => run(args).map(|_| ExitCode::SUCCESS),
        Command::Suite(args) => suite(args).map(|_| ExitCode::SUCCESS),
        Command::Prep(args) => prep::prep(args).map(|_| ExitCode::SUCCESS),
        Command::Selftest(args) => selftest::selftest(args),
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_synthetic(spec: &str, seed: u64) -> Result<SyntheticSpec> {
    let mut s = SyntheticSpec {
        classes: 5,
        per_class: 100,
        dim: 20,
        shift: 1.0,
        noise: 0.1,
        seed,
    };
    for field in spec.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        let (k, v) = field
            .split_once('=')
            .with_context(|| format!("expected key=value in `{field}`"))?;
        let bad = || format!("bad value for `{k}`: `{v}`");
        match k.trim() {
            "classes" => s.classes = v.parse().with_context(bad)?,
            "per_class" => s.per_class = v.parse().with_context(bad)?,
            "dim" => s.dim = v.parse().with_context(bad)?,
            "shift" => s.shift = v.parse().with_context(bad)?,
            "noise" => s.noise = v.parse().with_context(bad)?,
            "seed" => s.seed = v.parse().with_context(bad)?,
            other => bail!("unknown synthetic key `{other}`"),
        }
    }
    Ok(s)
}

fn run_spec(args: &RunArgs) -> Result<TaskSpec> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.adapter {
        cfg.adapter = v;
    }
    if args.tsrp {
        cfg.tsrp = true;
    }
    if args.no_tsrp {
        cfg.tsrp = false;
    }
    if let Some(v) = args.rho {
        cfg.rho = v;
    }
    if let Some(v) = args.inner_iters {
        cfg.inner_iters = v;
    }
    if let Some(v) = args.outer_iters {
        cfg.outer_iters = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.dim {
        cfg.subspace_dim = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.mu {
        cfg.mu = v;
    }
    if args.early_stop {
        cfg.early_stop = true;
    }

    let (name, data) = match (&args.source, &args.target, &args.synthetic) {
        (Some(s), Some(t), None) => (
            format!("{s}->{t}"),
            TaskData::Benchmark {
                source: s.clone(),
                target: t.clone(),
            },
        ),
        (None, None, Some(spec)) => {
            let s = parse_synthetic(spec, cfg.seed)?;
            (format!("synthetic-{}", s.seed), TaskData::Synthetic(s))
        }
        _ => bail!("give --source and --target, or --synthetic"),
    };
    let method = Method {
        adapter: cfg.adapter,
        tsrp: cfg.tsrp,
    };
    Ok(TaskSpec {
        name,
        data,
        methods: vec![method],
        config: cfg,
    })
}

fn run(args: RunArgs) -> Result<()> {
    let spec = run_spec(&args)?;
    let results = run_task(&spec, args.data_dir.as_deref())?;
    let written = write_reports(&args.out, &results, args.labels)?;
    print!("{}", summary_table(&results));
    log::info!(
        "wrote {} report files to {}",
        written.len(),
        args.out.display()
    );
    Ok(())
}

fn suite(args: SuiteArgs) -> Result<()> {
    let config = SuiteConfig::read(&args.config)?;
    let specs = config.task_specs()?;
    if specs.is_empty() {
        bail!("{} defines no tasks", args.config.display());
    }
    let data_dir = args.data_dir.or(config.data_dir.clone());
    let workers = match args.workers {
        Some(0) => bail!("--workers must be at least 1"),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let results = run_suite(&specs, data_dir.as_deref(), workers)?;
    write_reports(&args.out, &results, args.labels)?;
    print!("{}", summary_table(&results));
    Ok(())
}
