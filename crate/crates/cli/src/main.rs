use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flipsim::attack::{AttackMode, SelectionRule};
use flipsim::data::load_dataset;
use flipsim::runner::{
    self, cached_target, emit_results, oracle_check, OracleCheckConfig, SweepConfig, SweepOptions,
};

#[derive(Parser)]
#[command(
    name = "flipsim",
    version,
    about = "Label-flipping attack simulator for logistic regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single seeded training run.
    Train(RunArgs),
    /// Run a (mode, k, b) grid over all seeds.
    Sweep(RunArgs),
    /// Compare greedy flip selection against exhaustive search.
    OracleCheck(OracleArgs),
    /// Train and save the target model used by targeted attacks.
    MakeTarget(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Untargeted,
    Targeted,
}

impl From<ModeArg> for AttackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Untargeted => AttackMode::Untargeted,
            ModeArg::Targeted => AttackMode::Targeted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Benefit,
    PaperLiteral,
}

impl From<RuleArg> for SelectionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Benefit => SelectionRule::Benefit,
            RuleArg::PaperLiteral => SelectionRule::PaperLiteral,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config with SweepConfig fields (or a previous manifest.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seeds (comma separated); `train` uses the first.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    b: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    mode: Vec<ModeArg>,
    #[arg(long)]
    selection_rule: Option<RuleArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    avg_window: Option<usize>,
    #[arg(long)]
    std_window: Option<usize>,
    /// Directory holding the dataset under its canonical file names.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    fixed_attacker_subset: bool,
    /// Where target models are cached (default: <out>/target_cache).
    #[arg(long)]
    target_cache: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                SweepConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => SweepConfig::default(),
        };
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if !self.k.is_empty() {
            cfg.k_values = self.k.clone();
        }
        if !self.b.is_empty() {
            cfg.b_values = self.b.clone();
        }
        if !self.mode.is_empty() {
            cfg.modes = self.mode.iter().map(|&m| m.into()).collect();
        }
        if let Some(r) = self.selection_rule {
            cfg.selection_rule = r.into();
        }
        if let Some(e) = self.epochs {
            cfg.sgd.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.sgd.learning_rate = lr;
        }
        if let Some(bs) = self.batch_size {
            cfg.sgd.batch_size = bs;
        }
        if let Some(w) = self.avg_window {
            cfg.avg_window = w;
        }
        if let Some(w) = self.std_window {
            cfg.std_window = w;
        }
        if let Some(dir) = &self.data_dir {
            cfg.dataset.paths.dir = Some(dir.clone());
        }
        if self.fixed_attacker_subset {
            cfg.fixed_attacker_subset = true;
        }
        cfg.avg_window = cfg.avg_window.min(cfg.sgd.epochs);
        cfg.std_window = cfg.std_window.min(cfg.sgd.epochs);
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> SweepOptions {
        SweepOptions {
            jobs: self.jobs,
            target_cache: Some(
                self.target_cache
                    .clone()
                    .unwrap_or_else(|| self.out.join("target_cache")),
            ),
        }
    }
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_controlled: usize,
    #[arg(long, default_value_t = 6)]
    max_dim: usize,
    /// Class counts to draw from (2 = binary model).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    classes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1")]
    budgets: Vec<f64>,
}

fn sweep(args: &RunArgs, single: bool) -> Result<()> {
    let mut cfg = args.config()?;
    if single {
        cfg.seeds.truncate(1);
        cfg.k_values.truncate(1);
        cfg.b_values.truncate(1);
        cfg.modes.truncate(1);
    }
    let output = runner::run_sweep(&cfg, &args.options())?;
    let files = emit_results(&output.rows, &output.cells, &cfg, &args.out)?;
    println!("mode        k       b       k*b     mean_acc  std       seeds");
    for row in &output.rows {
        println!(
            "{:<11} {:<7} {:<7} {:<7.4} {:<9.4} {:<9.4} {}",
            row.mode.as_str(),
            row.k,
            row.b,
            row.global_budget,
            row.mean_acc,
            row.std,
            row.n_seeds
        );
    }
    println!("wrote {} files to {}", files.len(), args.out.display());
    Ok(())
}

fn make_target(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let (train, _) = load_dataset(&cfg.dataset)?;
    let opts = args.options();
    let params = cached_target(
        &train,
        &cfg.dataset,
        &cfg.sgd,
        cfg.seeds[0],
        opts.target_cache.as_deref(),
    )?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("target.json");
    std::fs::write(&path, serde_json::to_string(&params)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn check_oracle(args: &OracleArgs) -> Result<()> {
    let cfg = OracleCheckConfig {
        instances: args.instances,
        seed: args.seed,
        max_controlled: args.max_controlled,
        max_dim: args.max_dim,
        classes: args.classes.clone(),
        budgets: args.budgets.clone(),
        ..Default::default()
    };
    let report = oracle_check(&cfg)?;
    println!(
        "checked {} (instance, budget) pairs: {} mismatches, max |greedy - exhaustive| = {:.3e}",
        report.checks, report.mismatches, report.max_gap
    );
    if report.mismatches > 0 {
        bail!(
            "greedy selection missed the exhaustive optimum {} times",
            report.mismatches
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => sweep(args, true),
        Command::Sweep(args) => sweep(args, false),
        Command::OracleCheck(args) => check_oracle(args),
        Command::MakeTarget(args) => make_target(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
