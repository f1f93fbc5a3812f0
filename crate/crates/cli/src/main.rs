use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixsel::harness::{
    diagnose, generate_fixtures, oracle, run_experiment, run_sweep, ExperimentConfig, HarnessError,
    HarnessResult, Overrides,
};

#[derive(Parser, Debug)]
#[command(name = "mixsel", version, about = "Online mixture selection over sample generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment config.
    Run(RunArgs),
    /// Expand the config's sweep axes and run every point.
    Sweep(SweepArgs),
    /// Print the population optimum of a config.
    Oracle(CommonArgs),
    /// Check pull counts and regret of existing traces.
    Diagnose(DiagnoseArgs),
    /// Write embedding fixtures drawn from the config's Gaussian arms.
    GenSynthetic(GenArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rff_pairs: Option<usize>,
    #[arg(long)]
    fidelity_weight: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// mixture_greedy, mixture_ucb, one_arm_greedy, epsilon_greedy, mixture_oracle or one_arm_oracle.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    delta_l: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated values replacing the config's axis.
    #[arg(long, value_delimiter = ',')]
    delta_l: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    rff_pairs: Vec<usize>,
    #[arg(long)]
    fidelity_weight: Option<f64>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// A trace CSV or a directory of them.
    #[arg(long)]
    traces: PathBuf,
    /// Takes the warm start from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    warm_start: usize,
    /// Linear rate of the count floor.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// Overrides the config's instance seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(common: &CommonArgs, extra: Overrides) -> HarnessResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    let o = Overrides {
        seed: common.seed,
        output: common.out.clone(),
        sigma: common.sigma,
        rff_pairs: common.rff_pairs,
        fidelity_weight: common.fidelity_weight,
        ..extra
    };
    o.apply(&mut cfg, &common.config)?;
    Ok(cfg)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn execute(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Run(a) => {
            let cfg = load(
                &a.common,
                Overrides {
                    algorithm: a.algo.clone(),
                    delta_l: a.delta_l,
                    ..Overrides::default()
                },
            )?;
            let base = base_dir(&a.common.config);
            let report = run_experiment(&cfg, &base, &cfg.output, a.jobs)?;
            for r in &report.summary {
                println!(
                    "{}\t{} {:.6} ± {:.6}\tregret area {}",
                    r.algorithm,
                    r.score,
                    r.final_mean,
                    r.final_sd,
                    r.auc_mean.map_or("n/a".into(), |v| format!("{v:.6}"))
                );
            }
            println!("wrote {}", cfg.output.display());
        }
        Command::Sweep(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            Overrides {
                seed: a.seed,
                output: a.out.clone(),
                algorithm: a.algo.clone(),
                fidelity_weight: a.fidelity_weight,
                ..Overrides::default()
            }
            .apply(&mut cfg, &a.config)?;
            if !a.delta_l.is_empty() {
                cfg.sweep.delta_l = a.delta_l.clone();
            }
            if !a.sigma.is_empty() {
                cfg.sweep.sigma = a.sigma.clone();
            }
            if !a.rff_pairs.is_empty() {
                cfg.sweep.rff_pairs = a.rff_pairs.clone();
            }
            let merged = run_sweep(&cfg, &a.config, &base_dir(&a.config), &cfg.output, a.jobs)?;
            for (label, rows) in &merged {
                for r in rows {
                    println!("{label}\t{}\t{} {:.6} ± {:.6}", r.algorithm, r.score, r.final_mean, r.final_sd);
                }
            }
            println!("wrote {}", cfg.output.join("sweep_summary.csv").display());
        }
        Command::Oracle(common) => {
            let cfg = load(&common, Overrides::default())?;
            let pop = oracle(&cfg, &base_dir(&common.config))?;
            println!("alpha* = {}", fmt_vec(pop.optimum.as_slice()));
            println!("F* = {:.6}", pop.value);
            println!("arm values = {}", fmt_vec(&pop.arm_values));
            println!("best arm = {} (F = {:.6})", pop.best_arm, pop.arm_values[pop.best_arm]);
        }
        Command::Diagnose(a) => {
            let warm_start = match &a.config {
                Some(p) => ExperimentConfig::load(p)?.warm_start,
                None => a.warm_start,
            };
            println!("file\tT\tonline_counts\tmin_fraction\tfloor_passed\tworst_margin\thoeffding_radius\tfinal_regret");
            for d in diagnose(&a.traces, warm_start, a.gamma, a.delta)? {
                let counts: Vec<String> = d.online_counts.iter().map(usize::to_string).collect();
                println!(
                    "{}\t{}\t{}\t{:.4}\t{}\t{:.3}\t{:.6}\t{}",
                    d.file.display(),
                    d.horizon,
                    counts.join(" "),
                    d.min_fraction,
                    d.count_floor.passed,
                    d.count_floor.worst_margin,
                    d.hoeffding_radius,
                    d.final_regret.map_or("n/a".into(), |r| format!("{r:.6}"))
                );
            }
        }
        Command::GenSynthetic(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.instance_seed = s;
            }
            for p in generate_fixtures(&cfg, &base_dir(&a.config), &a.out, a.count)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXSEL_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &HarnessError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
