//! Command-line entry points: `train`, `eval`, `compare`, `diagnose`,
//! `histogram`.
//!
//! Every command is deterministic under `--seed`; all randomness flows from
//! that one seed through labeled streams. Exit codes: 0 success, 2 bad
//! configuration or inputs, 3 I/O failure, 4 numerical divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::{self, AttackParams, AttackStrategy};
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::diagnostics::{self, ConvergenceParams};
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::{self, ModelParams};
use crate::rng::Streams;
use crate::trainer::{self, TrainOutput};

/// Accuracy under a fixed battery of attacks, one row per attack.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    pub checkpoint: String,
    pub seed: u64,
    /// `(attack label, epsilon, step, iters, accuracy)`; zeros denote the
    /// clean row.
    pub rows: Vec<(String, u32, u32, u32, f64)>,
}

#[derive(Parser)]
#[command(
    name = "lasforge",
    about = "Adversarial training with a learned attack policy",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier (learned policy, or a fixed strategy).
    Train(TrainArgs),
    /// Evaluate a checkpoint under clean, single-step, and iterated attacks.
    Eval(EvalArgs),
    /// Train two configurations on paired seeds and tabulate the difference.
    Compare(CompareArgs),
    /// Overlay measured gradient norms with the theoretical ceiling.
    Diagnose(DiagnoseArgs),
    /// Re-emit strategy histograms with a first/final quarter trend summary.
    Histogram(HistogramArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set T=100`; repeatable, applied in
    /// order after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Label column for csv datasets.
    #[arg(long)]
    label_col: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(col) = &self.label_col {
            cfg.apply_overrides(&[format!("label_col={col}")])?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for metrics, histograms, checkpoints, and the
    /// summary; defaults to the config's `out`, then `lasforge_out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the learned policy and attack every sample with this fixed
    /// `epsilon,step,iters` (values must be options of the strategy space).
    #[arg(long, value_name = "E,S,I")]
    fixed_strategy: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Parameter checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory to write `eval.csv` into; prints the table either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Config for arm A.
    #[arg(long)]
    config_a: PathBuf,
    /// Config for arm B.
    #[arg(long)]
    config_b: PathBuf,
    /// Comma-separated seeds; each is run through both arms (paired).
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// Fixed strategy for arm A (`epsilon,step,iters`); learned when absent.
    #[arg(long, value_name = "E,S,I")]
    fixed_a: Option<String>,
    /// Fixed strategy for arm B.
    #[arg(long, value_name = "E,S,I")]
    fixed_b: Option<String>,
    /// Directory to write `compare.csv` into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Metrics CSV written by `train`.
    #[arg(long)]
    metrics: PathBuf,
    /// Assumed constants, `key = value` lines: l_ww, l_wtheta, l_thetaw, mu,
    /// sigma2, delta, initial_gap, steps.
    #[arg(long)]
    params: PathBuf,
    /// Directory to write `diagnose.csv` into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistogramArgs {
    /// Directory holding `histograms.csv` from a training run.
    #[arg(long)]
    metrics_dir: PathBuf,
    /// File to write the long-format CSV to; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code. `args` includes the
/// program name, as in `std::env::args()`.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Histogram(args) => cmd_histogram(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => 4,
                Error::Io(_) | Error::Json(_) => 3,
                _ => 2,
            }
        }
    }
}

fn parse_fixed_strategy(cfg: &TrainConfig, text: &str) -> Result<AttackStrategy> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::invalid(format!("--fixed-strategy expects `epsilon,step,iters`, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut vals = [0u32; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p.parse().map_err(|_| bad())?;
    }
    cfg.space.strategy_from_values(vals[0], vals[1], vals[2])
}

fn train_once(
    dataset: &Dataset,
    cfg: &TrainConfig,
    fixed: Option<AttackStrategy>,
    mut progress: impl FnMut(&metrics::EpochRecord),
) -> Result<TrainOutput> {
    match fixed {
        Some(strategy) => trainer::train_fixed_strategy_with_progress(dataset, cfg, strategy, &mut progress),
        None => trainer::train_with_progress(dataset, cfg, &mut progress),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    let out = args.out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("lasforge_out"));
    cfg.out_dir = Some(out.clone());
    let fixed = args.fixed_strategy.as_deref().map(|t| parse_fixed_strategy(&cfg, t)).transpose()?;

    let dataset = cfg.build_dataset()?;
    let epochs = cfg.epochs;
    let output = train_once(&dataset, &cfg, fixed, |rec| {
        println!(
            "epoch {:>4}/{} clean {:.4} robust {:.4} l1 {:.4}",
            rec.epoch + 1,
            epochs,
            rec.clean_acc,
            rec.robust_acc,
            rec.mean_l1
        );
    })?;

    std::fs::create_dir_all(&out)?;
    metrics::write_metrics_csv(&out.join("metrics.csv"), &output.metrics.epochs)?;
    metrics::write_histograms_csv(&out.join("histograms.csv"), &cfg.space, &output.metrics.histograms)?;

    let last = output.metrics.final_epoch()?;
    let summary = serde_json::json!({
        "mode": if fixed.is_some() { "fixed" } else { "learned" },
        "fixed_strategy": fixed.map(|s| [s.params.epsilon, s.params.step, s.params.iters]),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "k": cfg.k,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "final_clean_acc": last.clean_acc,
        "final_robust_acc": last.robust_acc,
        "wall_clock_secs": output.metrics.wall_clock_secs,
    });
    std::fs::write(out.join("summary.json"), format!("{:#}\n", summary))?;
    println!(
        "done: clean {:.4} robust {:.4} in {:.1}s, artifacts in {}",
        last.clean_acc,
        last.robust_acc,
        output.metrics.wall_clock_secs,
        out.display()
    );
    Ok(())
}

/// Builds the dataset named by `cfg` and returns the held-out split the
/// trainer evaluated on, so reported accuracies are comparable.
fn test_split(cfg: &TrainConfig) -> Result<Dataset> {
    let dataset = cfg.build_dataset()?;
    let (_, test) = dataset.split(cfg.test_fraction, cfg.seed)?;
    Ok(test)
}

/// The evaluation battery: clean, one-step sign attack, and three iterated
/// attacks of increasing depth at the standard budget.
pub fn eval_checkpoint(params: &ModelParams, test: &Dataset, seed: u64) -> Result<Vec<(String, u32, u32, u32, f64)>> {
    let streams = Streams::new(seed);
    let mut rows = Vec::new();
    let clean = nn::accuracy(params, &test.features, &test.labels)?;
    rows.push(("clean".to_string(), 0, 0, 0, clean));

    let fgsm = attack::fgsm_attack(params, &test.features, &test.labels, 8)?;
    rows.push(("fgsm".to_string(), 8, 8, 1, nn::accuracy(params, &fgsm, &test.labels)?));

    for iters in [10, 20, 50] {
        let spec = AttackParams::new(8, 2, iters);
        let adv = attack::pgd_attack(
            params,
            &test.features,
            &test.labels,
            &vec![spec; test.len()],
            true,
            streams.seed("cli_eval", iters as u64, 0),
        )?;
        rows.push((format!("pgd{iters}"), 8, 2, iters, nn::accuracy(params, &adv.x_adv, &test.labels)?));
    }
    Ok(rows)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let params = ModelParams::load(&args.checkpoint)?;
    let test = test_split(&cfg)?;
    let rows = eval_checkpoint(&params, &test, cfg.seed)?;
    let report = EvalReport {
        dataset: cfg.dataset_id(),
        checkpoint: args.checkpoint.display().to_string(),
        seed: cfg.seed,
        rows,
    };

    println!("checkpoint {} on {} (seed {})", report.checkpoint, report.dataset, report.seed);
    println!("{:<8} {:>7} {:>5} {:>6} {:>9}", "attack", "epsilon", "step", "iters", "accuracy");
    for (name, e, s, i, acc) in &report.rows {
        println!("{:<8} {:>7} {:>5} {:>6} {:>9.4}", name, e, s, i, acc);
    }

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let mut text = String::from("attack,epsilon,step,iters,accuracy\n");
        for (name, e, s, i, acc) in &report.rows {
            text.push_str(&format!("{name},{e},{s},{i},{acc}\n"));
        }
        std::fs::write(dir.join("eval.csv"), text)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::invalid(format!("--seeds expects integers, got `{s}`"))))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::invalid("--seeds needs at least one seed"));
    }

    let arm = |path: &Path, fixed: &Option<String>, seed: u64| -> Result<(f64, f64)> {
        let mut cfg = TrainConfig::from_file(path)?;
        cfg.seed = seed;
        cfg.out_dir = None;
        let fixed = fixed.as_deref().map(|t| parse_fixed_strategy(&cfg, t)).transpose()?;
        let dataset = cfg.build_dataset()?;
        let output = train_once(&dataset, &cfg, fixed, |_| {})?;
        let last = output.metrics.final_epoch()?;
        Ok((last.clean_acc, last.robust_acc))
    };

    let mut lines = Vec::new();
    let mut sums = [0.0f64; 5];
    println!(
        "{:>6} {:>8} {:>9} {:>8} {:>9} {:>10}",
        "seed", "clean_a", "robust_a", "clean_b", "robust_b", "robust_a-b"
    );
    for &seed in &seeds {
        let (clean_a, robust_a) = arm(&args.config_a, &args.fixed_a, seed)?;
        let (clean_b, robust_b) = arm(&args.config_b, &args.fixed_b, seed)?;
        let diff = robust_a - robust_b;
        println!(
            "{:>6} {:>8.4} {:>9.4} {:>8.4} {:>9.4} {:>10.4}",
            seed, clean_a, robust_a, clean_b, robust_b, diff
        );
        lines.push(format!("{seed},{clean_a},{robust_a},{clean_b},{robust_b},{diff}"));
        for (acc, v) in sums.iter_mut().zip([clean_a, robust_a, clean_b, robust_b, diff]) {
            *acc += v;
        }
    }
    let n = seeds.len() as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
    println!(
        "{:>6} {:>8.4} {:>9.4} {:>8.4} {:>9.4} {:>10.4}",
        "mean", mean[0], mean[1], mean[2], mean[3], mean[4]
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let mut text = String::from("seed,clean_a,robust_a,clean_b,robust_b,robust_diff\n");
        for line in &lines {
            text.push_str(line);
            text.push('\n');
        }
        text.push_str(&format!("mean,{},{},{},{},{}\n", mean[0], mean[1], mean[2], mean[3], mean[4]));
        std::fs::write(dir.join("compare.csv"), text)?;
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let records = metrics::read_metrics_csv(&args.metrics)?;
    if records.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let params = ConvergenceParams::from_file(&args.params)?;
    let trace: Vec<f64> = records.iter().map(|r| r.grad_norm_sq).collect();
    let avg = diagnostics::running_average(&trace);

    let mut text = String::from("epoch,grad_norm_sq,running_avg,bound\n");
    println!("{:>6} {:>14} {:>14} {:>14}", "epoch", "grad_norm_sq", "running_avg", "bound");
    for (i, rec) in records.iter().enumerate() {
        let bound = diagnostics::convergence_bound(&params.with_steps(i + 1))?;
        println!("{:>6} {:>14.6e} {:>14.6e} {:>14.6e}", rec.epoch, rec.grad_norm_sq, avg[i], bound);
        text.push_str(&format!("{},{},{},{}\n", rec.epoch, rec.grad_norm_sq, avg[i], bound));
    }
    println!(
        "note: the ceiling assumes Lipschitz-smooth gradients and a strongly \
         concave inner problem; neither literally holds for these networks, \
         so read it as an overlay, not a guarantee."
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("diagnose.csv"), text)?;
    }
    Ok(())
}

fn cmd_histogram(args: HistogramArgs) -> Result<()> {
    let path = args.metrics_dir.join("histograms.csv");
    let rows = metrics::read_histograms_csv(&path)?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} holds no histogram rows", path.display())));
    }

    let epochs: Vec<usize> = {
        let mut e: Vec<usize> = rows.iter().map(|r| r.epoch).collect();
        e.dedup();
        e
    };
    // Quarter trend per parameter: mean sampled value over the first vs the
    // final quarter of epochs.
    let quarter = (epochs.len() / 4).max(1);
    for parameter in metrics::PARAMETER_NAMES {
        let by_epoch: Vec<f64> =
            metrics::mean_option_by_epoch(&rows, parameter).into_iter().map(|(_, m)| m).collect();
        let head: f64 = by_epoch[..quarter].iter().sum::<f64>() / quarter as f64;
        let tail: f64 = by_epoch[by_epoch.len() - quarter..].iter().sum::<f64>() / quarter as f64;
        println!(
            "{parameter}: first-quarter mean {head:.4}, final-quarter mean {tail:.4} ({})",
            if tail > head { "rising" } else { "not rising" }
        );
    }

    let mut text = String::from("epoch,parameter,option,count\n");
    for r in &rows {
        text.push_str(&format!("{},{},{},{}\n", r.epoch, r.parameter, r.option, r.count));
    }
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
