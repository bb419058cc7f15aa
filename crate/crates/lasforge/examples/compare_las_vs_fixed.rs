//! Paired-seed comparison: the learned attack policy versus the fixed
//! (8, 2, 10) baseline, trained on identical data and seeds.
//!
//!     cargo run --release -p lasforge --example compare_las_vs_fixed

use lasforge::{trainer, Result, TrainConfig};

fn main() -> Result<()> {
    let seeds = [0u64, 1, 2];
    let mut rows = Vec::new();

    for &seed in &seeds {
        let mut learned_cfg = TrainConfig::default();
        learned_cfg.epochs = 35;
        learned_cfg.k = 5;
        learned_cfg.seed = seed;

        let mut fixed_cfg = learned_cfg.clone();
        fixed_cfg.alpha = 0.0;
        fixed_cfg.beta = 0.0;

        // Same seed, same dataset, same batch order: the arms differ only in
        // where the attack strategies come from.
        let dataset = learned_cfg.build_dataset()?;
        let fixed = fixed_cfg.space.strategy_from_values(8, 2, 10)?;

        let learned = trainer::train(&dataset, &learned_cfg)?.metrics;
        let baseline = trainer::train_fixed_strategy(&dataset, &fixed_cfg, fixed)?.metrics;
        rows.push((seed, learned.final_epoch()?.clone(), baseline.final_epoch()?.clone()));
    }

    println!(
        "{:>5} {:>13} {:>13} {:>13} {:>13} {:>8}",
        "seed", "learned_clean", "learned_rob", "fixed_clean", "fixed_rob", "rob_diff"
    );
    let mut mean_diff = 0.0;
    for (seed, learned, fixed) in &rows {
        let diff = learned.robust_acc - fixed.robust_acc;
        mean_diff += diff;
        println!(
            "{:>5} {:>13.4} {:>13.4} {:>13.4} {:>13.4} {:>+8.4}",
            seed, learned.clean_acc, learned.robust_acc, fixed.clean_acc, fixed.robust_acc, diff
        );
    }
    mean_diff /= rows.len() as f64;
    println!("\nmean robust-accuracy difference (learned - fixed): {mean_diff:+.4}");
    println!("positive differences mean the learned policy helped on that seed.");
    Ok(())
}
