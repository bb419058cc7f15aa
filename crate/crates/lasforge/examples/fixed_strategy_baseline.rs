//! The classic baseline: every sample attacked with one constant strategy,
//! no policy in the loop. This is the arm the learned policy is measured
//! against.
//!
//!     cargo run --release -p lasforge --example fixed_strategy_baseline

use lasforge::{trainer, Result, TrainConfig};

fn main() -> Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.epochs = 40;
    cfg.k = 5;
    cfg.seed = 3;
    // The three-term objective only steers the policy; with a constant
    // strategy the lookahead terms are dead weight, so switch them off.
    cfg.alpha = 0.0;
    cfg.beta = 0.0;

    let dataset = cfg.build_dataset()?;
    let fixed = cfg.space.strategy_from_values(8, 2, 10)?;
    println!(
        "baseline: every sample attacked with epsilon={}/255, step={}/255, {} iterations\n",
        fixed.params.epsilon, fixed.params.step, fixed.params.iters
    );

    let out = trainer::train_fixed_strategy_with_progress(&dataset, &cfg, fixed, |rec| {
        if (rec.epoch + 1) % 5 == 0 {
            println!("epoch {:>3}: clean {:.4} robust {:.4} l1 {:.4}", rec.epoch + 1, rec.clean_acc, rec.robust_acc, rec.mean_l1);
        }
    })?;

    let last = out.metrics.final_epoch()?;
    println!("\nfinal: clean {:.4} robust {:.4}", last.clean_acc, last.robust_acc);

    // Every drawn "strategy" is the constant one.
    let hist = &out.metrics.histograms[0];
    let eps_counts = &hist.counts[0];
    let drawn: u64 = eps_counts.iter().sum();
    println!(
        "epoch-0 histogram: {} of {} draws sit on epsilon={} (the rest are zero)",
        eps_counts[fixed.indices[0]], drawn, fixed.params.epsilon
    );
    Ok(())
}
