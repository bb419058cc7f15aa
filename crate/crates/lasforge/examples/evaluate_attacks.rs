//! The standard robustness report: clean, single-step, and three depths of
//! iterated attack against a freshly trained checkpoint.
//!
//!     cargo run --release -p lasforge --example evaluate_attacks

use lasforge::{cli, trainer, Result, TrainConfig};

fn main() -> Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.epochs = 35;
    cfg.k = 5;
    cfg.seed = 5;

    let dataset = cfg.build_dataset()?;
    println!("training 35 epochs with the learned policy...");
    let out = trainer::train(&dataset, &cfg)?;

    // Evaluate on the same held-out split the trainer scored against.
    let (_, test) = dataset.split(cfg.test_fraction, cfg.seed)?;
    let rows = cli::eval_checkpoint(&out.target, &test, cfg.seed)?;

    println!("\n{:<8} {:>7} {:>5} {:>6} {:>9}", "attack", "epsilon", "step", "iters", "accuracy");
    for (name, e, s, i, acc) in &rows {
        println!("{:<8} {:>7} {:>5} {:>6} {:>9.4}", name, e, s, i, acc);
    }

    let clean = rows[0].4;
    let trained_clean = out.metrics.final_epoch()?.clean_acc;
    assert_eq!(clean, trained_clean, "report and trainer agree on clean accuracy");

    let pgd10 = rows.iter().find(|r| r.0 == "pgd10").unwrap().4;
    let pgd50 = rows.iter().find(|r| r.0 == "pgd50").unwrap().4;
    println!("\ndeeper attacks never help the defender: pgd50 {:.4} <= pgd10 {:.4} (+ noise)", pgd50, pgd10);
    Ok(())
}
