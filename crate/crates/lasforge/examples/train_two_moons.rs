//! Full training run on two-moons with the learned attack policy, writing
//! the same artifacts the `lasforge train` command produces.
//!
//!     cargo run --release -p lasforge --example train_two_moons

use lasforge::{metrics, trainer, Result, TrainConfig};

fn main() -> Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.epochs = 40;
    cfg.k = 5;
    cfg.seed = 3;
    cfg.out_dir = Some(std::env::temp_dir().join("lasforge_train_two_moons"));

    let dataset = cfg.build_dataset()?;
    println!("training on {} ({} samples, {} test fraction)", cfg.dataset_id(), dataset.len(), cfg.test_fraction);
    println!("policy picks from {} joint strategies per sample\n", cfg.space.size());

    let out = trainer::train_with_progress(&dataset, &cfg, |rec| {
        if (rec.epoch + 1) % 5 == 0 {
            println!(
                "epoch {:>3}: clean {:.4} robust {:.4} l1 {:+.4} l2 {:+.4} l3 {:+.4}",
                rec.epoch + 1,
                rec.clean_acc,
                rec.robust_acc,
                rec.mean_l1,
                rec.mean_l2,
                rec.mean_l3
            );
        }
    })?;

    let dir = cfg.out_dir.as_ref().unwrap();
    metrics::write_metrics_csv(&dir.join("metrics.csv"), &out.metrics.epochs)?;
    metrics::write_histograms_csv(&dir.join("histograms.csv"), &cfg.space, &out.metrics.histograms)?;

    let last = out.metrics.final_epoch()?;
    println!("\nfinal: clean {:.4} robust {:.4} ({:.1}s)", last.clean_acc, last.robust_acc, out.metrics.wall_clock_secs);
    println!("checkpoints and CSVs in {}", dir.display());

    // The policy leans toward stronger budgets as training hardens the net.
    let eps_by_epoch = out.metrics.mean_epsilon_by_epoch();
    println!(
        "mean sampled epsilon: epoch 1 {:.3}, final epoch {:.3}",
        eps_by_epoch.first().unwrap().1,
        eps_by_epoch.last().unwrap().1
    );
    Ok(())
}
