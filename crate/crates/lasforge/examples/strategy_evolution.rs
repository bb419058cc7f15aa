//! Watch the attack policy drift: the distribution over perturbation
//! budgets starts uniform and shifts toward stronger attacks as the
//! classifier hardens.
//!
//!     cargo run --release -p lasforge --example strategy_evolution

use lasforge::{trainer, Result, TrainConfig};

fn main() -> Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.epochs = 48;
    cfg.k = 5;
    cfg.seed = 11;

    let dataset = cfg.build_dataset()?;
    let out = trainer::train(&dataset, &cfg)?;

    // Per-epoch mean of the sampled epsilon options.
    let eps: Vec<f64> = out.metrics.mean_epsilon_by_epoch().into_iter().map(|(_, m)| m).collect();
    println!("mean sampled epsilon per epoch (bars span the option grid {}..{}):\n", 3, 15);
    for (epoch, &m) in eps.iter().enumerate() {
        if epoch % 2 != 0 {
            continue;
        }
        let fill = ((m - 3.0) / 12.0 * 40.0).round().max(0.0) as usize;
        println!("epoch {:>3} {:>6.3} |{}{}|", epoch, m, "#".repeat(fill), " ".repeat(40 - fill.min(40)));
    }

    let quarter = eps.len() / 4;
    let first: f64 = eps[..quarter].iter().sum::<f64>() / quarter as f64;
    let last: f64 = eps[eps.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    println!("\nfirst-quarter mean epsilon {first:.3}, final-quarter mean {last:.3}");

    // Epoch 0 drew from an exactly uniform policy (the head layer starts at
    // zero); show its epsilon counts.
    let h0 = &out.metrics.histograms[0];
    println!("\nepoch-0 epsilon draw counts (should look flat):");
    for (option, count) in cfg.space.epsilons().iter().zip(&h0.counts[0]) {
        println!("  epsilon {:>2}: {}", option, count);
    }
    Ok(())
}
