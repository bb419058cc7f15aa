//! The convergence formulas as numbers: smoothness composition, prescribed
//! step size, and the gradient-norm ceiling, overlaid on a measured trace.
//!
//!     cargo run --release -p lasforge --example convergence_bound

use lasforge::{diagnostics, trainer, AttackParams, ConvergenceParams, Result, StrategySpace, TrainConfig};

fn main() -> Result<()> {
    let params = ConvergenceParams {
        l_ww: 1.0,
        l_wtheta: 2.0,
        l_thetaw: 3.0,
        mu: 6.0,
        sigma2: 1.0,
        delta: 0.05,
        initial_gap: 2.0,
        steps: 100,
    };

    let l0 = diagnostics::lipschitz_l0(&params)?;
    println!("smoothness of the composed objective: L0 = {l0}");
    println!("prescribed step size at T=100:        {}", diagnostics::theoretical_lr(&params)?);
    println!(
        "inexact-inner-solution gradient gap:   {}",
        diagnostics::approx_grad_gap(params.delta, params.mu, params.l_wtheta)?
    );

    println!("\nceiling on the average squared gradient norm by horizon:");
    for t in [1usize, 10, 100, 1000, 10000] {
        println!("  T = {:>6}: {:.6}", t, diagnostics::convergence_bound(&params.with_steps(t))?);
    }
    println!("the delta term never decays: it is the price of approximate inner solutions.");

    // Overlay on a real measured trace: a convex run whose gradients
    // actually vanish.
    let mut cfg = TrainConfig::default();
    cfg.epochs = 60;
    cfg.batch_size = 64;
    cfg.k = 1;
    cfg.eta1 = 0.5;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.target_hidden = vec![];
    cfg.space = StrategySpace::new(vec![0], vec![1], vec![1])?;
    cfg.eval_attack = AttackParams::new(0, 1, 1);
    let clean = cfg.space.strategy_from_indices([0, 0, 0])?;
    let dataset = cfg.build_dataset()?;
    let out = trainer::train_fixed_strategy(&dataset, &cfg, clean)?;

    let (trace, avg) = diagnostics::grad_norm_trace(&out.metrics)?;
    println!("\nmeasured on a convex run (linear softmax model, no attacks):");
    println!("{:>6} {:>14} {:>14} {:>14}", "epoch", "grad_norm_sq", "running_avg", "ceiling");
    for epoch in [0usize, 4, 14, 29, 59] {
        let ceiling = diagnostics::convergence_bound(&params.with_steps(epoch + 1))?;
        println!("{:>6} {:>14.6e} {:>14.6e} {:>14.6e}", epoch, trace[epoch], avg[epoch], ceiling);
    }
    println!(
        "\ncaveat: the constants above are assumed, not measured; ReLU nets do \
         not satisfy the assumptions, so the ceiling is an overlay only."
    );
    Ok(())
}
