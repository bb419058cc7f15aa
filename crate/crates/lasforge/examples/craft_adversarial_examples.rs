//! Craft single-step and iterated attacks against a quickly-trained net and
//! watch accuracy fall as the budget grows.
//!
//!     cargo run --release -p lasforge --example craft_adversarial_examples

use lasforge::{attack, data, nn, trainer, AttackParams, Result, StrategySpace, TrainConfig};

fn main() -> Result<()> {
    let dataset = data::make_two_moons(400, 0.1, 7)?;

    // A short clean-ish training run gives the attacks something to break.
    let mut cfg = TrainConfig::default();
    cfg.epochs = 30;
    cfg.k = 1;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.seed = 7;
    cfg.space = StrategySpace::new(vec![2], vec![1], vec![3])?;
    let mild = cfg.space.strategy_from_indices([0, 0, 0])?;
    let out = trainer::train_fixed_strategy(&dataset, &cfg, mild)?;
    let w = out.target;

    let (_, test) = dataset.split(cfg.test_fraction, cfg.seed)?;
    let clean = nn::accuracy(&w, &test.features, &test.labels)?;
    println!("clean accuracy: {clean:.4}\n");

    println!("{:>8} {:>10} {:>10} {:>12}", "epsilon", "fgsm_acc", "pgd10_acc", "max_l_inf");
    for epsilon in [2u32, 4, 8, 12, 16] {
        let fgsm = attack::fgsm_attack(&w, &test.features, &test.labels, epsilon)?;
        let fgsm_acc = nn::accuracy(&w, &fgsm, &test.labels)?;

        let spec = AttackParams::new(epsilon, 2, 10);
        let adv = attack::pgd_attack(&w, &test.features, &test.labels, &vec![spec; test.len()], true, 99)?;
        let pgd_acc = nn::accuracy(&w, &adv.x_adv, &test.labels)?;

        // Perturbations always stay inside the promised ball.
        let max_dev = adv
            .x_adv
            .data()
            .iter()
            .zip(test.features.data())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev <= epsilon as f64 / 255.0 + 1e-12);
        println!("{:>8} {:>10.4} {:>10.4} {:>12.6}", epsilon, fgsm_acc, pgd_acc, max_dev);
    }

    println!("\niterated attacks at a fixed budget only get stronger:");
    for iters in [1u32, 3, 10, 40] {
        let spec = AttackParams::new(8, 2, iters);
        let adv = attack::pgd_attack(&w, &test.features, &test.labels, &vec![spec; test.len()], true, 99)?;
        println!("  pgd-{iters:<3} accuracy {:.4}", nn::accuracy(&w, &adv.x_adv, &test.labels)?);
    }
    Ok(())
}
