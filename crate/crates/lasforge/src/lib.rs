//! Adversarial training where the attack itself is learned.
//!
//! A target classifier is trained on adversarial examples, while a second
//! network (the strategy network) learns, per input, a categorical
//! distribution over attack parameters: perturbation budget, step size and
//! iteration count of a projected-gradient attack. The strategy network is
//! trained by a score-function (likelihood-ratio) gradient of a three-term
//! objective that rewards strategies which (a) hurt the current classifier,
//! (b) leave the classifier more robust after one hypothetical update, and
//! (c) preserve clean accuracy after that update. Both networks are updated
//! in alternation on each minibatch.
//!
//! Everything runs at desk scale on the CPU in `f64`: a small reverse-mode
//! autodiff tape, two-moons / Gaussian-blob / CSV datasets, plain MLPs, and
//! deterministic seeded RNG streams, so every number a run produces is
//! reproducible bit for bit.
//!
//! The primary interface is the `examples/` directory; each file is a
//! runnable tour of one capability (`cargo run -p lasforge --example <name>`):
//!
//! * `autodiff_basics` - build a tape, take gradients, check them against
//!   finite differences.
//! * `craft_adversarial_examples` - FGSM and PGD attacks on a trained net.
//! * `train_two_moons` - full training run with a learned attack policy.
//! * `fixed_strategy_baseline` - the classic fixed-attack baseline.
//! * `compare_las_vs_fixed` - paired-seed comparison of the two regimes.
//! * `strategy_evolution` - how the sampled attack budgets drift over
//!   training.
//! * `evaluate_attacks` - clean / FGSM / PGD-k accuracy table for a
//!   checkpoint.
//! * `convergence_bound` - learning-rate and convergence-bound formulas
//!   overlaid on a recorded gradient-norm trace.
//!
//! The same capabilities are reachable from the thin `lasforge` binary
//! (`train`, `eval`, `compare`, `diagnose`, `histogram`).

pub mod attack;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod strategy;
pub mod trainer;


pub use attack::{AdversarialBatch, AttackParams, AttackStrategy, StrategySpace};
pub use cli::{run_cli, EvalReport};
pub use autodiff::{OpKind, Tape, Tensor, TensorId};
pub use config::{DatasetConfig, TrainConfig};
pub use data::{BatchIterator, Dataset};
pub use diagnostics::{
    approx_grad_gap, convergence_bound, estimate_lipschitz, grad_norm_trace, lipschitz_l0,
    running_average, theoretical_lr, ConvergenceParams,
};
pub use error::{Error, Result};
pub use metrics::{EpochHistogram, EpochRecord, RunMetrics, UpdateEvent};
pub use nn::{MlpSpec, ModelParams, StrategyHeads};
pub use strategy::{SampledStrategy, StrategyDistribution};
pub use trainer::{
    evaluate_objective, loss_l1, loss_l1_with_grad, loss_l2, loss_l3, one_step_update, train,
    train_fixed_strategy, train_fixed_strategy_with_progress, train_with_progress,
    ObjectiveBreakdown, ObjectiveSeeds, TrainOutput,
};




