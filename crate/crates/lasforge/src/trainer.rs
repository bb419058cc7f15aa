//! The alternating training loop.
//!
//! Each minibatch: the policy samples one attack strategy per input, the
//! attack engine crafts adversarial examples under them, and the classifier's
//! losses score the strategies. The strategy network ascends the score
//! gradient every batch; the classifier descends its adversarial loss once
//! every `k` batches, reusing the examples already generated.
//!
//! A strategy's score combines three terms, all computed per sample:
//!
//! * `l1` - cross-entropy of the live classifier on the adversarial input
//!   (how much the attack hurts right now);
//! * `l2` - negated cross-entropy, under the fixed evaluation attack, of a
//!   one-step-lookahead classifier `w_hat = w - lambda * grad L1` (how robust
//!   the classifier would be after reacting to this attack);
//! * `l3` - negated clean cross-entropy of that lookahead classifier (what
//!   the reaction would cost in clean accuracy).
//!
//! `l0 = l1 + alpha * l2 + beta * l3`. The lookahead is hypothetical: `w_hat`
//! is a detached copy, and nothing computed from it ever flows back into the
//! live weights.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::attack::{self, AttackStrategy};
use crate::config::TrainConfig;
use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{EpochHistogram, EpochRecord, RunMetrics, UpdateEvent};
use crate::nn::{self, axpy_update, MlpSpec, ModelParams};
use crate::rng::Streams;
use crate::strategy::{self, SampledStrategy};
use crate::Tensor;

/// Per-sample loss terms for one batch, plus their means. The identity
/// `l0[i] == l1[i] + alpha * l2[i] + beta * l3[i]` holds exactly: `l0` is
/// constructed from that expression. `l1` is non-negative; `l2` and `l3`
/// are non-positive (negated cross-entropies).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBreakdown {
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub l3: Vec<f64>,
    pub l0: Vec<f64>,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_l3: f64,
    pub mean_l0: f64,
}

impl ObjectiveBreakdown {
    fn from_terms(l1: Vec<f64>, l2: Vec<f64>, l3: Vec<f64>, alpha: f64, beta: f64) -> Self {
        let n = l1.len() as f64;
        let l0: Vec<f64> = l1
            .iter()
            .zip(&l2)
            .zip(&l3)
            .map(|((&a, &b), &c)| a + alpha * b + beta * c)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        ObjectiveBreakdown {
            mean_l1: mean(&l1),
            mean_l2: mean(&l2),
            mean_l3: mean(&l3),
            mean_l0: mean(&l0),
            l1,
            l2,
            l3,
            l0,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.l0.iter().all(|v| v.is_finite())
    }
}

/// Mean cross-entropy of the classifier on a (possibly attacked) batch.
pub fn loss_l1(w: &ModelParams, x_adv: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(nn::cross_entropy_values(&nn::forward_values(w, x_adv)?, labels)?.0)
}

/// Mean cross-entropy with its per-sample values and the gradient of the
/// mean with respect to `w`.
pub fn loss_l1_with_grad(
    w: &ModelParams,
    x_adv: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<f64>, ModelParams)> {
    let mut tape = crate::Tape::new();
    let staged = nn::stage_params(&mut tape, w, true);
    let x_id = tape.constant(x_adv.clone());
    let logits = nn::forward_staged(&mut tape, &staged, x_id)?;
    let (mean, per_sample) = nn::cross_entropy(&mut tape, logits, labels)?;
    tape.backward(mean)?;
    let grad = staged.grads(&tape);
    Ok((tape.value(mean).item()?, tape.value(per_sample).data().to_vec(), grad))
}

/// The hypothetical next classifier: `w - lambda * grad_w L1(x_adv)`.
///
/// Returns a fresh parameter set; `w` itself is never modified, and with
/// `lambda == 0` the copy is bit-identical.
pub fn one_step_update(w: &ModelParams, x_adv: &Tensor, labels: &[usize], lambda: f64) -> Result<ModelParams> {
    let (_, _, grad) = loss_l1_with_grad(w, x_adv, labels)?;
    axpy_update(w, &grad, -lambda)
}

/// Lookahead robustness term: negated per-sample cross-entropy of `w_hat`
/// on inputs attacked (against `w_hat`) with `eval_attack`. Larger is
/// better: a more robust lookahead classifier loses less.
pub fn loss_l2(
    w_hat: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    eval_attack: attack::AttackParams,
    random_start: bool,
    stream_seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let [n, _] = x.dims2()?;
    let attacked = attack::pgd_attack(w_hat, x, labels, &vec![eval_attack; n], random_start, stream_seed)?;
    let (mean, per_sample) = nn::cross_entropy_values(&nn::forward_values(w_hat, &attacked.x_adv)?, labels)?;
    Ok((-mean, per_sample.into_iter().map(|v| -v).collect()))
}

/// Lookahead clean term: negated per-sample clean cross-entropy of `w_hat`.
pub fn loss_l3(w_hat: &ModelParams, x: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (mean, per_sample) = nn::cross_entropy_values(&nn::forward_values(w_hat, x)?, labels)?;
    Ok((-mean, per_sample.into_iter().map(|v| -v).collect()))
}

/// Stream seeds for one batch's objective evaluation, normally derived from
/// the run's root seed as `("strategy_sample" | "pgd" | "lookahead_attack",
/// epoch, batch)`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSeeds {
    pub sample: u64,
    pub attack: u64,
    pub lookahead: u64,
}

impl ObjectiveSeeds {
    fn for_batch(streams: &Streams, epoch: u64, batch: u64) -> Self {
        ObjectiveSeeds {
            sample: streams.seed("strategy_sample", epoch, batch),
            attack: streams.seed("pgd", epoch, batch),
            lookahead: streams.seed("lookahead_attack", epoch, batch),
        }
    }
}

/// Everything one batch evaluation produces.
struct BatchEval {
    breakdown: ObjectiveBreakdown,
    /// Gradient of mean `l1` with respect to the live weights, reused for
    /// both the lookahead and the actual weight update.
    grad_w: ModelParams,
}

fn objective_for_strategies(
    w: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    strategies: &[AttackStrategy],
    cfg: &TrainConfig,
    seeds: ObjectiveSeeds,
) -> Result<BatchEval> {
    let [n, _] = x.dims2()?;
    let params: Vec<attack::AttackParams> = strategies.iter().map(|s| s.params).collect();
    let adv = attack::pgd_attack(w, x, labels, &params, cfg.random_start, seeds.attack)?;
    let (_, l1, grad_w) = loss_l1_with_grad(w, &adv.x_adv, labels)?;

    let (l2, l3) = if cfg.alpha == 0.0 && cfg.beta == 0.0 {
        (vec![0.0; n], vec![0.0; n])
    } else if cfg.per_sample_lookahead {
        // Literal per-sample reading: each sample gets its own lookahead
        // classifier built from that sample's gradient alone.
        let mut l2 = vec![0.0; n];
        let mut l3 = vec![0.0; n];
        for i in 0..n {
            let xi_adv = adv.x_adv.rows(i, 1)?;
            let xi = x.rows(i, 1)?;
            let yi = &labels[i..=i];
            let w_hat = one_step_update(w, &xi_adv, yi, cfg.lambda())?;
            if cfg.alpha != 0.0 {
                let seed_i = seeds.lookahead ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                l2[i] = loss_l2(&w_hat, &xi, yi, cfg.eval_attack, cfg.random_start, seed_i)?.1[0];
            }
            if cfg.beta != 0.0 {
                l3[i] = loss_l3(&w_hat, &xi, yi)?.1[0];
            }
        }
        (l2, l3)
    } else {
        // One lookahead per batch, built from the mean-l1 gradient.
        let w_hat = axpy_update(w, &grad_w, -cfg.lambda())?;
        let l2 = if cfg.alpha != 0.0 {
            loss_l2(&w_hat, x, labels, cfg.eval_attack, cfg.random_start, seeds.lookahead)?.1
        } else {
            vec![0.0; n]
        };
        let l3 = if cfg.beta != 0.0 { loss_l3(&w_hat, x, labels)?.1 } else { vec![0.0; n] };
        (l2, l3)
    };

    Ok(BatchEval { breakdown: ObjectiveBreakdown::from_terms(l1, l2, l3, cfg.alpha, cfg.beta), grad_w })
}

/// Samples strategies from the policy, attacks under them, and scores them.
///
/// Returns the per-sample loss breakdown and the sampled strategies. The
/// live weights are read-only throughout: every lookahead works on a
/// detached copy.
pub fn evaluate_objective(
    w: &ModelParams,
    theta: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
    seeds: ObjectiveSeeds,
) -> Result<(ObjectiveBreakdown, Vec<SampledStrategy>)> {
    let dist = strategy::strategy_distribution(theta, x, &cfg.space)?;
    let sampled = strategy::sample_strategies(&dist, seeds.sample)?;
    let strategies: Vec<AttackStrategy> = sampled.iter().map(|s| s.strategy).collect();
    let eval = objective_for_strategies(w, x, labels, &strategies, cfg, seeds)?;
    Ok((eval.breakdown, sampled))
}

/// Final parameters and run records of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub target: ModelParams,
    /// In fixed-strategy runs this is the untouched initial policy.
    pub strategy_net: ModelParams,
    pub metrics: RunMetrics,
}

enum Mode {
    Learned,
    Fixed(AttackStrategy),
}

/// Adversarial training with the learned per-sample attack policy.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    run(dataset, cfg, Mode::Learned, |_| {})
}

/// [`train`] with a per-epoch callback (progress printing and the like).
pub fn train_with_progress(
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    run(dataset, cfg, Mode::Learned, on_epoch)
}

/// The classic baseline: the same loop with every sample attacked under one
/// constant strategy. The policy network is initialized (so outputs align
/// with [`train`]) but never consulted or updated.
pub fn train_fixed_strategy(dataset: &Dataset, cfg: &TrainConfig, strategy: AttackStrategy) -> Result<TrainOutput> {
    run(dataset, cfg, Mode::Fixed(strategy), |_| {})
}

/// [`train_fixed_strategy`] with a per-epoch callback.
pub fn train_fixed_strategy_with_progress(
    dataset: &Dataset,
    cfg: &TrainConfig,
    strategy: AttackStrategy,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    run(dataset, cfg, Mode::Fixed(strategy), on_epoch)
}

fn save_pair(dir: &Path, tag: &str, w: &ModelParams, theta: &ModelParams) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target_path = dir.join(format!("target_{tag}.json"));
    w.save(&target_path)?;
    theta.save(&dir.join(format!("strategy_{tag}.json")))?;
    Ok(target_path)
}

/// Writes the last good snapshot (if an output directory is set) and reports
/// the divergence.
fn abort_diverged(
    cfg: &TrainConfig,
    epoch: usize,
    batch: usize,
    snapshot: &(ModelParams, ModelParams),
) -> Result<TrainOutput> {
    let checkpoint = match &cfg.out_dir {
        Some(dir) => Some(save_pair(dir, "abort", &snapshot.0, &snapshot.1)?),
        None => None,
    };
    Err(Error::Diverged { epoch, batch, checkpoint })
}

fn run(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mode: Mode,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    dataset.validate()?;
    let started = Instant::now();
    let streams = Streams::new(cfg.seed);
    let (train_set, test_set) = dataset.split(cfg.test_fraction, cfg.seed)?;

    let target_spec = MlpSpec::new(dataset.dim(), cfg.target_hidden.clone(), dataset.classes)?;
    let strategy_spec = MlpSpec::new(dataset.dim(), cfg.strategy_hidden.clone(), cfg.space.heads().total())?;
    let mut w = target_spec.init_params(&mut streams.rng("target_init", 0, 0), false);
    // Zeroed final layer: the initial policy is exactly uniform.
    let mut theta = strategy_spec.init_params(&mut streams.rng("strategy_init", 0, 0), true);

    let mut batches = BatchIterator::new(&train_set, cfg.batch_size, cfg.seed)?;
    let mut velocity = w.zeros_like();
    let mut global_batch = 0usize;

    let mut epoch_records: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut histograms: Vec<EpochHistogram> = Vec::with_capacity(cfg.epochs);
    let mut updates: Vec<UpdateEvent> = Vec::new();
    // Last epoch-end state, written out if a later batch diverges.
    let mut snapshot = (w.clone(), theta.clone());

    for epoch in 0..cfg.epochs {
        let mut hist = EpochHistogram::zeros(epoch, &cfg.space);
        let (mut sum_l1, mut sum_l2, mut sum_l3, mut sum_grad_sq) = (0.0, 0.0, 0.0, 0.0);
        let epoch_batches = batches.next_epoch();
        let batch_count = epoch_batches.len();

        for (bidx, batch) in epoch_batches.into_iter().enumerate() {
            let seeds = ObjectiveSeeds::for_batch(&streams, epoch as u64, bidx as u64);
            let strategies: Vec<AttackStrategy> = match &mode {
                Mode::Learned => {
                    let dist = strategy::strategy_distribution(&theta, &batch.features, &cfg.space)?;
                    let sampled = strategy::sample_strategies(&dist, seeds.sample)?;
                    sampled.into_iter().map(|s| s.strategy).collect()
                }
                Mode::Fixed(s) => vec![*s; batch.labels.len()],
            };

            // Exploding weights usually surface as a non-finite gradient
            // inside the attack before the weights themselves go non-finite;
            // both count as divergence.
            let eval = match objective_for_strategies(&w, &batch.features, &batch.labels, &strategies, cfg, seeds)
            {
                Ok(eval) => eval,
                Err(Error::NonFiniteGradient { .. }) => return abort_diverged(cfg, epoch, bidx, &snapshot),
                Err(e) => return Err(e),
            };

            let updated_strategy = match mode {
                Mode::Learned => {
                    let grad = match strategy::reinforce_gradient(
                        &theta,
                        &batch.features,
                        &cfg.space,
                        &strategies,
                        &eval.breakdown.l0,
                        cfg.baseline,
                    ) {
                        Ok(grad) => grad,
                        Err(Error::NonFiniteGradient { .. }) => {
                            return abort_diverged(cfg, epoch, bidx, &snapshot)
                        }
                        Err(e) => return Err(e),
                    };
                    // Ascent: the policy seeks strategies the classifier
                    // handles worst.
                    theta = axpy_update(&theta, &grad, cfg.eta2)?;
                    true
                }
                Mode::Fixed(_) => false,
            };

            for s in &strategies {
                hist.record(s.indices);
            }

            global_batch += 1;
            let updated_target = global_batch % cfg.k == 0;
            if updated_target {
                let mut grad = eval.grad_w.clone();
                if cfg.weight_decay > 0.0 {
                    grad.axpy(cfg.weight_decay, &w)?;
                }
                let direction = if cfg.momentum > 0.0 {
                    velocity.scale(cfg.momentum);
                    velocity.axpy(1.0, &grad)?;
                    velocity.clone()
                } else {
                    grad
                };
                w = axpy_update(&w, &direction, -cfg.eta1)?;
            }
            updates.push(UpdateEvent { epoch, batch: bidx, updated_target, updated_strategy });

            sum_l1 += eval.breakdown.mean_l1;
            sum_l2 += eval.breakdown.mean_l2;
            sum_l3 += eval.breakdown.mean_l3;
            sum_grad_sq += eval.grad_w.sq_norm();

            if !(w.all_finite() && theta.all_finite() && eval.breakdown.all_finite()) {
                return abort_diverged(cfg, epoch, bidx, &snapshot);
            }
        }

        let clean_acc = nn::accuracy(&w, &test_set.features, &test_set.labels)?;
        let robust = attack::pgd_attack(
            &w,
            &test_set.features,
            &test_set.labels,
            &vec![cfg.eval_attack; test_set.len()],
            cfg.random_start,
            streams.seed("eval_attack", epoch as u64, 0),
        )?;
        let robust_acc = nn::accuracy(&w, &robust.x_adv, &test_set.labels)?;

        let nb = batch_count as f64;
        let record = EpochRecord {
            epoch,
            clean_acc,
            robust_acc,
            mean_l1: sum_l1 / nb,
            mean_l2: sum_l2 / nb,
            mean_l3: sum_l3 / nb,
            grad_norm_sq: sum_grad_sq / nb,
        };
        on_epoch(&record);
        epoch_records.push(record);
        histograms.push(hist);
        snapshot = (w.clone(), theta.clone());

        if let Some(dir) = &cfg.out_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                save_pair(dir, &format!("epoch_{:04}", epoch), &w, &theta)?;
            }
        }
    }

    if let Some(dir) = &cfg.out_dir {
        save_pair(dir, "final", &w, &theta)?;
    }

    Ok(TrainOutput {
        target: w,
        strategy_net: theta,
        metrics: RunMetrics {
            space: cfg.space.clone(),
            epochs: epoch_records,
            histograms,
            updates,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{AttackParams, StrategySpace};
    use crate::data::make_gaussian_blobs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.k = 3;
        cfg.target_hidden = vec![8];
        cfg.strategy_hidden = vec![6];
        cfg.space = StrategySpace::new(vec![4, 8], vec![1, 2], vec![3, 5]).unwrap();
        cfg.eval_attack = AttackParams::new(8, 2, 4);
        cfg
    }

    fn blob_data(seed: u64) -> Dataset {
        make_gaussian_blobs(48, 3, 2, 6.0, seed).unwrap()
    }

    fn uniform_logit_net(d: usize, c: usize) -> ModelParams {
        ModelParams::new(vec![
            ("w0".into(), Tensor::zeros(vec![d, c])),
            ("b0".into(), Tensor::zeros(vec![c])),
        ])
        .unwrap()
    }

    fn random_batch(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Tensor::from_vec(vec![n, d], (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn l1_of_uniform_net_is_ln_c() {
        let w = uniform_logit_net(3, 2);
        let x = random_batch(1, 6, 3);
        let labels = vec![0, 1, 0, 1, 0, 1];
        let l1 = loss_l1(&w, &x, &labels).unwrap();
        assert!((l1 - (2.0f64).ln()).abs() <= 1e-12);

        // A zero-budget attack is the identity, so adversarial l1 equals
        // clean l1 exactly.
        let adv = attack::pgd_attack(&w, &x, &labels, &vec![AttackParams::new(0, 2, 5); 6], true, 3).unwrap();
        assert_eq!(loss_l1(&w, &adv.x_adv, &labels).unwrap(), l1);
    }

    #[test]
    fn one_step_update_matches_hand_arithmetic() {
        // Linear model, one feature, two classes: gradients by hand.
        let (w1, w2, x0) = (0.7, -0.4, 0.6);
        let w = ModelParams::new(vec![
            ("w0".into(), Tensor::from_vec(vec![1, 2], vec![w1, w2]).unwrap()),
            ("b0".into(), Tensor::zeros(vec![2])),
        ])
        .unwrap();
        let x = Tensor::from_vec(vec![1, 1], vec![x0]).unwrap();
        let labels = vec![0usize];

        let (z1, z2) = (w1 * x0, w2 * x0);
        let zmax = z1.max(z2);
        let (e1, e2) = ((z1 - zmax).exp(), (z2 - zmax).exp());
        let p1 = e1 / (e1 + e2);
        let p2 = e2 / (e1 + e2);
        let (g1, g2) = ((p1 - 1.0) * x0, p2 * x0);

        let lambda = 0.05;
        let w_hat = one_step_update(&w, &x, &labels, lambda).unwrap();
        let got = w_hat.get("w0").unwrap().data();
        assert!((got[0] - (w1 - lambda * g1)).abs() <= 1e-12, "w1: {} vs hand", got[0]);
        assert!((got[1] - (w2 - lambda * g2)).abs() <= 1e-12, "w2: {} vs hand", got[1]);

        // lambda = 0 copies bits; mutating the copy leaves the original alone.
        let mut same = one_step_update(&w, &x, &labels, 0.0).unwrap();
        for ((_, a), (_, b)) in w.entries().iter().zip(same.entries()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        same.scale(100.0);
        assert_eq!(w.get("w0").unwrap().data()[0], w1, "original untouched by clone mutation");
    }

    #[test]
    fn lookahead_terms_of_uniform_net() {
        // Zero weights: logits are uniform whatever the input, gradients are
        // zero in w0's first layer... but more simply, evaluate l2/l3 on the
        // uniform net directly as the lookahead model.
        let w_hat = uniform_logit_net(2, 2);
        let x = random_batch(2, 5, 2);
        let labels = vec![0, 1, 1, 0, 1];
        let (l2, per2) = loss_l2(&w_hat, &x, &labels, AttackParams::new(8, 2, 10), true, 7).unwrap();
        assert!((l2 + (2.0f64).ln()).abs() <= 1e-12, "attack cannot move uniform logits");
        assert!(per2.iter().all(|v| (v + (2.0f64).ln()).abs() <= 1e-12));
        let (l3, per3) = loss_l3(&w_hat, &x, &labels).unwrap();
        assert!((l3 + (2.0f64).ln()).abs() <= 1e-12);
        assert!(per3.iter().all(|v| (v + (2.0f64).ln()).abs() <= 1e-12));
    }

    #[test]
    fn breakdown_identity_holds_at_any_coefficients() {
        let ds = blob_data(5);
        let mut cfg = tiny_cfg();
        let streams = Streams::new(9);
        let seeds = ObjectiveSeeds::for_batch(&streams, 0, 0);
        let spec = MlpSpec::new(2, vec![8], 3).unwrap();
        let w = spec.init_params(&mut streams.rng("target_init", 0, 0), false);
        let theta = MlpSpec::new(2, vec![6], cfg.space.heads().total())
            .unwrap()
            .init_params(&mut streams.rng("strategy_init", 0, 0), false);

        for (alpha, beta) in [(2.0, 4.0), (4.0, 4.0), (0.0, 1.0), (0.7, 0.0)] {
            cfg.alpha = alpha;
            cfg.beta = beta;
            let (b, sampled) =
                evaluate_objective(&w, &theta, &ds.features, &ds.labels, &cfg, seeds).unwrap();
            assert_eq!(sampled.len(), ds.len());
            for i in 0..ds.len() {
                assert_eq!(
                    b.l0[i],
                    b.l1[i] + alpha * b.l2[i] + beta * b.l3[i],
                    "per-sample identity at alpha={alpha}, beta={beta}"
                );
                assert!(b.l1[i] >= 0.0);
                assert!(b.l2[i] <= 0.0 && b.l3[i] <= 0.0);
            }
            if alpha == 0.0 {
                assert!(b.l2.iter().all(|&v| v == 0.0), "skipped term stays zero");
            }
        }

        // alpha = beta = 0 collapses the objective to l1 exactly.
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        let (b, _) = evaluate_objective(&w, &theta, &ds.features, &ds.labels, &cfg, seeds).unwrap();
        assert_eq!(b.l0, b.l1);
        assert!(b.l2.iter().chain(&b.l3).all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_objective_replays_bitwise_and_never_touches_w() {
        let ds = blob_data(6);
        let cfg = tiny_cfg();
        let streams = Streams::new(10);
        let seeds = ObjectiveSeeds::for_batch(&streams, 3, 1);
        let w = MlpSpec::new(2, vec![8], 3)
            .unwrap()
            .init_params(&mut streams.rng("target_init", 0, 0), false);
        let theta = MlpSpec::new(2, vec![6], cfg.space.heads().total())
            .unwrap()
            .init_params(&mut streams.rng("strategy_init", 0, 0), false);

        let before: Vec<u64> = w.flatten().iter().map(|v| v.to_bits()).collect();
        let (b1, s1) = evaluate_objective(&w, &theta, &ds.features, &ds.labels, &cfg, seeds).unwrap();
        let after: Vec<u64> = w.flatten().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after, "live weights are read-only during evaluation");

        let (b2, s2) = evaluate_objective(&w, &theta, &ds.features, &ds.labels, &cfg, seeds).unwrap();
        assert_eq!(b1, b2, "same seeds, same breakdown");
        assert_eq!(
            s1.iter().map(|s| s.strategy.indices).collect::<Vec<_>>(),
            s2.iter().map(|s| s.strategy.indices).collect::<Vec<_>>()
        );
    }

    #[test]
    fn l2_ordering_is_consistent_with_direct_evaluation() {
        // Evaluate both lookahead branches for a weak and a strong strategy;
        // loss_l2's ordering must match an independent robustness probe of
        // the two lookahead models.
        let ds = blob_data(7);
        let cfg = tiny_cfg();
        let streams = Streams::new(11);
        let w = MlpSpec::new(2, vec![8], 3)
            .unwrap()
            .init_params(&mut streams.rng("target_init", 0, 0), false);

        let mut l2 = [0.0; 2];
        let mut probe = [0.0; 2];
        for (j, params) in [AttackParams::new(1, 1, 1), AttackParams::new(15, 6, 15)].iter().enumerate() {
            let adv =
                attack::pgd_attack(&w, &ds.features, &ds.labels, &vec![*params; ds.len()], true, 21).unwrap();
            let w_hat = one_step_update(&w, &adv.x_adv, &ds.labels, cfg.lambda()).unwrap();
            l2[j] = loss_l2(&w_hat, &ds.features, &ds.labels, cfg.eval_attack, true, 22).unwrap().0;

            // Independent probe: same attack, separately computed loss.
            let probe_adv = attack::pgd_attack(
                &w_hat,
                &ds.features,
                &ds.labels,
                &vec![cfg.eval_attack; ds.len()],
                true,
                22,
            )
            .unwrap();
            probe[j] = -loss_l1(&w_hat, &probe_adv.x_adv, &ds.labels).unwrap();
        }
        assert_eq!(l2[0], probe[0]);
        assert_eq!(l2[1], probe[1]);
        assert_ne!(l2[0], l2[1], "different strategies produce different lookaheads");
        assert_eq!(
            l2[0] > l2[1],
            probe[0] > probe[1],
            "plumbing and probe agree on which lookahead is more robust"
        );
    }

    #[test]
    fn fixed_strategy_training_equals_handrolled_loop() {
        // Re-implements the alpha=beta=0 fixed-strategy loop from scratch on
        // the public primitives, mirroring the documented stream labels. The
        // final weights must match bit for bit.
        let ds = blob_data(8);
        let mut cfg = tiny_cfg();
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        cfg.seed = 17;
        cfg.epochs = 3;
        let fixed = cfg.space.strategy_from_values(8, 2, 5).unwrap();

        let out = train_fixed_strategy(&ds, &cfg, fixed).unwrap();

        let streams = Streams::new(cfg.seed);
        let (train_set, _) = ds.split(cfg.test_fraction, cfg.seed).unwrap();
        let mut w = MlpSpec::new(ds.dim(), cfg.target_hidden.clone(), ds.classes)
            .unwrap()
            .init_params(&mut streams.rng("target_init", 0, 0), false);
        let mut it = BatchIterator::new(&train_set, cfg.batch_size, cfg.seed).unwrap();
        let mut global = 0usize;
        for epoch in 0..cfg.epochs {
            for (bidx, batch) in it.next_epoch().into_iter().enumerate() {
                let adv = attack::pgd_attack(
                    &w,
                    &batch.features,
                    &batch.labels,
                    &vec![fixed.params; batch.labels.len()],
                    cfg.random_start,
                    streams.seed("pgd", epoch as u64, bidx as u64),
                )
                .unwrap();
                let (_, _, grad) = loss_l1_with_grad(&w, &adv.x_adv, &batch.labels).unwrap();
                global += 1;
                if global % cfg.k == 0 {
                    w = axpy_update(&w, &grad, -cfg.eta1).unwrap();
                }
            }
        }

        assert_eq!(
            out.target.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            w.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "trainer must be exactly the documented loop"
        );
    }

    #[test]
    fn update_schedule_counts_match_k() {
        let ds = blob_data(9);
        let mut cfg = tiny_cfg();
        cfg.epochs = 4;
        cfg.k = 3;
        let out = train(&ds, &cfg).unwrap();
        let updates = &out.metrics.updates;
        assert!(updates.iter().all(|u| u.updated_strategy), "policy steps every batch");
        let target_steps: Vec<usize> = updates
            .iter()
            .enumerate()
            .filter(|(_, u)| u.updated_target)
            .map(|(i, _)| i)
            .collect();
        assert!(!target_steps.is_empty());
        for (i, &at) in target_steps.iter().enumerate() {
            assert_eq!(at, cfg.k * (i + 1) - 1, "weight update lands on every k-th batch");
        }
        for window in updates.windows(cfg.k) {
            let count = window.iter().filter(|u| u.updated_target).count();
            assert!(count <= 1, "never more than one weight update per k batches");
        }

        // Histograms account for every drawn strategy.
        let (train_len, _) = (ds.len() * 3 / 4, ());
        for h in &out.metrics.histograms {
            assert_eq!(h.draws() as usize, train_len);
        }
    }

    #[test]
    fn training_is_deterministic_and_writes_artifacts() {
        let ds = blob_data(10);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        cfg.checkpoint_every = 1;
        cfg.out_dir = Some(dir.path().to_path_buf());
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.strategy_net, b.strategy_net);
        assert_eq!(a.metrics.epochs, b.metrics.epochs);
        assert_eq!(a.metrics.histograms, b.metrics.histograms);

        for name in ["target_final.json", "strategy_final.json", "target_epoch_0000.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let reloaded = ModelParams::load(&dir.path().join("target_final.json")).unwrap();
        assert_eq!(reloaded, b.target);

        let mut other = cfg.clone();
        other.seed = 99;
        let c = train(&ds, &other).unwrap();
        assert_ne!(a.target, c.target, "different seed, different run");
    }

    #[test]
    fn divergence_aborts_with_checkpoint() {
        let ds = blob_data(11);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        cfg.eta1 = 1e160;
        cfg.k = 1;
        cfg.epochs = 5;
        cfg.out_dir = Some(dir.path().to_path_buf());
        match train(&ds, &cfg) {
            Err(Error::Diverged { checkpoint: Some(path), .. }) => {
                assert!(path.exists());
                ModelParams::load(&path).expect("abort checkpoint loads");
            }
            other => panic!("expected divergence abort, got {other:?}"),
        }
    }

    #[test]
    fn zero_epsilon_fixed_strategy_is_clean_training() {
        let ds = blob_data(12);
        let mut cfg = tiny_cfg();
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        cfg.epochs = 40;
        cfg.k = 1;
        cfg.space = StrategySpace::new(vec![0], vec![1], vec![1]).unwrap();
        let clean = cfg.space.strategy_from_indices([0, 0, 0]).unwrap();
        let out = train_fixed_strategy(&ds, &cfg, clean).unwrap();
        let final_epoch = out.metrics.final_epoch().unwrap();
        assert!(
            final_epoch.clean_acc >= 0.9,
            "well-separated blobs should be easy clean: got {}",
            final_epoch.clean_acc
        );
        // Attacks are identities, so the "adversarial" loss must shrink like
        // a clean loss.
        assert!(final_epoch.mean_l1 < out.metrics.epochs[0].mean_l1 / 2.0);
    }
}
