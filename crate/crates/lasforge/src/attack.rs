//! Gradient-sign attacks with per-sample parameters.
//!
//! The workhorse is [`pgd_attack`]: iterated gradient-sign steps projected
//! onto an L-infinity ball, where every sample in the batch can use its own
//! budget, step size and iteration count. Samples whose iteration count is
//! exhausted simply stop moving while the rest of the batch continues.
//!
//! Two conventions matter for reproducing results:
//!
//! * perturbations are projected onto the epsilon ball after every step, but
//!   clipped to the `[0, 1]` input box only once at the very end;
//! * the random start draws from a per-sample RNG stream, so results do not
//!   depend on batch composition or on how work is sharded across threads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sign, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::{self, ModelParams, StrategyHeads};
use crate::rng::per_sample_rng;

/// Resolved attack parameters for one sample. `epsilon` and `step` are in
/// units of 1/255 of the input range; `iters` is the PGD iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackParams {
    pub epsilon: u32,
    pub step: u32,
    pub iters: u32,
}

impl AttackParams {
    pub fn new(epsilon: u32, step: u32, iters: u32) -> Self {
        AttackParams { epsilon, step, iters }
    }

    /// Perturbation budget as a fraction of the input range.
    pub fn epsilon_frac(&self) -> f64 {
        self.epsilon as f64 / 255.0
    }

    /// Step size as a fraction of the input range.
    pub fn step_frac(&self) -> f64 {
        self.step as f64 / 255.0
    }
}

/// The attack used for robust-accuracy reporting and for the lookahead
/// robustness term: 10 iterations of step 2/255 inside an 8/255 ball.
pub const EVAL_ATTACK: AttackParams = AttackParams { epsilon: 8, step: 2, iters: 10 };

/// Hard cap on [`StrategySpace::enumerate`]; exhaustive enumeration features
/// (exact policy gradients, exhaustive tests) are meant for desk-scale grids.
pub const ENUMERATION_LIMIT: usize = 10_000;

/// Discrete grid of attack parameters the strategy network chooses from:
/// one list of options per parameter, in 1/255 units for `epsilons` and
/// `steps`. The strategy network emits one softmax head per list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpace {
    epsilons: Vec<u32>,
    steps: Vec<u32>,
    iters: Vec<u32>,
}

impl Default for StrategySpace {
    /// Budgets 3..=15, steps 1..=6, iteration counts 3..=15.
    fn default() -> Self {
        StrategySpace {
            epsilons: (3..=15).collect(),
            steps: (1..=6).collect(),
            iters: (3..=15).collect(),
        }
    }
}

impl StrategySpace {
    /// Each list must be non-empty and strictly increasing. Zero is legal
    /// (an `epsilon` of 0 makes the attack a no-op, which is how clean
    /// training is expressed); singleton lists are legal too.
    pub fn new(epsilons: Vec<u32>, steps: Vec<u32>, iters: Vec<u32>) -> Result<Self> {
        for (name, list) in [("epsilon", &epsilons), ("step", &steps), ("iterations", &iters)] {
            if list.is_empty() {
                return Err(Error::invalid(format!("strategy space: {name} options are empty")));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "strategy space: {name} options must be strictly increasing, got {list:?}"
                )));
            }
        }
        Ok(StrategySpace { epsilons, steps, iters })
    }

    pub fn epsilons(&self) -> &[u32] {
        &self.epsilons
    }

    pub fn steps(&self) -> &[u32] {
        &self.steps
    }

    pub fn iters(&self) -> &[u32] {
        &self.iters
    }

    /// Option counts per parameter, in head order (epsilon, step, iters).
    pub fn head_sizes(&self) -> [usize; 3] {
        [self.epsilons.len(), self.steps.len(), self.iters.len()]
    }

    /// Output layout the strategy network must produce for this space.
    pub fn heads(&self) -> StrategyHeads {
        StrategyHeads::new(self.head_sizes().to_vec()).expect("validated lists are non-empty")
    }

    /// Number of joint strategies in the grid.
    pub fn size(&self) -> usize {
        self.epsilons.len() * self.steps.len() * self.iters.len()
    }

    pub fn strategy_from_indices(&self, indices: [usize; 3]) -> Result<AttackStrategy> {
        let [ei, si, ii] = indices;
        let sizes = self.head_sizes();
        if ei >= sizes[0] || si >= sizes[1] || ii >= sizes[2] {
            return Err(Error::invalid(format!("strategy indices {indices:?} out of range for {sizes:?}")));
        }
        Ok(AttackStrategy {
            indices,
            params: AttackParams::new(self.epsilons[ei], self.steps[si], self.iters[ii]),
        })
    }

    /// Looks up a concrete `(epsilon, step, iters)` triple in the grid.
    pub fn strategy_from_values(&self, epsilon: u32, step: u32, iters: u32) -> Result<AttackStrategy> {
        let find = |param: &'static str, list: &[u32], value: u32| -> Result<usize> {
            list.iter()
                .position(|&v| v == value)
                .ok_or(Error::StrategyNotInSpace { param, value })
        };
        let indices = [
            find("epsilon", &self.epsilons, epsilon)?,
            find("step", &self.steps, step)?,
            find("iterations", &self.iters, iters)?,
        ];
        self.strategy_from_indices(indices)
    }

    pub fn contains(&self, params: &AttackParams) -> bool {
        self.strategy_from_values(params.epsilon, params.step, params.iters).is_ok()
    }

    /// Every joint strategy, iterating the iteration head fastest. Errors if
    /// the grid exceeds [`ENUMERATION_LIMIT`].
    pub fn enumerate(&self) -> Result<Vec<AttackStrategy>> {
        if self.size() > ENUMERATION_LIMIT {
            return Err(Error::SpaceTooLarge { size: self.size(), limit: ENUMERATION_LIMIT });
        }
        let mut all = Vec::with_capacity(self.size());
        for ei in 0..self.epsilons.len() {
            for si in 0..self.steps.len() {
                for ii in 0..self.iters.len() {
                    all.push(self.strategy_from_indices([ei, si, ii]).expect("in range"));
                }
            }
        }
        Ok(all)
    }
}

/// One point of the strategy grid: the per-head option indices plus the
/// attack parameters they resolve to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackStrategy {
    pub indices: [usize; 3],
    pub params: AttackParams,
}

/// Result of attacking a batch: the adversarial inputs alongside the clean
/// ones and the per-sample parameters that produced them.
#[derive(Debug, Clone)]
pub struct AdversarialBatch {
    pub clean: Tensor,
    pub x_adv: Tensor,
    pub params: Vec<AttackParams>,
}

/// Sign of the input gradient of the summed cross-entropy, for every row.
///
/// Summing (rather than averaging) the per-sample losses leaves each row's
/// gradient equal to the gradient of its own loss; sign() would erase the
/// 1/n factor anyway.
fn input_grad_signs(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    context: &'static str,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let staged = nn::stage_params(&mut tape, params, false);
    let x_id = tape.leaf(x.clone().with_requires_grad(true));
    let logits = nn::forward_staged(&mut tape, &staged, x_id)?;
    let log_probs = tape.log_softmax(logits)?;
    let picked = tape.select_class(log_probs, labels)?;
    let negated = tape.scale(picked, -1.0)?;
    let loss = tape.sum(negated)?;
    let grad = tape.input_gradient(loss, x_id)?;
    if !grad.all_finite() {
        return Err(Error::NonFiniteGradient { context: context.to_string() });
    }
    Ok(grad.data().iter().map(|&g| sign(g)).collect())
}

/// PGD on a contiguous run of rows. `base_row` keys the per-sample RNG so a
/// row perturbs identically no matter how the batch is sharded.
fn pgd_rows(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    attack: &[AttackParams],
    random_start: bool,
    stream_seed: u64,
    base_row: usize,
) -> Result<Tensor> {
    let [n, d] = x.dims2()?;
    let mut delta = vec![0.0; n * d];
    if random_start {
        for (i, a) in attack.iter().enumerate() {
            let e = a.epsilon_frac();
            if e > 0.0 {
                let mut rng = per_sample_rng(stream_seed, base_row + i);
                for v in &mut delta[i * d..(i + 1) * d] {
                    *v = rng.gen_range(-e..e);
                }
            }
        }
    }

    let max_iters = attack.iter().map(|a| a.iters).max().unwrap_or(0);
    for t in 0..max_iters {
        let x_cur = Tensor::from_vec(
            vec![n, d],
            x.data().iter().zip(&delta).map(|(xv, dv)| xv + dv).collect(),
        )?;
        let signs = input_grad_signs(params, &x_cur, labels, "pgd")?;
        for (i, a) in attack.iter().enumerate() {
            if t < a.iters && a.epsilon > 0 {
                let e = a.epsilon_frac();
                let s = a.step_frac();
                for c in 0..d {
                    let idx = i * d + c;
                    // Step along the gradient sign, then project back onto
                    // the epsilon ball. The input box is NOT enforced here.
                    delta[idx] = (delta[idx] + s * signs[idx]).clamp(-e, e);
                }
            }
        }
    }

    let data = x
        .data()
        .iter()
        .zip(&delta)
        .map(|(xv, dv)| (xv + dv).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(vec![n, d], data)
}

/// Number of worker threads to shard attacks across: `LASFORGE_THREADS`,
/// default 1. Sharding never changes results, only wall-clock time.
fn shard_count(n: usize) -> usize {
    std::env::var("LASFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
        .min(64)
        .min(n.max(1))
}

fn pgd_sharded(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    attack: &[AttackParams],
    random_start: bool,
    stream_seed: u64,
    shards: usize,
) -> Result<Tensor> {
    let [n, d] = x.dims2()?;
    if shards <= 1 || n < 2 {
        return pgd_rows(params, x, labels, attack, random_start, stream_seed, 0);
    }
    let chunk = n.div_ceil(shards);
    let ranges: Vec<(usize, usize)> = (0..shards)
        .map(|s| (s * chunk, ((s + 1) * chunk).min(n)))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let parts: Vec<(usize, usize, Tensor)> = ranges
        .iter()
        .map(|&(lo, hi)| {
            let rows = Tensor::from_vec(vec![hi - lo, d], x.data()[lo * d..hi * d].to_vec())?;
            Ok((lo, hi, rows))
        })
        .collect::<Result<_>>()?;

    let results: Vec<Result<Tensor>> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .iter()
            .map(|(lo, hi, rows)| {
                let (lo, hi) = (*lo, *hi);
                scope.spawn(move || {
                    pgd_rows(params, rows, &labels[lo..hi], &attack[lo..hi], random_start, stream_seed, lo)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("attack shard panicked")).collect()
    });

    let mut data = Vec::with_capacity(n * d);
    for part in results {
        data.extend_from_slice(part?.data());
    }
    Tensor::from_vec(vec![n, d], data)
}

fn check_batch(x: &Tensor, labels: &[usize], attack: &[AttackParams]) -> Result<()> {
    let [n, _] = x.dims2()?;
    if labels.len() != n || attack.len() != n {
        return Err(Error::invalid(format!(
            "attack batch mismatch: {n} rows, {} labels, {} parameter sets",
            labels.len(),
            attack.len()
        )));
    }
    if x.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("attack inputs must lie in [0, 1]"));
    }
    Ok(())
}

/// Projected-gradient attack with per-sample parameters.
///
/// Guarantees on the output: `|x_adv - x|` stays within each sample's
/// epsilon, `x_adv` lies in `[0, 1]`, and a sample with `epsilon == 0` comes
/// back bit-identical. The same `(stream_seed, row index)` pair always draws
/// the same random start.
pub fn pgd_attack(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    attack: &[AttackParams],
    random_start: bool,
    stream_seed: u64,
) -> Result<AdversarialBatch> {
    check_batch(x, labels, attack)?;
    let [n, _] = x.dims2()?;
    let x_adv = pgd_sharded(params, x, labels, attack, random_start, stream_seed, shard_count(n))?;
    Ok(AdversarialBatch { clean: x.clone(), x_adv, params: attack.to_vec() })
}

/// [`pgd_attack`] under the fixed evaluation attack ([`EVAL_ATTACK`]) with a
/// random start, for robust-accuracy reporting.
pub fn fixed_eval_attack(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    stream_seed: u64,
) -> Result<AdversarialBatch> {
    let [n, _] = x.dims2()?;
    pgd_attack(params, x, labels, &vec![EVAL_ATTACK; n], true, stream_seed)
}

/// Single-step gradient-sign attack: `clip(x + eps * sign(grad), 0, 1)`.
/// No random start; equivalent to one PGD iteration with `step == epsilon`.
pub fn fgsm_attack(params: &ModelParams, x: &Tensor, labels: &[usize], epsilon: u32) -> Result<Tensor> {
    let [n, d] = x.dims2()?;
    check_batch(x, labels, &vec![AttackParams::new(epsilon, epsilon, 1); n])?;
    let signs = input_grad_signs(params, x, labels, "fgsm")?;
    let e = epsilon as f64 / 255.0;
    let data = x
        .data()
        .iter()
        .zip(&signs)
        .map(|(xv, sv)| (xv + e * sv).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(vec![n, d], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn small_net(seed: u64) -> ModelParams {
        MlpSpec::new(3, vec![8], 3)
            .unwrap()
            .init_params(&mut ChaCha12Rng::seed_from_u64(seed), false)
    }

    fn unit_batch(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Tensor::from_vec(vec![n, d], (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn default_space_layout() {
        let space = StrategySpace::default();
        assert_eq!(space.head_sizes(), [13, 6, 13]);
        assert_eq!(space.size(), 13 * 6 * 13);
        let all = space.enumerate().unwrap();
        assert_eq!(all.len(), space.size());
        assert_eq!(all[0].params, AttackParams::new(3, 1, 3));
        assert_eq!(all.last().unwrap().params, AttackParams::new(15, 6, 15));

        let eval = space.strategy_from_values(8, 2, 10).unwrap();
        assert_eq!(eval.indices, [5, 1, 7]);
        assert_eq!(eval.params, EVAL_ATTACK);
        assert!(space.contains(&EVAL_ATTACK));
    }

    #[test]
    fn space_validation_and_lookup_errors() {
        assert!(StrategySpace::new(vec![], vec![1], vec![1]).is_err());
        assert!(StrategySpace::new(vec![3, 3], vec![1], vec![1]).is_err(), "duplicates rejected");
        assert!(StrategySpace::new(vec![5, 3], vec![1], vec![1]).is_err(), "must increase");

        let space = StrategySpace::default();
        match space.strategy_from_values(16, 2, 10) {
            Err(Error::StrategyNotInSpace { param, value }) => {
                assert_eq!(param, "epsilon");
                assert_eq!(value, 16);
            }
            other => panic!("expected StrategyNotInSpace, got {other:?}"),
        }
        assert!(space.strategy_from_indices([13, 0, 0]).is_err());

        let big = StrategySpace::new(
            (0..30).collect(),
            (0..30).collect(),
            (0..30).collect(),
        )
        .unwrap();
        assert!(matches!(big.enumerate(), Err(Error::SpaceTooLarge { size: 27000, limit: 10000 })));
    }

    #[test]
    fn fgsm_matches_closed_form_on_linear_model() {
        // Single linear layer: the input gradient of row cross-entropy is
        // W (softmax(z) - onehot(y)), computable by hand.
        let d = 4;
        let c = 3;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..d * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let params = ModelParams::new(vec![
            ("w0".into(), Tensor::from_vec(vec![d, c], w.clone()).unwrap()),
            ("b0".into(), Tensor::from_vec(vec![c], b.clone()).unwrap()),
        ])
        .unwrap();
        let x = unit_batch(8, 5, d);
        let labels = vec![0, 1, 2, 1, 0];
        let epsilon = 6;

        let got = fgsm_attack(&params, &x, &labels, epsilon).unwrap();

        let e = epsilon as f64 / 255.0;
        for i in 0..5 {
            let row = x.row(i).unwrap().data().to_vec();
            let z: Vec<f64> = (0..c).map(|j| (0..d).map(|p| row[p] * w[p * c + j]).sum::<f64>() + b[j]).collect();
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
            let norm: f64 = exp.iter().sum();
            for p in 0..d {
                let grad: f64 = (0..c)
                    .map(|j| w[p * c + j] * (exp[j] / norm - if j == labels[i] { 1.0 } else { 0.0 }))
                    .sum();
                let expected = (row[p] + e * sign(grad)).clamp(0.0, 1.0);
                assert_eq!(got.data()[i * d + p], expected, "sample {i} coord {p}");
            }
        }
    }

    #[test]
    fn fgsm_on_zero_gradient_returns_input() {
        // All-zero weights give identical logits, so the gradient is zero
        // and sign(0) = 0 keeps the input in place.
        let params = ModelParams::new(vec![
            ("w0".into(), Tensor::zeros(vec![3, 2])),
            ("b0".into(), Tensor::zeros(vec![2])),
        ])
        .unwrap();
        let x = unit_batch(9, 4, 3);
        let out = fgsm_attack(&params, &x, &[0, 1, 0, 1], 8).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn fgsm_equals_single_step_pgd_without_random_start() {
        let params = small_net(10);
        let x = unit_batch(11, 6, 3);
        let labels = vec![0, 1, 2, 0, 1, 2];
        let epsilon = 8;

        let via_fgsm = fgsm_attack(&params, &x, &labels, epsilon).unwrap();
        let strat = vec![AttackParams::new(epsilon, epsilon, 1); 6];
        let via_pgd = pgd_attack(&params, &x, &labels, &strat, false, 99).unwrap();
        assert_eq!(via_fgsm.data(), via_pgd.x_adv.data(), "same arithmetic, bit for bit");
    }

    #[test]
    fn zero_epsilon_is_identity_even_with_random_start() {
        let params = small_net(20);
        let x = unit_batch(21, 5, 3);
        let labels = vec![0, 1, 2, 0, 1];
        let out = pgd_attack(&params, &x, &labels, &vec![AttackParams::new(0, 3, 7); 5], true, 5).unwrap();
        assert_eq!(out.x_adv.data(), x.data(), "no budget means no movement");
    }

    #[test]
    fn heterogeneous_iterations_match_singleton_runs() {
        // Without a random start the attack is deterministic, so each row of
        // a mixed batch must equal the same row attacked alone: rows are
        // independent and iteration masking never leaks across samples.
        let params = small_net(30);
        let x = unit_batch(31, 4, 3);
        let labels = vec![0, 2, 1, 0];
        let strategies = vec![
            AttackParams::new(10, 2, 3),
            AttackParams::new(4, 1, 15),
            AttackParams::new(15, 6, 7),
            AttackParams::new(8, 2, 10),
        ];
        let batch = pgd_attack(&params, &x, &labels, &strategies, false, 0).unwrap();
        for i in 0..4 {
            let xi = Tensor::from_vec(vec![1, 3], x.row(i).unwrap().data().to_vec()).unwrap();
            let alone = pgd_attack(&params, &xi, &labels[i..=i], &strategies[i..=i], false, 0).unwrap();
            assert_eq!(
                &batch.x_adv.data()[i * 3..(i + 1) * 3],
                alone.x_adv.data(),
                "row {i} diverges from its singleton run"
            );
        }
    }

    #[test]
    fn sharding_does_not_change_results() {
        let params = small_net(40);
        let x = unit_batch(41, 7, 3);
        let labels = vec![0, 1, 2, 0, 1, 2, 0];
        let strategies: Vec<AttackParams> =
            (0..7).map(|i| AttackParams::new(3 + i as u32, 1 + (i % 6) as u32, 3 + i as u32)).collect();
        let one = pgd_sharded(&params, &x, &labels, &strategies, true, 77, 1).unwrap();
        let three = pgd_sharded(&params, &x, &labels, &strategies, true, 77, 3).unwrap();
        let many = pgd_sharded(&params, &x, &labels, &strategies, true, 77, 16).unwrap();
        assert_eq!(one.data(), three.data());
        assert_eq!(one.data(), many.data());
    }

    #[test]
    fn non_finite_gradients_surface_as_errors() {
        let params = ModelParams::new(vec![
            ("w0".into(), Tensor::from_vec(vec![3, 2], vec![f64::NAN; 6]).unwrap()),
            ("b0".into(), Tensor::zeros(vec![2])),
        ])
        .unwrap();
        let x = unit_batch(50, 2, 3);
        match pgd_attack(&params, &x, &[0, 1], &vec![EVAL_ATTACK; 2], false, 1) {
            Err(Error::NonFiniteGradient { context }) => assert_eq!(context, "pgd"),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }

    #[test]
    fn batch_shape_and_box_validation() {
        let params = small_net(60);
        let x = unit_batch(61, 3, 3);
        assert!(pgd_attack(&params, &x, &[0, 1], &vec![EVAL_ATTACK; 3], true, 1).is_err());
        assert!(pgd_attack(&params, &x, &[0, 1, 2], &vec![EVAL_ATTACK; 2], true, 1).is_err());
        let outside = Tensor::from_vec(vec![1, 3], vec![0.5, 1.5, 0.5]).unwrap();
        assert!(pgd_attack(&params, &outside, &[0], &vec![EVAL_ATTACK; 1], true, 1).is_err());
    }

    #[test]
    fn same_seed_reproduces_same_attack() {
        let params = small_net(70);
        let x = unit_batch(71, 5, 3);
        let labels = vec![0, 1, 2, 1, 0];
        let strat = vec![EVAL_ATTACK; 5];
        let a = pgd_attack(&params, &x, &labels, &strat, true, 123).unwrap();
        let b = pgd_attack(&params, &x, &labels, &strat, true, 123).unwrap();
        let c = pgd_attack(&params, &x, &labels, &strat, true, 124).unwrap();
        assert_eq!(a.x_adv.data(), b.x_adv.data());
        assert_ne!(a.x_adv.data(), c.x_adv.data(), "different stream must move differently");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Every adversarial example stays inside its sample's epsilon ball
        /// and inside the input box, whatever the strategies drawn.
        #[test]
        fn perturbations_respect_ball_and_box(
            seed in 0u64..1000,
            picks in proptest::collection::vec((0usize..13, 0usize..6, 0usize..13), 1..6),
            random_start in proptest::bool::ANY,
        ) {
            let space = StrategySpace::default();
            let n = picks.len();
            let params = small_net(seed);
            let x = unit_batch(seed ^ 0x5eed, n, 3);
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let strategies: Vec<AttackParams> = picks
                .iter()
                .map(|&(e, s, i)| space.strategy_from_indices([e, s, i]).unwrap().params)
                .collect();

            let out = pgd_attack(&params, &x, &labels, &strategies, random_start, seed).unwrap();
            for i in 0..n {
                let eps = strategies[i].epsilon_frac();
                for c in 0..3 {
                    let adv = out.x_adv.data()[i * 3 + c];
                    let orig = x.data()[i * 3 + c];
                    prop_assert!((adv - orig).abs() <= eps + 1e-12,
                        "sample {} coord {}: |{} - {}| > {}", i, c, adv, orig, eps);
                    prop_assert!((0.0..=1.0).contains(&adv));
                }
            }
        }
    }
}
