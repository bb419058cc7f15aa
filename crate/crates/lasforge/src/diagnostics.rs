//! Convergence diagnostics for the alternating training scheme.
//!
//! Under standard assumptions (Lipschitz block gradients, strong concavity
//! of the inner problem, bounded stochastic-gradient variance, and a
//! delta-approximate inner solution), the outer objective is smooth with
//! constant `L0 = l_wtheta * l_thetaw / mu + l_ww`, and running SGD with the
//! step size from [`theoretical_lr`] drives the average squared gradient
//! norm below the value of [`convergence_bound`].
//!
//! These formulas are reported as overlays next to measured gradient-norm
//! traces. They are never enforced: the assumptions do not literally hold
//! for ReLU networks, and anything consuming them should say so.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::nn::{axpy_update, ModelParams};
use crate::rng::per_sample_rng;

/// Constants of the smoothness/concavity assumptions.
///
/// `l_ww`, `l_wtheta`, `l_thetaw` bound the block Lipschitz constants of the
/// objective's gradients, `mu` the strong concavity of the inner problem,
/// `sigma2` the stochastic-gradient variance, `delta` the inner-solution
/// tolerance, `initial_gap` the starting optimality gap, and `steps` the
/// horizon the bound is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    pub l_ww: f64,
    pub l_wtheta: f64,
    pub l_thetaw: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub initial_gap: f64,
    pub steps: usize,
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("l_ww", self.l_ww),
            ("l_wtheta", self.l_wtheta),
            ("l_thetaw", self.l_thetaw),
            ("delta", self.delta),
            ("initial_gap", self.initial_gap),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("mu", self.mu), ("sigma2", self.sigma2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps: horizon must be at least 1"));
        }
        Ok(())
    }

    /// The same parameters evaluated at a different horizon.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    /// Reads `key = value` lines (`#` comments allowed). Expected keys are
    /// the field names; `steps` also accepts the alias `T`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, source: &str) -> Result<Self> {
        let mut p = ConvergenceParams {
            l_ww: 1.0,
            l_wtheta: 1.0,
            l_thetaw: 1.0,
            mu: 1.0,
            sigma2: 1.0,
            delta: 0.0,
            initial_gap: 1.0,
            steps: 1,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { source_name: source.to_string(), line: idx + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, got `{value}`")));
            match key {
                "l_ww" => p.l_ww = num()?,
                "l_wtheta" => p.l_wtheta = num()?,
                "l_thetaw" => p.l_thetaw = num()?,
                "mu" => p.mu = num()?,
                "sigma2" => p.sigma2 = num()?,
                "delta" => p.delta = num()?,
                "initial_gap" => p.initial_gap = num()?,
                "steps" | "T" => {
                    p.steps = value.parse().map_err(|_| err(format!("`steps` expects an integer, got `{value}`")))?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Smoothness constant of the outer objective after the inner problem is
/// solved: `l_wtheta * l_thetaw / mu + l_ww`.
pub fn lipschitz_l0(p: &ConvergenceParams) -> Result<f64> {
    p.validate()?;
    Ok(p.l_wtheta * p.l_thetaw / p.mu + p.l_ww)
}

/// Step size prescription: `min(1/L0, sqrt(initial_gap / (sigma2 * steps * L0)))`.
pub fn theoretical_lr(p: &ConvergenceParams) -> Result<f64> {
    let l0 = lipschitz_l0(p)?;
    if l0 <= 0.0 {
        return Err(Error::invalid("smoothness constant must be positive for a step size"));
    }
    let sqrt_branch = (p.initial_gap / (p.sigma2 * p.steps as f64 * l0)).sqrt();
    Ok((1.0 / l0).min(sqrt_branch))
}

/// Guaranteed ceiling on the average squared gradient norm after `steps`
/// updates at the theoretical step size:
/// `4 * sigma * sqrt(initial_gap * L0 / steps) + 5 * delta * l_wtheta^2 / mu`.
pub fn convergence_bound(p: &ConvergenceParams) -> Result<f64> {
    let l0 = lipschitz_l0(p)?;
    let sigma = p.sigma2.sqrt();
    Ok(4.0 * sigma * (p.initial_gap * l0 / p.steps as f64).sqrt() + 5.0 * p.delta * p.l_wtheta * p.l_wtheta / p.mu)
}

/// How far an inexact inner solution can push the outer gradient:
/// `l_wtheta * sqrt(delta / mu)`.
pub fn approx_grad_gap(delta: f64, mu: f64, l_wtheta: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu must be > 0, got {mu}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
    }
    Ok(l_wtheta * (delta / mu).sqrt())
}

/// Prefix means of a trace: `out[t] = mean(trace[0..=t])`.
pub fn running_average(trace: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len());
    let mut sum = 0.0;
    for (i, v) in trace.iter().enumerate() {
        sum += v;
        out.push(sum / (i + 1) as f64);
    }
    out
}

/// Per-epoch mean squared gradient norm and its running average, the
/// measured counterpart of [`convergence_bound`].
pub fn grad_norm_trace(metrics: &RunMetrics) -> Result<(Vec<f64>, Vec<f64>)> {
    if metrics.epochs.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    let trace: Vec<f64> = metrics.epochs.iter().map(|e| e.grad_norm_sq).collect();
    let avg = running_average(&trace);
    Ok((trace, avg))
}

/// Heuristic probe of a gradient map's Lipschitz constant: the largest
/// observed ratio `|g(a) - g(b)| / |a - b|` over `pairs` random parameter
/// pairs drawn within `radius` of `anchor`. This is a lower bound from
/// finitely many samples, not a certificate.
pub fn estimate_lipschitz(
    grad: impl Fn(&ModelParams) -> Result<ModelParams>,
    anchor: &ModelParams,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if !(radius > 0.0) || pairs == 0 {
        return Err(Error::invalid("lipschitz probe needs a positive radius and at least one pair"));
    }
    let perturb = |rng: &mut rand_chacha::ChaCha12Rng| -> Result<ModelParams> {
        let mut p = anchor.clone();
        let noise: Vec<f64> = (0..p.numel()).map(|_| rng.gen_range(-radius..radius)).collect();
        let flat: Vec<f64> = p.flatten().iter().zip(&noise).map(|(a, b)| a + b).collect();
        p.set_from_flat(&flat)?;
        Ok(p)
    };
    let mut best = 0.0f64;
    for i in 0..pairs {
        let mut rng = per_sample_rng(seed, i);
        let a = perturb(&mut rng)?;
        let b = perturb(&mut rng)?;
        let dist_sq = axpy_update(&a, &b, -1.0)?.sq_norm();
        if dist_sq == 0.0 {
            continue;
        }
        let grad_gap_sq = axpy_update(&grad(&a)?, &grad(&b)?, -1.0)?.sq_norm();
        best = best.max((grad_gap_sq / dist_sq).sqrt());
    }
    Ok(best)
}
