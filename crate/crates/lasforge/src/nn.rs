//! Plain MLPs over the autodiff tape, and the parameter plumbing around
//! them: named parameter collections, He-style initialization, cross-entropy,
//! checkpoint files, and the softmax head layout of the strategy network.
//!
//! Forward passes come in two flavors that share the same kernels and so
//! produce identical values: a gradient-free one ([`forward_values`]) for
//! evaluation and sampling, and a taped one ([`forward_staged`]) for losses
//! that need gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, Tensor, TensorId};
use crate::error::{Error, Result};

/// Ordered, named collection of parameter tensors.
///
/// Layer structure is encoded by convention: entries alternate `w{i}` of
/// shape `[fan_in, fan_out]` and `b{i}` of shape `[fan_out]`. Gradients use
/// the same type, aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
            }
        }
        Ok(ModelParams { entries })
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Explicitly named copy; `Clone` does the same.
    pub fn clone_params(&self) -> Self {
        self.clone()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
                .collect(),
        }
    }

    fn check_aligned(&self, other: &ModelParams, op: &str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::invalid(format!("{op}: parameter collections differ in length")));
        }
        for ((n1, t1), (n2, t2)) in self.entries.iter().zip(&other.entries) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(Error::invalid(format!(
                    "{op}: mismatched entry {n1:?} {:?} vs {n2:?} {:?}",
                    t1.shape(),
                    t2.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += c * other`, entry by entry. `c == 0` leaves every bit of
    /// `self` untouched.
    pub fn axpy(&mut self, c: f64, other: &ModelParams) -> Result<()> {
        self.check_aligned(other, "axpy")?;
        if c == 0.0 {
            return Ok(());
        }
        for ((_, t), (_, g)) in self.entries.iter_mut().zip(&other.entries) {
            for (v, gv) in t.data_mut().iter_mut().zip(g.data()) {
                *v += c * gv;
            }
        }
        Ok(())
    }

    /// `self *= c`, entry by entry.
    pub fn scale(&mut self, c: f64) {
        for (_, t) in &mut self.entries {
            for v in t.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.numel());
        for (_, t) in &self.entries {
            flat.extend_from_slice(t.data());
        }
        flat
    }

    /// Overwrites values from a flat buffer laid out like [`flatten`].
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::invalid(format!(
                "flat buffer has {} values, parameters hold {}",
                flat.len(),
                self.numel()
            )));
        }
        let mut offset = 0;
        for (_, t) in &mut self.entries {
            let len = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn sq_norm(&self) -> f64 {
        self.entries.iter().flat_map(|(_, t)| t.data()).map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Writes the checkpoint file format: a JSON list of
    /// `(name, shape, data)` entries under a format tag. Values survive the
    /// round-trip bit for bit.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            entries: self
                .entries
                .iter()
                .map(|(name, t)| CheckpointEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        let out = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format {:?} in {}",
                file.format,
                path.display()
            )));
        }
        let entries = file
            .entries
            .into_iter()
            .map(|e| Ok((e.name, Tensor::from_vec(e.shape, e.data)?)))
            .collect::<Result<Vec<_>>>()?;
        ModelParams::new(entries)
    }
}

/// `params + c * grads` as a fresh collection; `c == 0` returns an exact
/// copy. This is the single primitive behind SGD steps and hypothetical
/// one-step updates.
pub fn axpy_update(params: &ModelParams, grads: &ModelParams, c: f64) -> Result<ModelParams> {
    let mut out = params.clone();
    out.axpy(c, grads)?;
    Ok(out)
}

const CHECKPOINT_FORMAT: &str = "lasforge-params-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    entries: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Fully-connected architecture: `input_dim -> hidden... -> output_dim`,
/// ReLU between layers, raw logits at the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("mlp layer widths must all be >= 1"));
        }
        Ok(MlpSpec { input_dim, hidden, output_dim })
    }

    /// Widths of every activation, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }

    /// He-style initialization: weights uniform in
    /// `[-sqrt(6/fan_in), sqrt(6/fan_in)]`, biases zero. With `zero_final`
    /// the last layer's weights are zero too, which makes a softmax over the
    /// output exactly uniform; the strategy network starts that way so its
    /// initial policy carries no accidental preference.
    pub fn init_params(&self, rng: &mut impl Rng, zero_final: bool) -> ModelParams {
        let dims = self.dims();
        let mut entries = Vec::with_capacity(2 * (dims.len() - 1));
        for layer in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
            let last = layer == dims.len() - 2;
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| if zero_final && last { 0.0 } else { rng.gen_range(-limit..=limit) })
                .collect();
            entries.push((
                format!("w{layer}"),
                Tensor::from_vec(vec![fan_in, fan_out], weights).expect("init shape"),
            ));
            entries.push((format!("b{layer}"), Tensor::zeros(vec![fan_out])));
        }
        ModelParams::new(entries).expect("generated names are unique")
    }

    /// Reads the architecture back off a parameter collection.
    pub fn infer(params: &ModelParams) -> Result<Self> {
        let layers = layer_tensors(params)?;
        let input_dim = layers[0].0.shape()[0];
        let output_dim = layers.last().expect("at least one layer").0.shape()[1];
        let hidden = layers[..layers.len() - 1].iter().map(|(w, _)| w.shape()[1]).collect();
        MlpSpec::new(input_dim, hidden, output_dim)
    }
}

/// Weight/bias pairs in layer order, with the shape chain validated.
fn layer_tensors(params: &ModelParams) -> Result<Vec<(&Tensor, &Tensor)>> {
    let entries = params.entries();
    if entries.is_empty() || entries.len() % 2 != 0 {
        return Err(Error::invalid("parameters do not form (weight, bias) layer pairs"));
    }
    let mut layers: Vec<(&Tensor, &Tensor)> = Vec::with_capacity(entries.len() / 2);
    for (layer, pair) in entries.chunks(2).enumerate() {
        let (w_name, w) = (&pair[0].0, &pair[0].1);
        let (b_name, b) = (&pair[1].0, &pair[1].1);
        let [_, fan_out] = w.dims2()?;
        if w_name != &format!("w{layer}") || b_name != &format!("b{layer}") || b.shape() != [fan_out] {
            return Err(Error::invalid(format!("unexpected layer entry {w_name:?}/{b_name:?}")));
        }
        if let Some(&(prev_w, _)) = layers.last() {
            if prev_w.shape()[1] != w.shape()[0] {
                return Err(Error::Shape {
                    op: "mlp layer chain",
                    lhs: prev_w.shape().to_vec(),
                    rhs: w.shape().to_vec(),
                });
            }
        }
        layers.push((w, b));
    }
    Ok(layers)
}

/// Gradient-free forward pass; returns logits `[n, output_dim]`.
pub fn forward_values(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let layers = layer_tensors(params)?;
    let [n, d] = x.dims2()?;
    if d != layers[0].0.shape()[0] {
        return Err(Error::Shape { op: "mlp input", lhs: vec![n, d], rhs: layers[0].0.shape().to_vec() });
    }
    let mut h = x.clone();
    let last = layers.len() - 1;
    for (i, (w, b)) in layers.into_iter().enumerate() {
        let [rows, k] = h.dims2()?;
        let cols = w.shape()[1];
        let mut data = autodiff::matmul(rows, k, cols, h.data(), w.data());
        for r in 0..rows {
            for j in 0..cols {
                data[r * cols + j] += b.data()[j];
                if i < last && data[r * cols + j] <= 0.0 {
                    data[r * cols + j] = 0.0;
                }
            }
        }
        h = Tensor::from_vec(vec![rows, cols], data)?;
    }
    Ok(h)
}

/// Parameter leaves staged on a tape, ready for a forward pass.
pub struct Staged {
    ids: Vec<(String, TensorId)>,
}

impl Staged {
    /// After a backward pass, collects the parameter gradients in parameter
    /// order. Entries the loss never touched come back as zeros.
    pub fn grads(&self, tape: &Tape) -> ModelParams {
        let entries = self
            .ids
            .iter()
            .map(|(name, id)| {
                let grad = tape
                    .grad_tensor(*id)
                    .unwrap_or_else(|| Tensor::zeros(tape.value(*id).shape().to_vec()));
                (name.clone(), grad)
            })
            .collect();
        ModelParams::new(entries).expect("staged names are unique")
    }
}

/// Copies every parameter onto `tape` as a leaf. With `requires_grad` the
/// subsequent backward will produce gradients for them; without, they are
/// constants (the mode attack loops use).
pub fn stage_params(tape: &mut Tape, params: &ModelParams, requires_grad: bool) -> Staged {
    let ids = params
        .entries()
        .iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone().with_requires_grad(requires_grad))))
        .collect();
    Staged { ids }
}

/// Taped forward pass over staged parameters; returns the logits id.
pub fn forward_staged(tape: &mut Tape, staged: &Staged, x: TensorId) -> Result<TensorId> {
    if staged.ids.is_empty() || staged.ids.len() % 2 != 0 {
        return Err(Error::invalid("staged parameters do not form layer pairs"));
    }
    let mut h = x;
    let layer_count = staged.ids.len() / 2;
    for layer in 0..layer_count {
        let w = staged.ids[2 * layer].1;
        let b = staged.ids[2 * layer + 1].1;
        let z = tape.matmul(h, w)?;
        let z = tape.bias_add(z, b)?;
        h = if layer + 1 < layer_count { tape.relu(z)? } else { z };
    }
    Ok(h)
}

/// Mean cross-entropy of `logits` against integer labels, on the tape.
///
/// Returns `(mean_loss, per_sample_losses)`; the per-sample node holds each
/// row's `-log softmax(logits)[label]`, whose mean is the loss.
pub fn cross_entropy(tape: &mut Tape, logits: TensorId, labels: &[usize]) -> Result<(TensorId, TensorId)> {
    let [n, _] = tape.value(logits).dims2()?;
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {} logit rows", labels.len(), n)));
    }
    let log_probs = tape.log_softmax(logits)?;
    let picked = tape.select_class(log_probs, labels)?;
    let per_sample = tape.scale(picked, -1.0)?;
    let mean = tape.mean(per_sample)?;
    Ok((mean, per_sample))
}

/// Gradient-free mean and per-sample cross-entropy; same arithmetic as the
/// taped version, value for value.
pub fn cross_entropy_values(logits: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let [n, c] = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {} logit rows", labels.len(), n)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    let per_sample = autodiff::cross_entropy_rows(n, c, logits.data(), labels);
    let mean = per_sample.iter().sum::<f64>() / n as f64;
    Ok((mean, per_sample))
}

/// Index of the row-wise maximum; ties resolve to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Result<Vec<usize>> {
    let [n, c] = logits.dims2()?;
    Ok((0..n)
        .map(|r| {
            let row = &logits.data()[r * c..(r + 1) * c];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Fraction of rows whose argmax logit matches the label.
pub fn accuracy(params: &ModelParams, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let predictions = argmax_rows(&forward_values(params, x)?)?;
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Layout of the strategy network's output: one softmax slice per attack
/// parameter, concatenated. `sizes[m]` is how many options head `m` offers.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyHeads {
    sizes: Vec<usize>,
}

impl StrategyHeads {
    /// Head sizes must be >= 1; a singleton head is a degenerate but legal
    /// softmax that always selects its only option.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&k| k == 0) {
            return Err(Error::invalid("strategy heads need at least one option each"));
        }
        Ok(StrategyHeads { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Total output width the strategy network must produce.
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Column offset of each head within the concatenated output.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sizes.len());
        let mut acc = 0;
        for &k in &self.sizes {
            offsets.push(acc);
            acc += k;
        }
        offsets
    }
}

/// Runs the strategy network and softmaxes each head slice, returning one
/// `[n, K_m]` probability matrix per head. Probabilities are strictly
/// positive and each row sums to 1 up to rounding.
pub fn strategy_forward(theta: &ModelParams, x: &Tensor, heads: &StrategyHeads) -> Result<Vec<Tensor>> {
    let logits = forward_values(theta, x)?;
    let [n, width] = logits.dims2()?;
    if width != heads.total() {
        return Err(Error::Shape { op: "strategy heads", lhs: vec![n, width], rhs: vec![n, heads.total()] });
    }
    let mut out = Vec::with_capacity(heads.count());
    for (&k, &offset) in heads.sizes().iter().zip(&heads.offsets()) {
        let mut slice = Vec::with_capacity(n * k);
        for r in 0..n {
            slice.extend_from_slice(&logits.data()[r * width + offset..r * width + offset + k]);
        }
        let probs = autodiff::softmax_rows(n, k, &slice);
        out.push(Tensor::from_vec(vec![n, k], probs)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_mlp(seed: u64, spec: &MlpSpec) -> ModelParams {
        spec.init_params(&mut ChaCha12Rng::seed_from_u64(seed), false)
    }

    fn random_batch(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Tensor::from_vec(vec![n, d], (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_seeded_bounded_and_shaped() {
        let spec = MlpSpec::new(3, vec![8, 8], 2).unwrap();
        let a = random_mlp(5, &spec);
        let b = random_mlp(5, &spec);
        assert_eq!(a, b, "same seed must give identical parameters");
        assert_ne!(a, random_mlp(6, &spec));

        let dims = spec.dims();
        for (layer, chunk) in a.entries().chunks(2).enumerate() {
            let limit = (6.0 / dims[layer] as f64).sqrt();
            assert!(chunk[0].1.data().iter().all(|w| w.abs() <= limit), "layer {layer} exceeds He bound");
            assert!(chunk[1].1.data().iter().all(|&b| b == 0.0), "biases start at zero");
        }
        assert_eq!(MlpSpec::infer(&a).unwrap(), spec);
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let spec = MlpSpec::new(4, vec![6, 5], 3).unwrap();
        let params = random_mlp(11, &spec);
        let x = random_batch(12, 7, 4);
        let got = forward_values(&params, &x).unwrap();

        // Naive re-evaluation, written without the shared kernels.
        let mut h: Vec<Vec<f64>> = (0..7).map(|i| x.data()[i * 4..(i + 1) * 4].to_vec()).collect();
        let layers: Vec<(&Tensor, &Tensor)> =
            params.entries().chunks(2).map(|c| (&c[0].1, &c[1].1)).collect();
        for (li, (w, b)) in layers.iter().enumerate() {
            let [fan_in, fan_out] = w.dims2().unwrap();
            h = h
                .iter()
                .map(|row| {
                    (0..fan_out)
                        .map(|j| {
                            let mut s = 0.0;
                            for p in 0..fan_in {
                                s += row[p] * w.data()[p * fan_out + j];
                            }
                            s += b.data()[j];
                            if li < layers.len() - 1 && s <= 0.0 {
                                0.0
                            } else {
                                s
                            }
                        })
                        .collect()
                })
                .collect();
        }
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(got.data()[i * 3 + j], v, "logit ({i},{j}) differs from straight-line oracle");
            }
        }
    }

    #[test]
    fn taped_forward_equals_value_forward() {
        let spec = MlpSpec::new(3, vec![9], 4).unwrap();
        let params = random_mlp(21, &spec);
        let x = random_batch(22, 5, 3);
        let direct = forward_values(&params, &x).unwrap();

        let mut tape = Tape::new();
        let staged = stage_params(&mut tape, &params, true);
        let x_id = tape.constant(x);
        let logits = forward_staged(&mut tape, &staged, x_id).unwrap();
        assert_eq!(tape.value(logits).data(), direct.data(), "both forward paths share kernels");
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let spec = MlpSpec::new(3, vec![6], 3).unwrap();
        let params = random_mlp(31, &spec);
        let x = random_batch(32, 6, 3);
        let labels = vec![0, 2, 1, 1, 0, 2];

        let loss_at = |p: &ModelParams| -> f64 {
            cross_entropy_values(&forward_values(p, &x).unwrap(), &labels).unwrap().0
        };

        let mut tape = Tape::new();
        let staged = stage_params(&mut tape, &params, true);
        let x_id = tape.constant(x.clone());
        let logits = forward_staged(&mut tape, &staged, x_id).unwrap();
        let (loss, per_sample) = cross_entropy(&mut tape, logits, &labels).unwrap();
        tape.backward(loss).unwrap();
        let grads = staged.grads(&tape);

        // Taped loss agrees with the gradient-free path exactly.
        assert_eq!(tape.value(loss).item().unwrap(), loss_at(&params));
        let (_, per_vals) = cross_entropy_values(&forward_values(&params, &x).unwrap(), &labels).unwrap();
        assert_eq!(tape.value(per_sample).data(), &per_vals[..]);

        let h = 1e-5;
        let flat = params.flatten();
        let flat_grad = grads.flatten();
        for i in 0..flat.len() {
            let mut probe = params.clone();
            let mut values = flat.clone();
            values[i] += h;
            probe.set_from_flat(&values).unwrap();
            let up = loss_at(&probe);
            values[i] = flat[i] - h;
            probe.set_from_flat(&values).unwrap();
            let down = loss_at(&probe);
            let fd = (up - down) / (2.0 * h);
            let rel = (flat_grad[i] - fd).abs() / f64::max(1.0, fd.abs());
            assert!(rel < 1e-6, "parameter {i}: autodiff {} vs fd {fd}", flat_grad[i]);
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_ln_c() {
        let logits = Tensor::zeros(vec![4, 5]);
        let (mean, per) = cross_entropy_values(&logits, &[0, 1, 2, 4]).unwrap();
        assert!((mean - (5.0f64).ln()).abs() <= 1e-12);
        assert!(per.iter().all(|v| (v - (5.0f64).ln()).abs() <= 1e-12));
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let logits = Tensor::zeros(vec![2, 3]);
        assert!(cross_entropy_values(&logits, &[0, 3]).is_err(), "label 3 of 3 classes");
        assert!(cross_entropy_values(&logits, &[0]).is_err(), "label count mismatch");
        let mut tape = Tape::new();
        let id = tape.constant(Tensor::zeros(vec![2, 3]));
        assert!(cross_entropy(&mut tape, id, &[0, 3]).is_err());
    }

    #[test]
    fn axpy_update_is_exact_for_zero_step() {
        let spec = MlpSpec::new(2, vec![4], 2).unwrap();
        let params = random_mlp(41, &spec);
        let mut grads = params.zeros_like();
        grads.axpy(1.0, &params).unwrap(); // arbitrary non-zero gradients

        let same = axpy_update(&params, &grads, 0.0).unwrap();
        for ((_, a), (_, b)) in params.entries().iter().zip(same.entries()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "c = 0 must copy bits exactly");
            }
        }

        let stepped = axpy_update(&params, &grads, -0.5).unwrap();
        for ((_, p), (_, s)) in params.entries().iter().zip(stepped.entries()) {
            for (x, y) in p.data().iter().zip(s.data()) {
                assert_eq!(*y, x - 0.5 * x, "p - 0.5p");
            }
        }
        let other = random_mlp(1, &MlpSpec::new(2, vec![5], 2).unwrap());
        assert!(axpy_update(&params, &other, 1.0).is_err(), "shape mismatch must fail");
    }

    #[test]
    fn flatten_round_trips() {
        let spec = MlpSpec::new(3, vec![4], 2).unwrap();
        let params = random_mlp(51, &spec);
        let flat = params.flatten();
        assert_eq!(flat.len(), params.numel());
        let mut rebuilt = params.zeros_like();
        rebuilt.set_from_flat(&flat).unwrap();
        assert_eq!(rebuilt, params);
        assert!(rebuilt.set_from_flat(&flat[1..]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MlpSpec::new(5, vec![7, 3], 4).unwrap();
        let params = random_mlp(61, &spec);

        let first = dir.path().join("a.json");
        let second = dir.path().join("b.json");
        params.save(&first).unwrap();
        let loaded = ModelParams::load(&first).unwrap();
        assert_eq!(loaded, params, "values round-trip exactly");
        loaded.save(&second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap(),
            "save -> load -> save reproduces the file byte for byte"
        );

        std::fs::write(&first, "{\"format\":\"other\",\"entries\":[]}").unwrap();
        assert!(ModelParams::load(&first).is_err(), "format tag is checked");
    }

    #[test]
    fn strategy_heads_validate_and_split() {
        assert!(StrategyHeads::new(vec![]).is_err());
        assert!(StrategyHeads::new(vec![3, 0]).is_err());
        let heads = StrategyHeads::new(vec![3, 2, 4]).unwrap();
        assert_eq!(heads.total(), 9);
        assert_eq!(heads.offsets(), vec![0, 3, 5]);

        let spec = MlpSpec::new(2, vec![6], heads.total()).unwrap();
        let theta = random_mlp(71, &spec);
        let x = random_batch(72, 8, 2);
        let probs = strategy_forward(&theta, &x, &heads).unwrap();
        assert_eq!(probs.len(), 3);
        for (m, p) in probs.iter().enumerate() {
            assert_eq!(p.shape(), &[8, heads.sizes()[m]]);
            for r in 0..8 {
                let row = &p.data()[r * heads.sizes()[m]..(r + 1) * heads.sizes()[m]];
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "head {m} row {r} sums to {sum}");
                assert!(row.iter().all(|&v| v > 0.0), "probabilities stay positive");
            }
        }
    }

    #[test]
    fn zero_final_layer_gives_exactly_uniform_heads() {
        let heads = StrategyHeads::new(vec![4, 2]).unwrap();
        let spec = MlpSpec::new(2, vec![5], heads.total()).unwrap();
        let theta = spec.init_params(&mut ChaCha12Rng::seed_from_u64(81), true);
        let probs = strategy_forward(&theta, &random_batch(82, 3, 2), &heads).unwrap();
        for (m, p) in probs.iter().enumerate() {
            let uniform = 1.0 / heads.sizes()[m] as f64;
            assert!(p.data().iter().all(|&v| v == uniform), "head {m} must start exactly uniform");
        }
    }

    #[test]
    fn untrained_network_predicts_at_chance_level() {
        // Heavily overlapping blobs make features nearly label-independent,
        // so a random net's accuracy concentrates at 1/C binomially.
        let ds = crate::data::make_gaussian_blobs(800, 4, 3, 0.2, 17).unwrap();
        let spec = MlpSpec::new(3, vec![64, 64], 4).unwrap();
        let params = random_mlp(91, &spec);
        let acc = accuracy(&params, &ds.features, &ds.labels).unwrap();
        let sigma = (0.25 * 0.75 / 800.0f64).sqrt();
        assert!(
            (acc - 0.25).abs() <= 3.0 * sigma + 0.05,
            "untrained accuracy {acc} strays from chance 0.25"
        );
    }
}
