//! Tour of the reverse-mode tape: build a small expression, pull gradients,
//! and check one of them against central finite differences.
//!
//!     cargo run --release -p lasforge --example autodiff_basics

use lasforge::{Result, Tape, Tensor};

fn main() -> Result<()> {
    // f(a, b) = mean(relu(a matmul b)) on a 2x3 * 3x2 product.
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::from_vec(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75])?.with_requires_grad(true));
    let b = tape.leaf(Tensor::from_vec(vec![3, 2], vec![1.0, 2.0, -0.5, 0.25, 0.75, -1.25])?.with_requires_grad(true));
    let prod = tape.matmul(a, b)?;
    let hidden = tape.relu(prod)?;
    let loss = tape.mean(hidden)?;
    tape.backward(loss)?;

    println!("f(a, b)        = {:.6}", tape.value(loss).item()?);
    println!("df/da          = {:?}", tape.grad(a).unwrap());
    println!("df/db          = {:?}", tape.grad(b).unwrap());

    // Central finite differences on a[0]: rebuild the expression at a +- h.
    let h = 1e-5;
    let f_at = |a0: f64| -> Result<f64> {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_vec(vec![2, 3], vec![a0, -1.0, 2.0, 1.5, 0.25, -0.75])?);
        let b = t.leaf(Tensor::from_vec(vec![3, 2], vec![1.0, 2.0, -0.5, 0.25, 0.75, -1.25])?);
        let prod = t.matmul(a, b)?;
        let hidden = t.relu(prod)?;
        let loss = t.mean(hidden)?;
        t.value(loss).item()
    };
    let numeric = (f_at(0.5 + h)? - f_at(0.5 - h)?) / (2.0 * h);
    let analytic = tape.grad(a).unwrap()[0];
    println!("df/da[0]       = {analytic:.10} (tape)");
    println!("               = {numeric:.10} (finite differences)");
    assert!((analytic - numeric).abs() <= 1e-6 * analytic.abs().max(1.0));

    // Gradients with respect to an input flow the same way; this is what
    // the attack engine uses to find the loss-increasing direction.
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1, 2], vec![0.3, 0.8])?.with_requires_grad(true));
    let w = tape.constant(Tensor::from_vec(vec![2, 2], vec![1.0, -2.0, 0.5, 1.5])?);
    let logits = tape.matmul(x, w)?;
    let logp = tape.log_softmax(logits)?;
    let picked = tape.select_class(logp, &[0])?;
    let nll = tape.scale(picked, -1.0)?;
    let loss = tape.mean(nll)?;
    let g = tape.input_gradient(loss, x)?;
    println!("dCE/dx         = {:?}", g.data());
    println!("ascent signs   = {:?}", g.data().iter().map(|v| v.signum()).collect::<Vec<_>>());
    Ok(())
}
