//! Central finite-difference checks for every differentiable tape op.

use std::sync::Arc;

use mixq::graph::CsrMatrix;
use mixq::quant::{fake_quantize, QuantizerSpec, ScaleGrad, SliceLayout};
use mixq::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// `|a - fd| / max(|a|, |fd|)`, with differences below `1e-8` (the
/// rounding noise of a step-1e-5 quotient) counted as exact.
pub fn rel_err(a: f64, fd: f64) -> f64 {
    let d = (a - fd).abs();
    if d <= 1e-8 {
        0.0
    } else {
        d / a.abs().max(fd.abs())
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Worst relative error of `d/d inputs sum(w * f(inputs))` against
/// central differences, for a random weighting `w`.
pub fn check<F>(rng: &mut ChaCha8Rng, inputs: &[Tensor], f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let shape = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).shape()
    };
    let w = random(rng, &shape, -1.0, 1.0);
    let eval = |ins: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars)
            .value()
            .data()
            .iter()
            .zip(w.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&tape, &vars);
    let loss = out.mul(tape.constant(w.clone())).unwrap().sum();
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for e in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= STEP;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[e], fd));
        }
    }
    worst
}

/// Inputs of `x` kept at least `margin` away from zero, so kinks are not
/// straddled by the finite-difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor {
    let mut t = random(rng, shape, -2.0, 2.0);
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
    t
}

/// `(op, worst relative error)` for every differentiable op.
pub fn all_ops(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();
    let a = random(r, &[3, 4], -2.0, 2.0);
    let b = random(r, &[3, 4], -2.0, 2.0);
    let row = random(r, &[4], -2.0, 2.0);
    out.push((
        "add",
        check(r, &[a.clone(), b.clone()], |_, v| v[0].add(v[1]).unwrap()),
    ));
    out.push((
        "add_broadcast",
        check(r, &[a.clone(), row.clone()], |_, v| v[0].add(v[1]).unwrap()),
    ));
    out.push((
        "sub",
        check(r, &[a.clone(), b.clone()], |_, v| v[0].sub(v[1]).unwrap()),
    ));
    out.push((
        "mul",
        check(r, &[a.clone(), b.clone()], |_, v| v[0].mul(v[1]).unwrap()),
    ));
    out.push((
        "mul_broadcast",
        check(r, &[a.clone(), row.clone()], |_, v| v[0].mul(v[1]).unwrap()),
    ));
    let kinked = away_from_zero(r, &[3, 4], 1e-3);
    out.push(("relu", check(r, &[kinked], |_, v| v[0].relu())));
    out.push(("exp", check(r, std::slice::from_ref(&a), |_, v| v[0].exp())));
    let pos = random(r, &[3, 4], 0.5, 2.0);
    out.push(("log", check(r, &[pos], |_, v| v[0].log().unwrap())));
    out.push((
        "scale",
        check(r, std::slice::from_ref(&a), |_, v| v[0].scale(-1.7)),
    ));
    out.push((
        "add_scalar",
        check(r, std::slice::from_ref(&a), |_, v| v[0].add_scalar(0.3)),
    ));
    out.push(("neg", check(r, std::slice::from_ref(&a), |_, v| v[0].neg())));
    let m = random(r, &[4, 5], -2.0, 2.0);
    out.push((
        "matmul",
        check(r, &[a.clone(), m], |_, v| v[0].matmul(v[1]).unwrap()),
    ));
    let pattern = Arc::new(
        CsrMatrix::from_triplets(
            3,
            4,
            [
                (0, 1, 1.0),
                (0, 3, 1.0),
                (1, 0, 1.0),
                (2, 2, 1.0),
                (2, 3, 1.0),
            ],
        )
        .unwrap(),
    );
    let vals = random(r, &[5], -2.0, 2.0);
    let x = random(r, &[4, 2], -2.0, 2.0);
    out.push((
        "spmm",
        check(r, &[vals, x], |_, v| v[0].spmm(&pattern, v[1]).unwrap()),
    ));
    out.push(("sum", check(r, std::slice::from_ref(&a), |_, v| v[0].sum())));
    out.push((
        "mean",
        check(r, std::slice::from_ref(&a), |_, v| v[0].mean()),
    ));
    out.push((
        "softmax",
        check(r, std::slice::from_ref(&row), |_, v| v[0].softmax()),
    ));
    out.push((
        "index",
        check(r, std::slice::from_ref(&row), |_, v| v[0].index(2).unwrap()),
    ));
    let labels = [0usize, 3, 1];
    let mask = [true, false, true];
    out.push((
        "cross_entropy",
        check(r, std::slice::from_ref(&a), |_, v| {
            v[0].softmax_cross_entropy(&labels, &mask).unwrap()
        }),
    ));
    out.push((
        "group_max",
        check(r, std::slice::from_ref(&a), |_, v| {
            v[0].group_max(&[0, 1, 0], 2).unwrap()
        }),
    ));

    // fake quantization: scale gradient under the exact rule, away from
    // rounding ties
    let mut spec = QuantizerSpec::new(4, true);
    spec.grad_scale = false;
    spec.scale_grad = ScaleGrad::Exact;
    let s: f64 = 0.4;
    let xs: Vec<f64> = (0..12)
        .map(|_| loop {
            let v = r.random_range(-3.0..3.0);
            let u = v / s;
            if (u - u.floor() - 0.5).abs() > 0.05 {
                break v;
            }
        })
        .collect();
    let xt = Tensor::vector(xs);
    let ls = Tensor::vector(vec![s.ln()]);
    let z = Tensor::vector(vec![0.4]);
    out.push((
        "fake_quantize_scale",
        check(r, &[ls], |tape, v| {
            let x = tape.constant(xt.clone());
            let z = tape.constant(z.clone());
            fake_quantize(x, v[0], z, &SliceLayout::Whole, &spec).unwrap()
        }),
    ));
    out
}
