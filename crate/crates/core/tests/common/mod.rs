#![allow(dead_code)]

pub mod gradcheck;

use mixq::graph::CsrMatrix;
use mixq::qmp::{
    quantize_adjacency, quantize_features, quantized_aggregate, AggregateOutput,
    QuantizedAggregation,
};
use mixq::quant::{minmax_params, QuantParams, SliceLayout};
use mixq::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default)]
pub struct FusionStats {
    pub instances: usize,
    pub entries: usize,
    pub ties: usize,
    pub code_mismatches: usize,
    /// max |dequantized integer output - fake output| / max(S_y) over non-tie entries
    pub worst_ratio: f64,
}

fn random_params(rng: &mut ChaCha8Rng, base: &QuantParams) -> QuantParams {
    let (a, b) = base.range();
    let scale = base
        .scale
        .iter()
        .map(|s| s * rng.random_range(0.5..1.5))
        .collect();
    let zero = base
        .zero_point
        .iter()
        .map(|&z| (z + rng.random_range(-2.0..2.0)).clamp(a as f64, b as f64))
        .collect();
    QuantParams::new(scale, zero, base.bits, base.signed).unwrap()
}

/// Dense oracle of the simulated aggregation: dequantized operands,
/// plain triple loop.
fn dense_fake_product(
    a: &CsrMatrix<f64>,
    qa: &CsrMatrix<i64>,
    pa: &QuantParams,
    x_deq: &Tensor,
) -> Tensor {
    let (n, f) = (a.n_rows(), x_deq.cols());
    let mut dense_a = vec![0.0; n * a.n_cols()];
    for (i, j, q) in qa.to_triplets() {
        dense_a[i * a.n_cols() + j] = (q - pa.zero_at(i)) as f64 * pa.scale_at(i);
    }
    let mut y = vec![0.0; n * f];
    for i in 0..n {
        for k in 0..a.n_cols() {
            let av = dense_a[i * a.n_cols() + k];
            if av == 0.0 && a.get(i, k).is_none() {
                continue;
            }
            for j in 0..f {
                y[i * f + j] += av * x_deq.get(k, j);
            }
        }
    }
    Tensor::new(vec![n, f], y).unwrap()
}

/// Randomized check of the integer fusion against the simulated path.
pub fn fusion_equivalence(instances: usize, seed: u64) -> FusionStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FusionStats::default();
    let bit_choices = [2u32, 4, 8];
    for _ in 0..instances {
        let n = rng.random_range(2..=64);
        let f = rng.random_range(1..=16);
        let density = rng.random_range(0.05..0.5);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.random_bool(density) {
                    trip.push((i, j, rng.random_range(0.01..1.0)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trip).unwrap();
        let x = Tensor::new(
            vec![n, f],
            (0..n * f).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let per_slice = rng.random_bool(0.5);
        let ba = bit_choices[rng.random_range(0..3)];
        let bx = bit_choices[rng.random_range(0..3)];
        let by = bit_choices[rng.random_range(0..3)];

        let (la, sa) = if per_slice {
            (SliceLayout::Entries(a.entry_rows().into()), n)
        } else {
            (SliceLayout::Whole, 1)
        };
        let (lx, sx) = if per_slice {
            (SliceLayout::Cols { cols: f }, f)
        } else {
            (SliceLayout::Whole, 1)
        };
        let vals: Vec<f64> = if a.nnz() == 0 {
            vec![0.0]
        } else {
            a.values().to_vec()
        };
        let la_cal = if a.nnz() == 0 {
            SliceLayout::Whole
        } else {
            la.clone()
        };
        let pa = random_params(
            &mut rng,
            &minmax_params(&vals, &la_cal, sa, ba, false, false).unwrap(),
        );
        let px = random_params(
            &mut rng,
            &minmax_params(x.data(), &lx, sx, bx, true, false).unwrap(),
        );

        let qa = quantize_adjacency(&a, &pa).unwrap();
        let qx = quantize_features(&x, &px).unwrap();
        let mut x_deq = x.clone();
        for i in 0..n {
            for j in 0..f {
                x_deq.data_mut()[i * f + j] =
                    (qx.get(i, j) - px.zero_at(j)) as f64 * px.scale_at(j);
            }
        }
        let y = dense_fake_product(&a, &qa, &pa, &x_deq);
        let ly = if per_slice {
            SliceLayout::Cols { cols: f }
        } else {
            SliceLayout::Whole
        };
        let py = random_params(
            &mut rng,
            &minmax_params(y.data(), &ly, sx, by, true, false).unwrap(),
        );

        let agg = QuantizedAggregation::new(qa, qx, pa, px, Some(py.clone())).unwrap();
        let AggregateOutput::Quantized(out) = quantized_aggregate(&agg).unwrap() else {
            panic!("expected integer output");
        };
        let (lo, hi) = py.range();
        let max_sy = py.max_scale();
        for i in 0..n {
            for j in 0..f {
                stats.entries += 1;
                let u = y.get(i, j) / py.scale_at(j);
                if ((u - u.floor()) - 0.5).abs() < 1e-9 * u.abs().max(1.0) {
                    stats.ties += 1;
                    continue;
                }
                let zy = py.zero_at(j);
                let code = ((u.round_ties_even() as i64) + zy).clamp(lo, hi);
                if code != out.get(i, j) {
                    stats.code_mismatches += 1;
                }
                let fake = (code - zy) as f64 * py.scale_at(j);
                let got = (out.get(i, j) - zy) as f64 * py.scale_at(j);
                stats.worst_ratio = stats.worst_ratio.max((got - fake).abs() / max_sy);
            }
        }
        stats.instances += 1;
    }
    stats
}
