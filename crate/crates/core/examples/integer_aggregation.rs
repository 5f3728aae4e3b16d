//! Aggregate neighbor features with integer arithmetic only and compare to
//! the simulated (fake-quantized, real-valued) product.
use mixq::graph::CsrMatrix;
use mixq::qmp::{
    fake_aggregate_values, quantized_aggregate, AggregateOutput, QuantizedAggregation,
};
use mixq::quant::{minmax_params, SliceLayout};
use mixq::tensor::Tensor;

fn main() -> mixq::Result<()> {
    // path 0-1-2-3 with self loops, row-normalized
    let mut entries = Vec::new();
    for i in 0..4usize {
        let nbrs: Vec<usize> = (i.saturating_sub(1)..=(i + 1).min(3)).collect();
        let w = 1.0 / nbrs.len() as f64;
        entries.extend(nbrs.into_iter().map(|j| (i, j, w)));
    }
    let a = CsrMatrix::from_triplets(4, 4, entries)?;
    let x = Tensor::from_rows(&[
        vec![1.0, -0.5],
        vec![0.25, 0.75],
        vec![-1.0, 0.0],
        vec![0.5, 0.5],
    ])?;

    let pa = minmax_params(a.values(), &SliceLayout::Whole, 1, 8, false, false)?;
    let px = minmax_params(x.data(), &SliceLayout::Cols { cols: 2 }, 2, 8, true, false)?;
    let py = minmax_params(a.spmm(&x)?.data(), &SliceLayout::Whole, 1, 8, true, false)?;

    let agg = QuantizedAggregation::from_real(&a, &x, pa.clone(), px.clone(), Some(py.clone()))?;
    println!("adjacency codes {:?}", agg.qa.values());
    let out = quantized_aggregate(&agg)?;
    if let AggregateOutput::Quantized(q) = &out {
        println!("output codes    {:?}", q.data);
    }
    let (_, simulated) = fake_aggregate_values(&a, &x, &pa, &px, Some(&py))?;
    let integer = out.to_real(Some(&py))?;
    println!("integer   {:?}", integer.data());
    println!("simulated {:?}", simulated.data());
    println!("max |diff| = {:.2e}", integer.max_abs_diff(&simulated));

    // identity output keeps the rescaled product real
    let agg = QuantizedAggregation::from_real(&a, &x, pa, px, None)?;
    println!(
        "identity  {:?}",
        quantized_aggregate(&agg)?.to_real(None)?.data()
    );
    Ok(())
}
