//! Per-function cost of a Cora-sized GCN at 32, 8 and mixed precision.
use mixq::bitops::{report, report_with_bits, GraphDims};
use mixq::model::{Model, ModelConfig, Scheme};

fn main() -> mixq::Result<()> {
    let dims = GraphDims::cora();
    let config = ModelConfig::gcn(dims.features, 64, 7, 2);
    let fp = Model::build(&config, Scheme::FullPrecision, dims.nodes, 0)?;
    let int8 = Model::build(&config, Scheme::Uniform { bits: 8 }, dims.nodes, 0)?;

    let r = report(&fp, &dims)?;
    print!("{}", r.to_csv());
    println!("fp32: {:.4} GBitOPs", r.gbitops());
    println!("int8: {:.4} GBitOPs", report(&int8, &dims)?.gbitops());

    // 4-bit everywhere except the first layer's inputs and weights
    let bits: Vec<u32> = fp
        .components
        .iter()
        .map(|c| {
            if c.id.starts_with("l0.input") || c.id.starts_with("l0.weight") {
                8
            } else {
                4
            }
        })
        .collect();
    let mixed = report_with_bits(&fp, &dims, &bits)?;
    println!(
        "mixed: {:.4} GBitOPs, {:.2} average bits",
        mixed.gbitops(),
        mixed.average_bits
    );
    Ok(())
}
