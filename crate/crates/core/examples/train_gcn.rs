//! Train a two-layer GCN on a synthetic two-block graph at full precision
//! and at uniform 8 and 4 bits, then score each in every applicable mode.
use mixq::graph::{generate_synthetic, Split, SyntheticSpec};
use mixq::model::{Mode, Model, ModelConfig, PreparedGraph, Scheme};
use mixq::train::{evaluate, train, TrainConfig};

fn main() -> mixq::Result<()> {
    let graph = PreparedGraph::new(&generate_synthetic(&SyntheticSpec::sbm(200, 7))?)?;
    let config = ModelConfig::gcn(graph.features.cols(), 16, 2, 2);
    let tc = TrainConfig {
        epochs: 100,
        warmup_epochs: 20,
        seed: 7,
        ..TrainConfig::default()
    };

    let mut fp = Model::build(&config, Scheme::FullPrecision, graph.num_nodes(), 7)?;
    let log = train(&mut fp, &graph, &tc)?;
    println!(
        "fp32   loss {:.4} -> {:.4}  test acc {:.3}",
        log[0].task_loss,
        log.last().unwrap().task_loss,
        evaluate(&fp, &graph, Mode::Fp, Split::Test)?
    );

    for bits in [8, 4] {
        let mut q = Model::build(&config, Scheme::Uniform { bits }, graph.num_nodes(), 7)?;
        train(&mut q, &graph, &tc)?;
        let fake = evaluate(&q, &graph, Mode::FakeQuant, Split::Test)?;
        let int = evaluate(&q, &graph, Mode::Integer, Split::Test)?;
        println!("int{bits}   fake-quant {fake:.3}  integer {int:.3}");
    }
    Ok(())
}
