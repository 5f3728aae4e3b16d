//! Classify small graphs with GIN layers and max pooling, at full precision
//! and at 8 bits through the integer path.
use mixq::graph::{generate_graph_collection, Split};
use mixq::model::{Mode, Model, ModelConfig, PreparedGraph, Scheme};
use mixq::train::{evaluate, train, TrainConfig};

fn main() -> mixq::Result<()> {
    let ds = generate_graph_collection(120, 8, 3)?;
    let graph = PreparedGraph::new(&ds)?;
    println!(
        "{} graphs, {} nodes",
        ds.graphs.as_ref().unwrap().num_graphs,
        ds.num_nodes()
    );
    let config = ModelConfig::gin_graph(8, 16, ds.num_classes, 2);
    let tc = TrainConfig {
        epochs: 150,
        warmup_epochs: 50,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut fp = Model::build(&config, Scheme::FullPrecision, graph.num_nodes(), 3)?;
    train(&mut fp, &graph, &tc)?;
    println!(
        "fp32 test acc {:.3}",
        evaluate(&fp, &graph, Mode::Fp, Split::Test)?
    );

    let mut q = Model::build(&config, Scheme::Uniform { bits: 8 }, graph.num_nodes(), 3)?;
    train(&mut q, &graph, &tc)?;
    println!(
        "int8 test acc {:.3}",
        evaluate(&q, &graph, Mode::Integer, Split::Test)?
    );
    Ok(())
}
