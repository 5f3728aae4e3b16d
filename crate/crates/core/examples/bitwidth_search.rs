//! Sweep the efficiency weight and watch the selected bit-widths move.
use mixq::bitops::{report, GraphDims};
use mixq::graph::{generate_synthetic, Split, SyntheticSpec};
use mixq::model::{Mode, ModelConfig, PreparedGraph};
use mixq::train::{evaluate, search_and_retrain, SearchConfig, TrainConfig};

fn main() -> mixq::Result<()> {
    let graph = PreparedGraph::new(&generate_synthetic(&SyntheticSpec::sbm(100, 0))?)?;
    let config = ModelConfig::gcn(graph.features.cols(), 16, 2, 2);
    for lambda in [-1e-8, 0.01, 0.1, 1.0] {
        let tc = TrainConfig {
            epochs: 100,
            warmup_epochs: 20,
            ..TrainConfig::default()
        };
        let mut sc = SearchConfig::new(vec![2, 4, 8], lambda, tc);
        sc.alpha_lr = Some(0.05);
        let out = search_and_retrain(&graph, &config, &sc, 50)?;
        let cost = report(&out.model, &GraphDims::of(&graph))?;
        let acc = evaluate(&out.model, &graph, Mode::Integer, Split::Test)?;
        let bits: Vec<u32> = out.assignment.entries.iter().map(|e| e.bits).collect();
        println!(
            "lambda {lambda:>6}: avg bits {:.2}  acc {acc:.3}  widths {bits:?}",
            cost.average_bits
        );
    }
    Ok(())
}
