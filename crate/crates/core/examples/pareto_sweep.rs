//! Run a lambda x seed sweep through the CLI layer on a noisy two-block
//! graph and print the accuracy / bit-width frontier.
use mixq::cli::{cmd_report, sweep, DataSource, RunConfig};
use mixq::graph::{FeatureMode, SyntheticKind, SyntheticSpec};

fn main() -> mixq::Result<()> {
    let out = std::env::temp_dir().join(format!("mixq-pareto-{}", std::process::id()));
    let spec = SyntheticSpec {
        kind: SyntheticKind::TwoBlockSbm {
            p_in: 0.06,
            p_out: 0.03,
        },
        feature_mode: FeatureMode::ClassMeans {
            signal: 0.3,
            noise: 1.0,
        },
        ..SyntheticSpec::sbm(300, 5)
    };
    let cfg = RunConfig {
        data: DataSource::Synthetic(spec),
        search_epochs: 60,
        retrain_epochs: 30,
        ..RunConfig::default()
    };
    sweep(&cfg, &[-1e-8, 0.001, 0.01, 0.1, 1.0], &[0, 1], 4, &out)?;
    let (rows, front) = cmd_report(&out, &out)?;
    for r in &rows {
        println!(
            "{:<28} bits {:.2}  acc {:.3}",
            r.run, r.avg_bits, r.accuracy
        );
    }
    println!("frontier:");
    for r in &front {
        println!(
            "  {:<26} bits {:.2}  acc {:.3}",
            r.run, r.avg_bits, r.accuracy
        );
    }
    println!("summary.csv and pareto.csv written to {}", out.display());
    Ok(())
}
