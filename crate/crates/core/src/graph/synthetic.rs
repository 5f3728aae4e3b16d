use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{degrees, GraphBatch, GraphDataset};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two communities; class = community.
    TwoBlockSbm { p_in: f64, p_out: f64 },
    /// Cycle; class = node parity.
    Ring,
    /// Hub plus leaves; class 1 for the hub.
    Star,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureMode {
    /// Per-class Gaussian mean vector plus isotropic noise.
    ClassMeans { signal: f64, noise: f64 },
    /// One-hot encoding of the node degree, capped at the feature width.
    DegreeOneHot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub nodes: usize,
    pub features: usize,
    pub seed: u64,
    pub feature_mode: FeatureMode,
    /// Train and validation fractions; the rest is test.
    pub split: (f64, f64),
}

impl SyntheticSpec {
    /// The two-block SBM used as the desk-scale node-classification fixture.
    pub fn sbm(nodes: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::TwoBlockSbm {
                p_in: 0.2,
                p_out: 0.02,
            },
            nodes,
            features: 16,
            seed,
            feature_mode: FeatureMode::ClassMeans {
                signal: 1.0,
                noise: 1.0,
            },
            split: (0.5, 0.2),
        }
    }

    pub fn ring(nodes: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Ring,
            nodes,
            features: 4,
            seed,
            feature_mode: FeatureMode::DegreeOneHot,
            split: (0.5, 0.2),
        }
    }

    pub fn star(nodes: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Star,
            ..Self::ring(nodes, seed)
        }
    }
}

fn undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<CsrMatrix<f64>> {
    CsrMatrix::from_triplets(
        n,
        n,
        edges
            .into_iter()
            .flat_map(|(u, v)| [(u, v, 1.0), (v, u, 1.0)]),
    )
}

fn degree_one_hot(adj: &CsrMatrix<f64>, width: usize) -> Tensor {
    let n = adj.n_rows();
    let mut t = Tensor::zeros(&[n, width]);
    for (i, d) in degrees(adj).into_iter().enumerate() {
        t.data_mut()[i * width + d.min(width - 1)] = 1.0;
    }
    t
}

fn class_mean_features(
    labels: &[usize],
    classes: usize,
    f: usize,
    signal: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let mut gauss = || -> f64 { StandardNormal.sample(&mut *rng) };
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..f).map(|_| signal * gauss()).collect())
        .collect();
    let mut data = Vec::with_capacity(labels.len() * f);
    for &c in labels {
        for mu in &means[c] {
            data.push(mu + noise * gauss());
        }
    }
    Tensor::new(vec![labels.len(), f], data).expect("feature shape")
}

fn random_split(units: usize, split: (f64, f64), rng: &mut ChaCha8Rng) -> [Vec<bool>; 3] {
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(rng);
    let n_train = ((units as f64) * split.0).round() as usize;
    let n_val = ((units as f64) * split.1).round() as usize;
    let mut masks = [vec![false; units], vec![false; units], vec![false; units]];
    for (rank, &i) in order.iter().enumerate() {
        let k = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
        masks[k][i] = true;
    }
    masks
}

/// Deterministic node-classification graph for a fixed seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GraphDataset> {
    let n = spec.nodes;
    if n < 2 {
        return Err(Error::invalid(format!(
            "synthetic graphs need n >= 2, got {n}"
        )));
    }
    if spec.features == 0 {
        return Err(Error::invalid("feature width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (adjacency, labels) = match spec.kind {
        SyntheticKind::TwoBlockSbm { p_in, p_out } => {
            if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
                return Err(Error::invalid("SBM probabilities must lie in [0, 1]"));
            }
            let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    let p = if labels[u] == labels[v] { p_in } else { p_out };
                    if rng.random_bool(p) {
                        edges.push((u, v));
                    }
                }
            }
            (undirected(n, edges)?, labels)
        }
        SyntheticKind::Ring => (
            undirected(n, (0..n).map(|i| (i, (i + 1) % n)).filter(|&(u, v)| u != v))?,
            (0..n).map(|i| i % 2).collect(),
        ),
        SyntheticKind::Star => (
            undirected(n, (1..n).map(|i| (0, i)))?,
            (0..n).map(|i| usize::from(i == 0)).collect(),
        ),
    };
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    let features = match spec.feature_mode {
        FeatureMode::ClassMeans { signal, noise } => {
            class_mean_features(&labels, num_classes, spec.features, signal, noise, &mut rng)
        }
        FeatureMode::DegreeOneHot => degree_one_hot(&adjacency, spec.features),
    };
    let [train_mask, val_mask, test_mask] = random_split(n, spec.split, &mut rng);
    let ds = GraphDataset {
        adjacency,
        features,
        labels,
        num_classes,
        train_mask,
        val_mask,
        test_mask,
        graphs: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Graph-classification collection of small rings (class 0), stars
/// (class 1) and paths (class 2) with degree one-hot features.
pub fn generate_graph_collection(
    num_graphs: usize,
    feature_width: usize,
    seed: u64,
) -> Result<GraphDataset> {
    if num_graphs == 0 || feature_width < 2 {
        return Err(Error::invalid(
            "need at least one graph and feature width >= 2",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut assignment = Vec::new();
    let mut labels = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let size = rng.random_range(5..=12);
        let class = rng.random_range(0..3usize);
        let off = assignment.len();
        match class {
            0 => edges.extend((0..size).map(|i| (off + i, off + (i + 1) % size))),
            1 => edges.extend((1..size).map(|i| (off, off + i))),
            _ => edges.extend((0..size - 1).map(|i| (off + i, off + i + 1))),
        }
        assignment.extend(std::iter::repeat_n(g, size));
        labels.push(class);
    }
    let n = assignment.len();
    let adjacency = undirected(n, edges)?;
    let features = degree_one_hot(&adjacency, feature_width);
    let [train_mask, val_mask, test_mask] = random_split(num_graphs, (0.6, 0.2), &mut rng);
    let ds = GraphDataset {
        adjacency,
        features,
        num_classes: labels.iter().max().map_or(1, |m| m + 1),
        labels,
        train_mask,
        val_mask,
        test_mask,
        graphs: Some(GraphBatch {
            assignment,
            num_graphs,
        }),
    };
    ds.validate()?;
    Ok(ds)
}
