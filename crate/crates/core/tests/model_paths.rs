use mixq::graph::{
    generate_graph_collection, generate_synthetic, CsrMatrix, GraphDataset, Split, SyntheticSpec,
};
use mixq::model::{
    enumerate_components, forward_integer, model_forward, Activation, LayerConfig, LayerKind, Mode,
    Model, ModelConfig, Pooling, PreparedGraph, Scheme, SlotQuant, Task,
};
use mixq::relaxed::BitWidthAssignment;
use mixq::tensor::Tensor;
use mixq::train::{evaluate, train, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sbm(n: usize, seed: u64) -> PreparedGraph {
    PreparedGraph::new(&generate_synthetic(&SyntheticSpec::sbm(n, seed)).unwrap()).unwrap()
}

/// Largest output scale among the model's output-producing components.
fn max_output_scale(m: &Model) -> f64 {
    m.components
        .iter()
        .filter_map(|c| match &c.quant {
            SlotQuant::Fixed(q) => Some(q.params(&m.store).max_scale()),
            _ => None,
        })
        .fold(0.0, f64::max)
}

#[test]
fn integer_matches_fake_quant_after_training() {
    let g = sbm(160, 1);
    let mut m = Model::build(
        &ModelConfig::gcn(16, 16, 2, 2),
        Scheme::Uniform { bits: 4 },
        g.num_nodes(),
        3,
    )
    .unwrap();
    train(
        &mut m,
        &g,
        &TrainConfig {
            epochs: 60,
            warmup_epochs: 20,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let fake = model_forward(&m, &g, Mode::FakeQuant).unwrap();
    let int = forward_integer(&m, &g).unwrap();
    assert!(fake.max_abs_diff(&int) <= 1e-6 * max_output_scale(&m));
    assert_eq!(fake.argmax_rows(), int.argmax_rows());
    assert_eq!(
        evaluate(&m, &g, Mode::FakeQuant, Split::Test).unwrap(),
        evaluate(&m, &g, Mode::Integer, Split::Test).unwrap()
    );
}

#[test]
fn thirty_two_bit_fake_matches_fp() {
    let g = sbm(80, 2);
    let mut m = Model::build(
        &ModelConfig::gcn(16, 8, 2, 2),
        Scheme::Uniform { bits: 32 },
        g.num_nodes(),
        0,
    )
    .unwrap();
    m.calibrate(&g).unwrap();
    let fp = model_forward(&m, &g, Mode::Fp).unwrap();
    let fq = model_forward(&m, &g, Mode::FakeQuant).unwrap();
    assert!(fp.max_abs_diff(&fq) <= 1e-4);
}

#[test]
fn mode_mismatch_is_state_error() {
    let g = sbm(40, 0);
    let fp = Model::build(
        &ModelConfig::gcn(16, 8, 2, 2),
        Scheme::FullPrecision,
        g.num_nodes(),
        0,
    )
    .unwrap();
    assert_eq!(
        model_forward(&fp, &g, Mode::Integer)
            .unwrap_err()
            .exit_code(),
        1
    );
    assert!(matches!(
        model_forward(&fp, &g, Mode::FakeQuant),
        Err(mixq::Error::State(_))
    ));
    let q = Model::build(
        &ModelConfig::gcn(16, 8, 2, 2),
        Scheme::Uniform { bits: 8 },
        g.num_nodes(),
        0,
    )
    .unwrap();
    assert!(matches!(
        model_forward(&q, &g, Mode::FakeQuant),
        Err(mixq::Error::State(_))
    ));
    assert!(matches!(
        model_forward(&q, &g, Mode::Relaxed),
        Err(mixq::Error::State(_))
    ));
}

#[test]
fn saturated_relaxed_equals_finalized() {
    let g = sbm(60, 4);
    let cfg = ModelConfig::gcn(16, 8, 2, 2);
    let mut relaxed = Model::build(
        &cfg,
        Scheme::Relaxed {
            bits: vec![2, 4, 8],
        },
        g.num_nodes(),
        1,
    )
    .unwrap();
    relaxed.calibrate(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let alphas = relaxed.alpha_params();
    for id in alphas {
        let k = rng.random_range(0..3);
        let mut a = vec![0.0; 3];
        a[k] = 60.0;
        relaxed.store.set_value(id, Tensor::vector(a));
    }
    let assignment = relaxed.selected_assignment().unwrap();
    let fixed = relaxed.finalize(&assignment).unwrap();
    let r = model_forward(&relaxed, &g, Mode::Relaxed).unwrap();
    let f = model_forward(&fixed, &g, Mode::FakeQuant).unwrap();
    assert!(r.max_abs_diff(&f) <= 1e-6);
    let int = forward_integer(&fixed, &g).unwrap();
    assert!(int.max_abs_diff(&f) <= 1e-6 * max_output_scale(&fixed));
}

fn permute(ds: &GraphDataset, perm: &[usize]) -> GraphDataset {
    // node i of the original becomes node perm[i]
    let n = perm.len();
    let adjacency = CsrMatrix::from_triplets(
        n,
        n,
        ds.adjacency
            .to_triplets()
            .into_iter()
            .map(|(i, j, v)| (perm[i], perm[j], v)),
    )
    .unwrap();
    let f = ds.feature_dim();
    let mut feats = vec![0.0; n * f];
    let mut labels = vec![0; n];
    let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
    for i in 0..n {
        feats[perm[i] * f..(perm[i] + 1) * f].copy_from_slice(ds.features.row(i));
        labels[perm[i]] = ds.labels[i];
        masks[0][perm[i]] = ds.train_mask[i];
        masks[1][perm[i]] = ds.val_mask[i];
        masks[2][perm[i]] = ds.test_mask[i];
    }
    let [train_mask, val_mask, test_mask] = masks;
    GraphDataset {
        adjacency,
        features: Tensor::new(vec![n, f], feats).unwrap(),
        labels,
        num_classes: ds.num_classes,
        train_mask,
        val_mask,
        test_mask,
        graphs: None,
    }
}

#[test]
fn permutation_equivariance() {
    let ds = generate_synthetic(&SyntheticSpec::sbm(50, 8)).unwrap();
    let mut perm: Vec<usize> = (0..50).collect();
    perm.reverse();
    perm.swap(3, 17);
    let pds = permute(&ds, &perm);
    let (g, pg) = (
        PreparedGraph::new(&ds).unwrap(),
        PreparedGraph::new(&pds).unwrap(),
    );
    for cfg in [
        ModelConfig::gcn(16, 8, 2, 2),
        ModelConfig::sage(16, 8, 2, 2),
    ] {
        let m = Model::build(&cfg, Scheme::FullPrecision, 50, 5).unwrap();
        let a = model_forward(&m, &g, Mode::Fp).unwrap();
        let b = model_forward(&m, &pg, Mode::Fp).unwrap();
        for i in 0..50 {
            for (x, y) in a.row(i).iter().zip(b.row(perm[i])) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

fn complete_graph(n: usize, f: usize) -> PreparedGraph {
    let adjacency = CsrMatrix::from_triplets(
        n,
        n,
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, 1.0))),
    )
    .unwrap();
    PreparedGraph::new(&GraphDataset {
        adjacency,
        features: Tensor::ones(&[n, f]),
        labels: vec![0; n],
        num_classes: 1,
        train_mask: vec![true; n],
        val_mask: vec![false; n],
        test_mask: vec![false; n],
        graphs: None,
    })
    .unwrap()
}

fn gin_identity(eps: f64) -> Model {
    let mut c = LayerConfig::new(LayerKind::Gin, 1, 1, Activation::None);
    c.gin_mlp_dims = Some(vec![1]);
    let cfg = ModelConfig {
        layers: vec![c],
        task: Task::NodeClassification,
        pooling: Pooling::None,
    };
    let mut m = Model::build(&cfg, Scheme::FullPrecision, 3, 0).unwrap();
    for name in ["l0.w1", "l0.w2"] {
        let id = m.store.find(name).unwrap();
        m.store
            .set_value(id, Tensor::from_rows(&[vec![1.0]]).unwrap());
    }
    let id = m.store.find("l0.epsilon").unwrap();
    m.store.set_value(id, Tensor::scalar(eps));
    m
}

#[test]
fn gin_complete_triangle_sums_to_three() {
    let g = complete_graph(3, 1);
    let out = model_forward(&gin_identity(0.0), &g, Mode::Fp).unwrap();
    assert_eq!(out.data(), &[3.0, 3.0, 3.0]);
    // epsilon = -1 removes the self term
    let out = model_forward(&gin_identity(-1.0), &g, Mode::Fp).unwrap();
    assert_eq!(out.data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn gin_rejects_weighted_adjacency() {
    let mut ds = generate_synthetic(&SyntheticSpec::ring(6, 0)).unwrap();
    let adjacency = ds.adjacency.map_values(|v| v * 0.5);
    ds.adjacency = adjacency;
    let g = PreparedGraph::new(&ds).unwrap();
    let mut c = LayerConfig::new(LayerKind::Gin, 4, 2, Activation::None);
    c.gin_epsilon_learnable = true;
    let cfg = ModelConfig {
        layers: vec![c],
        task: Task::NodeClassification,
        pooling: Pooling::None,
    };
    let m = Model::build(&cfg, Scheme::FullPrecision, 6, 0).unwrap();
    assert!(matches!(
        model_forward(&m, &g, Mode::Fp),
        Err(mixq::Error::InvalidArgument(_))
    ));
}

#[test]
fn gin_separates_path_and_star() {
    // two 4-node graphs: path 0-1-2-3 and star centred on 4
    let edges = [(0, 1), (1, 2), (2, 3), (4, 5), (4, 6), (4, 7)];
    let adjacency = CsrMatrix::from_triplets(
        8,
        8,
        edges.iter().flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)]),
    )
    .unwrap();
    let ds = GraphDataset {
        adjacency,
        features: Tensor::ones(&[8, 2]),
        labels: vec![0, 1],
        num_classes: 2,
        train_mask: vec![true, true],
        val_mask: vec![false; 2],
        test_mask: vec![false; 2],
        graphs: Some(mixq::graph::GraphBatch {
            assignment: vec![0, 0, 0, 0, 1, 1, 1, 1],
            num_graphs: 2,
        }),
    };
    let g = PreparedGraph::new(&ds).unwrap();
    let mut cfg = ModelConfig::gin_graph(2, 8, 2, 1);
    cfg.layers.truncate(1);
    cfg.layers[0].activation = Activation::None;
    let m = Model::build(&cfg, Scheme::FullPrecision, 8, 9).unwrap();
    let emb = model_forward(&m, &g, Mode::Fp).unwrap();
    assert!(emb
        .row(0)
        .iter()
        .zip(emb.row(1))
        .any(|(a, b)| (a - b).abs() > 1e-9));
}

#[test]
fn sage_zero_neighbor_weight_is_linear() {
    let g = sbm(30, 2);
    let mut m = Model::build(
        &ModelConfig::sage(16, 4, 4, 1),
        Scheme::FullPrecision,
        30,
        0,
    )
    .unwrap();
    let wn = m.store.find("l0.w_neigh").unwrap();
    m.store.set_value(wn, Tensor::zeros(&[16, 4]));
    let wr = m.store.find("l0.w_root").unwrap();
    let want = g.features.matmul(m.store.value(wr)).unwrap();
    let got = model_forward(&m, &g, Mode::Fp).unwrap();
    assert!(got.max_abs_diff(&want) <= 1e-12);
}

#[test]
fn sage_sampling_with_large_cap_is_exact() {
    let g = sbm(40, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = g.with_sampled_neighbors(1000, &mut rng).unwrap();
    assert_eq!(*s.mean, *g.mean);
    let small = g.with_sampled_neighbors(2, &mut rng).unwrap();
    assert!((0..40).all(|i| small.mean.row_nnz(i) <= 2));
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let g = sbm(60, 5);
    let mut m = Model::build(
        &ModelConfig::gcn(16, 8, 2, 2),
        Scheme::Uniform { bits: 4 },
        g.num_nodes(),
        2,
    )
    .unwrap();
    train(
        &mut m,
        &g,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(
        model_forward(&m, &g, Mode::FakeQuant).unwrap(),
        model_forward(&back, &g, Mode::FakeQuant).unwrap()
    );
    assert_eq!(
        forward_integer(&m, &g).unwrap(),
        forward_integer(&back, &g).unwrap()
    );
}

#[test]
fn graph_classification_integer_path() {
    let ds = generate_graph_collection(24, 6, 1).unwrap();
    let g = PreparedGraph::new(&ds).unwrap();
    let mut m = Model::build(
        &ModelConfig::gin_graph(6, 8, 3, 2),
        Scheme::Uniform { bits: 8 },
        g.num_nodes(),
        0,
    )
    .unwrap();
    train(
        &mut m,
        &g,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let fake = model_forward(&m, &g, Mode::FakeQuant).unwrap();
    let int = forward_integer(&m, &g).unwrap();
    assert_eq!(fake.shape(), &[24, 3]);
    assert!(fake.max_abs_diff(&int) <= 1e-6 * max_output_scale(&m));
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, f: usize, weighted: bool) -> GraphDataset {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.2) {
                let w = if weighted {
                    rng.random_range(0.5..2.0)
                } else {
                    1.0
                };
                trip.push((i, j, w));
                trip.push((j, i, w));
            }
        }
    }
    GraphDataset {
        adjacency: CsrMatrix::from_triplets(n, n, trip).unwrap(),
        features: Tensor::new(
            vec![n, f],
            (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap(),
        labels: (0..n).map(|i| i % 2).collect(),
        num_classes: 2,
        train_mask: vec![true; n],
        val_mask: vec![false; n],
        test_mask: vec![false; n],
        graphs: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn integer_equals_fake_for_random_architectures(
        seed in 0u64..10_000,
        kinds in proptest::collection::vec(0usize..4, 1..4),
        bits in proptest::sample::select(vec![2u32, 4, 8]),
        n in 3usize..32,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rng.random_range(1..6);
        let ds = random_dataset(&mut rng, n, f, false);
        let g = PreparedGraph::new(&ds).unwrap();
        let mut dim = f;
        let layers: Vec<LayerConfig> = kinds
            .iter()
            .enumerate()
            .map(|(l, &k)| {
                let kind = [LayerKind::Gcn, LayerKind::Gin, LayerKind::Sage, LayerKind::Linear][k];
                let out = if l + 1 == kinds.len() { 2 } else { rng.random_range(1..6) };
                let act = if l + 1 == kinds.len() { Activation::None } else { Activation::Relu };
                let mut c = LayerConfig::new(kind, dim, out, act);
                c.gin_epsilon_learnable = true;
                dim = out;
                c
            })
            .collect();
        let cfg = ModelConfig { layers, task: Task::NodeClassification, pooling: Pooling::None };
        let mut m = Model::build(&cfg, Scheme::Uniform { bits }, n, seed).unwrap();
        m.calibrate(&g).unwrap();
        if let Some(eps) = m.store.find("l0.epsilon") {
            m.store.set_value(eps, Tensor::scalar(0.3));
        }
        let fake = model_forward(&m, &g, Mode::FakeQuant).unwrap();
        let int = forward_integer(&m, &g).unwrap();
        let diff = fake.max_abs_diff(&int);
        prop_assert!(diff <= 1e-6 * max_output_scale(&m), "diff {} for {:?}", diff, kinds);
    }
}

#[test]
fn fixed_assignment_round_trips_through_json() {
    let cfg = ModelConfig::gcn(16, 8, 2, 2);
    let ids = enumerate_components(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = Model::build(&cfg, Scheme::Uniform { bits: 4 }, 10, 0).unwrap();
    let mut a = m.assignment().unwrap();
    for e in &mut a.entries {
        e.bits = [2, 4, 8][rng.random_range(0..3)];
    }
    let back = BitWidthAssignment::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    let fixed = Model::build(&cfg, Scheme::Fixed { assignment: back }, 10, 0).unwrap();
    assert_eq!(fixed.assignment().unwrap(), a);
    assert_eq!(ids.len(), a.len());
}
