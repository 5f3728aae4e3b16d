use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::graph::{gcn_normalize, mean_normalize, GraphBatch, GraphDataset};
use crate::quant::SliceLayout;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Sparse operators derived once from a dataset.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    /// `D^{-1/2} (I + A) D^{-1/2}` for GCN layers.
    pub gcn: Arc<CsrMatrix<f64>>,
    pub gcn_rows: SliceLayout,
    /// Raw adjacency for GIN sum aggregation.
    pub raw: Arc<CsrMatrix<f64>>,
    pub raw_ones: Tensor,
    pub raw_is_binary: bool,
    /// Row-normalized adjacency for SAGE mean aggregation.
    pub mean: Arc<CsrMatrix<f64>>,
    pub mean_rows: SliceLayout,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub graphs: Option<GraphBatch>,
}

fn rows_layout(a: &CsrMatrix<f64>) -> SliceLayout {
    SliceLayout::Entries(Arc::from(a.entry_rows()))
}

impl PreparedGraph {
    pub fn new(ds: &GraphDataset) -> Result<Self> {
        ds.validate()?;
        let gcn = gcn_normalize(&ds.adjacency)?;
        let mean = mean_normalize(&ds.adjacency);
        Ok(PreparedGraph {
            gcn_rows: rows_layout(&gcn),
            gcn: Arc::new(gcn),
            raw_ones: Tensor::ones(&[ds.adjacency.nnz()]),
            raw_is_binary: ds.adjacency.values().iter().all(|&v| v == 1.0),
            raw: Arc::new(ds.adjacency.clone()),
            mean_rows: rows_layout(&mean),
            mean: Arc::new(mean),
            features: ds.features.clone(),
            labels: ds.labels.clone(),
            num_classes: ds.num_classes,
            train_mask: ds.train_mask.clone(),
            val_mask: ds.val_mask.clone(),
            test_mask: ds.test_mask.clone(),
            graphs: ds.graphs.clone(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.n_rows()
    }

    /// Copy whose mean-aggregation operator keeps at most `cap` uniformly
    /// sampled neighbors per node (without replacement).
    pub fn with_sampled_neighbors(&self, cap: usize, rng: &mut impl Rng) -> Result<Self> {
        let a = &self.raw;
        let mut trip = Vec::with_capacity(a.nnz().min(a.n_rows() * cap));
        for i in 0..a.n_rows() {
            let (cols, vals) = a.row(i);
            if cols.len() <= cap {
                trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
            } else {
                let mut picked = sample(rng, cols.len(), cap).into_vec();
                picked.sort_unstable();
                trip.extend(picked.into_iter().map(|k| (i, cols[k], vals[k])));
            }
        }
        let sampled = CsrMatrix::from_triplets(a.n_rows(), a.n_cols(), trip)?;
        let mean = mean_normalize(&sampled);
        let mut out = self.clone();
        out.mean_rows = rows_layout(&mean);
        out.mean = Arc::new(mean);
        Ok(out)
    }
}
