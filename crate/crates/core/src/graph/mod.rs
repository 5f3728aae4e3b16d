//! Graph datasets: sparse adjacency, features, labels and splits, plus
//! GCN normalization, directory ingestion and synthetic generators.

mod io;
mod synthetic;

pub use io::{load_dataset, save_dataset, LoadOptions};
pub use synthetic::{
    generate_graph_collection, generate_synthetic, FeatureMode, SyntheticKind, SyntheticSpec,
};

pub use crate::sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

/// Node-to-graph membership for datasets holding many small graphs that
/// are stored as one block-diagonal adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub assignment: Vec<usize>,
    pub num_graphs: usize,
}

/// `labels` and the masks are indexed by node for node tasks and by
/// graph when `graphs` is present.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub adjacency: CsrMatrix<f64>,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub graphs: Option<GraphBatch>,
}

impl GraphDataset {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_graph_task(&self) -> bool {
        self.graphs.is_some()
    }

    /// Number of labelled units: nodes or graphs.
    pub fn num_targets(&self) -> usize {
        self.labels.len()
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train_mask,
            Split::Val => &self.val_mask,
            Split::Test => &self.test_mask,
            Split::None => &[],
        }
    }

    pub fn split_of(&self, i: usize) -> Split {
        if self.train_mask[i] {
            Split::Train
        } else if self.val_mask[i] {
            Split::Val
        } else if self.test_mask[i] {
            Split::Test
        } else {
            Split::None
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if !self.adjacency.is_square() {
            return Err(Error::invalid("adjacency must be square"));
        }
        if self.features.shape().len() != 2 || self.features.rows() != n {
            return Err(Error::dim(format!(
                "features {:?} do not match {n} nodes",
                self.features.shape()
            )));
        }
        let targets = match &self.graphs {
            Some(g) => {
                if g.assignment.len() != n {
                    return Err(Error::dim("graph assignment must cover every node"));
                }
                let mut seen = vec![false; g.num_graphs];
                for &a in &g.assignment {
                    *seen
                        .get_mut(a)
                        .ok_or_else(|| Error::invalid(format!("graph id {a} out of range")))? =
                        true;
                }
                if let Some(k) = seen.iter().position(|s| !s) {
                    return Err(Error::invalid(format!("graph {k} has no nodes")));
                }
                g.num_graphs
            }
            None => n,
        };
        for (name, len) in [
            ("labels", self.labels.len()),
            ("train mask", self.train_mask.len()),
            ("val mask", self.val_mask.len()),
            ("test mask", self.test_mask.len()),
        ] {
            if len != targets {
                return Err(Error::dim(format!(
                    "{name} has {len} entries, expected {targets}"
                )));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} >= {} classes",
                self.num_classes
            )));
        }
        for i in 0..targets {
            let hits = [self.train_mask[i], self.val_mask[i], self.test_mask[i]]
                .iter()
                .filter(|&&m| m)
                .count();
            if hits > 1 {
                return Err(Error::invalid(format!(
                    "target {i} is in more than one split"
                )));
            }
        }
        Ok(())
    }
}

/// `D^{-1/2} (I + A) D^{-1/2}` with `D` the row sums of `I + A`.
///
/// The identity is always added; an explicit self-loop of weight `w`
/// therefore ends up with diagonal weight `1 + w`.
pub fn gcn_normalize(a: &CsrMatrix<f64>) -> Result<CsrMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("gcn_normalize needs a square matrix"));
    }
    if let Some(w) = a.values().iter().find(|&&w| w < 0.0 || w.is_nan()) {
        return Err(Error::invalid(format!("negative edge weight {w}")));
    }
    let n = a.n_rows();
    let with_loops = CsrMatrix::from_triplets(
        n,
        n,
        a.to_triplets()
            .into_iter()
            .chain((0..n).map(|i| (i, i, 1.0))),
    )?;
    let deg: Vec<f64> = (0..n).map(|i| with_loops.row(i).1.iter().sum()).collect();
    let rows = with_loops.entry_rows();
    let values = with_loops
        .values()
        .iter()
        .zip(rows.iter().zip(with_loops.col_idx()))
        .map(|(&v, (&r, &c))| v / (deg[r] * deg[c]).sqrt())
        .collect();
    with_loops.with_values(values)
}

/// Row-stochastic `D^{-1} A` (mean aggregation); empty rows stay empty.
pub fn mean_normalize(a: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let rows = a.entry_rows();
    let sums: Vec<f64> = (0..a.n_rows()).map(|i| a.row(i).1.iter().sum()).collect();
    let values = a
        .values()
        .iter()
        .zip(&rows)
        .map(|(&v, &r)| if sums[r] != 0.0 { v / sums[r] } else { 0.0 })
        .collect();
    a.with_values(values).expect("same nnz")
}

/// Unweighted degree (stored entries per row).
pub fn degrees(a: &CsrMatrix<f64>) -> Vec<usize> {
    (0..a.n_rows()).map(|i| a.row_nnz(i)).collect()
}
