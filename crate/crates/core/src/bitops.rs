//! Operation counts and BitOPs.
//!
//! One multiply and one add are one op each; a function's BitOPs are its
//! ops times its operating width. When operands differ in width the wider
//! one wins. Requantization and other elementwise epilogues cost one op per
//! output element at the width of the function that produced them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, LayerKind, Model, PreparedGraph};

pub fn count_dense_matmul(m: usize, k: usize, n: usize) -> u64 {
    2 * m as u64 * k as u64 * n as u64
}

pub fn count_spmm(nnz: usize, f: usize) -> u64 {
    2 * nnz as u64 * f as u64
}

/// Graph sizes that determine op counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDims {
    pub nodes: usize,
    /// Stored entries of the raw adjacency (GIN and SAGE operators).
    pub raw_nnz: usize,
    /// Stored entries of the self-looped normalized adjacency.
    pub gcn_nnz: usize,
    pub features: usize,
    pub graphs: Option<usize>,
}

impl GraphDims {
    pub fn of(graph: &PreparedGraph) -> Self {
        GraphDims {
            nodes: graph.num_nodes(),
            raw_nnz: graph.raw.nnz(),
            gcn_nnz: graph.gcn.nnz(),
            features: graph.features.cols(),
            graphs: graph.graphs.as_ref().map(|b| b.num_graphs),
        }
    }

    /// Citation graph with 2708 nodes, 5278 undirected edges, 1433 features.
    pub fn cora() -> Self {
        GraphDims {
            nodes: 2708,
            raw_nnz: 10556,
            gcn_nnz: 10556 + 2708,
            features: 1433,
            graphs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCost {
    pub function_id: String,
    pub ops: u64,
    pub bits: u32,
    pub bitops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub functions: Vec<FunctionCost>,
    pub total_ops: u64,
    pub total_bitops: u64,
    pub average_bits: f64,
}

impl CostReport {
    fn from_functions(functions: Vec<FunctionCost>) -> Self {
        let total_ops = functions.iter().map(|f| f.ops).sum();
        let total_bitops = functions.iter().map(|f| f.bitops).sum();
        let average_bits = if total_ops == 0 {
            0.0
        } else {
            total_bitops as f64 / total_ops as f64
        };
        CostReport {
            functions,
            total_ops,
            total_bitops,
            average_bits,
        }
    }

    pub fn gbitops(&self) -> f64 {
        self.total_bitops as f64 / 1e9
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function_id,ops,bits,bitops\n");
        for f in &self.functions {
            out.push_str(&format!(
                "{},{},{},{}\n",
                f.function_id, f.ops, f.bits, f.bitops
            ));
        }
        out
    }
}

struct Ledger {
    functions: Vec<FunctionCost>,
}

impl Ledger {
    fn bill(&mut self, id: String, ops: u64, bits: u32) {
        self.functions.push(FunctionCost {
            function_id: id,
            ops,
            bits,
            bitops: ops * bits as u64,
        });
    }
}

/// Cost of one inference pass over a graph of the given size.
pub fn report(model: &Model, dims: &GraphDims) -> Result<CostReport> {
    let bits = (0..model.components.len())
        .map(|i| model.component_bits(i))
        .collect::<Result<Vec<_>>>()?;
    report_with_bits(model, dims, &bits)
}

/// Like [`report`] with explicit per-component widths (indexed like
/// `model.components`).
pub fn report_with_bits(model: &Model, dims: &GraphDims, bits: &[u32]) -> Result<CostReport> {
    if bits.len() != model.components.len() {
        return Err(Error::dim(format!(
            "{} widths for {} components",
            bits.len(),
            model.components.len()
        )));
    }
    if dims.features != model.config.in_dim() {
        return Err(Error::dim(format!(
            "graph has {} features, model expects {}",
            dims.features,
            model.config.in_dim()
        )));
    }
    let mut ledger = Ledger {
        functions: Vec::new(),
    };
    let pool_at = model.config.pool_before();
    let mut rows = dims.nodes;
    let mut width = dims.features;
    // width of the activation currently flowing
    let mut act = 32;
    let pool = |ledger: &mut Ledger, rows: &mut usize, width: usize, act: u32| -> Result<()> {
        let g = dims
            .graphs
            .ok_or_else(|| Error::invalid("pooling needs a graph count"))?;
        ledger.bill("pool".into(), (*rows * width) as u64, act);
        *rows = g;
        Ok(())
    };
    for (l, (lc, lp)) in model.config.layers.iter().zip(&model.layers).enumerate() {
        if pool_at == Some(l) {
            pool(&mut ledger, &mut rows, width, act)?;
        }
        if let Some(s) = lp.slot("input") {
            act = bits[s];
        }
        let b = |name: &str| bits[lp.need(name)];
        let (n, o) = (rows as u64, lc.out_dim as u64);
        let id = |f: &str| format!("l{l}.{f}");
        match lp.kind {
            LayerKind::Gcn => {
                let tb = act.max(b("weight"));
                ledger.bill(
                    id("transform"),
                    count_dense_matmul(rows, width, lc.out_dim) + n * o,
                    tb,
                );
                let ab = b("adjacency").max(b("linear_out"));
                ledger.bill(
                    id("aggregate"),
                    count_spmm(dims.gcn_nnz, lc.out_dim) + n * o,
                    ab,
                );
                act = b("aggregate");
            }
            LayerKind::Gin => {
                let f = width as u64;
                ledger.bill(
                    id("aggregate"),
                    count_spmm(dims.raw_nnz, width) + 2 * n * f,
                    act,
                );
                let hidden = lc.gin_hidden();
                let h1 = b("aggregate").max(b("w1"));
                ledger.bill(
                    id("mlp1"),
                    count_dense_matmul(rows, width, hidden) + n * hidden as u64,
                    h1,
                );
                ledger.bill(id("mlp_relu"), n * hidden as u64, b("mlp_hidden"));
                let h2 = b("mlp_hidden").max(b("w2"));
                ledger.bill(
                    id("mlp2"),
                    count_dense_matmul(rows, hidden, lc.out_dim) + n * o,
                    h2,
                );
                act = b("out");
            }
            LayerKind::Sage => {
                let f = width as u64;
                let ab = b("adjacency").max(act);
                ledger.bill(id("aggregate"), count_spmm(dims.raw_nnz, width) + n * f, ab);
                let rb = act.max(b("w_root"));
                ledger.bill(id("root"), count_dense_matmul(rows, width, lc.out_dim), rb);
                let nb = b("aggregate").max(b("w_neigh"));
                ledger.bill(id("neigh"), count_dense_matmul(rows, width, lc.out_dim), nb);
                ledger.bill(id("combine"), 2 * n * o, rb.max(nb));
                act = b("out");
            }
            LayerKind::Linear => {
                let tb = act.max(b("weight"));
                ledger.bill(
                    id("transform"),
                    count_dense_matmul(rows, width, lc.out_dim) + n * o,
                    tb,
                );
                act = b("out");
            }
        }
        if lc.activation == Activation::Relu {
            ledger.bill(id("relu"), n * o, act);
        }
        width = lc.out_dim;
    }
    if pool_at == Some(model.config.layers.len()) {
        pool(&mut ledger, &mut rows, width, act)?;
    }
    Ok(CostReport::from_functions(ledger.functions))
}
