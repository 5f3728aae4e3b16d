use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GraphBatch, GraphDataset};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    /// Add `(v, u, w)` for every stored `(u, v, w)` whose reverse is absent.
    pub symmetrize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { symmetrize: true }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_features(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in lines(&text) {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, ln, format!("bad feature value: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(
                    path,
                    ln,
                    format!("ragged row: {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(path, ln, format!("non-finite feature {v}")));
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::format(path, 0, "no feature rows"));
    }
    Tensor::from_rows(&rows)
}

fn read_edges(path: &Path, n: usize, symmetrize: bool) -> Result<CsrMatrix<f64>> {
    let text = read(path)?;
    let mut trip = Vec::new();
    for (ln, line) in lines(&text) {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(Error::format(path, ln, "expected src<TAB>dst[<TAB>weight]"));
        }
        let node = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::format(path, ln, format!("bad node id '{s}'")))?;
            if v >= n {
                return Err(Error::format(
                    path,
                    ln,
                    format!("node {v} out of range for {n} nodes"),
                ));
            }
            Ok(v)
        };
        let (src, dst) = (node(cols[0])?, node(cols[1])?);
        let w = match cols.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite())
                .ok_or_else(|| Error::format(path, ln, format!("bad weight '{s}'")))?,
            None => 1.0,
        };
        trip.push((src, dst, w));
    }
    if symmetrize {
        let present: HashSet<(usize, usize)> = trip.iter().map(|&(s, d, _)| (s, d)).collect();
        let reverse: Vec<_> = trip
            .iter()
            .filter(|&&(s, d, _)| !present.contains(&(d, s)))
            .map(|&(s, d, w)| (d, s, w))
            .collect();
        trip.extend(reverse);
    }
    CsrMatrix::from_triplets(n, n, trip)
}

fn read_ints(path: &Path, what: &str) -> Result<Vec<usize>> {
    let text = read(path)?;
    lines(&text)
        .map(|(ln, l)| {
            l.parse::<usize>()
                .map_err(|_| Error::format(path, ln, format!("bad {what} '{l}'")))
        })
        .collect()
}

fn read_masks(path: &Path) -> Result<[Vec<bool>; 3]> {
    let text = read(path)?;
    let mut masks = [Vec::new(), Vec::new(), Vec::new()];
    for (ln, l) in lines(&text) {
        let slot = match l {
            "train" => Some(0),
            "val" => Some(1),
            "test" => Some(2),
            "none" => None,
            other => return Err(Error::format(path, ln, format!("unknown split '{other}'"))),
        };
        for (k, m) in masks.iter_mut().enumerate() {
            m.push(slot == Some(k));
        }
    }
    Ok(masks)
}

fn read_assignment(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut out = vec![usize::MAX; n];
    for (ln, l) in lines(&text) {
        let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(path, ln, format!("bad id '{s}'")))
        };
        let (node, graph) = match cols.as_slice() {
            [node, graph] => (parse(node)?, parse(graph)?),
            _ => return Err(Error::format(path, ln, "expected node<TAB>graph")),
        };
        if node >= n {
            return Err(Error::format(path, ln, format!("node {node} out of range")));
        }
        out[node] = graph;
    }
    if let Some(i) = out.iter().position(|&g| g == usize::MAX) {
        return Err(Error::format(path, 0, format!("node {i} has no graph")));
    }
    Ok(out)
}

fn finish(
    dir: &Path,
    adjacency: CsrMatrix<f64>,
    features: Tensor,
    labels: Vec<usize>,
    masks: [Vec<bool>; 3],
    graphs: Option<GraphBatch>,
) -> Result<GraphDataset> {
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let [train_mask, val_mask, test_mask] = masks;
    let ds = GraphDataset {
        adjacency,
        features,
        labels,
        num_classes,
        train_mask,
        val_mask,
        test_mask,
        graphs,
    };
    ds.validate()
        .map_err(|e| Error::format(dir, 0, e.to_string()))?;
    Ok(ds)
}

/// Reads a dataset directory.
///
/// A flat directory holds `edges.tsv`, `features.csv`, `labels.csv`,
/// `masks.csv` and, for graph-level tasks, `graphs.tsv`. A directory
/// without `features.csv` is read as a graph collection: one
/// subdirectory per graph (sorted by name) with `edges.tsv` and
/// `features.csv`, plus per-graph `labels.csv` and `masks.csv` at the root.
pub fn load_dataset(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    if dir.join("features.csv").exists() {
        load_flat(dir, opts)
    } else {
        load_collection(dir, opts)
    }
}

fn load_flat(dir: &Path, opts: LoadOptions) -> Result<GraphDataset> {
    let features = read_features(&dir.join("features.csv"))?;
    let n = features.rows();
    let adjacency = read_edges(&dir.join("edges.tsv"), n, opts.symmetrize)?;
    let labels = read_ints(&dir.join("labels.csv"), "label")?;
    let masks = read_masks(&dir.join("masks.csv"))?;
    let graphs_path = dir.join("graphs.tsv");
    let graphs = if graphs_path.exists() {
        let assignment = read_assignment(&graphs_path, n)?;
        let num_graphs = assignment.iter().max().map_or(0, |m| m + 1);
        Some(GraphBatch {
            assignment,
            num_graphs,
        })
    } else {
        None
    };
    finish(dir, adjacency, features, labels, masks, graphs)
}

fn load_collection(dir: &Path, opts: LoadOptions) -> Result<GraphDataset> {
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::io(
            dir.join("features.csv"),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no features.csv and no graph subdirectories",
            ),
        ));
    }
    let mut trip = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut assignment = Vec::new();
    for (g, sub) in subdirs.iter().enumerate() {
        let feats = read_features(&sub.join("features.csv"))?;
        if let Some(first) = rows.first() {
            if first.len() != feats.cols() {
                return Err(Error::format(
                    sub.join("features.csv"),
                    1,
                    "feature width differs between graphs",
                ));
            }
        }
        let offset = rows.len();
        let adj = read_edges(&sub.join("edges.tsv"), feats.rows(), opts.symmetrize)?;
        trip.extend(
            adj.to_triplets()
                .into_iter()
                .map(|(r, c, w)| (r + offset, c + offset, w)),
        );
        rows.extend((0..feats.rows()).map(|i| feats.row(i).to_vec()));
        assignment.extend(std::iter::repeat_n(g, feats.rows()));
    }
    let n = rows.len();
    let adjacency = CsrMatrix::from_triplets(n, n, trip)?;
    let features = Tensor::from_rows(&rows)?;
    let labels = read_ints(&dir.join("labels.csv"), "label")?;
    let masks = read_masks(&dir.join("masks.csv"))?;
    let graphs = Some(GraphBatch {
        assignment,
        num_graphs: subdirs.len(),
    });
    finish(dir, adjacency, features, labels, masks, graphs)
}

/// Writes the flat directory layout. Symmetric adjacencies are written
/// with one line per undirected edge, to be read back with `symmetrize`.
pub fn save_dataset(ds: &GraphDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };

    let symmetric = ds
        .adjacency
        .to_triplets()
        .iter()
        .all(|&(r, c, w)| ds.adjacency.get(c, r) == Some(w));
    let mut edges = String::new();
    for (r, c, w) in ds.adjacency.to_triplets() {
        if symmetric && r > c {
            continue;
        }
        if w == 1.0 {
            writeln!(edges, "{r}\t{c}").expect("string write");
        } else {
            writeln!(edges, "{r}\t{c}\t{w}").expect("string write");
        }
    }
    write("edges.tsv", edges)?;

    let mut feats = String::new();
    for i in 0..ds.features.rows() {
        let row: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write("features.csv", feats)?;

    let labels: String = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    write("labels.csv", labels)?;

    let masks: String = (0..ds.num_targets())
        .map(|i| match ds.split_of(i) {
            super::Split::Train => "train\n",
            super::Split::Val => "val\n",
            super::Split::Test => "test\n",
            super::Split::None => "none\n",
        })
        .collect();
    write("masks.csv", masks)?;

    if let Some(g) = &ds.graphs {
        let body: String = g
            .assignment
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{i}\t{a}\n"))
            .collect();
        write("graphs.tsv", body)?;
    }
    Ok(())
}
