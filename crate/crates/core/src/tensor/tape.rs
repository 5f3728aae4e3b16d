use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use super::{broadcast, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::sparse::{spmm_values, CsrMatrix};

/// Backward rule of a custom operation: maps the upstream gradient to one
/// optional gradient per input.
pub type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

enum Op {
    Leaf,
    Binary(BinaryKind, usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Affine(usize, f64),
    MatMul(usize, usize),
    Spmm {
        pattern: Arc<CsrMatrix<f64>>,
        values: usize,
        x: usize,
    },
    Sum(usize),
    Softmax(usize),
    Index(usize, usize),
    CrossEntropy {
        logits: usize,
        probs: Tensor,
        labels: Vec<usize>,
        mask: Vec<bool>,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    Custom {
        inputs: Vec<usize>,
        backward: BackwardFn,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order of the DAG.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(usize, ParamId)>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    /// Registers a stored parameter as a differentiable leaf.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let p = store.get(id);
        let v = self.leaf(p.value.clone(), p.requires_grad);
        self.params.borrow_mut().push((v.id, id));
        v
    }

    /// Applies `forward` to the inputs' values and records `backward`
    /// as the gradient rule, overriding whatever `forward` would imply.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        forward: impl FnOnce(&[Rc<Tensor>]) -> Result<Tensor>,
        backward: impl Fn(&Tensor, &[Rc<Tensor>]) -> Vec<Option<Tensor>> + 'static,
    ) -> Result<Var<'t>> {
        let values: Vec<Rc<Tensor>> = inputs.iter().map(|v| v.value()).collect();
        let out = forward(&values)?;
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let rg = self.requires(&ids);
        let saved = values;
        Ok(self.push(
            out,
            Op::Custom {
                inputs: ids,
                backward: Box::new(move |g| backward(g, &saved)),
            },
            rg,
        ))
    }

    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                for (input, gi) in input_grads(&nodes, node, &g) {
                    if !nodes[input].requires_grad {
                        continue;
                    }
                    match &mut grads[input] {
                        Some(acc) => acc.add_assign(&gi),
                        slot => *slot = Some(gi),
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward pass whose parameter gradients are accumulated into `store`.
    pub fn backward_into(&self, loss: Var<'_>, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        self.accumulate(&grads, store, |_| true);
        Ok(())
    }

    /// Adds the gradients of registered parameters accepted by `filter`.
    pub fn accumulate(
        &self,
        grads: &Gradients,
        store: &mut ParamStore,
        filter: impl Fn(ParamId) -> bool,
    ) {
        for &(node, pid) in self.params.borrow().iter() {
            if !filter(pid) {
                continue;
            }
            if let Some(g) = grads.grads[node].as_ref() {
                store.get_mut(pid).grad.add_assign(g);
            }
        }
    }
}

fn reduce_to(g: &Tensor, target: &[usize]) -> Tensor {
    let n: usize = target.iter().product();
    if g.numel() == n {
        return Tensor::new(target.to_vec(), g.data().to_vec()).expect("same size");
    }
    let mut out = vec![0.0; n];
    for (i, v) in g.data().iter().enumerate() {
        out[i % n] += v;
    }
    Tensor::new(target.to_vec(), out).expect("target shape")
}

fn expand(t: &Tensor, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let p = t.numel();
    Tensor::new(shape.to_vec(), (0..n).map(|i| t.data()[i % p]).collect()).expect("expand")
}

fn input_grads(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| nodes[i].value.as_ref();
    match &node.op {
        Op::Leaf => vec![],
        Op::Binary(kind, a, b) => {
            let (sa, sb) = (val(*a).shape(), val(*b).shape());
            match kind {
                BinaryKind::Add => vec![(*a, reduce_to(g, sa)), (*b, reduce_to(g, sb))],
                BinaryKind::Sub => {
                    vec![(*a, reduce_to(g, sa)), (*b, reduce_to(&g.map(|v| -v), sb))]
                }
                BinaryKind::Mul => {
                    let ea = expand(val(*a), g.shape());
                    let eb = expand(val(*b), g.shape());
                    vec![
                        (*a, reduce_to(&g.zip_map(&eb, |x, y| x * y), sa)),
                        (*b, reduce_to(&g.zip_map(&ea, |x, y| x * y), sb)),
                    ]
                }
            }
        }
        Op::Relu(a) => vec![(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
        Op::Exp(a) => vec![(*a, g.zip_map(&node.value, |g, y| g * y))],
        Op::Log(a) => vec![(*a, g.zip_map(val(*a), |g, x| g / x))],
        Op::Affine(a, scale) => vec![(*a, g.map(|v| v * scale))],
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ga = g.matmul(&vb.transpose().expect("2d")).expect("shapes");
            let gb = va.transpose().expect("2d").matmul(g).expect("shapes");
            vec![(*a, ga), (*b, gb)]
        }
        Op::Spmm { pattern, values, x } => {
            let (vv, vx) = (val(*values), val(*x));
            let f = vx.cols();
            let mut gv = vec![0.0; pattern.nnz()];
            let mut gx = vec![0.0; vx.numel()];
            for i in 0..pattern.n_rows() {
                let grow = g.row(i);
                for k in pattern.row_ptr()[i]..pattern.row_ptr()[i + 1] {
                    let c = pattern.col_idx()[k];
                    let xrow = vx.row(c);
                    gv[k] = grow.iter().zip(xrow).map(|(a, b)| a * b).sum();
                    let w = vv.data()[k];
                    for (o, gr) in gx[c * f..(c + 1) * f].iter_mut().zip(grow) {
                        *o += w * gr;
                    }
                }
            }
            vec![
                (*values, Tensor::new(vv.shape().to_vec(), gv).expect("nnz")),
                (*x, Tensor::new(vx.shape().to_vec(), gx).expect("x shape")),
            ]
        }
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()))],
        Op::Softmax(a) => {
            let y = node.value.as_ref();
            let dot: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            vec![(*a, y.zip_map(g, |y, g| y * (g - dot)))]
        }
        Op::Index(a, i) => {
            let mut out = Tensor::zeros(val(*a).shape());
            out.data_mut()[*i] = g.item();
            vec![(*a, out)]
        }
        Op::CrossEntropy {
            logits,
            probs,
            labels,
            mask,
        } => {
            let count = mask.iter().filter(|&&m| m).count() as f64;
            let c = probs.cols();
            let scale = g.item() / count;
            let mut out = Tensor::zeros(probs.shape());
            for (i, &m) in mask.iter().enumerate() {
                if !m {
                    continue;
                }
                for j in 0..c {
                    let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                    out.data_mut()[i * c + j] = (probs.get(i, j) - onehot) * scale;
                }
            }
            vec![(*logits, out)]
        }
        Op::MaxPool { input, argmax } => {
            let mut out = Tensor::zeros(val(*input).shape());
            for (o, &src) in argmax.iter().enumerate() {
                out.data_mut()[src] += g.data()[o];
            }
            vec![(*input, out)]
        }
        Op::Custom { inputs, backward } => inputs
            .iter()
            .zip(backward(g))
            .filter_map(|(&i, gi)| gi.map(|gi| (i, gi)))
            .collect(),
    }
}

// fallible, so not the std::ops traits
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, op: Op, out: Tensor) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(out, op, rg)
    }

    fn binary(self, other: Var<'t>, kind: BinaryKind) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (shape, pa, pb) = broadcast(a.shape(), b.shape())?;
        let n: usize = shape.iter().product();
        let f = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Mul => |x: f64, y: f64| x * y,
        };
        let data = (0..n)
            .map(|i| f(a.data()[i % pa], b.data()[i % pb]))
            .collect();
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(
            Tensor::new(shape, data)?,
            Op::Binary(kind, self.id, other.id),
            rg,
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul)
    }

    /// Rectifier with subgradient 0 at the origin.
    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|v| v.max(0.0));
        self.unary(Op::Relu(self.id), out)
    }

    pub fn exp(self) -> Var<'t> {
        let out = self.value().map(f64::exp);
        self.unary(Op::Exp(self.id), out)
    }

    pub fn log(self) -> Result<Var<'t>> {
        let v = self.value();
        if let Some(bad) = v.data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        Ok(self.unary(Op::Log(self.id), v.map(f64::ln)))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let out = self.value().map(|v| v * factor);
        self.unary(Op::Affine(self.id, factor), out)
    }

    pub fn add_scalar(self, shift: f64) -> Var<'t> {
        let out = self.value().map(|v| v + shift);
        self.unary(Op::Affine(self.id, 1.0), out)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&other.value())?;
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id), rg))
    }

    /// Sparse-dense product where `self` holds the stored values of
    /// `pattern` (one per nonzero) and `x` is the dense operand.
    pub fn spmm(self, pattern: &Arc<CsrMatrix<f64>>, x: Var<'t>) -> Result<Var<'t>> {
        let vals = self.value();
        if vals.numel() != pattern.nnz() {
            return Err(Error::dim(format!(
                "spmm: {} values for {} nonzeros",
                vals.numel(),
                pattern.nnz()
            )));
        }
        let out = spmm_values(pattern, vals.data(), &x.value())?;
        let rg = self.tape.requires(&[self.id, x.id]);
        Ok(self.tape.push(
            out,
            Op::Spmm {
                pattern: Arc::clone(pattern),
                values: self.id,
                x: x.id,
            },
            rg,
        ))
    }

    pub fn sum(self) -> Var<'t> {
        let out = Tensor::scalar(self.value().sum());
        self.unary(Op::Sum(self.id), out)
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Softmax over all entries, stabilized by max subtraction.
    pub fn softmax(self) -> Var<'t> {
        let v = self.value();
        let m = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = v.map(|x| (x - m).exp());
        let z = e.sum();
        let out = e.map(|x| x / z);
        self.unary(Op::Softmax(self.id), out)
    }

    pub fn index(self, i: usize) -> Result<Var<'t>> {
        let v = self.value();
        let x = *v
            .data()
            .get(i)
            .ok_or_else(|| Error::dim(format!("index {i} out of {}", v.numel())))?;
        Ok(self.unary(Op::Index(self.id, i), Tensor::scalar(x)))
    }

    /// Mean negative log-likelihood of `labels` over the rows selected by `mask`.
    pub fn softmax_cross_entropy(self, labels: &[usize], mask: &[bool]) -> Result<Var<'t>> {
        let logits = self.value();
        if logits.shape().len() != 2 || labels.len() != logits.rows() || mask.len() != logits.rows()
        {
            return Err(Error::dim(format!(
                "cross entropy: logits {:?}, {} labels, {} mask entries",
                logits.shape(),
                labels.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::invalid("cross entropy mask selects no rows"));
        }
        let c = logits.cols();
        let mut probs = Tensor::zeros(logits.shape());
        let mut loss = 0.0;
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            for j in 0..c {
                probs.data_mut()[i * c + j] = (row[j] - m).exp() / z;
            }
            if mask[i] {
                if labels[i] >= c {
                    return Err(Error::invalid(format!(
                        "label {} out of {c} classes",
                        labels[i]
                    )));
                }
                loss -= row[labels[i]] - m - z.ln();
            }
        }
        let out = Tensor::scalar(loss / count as f64);
        Ok(self.unary(
            Op::CrossEntropy {
                logits: self.id,
                probs,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
            out,
        ))
    }

    /// Column-wise maximum of the rows belonging to each group.
    pub fn group_max(self, groups: &[usize], num_groups: usize) -> Result<Var<'t>> {
        let v = self.value();
        if v.shape().len() != 2 || groups.len() != v.rows() {
            return Err(Error::dim("group_max: one group id per row required"));
        }
        let f = v.cols();
        let mut best: Vec<Option<usize>> = vec![None; num_groups * f];
        for (i, &g) in groups.iter().enumerate() {
            if g >= num_groups {
                return Err(Error::invalid(format!("group {g} out of {num_groups}")));
            }
            for j in 0..f {
                let slot = &mut best[g * f + j];
                let src = i * f + j;
                if slot.is_none_or(|b| v.data()[src] > v.data()[b]) {
                    *slot = Some(src);
                }
            }
        }
        let argmax = best
            .into_iter()
            .enumerate()
            .map(|(k, b)| b.ok_or_else(|| Error::invalid(format!("group {} is empty", k / f))))
            .collect::<Result<Vec<_>>>()?;
        let out = Tensor::new(
            vec![num_groups, f],
            argmax.iter().map(|&s| v.data()[s]).collect(),
        )?;
        Ok(self.unary(
            Op::MaxPool {
                input: self.id,
                argmax,
            },
            out,
        ))
    }
}
