//! Reverse-mode automatic differentiation on a growable tape.
//!
//! Values are recorded as nodes as they are computed; [`Tape::gradients`]
//! walks the recorded graph backwards and emits the gradients *as new tape
//! nodes*. Because a backward pass is itself ordinary graph construction, a
//! quantity built from first derivatives, such as a gradient-norm penalty,
//! can be differentiated again by running a second backward pass over it.
//!
//! The operation set is deliberately small: dense layers, the activations
//! used by the networks here, reductions, and broadcasts. Gradients flow only
//! where requested; subgraphs that do not depend on any `wrt` node are never
//! touched, so differentiating a two-network graph with respect to one
//! network's parameters costs no more than that network's share.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Guard added under the square root when taking row norms, so the norm is
/// differentiable at zero.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`]. Ids are ordered: an operation's inputs
/// always have smaller ids than its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Affine { x: NodeId, mul: f64 },
    Recip(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    LeakyRelu { x: NodeId, slope: f64 },
    Sigmoid(NodeId),
    SumAll(NodeId),
    SumCols(NodeId),
    SumRows(NodeId),
    Broadcast(NodeId),
    AddRow { x: NodeId, row: NodeId },
}

fn op_inputs(op: &Op) -> [Option<NodeId>; 2] {
    use Op::*;
    match *op {
        Leaf => [None, None],
        Matmul(a, b) | Add(a, b) | Sub(a, b) | Hadamard(a, b) => [Some(a), Some(b)],
        AddRow { x, row } => [Some(x), Some(row)],
        Transpose(a) | Recip(a) | Square(a) | Sqrt(a) | Sigmoid(a) | SumAll(a) | SumCols(a)
        | SumRows(a) | Broadcast(a) => [Some(a), None],
        Affine { x, .. } | LeakyRelu { x, .. } => [Some(x), None],
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records every operation applied through it; see the module docs.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        NodeId(nodes.len() - 1)
    }

    pub fn leaf(&self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes.borrow()[id.0].value.shape()
    }

    /// Clone of the node's value.
    pub fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id.0].value.clone()
    }

    /// The value of a 1x1 node.
    pub fn item(&self, id: NodeId) -> Result<f64> {
        self.nodes.borrow()[id.0].value.item()
    }

    pub fn matmul(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)?
        };
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    pub fn transpose(&self, a: NodeId) -> NodeId {
        let v = self.nodes.borrow()[a.0].value.transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.add(&nodes[b.0].value)?
        };
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.sub(&nodes[b.0].value)?
        };
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn hadamard(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.hadamard(&nodes[b.0].value)?
        };
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.affine(mul, add);
        self.push(v, Op::Affine { x, mul })
    }

    pub fn recip(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.map(|t| 1.0 / t);
        self.push(v, Op::Recip(x))
    }

    pub fn square(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.map(|t| t * t);
        self.push(v, Op::Square(x))
    }

    pub fn sqrt(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.map(f64::sqrt);
        self.push(v, Op::Sqrt(x))
    }

    /// `x` where positive, `slope * x` otherwise; the derivative at zero is
    /// taken to be `slope`.
    pub fn leaky_relu(&self, x: NodeId, slope: f64) -> NodeId {
        let v = self.nodes.borrow()[x.0]
            .value
            .map(|t| if t > 0.0 { t } else { slope * t });
        self.push(v, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.map(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    /// 1x1 sum of all elements.
    pub fn sum_all(&self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.nodes.borrow()[x.0].value.sum());
        self.push(v, Op::SumAll(x))
    }

    /// Mx1 vector of row sums.
    pub fn sum_cols(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.sum_cols();
        self.push(v, Op::SumCols(x))
    }

    /// 1xN vector of column sums.
    pub fn sum_rows(&self, x: NodeId) -> NodeId {
        let v = self.nodes.borrow()[x.0].value.sum_rows();
        self.push(v, Op::SumRows(x))
    }

    /// Repeats a 1x1, 1xN, or Mx1 node out to `rows x cols`.
    pub fn broadcast(&self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            let src = &nodes[x.0].value;
            match src.shape() {
                (1, 1) => Tensor::from_vec(rows, cols, vec![src.get(0, 0); rows * cols])?,
                (1, n) if n == cols => {
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        data.extend_from_slice(src.data());
                    }
                    Tensor::from_vec(rows, cols, data)?
                }
                (m, 1) if m == rows => {
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let v = src.get(r, 0);
                        data.extend(std::iter::repeat(v).take(cols));
                    }
                    Tensor::from_vec(rows, cols, data)?
                }
                (m, n) => {
                    return Err(Error::ShapeMismatch {
                        context: "broadcast",
                        left: format!("{m}x{n}"),
                        right: format!("{rows}x{cols}"),
                    })
                }
            }
        };
        Ok(self.push(v, Op::Broadcast(x)))
    }

    /// Adds a 1xN row to every row of an MxN node.
    pub fn add_row(&self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[x.0].value.add_row(&nodes[row.0].value)?
        };
        Ok(self.push(v, Op::AddRow { x, row }))
    }

    /// 1x1 mean of all elements.
    pub fn mean_all(&self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        let n = r * c;
        if n == 0 {
            return Err(Error::InvalidInput("mean_all: empty tensor".into()));
        }
        let s = self.sum_all(x);
        Ok(self.affine(s, 1.0 / n as f64, 0.0))
    }

    /// Mx1 vector of Euclidean row norms, guarded by [`NORM_EPS`].
    pub fn row_norms(&self, x: NodeId) -> NodeId {
        let sq = self.square(x);
        let sums = self.sum_cols(sq);
        let guarded = self.affine(sums, 1.0, NORM_EPS);
        self.sqrt(guarded)
    }

    /// Gradients of the scalar node `output` with respect to each node in
    /// `wrt`, returned as new tape nodes in the same order.
    ///
    /// Nodes `output` does not depend on get zero gradients of their own
    /// shape. The returned nodes are differentiable in turn, which is how
    /// second derivatives are obtained.
    pub fn gradients(&self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let count = self.len();
        if output.0 >= count {
            return Err(Error::InvalidInput("gradients: unknown output node".into()));
        }
        if let Some(w) = wrt.iter().find(|w| w.0 >= count) {
            return Err(Error::InvalidInput(format!(
                "gradients: unknown wrt node {w:?}"
            )));
        }
        if self.shape(output) != (1, 1) {
            let (r, c) = self.shape(output);
            return Err(Error::ShapeMismatch {
                context: "gradients output",
                left: "1x1".to_string(),
                right: format!("{r}x{c}"),
            });
        }

        // A node is active when it depends on some wrt node; only active
        // nodes are visited, so an inert subgraph costs nothing.
        let mut active = vec![false; output.0 + 1];
        for w in wrt {
            if w.0 <= output.0 {
                active[w.0] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..=output.0 {
                if active[i] {
                    continue;
                }
                let [a, b] = op_inputs(&nodes[i].op);
                let hit = a.map_or(false, |id| active[id.0]) || b.map_or(false, |id| active[id.0]);
                if hit {
                    active[i] = true;
                }
            }
        }

        let mut grad: Vec<Option<NodeId>> = vec![None; output.0 + 1];
        if active[output.0] {
            grad[output.0] = Some(self.leaf(Tensor::scalar(1.0)));
            for i in (0..=output.0).rev() {
                if !active[i] {
                    continue;
                }
                let Some(g) = grad[i] else { continue };
                self.backprop_node(i, g, &active, &mut grad)?;
            }
        }

        wrt.iter()
            .map(|w| {
                if w.0 <= output.0 {
                    if let Some(g) = grad[w.0] {
                        return Ok(g);
                    }
                }
                let (r, c) = self.shape(*w);
                Ok(self.leaf(Tensor::zeros(r, c)))
            })
            .collect()
    }

    fn accumulate(
        &self,
        grad: &mut [Option<NodeId>],
        target: NodeId,
        contrib: NodeId,
    ) -> Result<()> {
        grad[target.0] = Some(match grad[target.0] {
            None => contrib,
            Some(existing) => self.add(existing, contrib)?,
        });
        Ok(())
    }

    fn backprop_node(
        &self,
        i: usize,
        g: NodeId,
        active: &[bool],
        grad: &mut [Option<NodeId>],
    ) -> Result<()> {
        let op = self.nodes.borrow()[i].op.clone();
        let out = NodeId(i);
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if active[a.0] {
                    let bt = self.transpose(b);
                    let ga = self.matmul(g, bt)?;
                    self.accumulate(grad, a, ga)?;
                }
                if active[b.0] {
                    let at = self.transpose(a);
                    let gb = self.matmul(at, g)?;
                    self.accumulate(grad, b, gb)?;
                }
            }
            Op::Transpose(a) => {
                if active[a.0] {
                    let ga = self.transpose(g);
                    self.accumulate(grad, a, ga)?;
                }
            }
            Op::Add(a, b) => {
                if active[a.0] {
                    self.accumulate(grad, a, g)?;
                }
                if active[b.0] {
                    self.accumulate(grad, b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if active[a.0] {
                    self.accumulate(grad, a, g)?;
                }
                if active[b.0] {
                    let gb = self.affine(g, -1.0, 0.0);
                    self.accumulate(grad, b, gb)?;
                }
            }
            Op::Hadamard(a, b) => {
                if active[a.0] {
                    let ga = self.hadamard(g, b)?;
                    self.accumulate(grad, a, ga)?;
                }
                if active[b.0] {
                    let gb = self.hadamard(g, a)?;
                    self.accumulate(grad, b, gb)?;
                }
            }
            Op::Affine { x, mul } => {
                if active[x.0] {
                    let gx = self.affine(g, mul, 0.0);
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::Recip(x) => {
                if active[x.0] {
                    // d(1/x)/dx = -out^2
                    let t = self.hadamard(g, out)?;
                    let t = self.hadamard(t, out)?;
                    let gx = self.affine(t, -1.0, 0.0);
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::Square(x) => {
                if active[x.0] {
                    let t = self.hadamard(g, x)?;
                    let gx = self.affine(t, 2.0, 0.0);
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::Sqrt(x) => {
                if active[x.0] {
                    // d(sqrt x)/dx = 1 / (2 out)
                    let r = self.recip(out);
                    let half = self.affine(r, 0.5, 0.0);
                    let gx = self.hadamard(g, half)?;
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::LeakyRelu { x, slope } => {
                if active[x.0] {
                    // The mask is piecewise constant in x, so it enters as a
                    // plain leaf and carries no gradient of its own.
                    let mask = {
                        let nodes = self.nodes.borrow();
                        nodes[x.0]
                            .value
                            .map(|v| if v > 0.0 { 1.0 } else { slope })
                    };
                    let mask = self.leaf(mask);
                    let gx = self.hadamard(g, mask)?;
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::Sigmoid(x) => {
                if active[x.0] {
                    // d(sigma)/dx = out (1 - out)
                    let one_minus = self.affine(out, -1.0, 1.0);
                    let t = self.hadamard(out, one_minus)?;
                    let gx = self.hadamard(g, t)?;
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::SumAll(x) => {
                if active[x.0] {
                    let (r, c) = self.shape(x);
                    let gx = self.broadcast(g, r, c)?;
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::SumCols(x) | Op::SumRows(x) => {
                if active[x.0] {
                    let (r, c) = self.shape(x);
                    let gx = self.broadcast(g, r, c)?;
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::Broadcast(x) => {
                if active[x.0] {
                    let gx = match self.shape(x) {
                        (1, 1) => self.sum_all(g),
                        (1, _) => self.sum_rows(g),
                        (_, 1) => self.sum_cols(g),
                        (r, c) => {
                            return Err(Error::ShapeMismatch {
                                context: "broadcast backward",
                                left: "1x1, 1xN, or Mx1".to_string(),
                                right: format!("{r}x{c}"),
                            })
                        }
                    };
                    self.accumulate(grad, x, gx)?;
                }
            }
            Op::AddRow { x, row } => {
                if active[x.0] {
                    self.accumulate(grad, x, g)?;
                }
                if active[row.0] {
                    let gr = self.sum_rows(g);
                    self.accumulate(grad, row, gr)?;
                }
            }
        }
        Ok(())
    }

    /// Gradient-norm penalty `weight * mean((||d critic / d x||_2 - 1)^2)`
    /// over the rows of `x`, where `critic_out` is the Bx1 critic response to
    /// the Bxd input node `x`. The result is a differentiable 1x1 node.
    ///
    /// Rows must pass through the critic independently (true of the dense
    /// stacks used here), so per-row input gradients can be read off a single
    /// backward pass from the summed response.
    pub fn gradient_penalty(&self, critic_out: NodeId, x: NodeId, weight: f64) -> Result<NodeId> {
        if !(weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "gradient penalty weight must be nonnegative, got {weight}"
            )));
        }
        let (batch, cols) = self.shape(critic_out);
        if cols != 1 {
            return Err(Error::ShapeMismatch {
                context: "gradient_penalty critic output",
                left: "Bx1".to_string(),
                right: format!("{batch}x{cols}"),
            });
        }
        if batch == 0 {
            return Err(Error::InvalidInput("gradient_penalty: empty batch".into()));
        }
        let summed = self.sum_all(critic_out);
        let input_grad = self.gradients(summed, &[x])?[0];
        let norms = self.row_norms(input_grad);
        let deviation = self.affine(norms, 1.0, -1.0);
        let sq = self.square(deviation);
        let total = self.sum_all(sq);
        Ok(self.affine(total, weight / batch as f64, 0.0))
    }
}
