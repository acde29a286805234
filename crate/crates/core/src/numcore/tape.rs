//! Reverse-mode differentiation over a recorded graph.
//!
//! Every primitive appends a node holding its output value. `backward`
//! builds the adjoints out of the same primitives, so gradients are
//! ordinary nodes and can be differentiated again (the gradient penalty
//! needs the parameter gradient of an input-gradient norm).

use std::sync::atomic::{AtomicU32, Ordering};

use super::Matrix;
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u32,
    index: u32,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    /// `op(a) * op(b)` with optional transposes.
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    /// `x + 1 x m` row broadcast.
    AddRow { x: usize, row: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    Shift { x: usize },
    /// Elementwise product with a constant mask (activation slopes).
    Mask { x: usize, mask: usize },
    Square { x: usize },
    ConcatCols { a: usize, b: usize },
    SliceCols { x: usize, start: usize },
    PadCols { x: usize, start: usize },
    SumRows { x: usize },
    BroadcastRows { x: usize },
    SumCols { x: usize },
    BroadcastCols { x: usize },
    L2NormRows { x: usize },
    /// `1/x`, with `0` mapped to `0`.
    SafeRecip { x: usize },
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul { a, b, .. } | Add { a, b } | Sub { a, b } | Mul { a, b } | ConcatCols { a, b } => {
                [Some(a), Some(b)]
            }
            AddRow { x, row } => [Some(x), Some(row)],
            Scale { x, .. }
            | Shift { x }
            | Mask { x, .. }
            | Square { x }
            | SliceCols { x, .. }
            | PadCols { x, .. }
            | SumRows { x }
            | BroadcastRows { x }
            | SumCols { x }
            | BroadcastCols { x }
            | L2NormRows { x }
            | SafeRecip { x } => [Some(x), None],
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Single-writer recording of a computation.
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    masks: Vec<Matrix>,
    kink_margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            masks: Vec::new(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest distance from a non-differentiable point seen so far: the
    /// pre-activation magnitudes of ReLU-type ops and the row norms fed to
    /// [`Tape::l2_norm_rows`]. Infinite when no such op was recorded.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn note_kinks(&mut self, distances: impl Iterator<Item = f64>) {
        for d in distances {
            self.kink_margin = self.kink_margin.min(d);
        }
    }

    fn idx(&self, id: NodeId) -> Result<usize> {
        if id.tape != self.id {
            return Err(Error::Usage("node belongs to a different tape".into()));
        }
        Ok(id.index as usize)
    }

    fn handle(&self, index: usize) -> NodeId {
        NodeId {
            tape: self.id,
            index: index as u32,
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        self.handle(self.nodes.len() - 1)
    }

    /// Value of a node. Panics on a node from another tape.
    pub fn value(&self, id: NodeId) -> &Matrix {
        let i = self.idx(id).expect("node from another tape");
        &self.nodes[i].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
        v.data()[0]
    }

    /// Records an input. Whether it receives a gradient is decided by the
    /// `wrt` set passed to [`Tape::backward`].
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.matmul_t(ta, &self.nodes[ib].value, tb)?;
        Ok(self.push(Op::MatMul { a: ia, b: ib, ta, tb }, value))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (ix, ir) = (self.idx(x)?, self.idx(row)?);
        let value = self.nodes[ix].value.add_row(&self.nodes[ir].value)?;
        Ok(self.push(Op::AddRow { x: ix, row: ir }, value))
    }

    /// `input * weight + bias`, bias broadcast over rows.
    pub fn affine(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ii, iw, ib) = (self.idx(input)?, self.idx(weight)?, self.idx(bias)?);
        let (ws, bs) = (self.nodes[iw].value.shape(), self.nodes[ib].value.shape());
        if bs != (1, ws.1) {
            return Err(Error::dim("affine bias", ws, bs));
        }
        let is = self.nodes[ii].value.shape();
        if is.1 != ws.0 {
            return Err(Error::dim("affine", is, ws));
        }
        let prod = self.matmul(input, weight)?;
        self.add_row(prod, bias)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.add(&self.nodes[ib].value)?;
        Ok(self.push(Op::Add { a: ia, b: ib }, value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.sub(&self.nodes[ib].value)?;
        Ok(self.push(Op::Sub { a: ia, b: ib }, value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.hadamard(&self.nodes[ib].value)?;
        Ok(self.push(Op::Mul { a: ia, b: ib }, value))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.scale(c);
        Ok(self.push(Op::Scale { x: ix, c }, value))
    }

    /// `x + c` elementwise.
    pub fn shift(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| v + c);
        Ok(self.push(Op::Shift { x: ix }, value))
    }

    fn mask(&mut self, ix: usize, mask: Matrix) -> Result<NodeId> {
        let value = self.nodes[ix].value.hadamard(&mask)?;
        self.masks.push(mask);
        let mask = self.masks.len() - 1;
        Ok(self.push(Op::Mask { x: ix, mask }, value))
    }

    /// `max(v, slope * v)`. At exactly zero the positive branch is taken.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Config(format!("leaky relu slope {slope} outside (0, 1)")));
        }
        let ix = self.idx(x)?;
        let margin = self.nodes[ix].value.data().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        self.note_kinks(std::iter::once(margin));
        let mask = self.nodes[ix].value.map(|v| if v >= 0.0 { 1.0 } else { slope });
        self.mask(ix, mask)
    }

    /// `max(v, 0)`. The subgradient at exactly zero is zero.
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let margin = self.nodes[ix].value.data().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        self.note_kinks(std::iter::once(margin));
        let mask = self.nodes[ix].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.mask(ix, mask)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| v * v);
        Ok(self.push(Op::Square { x: ix }, value))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.concat_cols(&self.nodes[ib].value)?;
        Ok(self.push(Op::ConcatCols { a: ia, b: ib }, value))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.slice_cols(start, len)?;
        Ok(self.push(Op::SliceCols { x: ix, start }, value))
    }

    fn pad_cols(&mut self, x: NodeId, start: usize, total: usize) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.pad_cols(start, total)?;
        Ok(self.push(Op::PadCols { x: ix, start }, value))
    }

    /// Column sums, `n x m -> 1 x m`.
    pub fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.sum_rows();
        Ok(self.push(Op::SumRows { x: ix }, value))
    }

    pub fn broadcast_rows(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.broadcast_rows(n)?;
        Ok(self.push(Op::BroadcastRows { x: ix }, value))
    }

    /// Row sums, `n x m -> n x 1`.
    pub fn sum_cols(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.sum_cols();
        Ok(self.push(Op::SumCols { x: ix }, value))
    }

    pub fn broadcast_cols(&mut self, x: NodeId, m: usize) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.broadcast_cols(m)?;
        Ok(self.push(Op::BroadcastCols { x: ix }, value))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let r = self.sum_rows(x)?;
        self.sum_cols(r)
    }

    /// Mean of all entries as a `1 x 1` node.
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Usage("mean of an empty matrix".into()));
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Euclidean norm of every row, `n x d -> n x 1`. The gradient at a
    /// zero row is the zero vector.
    pub fn l2_norm_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        let value = Matrix::from_fn(v.rows(), 1, |i, _| v.row(i).iter().map(|a| a * a).sum::<f64>().sqrt());
        self.note_kinks(value.data().to_vec().into_iter());
        Ok(self.push(Op::L2NormRows { x: ix }, value))
    }

    fn safe_recip(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| if v == 0.0 { 0.0 } else { 1.0 / v });
        Ok(self.push(Op::SafeRecip { x: ix }, value))
    }

    /// Gradients of the scalar `root` with respect to each node in `wrt`.
    ///
    /// The returned gradients live on this tape, so a second `backward`
    /// through them yields second-order derivatives. Nodes in `wrt` that
    /// `root` does not depend on get a zero gradient.
    pub fn backward(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let r = self.idx(root)?;
        if self.nodes[r].value.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward root must be 1x1, got {:?}",
                self.nodes[r].value.shape()
            )));
        }
        let mut targets = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let i = self
                .idx(w)
                .map_err(|_| Error::Usage("wrt node is not on this tape".into()))?;
            if i >= self.nodes.len() {
                return Err(Error::Usage("wrt node is not on this tape".into()));
            }
            targets.push(i);
        }

        // Only nodes downstream of a target can carry gradient to it.
        let mut live = vec![false; r + 1];
        for &t in &targets {
            if t <= r {
                live[t] = true;
            }
        }
        for i in 0..=r {
            if !live[i] {
                live[i] = self.nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|&j| live[j]);
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; r + 1];
        if live[r] {
            adjoint[r] = Some(self.leaf(Matrix::scalar(1.0)));
        }
        for i in (0..=r).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !live[i] {
                continue;
            }
            let op = self.nodes[i].op;
            let node = self.handle(i);
            let contributions = self.vjp(op, node, g)?;
            for (j, contribution) in contributions.into_iter().flatten() {
                if !live[j] {
                    continue;
                }
                adjoint[j] = Some(match adjoint[j] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }

        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            let g = match adjoint.get(t).copied().flatten() {
                Some(g) => g,
                None => {
                    let (rows, cols) = self.nodes[t].value.shape();
                    self.leaf(Matrix::zeros(rows, cols))
                }
            };
            out.push(g);
        }
        Ok(out)
    }

    /// Vector-Jacobian products of one node, recorded as new nodes.
    fn vjp(&mut self, op: Op, node: NodeId, g: NodeId) -> Result<[Option<(usize, NodeId)>; 2]> {
        use Op::*;
        let h = |s: &Self, i: usize| s.handle(i);
        Ok(match op {
            Leaf => [None, None],
            MatMul { a, b, ta, tb } => {
                let (na, nb) = (h(self, a), h(self, b));
                let da = if ta {
                    self.matmul_t(nb, tb, g, true)?
                } else {
                    self.matmul_t(g, false, nb, !tb)?
                };
                let db = if tb {
                    self.matmul_t(g, true, na, ta)?
                } else {
                    self.matmul_t(na, !ta, g, false)?
                };
                [Some((a, da)), Some((b, db))]
            }
            AddRow { x, row } => {
                let dr = self.sum_rows(g)?;
                [Some((x, g)), Some((row, dr))]
            }
            Add { a, b } => [Some((a, g)), Some((b, g))],
            Sub { a, b } => {
                let db = self.scale(g, -1.0)?;
                [Some((a, g)), Some((b, db))]
            }
            Mul { a, b } => {
                let (na, nb) = (h(self, a), h(self, b));
                let da = self.mul(g, nb)?;
                let db = self.mul(g, na)?;
                [Some((a, da)), Some((b, db))]
            }
            Scale { x, c } => [Some((x, self.scale(g, c)?)), None],
            Shift { x } => [Some((x, g)), None],
            Mask { x, mask } => {
                let m = self.masks[mask].clone();
                let gi = self.idx(g)?;
                [Some((x, self.mask(gi, m)?)), None]
            }
            Square { x } => {
                let two_x = self.scale(h(self, x), 2.0)?;
                [Some((x, self.mul(g, two_x)?)), None]
            }
            ConcatCols { a, b } => {
                let p = self.nodes[a].value.cols();
                let q = self.nodes[b].value.cols();
                let da = self.slice_cols(g, 0, p)?;
                let db = self.slice_cols(g, p, q)?;
                [Some((a, da)), Some((b, db))]
            }
            SliceCols { x, start } => {
                let total = self.nodes[x].value.cols();
                [Some((x, self.pad_cols(g, start, total)?)), None]
            }
            PadCols { x, start } => {
                let len = self.nodes[x].value.cols();
                [Some((x, self.slice_cols(g, start, len)?)), None]
            }
            SumRows { x } => {
                let n = self.nodes[x].value.rows();
                [Some((x, self.broadcast_rows(g, n)?)), None]
            }
            BroadcastRows { x } => [Some((x, self.sum_rows(g)?)), None],
            SumCols { x } => {
                let m = self.nodes[x].value.cols();
                [Some((x, self.broadcast_cols(g, m)?)), None]
            }
            BroadcastCols { x } => [Some((x, self.sum_cols(g)?)), None],
            L2NormRows { x } => {
                // d|x|/dx = x / |x|
                let d = self.nodes[x].value.cols();
                let inv = self.safe_recip(node)?;
                let coeff = self.mul(g, inv)?;
                let wide = self.broadcast_cols(coeff, d)?;
                [Some((x, self.mul(wide, h(self, x))?)), None]
            }
            SafeRecip { x } => {
                // d(1/x)/dx = -(1/x)^2; stays zero where the value was clamped.
                let sq = self.square(node)?;
                let prod = self.mul(g, sq)?;
                [Some((x, self.scale(prod, -1.0)?)), None]
            }
        })
    }
}
