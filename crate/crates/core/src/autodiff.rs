//! Minimal tape-based reverse-mode differentiation over ndarray values.
//!
//! The training graph is rebuilt per window (define-by-run): leaves hold
//! parameters and constants, every operation records its inputs, and
//! [`Tape::backward`] walks the tape in reverse accumulating one gradient
//! array per node. Operations cover exactly what the estimator needs;
//! shape violations are programming errors and panic.

use ndarray::{Array1, Array2, ArrayD, Axis, Ix1, Ix2, IxDyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise minimum; gradient follows the winning side (ties to the
    /// first argument).
    Min(NodeId, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId),
    MatMul(NodeId, NodeId),
    /// Row vector times matrix: `out_j = sum_i v_i m[i][j]`.
    VecMat(NodeId, NodeId),
    /// Matrix plus a row vector broadcast over rows.
    AddRow(NodeId, NodeId),
    /// Row i of the matrix divided by `v[i]`.
    DivCol(NodeId, NodeId),
    /// Column j of the matrix divided by `v[j]`.
    DivRow(NodeId, NodeId),
    RowSum(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    /// Absolute value with subgradient 0 at the kink.
    Abs(NodeId),
    /// Mean of all elements, producing a scalar (0-dim) node.
    Mean(NodeId),
    /// Copy of one matrix column as a vector.
    Column(NodeId, usize),
    /// Stack 1-D nodes of equal length into a matrix, one per row.
    ConcatRows(Vec<NodeId>),
    /// Expand a packed upper-triangle vector into a symmetric n x n matrix.
    SymmetrizePairs(NodeId, usize),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
}

/// Number of packed entries for `n` items (upper triangle with diagonal).
pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.ndim(), 0, "node is not a scalar");
        *v.first().unwrap()
    }

    pub fn value1(&self, id: NodeId) -> Array1<f64> {
        self.value(id)
            .view()
            .into_dimensionality::<Ix1>()
            .expect("node is not 1-D")
            .to_owned()
    }

    pub fn value2(&self, id: NodeId) -> Array2<f64> {
        self.value(id)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("node is not 2-D")
            .to_owned()
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn leaf1(&mut self, value: Array1<f64>) -> NodeId {
        self.push(value.into_dyn(), Op::Leaf)
    }

    pub fn leaf2(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value.into_dyn(), Op::Leaf)
    }

    fn v1(&self, id: NodeId) -> ndarray::ArrayView1<'_, f64> {
        self.nodes[id.0]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("node is not 1-D")
    }

    fn v2(&self, id: NodeId) -> ndarray::ArrayView2<'_, f64> {
        self.nodes[id.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("node is not 2-D")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(value, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let value = ndarray::Zip::from(&self.nodes[a.0].value)
            .and(&self.nodes[b.0].value)
            .map_collect(|x, y| x.min(*y));
        self.push(value, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = &self.nodes[a.0].value * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = &self.nodes[a.0].value + c;
        self.push(value, Op::Shift(a))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.v2(a).dot(&self.v2(b));
        self.push(value.into_dyn(), Op::MatMul(a, b))
    }

    pub fn vecmat(&mut self, v: NodeId, m: NodeId) -> NodeId {
        let value = self.v1(v).dot(&self.v2(m));
        self.push(value.into_dyn(), Op::VecMat(v, m))
    }

    pub fn add_row(&mut self, m: NodeId, r: NodeId) -> NodeId {
        let mv = self.v2(m);
        let rv = self.v1(r);
        assert_eq!(mv.ncols(), rv.len());
        let value = &mv + &rv;
        self.push(value.into_dyn(), Op::AddRow(m, r))
    }

    pub fn div_col(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let mv = self.v2(m);
        let vv = self.v1(v);
        assert_eq!(mv.nrows(), vv.len());
        let value = &mv / &vv.insert_axis(Axis(1));
        self.push(value.into_dyn(), Op::DivCol(m, v))
    }

    pub fn div_row(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let mv = self.v2(m);
        let vv = self.v1(v);
        assert_eq!(mv.ncols(), vv.len());
        let value = &mv / &vv;
        self.push(value.into_dyn(), Op::DivRow(m, v))
    }

    pub fn row_sum(&mut self, m: NodeId) -> NodeId {
        let value = self.v2(m).sum_axis(Axis(1));
        self.push(value.into_dyn(), Op::RowSum(m))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let m = self.nodes[a.0].value.mean().expect("mean of empty node");
        self.push(ArrayD::from_elem(IxDyn(&[]), m), Op::Mean(a))
    }

    pub fn column(&mut self, m: NodeId, j: usize) -> NodeId {
        let value = self.v2(m).column(j).to_owned();
        self.push(value.into_dyn(), Op::Column(m, j))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let width = self.v1(parts[0]).len();
        let mut value = Array2::zeros((parts.len(), width));
        for (i, part) in parts.iter().enumerate() {
            let row = self.v1(*part);
            assert_eq!(row.len(), width);
            value.row_mut(i).assign(&row);
        }
        self.push(value.into_dyn(), Op::ConcatRows(parts.to_vec()))
    }

    pub fn symmetrize_pairs(&mut self, packed: NodeId, n: usize) -> NodeId {
        let pv = self.v1(packed);
        assert_eq!(pv.len(), pair_count(n));
        let mut value = Array2::zeros((n, n));
        for m in 0..n {
            for k in m..n {
                let x = pv[packed_upper_index(m, k, n)];
                value[(m, k)] = x;
                value[(k, m)] = x;
            }
        }
        self.push(value.into_dyn(), Op::SymmetrizePairs(packed, n))
    }

    /// Reverse pass from a scalar root; returns one gradient per node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(
            self.value(root).ndim(),
            0,
            "backward root must be a scalar node"
        );
        let mut grads: Vec<ArrayD<f64>> = self
            .nodes
            .iter()
            .map(|n| ArrayD::zeros(n.value.raw_dim()))
            .collect();
        grads[root.0] = ArrayD::from_elem(IxDyn(&[]), 1.0);

        for idx in (0..=root.0).rev() {
            let go = grads[idx].clone();
            if go.iter().all(|g| *g == 0.0) {
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grads[a.0] += &go;
                    grads[b.0] += &go;
                }
                Op::Sub(a, b) => {
                    grads[a.0] += &go;
                    grads[b.0] -= &go;
                }
                Op::Mul(a, b) => {
                    let ga = &go * &self.nodes[b.0].value;
                    let gb = &go * &self.nodes[a.0].value;
                    grads[a.0] += &ga;
                    grads[b.0] += &gb;
                }
                Op::Min(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga = ndarray::Zip::from(&go)
                        .and(av)
                        .and(bv)
                        .map_collect(|g, x, y| if x <= y { *g } else { 0.0 });
                    let gb = ndarray::Zip::from(&go)
                        .and(av)
                        .and(bv)
                        .map_collect(|g, x, y| if x <= y { 0.0 } else { *g });
                    grads[a.0] += &ga;
                    grads[b.0] += &gb;
                }
                Op::Scale(a, c) => {
                    let ga = &go * *c;
                    grads[a.0] += &ga;
                }
                Op::Shift(a) => {
                    grads[a.0] += &go;
                }
                Op::MatMul(a, b) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    let av = self.v2(*a);
                    let bv = self.v2(*b);
                    let ga = gov.dot(&bv.t());
                    let gb = av.t().dot(&gov);
                    grads[a.0] += &ga.into_dyn();
                    grads[b.0] += &gb.into_dyn();
                }
                Op::VecMat(v, m) => {
                    let gov = go.view().into_dimensionality::<Ix1>().unwrap();
                    let vv = self.v1(*v);
                    let mv = self.v2(*m);
                    let gv = mv.dot(&gov);
                    let mut gm = Array2::zeros(mv.raw_dim());
                    for i in 0..vv.len() {
                        for j in 0..gov.len() {
                            gm[(i, j)] = vv[i] * gov[j];
                        }
                    }
                    grads[v.0] += &gv.into_dyn();
                    grads[m.0] += &gm.into_dyn();
                }
                Op::AddRow(m, r) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    let gr = gov.sum_axis(Axis(0));
                    grads[m.0] += &go;
                    grads[r.0] += &gr.into_dyn();
                }
                Op::DivCol(m, v) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    let vv = self.v1(*v);
                    let out = self.v2(NodeId(idx));
                    let gm = &gov / &vv.insert_axis(Axis(1));
                    let gv = -(&gov * &out).sum_axis(Axis(1)) / &vv;
                    grads[m.0] += &gm.into_dyn();
                    grads[v.0] += &gv.into_dyn();
                }
                Op::DivRow(m, v) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    let vv = self.v1(*v);
                    let out = self.v2(NodeId(idx));
                    let gm = &gov / &vv;
                    let gv = -(&gov * &out).sum_axis(Axis(0)) / &vv;
                    grads[m.0] += &gm.into_dyn();
                    grads[v.0] += &gv.into_dyn();
                }
                Op::RowSum(m) => {
                    let gov = go.view().into_dimensionality::<Ix1>().unwrap();
                    let mv = self.v2(*m);
                    let gm = gov
                        .insert_axis(Axis(1))
                        .broadcast(mv.raw_dim())
                        .unwrap()
                        .to_owned();
                    grads[m.0] += &gm.into_dyn();
                }
                Op::Relu(a) => {
                    let ga = ndarray::Zip::from(&go)
                        .and(&self.nodes[a.0].value)
                        .map_collect(|g, x| if *x > 0.0 { *g } else { 0.0 });
                    grads[a.0] += &ga;
                }
                Op::Tanh(a) => {
                    let out = &self.nodes[idx].value;
                    let ga = ndarray::Zip::from(&go)
                        .and(out)
                        .map_collect(|g, y| g * (1.0 - y * y));
                    grads[a.0] += &ga;
                }
                Op::Sigmoid(a) => {
                    let out = &self.nodes[idx].value;
                    let ga = ndarray::Zip::from(&go)
                        .and(out)
                        .map_collect(|g, y| g * y * (1.0 - y));
                    grads[a.0] += &ga;
                }
                Op::Exp(a) => {
                    let out = &self.nodes[idx].value;
                    let ga = &go * out;
                    grads[a.0] += &ga;
                }
                Op::Abs(a) => {
                    let ga = ndarray::Zip::from(&go)
                        .and(&self.nodes[a.0].value)
                        .map_collect(|g, x| {
                            if *x > 0.0 {
                                *g
                            } else if *x < 0.0 {
                                -*g
                            } else {
                                0.0
                            }
                        });
                    grads[a.0] += &ga;
                }
                Op::Mean(a) => {
                    let g = *go.first().unwrap();
                    let len = self.nodes[a.0].value.len() as f64;
                    let ga =
                        ArrayD::from_elem(self.nodes[a.0].value.raw_dim(), g / len);
                    grads[a.0] += &ga;
                }
                Op::Column(m, j) => {
                    let gov = go.view().into_dimensionality::<Ix1>().unwrap();
                    let mv = self.v2(*m);
                    let mut gm = Array2::zeros(mv.raw_dim());
                    gm.column_mut(*j).assign(&gov);
                    grads[m.0] += &gm.into_dyn();
                }
                Op::ConcatRows(parts) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    for (i, part) in parts.iter().enumerate() {
                        let gp = gov.row(i).to_owned();
                        grads[part.0] += &gp.into_dyn();
                    }
                }
                Op::SymmetrizePairs(packed, n) => {
                    let gov = go.view().into_dimensionality::<Ix2>().unwrap();
                    let mut gp = Array1::zeros(pair_count(*n));
                    for m in 0..*n {
                        for k in m..*n {
                            let idx_p = packed_upper_index(m, k, *n);
                            if m == k {
                                gp[idx_p] += gov[(m, k)];
                            } else {
                                gp[idx_p] += gov[(m, k)] + gov[(k, m)];
                            }
                        }
                    }
                    grads[packed.0] += &gp.into_dyn();
                }
            }
        }
        Gradients { grads }
    }
}

/// Row-major upper-triangle packing with the diagonal, matching
/// [`Tape::symmetrize_pairs`].
pub fn packed_upper_index(m: usize, n: usize, n_total: usize) -> usize {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    // offset of row `lo` = lo * n_total - lo * (lo - 1) / 2 - lo
    lo * n_total - (lo * (lo + 1)) / 2 + hi
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct Gradients {
    grads: Vec<ArrayD<f64>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &ArrayD<f64> {
        &self.grads[id.0]
    }

    pub fn get1(&self, id: NodeId) -> Array1<f64> {
        self.grads[id.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("gradient is not 1-D")
            .to_owned()
    }

    pub fn get2(&self, id: NodeId) -> Array2<f64> {
        self.grads[id.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("gradient is not 2-D")
            .to_owned()
    }
}
