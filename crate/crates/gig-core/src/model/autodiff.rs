//! Reverse-mode automatic differentiation over `Array2<f64>` on an
//! index-based tape. Each forward op records enough to propagate
//! gradients in a single reverse sweep.

use ndarray::{s, Array2, Axis};

use crate::error::{GigError, Result};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
/// Probability floor when evaluating the KL loss.
const PROB_FLOOR: f64 = 1e-12;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast a 1 x d row onto every row of the first operand.
    AddRow(NodeId, NodeId),
    AddConst(NodeId),
    MulConst(NodeId, Array2<f64>),
    Scale(NodeId, f64),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, end: usize },
    /// Select rows of a table by index; duplicates accumulate.
    Gather { table: NodeId, ids: Vec<usize> },
    /// Mean over scored rows of KL(target row || softmax(logits row)).
    KlLoss { logits: NodeId, target: Array2<f64>, scored: Vec<bool> },
}

pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { values: Vec::new(), ops: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.values[id]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.values[a].dot(&self.values[b]);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.values[a] + &self.values[b];
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let value = &self.values[a] + &self.values[row];
        self.push(value, Op::AddRow(a, row))
    }

    pub fn add_const(&mut self, a: NodeId, c: &Array2<f64>) -> NodeId {
        let value = &self.values[a] + c;
        self.push(value, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: NodeId, c: Array2<f64>) -> NodeId {
        let value = &self.values[a] * &c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = &self.values[a] * s;
        self.push(value, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a].mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut value = self.values[a].clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization with a broadcast 1 x d gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let input = &self.values[x];
        let gain_row = self.values[gain].row(0).to_owned();
        let bias_row = self.values[bias].row(0).to_owned();
        let mut value = input.clone();
        for mut row in value.rows_mut() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            let sigma = (var + LN_EPS).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = gain_row[j] * (*v - mean) / sigma + bias_row[j];
            }
        }
        self.push(value, Op::LayerNorm { x, gain, bias })
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a].t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.values[p].view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("column concat shapes");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let value = self.values[x].slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols { x, start, end })
    }

    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let source = &self.values[table];
        let mut value = Array2::zeros((ids.len(), source.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            if id >= source.nrows() {
                return Err(GigError::Model(format!("token id {id} out of range")));
            }
            value.row_mut(i).assign(&source.row(id));
        }
        Ok(self.push(value, Op::Gather { table, ids: ids.to_vec() }))
    }

    /// Scalar 1 x 1 node: mean KL(target || softmax(logits)) over scored rows.
    pub fn kl_loss(&mut self, logits: NodeId, target: Array2<f64>, scored: Vec<bool>) -> NodeId {
        let raw = &self.values[logits];
        let n = scored.iter().filter(|&&s| s).count().max(1) as f64;
        let mut total = 0.0;
        for (r, row) in raw.rows().into_iter().enumerate() {
            if !scored[r] {
                continue;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (j, &t) in target.row(r).iter().enumerate() {
                if t > 0.0 {
                    let logp = (row[j] - lse).max(PROB_FLOOR.ln());
                    total += t * (t.ln() - logp);
                }
            }
        }
        let value = Array2::from_elem((1, 1), total / n);
        self.push(value, Op::KlLoss { logits, target, scored })
    }

    /// Reverse sweep from a scalar output; returns per-node gradients.
    pub fn backward(&self, output: NodeId) -> Vec<Array2<f64>> {
        let mut grads: Vec<Array2<f64>> = self
            .values
            .iter()
            .map(|v| Array2::zeros(v.dim()))
            .collect();
        grads[output][(0, 0)] = 1.0;
        for id in (0..=output).rev() {
            let g = grads[id].clone();
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[*b].t());
                    let gb = self.values[*a].t().dot(&g);
                    grads[*a] += &ga;
                    grads[*b] += &gb;
                }
                Op::Add(a, b) => {
                    grads[*a] += &g;
                    grads[*b] += &g;
                }
                Op::AddRow(a, row) => {
                    grads[*a] += &g;
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[*row] += &summed;
                }
                Op::AddConst(a) => grads[*a] += &g,
                Op::MulConst(a, c) => grads[*a] += &(&g * c),
                Op::Scale(a, s) => grads[*a] += &(&g * *s),
                Op::Relu(a) => {
                    let mask = self.values[*a].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    grads[*a] += &(&g * &mask);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.values[id];
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(y, g)| y * g).sum();
                        for j in 0..y.ncols() {
                            gx[(r, j)] = yr[j] * (gr[j] - dot);
                        }
                    }
                    grads[*a] += &gx;
                }
                Op::LayerNorm { x, gain, bias } => {
                    let input = &self.values[*x];
                    let gain_row = self.values[*gain].row(0).to_owned();
                    let d = input.ncols() as f64;
                    let mut gx = Array2::zeros(input.dim());
                    let mut ggain = Array2::zeros((1, input.ncols()));
                    let mut gbias = Array2::zeros((1, input.ncols()));
                    for r in 0..input.nrows() {
                        let row = input.row(r);
                        let mean = row.mean().unwrap();
                        let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap();
                        let sigma = (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) / sigma).collect();
                        let gy = g.row(r);
                        let gxhat: Vec<f64> =
                            gy.iter().zip(&gain_row).map(|(g, w)| g * w).collect();
                        let mean_gxhat: f64 = gxhat.iter().sum::<f64>() / d;
                        let mean_gxhat_xhat: f64 =
                            gxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                        for j in 0..input.ncols() {
                            gx[(r, j)] =
                                (gxhat[j] - mean_gxhat - xhat[j] * mean_gxhat_xhat) / sigma;
                            ggain[(0, j)] += gy[j] * xhat[j];
                            gbias[(0, j)] += gy[j];
                        }
                    }
                    grads[*x] += &gx;
                    grads[*gain] += &ggain;
                    grads[*bias] += &gbias;
                }
                Op::Transpose(a) => {
                    let gt = g.t().to_owned();
                    grads[*a] += &gt;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.values[p].ncols();
                        let slice = g.slice(s![.., offset..offset + w]).to_owned();
                        grads[p] += &slice;
                        offset += w;
                    }
                }
                Op::SliceCols { x, start, end } => {
                    let mut gx = Array2::zeros(self.values[*x].dim());
                    gx.slice_mut(s![.., *start..*end]).assign(&g);
                    grads[*x] += &gx;
                }
                Op::Gather { table, ids } => {
                    let mut gt = Array2::zeros(self.values[*table].dim());
                    for (i, &id) in ids.iter().enumerate() {
                        let mut target = gt.row_mut(id);
                        target += &g.row(i);
                    }
                    grads[*table] += &gt;
                }
                Op::KlLoss { logits, target, scored } => {
                    let raw = &self.values[*logits];
                    let n = scored.iter().filter(|&&s| s).count().max(1) as f64;
                    let scale = g[(0, 0)] / n;
                    let mut gl = Array2::zeros(raw.dim());
                    for (r, row) in raw.rows().into_iter().enumerate() {
                        if !scored[r] {
                            continue;
                        }
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        for j in 0..raw.ncols() {
                            let p = (row[j] - max).exp() / sum;
                            gl[(r, j)] = scale * (p - target[(r, j)]);
                        }
                    }
                    grads[*logits] += &gl;
                }
            }
        }
        grads
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
