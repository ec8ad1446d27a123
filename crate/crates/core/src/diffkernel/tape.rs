use std::cell::RefCell;
use std::rc::Rc;

use crate::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackwardFn = Box<dyn Fn(&Tensor, &[Rc<Tensor>], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Gradients produced by [`Tape::backward`], indexed by the `Var` handles
/// that were live on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

/// A single-threaded record of forward operations supporting one reverse
/// sweep. Ops validate shapes and return an error naming the op on mismatch.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Value of a node.
    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    /// Scalar value of a `(1, 1)` node.
    pub fn item(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    /// Record a gradient-tracked input (parameters, trainable inputs).
    pub fn leaf(&self, t: &Tensor) -> Var {
        self.push(t.clone(), vec![], true, None)
    }

    /// Record a constant input; no gradient flows into it.
    pub fn constant(&self, t: &Tensor) -> Var {
        self.push(t.clone(), vec![], false, None)
    }

    fn push(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        requires_grad: bool,
        backward: Option<BackwardFn>,
    ) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            requires_grad,
            backward: if requires_grad { backward } else { None },
        });
        Var(nodes.len() - 1)
    }

    fn record(&self, value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Var {
        let ids: Vec<usize> = parents.iter().map(|p| p.0).collect();
        let requires = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        self.push(value, ids, requires, Some(backward))
    }

    fn shape_err(op: &'static str, detail: String) -> Error {
        Error::ShapeMismatch { op, detail }
    }

    // ----- binary elementwise -------------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "add",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let out = va.zip(&vb, |x, y| x + y);
        Ok(self.record(
            out,
            vec![a, b],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "sub",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let out = va.zip(&vb, |x, y| x - y);
        Ok(self.record(
            out,
            vec![a, b],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err(
                "mul",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let out = va.zip(&vb, |x, y| x * y);
        Ok(self.record(
            out,
            vec![a, b],
            Box::new(|g, parents, _| {
                let (pa, pb) = (&parents[0], &parents[1]);
                vec![Some(g.zip(pb, |x, y| x * y)), Some(g.zip(pa, |x, y| x * y))]
            }),
        ))
    }

    /// Add a `(1, n)` bias row to every row of an `(m, n)` matrix.
    pub fn add_bias(&self, mat: Var, bias: Var) -> Result<Var> {
        let (vm, vb) = (self.value(mat), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vm.cols() {
            return Err(Self::shape_err(
                "add_bias",
                format!("{:?} vs {:?}", vm.shape(), vb.shape()),
            ));
        }
        let mut out = (*vm).clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + vb.get(0, c);
                out.set(r, c, v);
            }
        }
        Ok(self.record(
            out,
            vec![mat, bias],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.col_sums())]),
        ))
    }

    // ----- matrix ops ---------------------------------------------------------

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Self::shape_err(
                "matmul",
                format!("{:?} x {:?}", va.shape(), vb.shape()),
            ));
        }
        let out = va.mm(&vb);
        Ok(self.record(
            out,
            vec![a, b],
            Box::new(|g, parents, _| {
                let (pa, pb) = (&parents[0], &parents[1]);
                vec![
                    Some(g.mm(&pb.transposed())),
                    Some(pa.transposed().mm(g)),
                ]
            }),
        ))
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let out = self.value(x).transposed();
        Ok(self.record(
            out,
            vec![x],
            Box::new(|g, _, _| vec![Some(g.transposed())]),
        ))
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Self::shape_err(
                "concat",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let (m, p, q) = (va.rows(), va.cols(), vb.cols());
        let mut out = Tensor::zeros(m, p + q);
        for r in 0..m {
            for c in 0..p {
                out.set(r, c, va.get(r, c));
            }
            for c in 0..q {
                out.set(r, p + c, vb.get(r, c));
            }
        }
        Ok(self.record(
            out,
            vec![a, b],
            Box::new(move |g, _, _| {
                let mut ga = Tensor::zeros(m, p);
                let mut gb = Tensor::zeros(m, q);
                for r in 0..m {
                    for c in 0..p {
                        ga.set(r, c, g.get(r, c));
                    }
                    for c in 0..q {
                        gb.set(r, c, g.get(r, p + c));
                    }
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Stack row blocks on top of each other.
    pub fn stack_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Self::shape_err("stack_rows", "no inputs".into()));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        let cols = values[0].cols();
        if values.iter().any(|v| v.cols() != cols) {
            return Err(Self::shape_err(
                "stack_rows",
                format!(
                    "column counts differ: {:?}",
                    values.iter().map(|v| v.shape()).collect::<Vec<_>>()
                ),
            ));
        }
        let row_counts: Vec<usize> = values.iter().map(|v| v.rows()).collect();
        let total: usize = row_counts.iter().sum();
        let mut data = Vec::with_capacity(total * cols);
        for v in &values {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(total, cols, data);
        Ok(self.record(
            out,
            parts.to_vec(),
            Box::new(move |g, _, _| {
                let mut grads = Vec::with_capacity(row_counts.len());
                let mut r = 0usize;
                for &n in &row_counts {
                    let take: Vec<f64> = g.data()[r * cols..(r + n) * cols].to_vec();
                    grads.push(Some(Tensor::new(n, cols, take)));
                    r += n;
                }
                grads
            }),
        ))
    }

    /// Rows `[start, end)` of a matrix.
    pub fn slice_rows(&self, x: Var, start: usize, end: usize) -> Result<Var> {
        let vx = self.value(x);
        if start >= end || end > vx.rows() {
            return Err(Self::shape_err(
                "slice_rows",
                format!("[{start}, {end}) of {:?}", vx.shape()),
            ));
        }
        let cols = vx.cols();
        let rows = vx.rows();
        let out = Tensor::new(
            end - start,
            cols,
            vx.data()[start * cols..end * cols].to_vec(),
        );
        Ok(self.record(
            out,
            vec![x],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(rows, cols);
                gx.data_mut()[start * cols..end * cols].copy_from_slice(g.data());
                vec![Some(gx)]
            }),
        ))
    }

    // ----- activations ----------------------------------------------------

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        Ok(self.record(
            out,
            vec![x],
            Box::new(|g, _, y| vec![Some(g.zip(y, |gv, yv| gv * yv * (1.0 - yv)))]),
        ))
    }

    pub fn tanh(&self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        Ok(self.record(
            out,
            vec![x],
            Box::new(|g, _, y| vec![Some(g.zip(y, |gv, yv| gv * (1.0 - yv * yv)))]),
        ))
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        Ok(self.record(
            out,
            vec![x],
            Box::new(|g, parents, _| {
                vec![Some(
                    g.zip(&parents[0], |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
                )]
            }),
        ))
    }

    /// `max(0, x)`; same op as [`Tape::relu`], named for its use as the
    /// positive part inside hinge-style penalties.
    pub fn hinge_pos(&self, x: Var) -> Result<Var> {
        self.relu(x)
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax_rows(&self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (m, n) = vx.shape();
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            let row = vx.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for c in 0..n {
                out.set(r, c, exps[c] / sum);
            }
        }
        Ok(self.record(
            out,
            vec![x],
            Box::new(move |g, _, y| {
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    let dot: f64 = (0..n).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..n {
                        gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Mean over rows: `(m, n)` to `(1, n)`.
    pub fn mean_pool_rows(&self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (m, n) = vx.shape();
        if m == 0 {
            return Err(Self::shape_err("mean_pool", "empty input".into()));
        }
        let mut out = vx.col_sums();
        for v in out.data_mut() {
            *v /= m as f64;
        }
        Ok(self.record(
            out,
            vec![x],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    for c in 0..n {
                        gx.set(r, c, g.get(0, c) / m as f64);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Gather embedding rows: `(len(ids), dim)` from a `(vocab, dim)` table.
    pub fn embedding_lookup(&self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let (vocab, dim) = vt.shape();
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Self::shape_err(
                "embedding_lookup",
                format!("id {bad} out of range for vocab {vocab}"),
            ));
        }
        if ids.is_empty() {
            return Err(Self::shape_err("embedding_lookup", "no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(vt.row_slice(i));
        }
        let out = Tensor::new(ids.len(), dim, data);
        let ids = ids.to_vec();
        Ok(self.record(
            out,
            vec![table],
            Box::new(move |g, _, _| {
                let mut gt = Tensor::zeros(vocab, dim);
                for (r, &i) in ids.iter().enumerate() {
                    for c in 0..dim {
                        let v = gt.get(i, c) + g.get(r, c);
                        gt.set(i, c, v);
                    }
                }
                vec![Some(gt)]
            }),
        ))
    }

    /// Row-wise prefix sums.
    pub fn cumsum_rows(&self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (m, n) = vx.shape();
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..n {
                acc += vx.get(r, c);
                out.set(r, c, acc);
            }
        }
        Ok(self.record(
            out,
            vec![x],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(m, n);
                for r in 0..m {
                    let mut acc = 0.0;
                    for c in (0..n).rev() {
                        acc += g.get(r, c);
                        gx.set(r, c, acc);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    // ----- scalar reductions and scaling ------------------------------------

    pub fn scale(&self, x: Var, k: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * k);
        Ok(self.record(
            out,
            vec![x],
            Box::new(move |g, _, _| vec![Some(g.map(|v| v * k))]),
        ))
    }

    pub fn sum_all(&self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (m, n) = vx.shape();
        let total: f64 = vx.data().iter().sum();
        Ok(self.record(
            Tensor::scalar(total),
            vec![x],
            Box::new(move |g, _, _| vec![Some(Tensor::full(m, n, g.item()))]),
        ))
    }

    /// Row-normalize to zero mean and unit variance, then apply an affine
    /// `(1, n)` gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = vx.shape();
        if vg.shape() != (1, n) || vb.shape() != (1, n) {
            return Err(Self::shape_err(
                "layer_norm",
                format!(
                    "x {:?}, gain {:?}, bias {:?}",
                    vx.shape(),
                    vg.shape(),
                    vb.shape()
                ),
            ));
        }
        let mut normed = Tensor::zeros(m, n);
        let mut inv_std = vec![0.0; m];
        for r in 0..m {
            let row = vx.row_slice(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                normed.set(r, c, (row[c] - mean) * inv);
            }
        }
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                out.set(r, c, normed.get(r, c) * vg.get(0, c) + vb.get(0, c));
            }
        }
        let normed_for_back = normed;
        Ok(self.record(
            out,
            vec![x, gain, bias],
            Box::new(move |g, parents, _| {
                let vg = &parents[1];
                let mut gx = Tensor::zeros(m, n);
                let mut ggain = Tensor::zeros(1, n);
                let mut gbias = Tensor::zeros(1, n);
                for r in 0..m {
                    let mut dnorm = vec![0.0; n];
                    for c in 0..n {
                        let go = g.get(r, c);
                        ggain.set(0, c, ggain.get(0, c) + go * normed_for_back.get(r, c));
                        gbias.set(0, c, gbias.get(0, c) + go);
                        dnorm[c] = go * vg.get(0, c);
                    }
                    let mean_dn = dnorm.iter().sum::<f64>() / n as f64;
                    let mean_dn_xhat = (0..n)
                        .map(|c| dnorm[c] * normed_for_back.get(r, c))
                        .sum::<f64>()
                        / n as f64;
                    for c in 0..n {
                        let xhat = normed_for_back.get(r, c);
                        gx.set(
                            r,
                            c,
                            inv_std[r] * (dnorm[c] - mean_dn - xhat * mean_dn_xhat),
                        );
                    }
                }
                vec![Some(gx), Some(ggain), Some(gbias)]
            }),
        ))
    }

    // ----- losses -----------------------------------------------------------

    /// Sum over rows of `-log softmax(logits_r)[target_r]`.
    pub fn cross_entropy_sum(&self, logits: Var, targets: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let (m, n) = vl.shape();
        if targets.len() != m {
            return Err(Self::shape_err(
                "cross_entropy",
                format!("{} targets for {m} rows", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Self::shape_err(
                "cross_entropy",
                format!("target {bad} out of range for {n} classes"),
            ));
        }
        let mut probs = Tensor::zeros(m, n);
        let mut loss = 0.0;
        for r in 0..m {
            let row = vl.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let lse = max + sum.ln();
            loss += lse - row[targets[r]];
            for c in 0..n {
                probs.set(r, c, exps[c] / sum);
            }
        }
        let targets = targets.to_vec();
        Ok(self.record(
            Tensor::scalar(loss),
            vec![logits],
            Box::new(move |g, _, _| {
                let gs = g.item();
                let mut gl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    gl.set(r, t, gl.get(r, t) - 1.0);
                }
                for v in gl.data_mut() {
                    *v *= gs;
                }
                vec![Some(gl)]
            }),
        ))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels.
    /// Probabilities are clamped to `[1e-12, 1 - 1e-12]`.
    pub fn binary_cross_entropy_mean(&self, probs: Var, labels: &[f64]) -> Result<Var> {
        const EPS: f64 = 1e-12;
        let vp = self.value(probs);
        if labels.len() != vp.numel() {
            return Err(Self::shape_err(
                "binary_cross_entropy",
                format!("{} labels for {} probabilities", labels.len(), vp.numel()),
            ));
        }
        let m = labels.len() as f64;
        let mut loss = 0.0;
        for (&p, &y) in vp.data().iter().zip(labels) {
            let pc = p.clamp(EPS, 1.0 - EPS);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        loss /= m;
        let labels = labels.to_vec();
        let (r, c) = vp.shape();
        Ok(self.record(
            Tensor::scalar(loss),
            vec![probs],
            Box::new(move |g, parents, _| {
                let gs = g.item();
                let vp = &parents[0];
                let mut gp = Tensor::zeros(r, c);
                for (i, (&p, &y)) in vp.data().iter().zip(&labels).enumerate() {
                    let pc = p.clamp(EPS, 1.0 - EPS);
                    let d = if (EPS..=1.0 - EPS).contains(&p) {
                        (pc - y) / (pc * (1.0 - pc))
                    } else {
                        0.0
                    };
                    gp.data_mut()[i] = gs * d / m;
                }
                vec![Some(gp)]
            }),
        ))
    }

    // ----- reverse sweep ------------------------------------------------------

    /// Reverse-mode sweep from a scalar loss. Returns gradients for every
    /// grad-tracked node and clears the tape; all `Var` handles become
    /// invalid afterwards.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        {
            let nodes = self.nodes.borrow();
            let lv = &nodes[loss.0].value;
            if !lv.is_scalar() {
                return Err(Error::NonScalarLoss {
                    rows: lv.rows(),
                    cols: lv.cols(),
                });
            }
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad_out) = grads[id].clone() else {
                continue;
            };
            let Some(backward) = &node.backward else {
                continue;
            };
            let parent_values: Vec<Rc<Tensor>> = node
                .parents
                .iter()
                .map(|&p| Rc::clone(&nodes[p].value))
                .collect();
            let contributions = backward(&grad_out, &parent_values, &node.value);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (&pid, contrib) in node.parents.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                match &mut grads[pid] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
        }
        drop(nodes);
        self.nodes.borrow_mut().clear();
        Ok(Gradients { grads })
    }
}

/// Central finite-difference gradient of `f` with respect to `input`,
/// evaluated coordinate by coordinate. `f` must be a pure function of the
/// tensor value. Used as the numeric oracle for gradient checks.
pub fn finite_difference_grad(
    input: &Tensor,
    eps: f64,
    mut f: impl FnMut(&Tensor) -> f64,
) -> Tensor {
    let mut grad = Tensor::zeros(input.rows(), input.cols());
    for i in 0..input.numel() {
        let mut plus = input.clone();
        plus.data_mut()[i] += eps;
        let mut minus = input.clone();
        minus.data_mut()[i] -= eps;
        grad.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
    }
    grad
}

/// Largest relative error between an analytic and a numeric gradient, using
/// `|a - n| / max(1, |a|, |n|)` per coordinate.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}
