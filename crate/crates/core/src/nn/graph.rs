//! Reverse-mode automatic differentiation over f64 tensors.
//!
//! A `Graph` is a tape: every operation evaluates eagerly, stores its
//! result, and records what it needs for the backward sweep. `Tensor` is a
//! cheap handle (graph pointer + node id). One graph serves one forward
//! pass; parameters live outside in a [`ParamStore`](super::ParamStore) and
//! re-enter each pass as leaves.
//!
//! Everything is single threaded and accumulation order is fixed, so a
//! given graph construction always produces bit-identical values and
//! gradients.
//!
//! Shape errors are programming errors, not runtime conditions, so ops
//! panic on mismatch rather than returning `Result`.

use super::conv;
use super::norm::{self, BnCache};
use super::params::{ParamRef, ParamStore, StoreId};
use std::cell::RefCell;
use std::rc::Rc;

pub(crate) enum OpRec {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Sqrt(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    Relu(usize),
    LeakyRelu { x: usize, slope: f64 },
    /// y = max(0,x) + alpha * min(0,x); alpha is a single learnable scalar.
    Prelu { x: usize, alpha: usize },
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    /// [m,n] + broadcast [n]
    AddRow { x: usize, row: usize, m: usize, n: usize },
    Sum(usize),
    Mean(usize),
    SumAxis1 { x: usize, m: usize, n: usize },
    /// Column-wise max over rows: [m,n] -> [n]
    MaxAxis0 { x: usize, n: usize, argmax: Vec<usize> },
    /// Row-group max: [groups*k, n] -> [groups, n]
    MaxGroup { x: usize, n: usize, argmax: Vec<usize> },
    ConcatCols { a: usize, b: usize, m: usize, na: usize, nb: usize },
    GatherRows { x: usize, indices: Rc<Vec<usize>>, n: usize },
    /// [n] -> [m,n], each row a copy
    BroadcastRow { row: usize, m: usize, n: usize },
    Reshape(usize),
    Conv2d { x: usize, w: usize, b: usize, meta: conv::Conv2dMeta },
    MaxPool2d { x: usize, argmax: Vec<usize> },
    Conv3d { x: usize, w: usize, b: usize, meta: conv::Conv3dMeta },
    MaxPool3d { x: usize, argmax: Vec<usize> },
    BatchNormTrain { x: usize, gamma: usize, beta: usize, cache: BnCache },
    BatchNormEval { x: usize, gamma: usize, beta: usize, mu: Vec<f64>, var: Vec<f64>, eps: f64 },
}

pub(crate) struct GraphInner {
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) shapes: Vec<Vec<usize>>,
    pub(crate) ops: Vec<OpRec>,
    pub(crate) param_nodes: Vec<(StoreId, ParamRef, usize)>,
}

#[derive(Clone)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one node of a graph.
#[derive(Clone)]
pub struct Tensor {
    graph: Rc<RefCell<GraphInner>>,
    id: usize,
    shape: Vec<usize>,
}

/// Gradients of one scalar node with respect to every node of its graph.
pub struct Grads {
    by_node: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Gradient w.r.t. a tensor; zeros if the node does not influence the loss.
    pub fn of(&self, t: &Tensor) -> Vec<f64> {
        self.by_node[t.id]
            .clone()
            .unwrap_or_else(|| vec![0.0; t.len()])
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(GraphInner {
                values: Vec::new(),
                shapes: Vec::new(),
                ops: Vec::new(),
                param_nodes: Vec::new(),
            })),
        }
    }

    fn push(&self, value: Vec<f64>, shape: Vec<usize>, op: OpRec) -> Tensor {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>().max(1));
        let mut g = self.inner.borrow_mut();
        g.values.push(value);
        g.shapes.push(shape.clone());
        g.ops.push(op);
        Tensor {
            graph: Rc::clone(&self.inner),
            id: g.values.len() - 1,
            shape,
        }
    }

    /// Constant leaf; gradients still accumulate but nothing reads them.
    pub fn constant(&self, value: Vec<f64>, shape: &[usize]) -> Tensor {
        assert_eq!(
            value.len(),
            shape.iter().product::<usize>().max(1),
            "constant data does not match shape {shape:?}"
        );
        self.push(value, shape.to_vec(), OpRec::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Tensor {
        self.push(vec![value], vec![], OpRec::Leaf)
    }

    /// Leaf bound to a stored parameter; its gradient is retrievable through
    /// [`Graph::param_grads`]. Several stores may be bound in one graph;
    /// grads are kept apart by store identity.
    pub fn param(&self, store: &ParamStore, r: ParamRef) -> Tensor {
        let p = store.get(r);
        let t = self.push(p.data.clone(), p.shape.clone(), OpRec::Leaf);
        self.inner.borrow_mut().param_nodes.push((store.id(), r, t.id));
        t
    }

    /// Runs the backward sweep from a scalar loss.
    pub fn backward(&self, loss: &Tensor) -> Grads {
        assert!(
            Rc::ptr_eq(&self.inner, &loss.graph),
            "loss belongs to a different graph"
        );
        assert_eq!(loss.len(), 1, "backward needs a scalar loss");
        let g = self.inner.borrow();
        let n = g.values.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..n).rev() {
            let Some(gout) = grads[id].take() else { continue };
            backward_one(&g, id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Grads { by_node: grads }
    }

    /// Gradients for every parameter leaf, aligned with `store` order.
    /// Parameters bound more than once accumulate across bindings.
    pub fn param_grads(&self, store: &ParamStore, grads: &Grads) -> Vec<Vec<f64>> {
        let g = self.inner.borrow();
        let mut out: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.data.len()])
            .collect();
        for &(sid, r, node) in &g.param_nodes {
            if sid != store.id() {
                continue;
            }
            if let Some(gn) = &grads.by_node[node] {
                for (o, x) in out[r.index()].iter_mut().zip(gn) {
                    *o += x;
                }
            }
        }
        out
    }
}

fn ensure<'a>(slot: &'a mut Option<Vec<f64>>, len: usize) -> &'a mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn backward_one(g: &GraphInner, id: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let vlen = |i: usize| g.values[i].len();
    match &g.ops[id] {
        OpRec::Leaf => {}
        OpRec::Add(a, b) => {
            let ga = ensure(&mut grads[*a], vlen(*a));
            for (o, x) in ga.iter_mut().zip(gout) {
                *o += x;
            }
            let gb = ensure(&mut grads[*b], vlen(*b));
            for (o, x) in gb.iter_mut().zip(gout) {
                *o += x;
            }
        }
        OpRec::Sub(a, b) => {
            let ga = ensure(&mut grads[*a], vlen(*a));
            for (o, x) in ga.iter_mut().zip(gout) {
                *o += x;
            }
            let gb = ensure(&mut grads[*b], vlen(*b));
            for (o, x) in gb.iter_mut().zip(gout) {
                *o -= x;
            }
        }
        OpRec::Mul(a, b) => {
            {
                let vb = &g.values[*b];
                let ga = ensure(&mut grads[*a], vlen(*a));
                for i in 0..gout.len() {
                    ga[i] += gout[i] * vb[i];
                }
            }
            let va = &g.values[*a];
            let gb = ensure(&mut grads[*b], vlen(*b));
            for i in 0..gout.len() {
                gb[i] += gout[i] * va[i];
            }
        }
        OpRec::Scale(x, c) => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (o, go) in gx.iter_mut().zip(gout) {
                *o += go * c;
            }
        }
        OpRec::AddScalar(x) => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (o, go) in gx.iter_mut().zip(gout) {
                *o += go;
            }
        }
        OpRec::Exp(x) => {
            let vy = &g.values[id];
            let gx = ensure(&mut grads[*x], vlen(*x));
            for i in 0..gout.len() {
                gx[i] += gout[i] * vy[i];
            }
        }
        OpRec::Sqrt(x) => {
            let vy = &g.values[id];
            let gx = ensure(&mut grads[*x], vlen(*x));
            for i in 0..gout.len() {
                // Zero subgradient at 0, matching the chamfer oracle's
                // convention for coincident points.
                if vy[i] != 0.0 {
                    gx[i] += gout[i] * 0.5 / vy[i];
                }
            }
        }
        OpRec::Clamp { x, lo, hi } => {
            let vx = &g.values[*x];
            let gx = ensure(&mut grads[*x], vx.len());
            for i in 0..gout.len() {
                if vx[i] > *lo && vx[i] < *hi {
                    gx[i] += gout[i];
                }
            }
        }
        OpRec::Relu(x) => {
            let vx = &g.values[*x];
            let gx = ensure(&mut grads[*x], vx.len());
            for i in 0..gout.len() {
                if vx[i] > 0.0 {
                    gx[i] += gout[i];
                }
            }
        }
        OpRec::LeakyRelu { x, slope } => {
            let vx = &g.values[*x];
            let gx = ensure(&mut grads[*x], vx.len());
            for i in 0..gout.len() {
                gx[i] += gout[i] * if vx[i] > 0.0 { 1.0 } else { *slope };
            }
        }
        OpRec::Prelu { x, alpha } => {
            let a = g.values[*alpha][0];
            {
                let vx = &g.values[*x];
                let gx = ensure(&mut grads[*x], vx.len());
                for i in 0..gout.len() {
                    gx[i] += gout[i] * if vx[i] > 0.0 { 1.0 } else { a };
                }
            }
            let vx = &g.values[*x];
            let galpha = ensure(&mut grads[*alpha], 1);
            let mut acc = 0.0;
            for i in 0..gout.len() {
                if vx[i] <= 0.0 {
                    acc += gout[i] * vx[i];
                }
            }
            galpha[0] += acc;
        }
        OpRec::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            {
                let vb = &g.values[*b];
                let ga = ensure(&mut grads[*a], m * k);
                // dA = dY B^T
                for i in 0..m {
                    for j in 0..n {
                        let go = gout[i * n + j];
                        if go != 0.0 {
                            for t in 0..k {
                                ga[i * k + t] += go * vb[t * n + j];
                            }
                        }
                    }
                }
            }
            let va = &g.values[*a];
            let gb = ensure(&mut grads[*b], k * n);
            // dB = A^T dY
            for i in 0..m {
                for t in 0..k {
                    let av = va[i * k + t];
                    if av != 0.0 {
                        for j in 0..n {
                            gb[t * n + j] += av * gout[i * n + j];
                        }
                    }
                }
            }
        }
        OpRec::AddRow { x, row, m, n } => {
            {
                let gx = ensure(&mut grads[*x], m * n);
                for (o, go) in gx.iter_mut().zip(gout) {
                    *o += go;
                }
            }
            let grow = ensure(&mut grads[*row], *n);
            for i in 0..*m {
                for j in 0..*n {
                    grow[j] += gout[i * n + j];
                }
            }
        }
        OpRec::Sum(x) => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for o in gx.iter_mut() {
                *o += gout[0];
            }
        }
        OpRec::Mean(x) => {
            let n = vlen(*x) as f64;
            let gx = ensure(&mut grads[*x], vlen(*x));
            for o in gx.iter_mut() {
                *o += gout[0] / n;
            }
        }
        OpRec::SumAxis1 { x, m, n } => {
            let gx = ensure(&mut grads[*x], m * n);
            for i in 0..*m {
                for j in 0..*n {
                    gx[i * n + j] += gout[i];
                }
            }
        }
        OpRec::MaxAxis0 { x, n, argmax } => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for j in 0..*n {
                gx[argmax[j] * n + j] += gout[j];
            }
        }
        OpRec::MaxGroup { x, n, argmax } => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            let groups = gout.len() / n;
            for gi in 0..groups {
                for j in 0..*n {
                    gx[argmax[gi * n + j] * n + j] += gout[gi * n + j];
                }
            }
        }
        OpRec::ConcatCols { a, b, m, na, nb } => {
            {
                let ga = ensure(&mut grads[*a], m * na);
                for i in 0..*m {
                    for j in 0..*na {
                        ga[i * na + j] += gout[i * (na + nb) + j];
                    }
                }
            }
            let gb = ensure(&mut grads[*b], m * nb);
            for i in 0..*m {
                for j in 0..*nb {
                    gb[i * nb + j] += gout[i * (na + nb) + na + j];
                }
            }
        }
        OpRec::GatherRows { x, indices, n } => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (r, &src) in indices.iter().enumerate() {
                for j in 0..*n {
                    gx[src * n + j] += gout[r * n + j];
                }
            }
        }
        OpRec::BroadcastRow { row, m, n } => {
            let grow = ensure(&mut grads[*row], *n);
            for i in 0..*m {
                for j in 0..*n {
                    grow[j] += gout[i * n + j];
                }
            }
        }
        OpRec::Reshape(x) => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (o, go) in gx.iter_mut().zip(gout) {
                *o += go;
            }
        }
        OpRec::Conv2d { x, w, b, meta } => {
            let (vx, vw) = (&g.values[*x], &g.values[*w]);
            let (dx, dw, db) = conv::conv2d_backward(vx, vw, gout, meta);
            accumulate(&mut grads[*x], &dx);
            accumulate(&mut grads[*w], &dw);
            accumulate(&mut grads[*b], &db);
        }
        OpRec::MaxPool2d { x, argmax } => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (i, &src) in argmax.iter().enumerate() {
                gx[src] += gout[i];
            }
        }
        OpRec::Conv3d { x, w, b, meta } => {
            let (vx, vw) = (&g.values[*x], &g.values[*w]);
            let (dx, dw, db) = conv::conv3d_backward(vx, vw, gout, meta);
            accumulate(&mut grads[*x], &dx);
            accumulate(&mut grads[*w], &dw);
            accumulate(&mut grads[*b], &db);
        }
        OpRec::MaxPool3d { x, argmax } => {
            let gx = ensure(&mut grads[*x], vlen(*x));
            for (i, &src) in argmax.iter().enumerate() {
                gx[src] += gout[i];
            }
        }
        OpRec::BatchNormTrain { x, gamma, beta, cache } => {
            let vx = &g.values[*x];
            let vgamma = &g.values[*gamma];
            let (dx, dgamma, dbeta) = norm::batchnorm_backward(vx, vgamma, gout, cache);
            accumulate(&mut grads[*x], &dx);
            accumulate(&mut grads[*gamma], &dgamma);
            accumulate(&mut grads[*beta], &dbeta);
        }
        OpRec::BatchNormEval { x, gamma, beta, mu, var, eps } => {
            let vx = &g.values[*x];
            let vgamma = &g.values[*gamma];
            let c = vgamma.len();
            // Layout [b, c, s]: channel index = (i / s) % c.
            let spatial_len: usize = g.shapes[*x][2..].iter().product::<usize>().max(1);
            {
                let gx = ensure(&mut grads[*x], vx.len());
                for i in 0..vx.len() {
                    let ch = (i / spatial_len) % c;
                    gx[i] += gout[i] * vgamma[ch] / (var[ch] + eps).sqrt();
                }
            }
            {
                let ggamma = ensure(&mut grads[*gamma], c);
                for i in 0..vx.len() {
                    let ch = (i / spatial_len) % c;
                    ggamma[ch] += gout[i] * (vx[i] - mu[ch]) / (var[ch] + eps).sqrt();
                }
            }
            let gbeta = ensure(&mut grads[*beta], c);
            for i in 0..vx.len() {
                let ch = (i / spatial_len) % c;
                gbeta[ch] += gout[i];
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    let dst = ensure(slot, delta.len());
    for (o, d) in dst.iter_mut().zip(delta) {
        *o += d;
    }
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product::<usize>().max(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Snapshot of the node's value.
    pub fn value(&self) -> Vec<f64> {
        self.graph.borrow().values[self.id].clone()
    }

    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.len(), 1, "scalar_value on non-scalar tensor");
        self.graph.borrow().values[self.id][0]
    }

    fn graph_handle(&self) -> Graph {
        Graph {
            inner: Rc::clone(&self.graph),
        }
    }

    fn same_graph(&self, other: &Tensor) {
        assert!(
            Rc::ptr_eq(&self.graph, &other.graph),
            "tensors belong to different graphs"
        );
    }

    fn zip_elementwise(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.same_graph(other);
        assert_eq!(
            self.shape, other.shape,
            "elementwise op on mismatched shapes {:?} vs {:?}",
            self.shape, other.shape
        );
        let g = self.graph.borrow();
        g.values[self.id]
            .iter()
            .zip(&g.values[other.id])
            .map(|(&a, &b)| f(a, b))
            .collect()
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        let v = self.zip_elementwise(other, |a, b| a + b);
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        let v = self.zip_elementwise(other, |a, b| a - b);
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        let v = self.zip_elementwise(other, |a, b| a * b);
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Mul(self.id, other.id))
    }

    pub fn square(&self) -> Tensor {
        self.mul(self)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id].iter().map(|x| x * c).collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id].iter().map(|x| x + c).collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::AddScalar(self.id))
    }

    pub fn exp(&self) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id].iter().map(|x| x.exp()).collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Exp(self.id))
    }

    pub fn sqrt(&self) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id]
            .iter()
            .map(|x| x.sqrt())
            .collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Sqrt(self.id))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        assert!(lo < hi);
        let v: Vec<f64> = self.graph.borrow().values[self.id]
            .iter()
            .map(|x| x.clamp(lo, hi))
            .collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Clamp { x: self.id, lo, hi })
    }

    pub fn relu(&self) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id]
            .iter()
            .map(|x| x.max(0.0))
            .collect();
        self.graph_handle()
            .push(v, self.shape.clone(), OpRec::Relu(self.id))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let v: Vec<f64> = self.graph.borrow().values[self.id]
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        self.graph_handle().push(
            v,
            self.shape.clone(),
            OpRec::LeakyRelu { x: self.id, slope },
        )
    }

    pub fn prelu(&self, alpha: &Tensor) -> Tensor {
        self.same_graph(alpha);
        assert_eq!(alpha.len(), 1, "prelu expects a scalar alpha");
        let a = alpha.scalar_value();
        let v: Vec<f64> = self.graph.borrow().values[self.id]
            .iter()
            .map(|&x| if x > 0.0 { x } else { a * x })
            .collect();
        self.graph_handle().push(
            v,
            self.shape.clone(),
            OpRec::Prelu { x: self.id, alpha: alpha.id },
        )
    }

    /// [m,k] x [k,n] -> [m,n]
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        self.same_graph(other);
        assert_eq!(self.shape.len(), 2, "matmul lhs must be 2-D");
        assert_eq!(other.shape.len(), 2, "matmul rhs must be 2-D");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut v = vec![0.0; m * n];
        {
            let g = self.graph.borrow();
            let a = &g.values[self.id];
            let b = &g.values[other.id];
            for i in 0..m {
                for t in 0..k {
                    let av = a[i * k + t];
                    if av != 0.0 {
                        let brow = &b[t * n..(t + 1) * n];
                        let vrow = &mut v[i * n..(i + 1) * n];
                        for j in 0..n {
                            vrow[j] += av * brow[j];
                        }
                    }
                }
            }
        }
        self.graph_handle().push(
            v,
            vec![m, n],
            OpRec::MatMul { a: self.id, b: other.id, m, k, n },
        )
    }

    /// Adds a [n] bias row to every row of [m,n].
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        self.same_graph(row);
        assert_eq!(self.shape.len(), 2);
        let (m, n) = (self.shape[0], self.shape[1]);
        assert_eq!(row.len(), n, "bias length {} vs {n}", row.len());
        let mut v = self.graph.borrow().values[self.id].clone();
        {
            let g = self.graph.borrow();
            let r = &g.values[row.id];
            for i in 0..m {
                for j in 0..n {
                    v[i * n + j] += r[j];
                }
            }
        }
        self.graph_handle().push(
            v,
            self.shape.clone(),
            OpRec::AddRow { x: self.id, row: row.id, m, n },
        )
    }

    pub fn sum(&self) -> Tensor {
        let v = self.graph.borrow().values[self.id].iter().sum();
        self.graph_handle().push(vec![v], vec![], OpRec::Sum(self.id))
    }

    pub fn mean(&self) -> Tensor {
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let v = x.iter().sum::<f64>() / x.len() as f64;
        drop(g);
        self.graph_handle().push(vec![v], vec![], OpRec::Mean(self.id))
    }

    /// Row sums: [m,n] -> [m]
    pub fn sum_axis1(&self) -> Tensor {
        assert_eq!(self.shape.len(), 2);
        let (m, n) = (self.shape[0], self.shape[1]);
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let v: Vec<f64> = (0..m).map(|i| x[i * n..(i + 1) * n].iter().sum()).collect();
        drop(g);
        self.graph_handle()
            .push(v, vec![m], OpRec::SumAxis1 { x: self.id, m, n })
    }

    /// Column-wise max over rows: [m,n] -> [n]; ties keep the lowest row.
    pub fn max_axis0(&self) -> Tensor {
        assert_eq!(self.shape.len(), 2);
        let (m, n) = (self.shape[0], self.shape[1]);
        assert!(m > 0);
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let mut v = vec![f64::NEG_INFINITY; n];
        let mut argmax = vec![0usize; n];
        for i in 0..m {
            for j in 0..n {
                if x[i * n + j] > v[j] {
                    v[j] = x[i * n + j];
                    argmax[j] = i;
                }
            }
        }
        drop(g);
        self.graph_handle()
            .push(v, vec![n], OpRec::MaxAxis0 { x: self.id, n, argmax })
    }

    /// Max over consecutive groups of k rows: [groups*k, n] -> [groups, n].
    pub fn max_group(&self, k: usize) -> Tensor {
        assert_eq!(self.shape.len(), 2);
        let (rows, n) = (self.shape[0], self.shape[1]);
        assert!(k > 0 && rows % k == 0, "rows {rows} not divisible by k {k}");
        let groups = rows / k;
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let mut v = vec![f64::NEG_INFINITY; groups * n];
        let mut argmax = vec![0usize; groups * n];
        for gi in 0..groups {
            for r in 0..k {
                let row = gi * k + r;
                for j in 0..n {
                    if x[row * n + j] > v[gi * n + j] {
                        v[gi * n + j] = x[row * n + j];
                        argmax[gi * n + j] = row;
                    }
                }
            }
        }
        drop(g);
        self.graph_handle().push(
            v,
            vec![groups, n],
            OpRec::MaxGroup { x: self.id, n, argmax },
        )
    }

    /// Column concat: [m,na] ++ [m,nb] -> [m,na+nb]
    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        self.same_graph(other);
        assert_eq!(self.shape.len(), 2);
        assert_eq!(other.shape.len(), 2);
        let (m, na) = (self.shape[0], self.shape[1]);
        let (m2, nb) = (other.shape[0], other.shape[1]);
        assert_eq!(m, m2, "concat_cols row mismatch {m} vs {m2}");
        let g = self.graph.borrow();
        let a = &g.values[self.id];
        let b = &g.values[other.id];
        let mut v = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            v.extend_from_slice(&a[i * na..(i + 1) * na]);
            v.extend_from_slice(&b[i * nb..(i + 1) * nb]);
        }
        drop(g);
        self.graph_handle().push(
            v,
            vec![m, na + nb],
            OpRec::ConcatCols { a: self.id, b: other.id, m, na, nb },
        )
    }

    /// Row gather: rows may repeat; [m,n] with r indices -> [r,n]
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        assert_eq!(self.shape.len(), 2);
        let (m, n) = (self.shape[0], self.shape[1]);
        assert!(indices.iter().all(|&i| i < m), "gather index out of range");
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let mut v = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            v.extend_from_slice(&x[i * n..(i + 1) * n]);
        }
        drop(g);
        self.graph_handle().push(
            v,
            vec![indices.len(), n],
            OpRec::GatherRows {
                x: self.id,
                indices: Rc::new(indices.to_vec()),
                n,
            },
        )
    }

    /// [n] -> [m,n]
    pub fn broadcast_row(&self, m: usize) -> Tensor {
        let n = self.len();
        assert!(self.shape.len() <= 1, "broadcast_row needs a vector");
        let g = self.graph.borrow();
        let x = &g.values[self.id];
        let mut v = Vec::with_capacity(m * n);
        for _ in 0..m {
            v.extend_from_slice(x);
        }
        drop(g);
        self.graph_handle().push(
            v,
            vec![m, n],
            OpRec::BroadcastRow { row: self.id, m, n },
        )
    }

    /// Same data, new shape (element count must match).
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            self.len(),
            shape.iter().product::<usize>().max(1),
            "reshape to incompatible shape {shape:?}"
        );
        let v = self.graph.borrow().values[self.id].clone();
        self.graph_handle().push(v, shape.to_vec(), OpRec::Reshape(self.id))
    }

    /// Same-padded stride-1 2D convolution. x: [b,ic,h,w], w: [oc,ic,kh,kw]
    /// (odd kernels), bias: [oc] -> [b,oc,h,w].
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor) -> Tensor {
        self.same_graph(weight);
        self.same_graph(bias);
        let meta = conv::Conv2dMeta::infer(&self.shape, &weight.shape, &bias.shape);
        let g = self.graph.borrow();
        let v = conv::conv2d_forward(&g.values[self.id], &g.values[weight.id], &g.values[bias.id], &meta);
        drop(g);
        let shape = meta.out_shape();
        self.graph_handle().push(
            v,
            shape,
            OpRec::Conv2d { x: self.id, w: weight.id, b: bias.id, meta },
        )
    }

    /// 2x2 stride-2 max pool; trailing odd row/col dropped. [b,c,h,w]
    pub fn maxpool2d(&self) -> Tensor {
        let meta = conv::Pool2dMeta::infer(&self.shape);
        let g = self.graph.borrow();
        let (v, argmax) = conv::maxpool2d_forward(&g.values[self.id], &meta);
        drop(g);
        let shape = meta.out_shape();
        self.graph_handle()
            .push(v, shape, OpRec::MaxPool2d { x: self.id, argmax })
    }

    /// Same-padded stride-1 3D convolution. x: [b,ic,d,h,w].
    pub fn conv3d(&self, weight: &Tensor, bias: &Tensor) -> Tensor {
        self.same_graph(weight);
        self.same_graph(bias);
        let meta = conv::Conv3dMeta::infer(&self.shape, &weight.shape, &bias.shape);
        let g = self.graph.borrow();
        let v = conv::conv3d_forward(&g.values[self.id], &g.values[weight.id], &g.values[bias.id], &meta);
        drop(g);
        let shape = meta.out_shape();
        self.graph_handle().push(
            v,
            shape,
            OpRec::Conv3d { x: self.id, w: weight.id, b: bias.id, meta },
        )
    }

    /// 2x2x2 stride-2 max pool. [b,c,d,h,w]
    pub fn maxpool3d(&self) -> Tensor {
        let meta = conv::Pool3dMeta::infer(&self.shape);
        let g = self.graph.borrow();
        let (v, argmax) = conv::maxpool3d_forward(&g.values[self.id], &meta);
        drop(g);
        let shape = meta.out_shape();
        self.graph_handle()
            .push(v, shape, OpRec::MaxPool3d { x: self.id, argmax })
    }

    /// Batch norm over [b, c, spatial…]: normalizes per channel.
    /// In training mode uses batch statistics and returns them for running
    /// averages; in eval mode `running` supplies (mu, var) as constants.
    pub fn batch_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> (Tensor, Option<(Vec<f64>, Vec<f64>)>) {
        self.same_graph(gamma);
        self.same_graph(beta);
        assert!(self.shape.len() >= 2, "batch_norm input must be [b,c,..]");
        let c = self.shape[1];
        assert_eq!(gamma.len(), c);
        assert_eq!(beta.len(), c);
        let g = self.graph.borrow();
        match running {
            None => {
                let (v, cache) = norm::batchnorm_forward_train(
                    &g.values[self.id],
                    &g.values[gamma.id],
                    &g.values[beta.id],
                    &self.shape,
                    eps,
                );
                let stats = (cache.mu.clone(), cache.var.clone());
                drop(g);
                let t = self.graph_handle().push(
                    v,
                    self.shape.clone(),
                    OpRec::BatchNormTrain {
                        x: self.id,
                        gamma: gamma.id,
                        beta: beta.id,
                        cache,
                    },
                );
                (t, Some(stats))
            }
            Some((mu, var)) => {
                assert_eq!(mu.len(), c);
                assert_eq!(var.len(), c);
                let spatial: usize = self.shape[2..].iter().product::<usize>().max(1);
                let x = &g.values[self.id];
                let vgamma = &g.values[gamma.id];
                let vbeta = &g.values[beta.id];
                let mut v = vec![0.0; x.len()];
                for (i, out) in v.iter_mut().enumerate() {
                    let ch = (i / spatial) % c;
                    *out = vgamma[ch] * (x[i] - mu[ch]) / (var[ch] + eps).sqrt() + vbeta[ch];
                }
                drop(g);
                let t = self.graph_handle().push(
                    v,
                    self.shape.clone(),
                    OpRec::BatchNormEval {
                        x: self.id,
                        gamma: gamma.id,
                        beta: beta.id,
                        mu: mu.to_vec(),
                        var: var.to_vec(),
                        eps,
                    },
                );
                (t, None)
            }
        }
    }
}
