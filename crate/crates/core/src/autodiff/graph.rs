use std::collections::HashMap;

use super::{AutodiffError, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddN(Vec<NodeId>),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Pick(NodeId, usize),
    Max(NodeId, usize),
}

struct Node {
    // `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
}

/// Parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: HashMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.entries.iter().map(|(&id, g)| (id, g.as_slice()))
    }

    pub fn add_dense(&mut self, id: ParamId, grad: &[f64]) {
        let slot = self.entries.entry(id).or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in slot.iter_mut().zip(grad) {
            *a += g;
        }
    }

    fn add_row(&mut self, id: ParamId, total: usize, row: usize, grad: &[f64]) {
        let slot = self.entries.entry(id).or_insert_with(|| vec![0.0; total]);
        let offset = row * grad.len();
        for (a, g) in slot[offset..offset + grad.len()].iter_mut().zip(grad) {
            *a += g;
        }
    }
}

/// Define-by-run computation graph over a borrowed parameter store.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order for the backward sweep.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.value(*p),
            _ => unreachable!("node without value"),
        }
    }

    /// Gradient of the last loss passed to [`Graph::backward`] with respect
    /// to `id`, if the node was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value: Some(value), op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn vector(&mut self, values: Vec<f64>) -> NodeId {
        self.constant(Tensor::vector(values))
    }

    /// Node for a whole parameter tensor; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, node);
        node
    }

    /// Row `row` of a matrix parameter, with a sparse gradient.
    pub fn lookup(&mut self, id: ParamId, row: usize) -> Result<NodeId, AutodiffError> {
        let table = self.params.value(id);
        let shape = table.shape();
        if shape.len() != 2 || row >= shape[0] {
            return Err(AutodiffError::IndexOutOfRange {
                op: "lookup",
                index: row,
                shape: shape.to_vec(),
            });
        }
        let value = Tensor::vector(table.row(row).to_vec());
        Ok(self.push(value, Op::Lookup(id, row)))
    }

    /// Matrix-vector (`[m, n] × [n]`) or matrix-matrix (`[m, n] × [n, p]`)
    /// product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", av, bv));
        }
        let (m, n) = (sa[0], sa[1]);
        let p = if sb.len() == 2 { sb[1] } else { 1 };
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![0.0; m * p];
        for r in 0..m {
            let arow = &ad[r * n..(r + 1) * n];
            for c in 0..p {
                let mut acc = 0.0;
                for (k, a) in arow.iter().enumerate() {
                    acc += a * bd[k * p + c];
                }
                out[r * p + c] = acc;
            }
        }
        let shape = if sb.len() == 2 { vec![m, p] } else { vec![m] };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.elementwise(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.elementwise(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.elementwise(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let v = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(v, Op::Scale(a, factor))
    }

    /// Sum of same-shaped nodes. An empty list yields a scalar zero.
    pub fn add_n(&mut self, items: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let Some(&first) = items.first() else {
            return Ok(self.scalar(0.0));
        };
        let mut acc = self.value(first).clone();
        for &item in &items[1..] {
            let v = self.value(item);
            if v.shape() != acc.shape() {
                return Err(mismatch("add_n", &acc, v));
            }
            for (a, x) in acc.data_mut().iter_mut().zip(v.data()) {
                *a += x;
            }
        }
        Ok(self.push(acc, Op::AddN(items.to_vec())))
    }

    /// Concatenation of vectors (scalars count as length-1 vectors).
    pub fn concat(&mut self, items: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let mut data = Vec::new();
        for &item in items {
            let v = self.value(item);
            if v.shape().len() > 1 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: v.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(items.to_vec())))
    }

    /// Elements `start..start + len` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let av = self.value(a);
        if av.shape().len() != 1 || start + len > av.len() {
            return Err(AutodiffError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                shape: av.shape().to_vec(),
            });
        }
        let v = Tensor::vector(av.data()[start..start + len].to_vec());
        Ok(self.push(v, Op::Slice(a, start)))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.unary(a, |x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("dot", av, bv));
        }
        let total = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(total), Op::Dot(a, b)))
    }

    /// Element `index` of a vector as a scalar.
    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId, AutodiffError> {
        let av = self.value(a);
        if index >= av.len() {
            return Err(AutodiffError::IndexOutOfRange {
                op: "pick",
                index,
                shape: av.shape().to_vec(),
            });
        }
        let v = av.data()[index];
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, index)))
    }

    /// Largest element (first on ties); the gradient flows to that index.
    pub fn max(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(AutodiffError::IndexOutOfRange {
                op: "max",
                index: 0,
                shape: av.shape().to_vec(),
            });
        }
        let mut best = 0;
        for (k, &x) in av.data().iter().enumerate() {
            if x > av.data()[best] {
                best = k;
            }
        }
        let v = av.data()[best];
        Ok(self.push(Tensor::scalar(v), Op::Max(a, best)))
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let wx = self.matmul(w, x)?;
        self.add(wx, b)
    }

    /// Reverse sweep from a scalar `loss`. Node gradients stay available via
    /// [`Graph::grad`]; parameter gradients are returned.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients, AutodiffError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads, &mut out);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>], out: &mut Gradients) {
        let len_of = |n: NodeId| self.value(n).len();
        match &self.nodes[idx].op {
            Op::Constant => {}
            Op::Param(p) => out.add_dense(*p, g),
            Op::Lookup(p, row) => out.add_row(*p, self.params.value(*p).len(), *row, g),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, n) = (av.shape()[0], av.shape()[1]);
                let p = if bv.shape().len() == 2 { bv.shape()[1] } else { 1 };
                let (ad, bd) = (av.data(), bv.data());
                {
                    let ga = accumulate(&mut grads[a.0], m * n);
                    for r in 0..m {
                        for k in 0..n {
                            let mut acc = 0.0;
                            for c in 0..p {
                                acc += g[r * p + c] * bd[k * p + c];
                            }
                            ga[r * n + k] += acc;
                        }
                    }
                }
                let gb = accumulate(&mut grads[b.0], n * p);
                for r in 0..m {
                    let arow = &ad[r * n..(r + 1) * n];
                    for c in 0..p {
                        let gv = g[r * p + c];
                        if gv == 0.0 {
                            continue;
                        }
                        for (k, a) in arow.iter().enumerate() {
                            gb[k * p + c] += gv * a;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(accumulate(&mut grads[a.0], g.len()), g, 1.0);
                add_into(accumulate(&mut grads[b.0], g.len()), g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(accumulate(&mut grads[a.0], g.len()), g, 1.0);
                add_into(accumulate(&mut grads[b.0], g.len()), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let ga = accumulate(&mut grads[a.0], g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * bv[k];
                }
                let gb = accumulate(&mut grads[b.0], g.len());
                for k in 0..g.len() {
                    gb[k] += g[k] * av[k];
                }
            }
            Op::Scale(a, factor) => add_into(accumulate(&mut grads[a.0], g.len()), g, *factor),
            Op::AddN(items) => {
                for item in items {
                    add_into(accumulate(&mut grads[item.0], g.len()), g, 1.0);
                }
            }
            Op::Concat(items) => {
                let mut offset = 0;
                for item in items {
                    let n = len_of(*item);
                    add_into(accumulate(&mut grads[item.0], n), &g[offset..offset + n], 1.0);
                    offset += n;
                }
            }
            Op::Slice(a, start) => {
                let ga = accumulate(&mut grads[a.0], len_of(*a));
                add_into(&mut ga[*start..*start + g.len()], g, 1.0);
            }
            Op::Tanh(a) => {
                let y = self.nodes[idx].value.as_ref().unwrap().data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * (1.0 - y[k] * y[k]);
                }
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[idx].value.as_ref().unwrap().data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for k in 0..g.len() {
                    if x[k] > 0.0 {
                        ga[k] += g[k];
                    }
                }
            }
            Op::Sum(a) => {
                let ga = accumulate(&mut grads[a.0], len_of(*a));
                ga.iter_mut().for_each(|v| *v += g[0]);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let ga = accumulate(&mut grads[a.0], av.len());
                for k in 0..av.len() {
                    ga[k] += g[0] * bv[k];
                }
                let gb = accumulate(&mut grads[b.0], bv.len());
                for k in 0..bv.len() {
                    gb[k] += g[0] * av[k];
                }
            }
            Op::Pick(a, index) | Op::Max(a, index) => {
                let ga = accumulate(&mut grads[a.0], len_of(*a));
                ga[*index] += g[0];
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_forward() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.vector(vec![-1.0, 0.0, 2.0]);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn identity_matmul() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let eye = g.constant(Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        let v = g.vector(vec![0.3, -1.5, 7.0]);
        let y = g.matmul(eye, v).unwrap();
        assert_eq!(g.value(y).data(), &[0.3, -1.5, 7.0]);
    }

    #[test]
    fn square_derivative() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.scalar(3.0);
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.vector(vec![1.0, 2.0]);
        let b = g.vector(vec![1.0, 2.0, 3.0]);
        let err = g.add(a, b).unwrap_err();
        assert_eq!(err.to_string(), "shape mismatch in add: [2] vs [3]");
        let m = g.constant(Tensor::zeros(&[2, 2]));
        assert!(g.matmul(m, b).is_err());
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let q = store.add("q", Tensor::vector(vec![4.0])).unwrap();
        let mut g = Graph::new(&store);
        let pn = g.param(p);
        let s = g.sum(pn);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap(), &[1.0, 1.0, 1.0]);
        assert!(grads.get(q).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let v = g.vector(vec![1.0, 2.0]);
        assert!(matches!(g.backward(v), Err(AutodiffError::NonScalarLoss(_))));
    }

    #[test]
    fn lookup_gradient_is_row_sparse() {
        let mut store = ParamStore::new();
        let e = store.add("e", Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let mut g = Graph::new(&store);
        let r = g.lookup(e, 1).unwrap();
        assert_eq!(g.value(r).data(), &[3.0, 4.0]);
        let w = g.vector(vec![2.0, -1.0]);
        let s = g.dot(r, w).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(e).unwrap(), &[0.0, 0.0, 2.0, -1.0, 0.0, 0.0]);
        assert!(g.lookup(e, 3).is_err());
    }

    /// Central finite differences over every parameter coordinate of a
    /// random two-layer network with mixed nonlinearities.
    #[test]
    fn two_layer_network_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let w1 = store.add_glorot("w1", 5, 4, &mut rng).unwrap();
        let b1 = store.add("b1", Tensor::vector((0..5).map(|_| rng.random_range(-0.5..0.5)).collect())).unwrap();
        let w2 = store.add_glorot("w2", 3, 5, &mut rng).unwrap();
        let v = store.add_glorot("v", 1, 3, &mut rng).unwrap();
        let input: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let eval = |store: &ParamStore| -> (f64, Gradients) {
            let mut g = Graph::new(store);
            let x = g.vector(input.clone());
            let (w1n, b1n, w2n, vn) = (g.param(w1), g.param(b1), g.param(w2), g.param(v));
            let h = g.affine(w1n, x, b1n).unwrap();
            let h = g.tanh(h);
            let h2 = g.matmul(w2n, h).unwrap();
            let h2 = g.sigmoid(h2);
            let parts = [g.slice(h2, 0, 2).unwrap(), g.slice(h2, 2, 1).unwrap()];
            let h2 = g.concat(&parts).unwrap();
            let out = g.matmul(vn, h2).unwrap();
            let top = g.max(out).unwrap();
            let sq = g.mul(top, top).unwrap();
            let loss = g.add_n(&[sq, top]).unwrap();
            let value = g.value(loss).item();
            let grads = g.backward(loss).unwrap();
            (value, grads)
        };

        let (_, grads) = eval(&store);
        let step = 1e-5;
        let mut checked = 0;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.value(id).len() {
                let analytic = grads.get(id).map_or(0.0, |g| g[k]);
                let mut plus = store.clone();
                plus.value_mut(id).data_mut()[k] += step;
                let mut minus = store.clone();
                minus.value_mut(id).data_mut()[k] -= step;
                let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * step);
                let diff = (analytic - numeric).abs();
                let rel = diff / analytic.abs().max(numeric.abs()).max(1e-300);
                assert!(diff <= 1e-8 || rel <= 1e-4, "{} [{k}]: {analytic} vs {numeric}", store.name(id));
                checked += 1;
            }
        }
        assert_eq!(checked, 20 + 5 + 15 + 3);
    }

    #[test]
    fn unreachable_parameter_gets_no_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(2.0)).unwrap();
        let mut g = Graph::new(&store);
        let _unused = g.param(p);
        let x = g.scalar(1.0);
        let y = g.scale(x, 3.0);
        let grads = g.backward(y).unwrap();
        assert!(grads.get(p).is_none());
    }
}
