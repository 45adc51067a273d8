//! Reverse-mode automatic differentiation over a recorded tape of dense
//! matrix operations.
//!
//! Nodes are evaluated eagerly as they are added, so models can branch on
//! intermediate values while the graph is built. The recorded tape can also be
//! replayed with [`Graph::evaluate`] after rebinding named leaves, which is how
//! finite-difference checks perturb parameters without rebuilding the model.

use std::collections::{BTreeMap, HashMap};

use super::params::{ParamKey, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("shape error at node {node}: {detail}")]
    Shape { node: String, detail: String },
    #[error("backprop requires a scalar output, node {node} has shape {rows}x{cols}")]
    NotScalar {
        node: String,
        rows: usize,
        cols: usize,
    },
    #[error("no leaf named `{0}` in graph")]
    Unbound(String),
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Elu,
    Exp,
    Log,
    Square,
}

#[derive(Clone, Debug)]
struct Leaf {
    name: Option<String>,
    trainable: bool,
    key: Option<ParamKey>,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf(Leaf),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    Shift(Var, T),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Unary(Var, Unary),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    MaxCols(Var),
}

impl<T> Op<T> {
    fn label(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Unary(_, u) => match u {
                Unary::Tanh => "tanh",
                Unary::Sigmoid => "sigmoid",
                Unary::Softplus => "softplus",
                Unary::Elu => "elu",
                Unary::Exp => "exp",
                Unary::Log => "log",
                Unary::Square => "square",
            },
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumCols(_) => "sum_cols",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::MaxCols(_) => "max_cols",
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Gradients of a scalar output with respect to the trainable leaves that
/// were requested.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: HashMap<Var, Tensor<T>>,
    params: HashMap<ParamKey, Var>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, var: Var) -> Option<&Tensor<T>> {
        self.by_node.get(&var)
    }

    pub fn param(&self, key: ParamKey) -> Option<&Tensor<T>> {
        self.params.get(&key).and_then(|v| self.by_node.get(v))
    }

    /// One gradient per parameter of `store`, zero where the parameter did not
    /// influence the output.
    pub fn for_store(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        (0..store.len())
            .map(|i| match self.param(store.key(i)) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = store.value(i).shape();
                    Tensor::zeros(r, c)
                }
            })
            .collect()
    }
}

/// Named leaf values used to rebind a recorded graph.
pub type Bindings<T> = HashMap<String, Tensor<T>>;

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamKey, Var>,
    names: HashMap<String, Vec<Var>>,
    outputs: Vec<(String, Var)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl Unary {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Square => x * x,
        }
    }

    /// Derivative given the input `x` and the output `y`.
    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Unary::Tanh => T::one() - y * y,
            Unary::Sigmoid => y * (T::one() - y),
            Unary::Softplus => sigmoid(x),
            Unary::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Unary::Exp => y,
            Unary::Log => T::one() / x,
            Unary::Square => x + x,
        }
    }
}

/// Index of the largest element; ties resolve to the smallest index.
fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            names: HashMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn describe(&self, idx: usize, op: &Op<T>) -> String {
        match op {
            Op::Leaf(Leaf { name: Some(n), .. }) => format!("#{idx} leaf `{n}`"),
            _ => format!("#{idx} {}", op.label()),
        }
    }

    fn push_leaf(&mut self, value: Tensor<T>, leaf: Leaf) -> Var {
        let var = Var(self.nodes.len());
        if let Some(name) = &leaf.name {
            self.names.entry(name.clone()).or_default().push(var);
        }
        self.nodes.push(Node {
            op: Op::Leaf(leaf),
            value,
        });
        var
    }

    /// Unnamed, non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(
            value,
            Leaf {
                name: None,
                trainable: false,
                key: None,
            },
        )
    }

    /// Named, non-trainable leaf that [`Graph::evaluate`] can rebind.
    pub fn input(&mut self, name: &str, value: Tensor<T>) -> Var {
        self.push_leaf(
            value,
            Leaf {
                name: Some(name.to_owned()),
                trainable: false,
                key: None,
            },
        )
    }

    /// Named trainable leaf that is not owned by a parameter store.
    pub fn variable(&mut self, name: &str, value: Tensor<T>) -> Var {
        self.push_leaf(
            value,
            Leaf {
                name: Some(name.to_owned()),
                trainable: true,
                key: None,
            },
        )
    }

    /// Leaf for parameter `index` of `store`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, index: usize) -> Var {
        let key = store.key(index);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let var = self.push_leaf(
            store.value(index).clone(),
            Leaf {
                name: Some(store.qualified_name(index)),
                trainable: true,
                key: Some(key),
            },
        );
        self.params.insert(key, var);
        var
    }

    /// Registers `var` under `name` in the map returned by [`Graph::evaluate`].
    pub fn set_output(&mut self, name: &str, var: Var) {
        self.outputs.push((name.to_owned(), var));
    }

    fn push(&mut self, op: Op<T>) -> Result<Var, GraphError> {
        let idx = self.nodes.len();
        let value = self.compute(idx, &op)?;
        self.nodes.push(Node { op, value });
        Ok(Var(idx))
    }

    fn shape_err(&self, idx: usize, op: &Op<T>, detail: String) -> GraphError {
        GraphError::Shape {
            node: self.describe(idx, op),
            detail,
        }
    }

    fn same_shape(&self, idx: usize, op: &Op<T>, a: Var, b: Var) -> Result<(), GraphError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(self.shape_err(idx, op, format!("operands {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(va.rows(), va.cols(), data).expect("shapes checked")
    }

    fn compute(&self, idx: usize, op: &Op<T>) -> Result<Tensor<T>, GraphError> {
        Ok(match op {
            Op::Leaf(_) => unreachable!("leaves carry their own value"),
            Op::Add(a, b) => {
                self.same_shape(idx, op, *a, *b)?;
                self.zip(*a, *b, |x, y| x + y)
            }
            Op::Sub(a, b) => {
                self.same_shape(idx, op, *a, *b)?;
                self.zip(*a, *b, |x, y| x - y)
            }
            Op::Mul(a, b) => {
                self.same_shape(idx, op, *a, *b)?;
                self.zip(*a, *b, |x, y| x * y)
            }
            Op::Div(a, b) => {
                self.same_shape(idx, op, *a, *b)?;
                self.zip(*a, *b, |x, y| x / y)
            }
            Op::Neg(a) => self.value(*a).map(|x| -x),
            Op::Scale(a, c) => {
                let c = *c;
                self.value(*a).map(|x| x * c)
            }
            Op::Shift(a, c) => {
                let c = *c;
                self.value(*a).map(|x| x + c)
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if va.cols() != vb.rows() {
                    return Err(self.shape_err(
                        idx,
                        op,
                        format!("cannot multiply {:?} by {:?}", va.shape(), vb.shape()),
                    ));
                }
                matmul(va, vb)
            }
            Op::AddRow(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if vb.rows() != 1 || vb.cols() != va.cols() {
                    return Err(self.shape_err(
                        idx,
                        op,
                        format!("row {:?} does not broadcast over {:?}", vb.shape(), va.shape()),
                    ));
                }
                let mut out = va.clone();
                for r in 0..out.rows() {
                    for (o, &b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                        *o += b;
                    }
                }
                out
            }
            Op::Unary(a, u) => {
                let u = *u;
                self.value(*a).map(|x| u.apply(x))
            }
            Op::Sum(a) => Tensor::scalar(self.value(*a).data().iter().copied().sum()),
            Op::Mean(a) => {
                let va = self.value(*a);
                if va.is_empty() {
                    return Err(self.shape_err(idx, op, "mean of an empty tensor".into()));
                }
                let s: T = va.data().iter().copied().sum();
                Tensor::scalar(s / T::c(va.len() as f64))
            }
            Op::SumCols(a) => {
                let va = self.value(*a);
                Tensor::column((0..va.rows()).map(|r| va.row(r).iter().copied().sum()).collect())
            }
            Op::Concat(parts) => {
                let Some(first) = parts.first() else {
                    return Err(self.shape_err(idx, op, "nothing to concatenate".into()));
                };
                let rows = self.value(*first).rows();
                let mut cols = 0;
                for p in parts {
                    let v = self.value(*p);
                    if v.rows() != rows {
                        return Err(self.shape_err(
                            idx,
                            op,
                            format!("part with {} rows, expected {rows}", v.rows()),
                        ));
                    }
                    cols += v.cols();
                }
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row(r));
                    }
                }
                Tensor::from_vec(rows, cols, data).expect("sized above")
            }
            Op::Slice(a, start, len) => {
                let va = self.value(*a);
                if start + len > va.cols() {
                    return Err(self.shape_err(
                        idx,
                        op,
                        format!("columns {start}..{} out of {}", start + len, va.cols()),
                    ));
                }
                let mut data = Vec::with_capacity(va.rows() * len);
                for r in 0..va.rows() {
                    data.extend_from_slice(&va.row(r)[*start..start + len]);
                }
                Tensor::from_vec(va.rows(), *len, data).expect("sized above")
            }
            Op::MaxCols(a) => {
                let va = self.value(*a);
                if va.cols() == 0 {
                    return Err(self.shape_err(idx, op, "max over zero columns".into()));
                }
                Tensor::column((0..va.rows()).map(|r| va.row(r)[argmax(va.row(r))]).collect())
            }
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.push(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, GraphError> {
        self.push(Op::Scale(a, c))
    }

    pub fn shift(&mut self, a: Var, c: T) -> Result<Var, GraphError> {
        self.push(Op::Shift(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GraphError> {
        self.push(Op::MatMul(a, b))
    }

    /// Adds a `1×m` row to every row of an `n×m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, GraphError> {
        self.push(Op::AddRow(a, row))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Tanh))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Sigmoid))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Softplus))
    }

    pub fn elu(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Elu))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Exp))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Log))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Unary(a, Unary::Square))
    }

    /// Sum of all elements, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Sum(a))
    }

    /// Mean of all elements, as a `1×1` node.
    pub fn mean(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::Mean(a))
    }

    /// Per-row sum: `n×m → n×1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::SumCols(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, GraphError> {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, GraphError> {
        self.push(Op::Slice(a, start, len))
    }

    /// Per-row maximum: `n×m → n×1`. The gradient flows to the first maximal
    /// column only.
    pub fn max_cols(&mut self, a: Var) -> Result<Var, GraphError> {
        self.push(Op::MaxCols(a))
    }

    /// Rebinds the named leaves in `bindings`, recomputes every node in tape
    /// order and returns the registered outputs.
    pub fn evaluate(
        &mut self,
        bindings: &Bindings<T>,
    ) -> Result<BTreeMap<String, Tensor<T>>, GraphError> {
        for (name, value) in bindings {
            let vars = self
                .names
                .get(name)
                .ok_or_else(|| GraphError::Unbound(name.clone()))?;
            for &v in vars {
                let old = self.nodes[v.0].value.shape();
                if old != value.shape() {
                    return Err(GraphError::Shape {
                        node: self.describe(v.0, &self.nodes[v.0].op),
                        detail: format!("bound {:?}, expected {:?}", value.shape(), old),
                    });
                }
                self.nodes[v.0].value = value.clone();
            }
        }
        for idx in 0..self.nodes.len() {
            if matches!(self.nodes[idx].op, Op::Leaf(_)) {
                continue;
            }
            let value = self.compute(idx, &self.nodes[idx].op)?;
            self.nodes[idx].value = value;
        }
        Ok(self
            .outputs
            .iter()
            .map(|(n, v)| (n.clone(), self.value(*v).clone()))
            .collect())
    }

    /// Gradients of the scalar `output` with respect to every trainable leaf.
    pub fn backprop(&self, output: Var) -> Result<Gradients<T>, GraphError> {
        self.backprop_filtered(output, |_| true)
    }

    /// Gradients restricted to the parameters of `stores`; other leaves are
    /// treated as constants, which also skips their share of the backward work.
    pub fn backprop_params(
        &self,
        output: Var,
        stores: &[&ParamStore<T>],
    ) -> Result<Gradients<T>, GraphError> {
        let ids: Vec<u64> = stores.iter().map(|s| s.id()).collect();
        self.backprop_filtered(output, |leaf| {
            leaf.key.is_some_and(|k| ids.contains(&k.store()))
        })
    }

    fn parents(op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::MatMul(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Shift(a, _)
            | Op::Unary(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumCols(a)
            | Op::Slice(a, ..)
            | Op::MaxCols(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
        }
    }

    fn backprop_filtered(
        &self,
        output: Var,
        wanted: impl Fn(&Leaf) -> bool,
    ) -> Result<Gradients<T>, GraphError> {
        let out = &self.nodes[output.0];
        if out.value.shape() != (1, 1) {
            let (rows, cols) = out.value.shape();
            return Err(GraphError::NotScalar {
                node: self.describe(output.0, &out.op),
                rows,
                cols,
            });
        }
        let n = output.0 + 1;
        let mut requires = vec![false; n];
        for (i, node) in self.nodes[..n].iter().enumerate() {
            requires[i] = match &node.op {
                Op::Leaf(leaf) => leaf.trainable && wanted(leaf),
                op => Self::parents(op).iter().any(|p| requires[p.0]),
            };
        }

        let mut adj: Vec<Option<Tensor<T>>> = vec![None; n];
        adj[output.0] = Some(Tensor::scalar(T::one()));
        let mut by_node = HashMap::new();

        fn acc<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
            match slot {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
                        *a += *b;
                    }
                }
                None => *slot = Some(g),
            }
        }

        for i in (0..n).rev() {
            if !requires[i] {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf(_) => {
                    by_node.insert(Var(i), g);
                }
                Op::Add(a, b) => {
                    if requires[b.0] {
                        acc(&mut adj[b.0], g.clone());
                    }
                    if requires[a.0] {
                        acc(&mut adj[a.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if requires[b.0] {
                        acc(&mut adj[b.0], g.map(|x| -x));
                    }
                    if requires[a.0] {
                        acc(&mut adj[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if requires[a.0] {
                        acc(&mut adj[a.0], elementwise(&g, vb, |g, y| g * y));
                    }
                    if requires[b.0] {
                        acc(&mut adj[b.0], elementwise(&g, va, |g, x| g * x));
                    }
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b);
                    if requires[a.0] {
                        acc(&mut adj[a.0], elementwise(&g, vb, |g, d| g / d));
                    }
                    if requires[b.0] {
                        // d(a/b)/db = -(a/b)/b
                        let t = elementwise(&g, y, |g, q| -g * q);
                        acc(&mut adj[b.0], elementwise(&t, vb, |t, d| t / d));
                    }
                }
                Op::Neg(a) => acc(&mut adj[a.0], g.map(|x| -x)),
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut adj[a.0], g.map(|x| x * c));
                }
                Op::Shift(a, _) => acc(&mut adj[a.0], g),
                Op::MatMul(a, b) => {
                    if requires[a.0] {
                        acc(&mut adj[a.0], matmul_nt(&g, self.value(*b)));
                    }
                    if requires[b.0] {
                        acc(&mut adj[b.0], matmul_tn(self.value(*a), &g));
                    }
                }
                Op::AddRow(a, b) => {
                    if requires[b.0] {
                        let mut row = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, &v) in row.data_mut().iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        acc(&mut adj[b.0], row);
                    }
                    if requires[a.0] {
                        acc(&mut adj[a.0], g);
                    }
                }
                Op::Unary(a, u) => {
                    let x = self.value(*a);
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(&g, (&x, &y))| g * u.derivative(x, y))
                        .collect();
                    acc(
                        &mut adj[a.0],
                        Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape"),
                    );
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut adj[a.0], Tensor::full(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let v = g.item() / T::c((r * c) as f64);
                    acc(&mut adj[a.0], Tensor::full(r, c, v));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut t = Tensor::zeros(r, c);
                    for row in 0..r {
                        let gv = g.get(row, 0);
                        t.row_mut(row).iter_mut().for_each(|x| *x = gv);
                    }
                    acc(&mut adj[a.0], t);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (r, c) = self.value(*p).shape();
                        if requires[p.0] {
                            let mut t = Tensor::zeros(r, c);
                            for row in 0..r {
                                t.row_mut(row)
                                    .copy_from_slice(&g.row(row)[offset..offset + c]);
                            }
                            acc(&mut adj[p.0], t);
                        }
                        offset += c;
                    }
                }
                Op::Slice(a, start, len) => {
                    let (r, c) = self.value(*a).shape();
                    let mut t = Tensor::zeros(r, c);
                    for row in 0..r {
                        t.row_mut(row)[*start..start + len].copy_from_slice(g.row(row));
                    }
                    acc(&mut adj[a.0], t);
                }
                Op::MaxCols(a) => {
                    let va = self.value(*a);
                    let mut t = Tensor::zeros(va.rows(), va.cols());
                    for row in 0..va.rows() {
                        let j = argmax(va.row(row));
                        t.set(row, j, g.get(row, 0));
                    }
                    acc(&mut adj[a.0], t);
                }
            }
        }

        let params = self
            .params
            .iter()
            .filter(|(_, v)| by_node.contains_key(*v))
            .map(|(k, v)| (*k, *v))
            .collect();
        Ok(Gradients { by_node, params })
    }
}

fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}
