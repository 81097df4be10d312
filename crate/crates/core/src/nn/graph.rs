//! Layer graph and its forward/backward evaluation.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use super::params::{ParamSpec, ParameterSet};
use super::{shape_err, NnError};

/// Where a node reads an operand from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(NodeId),
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `x·W + b` on a single-row input.
    Dense {
        weight: String,
        bias: String,
        inputs: usize,
        outputs: usize,
    },
    /// `x·W + b` applied to every row with the same weights.
    SharedDense {
        weight: String,
        bias: String,
        inputs: usize,
        outputs: usize,
    },
    Relu,
    /// Column-wise max over all rows; ties resolve to the lowest row.
    MaxPool,
    /// Column-wise mean over all rows.
    AvgPool,
    /// Column-wise max within consecutive blocks of `segment` rows.
    SegmentMaxPool { segment: usize },
    /// Horizontal concatenation of two operands. A single-row operand is
    /// broadcast to the other operand's row count.
    Concat,
}

impl Layer {
    fn arity(&self) -> usize {
        match self {
            Layer::Concat => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub layer: Layer,
    pub inputs: Vec<Source>,
}

/// A validated layer graph. Nodes are topologically ordered; the last node is
/// the output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_width: usize,
    nodes: Vec<Node>,
    widths: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(input_width: usize, nodes: Vec<Node>) -> Result<Self, NnError> {
        if nodes.is_empty() {
            return Err(NnError::InvalidNetwork("network has no layers".into()));
        }
        let mut widths: Vec<usize> = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.inputs.len() != node.layer.arity() {
                return Err(NnError::InvalidNetwork(format!(
                    "node {i} has {} inputs, layer needs {}",
                    node.inputs.len(),
                    node.layer.arity()
                )));
            }
            let mut in_widths = Vec::new();
            for src in &node.inputs {
                in_widths.push(match *src {
                    Source::Input => input_width,
                    Source::Node(j) if j < i => widths[j],
                    Source::Node(j) => {
                        return Err(NnError::InvalidNetwork(format!(
                            "node {i} reads node {j}, which does not precede it"
                        )))
                    }
                });
            }
            let w = match &node.layer {
                Layer::Dense {
                    inputs, outputs, ..
                }
                | Layer::SharedDense {
                    inputs, outputs, ..
                } => {
                    if in_widths[0] != *inputs {
                        return Err(NnError::InvalidNetwork(format!(
                            "node {i}: dense layer expects width {inputs}, receives {}",
                            in_widths[0]
                        )));
                    }
                    *outputs
                }
                Layer::SegmentMaxPool { segment } if *segment == 0 => {
                    return Err(NnError::InvalidNetwork(format!(
                        "node {i}: zero segment size"
                    )))
                }
                Layer::Concat => in_widths[0] + in_widths[1],
                _ => in_widths[0],
            };
            widths.push(w);
        }
        Ok(Self {
            input_width,
            nodes,
            widths,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Parameter shapes in first-use order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Layer::Dense {
                weight,
                bias,
                inputs,
                outputs,
            }
            | Layer::SharedDense {
                weight,
                bias,
                inputs,
                outputs,
            } = &node.layer
            {
                if out.iter().any(|p: &ParamSpec| &p.name == weight) {
                    continue;
                }
                out.push(ParamSpec {
                    name: weight.clone(),
                    rows: *inputs,
                    cols: *outputs,
                    fan_in: *inputs,
                });
                out.push(ParamSpec {
                    name: bias.clone(),
                    rows: 1,
                    cols: *outputs,
                    fan_in: *inputs,
                });
            }
        }
        out
    }
}

/// Incremental constructor for [`NetworkSpec`].
#[derive(Debug)]
pub struct NetworkBuilder {
    input_width: usize,
    nodes: Vec<Node>,
    widths: Vec<usize>,
}

impl NetworkBuilder {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            nodes: Vec::new(),
            widths: Vec::new(),
        }
    }

    pub fn width(&self, src: Source) -> usize {
        match src {
            Source::Input => self.input_width,
            Source::Node(i) => self.widths[i],
        }
    }

    fn push(&mut self, layer: Layer, inputs: Vec<Source>, width: usize) -> Source {
        self.nodes.push(Node { layer, inputs });
        self.widths.push(width);
        Source::Node(self.nodes.len() - 1)
    }

    pub fn dense(&mut self, src: Source, name: &str, outputs: usize) -> Source {
        let inputs = self.width(src);
        self.push(
            Layer::Dense {
                weight: format!("{name}.w"),
                bias: format!("{name}.b"),
                inputs,
                outputs,
            },
            vec![src],
            outputs,
        )
    }

    pub fn shared_dense(&mut self, src: Source, name: &str, outputs: usize) -> Source {
        let inputs = self.width(src);
        self.push(
            Layer::SharedDense {
                weight: format!("{name}.w"),
                bias: format!("{name}.b"),
                inputs,
                outputs,
            },
            vec![src],
            outputs,
        )
    }

    pub fn relu(&mut self, src: Source) -> Source {
        let w = self.width(src);
        self.push(Layer::Relu, vec![src], w)
    }

    /// Shared dense + ReLU for each width; layers are named `{prefix}.{i}`.
    pub fn shared_mlp(&mut self, mut src: Source, prefix: &str, widths: &[usize]) -> Source {
        for (i, &w) in widths.iter().enumerate() {
            src = self.shared_dense(src, &format!("{prefix}.{i}"), w);
            src = self.relu(src);
        }
        src
    }

    pub fn max_pool(&mut self, src: Source) -> Source {
        let w = self.width(src);
        self.push(Layer::MaxPool, vec![src], w)
    }

    pub fn avg_pool(&mut self, src: Source) -> Source {
        let w = self.width(src);
        self.push(Layer::AvgPool, vec![src], w)
    }

    pub fn segment_max_pool(&mut self, src: Source, segment: usize) -> Source {
        let w = self.width(src);
        self.push(Layer::SegmentMaxPool { segment }, vec![src], w)
    }

    pub fn concat(&mut self, a: Source, b: Source) -> Source {
        let w = self.width(a) + self.width(b);
        self.push(Layer::Concat, vec![a, b], w)
    }

    /// Finishes the graph; `output` must be the most recent node.
    pub fn finish(self, output: Source) -> Result<NetworkSpec, NnError> {
        if output != Source::Node(self.nodes.len().wrapping_sub(1)) {
            return Err(NnError::InvalidNetwork(
                "output must be the last node added".into(),
            ));
        }
        NetworkSpec::new(self.input_width, self.nodes)
    }
}

/// Forward cache for one evaluation of a network.
///
/// Holds the input, every node's output and the argmax rows of pooling nodes,
/// which is all reverse mode needs.
#[derive(Debug, Clone)]
pub struct Session<'n> {
    net: &'n NetworkSpec,
    input: Option<Array2<f64>>,
    values: Vec<Array2<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl<'n> Session<'n> {
    pub fn new(net: &'n NetworkSpec) -> Self {
        Self {
            net,
            input: None,
            values: Vec::new(),
            argmax: Vec::new(),
        }
    }

    pub fn network(&self) -> &NetworkSpec {
        self.net
    }

    pub fn output(&self) -> Option<&Array2<f64>> {
        self.values.last()
    }

    /// Output of an intermediate node from the last forward pass.
    pub fn value(&self, node: NodeId) -> Option<&Array2<f64>> {
        self.values.get(node)
    }

    fn operand(&self, src: Source) -> &Array2<f64> {
        match src {
            Source::Input => self.input.as_ref().expect("input stored"),
            Source::Node(i) => &self.values[i],
        }
    }

    pub fn forward(
        &mut self,
        params: &ParameterSet,
        input: Array2<f64>,
    ) -> Result<&Array2<f64>, NnError> {
        if input.ncols() != self.net.input_width {
            return Err(shape_err(
                "network input",
                format!("width {}", self.net.input_width),
                format!("width {}", input.ncols()),
            ));
        }
        if input.nrows() == 0 {
            return Err(shape_err("network input", "at least one row", "0 rows"));
        }
        self.input = Some(input);
        self.values.clear();
        self.argmax.clear();
        for (i, node) in self.net.nodes.iter().enumerate() {
            let x = self.operand(node.inputs[0]);
            let mut arg = Vec::new();
            let out = match &node.layer {
                Layer::Dense {
                    weight, bias, ..
                }
                | Layer::SharedDense {
                    weight, bias, ..
                } => {
                    if matches!(node.layer, Layer::Dense { .. }) && x.nrows() != 1 {
                        return Err(shape_err(
                            format!("dense node {i}"),
                            "1 row",
                            format!("{} rows", x.nrows()),
                        ));
                    }
                    let w = params.require(weight)?;
                    let b = params.require(bias)?;
                    if w.dim() != (x.ncols(), b.ncols()) || b.nrows() != 1 {
                        return Err(shape_err(
                            format!("parameter {weight}"),
                            format!("{}x{}", x.ncols(), b.ncols()),
                            format!("{}x{}", w.nrows(), w.ncols()),
                        ));
                    }
                    let mut y = Array2::zeros((x.nrows(), w.ncols()));
                    y.assign(&b.row(0));
                    general_mat_mul(1.0, x, w, 1.0, &mut y);
                    y
                }
                Layer::Relu => x.mapv(|v| v.max(0.0)),
                Layer::MaxPool => {
                    let (y, a) = segment_max(x, x.nrows());
                    arg = a;
                    y
                }
                Layer::SegmentMaxPool { segment } => {
                    if !x.nrows().is_multiple_of(*segment) {
                        return Err(shape_err(
                            format!("segment pool node {i}"),
                            format!("rows divisible by {segment}"),
                            format!("{} rows", x.nrows()),
                        ));
                    }
                    let (y, a) = segment_max(x, *segment);
                    arg = a;
                    y
                }
                Layer::AvgPool => x.mean_axis(Axis(0)).expect("rows > 0").insert_axis(Axis(0)),
                Layer::Concat => {
                    let y = self.operand(node.inputs[1]);
                    concat_broadcast(x, y).ok_or_else(|| {
                        shape_err(
                            format!("concat node {i}"),
                            "equal rows or a single-row operand",
                            format!("{} and {} rows", x.nrows(), y.nrows()),
                        )
                    })?
                }
            };
            self.values.push(out);
            self.argmax.push(arg);
        }
        Ok(self.values.last().expect("non-empty"))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input. `upstream` is ∂loss/∂output.
    pub fn backward(
        &self,
        params: &ParameterSet,
        upstream: &Array2<f64>,
        grads: &mut ParameterSet,
    ) -> Result<Array2<f64>, NnError> {
        let input = self.input.as_ref().ok_or(NnError::MissingForwardCache)?;
        if self.values.len() != self.net.nodes.len() {
            return Err(NnError::MissingForwardCache);
        }
        let out = self.values.last().expect("non-empty");
        if upstream.dim() != out.dim() {
            return Err(shape_err(
                "upstream gradient",
                format!("{:?}", out.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let n = self.net.nodes.len();
        let mut node_grads: Vec<Option<Array2<f64>>> = vec![None; n];
        node_grads[n - 1] = Some(upstream.clone());
        let mut input_grad = Array2::<f64>::zeros(input.raw_dim());

        for i in (0..n).rev() {
            let Some(dy) = node_grads[i].take() else {
                continue;
            };
            let node = &self.net.nodes[i];
            let x = self.operand(node.inputs[0]);
            let mut dx: Vec<Array2<f64>> = Vec::with_capacity(2);
            match &node.layer {
                Layer::Dense {
                    weight, bias, ..
                }
                | Layer::SharedDense {
                    weight, bias, ..
                } => {
                    let w = params.require(weight)?;
                    general_mat_mul(1.0, &x.t(), &dy, 1.0, grads.require_mut(weight)?);
                    let db = dy.sum_axis(Axis(0));
                    *grads.require_mut(bias)? += &db.insert_axis(Axis(0));
                    dx.push(dy.dot(&w.t()));
                }
                Layer::Relu => {
                    let y = &self.values[i];
                    let mut g = dy;
                    g.zip_mut_with(y, |g, &y| {
                        if y <= 0.0 {
                            *g = 0.0
                        }
                    });
                    dx.push(g);
                }
                Layer::MaxPool | Layer::SegmentMaxPool { .. } => {
                    let mut g = Array2::zeros(x.raw_dim());
                    let c = x.ncols();
                    for (seg, row) in dy.rows().into_iter().enumerate() {
                        for (col, &v) in row.iter().enumerate() {
                            g[[self.argmax[i][seg * c + col], col]] += v;
                        }
                    }
                    dx.push(g);
                }
                Layer::AvgPool => {
                    let rows = x.nrows();
                    let g = dy.row(0).mapv(|v| v / rows as f64);
                    dx.push(
                        g.insert_axis(Axis(0))
                            .broadcast(x.raw_dim())
                            .expect("broadcast row")
                            .to_owned(),
                    );
                }
                Layer::Concat => {
                    let y = self.operand(node.inputs[1]);
                    let a = x.ncols();
                    let ga = dy.slice(s![.., ..a]);
                    let gb = dy.slice(s![.., a..]);
                    dx.push(unbroadcast(ga.to_owned(), x.nrows()));
                    dx.push(unbroadcast(gb.to_owned(), y.nrows()));
                }
            }
            for (src, g) in node.inputs.iter().zip(dx) {
                match *src {
                    Source::Input => input_grad += &g,
                    Source::Node(j) => match &mut node_grads[j] {
                        Some(acc) => *acc += &g,
                        slot @ None => *slot = Some(g),
                    },
                }
            }
        }
        Ok(input_grad)
    }
}

/// Column-wise max over consecutive row blocks. Returns the pooled matrix and
/// the argmax row for every (block, column), lowest row on ties.
fn segment_max(x: &Array2<f64>, segment: usize) -> (Array2<f64>, Vec<usize>) {
    let (rows, cols) = x.dim();
    let blocks = rows / segment;
    let mut out = Array2::from_elem((blocks, cols), f64::NEG_INFINITY);
    let mut arg = vec![0usize; blocks * cols];
    for b in 0..blocks {
        let mut best = out.row_mut(b);
        for r in b * segment..(b + 1) * segment {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > best[c] || r == b * segment {
                    best[c] = v;
                    arg[b * cols + c] = r;
                }
            }
        }
    }
    (out, arg)
}

fn concat_broadcast(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let rows = match (a.nrows(), b.nrows()) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => return None,
    };
    let mut out = Array2::zeros((rows, a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()])
        .assign(&a.broadcast((rows, a.ncols()))?);
    out.slice_mut(s![.., a.ncols()..])
        .assign(&b.broadcast((rows, b.ncols()))?);
    Some(out)
}

fn unbroadcast(g: Array2<f64>, rows: usize) -> Array2<f64> {
    if g.nrows() == rows {
        g
    } else {
        g.sum_axis(Axis(0)).insert_axis(Axis(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_pointnet() -> NetworkSpec {
        let mut b = NetworkBuilder::new(3);
        let h = b.shared_mlp(Source::Input, "mlp", &[8, 6]);
        let g = b.max_pool(h);
        let o = b.dense(g, "head", 4);
        b.finish(o).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = tiny_pointnet();
        let params = ParameterSet::zeros(&net.param_specs());
        let mut s = Session::new(&net);
        let out = s.forward(&params, Array2::ones((5, 3))).unwrap();
        assert_eq!(out, &Array2::<f64>::zeros((1, 4)));
    }

    #[test]
    fn max_pool_over_single_row_is_identity() {
        let mut b = NetworkBuilder::new(3);
        let p = b.max_pool(Source::Input);
        let net = b.finish(p).unwrap();
        let mut s = Session::new(&net);
        let x = array![[1.0, -2.0, 3.5]];
        assert_eq!(s.forward(&ParameterSet::new(), x.clone()).unwrap(), &x);
    }

    #[test]
    fn shared_dense_commutes_with_row_shuffle() {
        let mut b = NetworkBuilder::new(3);
        let h = b.shared_dense(Source::Input, "l", 5);
        let net = b.finish(h).unwrap();
        let params = ParameterSet::init(&net.param_specs(), &mut ChaCha8Rng::seed_from_u64(1));
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.7);
        let order = [3, 0, 5, 1, 4, 2];
        let mut s = Session::new(&net);
        let y = s.forward(&params, x.clone()).unwrap().clone();
        let ys = s.forward(&params, x.select(Axis(0), &order)).unwrap().clone();
        assert_eq!(ys, y.select(Axis(0), &order));
    }

    #[test]
    fn linear_gradient_is_xt_upstream() {
        let mut b = NetworkBuilder::new(2);
        let h = b.shared_dense(Source::Input, "l", 3);
        let net = b.finish(h).unwrap();
        let params = ParameterSet::init(&net.param_specs(), &mut ChaCha8Rng::seed_from_u64(2));
        let x = array![[1.0, 2.0], [-1.0, 0.5], [0.3, 0.0]];
        let up = array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.0], [0.0, 1.0, 1.0]];
        let mut s = Session::new(&net);
        s.forward(&params, x.clone()).unwrap();
        let mut grads = params.zeros_like();
        let dx = s.backward(&params, &up, &mut grads).unwrap();
        assert_eq!(grads.get("l.w").unwrap(), &x.t().dot(&up));
        assert_eq!(grads.get("l.b").unwrap(), &up.sum_axis(Axis(0)).insert_axis(Axis(0)));
        assert_eq!(dx, up.dot(&params.get("l.w").unwrap().t()));
    }

    #[test]
    fn max_pool_gradient_routes_to_argmax_lowest_tie() {
        let mut b = NetworkBuilder::new(2);
        let p = b.max_pool(Source::Input);
        let net = b.finish(p).unwrap();
        let x = array![[1.0, 5.0], [3.0, 5.0], [3.0, 0.0]];
        let mut s = Session::new(&net);
        s.forward(&ParameterSet::new(), x).unwrap();
        let dx = s
            .backward(&ParameterSet::new(), &array![[2.0, 7.0]], &mut ParameterSet::new())
            .unwrap();
        assert_eq!(dx, array![[0.0, 7.0], [2.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn backward_without_forward_fails() {
        let net = tiny_pointnet();
        let params = ParameterSet::zeros(&net.param_specs());
        let s = Session::new(&net);
        let mut g = params.zeros_like();
        assert!(matches!(
            s.backward(&params, &Array2::zeros((1, 4)), &mut g),
            Err(NnError::MissingForwardCache)
        ));
    }

    #[test]
    fn shape_errors() {
        let net = tiny_pointnet();
        let params = ParameterSet::zeros(&net.param_specs());
        let mut s = Session::new(&net);
        assert!(matches!(
            s.forward(&params, Array2::zeros((4, 2))),
            Err(NnError::Shape { .. })
        ));
        // dense on a multi-row operand
        let mut b = NetworkBuilder::new(2);
        let d = b.dense(Source::Input, "d", 2);
        let net = b.finish(d).unwrap();
        let params = ParameterSet::zeros(&net.param_specs());
        assert!(Session::new(&net).forward(&params, Array2::zeros((3, 2))).is_err());
        // incompatible widths are rejected at construction
        let bad = NetworkSpec::new(
            3,
            vec![Node {
                layer: Layer::SharedDense {
                    weight: "w".into(),
                    bias: "b".into(),
                    inputs: 4,
                    outputs: 2,
                },
                inputs: vec![Source::Input],
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn concat_broadcasts_single_row() {
        let mut b = NetworkBuilder::new(2);
        let g = b.max_pool(Source::Input);
        let c = b.concat(Source::Input, g);
        let net = b.finish(c).unwrap();
        let mut s = Session::new(&net);
        let out = s
            .forward(&ParameterSet::new(), array![[1.0, 4.0], [2.0, 3.0]])
            .unwrap();
        assert_eq!(out, &array![[1.0, 4.0, 2.0, 4.0], [2.0, 3.0, 2.0, 4.0]]);
    }

    #[test]
    fn segment_pool_blocks() {
        let mut b = NetworkBuilder::new(1);
        let p = b.segment_max_pool(Source::Input, 2);
        let net = b.finish(p).unwrap();
        let mut s = Session::new(&net);
        let out = s
            .forward(&ParameterSet::new(), array![[1.0], [3.0], [-2.0], [-5.0]])
            .unwrap();
        assert_eq!(out, &array![[3.0], [-2.0]]);
        assert!(s
            .forward(&ParameterSet::new(), array![[1.0], [3.0], [-2.0]])
            .is_err());
    }
}
