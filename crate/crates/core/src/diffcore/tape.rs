use super::{mismatch, DenseArray, DiffError, ParamId, ParamStore, Result, EXP_CLAMP, LOG_CLAMP};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseArray,
    op: Op,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-LOG_CLAMP, LOG_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_floor() -> f64 {
    (-LOG_CLAMP).exp()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        debug_assert!(value.data().iter().all(|x| x.is_finite()), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records a constant or input. Inputs receive gradients like any other value.
    pub fn leaf(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Copies a parameter onto the tape; its gradient is reported by
    /// [`Gradients::for_params`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<()> {
        if self.value(v).is_rank2() {
            Ok(())
        } else {
            Err(mismatch(op, self.shape(v), &[0, 0]))
        }
    }

    fn same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(mismatch(op, self.shape(a), self.shape(b)))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Broadcasts a `[1, c]` row over every row of `a [r, c]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.rank2("add_row", a)?;
        let (va, vr) = (self.value(a), self.value(row));
        if vr.shape() != [1, va.cols()] {
            return Err(mismatch("add_row", va.shape(), vr.shape()));
        }
        let c = va.cols();
        let mut out = va.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += vr.data()[i % c];
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a))
    }

    /// Subgradient 0 at 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.min(EXP_CLAMP).exp());
        self.push(out, Op::Exp(a))
    }

    /// Natural log with inputs floored at `exp(-LOG_CLAMP)`.
    pub fn log(&mut self, a: Var) -> Var {
        let floor = log_floor();
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(out, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    /// Gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(DenseArray::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.sum() / v.len().max(1) as f64;
        self.push(DenseArray::scalar(m), Op::Mean(a))
    }

    /// Row sums: `[r, c] -> [r, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.rank2("sum_cols", a)?;
        let v = self.value(a);
        let sums: Vec<f64> = (0..v.rows()).map(|r| v.row_slice(r).iter().sum()).collect();
        let out = DenseArray::new(vec![v.rows(), 1], sums)?;
        Ok(self.push(out, Op::SumCols(a)))
    }

    /// Column-wise concatenation of arrays with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(mismatch("concat", &[], &[]));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            self.rank2("concat", p)?;
            if self.value(p).rows() != rows {
                return Err(mismatch("concat", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = DenseArray::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        self.rank2("gather_rows", a)?;
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(DiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    rows,
                });
            }
            data.extend_from_slice(v.row_slice(i));
        }
        let out = DenseArray::new(vec![index.len(), cols], data)?;
        Ok(self.push(out, Op::GatherRows(a, index.to_vec())))
    }

    /// `out[index[i]] += a[i]` into `out_rows` zero rows; the message-passing primitive.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], out_rows: usize) -> Result<Var> {
        self.rank2("scatter_add_rows", a)?;
        let v = self.value(a);
        if index.len() != v.rows() {
            return Err(mismatch("scatter_add_rows", v.shape(), &[index.len()]));
        }
        let cols = v.cols();
        let mut out = DenseArray::zeros(out_rows, cols);
        for (src, &dst) in index.iter().enumerate() {
            if dst >= out_rows {
                return Err(DiffError::IndexOutOfRange {
                    op: "scatter_add_rows",
                    index: dst,
                    rows: out_rows,
                });
            }
            let row = v.row_slice(src);
            for (c, &x) in row.iter().enumerate() {
                out.data_mut()[dst * cols + c] += x;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, index.to_vec())))
    }

    /// Reverse pass seeded with ones at `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<DenseArray>> = vec![None; self.nodes.len()];
        let out_val = &self.nodes[output.0].value;
        grads[output.0] = Some(DenseArray::new(out_val.shape().to_vec(), vec![1.0; out_val.len()]).expect("shape"));

        fn acc(grads: &mut [Option<DenseArray>], v: Var, g: DenseArray) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&val(*b).transpose()).expect("matmul grad");
                    let gb = val(*a).transpose().matmul(&g).expect("matmul grad");
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let c = g.cols();
                    let mut gr = vec![0.0; c];
                    for (i, &x) in g.data().iter().enumerate() {
                        gr[i % c] += x;
                    }
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *row, DenseArray::row(&gr));
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.map(|x| x * k)),
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::Relu(a) => {
                    acc(&mut grads, *a, g.zip_map(val(*a), |gx, x| if x > 0.0 { gx } else { 0.0 }))
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |gx, s| {
                        gx * s * (1.0 - s)
                    });
                    // Flat beyond the clamp.
                    let ga = ga.zip_map(val(*a), |gx, x| if x.abs() > LOG_CLAMP { 0.0 } else { gx });
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |gx, e| gx * e);
                    let ga = ga.zip_map(val(*a), |gx, x| if x > EXP_CLAMP { 0.0 } else { gx });
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let floor = log_floor();
                    acc(&mut grads, *a, g.zip_map(val(*a), |gx, x| if x >= floor { gx / x } else { 0.0 }))
                }
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(&node.value, |gx, t| gx * (1.0 - t * t))),
                Op::Softplus(a) => acc(&mut grads, *a, g.zip_map(val(*a), |gx, x| gx * sigmoid(x))),
                Op::Clamp(a, lo, hi) => acc(
                    &mut grads,
                    *a,
                    g.zip_map(val(*a), |gx, x| if x >= *lo && x <= *hi { gx } else { 0.0 }),
                ),
                Op::Sum(a) => {
                    let va = val(*a);
                    let s = g.item();
                    acc(&mut grads, *a, DenseArray::new(va.shape().to_vec(), vec![s; va.len()]).expect("shape"));
                }
                Op::Mean(a) => {
                    let va = val(*a);
                    let s = g.item() / va.len().max(1) as f64;
                    acc(&mut grads, *a, DenseArray::new(va.shape().to_vec(), vec![s; va.len()]).expect("shape"));
                }
                Op::SumCols(a) => {
                    let va = val(*a);
                    let c = va.cols();
                    let data: Vec<f64> = (0..va.len()).map(|i| g.data()[i / c]).collect();
                    acc(&mut grads, *a, DenseArray::new(va.shape().to_vec(), data).expect("shape"));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = val(p).cols();
                        let rows = g.rows();
                        let mut data = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                        }
                        acc(&mut grads, p, DenseArray::new(vec![rows, pc], data).expect("shape"));
                        offset += pc;
                    }
                }
                Op::GatherRows(a, index) => {
                    let va = val(*a);
                    let cols = va.cols();
                    let mut ga = DenseArray::zeros(va.rows(), cols);
                    for (i, &src) in index.iter().enumerate() {
                        for c in 0..cols {
                            ga.data_mut()[src * cols + c] += g.data()[i * cols + c];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAddRows(a, index) => {
                    let cols = g.cols();
                    let mut data = Vec::with_capacity(index.len() * cols);
                    for &dst in index {
                        data.extend_from_slice(g.row_slice(dst));
                    }
                    acc(&mut grads, *a, DenseArray::new(vec![index.len(), cols], data).expect("shape"));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients {
            grads,
            params: self.nodes.iter().map(|n| n.param).collect(),
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
    params: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`; `None` if `v` does not
    /// influence the output.
    pub fn get(&self, v: Var) -> Option<&DenseArray> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// `(parameter, gradient)` for every parameter copy on the tape. A
    /// parameter placed on the tape twice appears twice.
    pub fn for_params(&self) -> impl Iterator<Item = (ParamId, &DenseArray)> {
        self.params
            .iter()
            .zip(&self.grads)
            .filter_map(|(p, g)| Some(((*p)?, g.as_ref()?)))
    }
}
