//! Generic array primitives.

use super::tape::{Function, Tape, Tensor, Var};
use super::AutodiffError;

fn same_shape(name: &str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape != b.shape {
        return Err(AutodiffError::Shape(format!("{name}: {:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

/// Neumaier-compensated sum. Reductions to a scalar objective use it so that
/// finite-difference checks see the function and not the summation order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

struct Add;
impl Function for Add {
    fn name(&self) -> &'static str {
        "add"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        same_shape("add", x[0], x[1])?;
        let data = x[0].data.iter().zip(&x[1].data).map(|(a, b)| a + b).collect();
        Ok(Tensor { shape: x[0].shape.clone(), data })
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![g.to_vec(), g.to_vec()]
    }
}

struct Sub;
impl Function for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        same_shape("sub", x[0], x[1])?;
        let data = x[0].data.iter().zip(&x[1].data).map(|(a, b)| a - b).collect();
        Ok(Tensor { shape: x[0].shape.clone(), data })
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![g.to_vec(), g.iter().map(|v| -v).collect()]
    }
}

struct Scale(f64);
impl Function for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        Ok(Tensor { shape: x[0].shape.clone(), data: x[0].data.iter().map(|a| a * self.0).collect() })
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![g.iter().map(|v| v * self.0).collect()]
    }
}

struct Mul;
impl Function for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        same_shape("mul", x[0], x[1])?;
        let data = x[0].data.iter().zip(&x[1].data).map(|(a, b)| a * b).collect();
        Ok(Tensor { shape: x[0].shape.clone(), data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Vec<f64>> {
        let ga = if needs[0] { g.iter().zip(&x[1].data).map(|(g, b)| g * b).collect() } else { vec![] };
        let gb = if needs[1] { g.iter().zip(&x[0].data).map(|(g, a)| g * a).collect() } else { vec![] };
        vec![ga, gb]
    }
}

/// `[m, k] × [k, n]`.
struct MatMul;
impl Function for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (a, b) = (x[0], x[1]);
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(AutodiffError::Shape(format!("matmul: {:?} × {:?}", a.shape, b.shape)));
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a.data[i * k + p];
                for (o, bv) in row.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Vec<f64>> {
        let (a, b) = (x[0], x[1]);
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut ga = Vec::new();
        if needs[0] {
            ga = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    ga[i * k + p] = (0..n).map(|j| g[i * n + j] * b.data[p * n + j]).sum::<f64>();
                }
            }
        }
        let mut gb = Vec::new();
        if needs[1] {
            gb = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let av = a.data[i * k + p];
                    for j in 0..n {
                        gb[p * n + j] += av * g[i * n + j];
                    }
                }
            }
        }
        vec![ga, gb]
    }
}

struct Sum;
impl Function for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        Ok(Tensor::scalar(compensated_sum(x[0].data.iter().copied())))
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![vec![g[0]; x[0].numel()]]
    }
}

/// Elementwise map with a derivative expressed in terms of input and output.
struct Unary {
    name: &'static str,
    f: fn(f64) -> f64,
    df: fn(f64, f64) -> f64,
}
impl Function for Unary {
    fn name(&self) -> &'static str {
        self.name
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        Ok(Tensor { shape: x[0].shape.clone(), data: x[0].data.iter().map(|&a| (self.f)(a)).collect() })
    }
    fn backward(&self, x: &[&Tensor], y: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![x[0].data.iter().zip(&y.data).zip(g).map(|((&a, &b), &g)| g * (self.df)(a, b)).collect()]
    }
}

const GELU_C: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
}

/// Softmax over the last axis.
struct Softmax;
impl Function for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let n = *x[0].shape.last().ok_or_else(|| AutodiffError::Shape("softmax of a 0-d tensor".into()))?;
        let mut out = x[0].data.clone();
        for row in out.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        Ok(Tensor { shape: x[0].shape.clone(), data: out })
    }
    fn backward(&self, _: &[&Tensor], y: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let n = *y.shape.last().unwrap();
        let mut out = vec![0.0; y.numel()];
        for ((o, yr), gr) in out.chunks_exact_mut(n).zip(y.data.chunks_exact(n)).zip(g.chunks_exact(n)) {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((o, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
                *o = yv * (gv - dot);
            }
        }
        vec![out]
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Mean absolute residual against a fixed target; subgradient `sign(0) = 0`.
struct L1Loss {
    target: Vec<f64>,
}
impl Function for L1Loss {
    fn name(&self) -> &'static str {
        "l1_loss"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        if x[0].numel() != self.target.len() || self.target.is_empty() {
            return Err(AutodiffError::Shape(format!(
                "l1_loss: prediction has {} values, target {}",
                x[0].numel(),
                self.target.len()
            )));
        }
        let total = compensated_sum(x[0].data.iter().zip(&self.target).map(|(p, t)| (p - t).abs()));
        Ok(Tensor::scalar(total / self.target.len() as f64))
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let scale = g[0] / self.target.len() as f64;
        vec![x[0]
            .data
            .iter()
            .zip(&self.target)
            .map(|(p, t)| {
                let r = p - t;
                if r > 0.0 {
                    scale
                } else if r < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
            .collect()]
    }
}

/// Rows `idx` of a tensor whose leading axis indexes rows.
struct GatherRows {
    idx: Vec<usize>,
}
impl Function for GatherRows {
    fn name(&self) -> &'static str {
        "gather_rows"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let n = x[0].shape[0];
        let row = x[0].numel() / n.max(1);
        let mut data = Vec::with_capacity(self.idx.len() * row);
        for &i in &self.idx {
            if i >= n {
                return Err(AutodiffError::Index(format!("row {i} of {n}")));
            }
            data.extend_from_slice(&x[0].data[i * row..(i + 1) * row]);
        }
        let mut shape = x[0].shape.clone();
        shape[0] = self.idx.len();
        Ok(Tensor { shape, data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let row = x[0].numel() / x[0].shape[0].max(1);
        let mut out = vec![0.0; x[0].numel()];
        for (k, &i) in self.idx.iter().enumerate() {
            for (o, gv) in out[i * row..(i + 1) * row].iter_mut().zip(&g[k * row..(k + 1) * row]) {
                *o += gv;
            }
        }
        vec![out]
    }
}

/// Mean of the rows assigned to each group; every group must be nonempty.
struct ScatterMean {
    assignment: Vec<usize>,
    counts: Vec<usize>,
}
impl Function for ScatterMean {
    fn name(&self) -> &'static str {
        "scatter_mean"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let n = x[0].shape[0];
        if n != self.assignment.len() {
            return Err(AutodiffError::Shape(format!("scatter_mean: {n} rows, {} assignments", self.assignment.len())));
        }
        let row = x[0].numel() / n.max(1);
        let groups = self.counts.len();
        let mut out = vec![0.0; groups * row];
        // Rows are visited in index order, so each group sums in a fixed order.
        for (v, &p) in self.assignment.iter().enumerate() {
            for (o, xv) in out[p * row..(p + 1) * row].iter_mut().zip(&x[0].data[v * row..(v + 1) * row]) {
                *o += xv;
            }
        }
        for (p, &c) in self.counts.iter().enumerate() {
            let inv = 1.0 / c as f64;
            out[p * row..(p + 1) * row].iter_mut().for_each(|o| *o *= inv);
        }
        let mut shape = x[0].shape.clone();
        shape[0] = groups;
        Ok(Tensor { shape, data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let row = x[0].numel() / x[0].shape[0].max(1);
        let mut out = vec![0.0; x[0].numel()];
        for (v, &p) in self.assignment.iter().enumerate() {
            let inv = 1.0 / self.counts[p] as f64;
            for (o, gv) in out[v * row..(v + 1) * row].iter_mut().zip(&g[p * row..(p + 1) * row]) {
                *o = gv * inv;
            }
        }
        vec![out]
    }
}

/// Concatenation along the leading axis.
struct ConcatRows;
impl Function for ConcatRows {
    fn name(&self) -> &'static str {
        "concat_rows"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let tail = &x[0].shape[1..];
        let mut rows = 0;
        let mut data = Vec::new();
        for t in x {
            if &t.shape[1..] != tail {
                return Err(AutodiffError::Shape(format!("concat_rows: {:?} vs {:?}", t.shape, x[0].shape)));
            }
            rows += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = x[0].shape.clone();
        shape[0] = rows;
        Ok(Tensor { shape, data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let mut offset = 0;
        x.iter()
            .map(|t| {
                let part = g[offset..offset + t.numel()].to_vec();
                offset += t.numel();
                part
            })
            .collect()
    }
}

/// Concatenation along axis 1 of `[n, c_i, w]` tensors.
struct ConcatChannels;
impl Function for ConcatChannels {
    fn name(&self) -> &'static str {
        "concat_channels"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (n, w) = (x[0].shape[0], x[0].shape[2]);
        for t in x {
            if t.shape.len() != 3 || t.shape[0] != n || t.shape[2] != w {
                return Err(AutodiffError::Shape(format!("concat_channels: {:?} vs {:?}", t.shape, x[0].shape)));
            }
        }
        let c: usize = x.iter().map(|t| t.shape[1]).sum();
        let mut data = Vec::with_capacity(n * c * w);
        for i in 0..n {
            for t in x {
                let cw = t.shape[1] * w;
                data.extend_from_slice(&t.data[i * cw..(i + 1) * cw]);
            }
        }
        Ok(Tensor { shape: vec![n, c, w], data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let (n, w) = (x[0].shape[0], x[0].shape[2]);
        let c: usize = x.iter().map(|t| t.shape[1]).sum();
        let mut outs: Vec<Vec<f64>> = x.iter().map(|t| Vec::with_capacity(t.numel())).collect();
        for i in 0..n {
            let mut off = i * c * w;
            for (t, o) in x.iter().zip(outs.iter_mut()) {
                let cw = t.shape[1] * w;
                o.extend_from_slice(&g[off..off + cw]);
                off += cw;
            }
        }
        outs
    }
}

/// Channels `start..start + len` of an `[n, c, w]` tensor.
struct SliceChannels {
    start: usize,
    len: usize,
}
impl Function for SliceChannels {
    fn name(&self) -> &'static str {
        "slice_channels"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let s = &x[0].shape;
        if s.len() != 3 || self.start + self.len > s[1] {
            return Err(AutodiffError::Shape(format!(
                "slice_channels {}..{} of {:?}",
                self.start,
                self.start + self.len,
                s
            )));
        }
        let (n, c, w) = (s[0], s[1], s[2]);
        let mut data = Vec::with_capacity(n * self.len * w);
        for i in 0..n {
            let base = (i * c + self.start) * w;
            data.extend_from_slice(&x[0].data[base..base + self.len * w]);
        }
        Ok(Tensor { shape: vec![n, self.len, w], data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let (n, c, w) = (x[0].shape[0], x[0].shape[1], x[0].shape[2]);
        let mut out = vec![0.0; x[0].numel()];
        for i in 0..n {
            let base = (i * c + self.start) * w;
            out[base..base + self.len * w].copy_from_slice(&g[i * self.len * w..(i + 1) * self.len * w]);
        }
        vec![out]
    }
}

/// Fixed linear readout of selected components of the last axis:
/// `out[.., j] = Σ coeff * in[.., comp]` over the terms of entry `j`.
struct Readout {
    width: usize,
    terms: Vec<Vec<(usize, f64)>>,
}
impl Function for Readout {
    fn name(&self) -> &'static str {
        "readout"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        if x[0].shape.last() != Some(&self.width) {
            return Err(AutodiffError::Shape(format!("readout expects last axis {}", self.width)));
        }
        let k = self.terms.len();
        let rows = x[0].numel() / self.width;
        let mut data = Vec::with_capacity(rows * k);
        for r in x[0].data.chunks_exact(self.width) {
            for t in &self.terms {
                data.push(t.iter().map(|&(c, w)| w * r[c]).sum());
            }
        }
        let mut shape = x[0].shape.clone();
        *shape.last_mut().unwrap() = k;
        Ok(Tensor { shape, data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let k = self.terms.len();
        let mut out = vec![0.0; x[0].numel()];
        for (o, gr) in out.chunks_exact_mut(self.width).zip(g.chunks_exact(k)) {
            for (t, gv) in self.terms.iter().zip(gr) {
                for &(c, w) in t {
                    o[c] += w * gv;
                }
            }
        }
        vec![out]
    }
}

/// Fixed convex (or any) combination of rows:
/// `out[v] = Σ_j weights[v][j] * in[neighbors[v][j]]`.
struct WeightedGather {
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    k: usize,
}
impl Function for WeightedGather {
    fn name(&self) -> &'static str {
        "weighted_gather"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let n_in = x[0].shape[0];
        let row = x[0].numel() / n_in.max(1);
        let n_out = self.neighbors.len() / self.k;
        let mut data = vec![0.0; n_out * row];
        for v in 0..n_out {
            let out = &mut data[v * row..(v + 1) * row];
            for j in 0..self.k {
                let p = self.neighbors[v * self.k + j];
                if p >= n_in {
                    return Err(AutodiffError::Index(format!("neighbor {p} of {n_in}")));
                }
                let w = self.weights[v * self.k + j];
                for (o, xv) in out.iter_mut().zip(&x[0].data[p * row..(p + 1) * row]) {
                    *o += w * xv;
                }
            }
        }
        let mut shape = x[0].shape.clone();
        shape[0] = n_out;
        Ok(Tensor { shape, data })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let row = x[0].numel() / x[0].shape[0].max(1);
        let n_out = self.neighbors.len() / self.k;
        let mut out = vec![0.0; x[0].numel()];
        for v in 0..n_out {
            for j in 0..self.k {
                let p = self.neighbors[v * self.k + j];
                let w = self.weights[v * self.k + j];
                for (o, gv) in out[p * row..(p + 1) * row].iter_mut().zip(&g[v * row..(v + 1) * row]) {
                    *o += w * gv;
                }
            }
        }
        vec![out]
    }
}

struct Reshape {
    shape: Vec<usize>,
}
impl Function for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        Tensor::new(self.shape.clone(), x[0].data.clone())
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![g.to_vec()]
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Add), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Sub), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.record(Box::new(Scale(c)), &[a])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Mul), &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(MatMul), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Sum), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Unary { name: "gelu", f: gelu, df: |x, _| gelu_grad(x) }), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Unary { name: "sqrt", f: f64::sqrt, df: |_, y| 0.5 / y }), &[a])
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Unary { name: "recip", f: |x| 1.0 / x, df: |_, y| -y * y }), &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(Softmax), &[a])
    }

    pub fn l1_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var, AutodiffError> {
        self.record(Box::new(L1Loss { target: target.to_vec() }), &[pred])
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        self.record(Box::new(GatherRows { idx: idx.to_vec() }), &[a])
    }

    /// Mean over rows per group. Fails when a group in `0..groups` is empty.
    pub fn scatter_mean(&mut self, a: Var, assignment: &[usize], groups: usize) -> Result<Var, AutodiffError> {
        let mut counts = vec![0usize; groups];
        for &p in assignment {
            if p >= groups {
                return Err(AutodiffError::Index(format!("group {p} of {groups}")));
            }
            counts[p] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(AutodiffError::EmptyGroup(empty));
        }
        self.record(Box::new(ScatterMean { assignment: assignment.to_vec(), counts }), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.record(Box::new(ConcatRows), parts)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.record(Box::new(ConcatChannels), parts)
    }

    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.record(Box::new(SliceChannels { start, len }), &[a])
    }

    /// Linear readout of the last axis; see [`Readout`].
    pub fn readout(&mut self, a: Var, width: usize, terms: Vec<Vec<(usize, f64)>>) -> Result<Var, AutodiffError> {
        self.record(Box::new(Readout { width, terms }), &[a])
    }

    pub fn weighted_gather(
        &mut self,
        a: Var,
        neighbors: &[usize],
        weights: &[f64],
        k: usize,
    ) -> Result<Var, AutodiffError> {
        if k == 0 || neighbors.len() != weights.len() || neighbors.len() % k != 0 {
            return Err(AutodiffError::Shape("weighted_gather: inconsistent neighbor table".into()));
        }
        self.record(Box::new(WeightedGather { neighbors: neighbors.to_vec(), weights: weights.to_vec(), k }), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        self.record(Box::new(Reshape { shape }), &[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn add_and_mul_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::scalar(2.0));
        let b = t.leaf(Tensor::scalar(5.0));
        let s = t.add(a, b).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!((g.get(&t, a), g.get(&t, b)), (vec![1.0], vec![1.0]));

        let p = t.mul(a, b).unwrap();
        let g = t.backward(p).unwrap();
        assert_eq!((g.get(&t, a), g.get(&t, b)), (vec![5.0], vec![2.0]));
    }

    #[test]
    fn square_plus_identity() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let xx = t.mul(x, x).unwrap();
        let f = t.add(xx, x).unwrap();
        assert_eq!(t.value(f).item(), 12.0);
        assert_eq!(t.backward(f).unwrap().get(&t, x), vec![7.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(vec![2]));
        let b = t.leaf(Tensor::zeros(vec![3]));
        assert!(matches!(t.add(a, b), Err(AutodiffError::Shape(_))));
        let m = t.leaf(Tensor::zeros(vec![2, 3]));
        assert!(t.matmul(m, m).is_err());
    }

    #[test]
    fn l1_subgradient_at_zero() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let l = t.l1_loss(p, &[0.0, 2.0, 4.0]).unwrap();
        assert!((t.value(l).item() - 2.0 / 3.0).abs() < 1e-15);
        let g = t.backward(l).unwrap().get(&t, p);
        assert_eq!(g, vec![1.0 / 3.0, 0.0, -1.0 / 3.0]);
    }

    #[test]
    fn scatter_mean_rejects_empty_groups() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(vec![3, 2]));
        assert!(matches!(t.scatter_mean(a, &[0, 0, 2], 3), Err(AutodiffError::EmptyGroup(1))));
        let m = t.scatter_mean(a, &[0, 1, 1], 2).unwrap();
        assert_eq!(t.shape(m), &[2, 2]);
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let y = t.scale(x, 3.0).unwrap();
        let z = t.add(y, x).unwrap();
        let s = t.sum(z).unwrap();
        assert_eq!(t.backward(s).unwrap().get(&t, x), vec![4.0, 4.0]);
    }
}
