//! Fixed-architecture neural building blocks with hand-written backward
//! passes: dense layers, two-layer MLPs, the bipartite half-convolution,
//! prenorm, masked softmax, Adam and parameter checkpoints.
//!
//! Parameters live in a [`ParamSet`]; layers hold [`ParamId`]s into it and
//! accumulate gradients into a matching [`Grads`].

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { what: String, expected: (usize, usize), got: (usize, usize) },
    #[error("mask selects no entry")]
    EmptyMask,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter matrices. Biases are stored as `1 x n` rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.values.iter().map(|v| Mat::zeros(v.dim())).collect())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut k = 0;
        for v in &mut self.values {
            for x in v.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| Tensor { name: n.clone(), rows: v.nrows(), cols: v.ncols(), data: v.iter().copied().collect() })
            .collect()
    }

    /// Overwrites every parameter from `tensors`, which must list the same
    /// names and shapes in the same order.
    pub fn load_tensors(&mut self, tensors: &[Tensor]) -> Result<(), NnError> {
        if tensors.len() != self.values.len() {
            return Err(NnError::Checkpoint(format!("{} tensors for {} parameters", tensors.len(), self.values.len())));
        }
        for ((name, v), t) in self.names.iter().zip(&mut self.values).zip(tensors) {
            if &t.name != name {
                return Err(NnError::Checkpoint(format!("expected tensor {name}, found {}", t.name)));
            }
            if (t.rows, t.cols) != v.dim() || t.data.len() != t.rows * t.cols {
                return Err(NnError::ShapeMismatch { what: name.clone(), expected: v.dim(), got: (t.rows, t.cols) });
            }
            *v = Mat::from_shape_vec((t.rows, t.cols), t.data.clone()).expect("checked shape");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Mat>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Mat {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, f: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|x| x * f);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|v| v.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn check_finite(&self, names: &[String]) -> Result<(), NnError> {
        for (n, g) in names.iter().zip(&self.0) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient(n.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is
/// shorter), scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> Mat {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..small {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Mat::from_shape_fn((rows, cols), |(i, j)| gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] })
}

pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

pub fn relu(x: &Mat) -> Mat {
    x.mapv(|v| v.max(0.0))
}

/// `dy` masked by `z > 0`.
pub fn relu_backward(z: &Mat, dy: &Mat) -> Mat {
    let mut d = dy.clone();
    d.zip_mut_with(z, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
    d
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Row-major copy when `m` is not already row-major.
fn row_major(m: Mat) -> Mat {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

fn check_cols(what: &str, x: &Mat, cols: usize) -> Result<(), NnError> {
    if x.ncols() != cols {
        return Err(NnError::ShapeMismatch { what: what.into(), expected: (x.nrows(), cols), got: x.dim() });
    }
    Ok(())
}

/// `y = x W + b` with `W` stored `inputs x outputs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let w = ps.add(format!("{name}.w"), orthogonal(inputs, outputs, gain, rng));
        let b = ps.add(format!("{name}.b"), Mat::zeros((1, outputs)));
        Linear { w, b, inputs, outputs }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> Mat {
        x.dot(ps.get(self.w)) + ps.get(self.b)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        self.backward_params(x, dy, g);
        dy.dot(&ps.get(self.w).t())
    }

    pub fn backward_params(&self, x: &Mat, dy: &Mat, g: &mut Grads) {
        *g.get_mut(self.w) += &x.t().dot(dy);
        *g.get_mut(self.b) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

/// Linear, ReLU, Linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Debug, Clone)]
pub struct Mlp2Cache {
    x: Mat,
    z1: Mat,
    h1: Mat,
}

impl Mlp2Cache {
    /// Signs of every ReLU pre-activation.
    pub fn signature(&self, out: &mut Vec<bool>) {
        out.extend(self.z1.iter().map(|&v| v > 0.0));
    }
}

impl Mlp2 {
    pub fn new(ps: &mut ParamSet, name: &str, inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let l1 = Linear::new(ps, &format!("{name}.0"), inputs, hidden, RELU_GAIN, rng);
        let l2 = Linear::new(ps, &format!("{name}.1"), hidden, outputs, 1.0, rng);
        Mlp2 { l1, l2 }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, Mlp2Cache) {
        let z1 = self.l1.forward(ps, x);
        let h1 = relu(&z1);
        let y = self.l2.forward(ps, &h1);
        (y, Mlp2Cache { x: x.clone(), z1, h1 })
    }

    pub fn backward(&self, ps: &ParamSet, c: &Mlp2Cache, dy: &Mat, g: &mut Grads) -> Mat {
        let dh1 = self.l2.backward(ps, &c.h1, dy, g);
        let dz1 = relu_backward(&c.z1, &dh1);
        self.l1.backward(ps, &c.x, &dz1, g)
    }
}

/// Edges of a bipartite graph seen from the side being updated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeList {
    pub target: Vec<usize>,
    pub source: Vec<usize>,
    pub value: Vec<f64>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn reversed(&self) -> EdgeList {
        EdgeList { target: self.source.clone(), source: self.target.clone(), value: self.value.clone() }
    }
}

/// One directed message pass
/// `h_t = MLP_out([x_t, sum_{(t,s)} MLP_msg([x_t, x_s, e_ts])])`.
///
/// The first message layer is split by input block so it can be applied per
/// node, and the linear second layer is applied after summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfConv {
    msg_t: ParamId,
    msg_s: ParamId,
    msg_e: ParamId,
    msg_b: ParamId,
    msg_out: Linear,
    out_t: ParamId,
    out_m: ParamId,
    out_b: ParamId,
    out: Linear,
    pub target_dim: usize,
    pub source_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// Frozen divisor applied to the aggregated messages.
    pub msg_scale: f64,
}

#[derive(Debug, Clone)]
pub struct HalfConvCache {
    xt: Mat,
    xs: Mat,
    z: Mat,
    r: Mat,
    deg: Vec<f64>,
    m: Mat,
    zo: Mat,
    ho: Mat,
}

impl HalfConvCache {
    /// Aggregated messages after the frozen scale.
    pub fn messages(&self) -> &Mat {
        &self.m
    }

    pub fn signature(&self, out: &mut Vec<bool>) {
        out.extend(self.z.iter().chain(self.zo.iter()).map(|&v| v > 0.0));
    }
}

impl HalfConv {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        target_dim: usize,
        source_dim: usize,
        hidden: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w1 = orthogonal(target_dim + source_dim + 1, hidden, RELU_GAIN, rng);
        let msg_t = ps.add(format!("{name}.msg.0.w_target"), w1.slice(s![..target_dim, ..]).to_owned());
        let msg_s = ps.add(format!("{name}.msg.0.w_source"), w1.slice(s![target_dim..target_dim + source_dim, ..]).to_owned());
        let msg_e = ps.add(format!("{name}.msg.0.w_edge"), w1.slice(s![target_dim + source_dim.., ..]).to_owned());
        let msg_b = ps.add(format!("{name}.msg.0.b"), Mat::zeros((1, hidden)));
        let msg_out = Linear::new(ps, &format!("{name}.msg.1"), hidden, hidden, 1.0, rng);
        let wo = orthogonal(target_dim + hidden, hidden, RELU_GAIN, rng);
        let out_t = ps.add(format!("{name}.out.0.w_target"), wo.slice(s![..target_dim, ..]).to_owned());
        let out_m = ps.add(format!("{name}.out.0.w_message"), wo.slice(s![target_dim.., ..]).to_owned());
        let out_b = ps.add(format!("{name}.out.0.b"), Mat::zeros((1, hidden)));
        let out = Linear::new(ps, &format!("{name}.out.1"), hidden, outputs, 1.0, rng);
        HalfConv {
            msg_t,
            msg_s,
            msg_e,
            msg_b,
            msg_out,
            out_t,
            out_m,
            out_b,
            out,
            target_dim,
            source_dim,
            hidden,
            outputs,
            msg_scale: 1.0,
        }
    }

    pub fn forward(&self, ps: &ParamSet, xt: &Mat, xs: &Mat, edges: &EdgeList) -> Result<(Mat, HalfConvCache), NnError> {
        check_cols("half-conv target", xt, self.target_dim)?;
        check_cols("half-conv source", xs, self.source_dim)?;
        let (nt, ns, h) = (xt.nrows(), xs.nrows(), self.hidden);
        if edges.target.iter().any(|&t| t >= nt) || edges.source.iter().any(|&s| s >= ns) {
            return Err(NnError::ShapeMismatch { what: "edge endpoints".into(), expected: (nt, ns), got: (nt, ns) });
        }
        let pt = row_major(xt.dot(ps.get(self.msg_t)));
        let psrc = row_major(xs.dot(ps.get(self.msg_s)));
        let we = ps.get(self.msg_e).as_slice().unwrap();
        let b1 = ps.get(self.msg_b).as_slice().unwrap();
        let mut z = Mat::zeros((edges.len(), h));
        let mut r = Mat::zeros((nt, h));
        let mut deg = vec![0.0; nt];
        {
            let (pt_s, ps_s) = (pt.as_slice().unwrap(), psrc.as_slice().unwrap());
            let z_s = z.as_slice_mut().unwrap();
            let r_s = r.as_slice_mut().unwrap();
            for k in 0..edges.len() {
                let (t, s, e) = (edges.target[k], edges.source[k], edges.value[k]);
                deg[t] += 1.0;
                let zk = &mut z_s[k * h..(k + 1) * h];
                let rt = &mut r_s[t * h..(t + 1) * h];
                for c in 0..h {
                    let v = pt_s[t * h + c] + ps_s[s * h + c] + e * we[c] + b1[c];
                    zk[c] = v;
                    if v > 0.0 {
                        rt[c] += v;
                    }
                }
            }
        }
        let mut m = r.dot(ps.get(self.msg_out.w));
        let b2 = ps.get(self.msg_out.b);
        for (t, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(deg[t], &b2.row(0));
        }
        if self.msg_scale != 1.0 {
            m /= self.msg_scale;
        }
        let zo = xt.dot(ps.get(self.out_t)) + m.dot(ps.get(self.out_m)) + ps.get(self.out_b);
        let ho = relu(&zo);
        let y = self.out.forward(ps, &ho);
        Ok((y, HalfConvCache { xt: xt.clone(), xs: xs.clone(), z, r, deg, m, zo, ho }))
    }

    /// Returns `(dL/dx_target, dL/dx_source)`.
    pub fn backward(&self, ps: &ParamSet, c: &HalfConvCache, edges: &EdgeList, dy: &Mat, g: &mut Grads) -> (Mat, Mat) {
        let h = self.hidden;
        let dho = self.out.backward(ps, &c.ho, dy, g);
        let dzo = relu_backward(&c.zo, &dho);
        *g.get_mut(self.out_t) += &c.xt.t().dot(&dzo);
        *g.get_mut(self.out_m) += &c.m.t().dot(&dzo);
        *g.get_mut(self.out_b) += &dzo.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dxt = dzo.dot(&ps.get(self.out_t).t());
        let mut dm = dzo.dot(&ps.get(self.out_m).t());
        if self.msg_scale != 1.0 {
            dm /= self.msg_scale;
        }
        *g.get_mut(self.msg_out.w) += &c.r.t().dot(&dm);
        {
            let db2 = g.get_mut(self.msg_out.b);
            for (t, row) in dm.axis_iter(Axis(0)).enumerate() {
                db2.row_mut(0).scaled_add(c.deg[t], &row);
            }
        }
        let dr = row_major(dm.dot(&ps.get(self.msg_out.w).t()));
        let mut dpt = Mat::zeros((c.xt.nrows(), h));
        let mut dps = Mat::zeros((c.xs.nrows(), h));
        let mut dwe = vec![0.0; h];
        let mut db1 = vec![0.0; h];
        {
            let (dr_s, z_s) = (dr.as_slice().unwrap(), c.z.as_slice().unwrap());
            let dpt_s = dpt.as_slice_mut().unwrap();
            let dps_s = dps.as_slice_mut().unwrap();
            for k in 0..edges.len() {
                let (t, s, e) = (edges.target[k], edges.source[k], edges.value[k]);
                for col in 0..h {
                    if z_s[k * h + col] > 0.0 {
                        let d = dr_s[t * h + col];
                        dpt_s[t * h + col] += d;
                        dps_s[s * h + col] += d;
                        dwe[col] += e * d;
                        db1[col] += d;
                    }
                }
            }
        }
        for col in 0..h {
            g.get_mut(self.msg_e)[(0, col)] += dwe[col];
            g.get_mut(self.msg_b)[(0, col)] += db1[col];
        }
        *g.get_mut(self.msg_t) += &c.xt.t().dot(&dpt);
        *g.get_mut(self.msg_s) += &c.xs.t().dot(&dps);
        dxt += &dpt.dot(&ps.get(self.msg_t).t());
        let dxs = dps.dot(&ps.get(self.msg_s).t());
        (dxt, dxs)
    }
}

/// Frozen per-feature affine normalization `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prenorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

pub const PRENORM_SCALE_FLOOR: f64 = 1e-8;

impl Prenorm {
    pub fn identity(dim: usize) -> Self {
        Prenorm { shift: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Mean and population standard deviation of every column over all rows
    /// of all matrices.
    pub fn fit<'a>(dim: usize, batches: impl IntoIterator<Item = &'a Mat>) -> Self {
        let mut count = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for x in batches {
            assert_eq!(x.ncols(), dim);
            for row in x.rows() {
                count += 1.0;
                for (k, &v) in row.iter().enumerate() {
                    let d = v - mean[k];
                    mean[k] += d / count;
                    m2[k] += d * (v - mean[k]);
                }
            }
        }
        let scale = m2
            .iter()
            .map(|s| if count > 0.0 { (s / count).sqrt().max(PRENORM_SCALE_FLOOR) } else { 1.0 })
            .collect();
        Prenorm { shift: mean, scale }
    }

    /// Shift-free scale for `msg_scale`: the root mean square over every
    /// entry, floored like the per-feature scales.
    pub fn rms<'a>(batches: impl IntoIterator<Item = &'a Mat>) -> f64 {
        let (mut sum, mut count) = (0.0, 0.0);
        for x in batches {
            sum += x.iter().map(|v| v * v).sum::<f64>();
            count += x.len() as f64;
        }
        if count > 0.0 { (sum / count).sqrt().max(PRENORM_SCALE_FLOOR) } else { 1.0 }
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.shift[k]) / self.scale[k];
            }
        }
        y
    }

    pub fn backward(&self, dy: &Mat) -> Mat {
        let mut dx = dy.clone();
        for mut row in dx.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v /= self.scale[k];
            }
        }
        dx
    }
}

/// Softmax over the entries with `mask[k]`, zero elsewhere.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>, NnError> {
    assert_eq!(scores.len(), mask.len());
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::EmptyMask);
    }
    let mut p: Vec<f64> = scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 }).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Cross-entropy of the masked softmax against `target`, and its gradient
/// with respect to the scores.
pub fn masked_cross_entropy(scores: &[f64], mask: &[bool], target: usize) -> Result<(f64, Vec<f64>), NnError> {
    assert!(mask[target], "target must be unmasked");
    let p = masked_softmax(scores, mask)?;
    let max = scores.iter().zip(mask).filter(|(_, &m)| m).map(|(&s, _)| s).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().zip(mask).filter(|(_, &m)| m).map(|(&s, _)| (s - max).exp()).sum::<f64>().ln();
    let loss = lse - scores[target];
    let mut d = p;
    d[target] -= 1.0;
    Ok((loss, d))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(ps: &ParamSet, lr: f64) -> Self {
        let zeros = ps.zero_grads().0;
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, ps: &mut ParamSet, g: &Grads) -> Result<(), NnError> {
        g.check_finite(ps.names())?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for k in 0..ps.values.len() {
            let (p, gk, m, v) = (&mut ps.values[k], &g.0[k], &mut self.m[k], &mut self.v[k]);
            ndarray::Zip::from(p).and(gk).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "milpbranch-params/1";

/// Versioned checkpoint: named tensors in creation order plus model
/// configuration and prenorm statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: String,
    pub config: serde_json::Value,
    pub prenorm: Vec<(String, Prenorm)>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unsupported format {}", ck.format)));
        }
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), NnError> {
        if self.kind != kind {
            return Err(NnError::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}
