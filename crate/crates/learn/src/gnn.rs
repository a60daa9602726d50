//! Bipartite GNNs over branching samples (the policy) and over static
//! instance graphs (the encoder shared by augmenter, value net and
//! discriminator).

use milpbranch_core::features::{BranchSample, CONS_FEATURES, VAR_FEATURES};
use milpbranch_core::model::{InstanceGraph, INSTANCE_VAR_FEATURES};
use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    relu, relu_backward, Checkpoint, EdgeList, Grads, HalfConv, HalfConvCache, Linear, Mat, Mlp2, Mlp2Cache, NnError,
    ParamSet, Prenorm, CHECKPOINT_FORMAT, RELU_GAIN,
};

/// Raw (unnormalized) network input for one branching sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub var: Mat,
    pub cons: Mat,
    /// Constraint-side targets, variable-side sources.
    pub edges: EdgeList,
    pub mask: Vec<bool>,
}

impl SampleInput {
    pub fn new(s: &BranchSample) -> Self {
        let var = Mat::from_shape_fn((s.num_vars(), VAR_FEATURES), |(j, k)| s.var_features[j][k]);
        let cons = Mat::from_shape_fn((s.num_cons(), CONS_FEATURES), |(i, k)| s.cons_features[i][k]);
        let edges = EdgeList {
            target: s.edges.iter().map(|e| e.cons as usize).collect(),
            source: s.edges.iter().map(|e| e.var as usize).collect(),
            value: s.edges.iter().map(|e| e.coeff).collect(),
        };
        SampleInput { var, cons, edges, mask: s.candidate_mask.clone() }
    }

    fn edge_matrix(&self) -> Mat {
        Mat::from_shape_vec((self.edges.len(), 1), self.edges.value.clone()).expect("column")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetConfig {
    pub hidden: usize,
    pub seed: u64,
}

impl Default for PolicyNetConfig {
    fn default() -> Self {
        PolicyNetConfig { hidden: 64, seed: 0 }
    }
}

/// Embedding, constraint-side then variable-side half-convolution, and a
/// two-layer scoring head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub config: PolicyNetConfig,
    pub params: ParamSet,
    pub var_norm: Prenorm,
    pub cons_norm: Prenorm,
    pub edge_norm: Prenorm,
    var_embed: Mlp2,
    cons_embed: Mlp2,
    pub conv_vc: HalfConv,
    pub conv_cv: HalfConv,
    head: Mlp2,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    var_mlp: Mlp2Cache,
    cons_mlp: Mlp2Cache,
    var_z: Mat,
    cons_z: Mat,
    edges_vc: EdgeList,
    edges_cv: EdgeList,
    vc: HalfConvCache,
    cv: HalfConvCache,
    head: Mlp2Cache,
    /// Variable embeddings fed to the head.
    pub embeddings: Mat,
}

impl PolicyCache {
    /// Signs of every ReLU pre-activation, for locating kinks.
    pub fn signature(&self) -> Vec<bool> {
        let mut out: Vec<bool> = self.var_z.iter().chain(self.cons_z.iter()).map(|&v| v > 0.0).collect();
        self.var_mlp.signature(&mut out);
        self.cons_mlp.signature(&mut out);
        self.vc.signature(&mut out);
        self.cv.signature(&mut out);
        self.head.signature(&mut out);
        out
    }
}

/// Parameter gradients plus gradients with respect to the raw inputs.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub params: Grads,
    pub var_input: Mat,
    pub cons_input: Mat,
}

/// Two ReLU layers; the caller applies the second ReLU.
fn embedding(ps: &mut ParamSet, name: &str, inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Mlp2 {
    Mlp2 {
        l1: Linear::new(ps, &format!("{name}.0"), inputs, hidden, RELU_GAIN, rng),
        l2: Linear::new(ps, &format!("{name}.1"), hidden, hidden, RELU_GAIN, rng),
    }
}

pub const POLICY_KIND: &str = "branching-policy";

impl PolicyNet {
    pub fn new(config: PolicyNetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let mut ps = ParamSet::new();
        let var_embed = embedding(&mut ps, "var_embed", VAR_FEATURES, h, &mut rng);
        let cons_embed = embedding(&mut ps, "cons_embed", CONS_FEATURES, h, &mut rng);
        let conv_vc = HalfConv::new(&mut ps, "conv_v_to_c", h, h, h, h, &mut rng);
        let conv_cv = HalfConv::new(&mut ps, "conv_c_to_v", h, h, h, h, &mut rng);
        let head = Mlp2::new(&mut ps, "head", h, h, 1, &mut rng);
        PolicyNet {
            config,
            params: ps,
            var_norm: Prenorm::identity(VAR_FEATURES),
            cons_norm: Prenorm::identity(CONS_FEATURES),
            edge_norm: Prenorm::identity(1),
            var_embed,
            cons_embed,
            conv_vc,
            conv_cv,
            head,
        }
    }

    /// Fits the three prenorm layers on a pass over `samples`; they stay
    /// frozen afterwards.
    pub fn fit_prenorm<'a>(&mut self, samples: impl IntoIterator<Item = &'a SampleInput>) {
        let inputs: Vec<&SampleInput> = samples.into_iter().collect();
        self.var_norm = Prenorm::fit(VAR_FEATURES, inputs.iter().map(|s| &s.var));
        self.cons_norm = Prenorm::fit(CONS_FEATURES, inputs.iter().map(|s| &s.cons));
        let edges: Vec<Mat> = inputs.iter().map(|s| s.edge_matrix()).collect();
        self.edge_norm = Prenorm::fit(1, edges.iter());
        self.conv_vc.msg_scale = 1.0;
        self.conv_cv.msg_scale = 1.0;
        let vc: Vec<Mat> = inputs.iter().filter_map(|x| self.forward(x).ok()).map(|(_, c)| c.vc.messages().clone()).collect();
        self.conv_vc.msg_scale = Prenorm::rms(vc.iter());
        let cv: Vec<Mat> = inputs.iter().filter_map(|x| self.forward(x).ok()).map(|(_, c)| c.cv.messages().clone()).collect();
        self.conv_cv.msg_scale = Prenorm::rms(cv.iter());
    }

    pub fn forward(&self, x: &SampleInput) -> Result<(Vec<f64>, PolicyCache), NnError> {
        let ps = &self.params;
        let var_in = self.var_norm.apply(&x.var);
        let cons_in = self.cons_norm.apply(&x.cons);
        let (var_z, var_mlp) = self.var_embed.forward(ps, &var_in);
        let (cons_z, cons_mlp) = self.cons_embed.forward(ps, &cons_in);
        let (v0, c0) = (relu(&var_z), relu(&cons_z));
        let (shift, scale) = (self.edge_norm.shift[0], self.edge_norm.scale[0]);
        let edges_vc = EdgeList {
            target: x.edges.target.clone(),
            source: x.edges.source.clone(),
            value: x.edges.value.iter().map(|v| (v - shift) / scale).collect(),
        };
        let edges_cv = edges_vc.reversed();
        let (c1, vc) = self.conv_vc.forward(ps, &c0, &v0, &edges_vc)?;
        let (v1, cv) = self.conv_cv.forward(ps, &v0, &c1, &edges_cv)?;
        let (out, head) = self.head.forward(ps, &v1);
        let scores = out.column(0).to_vec();
        Ok((scores, PolicyCache { var_mlp, cons_mlp, var_z, cons_z, edges_vc, edges_cv, vc, cv, head, embeddings: v1 }))
    }

    pub fn backward(&self, c: &PolicyCache, dscores: &[f64]) -> PolicyGrads {
        let ps = &self.params;
        let mut g = ps.zero_grads();
        let dout = Mat::from_shape_vec((dscores.len(), 1), dscores.to_vec()).expect("column");
        let dv1 = self.head.backward(ps, &c.head, &dout, &mut g);
        let (dv0_a, dc1) = self.conv_cv.backward(ps, &c.cv, &c.edges_cv, &dv1, &mut g);
        let (dc0, dv0_b) = self.conv_vc.backward(ps, &c.vc, &c.edges_vc, &dc1, &mut g);
        let dvz = relu_backward(&c.var_z, &(dv0_a + dv0_b));
        let dcz = relu_backward(&c.cons_z, &dc0);
        let dvar = self.var_embed.backward(ps, &c.var_mlp, &dvz, &mut g);
        let dcons = self.cons_embed.backward(ps, &c.cons_mlp, &dcz, &mut g);
        PolicyGrads { params: g, var_input: self.var_norm.backward(&dvar), cons_input: self.cons_norm.backward(&dcons) }
    }

    pub fn scores(&self, x: &SampleInput) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(x)?.0)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            kind: POLICY_KIND.into(),
            config: serde_json::to_value(self.config).expect("plain config"),
            prenorm: vec![
                ("var".into(), self.var_norm.clone()),
                ("cons".into(), self.cons_norm.clone()),
                ("edge".into(), self.edge_norm.clone()),
                ("conv_v_to_c.msg".into(), scale_norm(self.conv_vc.msg_scale)),
                ("conv_c_to_v.msg".into(), scale_norm(self.conv_cv.msg_scale)),
            ],
            tensors: self.params.to_tensors(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind(POLICY_KIND)?;
        let config: PolicyNetConfig = serde_json::from_value(ck.config.clone())?;
        let mut net = PolicyNet::new(config);
        net.params.load_tensors(&ck.tensors)?;
        let [v, c, e, mvc, mcv] = prenorms(ck, ["var", "cons", "edge", "conv_v_to_c.msg", "conv_c_to_v.msg"])?;
        (net.var_norm, net.cons_norm, net.edge_norm) = (v, c, e);
        net.conv_vc.msg_scale = scale_value(&mvc)?;
        net.conv_cv.msg_scale = scale_value(&mcv)?;
        Ok(net)
    }
}

fn scale_norm(s: f64) -> Prenorm {
    Prenorm { shift: vec![0.0], scale: vec![s] }
}

fn scale_value(p: &Prenorm) -> Result<f64, NnError> {
    match (p.shift.as_slice(), p.scale.as_slice()) {
        ([_], [s]) if s.is_finite() && *s > 0.0 => Ok(*s),
        _ => Err(NnError::Checkpoint("bad message scale".into())),
    }
}

fn prenorms<const N: usize>(ck: &Checkpoint, names: [&str; N]) -> Result<[Prenorm; N], NnError> {
    let mut out = Vec::with_capacity(N);
    for n in names {
        let p = ck
            .prenorm
            .iter()
            .find(|(k, _)| k == n)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| NnError::Checkpoint(format!("missing prenorm {n}")))?;
        out.push(p);
    }
    Ok(out.try_into().expect("length N"))
}

/// Raw network input for a static instance graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub var: Mat,
    pub cons: Mat,
    pub edges: EdgeList,
}

impl GraphInput {
    pub fn new(g: &InstanceGraph) -> Self {
        let var = Mat::from_shape_fn((g.num_vars(), INSTANCE_VAR_FEATURES), |(j, k)| g.var_nodes[j].features[k]);
        let cons = Mat::from_shape_fn((g.num_cons(), 1), |(i, _)| g.cons_nodes[i].bias);
        let edges = EdgeList {
            target: g.edges.iter().map(|e| e.cons).collect(),
            source: g.edges.iter().map(|e| e.var).collect(),
            value: g.edges.iter().map(|e| e.coeff).collect(),
        };
        GraphInput { var, cons, edges }
    }
}

pub const GRAPH_EMBED: usize = 10;

/// Small input embeddings followed by a constraint-side and a variable-side
/// half-convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoder {
    pub var_norm: Prenorm,
    pub cons_norm: Prenorm,
    pub edge_norm: Prenorm,
    var_embed: Linear,
    cons_embed: Linear,
    pub conv_vc: HalfConv,
    pub conv_cv: HalfConv,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    var_in: Mat,
    cons_in: Mat,
    var_z: Mat,
    cons_z: Mat,
    edges_vc: EdgeList,
    edges_cv: EdgeList,
    vc: HalfConvCache,
    cv: HalfConvCache,
}

impl EncoderCache {
    pub fn signature(&self, out: &mut Vec<bool>) {
        out.extend(self.var_z.iter().chain(self.cons_z.iter()).map(|&v| v > 0.0));
        self.vc.signature(out);
        self.cv.signature(out);
    }
}

/// Encoder outputs: `h_var` is `n x hidden`, `h_cons` is `m x hidden`.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub h_var: Mat,
    pub h_cons: Mat,
    pub cache: EncoderCache,
}

impl GraphEncoder {
    pub fn new(ps: &mut ParamSet, name: &str, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let e = GRAPH_EMBED;
        GraphEncoder {
            var_norm: Prenorm::identity(INSTANCE_VAR_FEATURES),
            cons_norm: Prenorm::identity(1),
            edge_norm: Prenorm::identity(1),
            var_embed: Linear::new(ps, &format!("{name}.var_embed"), INSTANCE_VAR_FEATURES, e, RELU_GAIN, rng),
            cons_embed: Linear::new(ps, &format!("{name}.cons_embed"), 1, e, RELU_GAIN, rng),
            conv_vc: HalfConv::new(ps, &format!("{name}.conv_v_to_c"), e, e, hidden, hidden, rng),
            conv_cv: HalfConv::new(ps, &format!("{name}.conv_c_to_v"), e, hidden, hidden, hidden, rng),
            hidden,
        }
    }

    /// Fits the input prenorms, then the message scales under the current
    /// parameters `ps`.
    pub fn fit_prenorm<'a>(&mut self, ps: &ParamSet, graphs: impl IntoIterator<Item = &'a GraphInput>) {
        let inputs: Vec<&GraphInput> = graphs.into_iter().collect();
        self.var_norm = Prenorm::fit(INSTANCE_VAR_FEATURES, inputs.iter().map(|g| &g.var));
        self.cons_norm = Prenorm::fit(1, inputs.iter().map(|g| &g.cons));
        let edges: Vec<Mat> = inputs
            .iter()
            .map(|g| Mat::from_shape_vec((g.edges.len(), 1), g.edges.value.clone()).expect("column"))
            .collect();
        self.edge_norm = Prenorm::fit(1, edges.iter());
        self.conv_vc.msg_scale = 1.0;
        self.conv_cv.msg_scale = 1.0;
        let vc: Vec<Mat> = inputs.iter().filter_map(|g| self.forward(ps, g).ok()).map(|e| e.cache.vc.messages().clone()).collect();
        self.conv_vc.msg_scale = Prenorm::rms(vc.iter());
        let cv: Vec<Mat> = inputs.iter().filter_map(|g| self.forward(ps, g).ok()).map(|e| e.cache.cv.messages().clone()).collect();
        self.conv_cv.msg_scale = Prenorm::rms(cv.iter());
    }

    pub fn prenorms(&self, prefix: &str) -> Vec<(String, Prenorm)> {
        vec![
            (format!("{prefix}.var"), self.var_norm.clone()),
            (format!("{prefix}.cons"), self.cons_norm.clone()),
            (format!("{prefix}.edge"), self.edge_norm.clone()),
            (format!("{prefix}.conv_v_to_c.msg"), scale_norm(self.conv_vc.msg_scale)),
            (format!("{prefix}.conv_c_to_v.msg"), scale_norm(self.conv_cv.msg_scale)),
        ]
    }

    pub fn load_prenorms(&mut self, ck: &Checkpoint, prefix: &str) -> Result<(), NnError> {
        let names = ["var", "cons", "edge", "conv_v_to_c.msg", "conv_c_to_v.msg"].map(|n| format!("{prefix}.{n}"));
        let [v, c, e, mvc, mcv] = prenorms(ck, names.each_ref().map(String::as_str))?;
        (self.var_norm, self.cons_norm, self.edge_norm) = (v, c, e);
        self.conv_vc.msg_scale = scale_value(&mvc)?;
        self.conv_cv.msg_scale = scale_value(&mcv)?;
        Ok(())
    }

    pub fn forward(&self, ps: &ParamSet, x: &GraphInput) -> Result<Encoded, NnError> {
        let var_in = self.var_norm.apply(&x.var);
        let cons_in = self.cons_norm.apply(&x.cons);
        let var_z = self.var_embed.forward(ps, &var_in);
        let cons_z = self.cons_embed.forward(ps, &cons_in);
        let (v0, c0) = (relu(&var_z), relu(&cons_z));
        let (shift, scale) = (self.edge_norm.shift[0], self.edge_norm.scale[0]);
        let edges_vc = EdgeList {
            target: x.edges.target.clone(),
            source: x.edges.source.clone(),
            value: x.edges.value.iter().map(|v| (v - shift) / scale).collect(),
        };
        let edges_cv = edges_vc.reversed();
        let (h_cons, vc) = self.conv_vc.forward(ps, &c0, &v0, &edges_vc)?;
        let (h_var, cv) = self.conv_cv.forward(ps, &v0, &h_cons, &edges_cv)?;
        Ok(Encoded { h_var, h_cons, cache: EncoderCache { var_in, cons_in, var_z, cons_z, edges_vc, edges_cv, vc, cv } })
    }

    pub fn backward(&self, ps: &ParamSet, c: &EncoderCache, dh_var: &Mat, dh_cons: &Mat, g: &mut Grads) {
        let (dv0_a, dc1) = self.conv_cv.backward(ps, &c.cv, &c.edges_cv, dh_var, g);
        let dc1 = dc1 + dh_cons;
        let (dc0, dv0_b) = self.conv_vc.backward(ps, &c.vc, &c.edges_vc, &dc1, g);
        let dvz = relu_backward(&c.var_z, &(dv0_a + dv0_b));
        let dcz = relu_backward(&c.cons_z, &dc0);
        self.var_embed.backward_params(&c.var_in, &dvz, g);
        self.cons_embed.backward_params(&c.cons_in, &dcz, g);
    }
}

/// Graph-level scalar: encoder, mean pooling of both sides, two-layer MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphScorer {
    pub params: ParamSet,
    pub encoder: GraphEncoder,
    mlp: Mlp2,
    pub hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScorerCache {
    enc: EncoderCache,
    n: usize,
    m: usize,
    mlp: Mlp2Cache,
}

impl ScorerCache {
    pub fn signature(&self) -> Vec<bool> {
        let mut out = Vec::new();
        self.enc.signature(&mut out);
        self.mlp.signature(&mut out);
        out
    }
}

fn mean_rows(x: &Mat) -> Array1<f64> {
    if x.nrows() == 0 {
        Array1::zeros(x.ncols())
    } else {
        x.mean_axis(Axis(0)).expect("nonempty")
    }
}

impl GraphScorer {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let encoder = GraphEncoder::new(&mut ps, "encoder", hidden, &mut rng);
        let mlp = Mlp2::new(&mut ps, "pooled", 2 * hidden, hidden, 1, &mut rng);
        GraphScorer { params: ps, encoder, mlp, hidden, seed }
    }

    pub fn forward(&self, x: &GraphInput) -> Result<(f64, ScorerCache), NnError> {
        let enc = self.encoder.forward(&self.params, x)?;
        let h = self.hidden;
        let mut pooled = Mat::zeros((1, 2 * h));
        pooled.slice_mut(ndarray::s![0, ..h]).assign(&mean_rows(&enc.h_var));
        pooled.slice_mut(ndarray::s![0, h..]).assign(&mean_rows(&enc.h_cons));
        let (y, mlp) = self.mlp.forward(&self.params, &pooled);
        Ok((y[(0, 0)], ScorerCache { enc: enc.cache, n: enc.h_var.nrows(), m: enc.h_cons.nrows(), mlp }))
    }

    /// Accumulates `dy * d(output)/d(params)` into `g`.
    pub fn backward(&self, c: &ScorerCache, dy: f64, g: &mut Grads) {
        let h = self.hidden;
        let dpooled = self.mlp.backward(&self.params, &c.mlp, &Mat::from_elem((1, 1), dy), g);
        let spread = |rows: usize, part: ndarray::ArrayView1<f64>| {
            let mut d = Mat::zeros((rows, h));
            if rows > 0 {
                for mut r in d.rows_mut() {
                    r.assign(&(&part / rows as f64));
                }
            }
            d
        };
        let dv = spread(c.n, dpooled.slice(ndarray::s![0, ..h]));
        let dc = spread(c.m, dpooled.slice(ndarray::s![0, h..]));
        self.encoder.backward(&self.params, &c.enc, &dv, &dc, g);
    }

    pub fn checkpoint(&self, kind: &str) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            kind: kind.into(),
            config: serde_json::json!({ "hidden": self.hidden, "seed": self.seed }),
            prenorm: self.encoder.prenorms("encoder"),
            tensors: self.params.to_tensors(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, kind: &str) -> Result<Self, NnError> {
        ck.expect_kind(kind)?;
        let hidden = ck.config["hidden"].as_u64().ok_or_else(|| NnError::Checkpoint("missing hidden".into()))? as usize;
        let seed = ck.config["seed"].as_u64().unwrap_or(0);
        let mut s = GraphScorer::new(hidden, seed);
        s.params.load_tensors(&ck.tensors)?;
        s.encoder.load_prenorms(ck, "encoder")?;
        Ok(s)
    }
}
