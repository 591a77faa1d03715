//! The speaker/listener model: a GRU encoder that reads a scene and emits a
//! message vector, and a per-object MLP decoder that labels objects given
//! that message.

mod checkpoint;
pub(crate) mod ops;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use train::{object_accuracy, train, train_with_history, GeneratedScenes, SceneSource};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{object_features, AttributeSchema, Scene, SceneError, World};
use ops::{axpy, bce_with_logit, dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite loss at training step {step}")]
    NonFinite { step: usize },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub decoder_hidden: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            feature_dim: AttributeSchema::default_schema().feature_dim(),
            decoder_hidden: 64,
            seed: 0,
            learning_rate: 1e-3,
            batch_size: 100,
            train_steps: 10_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl ModelConfig {
    pub fn for_schema(schema: &AttributeSchema) -> Self {
        Self {
            feature_dim: schema.feature_dim(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden_dim", self.hidden_dim),
            ("feature_dim", self.feature_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        let reals = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(NetError::Config("Adam betas must be below 1".into()));
        }
        Ok(())
    }

    fn gru_input(&self) -> usize {
        self.feature_dim + 1
    }

    fn decoder_input(&self) -> usize {
        self.hidden_dim + self.feature_dim
    }
}

/// Row-major matrix (a vector is a `n x 1` tensor).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }
}

pub const TENSOR_NAMES: [&str; 13] = [
    "encoder.w_z",
    "encoder.u_z",
    "encoder.b_z",
    "encoder.w_r",
    "encoder.u_r",
    "encoder.b_r",
    "encoder.w_h",
    "encoder.u_h",
    "encoder.b_h",
    "decoder.w1",
    "decoder.b1",
    "decoder.w2",
    "decoder.b2",
];

/// All trainable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub decoder_hidden: usize,
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
    /// `decoder_hidden x (hidden_dim + feature_dim)`, message columns first.
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_dim;
        let x = config.gru_input();
        let d = config.decoder_hidden;
        Self {
            hidden_dim: h,
            feature_dim: config.feature_dim,
            decoder_hidden: d,
            w_z: Tensor::zeros(h, x),
            u_z: Tensor::zeros(h, h),
            b_z: Tensor::zeros(h, 1),
            w_r: Tensor::zeros(h, x),
            u_r: Tensor::zeros(h, h),
            b_r: Tensor::zeros(h, 1),
            w_h: Tensor::zeros(h, x),
            u_h: Tensor::zeros(h, h),
            b_h: Tensor::zeros(h, 1),
            w1: Tensor::zeros(d, config.decoder_input()),
            b1: Tensor::zeros(d, 1),
            w2: Tensor::zeros(1, d),
            b2: Tensor::zeros(1, 1),
        }
    }

    /// Every weight uniform in `[-0.1, 0.1]`, drawn in [`TENSOR_NAMES`] order.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (_, t) in params.tensors_mut() {
            for v in t.data.iter_mut() {
                *v = rng.random_range(-0.1..=0.1);
            }
        }
        Ok(params)
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 13] {
        [
            (TENSOR_NAMES[0], &self.w_z),
            (TENSOR_NAMES[1], &self.u_z),
            (TENSOR_NAMES[2], &self.b_z),
            (TENSOR_NAMES[3], &self.w_r),
            (TENSOR_NAMES[4], &self.u_r),
            (TENSOR_NAMES[5], &self.b_r),
            (TENSOR_NAMES[6], &self.w_h),
            (TENSOR_NAMES[7], &self.u_h),
            (TENSOR_NAMES[8], &self.b_h),
            (TENSOR_NAMES[9], &self.w1),
            (TENSOR_NAMES[10], &self.b1),
            (TENSOR_NAMES[11], &self.w2),
            (TENSOR_NAMES[12], &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 13] {
        [
            (TENSOR_NAMES[0], &mut self.w_z),
            (TENSOR_NAMES[1], &mut self.u_z),
            (TENSOR_NAMES[2], &mut self.b_z),
            (TENSOR_NAMES[3], &mut self.w_r),
            (TENSOR_NAMES[4], &mut self.u_r),
            (TENSOR_NAMES[5], &mut self.b_r),
            (TENSOR_NAMES[6], &mut self.w_h),
            (TENSOR_NAMES[7], &mut self.u_h),
            (TENSOR_NAMES[8], &mut self.b_h),
            (TENSOR_NAMES[9], &mut self.w1),
            (TENSOR_NAMES[10], &mut self.b1),
            (TENSOR_NAMES[11], &mut self.w2),
            (TENSOR_NAMES[12], &mut self.b2),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(&mut a.data, 1.0, &b.data);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    fn check_schema(&self, schema: &AttributeSchema) -> Result<()> {
        if schema.feature_dim() != self.feature_dim {
            return Err(NetError::Dimension(format!(
                "schema has feature dimension {}, model expects {}",
                schema.feature_dim(),
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// The encoder's final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageVector {
    pub values: Vec<f64>,
}

impl MessageVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-object features plus target bits, laid out for the encoder.
struct SceneInput {
    /// `len x (feature_dim + 1)`: features then the target bit.
    steps: Vec<f64>,
    labels: Vec<f64>,
    len: usize,
}

impl SceneInput {
    fn new(scene: &Scene, schema: &AttributeSchema) -> Result<Self> {
        if scene.target.len() != scene.world.len() {
            return Err(NetError::Dimension("target mask length differs from world size".into()));
        }
        let fd = schema.feature_dim();
        let mut steps = Vec::with_capacity(scene.world.len() * (fd + 1));
        for (obj, &t) in scene.world.objects.iter().zip(&scene.target) {
            steps.extend(object_features(obj, schema)?);
            steps.push(if t { 1.0 } else { 0.0 });
        }
        Ok(Self {
            steps,
            labels: scene.target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect(),
            len: scene.world.len(),
        })
    }

    fn step(&self, t: usize, width: usize) -> &[f64] {
        &self.steps[t * width..(t + 1) * width]
    }

    fn features(&self, t: usize, width: usize) -> &[f64] {
        &self.steps[t * width..(t + 1) * width - 1]
    }
}

/// Activations cached by the encoder forward pass.
struct EncoderTrace {
    /// `h_0 .. h_T`, each `hidden_dim` long.
    hs: Vec<f64>,
    zs: Vec<f64>,
    rs: Vec<f64>,
    cands: Vec<f64>,
}

fn encoder_forward(p: &ModelParams, input: &SceneInput) -> EncoderTrace {
    let h = p.hidden_dim;
    let xw = p.feature_dim + 1;
    let n = input.len;
    let mut hs = vec![0.0; (n + 1) * h];
    let mut zs = vec![0.0; n * h];
    let mut rs = vec![0.0; n * h];
    let mut cands = vec![0.0; n * h];
    let mut rh = vec![0.0; h];
    for t in 0..n {
        let x = input.step(t, xw);
        let (prev_all, next_all) = hs.split_at_mut((t + 1) * h);
        let prev = &prev_all[t * h..];
        let next = &mut next_all[..h];
        let z = &mut zs[t * h..(t + 1) * h];
        let r = &mut rs[t * h..(t + 1) * h];
        let c = &mut cands[t * h..(t + 1) * h];

        z.copy_from_slice(&p.b_z.data);
        matvec_acc(z, &p.w_z.data, xw, x);
        matvec_acc(z, &p.u_z.data, h, prev);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        r.copy_from_slice(&p.b_r.data);
        matvec_acc(r, &p.w_r.data, xw, x);
        matvec_acc(r, &p.u_r.data, h, prev);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        for i in 0..h {
            rh[i] = r[i] * prev[i];
        }
        c.copy_from_slice(&p.b_h.data);
        matvec_acc(c, &p.w_h.data, xw, x);
        matvec_acc(c, &p.u_h.data, h, &rh);
        c.iter_mut().for_each(|v| *v = v.tanh());

        for i in 0..h {
            next[i] = (1.0 - z[i]) * prev[i] + z[i] * c[i];
        }
    }
    EncoderTrace { hs, zs, rs, cands }
}

/// Accumulates encoder gradients given `dh` for the final state.
fn encoder_backward(p: &ModelParams, input: &SceneInput, tr: &EncoderTrace, mut dh: Vec<f64>, g: &mut ModelParams) {
    let h = p.hidden_dim;
    let xw = p.feature_dim + 1;
    let mut da_z = vec![0.0; h];
    let mut da_r = vec![0.0; h];
    let mut da_h = vec![0.0; h];
    let mut rh = vec![0.0; h];
    let mut d_rh = vec![0.0; h];
    let mut dprev = vec![0.0; h];
    for t in (0..input.len).rev() {
        let x = input.step(t, xw);
        let prev = &tr.hs[t * h..(t + 1) * h];
        let z = &tr.zs[t * h..(t + 1) * h];
        let r = &tr.rs[t * h..(t + 1) * h];
        let c = &tr.cands[t * h..(t + 1) * h];

        for i in 0..h {
            let dz = dh[i] * (c[i] - prev[i]);
            let dc = dh[i] * z[i];
            dprev[i] = dh[i] * (1.0 - z[i]);
            da_z[i] = dz * z[i] * (1.0 - z[i]);
            da_h[i] = dc * (1.0 - c[i] * c[i]);
            rh[i] = r[i] * prev[i];
        }

        outer_acc(&mut g.w_h.data, &da_h, x);
        outer_acc(&mut g.u_h.data, &da_h, &rh);
        axpy(&mut g.b_h.data, 1.0, &da_h);
        d_rh.fill(0.0);
        matvec_t_acc(&mut d_rh, &p.u_h.data, h, &da_h);
        for i in 0..h {
            dprev[i] += d_rh[i] * r[i];
            let dr = d_rh[i] * prev[i];
            da_r[i] = dr * r[i] * (1.0 - r[i]);
        }

        outer_acc(&mut g.w_z.data, &da_z, x);
        outer_acc(&mut g.u_z.data, &da_z, prev);
        axpy(&mut g.b_z.data, 1.0, &da_z);
        matvec_t_acc(&mut dprev, &p.u_z.data, h, &da_z);

        outer_acc(&mut g.w_r.data, &da_r, x);
        outer_acc(&mut g.u_r.data, &da_r, prev);
        axpy(&mut g.b_r.data, 1.0, &da_r);
        matvec_t_acc(&mut dprev, &p.u_r.data, h, &da_r);

        std::mem::swap(&mut dh, &mut dprev);
    }
}

/// `W1[:, message] f + b1`, shared by every object decoded against `f`.
fn decoder_base(p: &ModelParams, f: &[f64]) -> Vec<f64> {
    let width = p.hidden_dim + p.feature_dim;
    p.w1.data
        .chunks_exact(width)
        .zip(&p.b1.data)
        .map(|(row, b)| b + dot(&row[..p.hidden_dim], f))
        .collect()
}

/// Hidden activations (written into `hidden`) and output logit.
fn decoder_logit(p: &ModelParams, base: &[f64], feats: &[f64], hidden: &mut [f64]) -> f64 {
    let width = p.hidden_dim + p.feature_dim;
    for ((hv, row), b) in hidden.iter_mut().zip(p.w1.data.chunks_exact(width)).zip(base) {
        *hv = (b + dot(&row[p.hidden_dim..], feats)).max(0.0);
    }
    dot(&p.w2.data, hidden) + p.b2.data[0]
}

fn check_message(p: &ModelParams, f: &MessageVector) -> Result<()> {
    if f.dim() != p.hidden_dim {
        return Err(NetError::Dimension(format!(
            "message has dimension {}, model expects {}",
            f.dim(),
            p.hidden_dim
        )));
    }
    Ok(())
}

/// Runs the GRU over `[features ; target bit]` for each object in order and
/// returns the final hidden state.
pub fn encode(params: &ModelParams, scene: &Scene, schema: &AttributeSchema) -> Result<MessageVector> {
    params.check_schema(schema)?;
    let input = SceneInput::new(scene, schema)?;
    let trace = encoder_forward(params, &input);
    let h = params.hidden_dim;
    Ok(MessageVector::new(trace.hs[input.len * h..].to_vec()))
}

/// Probability that the object with features `obj_feats` belongs to the
/// set described by `f`.
pub fn decode(params: &ModelParams, f: &MessageVector, obj_feats: &[f64]) -> Result<f64> {
    check_message(params, f)?;
    if obj_feats.len() != params.feature_dim {
        return Err(NetError::Dimension(format!(
            "object features have length {}, model expects {}",
            obj_feats.len(),
            params.feature_dim
        )));
    }
    let base = decoder_base(params, &f.values);
    let mut hidden = vec![0.0; params.decoder_hidden];
    Ok(sigmoid(decoder_logit(params, &base, obj_feats, &mut hidden)))
}

/// [`decode`] applied to every object of `w`.
pub fn decode_world(params: &ModelParams, f: &MessageVector, w: &World, schema: &AttributeSchema) -> Result<Vec<f64>> {
    check_message(params, f)?;
    params.check_schema(schema)?;
    let base = decoder_base(params, &f.values);
    let mut hidden = vec![0.0; params.decoder_hidden];
    w.objects
        .iter()
        .map(|o| {
            let feats = object_features(o, schema)?;
            Ok(sigmoid(decoder_logit(params, &base, &feats, &mut hidden)))
        })
        .collect()
}

/// Summed per-object cross-entropy of one scene; when `grad` is given,
/// accumulates `scale * d(sum)/d(params)` into it.
fn scene_loss(p: &ModelParams, input: &SceneInput, grad: Option<(&mut ModelParams, f64)>) -> f64 {
    let h = p.hidden_dim;
    let xw = p.feature_dim + 1;
    let dh_size = p.decoder_hidden;
    let trace = encoder_forward(p, input);
    let f = &trace.hs[input.len * h..];
    let base = decoder_base(p, f);
    let mut hidden = vec![0.0; dh_size];
    let mut total = 0.0;

    let Some((g, scale)) = grad else {
        for t in 0..input.len {
            let logit = decoder_logit(p, &base, input.features(t, xw), &mut hidden);
            total += bce_with_logit(logit, input.labels[t]);
        }
        return total;
    };

    let width = h + p.feature_dim;
    let mut dbase = vec![0.0; dh_size];
    let mut dhid = vec![0.0; dh_size];
    for t in 0..input.len {
        let feats = input.features(t, xw);
        let logit = decoder_logit(p, &base, feats, &mut hidden);
        let y = input.labels[t];
        total += bce_with_logit(logit, y);
        let dlogit = scale * (sigmoid(logit) - y);
        axpy(&mut g.w2.data, dlogit, &hidden);
        g.b2.data[0] += dlogit;
        for i in 0..dh_size {
            dhid[i] = if hidden[i] > 0.0 { dlogit * p.w2.data[i] } else { 0.0 };
        }
        for (i, row) in g.w1.data.chunks_exact_mut(width).enumerate() {
            if dhid[i] != 0.0 {
                axpy(&mut row[h..], dhid[i], feats);
            }
        }
        axpy(&mut dbase, 1.0, &dhid);
    }
    axpy(&mut g.b1.data, 1.0, &dbase);
    let mut df = vec![0.0; h];
    for (i, row) in g.w1.data.chunks_exact_mut(width).enumerate() {
        if dbase[i] != 0.0 {
            axpy(&mut row[..h], dbase[i], f);
        }
    }
    for (i, row) in p.w1.data.chunks_exact(width).enumerate() {
        if dbase[i] != 0.0 {
            axpy(&mut df, dbase[i], &row[..h]);
        }
    }
    encoder_backward(p, input, &trace, df, g);
    total
}

fn prepare(params: &ModelParams, batch: &[Scene], schema: &AttributeSchema) -> Result<(Vec<SceneInput>, usize)> {
    params.check_schema(schema)?;
    if batch.is_empty() {
        return Err(NetError::Dimension("empty batch".into()));
    }
    let inputs = batch
        .iter()
        .map(|s| SceneInput::new(s, schema))
        .collect::<Result<Vec<_>>>()?;
    let objects = inputs.iter().map(|i| i.len).sum();
    Ok((inputs, objects))
}

/// Scenes per parallel work unit. Partial results are reduced in chunk order
/// so the sum does not depend on the thread count.
const CHUNK: usize = 8;

/// Mean binary cross-entropy over every object in the batch.
pub fn loss(params: &ModelParams, batch: &[Scene], schema: &AttributeSchema) -> Result<f64> {
    let (inputs, objects) = prepare(params, batch, schema)?;
    let partial: Vec<f64> = inputs
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().map(|i| scene_loss(params, i, None)).sum())
        .collect();
    Ok(partial.iter().sum::<f64>() / objects as f64)
}

/// Mean loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(params: &ModelParams, batch: &[Scene], schema: &AttributeSchema) -> Result<(f64, ModelParams)> {
    let (inputs, objects) = prepare(params, batch, schema)?;
    let scale = 1.0 / objects as f64;
    let partial: Vec<(f64, ModelParams)> = inputs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let l = chunk.iter().map(|i| scene_loss(params, i, Some((&mut g, scale)))).sum();
            (l, g)
        })
        .collect();
    let mut iter = partial.into_iter();
    let (mut total, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        total += l;
        grad.add_assign(&g);
    }
    Ok((total * scale, grad))
}

pub fn grad(params: &ModelParams, batch: &[Scene], schema: &AttributeSchema) -> Result<ModelParams> {
    Ok(loss_and_grad(params, batch, schema)?.1)
}
