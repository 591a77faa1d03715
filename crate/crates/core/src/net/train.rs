use super::{loss_and_grad, ModelConfig, ModelParams, NetError, Result};
use crate::scene::{generate_scene, AttributeSchema, Scene, SceneConfig, SceneError};
use crate::seeds::mix;

/// Supplies training minibatches.
pub trait SceneSource {
    fn schema(&self) -> &AttributeSchema;
    fn batch(&mut self, step: usize, size: usize) -> std::result::Result<Vec<Scene>, SceneError>;
}

/// An endless stream of freshly generated scenes. Scene `i` of step `s` is
/// seeded from `(seed, s * size + i)`, so any step can be regenerated alone.
#[derive(Debug, Clone)]
pub struct GeneratedScenes {
    pub schema: AttributeSchema,
    pub config: SceneConfig,
    pub seed: u64,
}

impl SceneSource for GeneratedScenes {
    fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    fn batch(&mut self, step: usize, size: usize) -> std::result::Result<Vec<Scene>, SceneError> {
        (0..size)
            .map(|i| {
                let index = (step * size + i) as u64;
                generate_scene(mix(self.seed, index), &self.schema, &self.config).map(|(s, _)| s)
            })
            .collect()
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, c: &ModelConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            }
        }
    }
}

/// Trains from the seeded initialization with Adam and returns the final
/// parameters along with the minibatch loss of every step.
pub fn train_with_history<S: SceneSource>(config: &ModelConfig, source: &mut S) -> Result<(ModelParams, Vec<f64>)> {
    config.validate()?;
    if source.schema().feature_dim() != config.feature_dim {
        return Err(NetError::Config(format!(
            "feature_dim {} does not match schema ({})",
            config.feature_dim,
            source.schema().feature_dim()
        )));
    }
    let mut params = ModelParams::init(config)?;
    let mut adam = Adam::new(&params);
    let mut history = Vec::with_capacity(config.train_steps);
    for step in 0..config.train_steps {
        let batch = source.batch(step, config.batch_size)?;
        let (loss, grad) = loss_and_grad(&params, &batch, source.schema())?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(NetError::NonFinite { step });
        }
        adam.step(&mut params, &grad, config);
        history.push(loss);
    }
    Ok((params, history))
}

pub fn train<S: SceneSource>(config: &ModelConfig, source: &mut S) -> Result<ModelParams> {
    Ok(train_with_history(config, source)?.0)
}

/// Fraction of objects whose thresholded prediction matches the target.
pub fn object_accuracy(params: &ModelParams, scenes: &[Scene], schema: &AttributeSchema) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in scenes {
        let f = super::encode(params, s, schema)?;
        let probs = super::decode_world(params, &f, &s.world, schema)?;
        correct += probs.iter().zip(&s.target).filter(|(p, &t)| (**p > 0.5) == t).count();
        total += probs.len();
    }
    if total == 0 {
        return Err(NetError::Dimension("no objects to score".into()));
    }
    Ok(correct as f64 / total as f64)
}
