//! Attribute schemas, objects, worlds and game scenes.
//!
//! A [`World`] is an ordered list of attribute-labelled objects; a [`Scene`]
//! pairs a world with the boolean target mask the speaker has to convey.

mod dataset;

pub use dataset::{ingest_dataset, read_dataset, serialize_dataset};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{self, LogicError, LogicalForm, SamplerConfig};

/// Largest world the game allows.
pub const MAX_WORLD_SIZE: usize = 20;

/// One boolean decision per object of a world.
pub type Mask = Vec<bool>;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid world size bounds [{min}, {max}] (need 1 <= min <= max <= {MAX_WORLD_SIZE})")]
    Bounds { min: usize, max: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no form with a non-empty denotation after {attempts} attempts")]
    Generation { attempts: usize },
    #[error("line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SceneError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered attributes, each with an ordered value vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

const RESERVED: [&str; 3] = ["not", "and", "or"];

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(SceneError::InvalidSchema("no attributes".into()));
        }
        for (i, attr) in attributes.iter().enumerate() {
            if !is_identifier(&attr.name) || RESERVED.contains(&attr.name.as_str()) {
                return Err(SceneError::InvalidSchema(format!(
                    "bad attribute name {:?}",
                    attr.name
                )));
            }
            if attributes[..i].iter().any(|a| a.name == attr.name) {
                return Err(SceneError::InvalidSchema(format!(
                    "duplicate attribute {:?}",
                    attr.name
                )));
            }
            if attr.values.len() < 2 {
                return Err(SceneError::InvalidSchema(format!(
                    "attribute {:?} needs at least 2 values",
                    attr.name
                )));
            }
            for (j, v) in attr.values.iter().enumerate() {
                if !is_identifier(v) {
                    return Err(SceneError::InvalidSchema(format!("bad value name {v:?}")));
                }
                if attr.values[..j].contains(v) {
                    return Err(SceneError::InvalidSchema(format!(
                        "duplicate value {v:?} in {:?}",
                        attr.name
                    )));
                }
            }
        }
        Ok(Self { attributes })
    }

    /// Convenience constructor from `(name, [values])` literals.
    pub fn from_lists(spec: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            spec.iter()
                .map(|(name, values)| Attribute {
                    name: name.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
        )
    }

    /// `color` (4 values) by `shape` (5 values).
    pub fn default_schema() -> Self {
        Self::from_lists(&[
            ("color", &["green", "tan", "red", "blue"]),
            ("shape", &["triangle", "arch", "cube", "sphere", "ring"]),
        ])
        .expect("default schema is valid")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn value_index(&self, attribute: usize, value: &str) -> Option<usize> {
        self.attributes
            .get(attribute)?
            .values
            .iter()
            .position(|v| v == value)
    }

    /// Length of an object's one-hot feature vector.
    pub fn feature_dim(&self) -> usize {
        self.attributes.iter().map(|a| a.values.len()).sum()
    }

    /// Number of distinct objects the schema can describe.
    pub fn universe_size(&self) -> usize {
        self.attributes.iter().map(|a| a.values.len()).product()
    }

    /// The `index`-th object of the universe in mixed-radix order, first
    /// attribute most significant.
    pub fn universe_object(&self, mut index: usize) -> Object {
        let mut values = vec![0; self.attributes.len()];
        for (slot, attr) in values.iter_mut().zip(&self.attributes).rev() {
            *slot = index % attr.values.len();
            index /= attr.values.len();
        }
        Object { values }
    }

    pub fn universe(&self) -> impl Iterator<Item = Object> + '_ {
        (0..self.universe_size()).map(|i| self.universe_object(i))
    }

    /// Checks that `obj` assigns one in-range value per attribute.
    pub fn check_object(&self, obj: &Object) -> Result<()> {
        if obj.values.len() != self.attributes.len() {
            return Err(SceneError::Schema(format!(
                "object has {} values, schema has {} attributes",
                obj.values.len(),
                self.attributes.len()
            )));
        }
        for (v, attr) in obj.values.iter().zip(&self.attributes) {
            if *v >= attr.values.len() {
                return Err(SceneError::Schema(format!(
                    "value index {v} out of range for {:?}",
                    attr.name
                )));
            }
        }
        Ok(())
    }

    pub fn describe(&self, obj: &Object) -> String {
        obj.values
            .iter()
            .zip(&self.attributes)
            .map(|(v, a)| a.values.get(*v).map(String::as_str).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSchema {
    type Error = SceneError;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self> {
        Self::new(attributes)
    }
}

impl From<AttributeSchema> for Vec<Attribute> {
    fn from(schema: AttributeSchema) -> Self {
        schema.attributes
    }
}

/// One value index per schema attribute, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Object {
    pub values: Vec<usize>,
}

impl Object {
    pub fn new(values: Vec<usize>) -> Self {
        Self { values }
    }

    /// Builds an object from value names given in schema order.
    pub fn from_names(schema: &AttributeSchema, names: &[&str]) -> Result<Self> {
        if names.len() != schema.attributes().len() {
            return Err(SceneError::Schema(format!(
                "expected {} values, got {}",
                schema.attributes().len(),
                names.len()
            )));
        }
        let values = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                schema.value_index(i, n).ok_or_else(|| {
                    SceneError::Schema(format!(
                        "unknown value {n:?} for attribute {:?}",
                        schema.attributes()[i].name
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub objects: Vec<Object>,
}

impl World {
    pub fn new(objects: Vec<Object>) -> Self {
        Self { objects }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    pub world: World,
    pub target: Mask,
}

impl Scene {
    pub fn new(world: World, target: Mask) -> Result<Self> {
        if target.len() != world.len() {
            return Err(SceneError::Schema(format!(
                "target mask has length {}, world has {} objects",
                target.len(),
                world.len()
            )));
        }
        if !target.iter().any(|&t| t) {
            return Err(SceneError::Schema("target set is empty".into()));
        }
        Ok(Self { world, target })
    }

    pub fn target_objects(&self) -> impl Iterator<Item = &Object> {
        self.world
            .objects
            .iter()
            .zip(&self.target)
            .filter_map(|(o, &t)| t.then_some(o))
    }
}

/// A scene plus the referring expressions produced for it, with each
/// expression's denotation on the scene's own world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedScene {
    pub scene: Scene,
    pub forms: Vec<LogicalForm>,
    pub denotations: Vec<Mask>,
}

impl AnnotatedScene {
    pub fn new(scene: Scene, forms: Vec<LogicalForm>, schema: &AttributeSchema) -> Result<Self> {
        let denotations = forms
            .iter()
            .map(|f| logic::evaluate(f, &scene.world, schema))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            scene,
            forms,
            denotations,
        })
    }

    /// Whether annotation `i` picks out exactly the target.
    pub fn is_precise(&self, i: usize) -> bool {
        self.denotations[i] == self.scene.target
    }
}

/// Inclusive world-size range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeBounds {
    pub min: usize,
    pub max: usize,
}

impl SizeBounds {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min < 1 || self.min > self.max || self.max > MAX_WORLD_SIZE {
            return Err(SceneError::Bounds {
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }
}

impl Default for SizeBounds {
    fn default() -> Self {
        Self {
            min: 1,
            max: MAX_WORLD_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub bounds: SizeBounds,
    pub sampler: SamplerConfig,
    /// Extra form draws allowed when a draw denotes nothing on the world.
    pub retry_budget: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bounds: SizeBounds::default(),
            sampler: SamplerConfig::default(),
            retry_budget: 100,
        }
    }
}

pub fn generate_world(
    seed: u64,
    schema: &AttributeSchema,
    size_min: usize,
    size_max: usize,
) -> Result<World> {
    let bounds = SizeBounds::new(size_min, size_max)?;
    Ok(generate_world_with(
        &mut ChaCha8Rng::seed_from_u64(seed),
        schema,
        bounds,
    ))
}

pub(crate) fn generate_world_with<R: Rng>(
    rng: &mut R,
    schema: &AttributeSchema,
    bounds: SizeBounds,
) -> World {
    let n = rng.random_range(bounds.min..=bounds.max);
    let objects = (0..n)
        .map(|_| Object {
            values: schema
                .attributes()
                .iter()
                .map(|a| rng.random_range(0..a.values.len()))
                .collect(),
        })
        .collect();
    World { objects }
}

/// Draws a world, then draws forms until one picks out a non-empty subset;
/// that subset becomes the target and the form is returned with it.
pub fn generate_scene(
    seed: u64,
    schema: &AttributeSchema,
    config: &SceneConfig,
) -> Result<(Scene, LogicalForm)> {
    config.bounds.validate()?;
    config.sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = generate_world_with(&mut rng, schema, config.bounds);
    let attempts = config.retry_budget + 1;
    for _ in 0..attempts {
        let form = logic::sample_form_with(&mut rng, schema, &config.sampler);
        let target = logic::evaluate(&form, &world, schema)?;
        if target.iter().any(|&t| t) {
            return Ok((Scene { world, target }, form));
        }
    }
    Err(SceneError::Generation { attempts })
}

/// Synthetic stand-in for a pool of human annotators.
///
/// Every annotator describes the target with a form drawn from the same
/// prior that generated the scene, conditioned on picking out exactly the
/// target in this world. The generating form is always the first
/// annotation. Draws that never match within `attempts` are skipped, so a
/// scene can end up with fewer than `annotators + 1` forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub annotators: usize,
    pub attempts: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            annotators: 0,
            attempts: 200,
        }
    }
}

pub fn annotate_scene(
    seed: u64,
    schema: &AttributeSchema,
    scene: Scene,
    generating_form: LogicalForm,
    sampler: &SamplerConfig,
    annotators: &AnnotatorConfig,
) -> Result<AnnotatedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forms = vec![generating_form];
    for _ in 0..annotators.annotators {
        for _ in 0..annotators.attempts {
            let form = logic::sample_form_with(&mut rng, schema, sampler);
            if logic::evaluate(&form, &scene.world, schema)? == scene.target {
                forms.push(form);
                break;
            }
        }
    }
    AnnotatedScene::new(scene, forms, schema)
}

/// Concatenated one-hot blocks, one per attribute.
pub fn object_features(obj: &Object, schema: &AttributeSchema) -> Result<Vec<f64>> {
    schema.check_object(obj)?;
    let mut out = vec![0.0; schema.feature_dim()];
    let mut offset = 0;
    for (v, attr) in obj.values.iter().zip(schema.attributes()) {
        out[offset + v] = 1.0;
        offset += attr.values.len();
    }
    Ok(out)
}
