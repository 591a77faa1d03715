//! Logical forms over attribute atoms: syntax, evaluation, equivalence and
//! sampling.

mod parse;

pub use parse::{parse, ParseError};

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{AttributeSchema, Mask, Object, World};

#[derive(Debug, Error)]
pub enum LogicError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, LogicError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LogicalForm {
    Atom { attribute: String, value: String },
    Not(Box<LogicalForm>),
    And(Box<LogicalForm>, Box<LogicalForm>),
    Or(Box<LogicalForm>, Box<LogicalForm>),
}

/// Binary connectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    And,
    Or,
}

impl BinaryOp {
    pub fn apply(self, left: LogicalForm, right: LogicalForm) -> LogicalForm {
        match self {
            BinaryOp::And => LogicalForm::and(left, right),
            BinaryOp::Or => LogicalForm::or(left, right),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }
}

impl LogicalForm {
    pub fn atom(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        LogicalForm::Atom {
            attribute: attribute.into(),
            value: value.into(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: LogicalForm) -> Self {
        LogicalForm::Not(Box::new(e))
    }

    pub fn and(l: LogicalForm, r: LogicalForm) -> Self {
        LogicalForm::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: LogicalForm, r: LogicalForm) -> Self {
        LogicalForm::Or(Box::new(l), Box::new(r))
    }

    /// Node count.
    pub fn size(&self) -> usize {
        match self {
            LogicalForm::Atom { .. } => 1,
            LogicalForm::Not(e) => 1 + e.size(),
            LogicalForm::And(l, r) | LogicalForm::Or(l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Checks every atom against `schema`.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        Resolved::new(self, schema).map(|_| ())
    }
}

/// Canonical text: `(attr value)`, `(not e)`, `(and e e)`, `(or e e)`.
impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalForm::Atom { attribute, value } => write!(f, "({attribute} {value})"),
            LogicalForm::Not(e) => write!(f, "(not {e})"),
            LogicalForm::And(l, r) => write!(f, "(and {l} {r})"),
            LogicalForm::Or(l, r) => write!(f, "(or {l} {r})"),
        }
    }
}

/// Canonical text of a form.
pub fn print(e: &LogicalForm) -> String {
    e.to_string()
}

/// A form with atoms resolved to schema indices.
enum Resolved {
    Atom(usize, usize),
    Not(Box<Resolved>),
    And(Box<Resolved>, Box<Resolved>),
    Or(Box<Resolved>, Box<Resolved>),
}

impl Resolved {
    fn new(e: &LogicalForm, schema: &AttributeSchema) -> Result<Self> {
        Ok(match e {
            LogicalForm::Atom { attribute, value } => {
                let a = schema
                    .attribute_index(attribute)
                    .ok_or_else(|| LogicError::Schema(format!("unknown attribute {attribute:?}")))?;
                let v = schema.value_index(a, value).ok_or_else(|| {
                    LogicError::Schema(format!("unknown value {value:?} for attribute {attribute:?}"))
                })?;
                Resolved::Atom(a, v)
            }
            LogicalForm::Not(c) => Resolved::Not(Box::new(Self::new(c, schema)?)),
            LogicalForm::And(l, r) => {
                Resolved::And(Box::new(Self::new(l, schema)?), Box::new(Self::new(r, schema)?))
            }
            LogicalForm::Or(l, r) => {
                Resolved::Or(Box::new(Self::new(l, schema)?), Box::new(Self::new(r, schema)?))
            }
        })
    }

    fn holds(&self, obj: &Object) -> bool {
        match self {
            Resolved::Atom(a, v) => obj.values[*a] == *v,
            Resolved::Not(c) => !c.holds(obj),
            Resolved::And(l, r) => l.holds(obj) && r.holds(obj),
            Resolved::Or(l, r) => l.holds(obj) || r.holds(obj),
        }
    }
}

/// Denotation of `e` on `w`: one entry per object.
pub fn evaluate(e: &LogicalForm, w: &World, schema: &AttributeSchema) -> Result<Mask> {
    let resolved = Resolved::new(e, schema)?;
    w.objects
        .iter()
        .map(|o| {
            schema
                .check_object(o)
                .map_err(|err| LogicError::Schema(err.to_string()))?;
            Ok(resolved.holds(o))
        })
        .collect()
}

/// Truth value of a form at every point of the object universe.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectPredicate {
    pub truth: Vec<bool>,
}

pub fn predicate(e: &LogicalForm, schema: &AttributeSchema) -> Result<ObjectPredicate> {
    let resolved = Resolved::new(e, schema)?;
    Ok(ObjectPredicate {
        truth: schema.universe().map(|o| resolved.holds(&o)).collect(),
    })
}

/// Exact semantic equivalence by enumerating the object universe.
pub fn equivalent(a: &LogicalForm, b: &LogicalForm, schema: &AttributeSchema) -> Result<bool> {
    Ok(predicate(a, schema)? == predicate(b, schema)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub max_size: usize,
    pub negation_prob: f64,
    pub binary_prob: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_size: 5,
            negation_prob: 0.25,
            binary_prob: 0.3,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_size < 1 {
            return Err(LogicError::Argument("max_size must be at least 1".into()));
        }
        for p in [self.negation_prob, self.binary_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LogicError::Argument(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn sample_form(seed: u64, schema: &AttributeSchema, config: &SamplerConfig) -> Result<LogicalForm> {
    config.validate()?;
    Ok(sample_form_with(&mut ChaCha8Rng::seed_from_u64(seed), schema, config))
}

/// Top-down sampler. One uniform draw per node chooses `not` (below
/// `negation_prob`), a binary connective (below `negation_prob +
/// binary_prob`) or an atom; a node type that does not fit the remaining
/// size budget falls through to the next. `not` is never directly nested.
pub(crate) fn sample_form_with<R: Rng>(
    rng: &mut R,
    schema: &AttributeSchema,
    config: &SamplerConfig,
) -> LogicalForm {
    sample_node(rng, schema, config, config.max_size.max(1), false)
}

fn sample_node<R: Rng>(
    rng: &mut R,
    schema: &AttributeSchema,
    config: &SamplerConfig,
    budget: usize,
    under_not: bool,
) -> LogicalForm {
    let r: f64 = rng.random();
    if r < config.negation_prob && budget >= 2 && !under_not {
        return LogicalForm::not(sample_node(rng, schema, config, budget - 1, true));
    }
    if r < config.negation_prob + config.binary_prob && budget >= 3 {
        let left = sample_node(rng, schema, config, budget - 2, false);
        let right = sample_node(rng, schema, config, budget - 1 - left.size(), false);
        let op = if rng.random_bool(0.5) { BinaryOp::And } else { BinaryOp::Or };
        return op.apply(left, right);
    }
    let a = rng.random_range(0..schema.attributes().len());
    let attr = &schema.attributes()[a];
    let v = rng.random_range(0..attr.values.len());
    LogicalForm::atom(attr.name.clone(), attr.values[v].clone())
}

/// The representative of the most common equivalence class. Ties, both
/// between classes and within the winning classes, go to the
/// lexicographically least canonical text.
pub fn most_frequent_form(forms: &[LogicalForm], schema: &AttributeSchema) -> Result<LogicalForm> {
    if forms.is_empty() {
        return Err(LogicError::Argument("no forms to choose from".into()));
    }
    let mut classes: HashMap<ObjectPredicate, usize> = HashMap::new();
    let preds = forms
        .iter()
        .map(|f| predicate(f, schema))
        .collect::<Result<Vec<_>>>()?;
    for p in &preds {
        *classes.entry(p.clone()).or_default() += 1;
    }
    let best = classes.values().copied().max().unwrap_or(0);
    let chosen = forms
        .iter()
        .zip(&preds)
        .filter(|(_, p)| classes[*p] == best)
        .map(|(f, _)| (f.to_string(), f))
        .min_by(|a, b| a.0.cmp(&b.0))
        .expect("at least one form");
    Ok(chosen.1.clone())
}
