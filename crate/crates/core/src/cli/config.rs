use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::net::ModelConfig;
use crate::probe::DEFAULT_RIDGE;
use crate::scene::{Attribute, AnnotatorConfig, AttributeSchema, SceneConfig};
use crate::seeds::derive;

/// Where the alternative worlds of the meaning tables come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    /// Fresh worlds drawn from the schema.
    Generated,
    /// Worlds of scenes in the training split.
    Dataset,
}

/// Network and optimizer settings. The feature width comes from the schema
/// and the initialization seed from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub decoder_hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden_dim: m.hidden_dim,
            decoder_hidden: m.decoder_hidden,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            train_steps: m.train_steps,
            beta1: m.beta1,
            beta2: m.beta2,
            epsilon: m.epsilon,
        }
    }
}

/// Everything a run depends on. Loaded from TOML; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Scenes in the split used to fit operators.
    pub train_scenes: usize,
    /// Scenes in the held-out split used for every evaluation.
    pub test_scenes: usize,
    pub sample_size: usize,
    pub sample_source: SampleSource,
    pub ridge: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_dataset: Option<PathBuf>,
    pub schema: Vec<Attribute>,
    pub scenes: SceneConfig,
    pub annotators: AnnotatorConfig,
    pub model: ModelSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 2017,
            out_dir: PathBuf::from("out"),
            train_scenes: 3000,
            test_scenes: 273,
            sample_size: crate::meaning::DEFAULT_SAMPLE_SIZE,
            sample_source: SampleSource::Generated,
            ridge: DEFAULT_RIDGE,
            train_dataset: None,
            test_dataset: None,
            schema: AttributeSchema::default_schema().attributes().to_vec(),
            scenes: SceneConfig::default(),
            annotators: AnnotatorConfig::default(),
            model: ModelSettings::default(),
        }
    }
}

/// Named sub-seeds of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
    pub data: u64,
    pub train: u64,
    pub sample: u64,
    pub theory: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            data: derive(master, "data"),
            train: derive(master, "train"),
            sample: derive(master, "sample"),
            theory: derive(master, "theory"),
        }
    }

    pub fn entries(&self) -> [(&'static str, u64); 5] {
        [
            ("seed_master", self.master),
            ("seed_data", self.data),
            ("seed_train", self.train),
            ("seed_sample", self.sample),
            ("seed_theory", self.theory),
        ]
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let schema = self.schema()?;
        self.scenes.bounds.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.scenes.sampler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model_config(&schema).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.sample_size == 0 {
            return bad("sample_size must be at least 1".into());
        }
        if self.test_scenes == 0 {
            return bad("test_scenes must be at least 1".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be non-negative, got {}", self.ridge));
        }
        if self.sample_source == SampleSource::Dataset && self.sample_size > self.train_scenes {
            return bad(format!(
                "sample_size {} exceeds the {} training scenes it would be drawn from",
                self.sample_size, self.train_scenes
            ));
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<AttributeSchema, CliError> {
        AttributeSchema::new(self.schema.clone()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.master_seed)
    }

    pub fn model_config(&self, schema: &AttributeSchema) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            hidden_dim: m.hidden_dim,
            feature_dim: schema.feature_dim(),
            decoder_hidden: m.decoder_hidden,
            seed: self.seeds().train,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            train_steps: m.train_steps,
            beta1: m.beta1,
            beta2: m.beta2,
            epsilon: m.epsilon,
        }
    }

    /// SHA-256 of the settings that affect results. Output location and
    /// dataset paths are left out, so the same experiment written to two
    /// directories carries the same digest.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.train_dataset = None;
        canonical.test_dataset = None;
        let hash = Sha256::digest(canonical.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("master_seed = 9\n[model]\ntrain_steps = 5\n").unwrap();
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.model.train_steps, 5);
        assert_eq!(c.model.hidden_dim, 64);
        assert_eq!(c.test_scenes, 273);
        assert_eq!(c.sample_size, 30);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.test_dataset = Some("data/t.jsonl".into());
        c.scenes.bounds.max = 7;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "sample_size = 0",
            "ridge = -1.0",
            "unknown_key = 1",
            "[scenes.bounds]\nmin = 0\nmax = 3",
            "[[schema]]\nname = \"color\"\nvalues = []",
            "[model]\nlearning_rate = 0.0",
            "sample_source = \"dataset\"\ntrain_scenes = 3",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn digest_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.train_dataset = Some("x.jsonl".into());
        assert_eq!(a.digest(), b.digest());
        b.master_seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn sub_seeds_differ() {
        let s = Seeds::from_master(1);
        let all = [s.data, s.train, s.sample, s.theory];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
