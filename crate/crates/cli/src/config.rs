//! Run configuration: one TOML document drives a whole experiment.
//!
//! Unknown keys are rejected. Command-line flags override individual keys
//! (flags, then file, then defaults). The resolved, canonicalized config is
//! written next to every run's outputs, and its digest is embedded in or
//! referenced by every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use contxt_core::binio::short_digest;
use contxt_core::error::Error;
use contxt_core::synth::{CorpusConfig, DomainShiftConfig};
use contxt_core::tensor::SeededRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetBlock,
    pub corpus: CorpusBlock,
    pub mlp: MlpBlock,
    pub transformer: TransformerBlock,
    pub context: ContextBlock,
    #[serde(default)]
    pub steering: SteeringBlock,
    pub sweep: SweepBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub classes: usize,
    pub domains: usize,
    pub feature_dim: usize,
    pub samples_per_cell: usize,
    pub shift_magnitude: f64,
    pub noise_scale: f64,
    #[serde(default)]
    pub domain_scaling: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusBlock {
    pub size: usize,
    pub template_set: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpBlock {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerBlock {
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub context_len: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextBlock {
    /// Classifier tap for domain contexts (0 taps the raw features).
    pub classifier_layer: usize,
    /// Removal contexts use this many validation samples per domain;
    /// 0 means the full split.
    #[serde(default)]
    pub removal_samples: usize,
    pub positive_phrase: String,
    pub negative_phrase: String,
    /// Transformer taps at which phrase contexts get cached.
    pub phrase_layers: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    #[default]
    None,
    /// Apply the explicit `terms` at `layer` to every sample.
    Fixed,
    /// Inject the source context and remove the evaluated domain's own
    /// context at the classifier layer.
    DomainAdaptive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringBlock {
    #[serde(default)]
    pub mode: SteeringMode,
    #[serde(default)]
    pub layer: usize,
    #[serde(default)]
    pub terms: Vec<SteeringTermEntry>,
    #[serde(default)]
    pub inject_strength: f64,
    #[serde(default)]
    pub removal_strength: f64,
    /// Tap and magnitude used by the `generate` command.
    #[serde(default = "default_gen_layer")]
    pub gen_layer: usize,
    #[serde(default = "default_gen_magnitude")]
    pub gen_magnitude: f64,
    #[serde(default)]
    pub gen_remove_own: bool,
}

fn default_gen_layer() -> usize {
    2
}

fn default_gen_magnitude() -> f64 {
    0.75
}

impl Default for SteeringBlock {
    fn default() -> Self {
        Self {
            mode: SteeringMode::None,
            layer: 0,
            terms: Vec::new(),
            inject_strength: 0.0,
            removal_strength: 0.0,
            gen_layer: default_gen_layer(),
            gen_magnitude: default_gen_magnitude(),
            gen_remove_own: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringTermEntry {
    pub label: String,
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub grid: GridBlock,
    pub generation: GenBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub inject: Vec<f64>,
    pub removal: Vec<f64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenBlock {
    pub layers: Vec<usize>,
    pub magnitudes: Vec<f64>,
    pub prompts: usize,
    pub max_tokens: usize,
    #[serde(default)]
    pub remove_own: bool,
}

impl RunConfig {
    /// Loads a config file and applies flag overrides.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.out_dir = out;
        }
        config.canonicalize();
        Ok(config)
    }

    /// Drops semantically inert steering content so equivalent configs
    /// digest identically: zero-strength terms contribute nothing, and a
    /// steering block with no effect is mode `none`.
    fn canonicalize(&mut self) {
        self.steering.terms.retain(|t| t.strength != 0.0);
        let inert = match self.steering.mode {
            SteeringMode::None => true,
            SteeringMode::Fixed => self.steering.terms.is_empty(),
            SteeringMode::DomainAdaptive => {
                self.steering.inject_strength == 0.0 && self.steering.removal_strength == 0.0
            }
        };
        if inert {
            self.steering.mode = SteeringMode::None;
            self.steering.terms.clear();
            self.steering.layer = 0;
            self.steering.inject_strength = 0.0;
            self.steering.removal_strength = 0.0;
        }
    }

    /// Canonical document: the experiment description with the output
    /// location normalized away, so where a run lands never changes its
    /// identity.
    fn canonical_document(&self) -> String {
        let mut doc = self.clone();
        doc.out_dir = PathBuf::from(".");
        toml::to_string_pretty(&doc).expect("config serializes")
    }

    /// Digest of the canonical config text.
    pub fn digest(&self) -> String {
        short_digest(self.canonical_document().as_bytes())
    }

    /// Root generator; every module draws from a named substream of it.
    pub fn root_rng(&self) -> SeededRng {
        SeededRng::new(self.seed)
    }

    pub fn dataset_config(&self) -> DomainShiftConfig {
        DomainShiftConfig {
            classes: self.dataset.classes,
            domains: self.dataset.domains,
            feature_dim: self.dataset.feature_dim,
            samples_per_cell: self.dataset.samples_per_cell,
            shift_magnitude: self.dataset.shift_magnitude,
            noise_scale: self.dataset.noise_scale,
            domain_scaling: self.dataset.domain_scaling,
            seed: self.root_rng().substream("dataset").seed(),
        }
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            size: self.corpus.size,
            template_set: self.corpus.template_set.clone(),
            seed: self.root_rng().substream("corpus").seed(),
        }
    }

    // Artifact layout under out_dir. Fixed names keep runs byte-comparable.

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn split_path(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("domain_shift.{split}.csv"))
    }

    pub fn corpus_path(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("corpus.{split}.txt"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn mlp_ckpt(&self) -> PathBuf {
        self.models_dir().join("mlp.ckpt")
    }

    pub fn transformer_ckpt(&self) -> PathBuf {
        self.models_dir().join("transformer.ckpt")
    }

    pub fn contexts_dir(&self) -> PathBuf {
        self.out_dir.join("contexts")
    }

    pub fn classifier_cache_path(&self) -> PathBuf {
        self.contexts_dir().join("classifier.ctx")
    }

    pub fn phrase_cache_path(&self) -> PathBuf {
        self.contexts_dir().join("phrases.ctx")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    pub fn sweeps_dir(&self) -> PathBuf {
        self.out_dir.join("sweeps")
    }

    pub fn generations_dir(&self) -> PathBuf {
        self.out_dir.join("generations")
    }

    /// Writes the resolved config next to the outputs.
    pub fn write_resolved(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(
            self.out_dir.join("resolved_config.toml"),
            self.canonical_document(),
        )?;
        Ok(())
    }
}
