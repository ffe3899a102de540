//! Run configuration: one TOML file plus flag overrides.
//!
//! Every setting is optional in both layers ([`Overrides`]); resolution
//! takes the flag value, then the file value, then the built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{Method, DEFAULT_PROFILING_COUNT};
use crate::matching::{EmbeddingProvider, ExternalEmbeddings, HashedBagOfTokens};
use crate::model::{GenerationParams, ModelConfig, ModelSource};
use crate::pipeline::{HopContext, PipelineConfig};
use crate::profiling::{ModelDims, Strategy, StrategyGrid};
use crate::prompts::PromptTemplates;
use crate::steering::DEFAULT_DELTA;

/// Name of the head-set file written by `profile` into the output directory.
pub const PROFILED_HEAD_SET: &str = "head_set.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Greedy,
    Group,
    #[default]
    CoarseToFine,
}

/// One configuration layer. Field names double as TOML keys and (kebab-cased)
/// flag names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Dataset file (one JSON record per line).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Seed for randomly initialized weights.
    #[arg(long)]
    pub model_seed: Option<u64>,
    /// Checkpoint manifest; takes precedence over the seed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub num_heads: Option<usize>,
    #[arg(long)]
    pub model_dim: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub max_sequence_length: Option<usize>,
    #[arg(long)]
    pub eos_token: Option<u32>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Head-set file: a JSON array of [layer, head] pairs.
    #[arg(long)]
    pub head_set: Option<PathBuf>,
    /// Free-text provenance of the head set, shown in the comparison caption.
    #[arg(long)]
    pub provenance: Option<String>,
    /// Steering strength; the bias on non-highlighted keys is -delta.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Answer generation budget.
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// Tokens added to the longest context sentence for identification.
    #[arg(long)]
    pub identification_margin: Option<usize>,
    #[arg(long, value_enum)]
    pub hop_context: Option<HopContextArg>,
    /// Dimension of the hashed bag-of-tokens embedding.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// JSONL file of {"text", "vector"} records; replaces the hashed embedding.
    #[arg(long)]
    pub embedding_file: Option<PathBuf>,
    /// Directory with replacement template files.
    #[arg(long)]
    pub templates_dir: Option<PathBuf>,
    #[arg(long)]
    pub profiling_count: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Use only the first N profiling instances during search.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write per-step attention snapshots of the answering step.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub capture_snapshots: Option<bool>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    /// Coarse-to-fine layer counts (comma separated).
    #[arg(long = "l", value_delimiter = ',')]
    #[serde(alias = "l")]
    pub layers: Option<Vec<usize>>,
    /// Heads kept per selected layer (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub top_i: Option<Vec<usize>>,
    /// Heads kept from the selected layers' pool (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub top_j: Option<Vec<usize>>,
    /// Greedy head counts (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Group counts for group search (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub k_groups: Option<Vec<usize>>,
}

/// `HopContext` as a flag value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HopContextArg {
    Full,
    PerHop,
}

impl From<HopContextArg> for HopContext {
    fn from(v: HopContextArg) -> Self {
        match v {
            HopContextArg::Full => HopContext::Full,
            HopContextArg::PerHop => HopContext::PerHop,
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse()
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set here win over `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            dataset, model_seed, checkpoint, num_layers, num_heads, model_dim, vocab_size,
            max_sequence_length, eos_token, method, head_set, provenance, delta, max_new_tokens,
            identification_margin, hop_context, embedding_dim, embedding_file, templates_dir,
            profiling_count, split_seed, subsample, workers, output_dir, capture_snapshots,
            strategy, layers, top_i, top_j, k, group_size, k_groups
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            dataset: self.dataset,
            model_seed: self.model_seed.unwrap_or(d.model_seed),
            checkpoint: self.checkpoint,
            num_layers: self.num_layers.unwrap_or(d.num_layers),
            num_heads: self.num_heads.unwrap_or(d.num_heads),
            model_dim: self.model_dim.unwrap_or(d.model_dim),
            vocab_size: self.vocab_size.unwrap_or(d.vocab_size),
            max_sequence_length: self.max_sequence_length.unwrap_or(d.max_sequence_length),
            eos_token: self.eos_token.or(d.eos_token),
            method: self.method.unwrap_or(d.method),
            head_set: self.head_set,
            provenance: self.provenance,
            delta: self.delta.unwrap_or(d.delta),
            max_new_tokens: self.max_new_tokens.unwrap_or(d.max_new_tokens),
            identification_margin: self.identification_margin.unwrap_or(d.identification_margin),
            hop_context: self.hop_context.map(Into::into).unwrap_or(d.hop_context),
            embedding_dim: self.embedding_dim.unwrap_or(d.embedding_dim),
            embedding_file: self.embedding_file,
            templates_dir: self.templates_dir,
            profiling_count: self.profiling_count.unwrap_or(d.profiling_count),
            split_seed: self.split_seed.unwrap_or(d.split_seed),
            subsample: self.subsample,
            workers: self.workers.unwrap_or(d.workers),
            output_dir: self.output_dir.unwrap_or(d.output_dir),
            capture_snapshots: self.capture_snapshots.unwrap_or(d.capture_snapshots),
            strategy: self.strategy.unwrap_or(d.strategy),
            layers: self.layers.unwrap_or(d.layers),
            top_i: self.top_i.unwrap_or(d.top_i),
            top_j: self.top_j.unwrap_or(d.top_j),
            k: self.k.unwrap_or(d.k),
            group_size: self.group_size.unwrap_or(d.group_size),
            k_groups: self.k_groups.unwrap_or(d.k_groups),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub model_seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
    pub eos_token: Option<u32>,
    pub method: Method,
    pub head_set: Option<PathBuf>,
    pub provenance: Option<String>,
    pub delta: f64,
    pub max_new_tokens: usize,
    pub identification_margin: usize,
    pub hop_context: HopContext,
    pub embedding_dim: usize,
    pub embedding_file: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub profiling_count: usize,
    pub split_seed: u64,
    pub subsample: Option<usize>,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub capture_snapshots: bool,
    pub strategy: StrategyKind,
    pub layers: Vec<usize>,
    pub top_i: Vec<usize>,
    pub top_j: Vec<usize>,
    pub k: Vec<usize>,
    pub group_size: usize,
    pub k_groups: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let StrategyGrid::CoarseToFine { layers, top_i, top_j } = StrategyGrid::coarse_to_fine_default() else {
            unreachable!()
        };
        Self {
            dataset: None,
            model_seed: 7,
            checkpoint: None,
            num_layers: 4,
            num_heads: 4,
            model_dim: 32,
            vocab_size: 256,
            max_sequence_length: 4096,
            eos_token: None,
            method: Method::Direct,
            head_set: None,
            provenance: None,
            delta: DEFAULT_DELTA,
            max_new_tokens: 16,
            identification_margin: 8,
            hop_context: HopContext::Full,
            embedding_dim: HashedBagOfTokens::DEFAULT_DIM,
            embedding_file: None,
            templates_dir: None,
            profiling_count: DEFAULT_PROFILING_COUNT,
            split_seed: 0,
            subsample: None,
            workers: 1,
            output_dir: PathBuf::from("out"),
            capture_snapshots: false,
            strategy: StrategyKind::CoarseToFine,
            layers,
            top_i,
            top_j,
            k: vec![4, 8, 16],
            group_size: 2,
            k_groups: vec![1, 2, 4],
        }
    }
}

/// Keys left out of the configuration hash: they change where or how fast
/// results are produced, not what they are. Paths are replaced by the
/// contents they point at.
const UNHASHED: &[&str] = &[
    "dataset",
    "checkpoint",
    "head_set",
    "provenance",
    "embedding_file",
    "templates_dir",
    "workers",
    "output_dir",
    "capture_snapshots",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be finite and > 0, got {}", self.delta)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::Config("subsample must be >= 1".into()));
        }
        self.model_config()?;
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig::new(
            self.num_layers,
            self.num_heads,
            self.model_dim,
            self.vocab_size,
            self.max_sequence_length,
        )?;
        let cfg = match self.eos_token {
            Some(eos) => cfg.with_eos(eos)?,
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_source(&self) -> ModelSource {
        match &self.checkpoint {
            Some(p) => ModelSource::Checkpoint(p.clone()),
            None => ModelSource::Seeded(self.model_seed),
        }
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given (--dataset or `dataset` in the config file)".into()))
    }

    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match &self.embedding_file {
            Some(path) => Box::new(ExternalEmbeddings::load(path)?),
            None => Box::new(HashedBagOfTokens::new(self.embedding_dim)?),
        })
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let templates = match &self.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::default(),
        };
        let mut answer = GenerationParams::greedy(self.max_new_tokens);
        if self.capture_snapshots {
            answer = answer.with_capture();
        }
        Ok(PipelineConfig {
            templates,
            answer,
            identification_margin: self.identification_margin,
            identification_max_new_tokens: None,
            hop_context: self.hop_context,
        })
    }

    /// The search grid selected by `strategy`.
    pub fn grid(&self) -> StrategyGrid {
        match self.strategy {
            StrategyKind::Greedy => StrategyGrid::Greedy { k: self.k.clone() },
            StrategyKind::Group => StrategyGrid::Group {
                group_size: self.group_size,
                k_groups: self.k_groups.clone(),
            },
            StrategyKind::CoarseToFine => StrategyGrid::CoarseToFine {
                layers: self.layers.clone(),
                top_i: self.top_i.clone(),
                top_j: self.top_j.clone(),
            },
        }
    }

    /// Grid points valid for the configured model, or an error naming the
    /// grid when none are.
    pub fn grid_points(&self) -> Result<Vec<Strategy>> {
        let dims = ModelDims::new(self.num_layers, self.num_heads);
        let grid = self.grid();
        let all = grid.points();
        let valid = grid.valid_points(dims);
        if valid.is_empty() {
            let reason = match all.first() {
                Some(s) => s.validate(dims).err().map(|e| e.to_string()).unwrap_or_default(),
                None => "grid is empty".into(),
            };
            return Err(Error::Config(format!("no valid grid point for {}x{} model: {reason}", self.num_layers, self.num_heads)));
        }
        Ok(valid)
    }

    /// Hex SHA-256 over the canonical resolved settings and the contents of
    /// every input file they reference.
    pub fn config_hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        let map = value.as_object_mut().expect("config serializes to an object");
        for key in UNHASHED {
            map.remove(*key);
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&value)?);
        let mut add_file = |tag: &str, path: &Option<PathBuf>| -> Result<()> {
            h.update(tag.as_bytes());
            match path {
                Some(p) => {
                    let bytes = fs::read(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    h.update((bytes.len() as u64).to_le_bytes());
                    h.update(bytes);
                }
                None => h.update([0u8]),
            }
            Ok(())
        };
        add_file("dataset", &self.dataset)?;
        add_file("head_set", &self.head_set)?;
        add_file("embedding_file", &self.embedding_file)?;
        add_file("checkpoint", &self.checkpoint)?;
        if let Some(dir) = &self.checkpoint {
            let blob = dir.with_extension("bin");
            if blob.exists() {
                add_file("checkpoint_blob", &Some(blob))?;
            }
        }
        h.update(format!("{:?}", self.pipeline_config()?.templates).as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}
