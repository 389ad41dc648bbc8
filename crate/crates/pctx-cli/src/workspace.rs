//! Run-directory plumbing: artifact paths, stage prerequisites, and loading
//! of previously written artifacts.

use std::path::{Path, PathBuf};

use thiserror::Error;

use pctx::config::PipelineConfig;
use pctx::context::ContextEncoder;
use pctx::embed::{load_raw_embeddings, ContextTable, FeatureTable};
use pctx::ingest::{load_interactions, make_split, InteractionLog, Split};
use pctx::quantize::WhiteningTransform;
use pctx::registry::SidRegistry;

pub const INTERACTIONS: &str = "interactions.tsv";
pub const FEATURES: &str = "features.emb";
pub const CONTEXTS: &str = "contexts.emb";
pub const INTENTS: &str = "intents.tsv";
pub const REGISTRY_DUMP: &str = "registry.tsv";
pub const REGISTRY_STATE: &str = "registry_state.tsv";
pub const WHITENING: &str = "whitening.txt";
pub const CODEBOOKS: &str = "codebooks.bin";
pub const CENTROIDS: &str = "centroids.tsv";
pub const CORPUS: &str = "corpus.tokens";
pub const MODEL: &str = "model.tsv";
pub const METRICS: &str = "metrics.csv";
pub const PREDICTIONS: &str = "predictions.tsv";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("missing artifact '{file}': run the `{stage}` stage first")]
    MissingArtifact { file: String, stage: String },

    #[error(transparent)]
    Pctx(#[from] pctx::Error),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::MissingArtifact { .. } => 2,
            AppError::Pctx(_) => 1,
        }
    }
}

pub struct Workspace {
    pub dir: PathBuf,
    pub cfg: PipelineConfig,
}

impl Workspace {
    pub fn new(dir: PathBuf, cfg: PipelineConfig) -> Result<Self, AppError> {
        std::fs::create_dir_all(&dir).map_err(|e| pctx::Error::io(dir.display().to_string(), e))?;
        Ok(Self { dir, cfg })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// The artifact path if present, else exit-code-2 material naming the
    /// stage that produces it.
    pub fn require(&self, name: &str, stage: &str) -> Result<PathBuf, AppError> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(AppError::MissingArtifact {
                file: name.to_string(),
                stage: stage.to_string(),
            })
        }
    }

    pub fn load_log(&self) -> Result<InteractionLog, AppError> {
        let path = self.require(INTERACTIONS, "ingest (or synth)")?;
        Ok(load_interactions(path, &self.cfg)?)
    }

    pub fn load_features(&self, log: &InteractionLog) -> Result<FeatureTable, AppError> {
        let path = self.require(FEATURES, "ingest (or synth)")?;
        let raw = load_raw_embeddings(path)?;
        Ok(FeatureTable::from_raw(&raw, &log.vocab)?)
    }

    /// Externally injected context table, when one was dropped into the run
    /// directory.
    pub fn load_contexts(
        &self,
        log: &InteractionLog,
        split: &Split,
    ) -> Result<Option<ContextTable>, AppError> {
        let path = self.path(CONTEXTS);
        if !path.exists() {
            return Ok(None);
        }
        let raw = load_raw_embeddings(path)?;
        Ok(Some(ContextTable::from_raw(&raw, log, split)?))
    }

    pub fn load_registry(&self) -> Result<SidRegistry, AppError> {
        let path = self.require(REGISTRY_STATE, "build-tokenizer")?;
        let file = open(&path)?;
        Ok(SidRegistry::read_state(file, &path.display().to_string())?)
    }

    pub fn load_whitening(&self) -> Result<WhiteningTransform, AppError> {
        let path = self.require(WHITENING, "build-tokenizer")?;
        let file = open(&path)?;
        Ok(WhiteningTransform::read_text(
            file,
            &path.display().to_string(),
        )?)
    }

    /// The context encoder the run was built with: an injected table when
    /// present, else the builtin decayed mean.
    pub fn load_encoder(
        &self,
        log: &InteractionLog,
        split: &Split,
    ) -> Result<ContextEncoder, AppError> {
        Ok(match self.load_contexts(log, split)? {
            Some(table) => ContextEncoder::External(table),
            None => ContextEncoder::builtin(self.cfg.context_decay),
        })
    }

    pub fn load_corpus_inputs(
        &self,
        registry: &SidRegistry,
    ) -> Result<Vec<pctx::tokenize::TokenSequence>, AppError> {
        let path = self.require(CORPUS, "tokenize")?;
        let file = open(&path)?;
        Ok(pctx::tokenize::read_token_corpus(
            file,
            &path.display().to_string(),
            registry,
        )?)
    }

    pub fn split_of(&self, log: &InteractionLog) -> Split {
        make_split(log)
    }
}

pub fn open(path: &Path) -> Result<std::fs::File, AppError> {
    std::fs::File::open(path)
        .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))
}

pub fn create(path: &Path) -> Result<std::fs::File, AppError> {
    std::fs::File::create(path)
        .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))
}
