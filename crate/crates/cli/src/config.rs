//! The pipeline configuration file (TOML). Relative paths are resolved
//! against the directory holding the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use spel_core::aggregate::{AggregationConfig, CandidatePolicy, ProbabilityMap, DEFAULT_TOP_K};
use spel_core::provider::{FileFeatures, DEFAULT_MOCK_PROBABILITY};
use spel_core::tokenize::ReferenceSplitter;
use spel_core::train::TrainConfig;
use spel_core::{
    io, CandidateStore, ChunkConfig, EntityVocabulary, FileScores, HeadScores, HeadWeights,
    Lexicon, Linker, MockScores, RedirectTable, ScoreProvider, StoreKind, TokenizationMode,
    Tokenizer,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Scores synthesized from gold annotations.
    Mock {
        #[serde(default = "default_q")]
        q: f64,
        #[serde(default)]
        noise: f64,
        /// Corpus whose gold is used for documents that carry none.
        #[serde(default)]
        reference: Option<PathBuf>,
    },
    /// Precomputed logits, `<scores_dir>/<doc id>.splm`.
    File { scores_dir: PathBuf },
    /// Precomputed features composed with trained head weights.
    Head {
        features_dir: PathBuf,
        weights: PathBuf,
    },
}

fn default_q() -> f64 {
    DEFAULT_MOCK_PROBABILITY
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Mock {
            q: DEFAULT_MOCK_PROBABILITY,
            noise: 0.0,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub mode: TokenizationMode,
    /// Longest subword piece, in characters.
    pub max_piece: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            mode: TokenizationMode::default(),
            max_piece: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationSection {
    pub k: usize,
    pub probability: ProbabilityMap,
    pub candidate_policy: CandidatePolicy,
    /// Stop-list replacing the built-in function words.
    pub function_words: Option<PathBuf>,
}

impl Default for AggregationSection {
    fn default() -> Self {
        AggregationSection {
            k: DEFAULT_TOP_K,
            probability: ProbabilityMap::default(),
            candidate_policy: CandidatePolicy::default(),
            function_words: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSection {
    pub path: PathBuf,
    pub kind: StoreKind,
    #[serde(default = "yes")]
    pub case_sensitive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub kb_prefix: String,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            bind: "127.0.0.1:8080".to_string(),
            kb_prefix: spel_gerbil::DEFAULT_KB_PREFIX.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub vocabulary: Option<PathBuf>,
    /// Seeds every random choice (mock noise, training).
    pub seed: u64,
    pub provider: ProviderConfig,
    pub tokenizer: TokenizerConfig,
    pub chunking: ChunkConfig,
    pub aggregation: AggregationSection,
    pub candidates: Option<CandidateSection>,
    pub redirects: Option<PathBuf>,
    pub training: TrainConfig,
    pub service: ServiceSection,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve_opt(base, &mut config.vocabulary);
        resolve_opt(base, &mut config.redirects);
        resolve_opt(base, &mut config.aggregation.function_words);
        if let Some(c) = &mut config.candidates {
            resolve(base, &mut c.path);
        }
        match &mut config.provider {
            ProviderConfig::Mock { reference, .. } => resolve_opt(base, reference),
            ProviderConfig::File { scores_dir } => resolve(base, scores_dir),
            ProviderConfig::Head {
                features_dir,
                weights,
            } => {
                resolve(base, features_dir);
                resolve(base, weights);
            }
        }
        Ok(config)
    }

    pub fn vocabulary(&self) -> Result<EntityVocabulary, CliError> {
        let path = self.vocabulary.as_ref().ok_or_else(|| {
            CliError::input("no vocabulary given (set `vocabulary` or pass --vocabulary)")
        })?;
        Ok(EntityVocabulary::load(path)?)
    }

    pub fn lexicon(&self) -> Result<Lexicon, CliError> {
        Ok(match &self.aggregation.function_words {
            Some(p) => Lexicon::load_function_words(p)?,
            None => Lexicon::default(),
        })
    }

    pub fn tokenizer(&self, lexicon: &Lexicon) -> Tokenizer {
        let splitter = ReferenceSplitter::new(self.tokenizer.max_piece, lexicon.clone());
        Tokenizer::new(Arc::new(splitter), lexicon.clone())
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }

    fn provider(&self, vocab: &Arc<EntityVocabulary>) -> Result<Arc<dyn ScoreProvider>, CliError> {
        Ok(match &self.provider {
            ProviderConfig::Mock {
                q,
                noise,
                reference,
            } => {
                let mut mock = MockScores::new(vocab.clone(), *q)?.with_noise(*noise, self.seed);
                if let Some(path) = reference {
                    mock = mock.with_reference(&io::read_corpus(path)?);
                }
                Arc::new(mock)
            }
            ProviderConfig::File { scores_dir } => {
                if !scores_dir.is_dir() {
                    return Err(CliError::input(format!(
                        "{}: not a directory",
                        scores_dir.display()
                    )));
                }
                Arc::new(FileScores::new(scores_dir.clone(), vocab.len()))
            }
            ProviderConfig::Head {
                features_dir,
                weights,
            } => {
                let weights = HeadWeights::load(weights)?;
                let features = FileFeatures::new(features_dir.clone(), weights.dim());
                Arc::new(HeadScores::new(features, weights)?)
            }
        })
    }

    /// Builds the full linker, loading every referenced file.
    pub fn linker(&self) -> Result<Linker, CliError> {
        self.chunking.validate()?;
        let vocab = Arc::new(self.vocabulary()?);
        let provider = self.provider(&vocab)?;
        let lexicon = self.lexicon()?;
        let mut linker = Linker::new(vocab.clone(), provider)?;
        linker.tokenizer = self.tokenizer(&lexicon);
        linker.mode = self.tokenizer.mode;
        linker.chunking = self.chunking;
        linker.aggregation = AggregationConfig {
            k: self.aggregation.k,
            probability: self.aggregation.probability,
            candidate_policy: self.aggregation.candidate_policy,
            lexicon,
        };
        if let Some(c) = &self.candidates {
            linker.candidates = Some(Arc::new(CandidateStore::load(
                &c.path,
                c.kind,
                c.case_sensitive,
            )?));
        } else if self.aggregation.candidate_policy != CandidatePolicy::None {
            return Err(CliError::input(
                "a candidate policy is set but no candidate store is configured",
            ));
        }
        if let Some(path) = &self.redirects {
            linker.redirects = Some(Arc::new(RedirectTable::load(path, &vocab)?.0));
        }
        Ok(linker)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_documented_constants() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!((c.chunking.window, c.chunking.overlap), (254, 20));
        assert_eq!(c.aggregation.k, 10);
        assert_eq!(c.training.quota, 5000);
        assert_eq!(c.training.lr_head, 0.01);
        assert_eq!(c.provider, ProviderConfig::default());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spel.toml");
        std::fs::write(
            &path,
            "vocabulary = \"v.txt\"\n[provider]\nkind = \"file\"\nscores_dir = \"/abs/logits\"\n[candidates]\npath = \"c.tsv\"\nkind = \"context_aware\"\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.vocabulary.unwrap(), dir.path().join("v.txt"));
        assert_eq!(c.candidates.unwrap().path, dir.path().join("c.tsv"));
        assert_eq!(
            c.provider,
            ProviderConfig::File {
                scores_dir: "/abs/logits".into()
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("windw = 3").is_err());
        assert!(toml::from_str::<PipelineConfig>("[chunking]\nwindow = 10\noverlp = 2").is_err());
    }
}
