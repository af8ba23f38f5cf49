//! Experiment configuration: one TOML table per pipeline stage. Every default
//! lives here, so a config file only needs the values it changes.
//!
//! ```toml
//! [corpus]
//! kind = "word_reversal"
//! monolingual = 2000
//!
//! [distill]
//! mode = "sd"
//! shots = 1
//!
//! [distill.train]
//! epochs = 8
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ToyKind, ToyLanguageSpec};
use crate::distill::{DistillPlan, Mode, StudentTier};
use crate::error::{Error, Result};
use crate::eval::ChrfParams;
use crate::fsio::read_to_string;
use crate::model::{ModelConfig, Tier};
use crate::rng;
use crate::tokenizer::TokenMode;
use crate::train::TrainConfig;

/// The toy task and how its sentences are divided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub kind: ToyKind,
    pub alphabet: String,
    pub max_sentence_len: usize,
    pub max_word_len: usize,
    pub seed: u64,
    /// Untranslated source sentences the teacher translates each cycle.
    pub monolingual: usize,
    /// Held-out pairs for scoring.
    pub test: usize,
    /// Human pairs: the base model's training data and the few-shot pool.
    pub human_seed: usize,
    /// Held-out pairs for deciding when the base model stops training.
    pub dev: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            kind: ToyKind::WordReversal,
            alphabet: "abcdef".into(),
            max_sentence_len: 6,
            max_word_len: 2,
            seed: 7,
            monolingual: 2000,
            test: 200,
            human_seed: 200,
            dev: 200,
        }
    }
}

impl CorpusSection {
    pub fn spec(&self) -> ToyLanguageSpec {
        let mut spec = ToyLanguageSpec::new(self.kind, &self.alphabet, self.max_sentence_len, self.seed);
        spec.max_word_len = self.max_word_len;
        spec
    }

    pub fn total(&self) -> usize {
        self.monolingual + self.test + self.human_seed + self.dev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub mode: TokenMode,
    /// Cap including special tokens.
    pub max_vocab: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection {
            mode: TokenMode::Word,
            max_vocab: 60,
        }
    }
}

/// Architectures follow the tier presets; only these knobs are exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub max_decode_len: usize,
    /// Initialization seed of the base (large) model.
    pub seed: u64,
    /// Initialization seed of smaller students and the small baseline.
    pub small_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            max_decode_len: 32,
            seed: 1,
            small_seed: 2,
        }
    }
}

impl ModelSection {
    pub fn config(&self, tier: Tier, vocab_size: usize) -> ModelConfig {
        let seed = match tier {
            Tier::Large => self.seed,
            Tier::Small => self.small_seed,
        };
        ModelConfig {
            max_decode_len: self.max_decode_len,
            ..ModelConfig::preset(tier, vocab_size, seed)
        }
    }
}

/// A `[train]`-style table. The two tables share fields but not defaults,
/// and a partially written table falls back to its own defaults.
macro_rules! train_section {
    ($(#[$doc:meta])* $name:ident, $defaults:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            pub learning_rate: f64,
            pub epochs: usize,
            pub batch_size: usize,
            pub grad_clip: f64,
            pub smoothing_eps: f64,
            pub dropout: f64,
            pub seed: u64,
        }

        impl Default for $name {
            fn default() -> Self {
                let c: TrainConfig = $defaults;
                $name {
                    learning_rate: c.learning_rate,
                    epochs: c.epochs,
                    batch_size: c.batch_size,
                    grad_clip: c.grad_clip,
                    smoothing_eps: c.smoothing_eps,
                    dropout: c.dropout,
                    seed: c.seed,
                }
            }
        }

        impl $name {
            pub fn config(&self) -> TrainConfig {
                TrainConfig {
                    learning_rate: self.learning_rate,
                    epochs: self.epochs,
                    batch_size: self.batch_size,
                    grad_clip: self.grad_clip,
                    smoothing_eps: self.smoothing_eps,
                    dropout: self.dropout,
                    seed: self.seed,
                }
            }
        }
    };
}

train_section!(
    /// Base-model training on the human seed.
    TrainSection,
    TrainConfig {
        learning_rate: 0.5,
        epochs: 200,
        dropout: 0.5,
        seed: 3,
        ..TrainConfig::default()
    }
);

train_section!(
    /// Student fine-tuning; the seed is re-derived per student and cycle.
    StudentTrainSection,
    TrainConfig {
        learning_rate: 0.2,
        epochs: 8,
        dropout: 0.5,
        ..TrainConfig::default()
    }
);

train_section!(
    /// The smaller student and its human-seed baseline share this schedule.
    SmallerTrainSection,
    TrainConfig {
        learning_rate: 0.5,
        epochs: 20,
        dropout: 0.3,
        ..TrainConfig::default()
    }
);

/// How weak the base model is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    /// Stop base training after the first epoch whose dev chrF reaches this
    /// value; `[train] epochs` is then only a ceiling.
    pub stop_at_dev_chrf: f64,
    /// Off trains for the full epoch count.
    pub early_stop: bool,
}

impl Default for BaseSection {
    fn default() -> Self {
        BaseSection {
            stop_at_dev_chrf: 70.0,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub mode: Mode,
    pub iterations: u32,
    pub k: usize,
    pub shots: usize,
    pub students: BTreeSet<StudentTier>,
    pub accumulate: bool,
    /// Empty means score at `shots` only.
    pub eval_shots: Vec<usize>,
    pub seed: u64,
    pub train: StudentTrainSection,
    pub smaller_train: SmallerTrainSection,
}

impl Default for DistillSection {
    fn default() -> Self {
        DistillSection {
            mode: Mode::Dd,
            iterations: 3,
            k: 20,
            shots: 0,
            students: [StudentTier::SameSize, StudentTier::Smaller].into(),
            accumulate: false,
            eval_shots: Vec::new(),
            seed: 11,
            train: StudentTrainSection::default(),
            smaller_train: SmallerTrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Error-accumulation coefficient; the student learning rate when unset.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub tokenizer: TokenizerSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub base: BaseSection,
    pub distill: DistillSection,
    pub eval: ChrfParams,
    pub diagnostics: DiagnosticsSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Read a TOML config, or the config snapshot inside a JSON run manifest
    /// (any file ending in `.json`), so a run can be replayed from its manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Snapshot {
                config: Config,
            }
            let snap: Snapshot =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            snap.config.validate()?;
            return Ok(snap.config);
        }
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Replace every seed with one derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.corpus.seed = rng::derive(seed, "config/corpus");
        self.model.seed = rng::derive(seed, "config/model");
        self.model.small_seed = rng::derive(seed, "config/model-small");
        self.train.seed = rng::derive(seed, "config/train");
        self.distill.seed = rng::derive(seed, "config/distill");
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.spec().validate()?;
        let c = &self.corpus;
        if c.monolingual == 0 || c.test == 0 || c.human_seed == 0 || c.dev == 0 {
            return Err(Error::Config(
                "corpus monolingual, test, human_seed and dev sizes must be positive".into(),
            ));
        }
        let t = self.base.stop_at_dev_chrf;
        if !(0.0..=100.0).contains(&t) {
            return Err(Error::Config(format!("stop_at_dev_chrf must lie in [0, 100], got {t}")));
        }
        if self.tokenizer.max_vocab < crate::tokenizer::NUM_SPECIALS + 1 {
            return Err(Error::Config("tokenizer max_vocab is too small".into()));
        }
        if self.model.max_decode_len == 0 {
            return Err(Error::Config("max_decode_len must be at least 1".into()));
        }
        self.train.config().validate()?;
        self.distill.train.config().validate()?;
        self.distill.smaller_train.config().validate()?;
        self.eval.validate()
    }

    /// The distillation plan for a vocabulary of `vocab_size` tokens.
    pub fn plan(&self, vocab_size: usize) -> Result<DistillPlan> {
        let d = &self.distill;
        let plan = DistillPlan {
            mode: d.mode,
            iterations: d.iterations,
            k: d.k,
            shots: d.shots,
            teacher_config: self.model.config(Tier::Large, vocab_size),
            smaller_config: Some(self.model.config(Tier::Small, vocab_size)),
            students: d.students.clone(),
            train: d.train.config(),
            smaller_train: Some(d.smaller_train.config()),
            accumulate: d.accumulate,
            eval_shots: d.eval_shots.clone(),
            gamma: self.diagnostics.gamma,
            chrf: self.eval,
            seed: d.seed,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.distill.k, 20);
        assert_eq!(cfg.distill.iterations, 3);
        assert_eq!(cfg.eval.beta, 2.0);
        assert_eq!(cfg.eval.max_ngram, 6);
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = Config::default();
        cfg.distill.mode = Mode::Sd;
        cfg.distill.shots = 4;
        cfg.diagnostics.gamma = Some(1.0);
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = Config::from_toml("[distill]\nmode = \"sd\"\n[distill.train]\nepochs = 2\n").unwrap();
        assert_eq!(cfg.distill.mode, Mode::Sd);
        assert_eq!(cfg.distill.train.epochs, 2);
        assert_eq!(cfg.distill.train.learning_rate, DistillSection::default().train.learning_rate);
        assert_eq!(cfg.corpus, CorpusSection::default());
    }

    #[test]
    fn typos_and_bad_values_are_config_errors() {
        assert!(matches!(Config::from_toml("[corpus]\nmonolingal = 3\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml("[train]\nlearning_rate = -1.0\n"), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml("[corpus]\nalphabet = \"a\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn plan_follows_the_config() {
        let cfg = Config::default();
        let plan = cfg.plan(47).unwrap();
        assert_eq!(plan.teacher_config.tier, Tier::Large);
        assert_eq!(plan.smaller_config.unwrap().tier, Tier::Small);
        assert_eq!(plan.gamma(), cfg.distill.train.learning_rate);
        assert_eq!(plan.smaller_train, Some(cfg.distill.smaller_train.config()));
        assert_ne!(plan.smaller_train, Some(plan.train));
    }

    #[test]
    fn base_section_switches_early_stop() {
        let cfg = Config::from_toml("[base]\nearly_stop = false\n").unwrap();
        assert!(!cfg.base.early_stop);
        assert_eq!(cfg.base.stop_at_dev_chrf, BaseSection::default().stop_at_dev_chrf);
        assert!(Config::from_toml("[base]\nstop_at_dev_chrf = 120.0\n").is_err());
    }

    #[test]
    fn reseed_changes_every_seed() {
        let mut a = Config::default();
        a.reseed(99);
        let d = Config::default();
        assert_ne!(a.corpus.seed, d.corpus.seed);
        assert_ne!(a.train.seed, d.train.seed);
        assert_ne!(a.distill.seed, d.distill.seed);
        let mut b = Config::default();
        b.reseed(99);
        assert_eq!(a, b);
    }
}
