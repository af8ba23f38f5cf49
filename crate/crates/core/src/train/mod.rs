//! Losses, the SGD training loop, and gradient checking.

mod gradcheck;
mod loss;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::ParallelPair;
use crate::error::{Error, Result};
use crate::model::network::Dropout;
use crate::model::{SoftRecord, SoftTarget, TranslationModel};
use crate::rng;
use crate::tokenizer::{PromptContext, TokenSeq, Vocab, EOS};

pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use loss::{bucket_kl, buckets, ce_loss, kd_loss, loss_value, Buckets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Sequence cross-entropy on token targets.
    Ce,
    /// Bucketed top-k KL on soft targets.
    Kd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Output tokens followed by EOS.
    Tokens(Vec<u32>),
    /// Teacher path and its top-k distribution at every position.
    Soft {
        generated: Vec<u32>,
        soft: Vec<SoftTarget>,
    },
}

/// One training example: encoder prompt plus decoder target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub prompt: TokenSeq,
    pub target: Target,
}

impl Example {
    pub fn from_pair(pair: &ParallelPair, vocab: &Vocab, ctx: &PromptContext) -> Result<Self> {
        let mut ids = vocab.encode(pair.target.as_str()).0;
        ids.push(EOS);
        Ok(Example {
            prompt: ctx.prompt(&pair.source, vocab)?,
            target: Target::Tokens(ids),
        })
    }

    pub fn from_record(record: &SoftRecord, vocab: &Vocab, ctx: &PromptContext) -> Result<Self> {
        Ok(Example {
            prompt: ctx.prompt(&record.source, vocab)?,
            target: Target::Soft {
                generated: record.generated.0.clone(),
                soft: record.soft.clone(),
            },
        })
    }

    pub fn mode(&self) -> LossMode {
        match self.target {
            Target::Tokens(_) => LossMode::Ce,
            Target::Soft { .. } => LossMode::Kd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Zero epochs returns the input model unchanged.
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    pub smoothing_eps: f64,
    /// Inverted-dropout rate on embeddings and the output-layer input.
    #[serde(default)]
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 10,
            batch_size: 16,
            grad_clip: 5.0,
            smoothing_eps: 1e-8,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.grad_clip > 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if !(0.0..0.9).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 0.9)".into()));
        }
        if !(self.smoothing_eps > 0.0 && self.smoothing_eps <= 1e-3) {
            return Err(Error::Config("smoothing_eps must lie in (0, 1e-3]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean example loss over each epoch, measured as batches were visited.
    pub mean_loss: Vec<f64>,
    /// Mean loss of the returned model over the whole data set.
    pub final_loss: f64,
}

impl LossReport {
    /// Append `epoch \t mean_loss` lines to a metrics file.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut body = String::new();
        for (i, l) in self.mean_loss.iter().enumerate() {
            body.push_str(&format!("{}\t{l}\n", i + 1));
        }
        f.write_all(body.as_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn mean_loss(model: &TranslationModel, data: &[Example], eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += loss_value(model, ex, eps)?;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch SGD with global-norm clipping. The input model is untouched;
/// batch order is reshuffled every epoch from `cfg.seed`.
pub fn train_epochs(
    model: &TranslationModel,
    data: &[Example],
    mode: LossMode,
    cfg: &TrainConfig,
) -> Result<(TranslationModel, LossReport)> {
    train_until(model, data, mode, cfg, |_, _| Ok(false))
}

/// [`train_epochs`], consulting `stop` after every epoch with the number of
/// completed epochs; returning `true` ends training there. With a `stop`
/// that never fires the result is identical to [`train_epochs`].
pub fn train_until(
    model: &TranslationModel,
    data: &[Example],
    mode: LossMode,
    cfg: &TrainConfig,
    mut stop: impl FnMut(usize, &TranslationModel) -> Result<bool>,
) -> Result<(TranslationModel, LossReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    if let Some(bad) = data.iter().find(|ex| ex.mode() != mode) {
        return Err(Error::Plan(format!(
            "{mode:?} training received a {:?} example",
            bad.mode()
        )));
    }

    let mut model = model.clone();
    let mut rng = rng::stream(cfg.seed, "train/shuffle");
    let mut drop_rng = rng::stream(cfg.seed, "train/dropout");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let n_params = model.param_count();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = vec![0.0; n_params];
            let mut batch_total = 0.0;
            for &i in batch {
                let mut drop = Dropout {
                    rate: cfg.dropout,
                    rng: &mut drop_rng,
                };
                let noise = (cfg.dropout > 0.0).then_some(&mut drop);
                let (l, g) = loss::evaluate(&model, &data[i], cfg.smoothing_eps, true, noise)?;
                batch_total += l;
                for (acc, x) in grad.iter_mut().zip(g.expect("gradient requested")) {
                    *acc += x;
                }
            }
            if !batch_total.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss: batch_total,
                });
            }
            epoch_total += batch_total;
            let scale = 1.0 / batch.len() as f64;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
            let clip = if norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
            let step = cfg.learning_rate * scale * clip;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        epoch_losses.push(epoch_total / data.len() as f64);
        if stop(epoch + 1, &model)? {
            break;
        }
    }

    let final_loss = mean_loss(&model, data, cfg.smoothing_eps)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: epoch_losses.len(),
            batch: 0,
            loss: final_loss,
        });
    }
    Ok((
        model,
        LossReport {
            mean_loss: epoch_losses,
            final_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Tier};

    fn tiny_model(seed: u64) -> TranslationModel {
        TranslationModel::init(ModelConfig {
            vocab_size: 10,
            embed_dim: 4,
            hidden_dim: 6,
            attn_dim: 4,
            num_layers: 1,
            tier: Tier::Small,
            max_decode_len: 8,
            seed,
        })
        .unwrap()
    }

    fn token_example(src: &[u32], tgt: &[u32]) -> Example {
        let mut prompt = vec![crate::tokenizer::BOS];
        prompt.extend_from_slice(src);
        prompt.push(crate::tokenizer::SEP);
        let mut t = tgt.to_vec();
        t.push(EOS);
        Example {
            prompt: TokenSeq(prompt),
            target: Target::Tokens(t),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.smoothing_eps = 1e-2;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_model_costs_ln_v_per_token() {
        let mut m = tiny_model(1);
        let out = m.layout().out_w;
        for p in &mut m.params_mut()[out.range()] {
            *p = 0.0;
        }
        let ob = m.layout().out_b;
        for p in &mut m.params_mut()[ob.range()] {
            *p = 0.0;
        }
        let (l, _) = ce_loss(&m, &token_example(&[5, 6], &[7, 8, 9])).unwrap();
        assert!((l - (10f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn training_leaves_input_untouched_and_is_deterministic() {
        let m = tiny_model(2);
        let data: Vec<Example> = (0..6).map(|i| token_example(&[5 + i % 4, 6], &[6, 5 + i % 4])).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let before = m.clone();
        let (a, ra) = train_epochs(&m, &data, LossMode::Ce, &cfg).unwrap();
        let (b, rb) = train_epochs(&m, &data, LossMode::Ce, &cfg).unwrap();
        assert_eq!(m, before);
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
        assert_eq!(ra.mean_loss.len(), 3);
        assert!(ra.final_loss < ra.mean_loss[0]);
    }

    #[test]
    fn mode_mismatch_is_a_plan_error() {
        let m = tiny_model(2);
        let data = vec![token_example(&[5], &[6])];
        assert!(matches!(
            train_epochs(&m, &data, LossMode::Kd, &TrainConfig::default()),
            Err(Error::Plan(_))
        ));
        assert!(matches!(
            train_epochs(&m, &[], LossMode::Ce, &TrainConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = tiny_model(3);
        let data = vec![token_example(&[5], &[6])];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, report) = train_epochs(&m, &data, LossMode::Ce, &cfg).unwrap();
        assert_eq!(out, m);
        assert!(report.mean_loss.is_empty());
    }

    #[test]
    fn early_stop_is_a_prefix_of_full_training() {
        let m = tiny_model(3);
        let data = vec![token_example(&[5], &[6]), token_example(&[6, 5], &[5, 6])];
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let (two, _) = train_epochs(&m, &data, LossMode::Ce, &cfg).unwrap();
        let long = TrainConfig { epochs: 6, ..cfg };
        let (stopped, report) = train_until(&m, &data, LossMode::Ce, &long, |e, _| Ok(e == 2)).unwrap();
        assert_eq!(stopped, two);
        assert_eq!(report.mean_loss.len(), 2);
    }

    #[test]
    fn divergence_names_the_batch() {
        let m = tiny_model(4);
        let data = vec![token_example(&[5], &[6]); 4];
        let cfg = TrainConfig {
            learning_rate: 1e300,
            grad_clip: 1e300,
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        match train_epochs(&m, &data, LossMode::Ce, &cfg) {
            Err(Error::Diverged { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn single_step_descends() {
        let m = tiny_model(5);
        let ex = token_example(&[5, 7], &[7, 5]);
        let (l0, g) = ce_loss(&m, &ex).unwrap();
        let mut stepped = m.clone();
        for (p, gi) in stepped.params_mut().iter_mut().zip(&g) {
            *p -= 1e-3 * gi;
        }
        let (l1, _) = ce_loss(&stepped, &ex).unwrap();
        assert!(l1 < l0);
    }
}
