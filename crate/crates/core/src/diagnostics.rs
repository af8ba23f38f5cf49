//! Error-propagation accounting across distillation cycles.
//!
//! The accumulated error follows `eps_t = eps_{t-1} + gamma * (d_synth + d_kl)`
//! with `eps_0 = 0`. `d_synth` measures how far the synthetic corpus is from
//! the oracle translations, `d_kl` how far a student's distribution is from
//! its teacher's recorded top-k targets. `I_t` is the parameter distance
//! between a student and its teacher at initialization.

use serde::{Deserialize, Serialize};

use crate::corpus::{Oracle, Sentence};
use crate::error::{Error, Result};
use crate::eval::{ChrfParams, ChrfStats};
use crate::model::{padded_distance, param_distance, SoftRecord, TranslationModel};
use crate::tokenizer::{PromptContext, Vocab};
use crate::train::{loss_value, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub iteration: u32,
    /// `None` when no oracle exists for the task.
    pub delta_synth: Option<f64>,
    /// `None` in sequence-level mode, where no soft targets exist.
    pub delta_kl: Option<f64>,
    pub epsilon: f64,
    pub init_distance_same_size: Option<f64>,
    pub init_distance_smaller: Option<f64>,
}

/// Append-only per-iteration error records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub gamma: f64,
    pub records: Vec<ErrorRecord>,
}

impl ErrorTrace {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        Ok(ErrorTrace {
            gamma,
            records: Vec::new(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.epsilon)
    }

    pub fn last_iteration(&self) -> u32 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// Attach init distances to the record of iteration `t`.
    pub fn record_init_distance(&mut self, t: u32, same_size: Option<f64>, smaller: Option<f64>) -> Result<()> {
        let rec = self
            .records
            .iter_mut()
            .find(|r| r.iteration == t)
            .ok_or_else(|| Error::Input(format!("no error record for iteration {t}")))?;
        rec.init_distance_same_size = same_size;
        rec.init_distance_smaller = smaller;
        Ok(())
    }
}

fn check_delta(name: &str, d: Option<f64>) -> Result<f64> {
    match d {
        None => Ok(0.0),
        Some(x) if x >= 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(Error::Input(format!("{name} must be finite and >= 0, got {x}"))),
    }
}

/// Append iteration `t`. Unavailable deltas contribute nothing.
pub fn update_epsilon(
    trace: &ErrorTrace,
    t: u32,
    delta_synth: Option<f64>,
    delta_kl: Option<f64>,
) -> Result<ErrorTrace> {
    if t != trace.last_iteration() + 1 {
        return Err(Error::Input(format!(
            "error trace expects iteration {}, got {t}",
            trace.last_iteration() + 1
        )));
    }
    let ds = check_delta("delta_synth", delta_synth)?;
    let dk = check_delta("delta_kl", delta_kl)?;
    let mut next = trace.clone();
    next.records.push(ErrorRecord {
        iteration: t,
        delta_synth,
        delta_kl,
        epsilon: trace.epsilon() + trace.gamma * (ds + dk),
        init_distance_same_size: None,
        init_distance_smaller: None,
    });
    Ok(next)
}

/// `1 - chrF/100` of synthetic outputs against oracle translations, pooled
/// over the corpus. Outputs may be empty strings.
pub fn estimate_delta_synth(
    sources: &[Sentence],
    outputs: &[String],
    oracle: &Oracle,
    params: &ChrfParams,
) -> Result<f64> {
    if sources.len() != outputs.len() {
        return Err(Error::Arity {
            expected: sources.len(),
            actual: outputs.len(),
        });
    }
    if sources.is_empty() {
        return Err(Error::Input("no synthetic pairs to score".into()));
    }
    params.validate()?;
    let mut pooled = ChrfStats::default();
    for (src, out) in sources.iter().zip(outputs) {
        let reference = oracle.translate(src);
        pooled.add(&ChrfStats::sentence(out, reference.as_str(), params.max_ngram)?);
    }
    Ok((1.0 - pooled.score(params.beta) / 100.0).clamp(0.0, 1.0))
}

/// Mean per-token bucketed KL between teacher records and `student`.
pub fn estimate_delta_kl(
    records: &[SoftRecord],
    student: &TranslationModel,
    vocab: &Vocab,
    ctx: &PromptContext,
    smoothing_eps: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for rec in records {
        if rec.soft.is_empty() {
            continue;
        }
        let ex = Example::from_record(rec, vocab, ctx)?;
        total += loss_value(student, &ex, smoothing_eps)? * rec.soft.len() as f64;
        tokens += rec.soft.len();
    }
    if tokens == 0 {
        return Err(Error::Input("no soft targets to probe".into()));
    }
    Ok(total / tokens as f64)
}

/// `I_t` for a same-shaped student.
pub fn track_init_distance(teacher: &TranslationModel, student: &TranslationModel) -> Result<f64> {
    param_distance(teacher, student)
}

/// `I_t` for a student of a different size: distance after zero-padding
/// every tensor to the larger shape.
pub fn track_init_distance_padded(teacher: &TranslationModel, student: &TranslationModel) -> f64 {
    padded_distance(teacher, student)
}
