//! Sequence cross-entropy and bucketed top-k KL, both as mean per-position
//! losses with gradients.
//!
//! The KL compares the teacher's top-k entries plus a tail bucket holding
//! the remaining mass against the student's probabilities on the same
//! buckets. Student bucket masses are floored at `eps` and renormalized so the
//! logarithm stays finite. No tail bucket exists when the top-k already spans
//! the whole vocabulary.

use super::{Example, Target};
use crate::error::{Error, Result};
use crate::model::linalg::softmax;
use crate::model::network::{self, Dropout};
use crate::model::{SoftTarget, TranslationModel};
use crate::tokenizer::BOS;

/// Decoder inputs for a target path: BOS then every target token but the last.
fn decoder_inputs(path: &[u32]) -> Vec<u32> {
    let mut inputs = Vec::with_capacity(path.len());
    inputs.push(BOS);
    inputs.extend_from_slice(&path[..path.len() - 1]);
    inputs
}

fn check_example(model: &TranslationModel, ex: &Example) -> Result<()> {
    if ex.prompt.is_empty() {
        return Err(Error::Input("prompt is empty".into()));
    }
    model.check_ids(ex.prompt.ids())?;
    match &ex.target {
        Target::Tokens(ids) => {
            if ids.is_empty() {
                return Err(Error::Input("target is empty".into()));
            }
            model.check_ids(ids)
        }
        Target::Soft { generated, soft } => {
            if soft.is_empty() || soft.len() != generated.len() {
                return Err(Error::Input(
                    "soft record needs one non-empty top-k list per generated token".into(),
                ));
            }
            let v = model.config().vocab_size;
            for st in soft {
                if st.entries.is_empty() {
                    return Err(Error::Input("empty top-k list".into()));
                }
                if st.entries.iter().any(|e| e.0 as usize >= v) || st.entries.len() > v {
                    return Err(Error::Incompatible(
                        "soft record refers to tokens outside the student vocabulary".into(),
                    ));
                }
            }
            model.check_ids(generated)
        }
    }
}

/// Bucketed distributions at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct Buckets {
    /// Teacher mass per bucket: top-k entries, then the tail if present.
    pub teacher: Vec<f64>,
    /// Raw student mass per bucket, before flooring.
    pub student_raw: Vec<f64>,
    /// Student mass after flooring and renormalization.
    pub student: Vec<f64>,
    pub has_tail: bool,
}

pub fn buckets(entries: &[(u32, f64)], q: &[f64], eps: f64) -> Buckets {
    let has_tail = entries.len() < q.len();
    let mut teacher: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let mut student_raw: Vec<f64> = entries.iter().map(|e| q[e.0 as usize]).collect();
    if has_tail {
        let top: f64 = teacher.iter().sum();
        teacher.push((1.0 - top).max(0.0));
        let top_q: f64 = student_raw.iter().sum();
        student_raw.push((1.0 - top_q).max(0.0));
    }
    let floored: Vec<f64> = student_raw.iter().map(|&x| x.max(eps)).collect();
    let z: f64 = floored.iter().sum();
    let student = floored.iter().map(|x| x / z).collect();
    Buckets {
        teacher,
        student_raw,
        student,
        has_tail,
    }
}

/// KL(teacher || student) over the buckets of one position.
pub fn bucket_kl(entries: &[(u32, f64)], q: &[f64], eps: f64) -> f64 {
    let b = buckets(entries, q, eps);
    b.teacher
        .iter()
        .zip(&b.student)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, s)| p * (p.ln() - s.ln()))
        .sum()
}

/// Writes dKL/dlogits for one position into `dl` (scaled by `scale`).
fn bucket_kl_grad(st: &SoftTarget, q: &[f64], eps: f64, scale: f64, dl: &mut [f64]) {
    let b = buckets(&st.entries, q, eps);
    let total_p: f64 = b.teacher.iter().sum();
    let unfloored: Vec<bool> = b.student_raw.iter().map(|&x| x > eps).collect();
    let z: f64 = b.student_raw.iter().map(|&x| x.max(eps)).sum();

    // sum_b q_b dL/dq_b; zero when no bucket is floored.
    let gbar = if unfloored.iter().all(|&u| u) {
        0.0
    } else {
        b.teacher
            .iter()
            .zip(&b.student_raw)
            .zip(&unfloored)
            .filter(|(_, &u)| u)
            .map(|((p, qb), _)| -p + qb * total_p / z)
            .sum()
    };

    let k = st.entries.len();
    let mut in_top = vec![usize::MAX; q.len()];
    for (j, e) in st.entries.iter().enumerate() {
        in_top[e.0 as usize] = j;
    }
    for (m, (d, &qm)) in dl.iter_mut().zip(q).enumerate() {
        let bucket = if in_top[m] != usize::MAX { in_top[m] } else { k };
        let g = if unfloored[bucket] {
            let share = if bucket < k {
                b.teacher[bucket]
            } else {
                qm * b.teacher[k] / b.student_raw[k]
            };
            qm * total_p / z - share - qm * gbar
        } else {
            -qm * gbar
        };
        *d = g / scale;
    }
}

/// Mean per-position loss of `ex` under `model`, with its gradient when
/// `want_grad` is set.
pub(crate) fn evaluate(
    model: &TranslationModel,
    ex: &Example,
    eps: f64,
    want_grad: bool,
    drop: Option<&mut Dropout>,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_example(model, ex)?;
    let path = match &ex.target {
        Target::Tokens(ids) => ids.as_slice(),
        Target::Soft { generated, .. } => generated.as_slice(),
    };
    let trace = network::run(model, ex.prompt.ids(), &decoder_inputs(path), drop);
    let positions = path.len() as f64;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(path.len());
    for (t, step) in trace.steps.iter().enumerate() {
        let q = softmax(&step.logits);
        match &ex.target {
            Target::Tokens(ids) => {
                let y = ids[t] as usize;
                total -= q[y].ln();
                if want_grad {
                    let mut dl = vec![0.0; q.len()];
                    for (m, (d, &qm)) in dl.iter_mut().zip(&q).enumerate() {
                        let g = if m == y { qm - 1.0 } else { qm - 0.0 };
                        *d = g / positions;
                    }
                    dlogits.push(dl);
                }
            }
            Target::Soft { soft, .. } => {
                total += bucket_kl(&soft[t].entries, &q, eps);
                if want_grad {
                    let mut dl = vec![0.0; q.len()];
                    bucket_kl_grad(&soft[t], &q, eps, positions, &mut dl);
                    dlogits.push(dl);
                }
            }
        }
    }
    let loss = total / positions;
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad = vec![0.0; model.param_count()];
    network::backward(model, &trace, &dlogits, &mut grad);
    Ok((loss, Some(grad)))
}

/// Mean token negative log-likelihood of a token target.
pub fn ce_loss(model: &TranslationModel, ex: &Example) -> Result<(f64, Vec<f64>)> {
    if !matches!(ex.target, Target::Tokens(_)) {
        return Err(Error::Plan("cross-entropy needs a token target".into()));
    }
    let (loss, grad) = evaluate(model, ex, 0.0, true, None)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Mean per-position bucketed KL of a soft target.
pub fn kd_loss(model: &TranslationModel, ex: &Example, smoothing_eps: f64) -> Result<(f64, Vec<f64>)> {
    if !matches!(ex.target, Target::Soft { .. }) {
        return Err(Error::Plan("KL distillation needs a soft target".into()));
    }
    let (loss, grad) = evaluate(model, ex, smoothing_eps, true, None)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Loss value only.
pub fn loss_value(model: &TranslationModel, ex: &Example, smoothing_eps: f64) -> Result<f64> {
    Ok(evaluate(model, ex, smoothing_eps, false, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_buckets_give_zero_kl() {
        let q = [0.5, 0.2, 0.2, 0.1];
        let entries = [(0, 0.5), (2, 0.2)];
        assert!(bucket_kl(&entries, &q, 1e-8).abs() < 1e-15);
    }

    #[test]
    fn full_support_has_no_tail() {
        let q = [0.25, 0.25, 0.5];
        let entries = [(2, 0.5), (0, 0.25), (1, 0.25)];
        let b = buckets(&entries, &q, 1e-8);
        assert!(!b.has_tail);
        assert_eq!(b.teacher.len(), 3);
    }

    #[test]
    fn floor_keeps_kl_finite() {
        let q = [1.0, 0.0, 0.0];
        let entries = [(1, 0.9)];
        let kl = bucket_kl(&entries, &q, 1e-8);
        assert!(kl.is_finite() && kl > 0.0);
    }

    #[test]
    fn uniform_student_against_peaked_teacher() {
        // Three-token vocabulary, top-2 recorded, tail 0.1.
        let q = [1.0 / 3.0; 3];
        let entries = [(0, 0.7), (1, 0.2)];
        let expected = 0.7 * (0.7f64 / (1.0 / 3.0)).ln()
            + 0.2 * (0.2f64 / (1.0 / 3.0)).ln()
            + 0.1 * (0.1f64 / (1.0 / 3.0)).ln();
        assert!((bucket_kl(&entries, &q, 1e-8) - expected).abs() < 1e-12);
    }
}
