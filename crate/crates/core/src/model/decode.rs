use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::linalg::softmax;
use super::network::{dec_step, encode, Encoded, Step};
use super::TranslationModel;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::rng;
use crate::tokenizer::{TokenSeq, BOS, EOS};

/// Next-token distribution after `tgt_prefix` (BOS is implicit).
pub fn forward(model: &TranslationModel, src: &TokenSeq, tgt_prefix: &TokenSeq) -> Result<Vec<f64>> {
    check_source(model, src)?;
    model.check_ids(tgt_prefix.ids())?;
    let enc = encode(model, src.ids());
    let mut step = first_step(model, &enc);
    for &tok in tgt_prefix.ids() {
        step = dec_step(model, &enc, &step.s, &step.c, tok);
    }
    Ok(softmax(&step.logits))
}

fn check_source(model: &TranslationModel, src: &TokenSeq) -> Result<()> {
    if src.is_empty() {
        return Err(Error::Input("source sequence is empty".into()));
    }
    model.check_ids(src.ids())
}

fn first_step(model: &TranslationModel, enc: &Encoded) -> Step {
    let c0 = vec![0.0; 2 * model.config().hidden_dim];
    dec_step(model, enc, &enc.s0, &c0, BOS)
}

/// Lowest id among the maximal entries.
fn argmax(probs: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best as u32
}

/// The `k` most probable `(token, probability)` entries, probability
/// descending, lower id first among equals.
pub fn top_k(probs: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut idx: Vec<u32> = (0..probs.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        probs[b as usize]
            .partial_cmp(&probs[a as usize])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.into_iter().map(|i| (i, probs[i as usize])).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Emitted tokens, EOS excluded.
    pub tokens: TokenSeq,
    /// False when decoding hit `max_len` before emitting EOS.
    pub finished: bool,
}

fn decode_loop(
    model: &TranslationModel,
    src: &TokenSeq,
    max_len: usize,
    mut choose: impl FnMut(&[f64]) -> u32,
    mut observe: impl FnMut(&[f64], u32),
) -> Result<Decoded> {
    check_source(model, src)?;
    let enc = encode(model, src.ids());
    let mut step = first_step(model, &enc);
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let probs = softmax(&step.logits);
        let tok = choose(&probs);
        observe(&probs, tok);
        if tok == EOS {
            return Ok(Decoded {
                tokens: TokenSeq(tokens),
                finished: true,
            });
        }
        tokens.push(tok);
        step = dec_step(model, &enc, &step.s, &step.c, tok);
    }
    Ok(Decoded {
        tokens: TokenSeq(tokens),
        finished: false,
    })
}

/// Greedy decoding: each step emits the argmax of the next-token distribution.
pub fn greedy_decode(model: &TranslationModel, src: &TokenSeq, max_len: usize) -> Result<Decoded> {
    decode_loop(model, src, max_len, argmax, |_, _| {})
}

/// Ancestral sampling at `temperature`, seeded.
pub fn sample_decode(
    model: &TranslationModel,
    src: &TokenSeq,
    max_len: usize,
    temperature: f64,
    seed: u64,
) -> Result<Decoded> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config("sampling temperature must be positive".into()));
    }
    let mut rng = rng::stream(seed, "decode/sample");
    let choose = |probs: &[f64]| {
        let weights: Vec<f64> = probs.iter().map(|p| p.powf(1.0 / temperature)).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if draw < *w {
                return i as u32;
            }
            draw -= w;
        }
        argmax(probs)
    };
    decode_loop(model, src, max_len, choose, |_, _| {})
}

/// Beam search over summed log-probabilities. Width 1 is greedy decoding.
/// Hypotheses that hit `max_len` compete as unfinished outputs only when no
/// hypothesis finished.
pub fn beam_decode(model: &TranslationModel, src: &TokenSeq, max_len: usize, width: usize) -> Result<Decoded> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    if width == 1 {
        return greedy_decode(model, src, max_len);
    }
    check_source(model, src)?;
    let enc = encode(model, src.ids());
    struct Hyp {
        tokens: Vec<u32>,
        score: f64,
        step: Step,
    }
    let mut beam = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        step: first_step(model, &enc),
    }];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut cands: Vec<(usize, u32, f64)> = Vec::new();
        for (h, hyp) in beam.iter().enumerate() {
            let probs = softmax(&hyp.step.logits);
            for (tok, &p) in top_k(&probs, width).iter().map(|(t, p)| (*t, p)) {
                cands.push((h, tok, hyp.score + p.ln()));
            }
        }
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| beam[a.0].tokens.cmp(&beam[b.0].tokens))
                .then(a.1.cmp(&b.1))
        });
        let mut next = Vec::with_capacity(width);
        for (h, tok, score) in cands {
            if next.len() >= width {
                break;
            }
            if tok == EOS {
                finished.push((beam[h].tokens.clone(), score));
                continue;
            }
            let mut tokens = beam[h].tokens.clone();
            tokens.push(tok);
            let step = dec_step(model, &enc, &beam[h].step.s, &beam[h].step.c, tok);
            next.push(Hyp { tokens, score, step });
        }
        // The best live hypothesis can no longer beat the best finished one.
        let best_done = finished.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
        if next.is_empty() || next.iter().all(|h| h.score <= best_done) {
            beam = next;
            break;
        }
        beam = next;
    }
    let pick = |v: Vec<(Vec<u32>, f64)>| {
        v.into_iter()
            .min_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.cmp(&b.0))
            })
            .map(|x| x.0)
    };
    if let Some(tokens) = pick(finished) {
        return Ok(Decoded {
            tokens: TokenSeq(tokens),
            finished: true,
        });
    }
    let tokens = pick(beam.into_iter().map(|h| (h.tokens, h.score)).collect()).unwrap_or_default();
    Ok(Decoded {
        tokens: TokenSeq(tokens),
        finished: false,
    })
}

/// Top-k teacher distribution at one decoding position (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub position: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SoftTarget {
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Greedy output of a teacher together with its top-k distribution at every
/// emitted position. `generated` ends in EOS unless decoding was truncated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftRecord {
    pub source: Sentence,
    pub generated: TokenSeq,
    pub soft: Vec<SoftTarget>,
}

impl SoftRecord {
    pub fn truncated(&self) -> bool {
        self.generated.ids().last() != Some(&EOS)
    }

    /// Output tokens without the trailing EOS.
    pub fn output(&self) -> &[u32] {
        let ids = self.generated.ids();
        if self.truncated() {
            ids
        } else {
            &ids[..ids.len() - 1]
        }
    }
}

/// Greedy decode of `src`, recording the top-k entries at every position.
pub fn decode_with_topk(
    model: &TranslationModel,
    source: &Sentence,
    src: &TokenSeq,
    k: usize,
    max_len: usize,
) -> Result<SoftRecord> {
    if k == 0 {
        return Err(Error::Config("top-k needs k >= 1".into()));
    }
    let mut soft = Vec::new();
    let mut generated = Vec::new();
    decode_loop(model, src, max_len, argmax, |probs, tok| {
        soft.push(SoftTarget {
            position: soft.len() + 1,
            entries: top_k(probs, k),
        });
        generated.push(tok);
    })?;
    Ok(SoftRecord {
        source: source.clone(),
        generated: TokenSeq(generated),
        soft,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Tier};

    fn model() -> TranslationModel {
        TranslationModel::init(ModelConfig {
            vocab_size: 12,
            embed_dim: 4,
            hidden_dim: 5,
            attn_dim: 3,
            num_layers: 1,
            tier: Tier::Small,
            max_decode_len: 8,
            seed: 11,
        })
        .unwrap()
    }

    fn src() -> TokenSeq {
        TokenSeq(vec![BOS, 6, 7, 8, crate::tokenizer::SEP])
    }

    #[test]
    fn forward_is_a_distribution() {
        let m = model();
        let p = forward(&m, &src(), &TokenSeq(vec![6, 9])).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
        let q = forward(&m, &src(), &TokenSeq(vec![7])).unwrap();
        assert_ne!(p, q);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let m = model();
        assert!(matches!(forward(&m, &TokenSeq(vec![]), &TokenSeq(vec![])), Err(Error::Input(_))));
        assert!(matches!(forward(&m, &TokenSeq(vec![99]), &TokenSeq(vec![])), Err(Error::Input(_))));
    }

    #[test]
    fn output_bias_shift_leaves_distribution_unchanged() {
        let m = model();
        let mut shifted = m.clone();
        let range = m.layout().out_b.range();
        for p in &mut shifted.params_mut()[range] {
            *p += 5.0;
        }
        let a = forward(&m, &src(), &TokenSeq(vec![6])).unwrap();
        let b = forward(&shifted, &src(), &TokenSeq(vec![6])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_eos_gives_empty_output() {
        let mut m = model();
        let eos = m.layout().out_b.off + EOS as usize;
        m.params_mut()[eos] = 1e3;
        let d = greedy_decode(&m, &src(), 8).unwrap();
        assert!(d.tokens.is_empty());
        assert!(d.finished);
    }

    #[test]
    fn greedy_is_deterministic_and_bounded() {
        let m = model();
        let a = greedy_decode(&m, &src(), 5).unwrap();
        assert_eq!(a, greedy_decode(&m, &src(), 5).unwrap());
        assert!(a.tokens.len() <= 5);
    }

    #[test]
    fn topk_ties_prefer_lower_ids() {
        let t = top_k(&[0.1, 0.3, 0.3, 0.2, 0.1], 4);
        assert_eq!(t.iter().map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3, 0]);
    }

    #[test]
    fn topk_record_follows_greedy_path() {
        let m = model();
        let s = Sentence::new("x").unwrap();
        let rec = decode_with_topk(&m, &s, &src(), 1, 8).unwrap();
        let g = greedy_decode(&m, &src(), 8).unwrap();
        assert_eq!(rec.output(), g.tokens.ids());
        assert_eq!(rec.soft.len(), rec.generated.len());
        for (st, &tok) in rec.soft.iter().zip(rec.generated.ids()) {
            assert_eq!(st.entries.len(), 1);
            assert_eq!(st.entries[0].0, tok);
        }
        let full = decode_with_topk(&m, &s, &src(), 12, 8).unwrap();
        for st in &full.soft {
            assert!((st.mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let m = model();
        let a = sample_decode(&m, &src(), 6, 1.0, 3).unwrap();
        assert_eq!(a, sample_decode(&m, &src(), 6, 1.0, 3).unwrap());
        assert!(sample_decode(&m, &src(), 6, 0.0, 3).is_err());
    }
}
