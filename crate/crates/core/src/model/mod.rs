//! Compact attentional encoder–decoder translator.
//!
//! The encoder is a stack of bidirectional GRU layers over the prompt tokens.
//! The decoder is a GRU fed with the previous token embedding and the previous
//! attention context; it attends with additive attention and projects
//! `[state; context]` onto the vocabulary. All weights live in one flat `f64`
//! vector whose layout is a pure function of the [`ModelConfig`].

mod checkpoint;
mod decode;
pub mod linalg;
pub(crate) mod network;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use linalg::Mat;

pub use checkpoint::{checkpoint_digest, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use decode::{
    beam_decode, decode_with_topk, forward, greedy_decode, sample_decode, top_k, Decoded, SoftRecord, SoftTarget,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Large,
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub num_layers: usize,
    pub tier: Tier,
    pub max_decode_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default dimensions per tier. Large carries roughly 4x the parameters of
    /// Small at equal vocabulary size.
    pub fn preset(tier: Tier, vocab_size: usize, seed: u64) -> Self {
        let (embed_dim, hidden_dim, attn_dim) = match tier {
            Tier::Large => (32, 64, 64),
            Tier::Small => (16, 32, 32),
        };
        ModelConfig {
            vocab_size,
            embed_dim,
            hidden_dim,
            attn_dim,
            num_layers: 1,
            tier,
            max_decode_len: 32,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < crate::tokenizer::NUM_SPECIALS + 1 {
            return Err(Error::Config(format!(
                "vocab_size {} is below the minimum of {}",
                self.vocab_size,
                crate::tokenizer::NUM_SPECIALS + 1
            )));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("num_layers", self.num_layers),
            ("max_decode_len", self.max_decode_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// True when two configs produce identically shaped parameter vectors.
    pub fn same_shape(&self, other: &ModelConfig) -> bool {
        self.vocab_size == other.vocab_size
            && self.embed_dim == other.embed_dim
            && self.hidden_dim == other.hidden_dim
            && self.attn_dim == other.attn_dim
            && self.num_layers == other.num_layers
    }
}

/// Gate-stacked GRU weights: rows are `[update; reset; candidate]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruLayout {
    pub w: Mat,
    pub u: Mat,
    pub b: Mat,
    pub hidden: usize,
    pub input: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub emb: Mat,
    /// `[forward, backward]` per encoder layer.
    pub enc: Vec<[GruLayout; 2]>,
    pub init_w: Mat,
    pub init_b: Mat,
    pub dec: GruLayout,
    pub att_w: Mat,
    pub att_u: Mat,
    pub att_b: Mat,
    pub att_v: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
    pub total: usize,
}

struct Alloc(usize);

impl Alloc {
    fn mat(&mut self, rows: usize, cols: usize) -> Mat {
        let m = Mat { off: self.0, rows, cols };
        self.0 += rows * cols;
        m
    }

    fn gru(&mut self, input: usize, hidden: usize) -> GruLayout {
        GruLayout {
            w: self.mat(3 * hidden, input),
            u: self.mat(3 * hidden, hidden),
            b: self.mat(3 * hidden, 1),
            hidden,
            input,
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (v, e, h, a) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.attn_dim);
        let mut al = Alloc(0);
        let emb = al.mat(v, e);
        let enc = (0..cfg.num_layers)
            .map(|l| {
                let input = if l == 0 { e } else { 2 * h };
                [al.gru(input, h), al.gru(input, h)]
            })
            .collect();
        let init_w = al.mat(h, 2 * h);
        let init_b = al.mat(h, 1);
        let dec = al.gru(e + 2 * h, h);
        let att_w = al.mat(a, h);
        let att_u = al.mat(a, 2 * h);
        let att_b = al.mat(a, 1);
        let att_v = al.mat(a, 1);
        let out_w = al.mat(v, 3 * h);
        let out_b = al.mat(v, 1);
        Layout {
            emb,
            enc,
            init_w,
            init_b,
            dec,
            att_w,
            att_u,
            att_b,
            att_v,
            out_w,
            out_b,
            total: al.0,
        }
    }

    /// Every tensor with a stable name, in storage order.
    pub fn tensors(&self) -> Vec<(String, Mat)> {
        let mut out = vec![("emb".to_string(), self.emb)];
        for (l, dirs) in self.enc.iter().enumerate() {
            for (d, g) in ["fwd", "bwd"].iter().zip(dirs) {
                out.push((format!("enc{l}.{d}.w"), g.w));
                out.push((format!("enc{l}.{d}.u"), g.u));
                out.push((format!("enc{l}.{d}.b"), g.b));
            }
        }
        out.extend([
            ("init.w".to_string(), self.init_w),
            ("init.b".to_string(), self.init_b),
            ("dec.w".to_string(), self.dec.w),
            ("dec.u".to_string(), self.dec.u),
            ("dec.b".to_string(), self.dec.b),
            ("att.w".to_string(), self.att_w),
            ("att.u".to_string(), self.att_u),
            ("att.b".to_string(), self.att_b),
            ("att.v".to_string(), self.att_v),
            ("out.w".to_string(), self.out_w),
            ("out.b".to_string(), self.out_b),
        ]);
        out
    }
}

/// Init scale per tensor: biases share the fan-in of the matrix they shift.
fn fan_in(layout: &Layout, name: &str, m: Mat) -> usize {
    match name {
        "emb" => m.cols,
        "init.b" => layout.init_w.cols,
        "att.b" | "att.v" => m.rows,
        "out.b" => layout.out_w.cols,
        n if n.ends_with(".b") => {
            // GRU bias: fan-in of its input matrix.
            let prefix = &n[..n.len() - 2];
            layout
                .tensors()
                .into_iter()
                .find(|(k, _)| k == &format!("{prefix}.w"))
                .map(|(_, w)| w.cols)
                .unwrap_or(1)
        }
        _ => m.cols,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationModel {
    config: ModelConfig,
    params: Vec<f64>,
    layout: Layout,
}

impl TranslationModel {
    /// Fresh model with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = rng::stream(config.seed, "model/init");
        for (name, m) in layout.tensors() {
            let bound = 1.0 / (fan_in(&layout, &name, m) as f64).sqrt();
            for p in &mut params[m.range()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(TranslationModel {
            config,
            params,
            layout,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Incompatible(format!(
                "config expects {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("parameters must be finite".into()));
        }
        Ok(TranslationModel {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn tier(&self) -> Tier {
        self.config.tier
    }

    /// Copy with one coordinate replaced, for probes and finite differences.
    pub fn with_param(&self, index: usize, value: f64) -> TranslationModel {
        let mut m = self.clone();
        m.params[index] = value;
        m
    }

    pub(crate) fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            Some(id) => Err(Error::Input(format!(
                "token id {id} out of range for vocabulary of {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }
}

/// Euclidean distance between two same-shaped parameter vectors.
pub fn param_distance(a: &TranslationModel, b: &TranslationModel) -> Result<f64> {
    if !a.config.same_shape(&b.config) {
        return Err(Error::Incompatible(
            "parameter shapes differ between the two models".into(),
        ));
    }
    Ok(a.params
        .iter()
        .zip(&b.params)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Distance after zero-padding each named tensor to the larger of the two
/// shapes. Equals [`param_distance`] when shapes match, and stays defined
/// across tiers.
pub fn padded_distance(a: &TranslationModel, b: &TranslationModel) -> f64 {
    use std::collections::BTreeMap;
    let ta: BTreeMap<String, Mat> = a.layout.tensors().into_iter().collect();
    let tb: BTreeMap<String, Mat> = b.layout.tensors().into_iter().collect();
    let get = |params: &[f64], m: Option<&Mat>, r: usize, c: usize| -> f64 {
        match m {
            Some(m) if r < m.rows && c < m.cols => params[m.off + r * m.cols + c],
            _ => 0.0,
        }
    };
    let mut names: Vec<&String> = ta.keys().chain(tb.keys()).collect();
    names.sort();
    names.dedup();
    let mut sum = 0.0;
    for name in names {
        let (ma, mb) = (ta.get(name), tb.get(name));
        let rows = ma.map_or(0, |m| m.rows).max(mb.map_or(0, |m| m.rows));
        let cols = ma.map_or(0, |m| m.cols).max(mb.map_or(0, |m| m.cols));
        for r in 0..rows {
            for c in 0..cols {
                let d = get(&a.params, ma, r, c) - get(&b.params, mb, r, c);
                sum += d * d;
            }
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            embed_dim: 3,
            hidden_dim: 4,
            attn_dim: 5,
            num_layers: 1,
            tier: Tier::Small,
            max_decode_len: 6,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = TranslationModel::init(tiny(3)).unwrap();
        let b = TranslationModel::init(tiny(3)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = TranslationModel::init(tiny(4)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn layout_is_contiguous() {
        let mut cfg = tiny(0);
        cfg.num_layers = 2;
        let layout = Layout::new(&cfg);
        let mut next = 0;
        for (_, m) in layout.tensors() {
            assert_eq!(m.off, next);
            next += m.len();
        }
        assert_eq!(next, layout.total);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = TranslationModel::init(ModelConfig::preset(Tier::Large, 40, 1)).unwrap();
        let l = m.layout();
        let bound = 1.0 / (l.dec.w.cols as f64).sqrt();
        assert!(m.params()[l.dec.w.range()].iter().all(|p| p.abs() < bound));
        let mean: f64 = m.params()[l.dec.w.range()].iter().sum::<f64>() / l.dec.w.len() as f64;
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn distance_basics() {
        let a = TranslationModel::init(tiny(1)).unwrap();
        assert_eq!(param_distance(&a, &a).unwrap(), 0.0);
        let b = a.with_param(7, a.params()[7] + 3.0);
        assert!((param_distance(&a, &b).unwrap() - 3.0).abs() < 1e-12);
        assert!((padded_distance(&a, &b) - 3.0).abs() < 1e-12);

        let big = TranslationModel::init(ModelConfig::preset(Tier::Large, 9, 1)).unwrap();
        assert!(matches!(param_distance(&a, &big), Err(Error::Incompatible(_))));
        assert!(padded_distance(&a, &big) > 0.0);
    }

    #[test]
    fn from_params_rejects_bad_vectors() {
        let cfg = tiny(0);
        let n = cfg.param_count();
        assert!(TranslationModel::from_params(cfg, vec![0.0; n - 1]).is_err());
        let mut v = vec![0.0; n];
        v[0] = f64::NAN;
        assert!(TranslationModel::from_params(cfg, v).is_err());
    }
}
