//! Forward pass with cached activations and the matching manual backward pass.

use rand::Rng as _;

use super::linalg::{add_into, matvec, matvec_t_acc, outer_acc, sigmoid};
use super::{GruLayout, TranslationModel};
use crate::rng::Rng;

/// Inverted dropout on embedding lookups and on the output-layer input.
pub(crate) struct Dropout<'a> {
    pub(crate) rate: f64,
    pub(crate) rng: &'a mut Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }
}

fn apply(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

pub(crate) struct GruCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// Candidate-gate recurrent term `U_n h_prev`, before the reset gate.
    uh_n: Vec<f64>,
}

fn gru_forward(p: &[f64], g: &GruLayout, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
    let h = g.hidden;
    let mut gx = vec![0.0; 3 * h];
    matvec(p, g.w, x, &mut gx);
    add_into(&mut gx, &p[g.b.range()]);
    let mut gh = vec![0.0; 3 * h];
    matvec(p, g.u, h_prev, &mut gh);

    let mut z = vec![0.0; h];
    let mut r = vec![0.0; h];
    let mut n = vec![0.0; h];
    let mut out = vec![0.0; h];
    for i in 0..h {
        z[i] = sigmoid(gx[i] + gh[i]);
        r[i] = sigmoid(gx[h + i] + gh[h + i]);
        n[i] = (gx[2 * h + i] + r[i] * gh[2 * h + i]).tanh();
        out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
    let cache = GruCache {
        h_prev: h_prev.to_vec(),
        z,
        r,
        n,
        uh_n: gh[2 * h..].to_vec(),
    };
    (out, cache)
}

/// Accumulates parameter gradients into `grad` and input gradients into `dx`;
/// returns the gradient with respect to the previous hidden state.
fn gru_backward(
    p: &[f64],
    g: &GruLayout,
    grad: &mut [f64],
    x: &[f64],
    c: &GruCache,
    dh: &[f64],
    dx: &mut [f64],
) -> Vec<f64> {
    let h = g.hidden;
    let mut dgx = vec![0.0; 3 * h];
    let mut dgh = vec![0.0; 3 * h];
    let mut dh_prev = vec![0.0; h];
    for i in 0..h {
        let (z, r, n) = (c.z[i], c.r[i], c.n[i]);
        let dn_pre = dh[i] * (1.0 - z) * (1.0 - n * n);
        let dz_pre = dh[i] * (c.h_prev[i] - n) * z * (1.0 - z);
        let dr_pre = dn_pre * c.uh_n[i] * r * (1.0 - r);
        dh_prev[i] = dh[i] * z;
        dgx[i] = dz_pre;
        dgx[h + i] = dr_pre;
        dgx[2 * h + i] = dn_pre;
        dgh[i] = dz_pre;
        dgh[h + i] = dr_pre;
        dgh[2 * h + i] = dn_pre * r;
    }
    outer_acc(grad, g.w, &dgx, x);
    add_into(&mut grad[g.b.range()], &dgx);
    matvec_t_acc(p, g.w, &dgx, dx);
    outer_acc(grad, g.u, &dgh, &c.h_prev);
    matvec_t_acc(p, g.u, &dgh, &mut dh_prev);
    dh_prev
}

struct EncLayer {
    inputs: Vec<Vec<f64>>,
    fwd: Vec<GruCache>,
    bwd: Vec<GruCache>,
}

/// Encoder output plus everything the decoder and the backward pass need.
pub(crate) struct Encoded {
    tokens: Vec<u32>,
    emb_masks: Vec<Option<Vec<f64>>>,
    layers: Vec<EncLayer>,
    /// Top-layer annotations `[forward; backward]`, one per source position.
    pub(crate) annotations: Vec<Vec<f64>>,
    /// `U_a` applied to each annotation.
    keys: Vec<Vec<f64>>,
    init_in: Vec<f64>,
    pub(crate) s0: Vec<f64>,
}

pub(crate) fn encode(model: &TranslationModel, src: &[u32]) -> Encoded {
    encode_with(model, src, None)
}

fn encode_with(model: &TranslationModel, src: &[u32], mut drop: Option<&mut Dropout>) -> Encoded {
    let p = model.params();
    let l = model.layout();
    let h = model.config().hidden_dim;
    let len = src.len();
    debug_assert!(len > 0);

    let e = model.config().embed_dim;
    let emb_masks: Vec<Option<Vec<f64>>> = src.iter().map(|_| drop.as_mut().map(|d| d.mask(e))).collect();
    let mut inputs: Vec<Vec<f64>> = src
        .iter()
        .zip(&emb_masks)
        .map(|(&t, m)| {
            let mut x = l.emb.row(p, t as usize).to_vec();
            apply(&mut x, m);
            x
        })
        .collect();
    let mut layers = Vec::with_capacity(l.enc.len());
    let mut annotations = Vec::new();
    for [gf, gb] in &l.enc {
        let mut fwd = Vec::with_capacity(len);
        let mut f_states = Vec::with_capacity(len);
        let mut state = vec![0.0; h];
        for x in &inputs {
            let (next, cache) = gru_forward(p, gf, x, &state);
            fwd.push(cache);
            f_states.push(next.clone());
            state = next;
        }
        let mut bwd: Vec<Option<GruCache>> = (0..len).map(|_| None).collect();
        let mut b_states = vec![Vec::new(); len];
        let mut state = vec![0.0; h];
        for i in (0..len).rev() {
            let (next, cache) = gru_forward(p, gb, &inputs[i], &state);
            bwd[i] = Some(cache);
            b_states[i] = next.clone();
            state = next;
        }
        annotations = f_states
            .into_iter()
            .zip(b_states)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
        layers.push(EncLayer {
            inputs,
            fwd,
            bwd: bwd.into_iter().map(Option::unwrap).collect(),
        });
        inputs = annotations.clone();
    }

    let a = model.config().attn_dim;
    let keys = annotations
        .iter()
        .map(|ann| {
            let mut k = vec![0.0; a];
            matvec(p, l.att_u, ann, &mut k);
            k
        })
        .collect();

    let mut init_in = annotations[len - 1][..h].to_vec();
    init_in.extend_from_slice(&annotations[0][h..]);
    let mut s0 = vec![0.0; h];
    matvec(p, l.init_w, &init_in, &mut s0);
    for (s, b) in s0.iter_mut().zip(&p[l.init_b.range()]) {
        *s = (*s + b).tanh();
    }

    Encoded {
        tokens: src.to_vec(),
        emb_masks,
        layers,
        annotations,
        keys,
        init_in,
        s0,
    }
}

pub(crate) struct Step {
    token: u32,
    emb_mask: Option<Vec<f64>>,
    o_mask: Option<Vec<f64>>,
    x: Vec<f64>,
    gru: GruCache,
    pub(crate) s: Vec<f64>,
    u: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    pub(crate) c: Vec<f64>,
    o: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

/// One decoder step consuming `token` (the previous output, or BOS).
pub(crate) fn dec_step(model: &TranslationModel, enc: &Encoded, s_prev: &[f64], c_prev: &[f64], token: u32) -> Step {
    dec_step_with(model, enc, s_prev, c_prev, token, None)
}

fn dec_step_with(
    model: &TranslationModel,
    enc: &Encoded,
    s_prev: &[f64],
    c_prev: &[f64],
    token: u32,
    drop: Option<&mut Dropout>,
) -> Step {
    let p = model.params();
    let l = model.layout();
    let cfg = model.config();
    let (h, a) = (cfg.hidden_dim, cfg.attn_dim);

    let (emb_mask, o_mask) = match drop {
        Some(d) => (Some(d.mask(cfg.embed_dim)), Some(d.mask(3 * h))),
        None => (None, None),
    };
    let mut x = l.emb.row(p, token as usize).to_vec();
    apply(&mut x, &emb_mask);
    x.extend_from_slice(c_prev);
    let (s, gru) = gru_forward(p, &l.dec, &x, s_prev);

    let mut q = vec![0.0; a];
    matvec(p, l.att_w, &s, &mut q);
    add_into(&mut q, &p[l.att_b.range()]);
    let v = &p[l.att_v.range()];
    let mut u = Vec::with_capacity(enc.keys.len());
    let mut scores = Vec::with_capacity(enc.keys.len());
    for key in &enc.keys {
        let ui: Vec<f64> = q.iter().zip(key).map(|(qq, kk)| (qq + kk).tanh()).collect();
        scores.push(super::linalg::dot(v, &ui));
        u.push(ui);
    }
    let alpha = super::linalg::softmax(&scores);
    let mut c = vec![0.0; 2 * h];
    for (w, ann) in alpha.iter().zip(&enc.annotations) {
        for (ci, ai) in c.iter_mut().zip(ann) {
            *ci += w * ai;
        }
    }

    let mut o = s.clone();
    o.extend_from_slice(&c);
    apply(&mut o, &o_mask);
    let mut logits = vec![0.0; cfg.vocab_size];
    matvec(p, l.out_w, &o, &mut logits);
    add_into(&mut logits, &p[l.out_b.range()]);

    Step {
        token,
        emb_mask,
        o_mask,
        x,
        gru,
        s,
        u,
        alpha,
        c,
        o,
        logits,
    }
}

/// Teacher-forced pass: `dec_inputs[t]` is fed at step `t`, producing the
/// logits for output position `t`.
pub(crate) struct Trace {
    enc: Encoded,
    pub(crate) steps: Vec<Step>,
}

pub(crate) fn run(model: &TranslationModel, src: &[u32], dec_inputs: &[u32], mut drop: Option<&mut Dropout>) -> Trace {
    let enc = encode_with(model, src, drop.as_deref_mut());
    let two_h = 2 * model.config().hidden_dim;
    let mut steps: Vec<Step> = Vec::with_capacity(dec_inputs.len());
    for &tok in dec_inputs {
        let d = drop.as_deref_mut();
        let step = match steps.last() {
            Some(prev) => dec_step_with(model, &enc, &prev.s, &prev.c, tok, d),
            None => dec_step_with(model, &enc, &enc.s0, &vec![0.0; two_h], tok, d),
        };
        steps.push(step);
    }
    Trace { enc, steps }
}

/// Backpropagate per-step logit gradients, accumulating into `grad`.
pub(crate) fn backward(model: &TranslationModel, trace: &Trace, dlogits: &[Vec<f64>], grad: &mut [f64]) {
    let p = model.params();
    let l = model.layout();
    let cfg = model.config();
    let (h, e) = (cfg.hidden_dim, cfg.embed_dim);
    let enc = &trace.enc;
    let len = enc.annotations.len();
    debug_assert_eq!(dlogits.len(), trace.steps.len());

    let mut d_ann = vec![vec![0.0; 2 * h]; len];
    let mut d_keys = vec![vec![0.0; cfg.attn_dim]; len];
    let mut ds_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; 2 * h];
    let v = &p[l.att_v.range()];

    for (step, dl) in trace.steps.iter().zip(dlogits).rev() {
        outer_acc(grad, l.out_w, dl, &step.o);
        add_into(&mut grad[l.out_b.range()], dl);
        let mut d_o = vec![0.0; 3 * h];
        matvec_t_acc(p, l.out_w, dl, &mut d_o);
        apply(&mut d_o, &step.o_mask);

        let mut ds = ds_carry;
        add_into(&mut ds, &d_o[..h]);
        let mut dc = dc_carry;
        add_into(&mut dc, &d_o[h..]);

        // Context = sum_i alpha_i ann_i.
        let d_alpha: Vec<f64> = enc.annotations.iter().map(|ann| super::linalg::dot(&dc, ann)).collect();
        let mean: f64 = step.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let mut dq = vec![0.0; cfg.attn_dim];
        for i in 0..len {
            let w = step.alpha[i];
            for (da, c) in d_ann[i].iter_mut().zip(&dc) {
                *da += w * c;
            }
            let de = w * (d_alpha[i] - mean);
            if de == 0.0 {
                continue;
            }
            let dv = &mut grad[l.att_v.range()];
            for j in 0..cfg.attn_dim {
                let uij = step.u[i][j];
                dv[j] += de * uij;
                let dpre = de * v[j] * (1.0 - uij * uij);
                dq[j] += dpre;
                d_keys[i][j] += dpre;
            }
        }
        outer_acc(grad, l.att_w, &dq, &step.s);
        add_into(&mut grad[l.att_b.range()], &dq);
        matvec_t_acc(p, l.att_w, &dq, &mut ds);

        let mut dx = vec![0.0; e + 2 * h];
        ds_carry = gru_backward(p, &l.dec, grad, &step.x, &step.gru, &ds, &mut dx);
        let emb_row = l.emb.off + step.token as usize * e;
        apply(&mut dx[..e], &step.emb_mask);
        add_into(&mut grad[emb_row..emb_row + e], &dx[..e]);
        dc_carry = dx[e..].to_vec();
    }

    // s0 = tanh(W_init [f_last; b_first] + b_init); the initial context is constant.
    let d_pre: Vec<f64> = ds_carry.iter().zip(&enc.s0).map(|(d, s)| d * (1.0 - s * s)).collect();
    outer_acc(grad, l.init_w, &d_pre, &enc.init_in);
    add_into(&mut grad[l.init_b.range()], &d_pre);
    let mut d_init = vec![0.0; 2 * h];
    matvec_t_acc(p, l.init_w, &d_pre, &mut d_init);
    add_into(&mut d_ann[len - 1][..h], &d_init[..h]);
    add_into(&mut d_ann[0][h..], &d_init[h..]);

    for i in 0..len {
        outer_acc(grad, l.att_u, &d_keys[i], &enc.annotations[i]);
        matvec_t_acc(p, l.att_u, &d_keys[i], &mut d_ann[i]);
    }

    // Encoder layers, top down.
    let mut d_out = d_ann;
    for (layer, [gf, gb]) in enc.layers.iter().zip(&l.enc).rev() {
        let in_dim = gf.input;
        let mut d_in = vec![vec![0.0; in_dim]; len];
        let mut carry = vec![0.0; h];
        for i in (0..len).rev() {
            let mut dh = carry;
            add_into(&mut dh, &d_out[i][..h]);
            carry = gru_backward(p, gf, grad, &layer.inputs[i], &layer.fwd[i], &dh, &mut d_in[i]);
        }
        let mut carry = vec![0.0; h];
        for i in 0..len {
            let mut dh = carry;
            add_into(&mut dh, &d_out[i][h..]);
            carry = gru_backward(p, gb, grad, &layer.inputs[i], &layer.bwd[i], &dh, &mut d_in[i]);
        }
        d_out = d_in;
    }
    for ((&tok, d), m) in enc.tokens.iter().zip(&mut d_out).zip(&enc.emb_masks) {
        apply(d, m);
        let row = l.emb.off + tok as usize * e;
        add_into(&mut grad[row..row + e], d);
    }
}
