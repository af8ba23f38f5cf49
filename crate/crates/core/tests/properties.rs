//! Property tests for the invariants each module promises.

use std::collections::HashSet;

use distill_mt::corpus::{self, gen_toy_corpus, Corpus, Oracle, ParallelPair, Sentence, ToyKind, ToyLanguageSpec};
use distill_mt::diagnostics::{estimate_delta_synth, update_epsilon, ErrorTrace};
use distill_mt::eval::{chrf, chrf_corpus, chrf_pooled, ChrfParams};
use distill_mt::model::linalg::softmax;
use distill_mt::model::{
    decode_with_topk, forward, greedy_decode, param_distance, read_checkpoint, write_checkpoint, ModelConfig, Tier,
    TranslationModel,
};
use distill_mt::tokenizer::{assemble_prompt, build_vocab, PromptContext, TokenMode, TokenSeq, Vocab, BOS, SEP};
use distill_mt::train::{ce_loss, kd_loss, train_epochs, Example, LossMode, TrainConfig};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    "[a-f]{1,3}"
}

fn sentence() -> impl Strategy<Value = Sentence> {
    prop::collection::vec(word(), 1..6).prop_map(|w| Sentence::new(w.join(" ")).unwrap())
}

fn pair() -> impl Strategy<Value = ParallelPair> {
    (sentence(), sentence()).prop_map(|(s, t)| ParallelPair::human(s, t))
}

fn small_model(vocab: usize, seed: u64) -> TranslationModel {
    let cfg = ModelConfig {
        embed_dim: 6,
        hidden_dim: 8,
        attn_dim: 5,
        max_decode_len: 8,
        ..ModelConfig::preset(Tier::Small, vocab, seed)
    };
    TranslationModel::init(cfg).unwrap()
}

/// Every word of length 1..=2 over a..f, so word-mode text from `sentence`
/// restricted to short words is always covered.
fn word_vocab() -> Vocab {
    let words: Vec<String> = ('a'..='f')
        .flat_map(|a| std::iter::once(a.to_string()).chain(('a'..='f').map(move |b| format!("{a}{b}"))))
        .collect();
    let pairs = vec![ParallelPair::human(
        Sentence::new(words.join(" ")).unwrap(),
        Sentence::new("a").unwrap(),
    )];
    build_vocab(&Corpus::new(pairs, "t", 0).unwrap(), TokenMode::Word, 100).unwrap()
}

fn prompt_ids(len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(5u32..12, len..=len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // ---- corpus ---------------------------------------------------------

    #[test]
    fn save_load_is_exact_inverse(pairs in prop::collection::vec(pair(), 1..20), seed in any::<u64>()) {
        let c = Corpus::new(pairs, "toy-tag", seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        corpus::save(&c, &path).unwrap();
        prop_assert_eq!(corpus::load(&path).unwrap(), c);
    }

    #[test]
    fn sample_keeps_pairs_whole(pairs in prop::collection::vec(pair(), 1..30), n in 1usize..30, seed in any::<u64>()) {
        let c = Corpus::new(pairs, "t", 0).unwrap();
        let n = n.min(c.len());
        let s = corpus::sample(&c, n, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        // Multiset inclusion: every sampled pair is one of the originals.
        let mut pool: Vec<&ParallelPair> = c.pairs().iter().collect();
        for p in s.pairs() {
            let i = pool.iter().position(|q| *q == p);
            prop_assert!(i.is_some());
            pool.swap_remove(i.unwrap());
        }
        prop_assert_eq!(corpus::sample(&c, n, seed).unwrap(), s);
    }

    #[test]
    fn oracle_is_total_on_generated_sentences(seed in any::<u64>(), kind in prop::sample::select(vec![ToyKind::WordReversal, ToyKind::SubstitutionCipher])) {
        let spec = ToyLanguageSpec::new(kind, "abcdef", 5, seed);
        let toy = gen_toy_corpus(&spec, 50).unwrap();
        for s in &toy.monolingual {
            let t = toy.oracle.translate(s);
            prop_assert!(Sentence::new(t.as_str()).is_ok());
        }
        let again = gen_toy_corpus(&spec, 50).unwrap();
        prop_assert_eq!(again.monolingual, toy.monolingual);
    }

    // ---- tokenizer ------------------------------------------------------

    #[test]
    fn encode_decode_roundtrip(words in prop::collection::vec("[a-f]{1,2}", 1..8)) {
        let vocab = word_vocab();
        let text = words.join(" ");
        prop_assert_eq!(vocab.decode(vocab.encode(&text).ids()), text);
    }

    #[test]
    fn prompts_are_injective_in_the_query(ex in prop::collection::vec(pair(), 0..3), a in prop::collection::vec("[a-f]{1,2}", 1..5), b in prop::collection::vec("[a-f]{1,2}", 1..5)) {
        prop_assume!(a != b);
        let vocab = word_vocab();
        let shots = ex.len();
        let pa = assemble_prompt(&ex, &Sentence::new(a.join(" ")).unwrap(), shots, &vocab).unwrap();
        let pb = assemble_prompt(&ex, &Sentence::new(b.join(" ")).unwrap(), shots, &vocab).unwrap();
        prop_assert_ne!(pa, pb);
    }

    #[test]
    fn prompt_length_is_affine_in_shots(ex in pair(), q in sentence()) {
        let vocab = word_vocab();
        let per_shot = vocab.encode(ex.source.as_str()).len() + vocab.encode(ex.target.as_str()).len() + 2;
        let base = assemble_prompt(&[], &q, 0, &vocab).unwrap().len();
        for shots in [1usize, 2, 4] {
            let examples = vec![ex.clone(); shots];
            let len = assemble_prompt(&examples, &q, shots, &vocab).unwrap().len();
            prop_assert_eq!(len, base + shots * per_shot);
        }
    }

    // ---- model ----------------------------------------------------------

    #[test]
    fn softmax_is_a_strictly_positive_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn topk_is_a_prefix_of_the_sorted_distribution(seed in 0u64..1000, src in prompt_ids(4), k in 1usize..12) {
        let model = small_model(12, seed);
        let src = TokenSeq([vec![BOS], src, vec![SEP]].concat());
        let record = decode_with_topk(&model, &Sentence::new("x").unwrap(), &src, k, 6).unwrap();
        for (t, st) in record.soft.iter().enumerate() {
            let probs = forward(&model, &src, &TokenSeq(record.generated.ids()[..t].to_vec())).unwrap();
            let mut all: Vec<(u32, f64)> = probs.iter().enumerate().map(|(i, &p)| (i as u32, p)).collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            prop_assert_eq!(&st.entries[..], &all[..k]);
            prop_assert!(st.mass() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn greedy_decoding_is_deterministic(seed in 0u64..1000, src in prompt_ids(5)) {
        let model = small_model(12, seed);
        let src = TokenSeq([vec![BOS], src, vec![SEP]].concat());
        prop_assert_eq!(greedy_decode(&model, &src, 8).unwrap(), greedy_decode(&model, &src, 8).unwrap());
    }

    #[test]
    fn param_distance_is_a_metric(a in 0u64..1000, b in 0u64..1000, c in 0u64..1000) {
        let (x, y, z) = (small_model(10, a), small_model(10, b), small_model(10, c));
        let d = |p: &TranslationModel, q: &TranslationModel| param_distance(p, q).unwrap();
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact(seed in any::<u64>()) {
        let m = small_model(9, seed);
        let bytes = write_checkpoint(&m);
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert_eq!(write_checkpoint(&back), bytes);
        prop_assert_eq!(back, m);
    }

    // ---- train ----------------------------------------------------------

    #[test]
    fn kd_loss_is_nonnegative_and_zero_on_the_teacher(t_seed in 0u64..500, s_seed in 0u64..500, src in prompt_ids(3), k in 1usize..12) {
        let teacher = small_model(12, t_seed);
        let student = small_model(12, s_seed);
        let src = TokenSeq([vec![BOS], src, vec![SEP]].concat());
        let record = decode_with_topk(&teacher, &Sentence::new("x").unwrap(), &src, k, 6).unwrap();
        let ex = Example::from_record(&record, &word_vocab(), &PromptContext::zero_shot()).unwrap();
        let ex = Example { prompt: src.clone(), ..ex };
        let (self_loss, _) = kd_loss(&teacher, &ex, 1e-8).unwrap();
        prop_assert!(self_loss.abs() <= 1e-12, "self loss {self_loss}");
        let (other, _) = kd_loss(&student, &ex, 1e-8).unwrap();
        prop_assert!(other >= -1e-12);
    }

    #[test]
    fn one_small_step_lowers_ce_loss(seed in 0u64..500, src in prompt_ids(3), tgt in prompt_ids(3)) {
        let model = small_model(12, seed);
        let mut target = tgt;
        target.push(distill_mt::tokenizer::EOS);
        let ex = Example {
            prompt: TokenSeq([vec![BOS], src, vec![SEP]].concat()),
            target: distill_mt::train::Target::Tokens(target),
        };
        let (before, grad) = ce_loss(&model, &ex).unwrap();
        let params: Vec<f64> = model.params().iter().zip(&grad).map(|(p, g)| p - 1e-3 * g).collect();
        let stepped = TranslationModel::from_params(*model.config(), params).unwrap();
        let (after, _) = ce_loss(&stepped, &ex).unwrap();
        prop_assert!(after < before, "{after} >= {before}");
    }

    // ---- eval -----------------------------------------------------------

    #[test]
    fn chrf_range_identity_and_whitespace(h in "[a-e ]{0,30}", r in "[a-e]{1,30}") {
        let p = ChrfParams::default();
        let s = chrf(&h, &r, &p).unwrap();
        prop_assert!((0.0..=100.0).contains(&s));
        prop_assert_eq!(chrf(&r, &r, &p).unwrap(), 100.0);
        prop_assert_eq!(chrf(&format!("  {h}\t"), &format!(" {r} "), &p).unwrap(), s);
    }

    #[test]
    fn losing_ngrams_lowers_chrf(r in "[a-e]{2,30}", i in any::<prop::sample::Index>()) {
        // Replacing one character by a symbol absent from the reference
        // strictly reduces the shared n-grams.
        let mut chars: Vec<char> = r.chars().collect();
        let at = i.index(chars.len());
        chars[at] = 'z';
        let worse: String = chars.into_iter().collect();
        let p = ChrfParams::default();
        prop_assert!(chrf(&worse, &r, &p).unwrap() < chrf(&r, &r, &p).unwrap());
    }

    #[test]
    fn pooled_chrf_is_order_invariant(pairs in prop::collection::vec(("[a-e]{1,12}", "[a-e]{1,12}"), 1..12), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let p = ChrfParams::default();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut distill_mt::rng::stream(seed, "test"));
        let a = chrf_pooled(&pairs, &p).unwrap();
        let b = chrf_pooled(&shuffled, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    // ---- diagnostics ----------------------------------------------------

    #[test]
    fn epsilon_is_monotone_and_linear_in_gamma(deltas in prop::collection::vec((0.0f64..1.0, 0.0f64..2.0), 1..6), gamma in 0.0f64..3.0) {
        let run = |g: f64| {
            let mut t = ErrorTrace::new(g).unwrap();
            for (i, (s, k)) in deltas.iter().enumerate() {
                t = update_epsilon(&t, i as u32 + 1, Some(*s), Some(*k)).unwrap();
            }
            t
        };
        let t = run(gamma);
        let unit = run(1.0);
        let mut prev = 0.0;
        for (r, u) in t.records.iter().zip(&unit.records) {
            prop_assert!(r.epsilon >= prev);
            prev = r.epsilon;
            prop_assert!((r.epsilon - gamma * u.epsilon).abs() <= 1e-9 * (1.0 + u.epsilon));
        }
        prop_assert_eq!(run(gamma), t);
    }

    #[test]
    fn delta_synth_bounds(seed in 0u64..200) {
        let spec = ToyLanguageSpec::new(ToyKind::WordReversal, "abcd", 4, seed);
        let toy = gen_toy_corpus(&spec, 20).unwrap();
        let oracle = Oracle::new(&spec).unwrap();
        let perfect: Vec<String> = toy.monolingual.iter().map(|s| oracle.translate(s).as_str().to_string()).collect();
        let p = ChrfParams::default();
        prop_assert_eq!(estimate_delta_synth(&toy.monolingual, &perfect, &oracle, &p).unwrap(), 0.0);
        let junk = vec![String::new(); toy.monolingual.len()];
        let d = estimate_delta_synth(&toy.monolingual, &junk, &oracle, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, 1.0);
    }
}

#[test]
fn single_sentence_corpus_chrf_equals_sentence_chrf() {
    let vocab = word_vocab();
    let model = small_model(vocab.len(), 3);
    let pair = ParallelPair::human(Sentence::new("ab c").unwrap(), Sentence::new("c ab").unwrap());
    let test = Corpus::new(vec![pair.clone()], "t", 0).unwrap();
    let ctx = PromptContext::zero_shot();
    let p = ChrfParams::default();
    let corpus_score = chrf_corpus(&model, &test, &ctx, &vocab, &p).unwrap().chrf;
    let prompt = ctx.prompt(&pair.source, &vocab).unwrap();
    let hyp = vocab.decode(greedy_decode(&model, &prompt, model.config().max_decode_len).unwrap().tokens.ids());
    assert_eq!(corpus_score, chrf(&hyp, pair.target.as_str(), &p).unwrap());
}

#[test]
fn training_does_not_touch_its_input() {
    let model = small_model(12, 8);
    let snapshot = model.clone();
    let ex = Example {
        prompt: TokenSeq(vec![BOS, 6, 7, SEP]),
        target: distill_mt::train::Target::Tokens(vec![7, 6, distill_mt::tokenizer::EOS]),
    };
    let cfg = TrainConfig {
        epochs: 3,
        dropout: 0.2,
        ..TrainConfig::default()
    };
    let (a, _) = train_epochs(&model, std::slice::from_ref(&ex), LossMode::Ce, &cfg).unwrap();
    let (b, _) = train_epochs(&model, &[ex], LossMode::Ce, &cfg).unwrap();
    assert_eq!(model, snapshot);
    assert_eq!(a, b);
    let distinct: HashSet<Vec<u64>> = [&a, &model].iter().map(|m| m.params().iter().map(|x| x.to_bits()).collect()).collect();
    assert_eq!(distinct.len(), 2);
}
