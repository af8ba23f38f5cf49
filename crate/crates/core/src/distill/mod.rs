//! The distillation cycle: a teacher translates monolingual text into a
//! synthetic parallel corpus, students are trained on it, and the same-size
//! student becomes the next cycle's teacher.

mod run_dir;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use run_dir::{load_synthetic, save_synthetic, RunDir};

use crate::corpus::{Corpus, Oracle, Origin, ParallelPair, Sentence};
use crate::diagnostics::{
    estimate_delta_kl, estimate_delta_synth, track_init_distance, track_init_distance_padded, update_epsilon,
    ErrorTrace,
};
use crate::error::{Error, Result};
use crate::eval::{chrf_corpus, ChrfParams, IterationReport, ModelRole, SyntheticSummary, SHOT_SETTINGS};
use crate::model::{checkpoint_digest, decode_with_topk, greedy_decode, ModelConfig, SoftRecord, Tier, TranslationModel};
use crate::rng;
use crate::tokenizer::{PromptContext, Vocab};
use crate::train::{train_epochs, Example, LossMode, LossReport, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sequence-level: cross-entropy on teacher outputs.
    Dd,
    /// Soft: KL against the teacher's top-k distributions.
    Sd,
}

impl Mode {
    pub fn loss(self) -> LossMode {
        match self {
            Mode::Dd => LossMode::Ce,
            Mode::Sd => LossMode::Kd,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dd => "DD",
            Mode::Sd => "SD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentTier {
    /// Teacher architecture, initialized from the teacher's weights.
    SameSize,
    /// Smaller architecture, freshly initialized every cycle.
    Smaller,
}

impl StudentTier {
    pub fn role(self) -> ModelRole {
        match self {
            StudentTier::SameSize => ModelRole::SameSize,
            StudentTier::Smaller => ModelRole::Smaller,
        }
    }

    fn label(self) -> &'static str {
        match self {
            StudentTier::SameSize => "same_size",
            StudentTier::Smaller => "smaller",
        }
    }
}

/// Everything that parameterizes one multi-cycle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillPlan {
    pub mode: Mode,
    pub iterations: u32,
    /// Entries recorded per position for soft targets.
    pub k: usize,
    /// Few-shot examples in generation and training prompts.
    pub shots: usize,
    pub teacher_config: ModelConfig,
    /// Architecture of the smaller student; required when it is planned.
    pub smaller_config: Option<ModelConfig>,
    pub students: BTreeSet<StudentTier>,
    pub train: TrainConfig,
    /// Schedule for the smaller student and its baseline; `train` when unset.
    #[serde(default)]
    pub smaller_train: Option<TrainConfig>,
    /// Train on every synthetic corpus so far instead of only the newest.
    #[serde(default)]
    pub accumulate: bool,
    /// Shot settings to score under; empty means the plan's own setting.
    #[serde(default)]
    pub eval_shots: Vec<usize>,
    /// Error-accumulation coefficient; defaults to the learning rate.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub chrf: ChrfParams,
    pub seed: u64,
}

impl DistillPlan {
    /// Three cycles, top-20 soft targets, zero-shot, both students.
    pub fn new(mode: Mode, teacher_config: ModelConfig, seed: u64) -> Self {
        let smaller = ModelConfig::preset(Tier::Small, teacher_config.vocab_size, rng::derive(seed, "plan/smaller"));
        DistillPlan {
            mode,
            iterations: 3,
            k: 20,
            shots: 0,
            teacher_config,
            smaller_config: Some(smaller),
            students: [StudentTier::SameSize, StudentTier::Smaller].into(),
            train: TrainConfig::default(),
            smaller_train: None,
            accumulate: false,
            eval_shots: Vec::new(),
            gamma: None,
            chrf: ChrfParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Plan(m));
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.k == 0 || self.k > self.teacher_config.vocab_size {
            return fail(format!(
                "k must lie in 1..={} (the teacher vocabulary), got {}",
                self.teacher_config.vocab_size, self.k
            ));
        }
        if !SHOT_SETTINGS.contains(&self.shots) {
            return fail(format!("shots must be one of {SHOT_SETTINGS:?}, got {}", self.shots));
        }
        if let Some(s) = self.eval_shots.iter().find(|s| !SHOT_SETTINGS.contains(s)) {
            return fail(format!("evaluation shots must be one of {SHOT_SETTINGS:?}, got {s}"));
        }
        if self.students.is_empty() {
            return fail("at least one student tier is required".into());
        }
        self.teacher_config.validate()?;
        if self.teacher_config.tier != Tier::Large {
            return fail("the teacher must be a large-tier model".into());
        }
        if self.students.contains(&StudentTier::Smaller) {
            let Some(small) = &self.smaller_config else {
                return fail("a smaller student is planned but no smaller_config is given".into());
            };
            small.validate()?;
            if small.tier != Tier::Small || small.vocab_size != self.teacher_config.vocab_size {
                return fail("smaller_config must be small-tier with the teacher's vocabulary".into());
            }
            if small.param_count() >= self.teacher_config.param_count() {
                return fail("the smaller student must have fewer parameters than the teacher".into());
            }
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return fail(format!("gamma must be finite and >= 0, got {g}"));
            }
        }
        self.chrf.validate()?;
        if let Some(t) = &self.smaller_train {
            t.validate()?;
        }
        self.train.validate()
    }

    pub fn eval_shot_settings(&self) -> Vec<usize> {
        if self.eval_shots.is_empty() {
            vec![self.shots]
        } else {
            let mut s = self.eval_shots.clone();
            s.sort_unstable();
            s.dedup();
            s
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.train.learning_rate)
    }

    /// Training schedule for `tier`, seeded for `purpose`.
    fn train_config(&self, tier: StudentTier, purpose: &str) -> TrainConfig {
        let base = match tier {
            StudentTier::SameSize => self.train,
            StudentTier::Smaller => self.smaller_train.unwrap_or(self.train),
        };
        TrainConfig {
            seed: rng::derive(self.seed, purpose),
            ..base
        }
    }
}

/// One teacher output for one monolingual sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticItem {
    pub source: Sentence,
    /// Decoded output; may be empty.
    pub output: String,
    /// Decoding hit the length limit before EOS.
    pub truncated: bool,
    /// Top-k record along the output, when soft targets were captured.
    pub record: Option<SoftRecord>,
}

impl SyntheticItem {
    pub fn is_empty(&self) -> bool {
        self.output.trim().is_empty()
    }

    /// Truncated and empty outputs are kept for accounting but not trained on.
    pub fn usable(&self) -> bool {
        !self.truncated && !self.is_empty()
    }
}

/// The synthetic corpus `D_i` of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    pub iteration: u32,
    pub items: Vec<SyntheticItem>,
}

impl SyntheticSet {
    /// Usable items as parallel pairs tagged with this cycle.
    pub fn pairs(&self) -> Vec<ParallelPair> {
        self.items
            .iter()
            .filter(|it| it.usable())
            .filter_map(|it| {
                Sentence::new(it.output.clone()).ok().map(|target| ParallelPair {
                    source: it.source.clone(),
                    target,
                    origin: Origin::Synthetic(self.iteration),
                })
            })
            .collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &SoftRecord> {
        self.items.iter().filter_map(|it| it.record.as_ref())
    }

    pub fn has_records(&self) -> bool {
        self.items.iter().any(|it| it.record.is_some())
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.items.iter().map(|it| it.source.clone()).collect()
    }

    pub fn outputs(&self) -> Vec<String> {
        self.items.iter().map(|it| it.output.clone()).collect()
    }

    pub fn summary(&self) -> SyntheticSummary {
        SyntheticSummary {
            sentences: self.items.len(),
            usable: self.items.iter().filter(|it| it.usable()).count(),
            truncated: self.items.iter().filter(|it| it.truncated).count(),
            empty: self.items.iter().filter(|it| it.is_empty()).count(),
        }
    }
}

/// Translate every monolingual sentence with the teacher (greedy), one item
/// per sentence in input order. With `capture_soft`, the top-`k` entries are
/// recorded at every emitted position.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic(
    teacher: &TranslationModel,
    monolingual: &[Sentence],
    ctx: &PromptContext,
    vocab: &Vocab,
    k: usize,
    capture_soft: bool,
    iteration: u32,
) -> Result<SyntheticSet> {
    if monolingual.is_empty() {
        return Err(Error::Input("no monolingual sentences to translate".into()));
    }
    if ctx.examples.len() != ctx.shots {
        return Err(Error::Arity {
            expected: ctx.shots,
            actual: ctx.examples.len(),
        });
    }
    let max_len = teacher.config().max_decode_len;
    let items = monolingual
        .iter()
        .map(|source| {
            let prompt = ctx.prompt(source, vocab)?;
            if capture_soft {
                let record = decode_with_topk(teacher, source, &prompt, k, max_len)?;
                Ok(SyntheticItem {
                    source: source.clone(),
                    output: vocab.decode(record.output()),
                    truncated: record.truncated(),
                    record: Some(record),
                })
            } else {
                let d = greedy_decode(teacher, &prompt, max_len)?;
                Ok(SyntheticItem {
                    source: source.clone(),
                    output: vocab.decode(d.tokens.ids()),
                    truncated: !d.finished,
                    record: None,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSet { iteration, items })
}

/// Training examples for `mode` from the usable items of `sets`.
pub fn build_examples(sets: &[&SyntheticSet], mode: Mode, vocab: &Vocab, ctx: &PromptContext) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for set in sets {
        match mode {
            Mode::Dd => {
                for pair in set.pairs() {
                    out.push(Example::from_pair(&pair, vocab, ctx)?);
                }
            }
            Mode::Sd => {
                if !set.has_records() {
                    return Err(Error::Plan(format!(
                        "soft distillation needs top-k records, but synthetic corpus {} has none",
                        set.iteration
                    )));
                }
                for item in set.items.iter().filter(|it| it.usable()) {
                    let record = item.record.as_ref().ok_or_else(|| {
                        Error::Plan(format!("item {:?} lacks a top-k record", item.source.as_str()))
                    })?;
                    out.push(Example::from_record(record, vocab, ctx)?);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledStudent {
    pub model: TranslationModel,
    pub losses: LossReport,
    /// Distance from the teacher at initialization.
    pub init_distance: f64,
}

/// Initialize a student of `tier` and train it on `data`.
pub fn distill_step(
    teacher: &TranslationModel,
    tier: StudentTier,
    smaller_config: Option<&ModelConfig>,
    data: &[Example],
    mode: Mode,
    train_cfg: &TrainConfig,
) -> Result<DistilledStudent> {
    let (init, init_distance) = match tier {
        StudentTier::SameSize => (teacher.clone(), 0.0),
        StudentTier::Smaller => {
            let cfg = smaller_config.ok_or_else(|| Error::Plan("smaller student needs a config".into()))?;
            if cfg.vocab_size != teacher.config().vocab_size {
                return Err(Error::Incompatible(
                    "smaller student vocabulary differs from the teacher's".into(),
                ));
            }
            let init = TranslationModel::init(*cfg)?;
            let d = track_init_distance_padded(teacher, &init);
            (init, d)
        }
    };
    if tier == StudentTier::SameSize {
        debug_assert_eq!(track_init_distance(teacher, &init).ok(), Some(0.0));
    }
    let (model, losses) = train_epochs(&init, data, mode.loss(), train_cfg)?;
    Ok(DistilledStudent {
        model,
        losses,
        init_distance,
    })
}

/// Fixed data a run works from.
#[derive(Debug, Clone, Copy)]
pub struct CycleInputs<'a> {
    pub monolingual: &'a [Sentence],
    /// Held-out pairs for scoring; disjoint from `monolingual`.
    pub eval_set: &'a Corpus,
    pub vocab: &'a Vocab,
    /// Human pairs: the few-shot pool and the small baseline's training set.
    pub human_seed: &'a [ParallelPair],
    /// Exact translator, when the task has one.
    pub oracle: Option<&'a Oracle>,
}

/// Everything produced by one completed cycle.
#[derive(Debug)]
pub struct IterationArtifacts<'a> {
    pub report: &'a IterationReport,
    pub synthetic: &'a SyntheticSet,
    pub same_size: Option<&'a TranslationModel>,
    pub smaller: Option<&'a TranslationModel>,
    pub trace: &'a ErrorTrace,
}

/// Receives every completed cycle before the next one starts.
pub trait CycleObserver {
    /// Returning `Ok(false)` stops the run after this cycle.
    fn iteration_done(&mut self, done: &IterationArtifacts) -> Result<bool>;
}

/// Keeps nothing; runs to completion.
pub struct NoObserver;

impl CycleObserver for NoObserver {
    fn iteration_done(&mut self, _: &IterationArtifacts) -> Result<bool> {
        Ok(true)
    }
}

type Scores = BTreeMap<ModelRole, BTreeMap<usize, f64>>;

/// Progress of a run; enough to continue it.
#[derive(Debug, Clone)]
pub struct CycleState {
    /// Completed cycles.
    pub iteration: u32,
    pub teacher: TranslationModel,
    pub students: BTreeMap<StudentTier, TranslationModel>,
    /// Synthetic corpora kept for training (only the newest unless accumulating).
    pub datasets: Vec<SyntheticSet>,
    pub trace: ErrorTrace,
    pub reports: Vec<IterationReport>,
}

impl CycleState {
    pub fn start(plan: &DistillPlan, base: TranslationModel) -> Result<Self> {
        plan.validate()?;
        if !base.config().same_shape(&plan.teacher_config) || base.tier() != plan.teacher_config.tier {
            return Err(Error::Incompatible(
                "base model does not match the plan's teacher config".into(),
            ));
        }
        Ok(CycleState {
            iteration: 0,
            teacher: base,
            students: BTreeMap::new(),
            datasets: Vec::new(),
            trace: ErrorTrace::new(plan.gamma())?,
            reports: Vec::new(),
        })
    }
}

fn score_model(
    model: &TranslationModel,
    inputs: &CycleInputs,
    shots: &[usize],
    params: &ChrfParams,
) -> Result<BTreeMap<usize, f64>> {
    shots
        .iter()
        .map(|&s| {
            let ctx = PromptContext::from_pool(inputs.human_seed, s)?;
            Ok((s, chrf_corpus(model, inputs.eval_set, &ctx, inputs.vocab, params)?.chrf))
        })
        .collect()
}

/// Scores and losses of the models every report repeats: the base, and the
/// small model trained on the human seed alone.
fn reference_rows(
    plan: &DistillPlan,
    base: &TranslationModel,
    inputs: &CycleInputs,
    ctx: &PromptContext,
) -> Result<(Scores, BTreeMap<ModelRole, LossReport>)> {
    let shots = plan.eval_shot_settings();
    let mut scores = Scores::new();
    let mut losses = BTreeMap::new();
    scores.insert(ModelRole::Base, score_model(base, inputs, &shots, &plan.chrf)?);
    if plan.students.contains(&StudentTier::Smaller) {
        let cfg = plan.smaller_config.expect("validated");
        let data = inputs
            .human_seed
            .iter()
            .map(|p| Example::from_pair(p, inputs.vocab, ctx))
            .collect::<Result<Vec<_>>>()?;
        let init = TranslationModel::init(cfg)?;
        let (small, report) = train_epochs(&init, &data, LossMode::Ce, &plan.train_config(StudentTier::Smaller, "distill/small-baseline"))?;
        scores.insert(ModelRole::SmallBase, score_model(&small, inputs, &shots, &plan.chrf)?);
        losses.insert(ModelRole::SmallBase, report);
    }
    Ok((scores, losses))
}

fn check_inputs(inputs: &CycleInputs) -> Result<()> {
    if inputs.monolingual.is_empty() {
        return Err(Error::Input("no monolingual sentences".into()));
    }
    if inputs.eval_set.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mono: HashSet<&str> = inputs.monolingual.iter().map(Sentence::as_str).collect();
    if let Some(p) = inputs.eval_set.pairs().iter().find(|p| mono.contains(p.source.as_str())) {
        return Err(Error::Input(format!(
            "evaluation source {:?} also appears in the monolingual set",
            p.source.as_str()
        )));
    }
    Ok(())
}

/// Run `plan.iterations` cycles from `base`.
pub fn run_cycle(
    plan: &DistillPlan,
    base: &TranslationModel,
    inputs: &CycleInputs,
    observer: &mut dyn CycleObserver,
) -> Result<Vec<IterationReport>> {
    let state = CycleState::start(plan, base.clone())?;
    Ok(resume_cycle(plan, state, inputs, observer)?.reports)
}

/// Continue a run from `state` until all cycles are done or the observer
/// stops it. A failing cycle is reported as [`Error::Iteration`]; earlier
/// cycles have already been handed to the observer.
pub fn resume_cycle(
    plan: &DistillPlan,
    mut state: CycleState,
    inputs: &CycleInputs,
    observer: &mut dyn CycleObserver,
) -> Result<CycleState> {
    plan.validate()?;
    check_inputs(inputs)?;
    let ctx = PromptContext::from_pool(inputs.human_seed, plan.shots)?;
    let (ref_scores, ref_losses) = match state.reports.first() {
        Some(first) => {
            let keep = |r: &ModelRole| matches!(r, ModelRole::Base | ModelRole::SmallBase);
            (
                first.scores.iter().filter(|(r, _)| keep(r)).map(|(r, s)| (*r, s.clone())).collect(),
                first.losses.iter().filter(|(r, _)| keep(r)).map(|(r, l)| (*r, l.clone())).collect(),
            )
        }
        None => reference_rows(plan, &state.teacher, inputs, &ctx)?,
    };

    while state.iteration < plan.iterations {
        let i = state.iteration + 1;
        let wrap = |e: Error| Error::Iteration {
            iteration: i,
            source: Box::new(e),
        };
        let (next, stop) = one_cycle(plan, &state, inputs, &ctx, &ref_scores, &ref_losses, i, observer).map_err(wrap)?;
        state = next;
        if stop {
            break;
        }
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn one_cycle(
    plan: &DistillPlan,
    state: &CycleState,
    inputs: &CycleInputs,
    ctx: &PromptContext,
    ref_scores: &Scores,
    ref_losses: &BTreeMap<ModelRole, LossReport>,
    i: u32,
    observer: &mut dyn CycleObserver,
) -> Result<(CycleState, bool)> {
    let teacher = &state.teacher;
    let synthetic = generate_synthetic(
        teacher,
        inputs.monolingual,
        ctx,
        inputs.vocab,
        plan.k,
        plan.mode == Mode::Sd,
        i,
    )?;

    let mut datasets = if plan.accumulate { state.datasets.clone() } else { Vec::new() };
    datasets.push(synthetic.clone());
    let sets: Vec<&SyntheticSet> = datasets.iter().collect();
    let data = build_examples(&sets, plan.mode, inputs.vocab, ctx)?;
    if data.is_empty() {
        return Err(Error::Input(
            "the teacher produced no usable synthetic pairs (all truncated or empty)".into(),
        ));
    }

    let mut students = BTreeMap::new();
    let mut losses = ref_losses.clone();
    let mut init_distance = BTreeMap::new();
    for &tier in &plan.students {
        let cfg = plan.train_config(tier, &format!("distill/{i}/{}", tier.label()));
        let out = distill_step(teacher, tier, plan.smaller_config.as_ref(), &data, plan.mode, &cfg)?;
        losses.insert(tier.role(), out.losses);
        init_distance.insert(tier, out.init_distance);
        students.insert(tier, out.model);
    }

    let delta_synth = match inputs.oracle {
        Some(oracle) => Some(estimate_delta_synth(
            &synthetic.sources(),
            &synthetic.outputs(),
            oracle,
            &plan.chrf,
        )?),
        None => None,
    };
    let delta_kl = match plan.mode {
        Mode::Dd => None,
        Mode::Sd => {
            let probe = inputs
                .eval_set
                .pairs()
                .iter()
                .map(|p| {
                    let prompt = ctx.prompt(&p.source, inputs.vocab)?;
                    decode_with_topk(teacher, &p.source, &prompt, plan.k, teacher.config().max_decode_len)
                })
                .collect::<Result<Vec<_>>>()?;
            let student = students
                .get(&StudentTier::SameSize)
                .or_else(|| students.get(&StudentTier::Smaller))
                .expect("students are non-empty");
            Some(estimate_delta_kl(&probe, student, inputs.vocab, ctx, plan.train.smoothing_eps)?)
        }
    };
    let mut trace = update_epsilon(&state.trace, i, delta_synth, delta_kl)?;
    trace.record_init_distance(
        i,
        init_distance.get(&StudentTier::SameSize).copied(),
        init_distance.get(&StudentTier::Smaller).copied(),
    )?;

    let shots = plan.eval_shot_settings();
    let mut scores = ref_scores.clone();
    for (tier, model) in &students {
        scores.insert(tier.role(), score_model(model, inputs, &shots, &plan.chrf)?);
    }
    let same_size = students.get(&StudentTier::SameSize);
    let smaller = students.get(&StudentTier::Smaller);
    let report = IterationReport {
        iteration: i,
        mode: plan.mode,
        task: inputs.eval_set.language_tag().to_string(),
        scores,
        losses,
        errors: trace.records.last().cloned(),
        synthetic: synthetic.summary(),
        teacher_checkpoint: checkpoint_digest(teacher),
        same_size_checkpoint: same_size.map(checkpoint_digest),
        smaller_checkpoint: smaller.map(checkpoint_digest),
    };

    let keep_going = observer.iteration_done(&IterationArtifacts {
        report: &report,
        synthetic: &synthetic,
        same_size,
        smaller,
        trace: &trace,
    })?;

    let mut reports = state.reports.clone();
    reports.push(report);
    let next = CycleState {
        iteration: i,
        teacher: same_size.cloned().unwrap_or_else(|| teacher.clone()),
        students,
        datasets: if plan.accumulate { datasets } else { vec![synthetic] },
        trace,
        reports,
    };
    Ok((next, !keep_going))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn plan() -> DistillPlan {
        DistillPlan::new(Mode::Dd, ModelConfig::preset(Tier::Large, 30, 1), 5)
    }

    #[test]
    fn default_plan_is_valid() {
        let p = plan();
        assert!(p.validate().is_ok());
        assert_eq!((p.iterations, p.k, p.shots), (3, 20, 0));
        assert_eq!(p.eval_shot_settings(), vec![0]);
        assert_eq!(p.gamma(), p.train.learning_rate);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut p = plan();
        p.students.clear();
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        let mut p = plan();
        p.k = 31;
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        let mut p = plan();
        p.shots = 2;
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        let mut p = plan();
        p.iterations = 0;
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        let mut p = plan();
        p.smaller_config = None;
        assert!(matches!(p.validate(), Err(Error::Plan(_))));
        p.students.remove(&StudentTier::Smaller);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn usable_items_exclude_truncated_and_empty() {
        let s = |t: &str| Sentence::new(t).unwrap();
        let item = |out: &str, truncated| SyntheticItem {
            source: s("a b"),
            output: out.into(),
            truncated,
            record: None,
        };
        let set = SyntheticSet {
            iteration: 2,
            items: vec![item("b a", false), item("", false), item("b a b", true)],
        };
        let summary = set.summary();
        assert_eq!((summary.sentences, summary.usable, summary.truncated, summary.empty), (3, 1, 1, 1));
        let pairs = set.pairs();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].origin, Origin::Synthetic(2));
    }
}
