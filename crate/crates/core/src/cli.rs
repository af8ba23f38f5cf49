//! The stages behind the `distill-mt` binary: corpus generation, base
//! training, distillation cycles, evaluation and reporting.
//!
//! Every stage writes into its own output directory, starting with a
//! `manifest.json` that snapshots the config, seeds and inputs and records a
//! status per stage. The manifest is rewritten atomically as stages finish,
//! and any stage can be replayed by passing its manifest back as `--config`.
//! A stage refuses to write into a directory that already holds output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{self, Corpus, CorpusManifest, Oracle, Sentence, ToyLanguageSpec};
use crate::distill::{resume_cycle, CycleInputs, CycleObserver, CycleState, DistillPlan, IterationArtifacts, RunDir};
use crate::error::{Error, Result};
use crate::eval::{chrf_corpus, render_report, score_series, RunReports, SHOT_SETTINGS};
use crate::fsio::{create_dir_all, read_to_string, write_atomic};
use crate::model::{load_checkpoint, write_checkpoint, Tier, TranslationModel};
use crate::tokenizer::{build_vocab, PromptContext, Vocab};
use crate::train::{train_until, Example, LossMode, LossReport};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DISTILL_MT_OUT";

pub const MANIFEST: &str = "manifest.json";

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Config,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    /// Output files, relative to the manifest's directory.
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub updated_at: u64,
    pub stages: Vec<Stage>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, stages: &[String]) -> Self {
        let seeds = [
            ("corpus", config.corpus.seed),
            ("model", config.model.seed),
            ("model_small", config.model.small_seed),
            ("train", config.train.seed),
            ("distill", config.distill.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let t = now();
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seeds,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            started_at: t,
            updated_at: t,
            stages: stages
                .iter()
                .map(|n| Stage {
                    name: n.clone(),
                    status: StageStatus::Pending,
                    detail: None,
                })
                .collect(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(&dir.join(MANIFEST))?)?)
    }

    pub fn write(&mut self, dir: &Path) -> Result<()> {
        self.updated_at = now();
        write_atomic(&dir.join(MANIFEST), (serde_json::to_string_pretty(self)? + "\n").as_bytes())
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn set(&mut self, name: &str, status: StageStatus, detail: Option<String>) {
        match self.stages.iter_mut().find(|s| s.name == name) {
            Some(s) => {
                s.status = status;
                s.detail = detail;
            }
            None => self.stages.push(Stage {
                name: name.into(),
                status,
                detail,
            }),
        }
    }

    pub fn complete(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Complete)
    }
}

/// `explicit`, else `$DISTILL_MT_OUT/<default_name>`.
pub fn resolve_out(explicit: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => Ok(PathBuf::from(root).join(default_name)),
        _ => Err(Error::Config(format!("no output directory: pass --out or set {OUT_ENV}"))),
    }
}

fn ensure_fresh(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        if entries.next().is_some() {
            return Err(Error::Input(format!(
                "{} already holds output; choose a new directory",
                dir.display()
            )));
        }
    }
    create_dir_all(dir)
}

/// Run `body` as stage `name`, recording its outcome in the manifest.
fn run_stage<T>(
    manifest: &mut RunManifest,
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut RunManifest) -> Result<T>,
) -> Result<T> {
    manifest.set(name, StageStatus::Running, None);
    manifest.write(dir)?;
    match body(manifest) {
        Ok(v) => {
            if manifest.stage(name).map(|s| s.status) == Some(StageStatus::Running) {
                manifest.set(name, StageStatus::Complete, None);
            }
            manifest.write(dir)?;
            Ok(v)
        }
        Err(e) => {
            manifest.set(name, StageStatus::Failed, Some(e.to_string()));
            manifest.write(dir)?;
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// Everything the toy task provides, split into its roles.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ToyLanguageSpec,
    pub monolingual: Vec<Sentence>,
    /// Monolingual sources with oracle translations; only used for scoring
    /// synthetic data.
    pub reference: Corpus,
    pub test: Corpus,
    pub human_seed: Corpus,
    pub dev: Corpus,
    pub vocab: Vocab,
    pub oracle: Oracle,
}

const CORPUS_FILES: [&str; 6] = [
    "monolingual.txt",
    "reference.tsv",
    "test.tsv",
    "seed.tsv",
    "dev.tsv",
    "vocab.txt",
];

impl Prepared {
    /// Draw distinct sentences and cut them, in order, into monolingual,
    /// test, human-seed and dev parts. The vocabulary covers all of them.
    pub fn generate(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let c = &cfg.corpus;
        let spec = c.spec();
        let toy = corpus::gen_toy_corpus(&spec, c.total())?;
        let all = toy.parallel();
        let tag = spec.language_tag();
        let part = |r: std::ops::Range<usize>| Corpus::new(all.pairs()[r].to_vec(), tag.clone(), spec.seed);
        let m = c.monolingual;
        let t = m + c.test;
        let h = t + c.human_seed;
        let vocab = build_vocab(&all, cfg.tokenizer.mode, cfg.tokenizer.max_vocab)?;
        Ok(Prepared {
            monolingual: toy.monolingual[..m].to_vec(),
            reference: part(0..m)?,
            test: part(m..t)?,
            human_seed: part(t..h)?,
            dev: part(h..c.total())?,
            vocab,
            oracle: toy.oracle,
            spec,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let [mono, reference, test, seed, dev, vocab] = CORPUS_FILES.map(|f| dir.join(f));
        corpus::save_lines(&self.monolingual, &mono)?;
        self.vocab.save(&vocab)?;
        let parts = [
            (&reference, &self.reference),
            (&test, &self.test),
            (&seed, &self.human_seed),
            (&dev, &self.dev),
        ];
        for (path, c) in parts {
            corpus::save(c, path)?;
            corpus::write_manifest(
                path,
                &CorpusManifest {
                    language_tag: c.language_tag().into(),
                    seed: c.seed(),
                    size: c.len(),
                    spec: Some(self.spec.clone()),
                },
            )?;
        }
        Ok(())
    }

    pub fn read(dir: &Path, cfg: &Config) -> Result<Self> {
        let [mono, reference, test, seed, dev, vocab] = CORPUS_FILES.map(|f| dir.join(f));
        let spec = corpus::read_manifest(&test)?
            .spec
            .ok_or_else(|| Error::Input(format!("{} names no toy spec", test.display())))?;
        Ok(Prepared {
            monolingual: corpus::load_lines(&mono)?,
            reference: corpus::load(&reference)?,
            test: corpus::load(&test)?,
            human_seed: corpus::load(&seed)?,
            dev: corpus::load(&dev)?,
            vocab: Vocab::load(&vocab, cfg.tokenizer.mode)?,
            oracle: Oracle::new(&spec)?,
            spec,
        })
    }

    pub fn inputs(&self) -> CycleInputs<'_> {
        CycleInputs {
            monolingual: &self.monolingual,
            eval_set: &self.test,
            vocab: &self.vocab,
            human_seed: self.human_seed.pairs(),
            oracle: Some(&self.oracle),
        }
    }
}

/// Train the weak base model on the human seed, with prompts in the
/// distillation stage's shot format. With a dev target set, training stops
/// after the first epoch that reaches it.
pub fn train_base(cfg: &Config, data: &Prepared) -> Result<(TranslationModel, LossReport)> {
    let ctx = PromptContext::from_pool(data.human_seed.pairs(), cfg.distill.shots)?;
    let examples = data
        .human_seed
        .pairs()
        .iter()
        .map(|p| Example::from_pair(p, &data.vocab, &ctx))
        .collect::<Result<Vec<_>>>()?;
    let init = TranslationModel::init(cfg.model.config(Tier::Large, data.vocab.len()))?;
    let base = &cfg.base;
    train_until(&init, &examples, LossMode::Ce, &cfg.train.config(), |_, model| {
        Ok(base.early_stop && chrf_corpus(model, &data.dev, &ctx, &data.vocab, &cfg.eval)?.chrf >= base.stop_at_dev_chrf)
    })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Generate the toy corpora into `out`. Nothing is written when the
/// config is invalid.
pub fn cmd_corpus(cfg: &Config, out: &Path) -> Result<()> {
    let data = Prepared::generate(cfg)?;
    ensure_fresh(out)?;
    let mut manifest = RunManifest::new("corpus", cfg, &["corpus".into()]);
    run_stage(&mut manifest, out, "corpus", |m| {
        data.write(out)?;
        for f in CORPUS_FILES {
            m.artifacts.insert(f.into(), f.into());
        }
        Ok(())
    })
}

/// Train the base model on `corpus_dir`'s human seed.
pub fn cmd_train_base(cfg: &Config, corpus_dir: &Path, out: &Path) -> Result<()> {
    let data = Prepared::read(corpus_dir, cfg)?;
    ensure_fresh(out)?;
    let mut manifest = RunManifest::new("train-base", cfg, &["train".into(), "evaluate".into()]);
    manifest.inputs.insert("corpus".into(), corpus_dir.to_path_buf());
    let model = run_stage(&mut manifest, out, "train", |m| {
        let (model, losses) = train_base(cfg, &data)?;
        write_atomic(&out.join("base.ckpt"), &write_checkpoint(&model))?;
        losses.append_to(&out.join("losses.tsv"))?;
        m.set("train", StageStatus::Complete, Some(format!("{} epochs", losses.mean_loss.len())));
        m.artifacts.insert("checkpoint".into(), "base.ckpt".into());
        m.artifacts.insert("losses".into(), "losses.tsv".into());
        Ok(model)
    })?;
    run_stage(&mut manifest, out, "evaluate", |m| {
        let ctx = PromptContext::from_pool(data.human_seed.pairs(), cfg.distill.shots)?;
        let score = chrf_corpus(&model, &data.test, &ctx, &data.vocab, &cfg.eval)?;
        m.set(
            "evaluate",
            StageStatus::Complete,
            Some(format!("chrF {:.2} at {} shots", score.chrf, cfg.distill.shots)),
        );
        Ok(())
    })
}

/// Score a checkpoint on the test set under every shot setting.
pub fn cmd_eval(cfg: &Config, corpus_dir: &Path, checkpoint: &Path) -> Result<BTreeMap<usize, f64>> {
    let data = Prepared::read(corpus_dir, cfg)?;
    let model = load_checkpoint(checkpoint, None)?;
    SHOT_SETTINGS
        .iter()
        .map(|&s| {
            let ctx = PromptContext::from_pool(data.human_seed.pairs(), s)?;
            Ok((s, chrf_corpus(&model, &data.test, &ctx, &data.vocab, &cfg.eval)?.chrf))
        })
        .collect()
}

/// Where a cycle run gets its inputs.
#[derive(Debug, Clone, Default)]
pub struct CycleArgs {
    pub corpus: Option<PathBuf>,
    pub base: Option<PathBuf>,
    /// JSON plan overriding the one derived from the config.
    pub plan: Option<PathBuf>,
    pub resume: bool,
    /// Stop after this many completed cycles, leaving the rest pending.
    pub stop_after: Option<u32>,
}

fn iteration_stage(i: u32) -> String {
    format!("iteration_{i}")
}

struct ManifestObserver<'a> {
    dir: RunDir,
    manifest: &'a mut RunManifest,
    planned: u32,
    stop_after: Option<u32>,
}

impl CycleObserver for ManifestObserver<'_> {
    fn iteration_done(&mut self, done: &IterationArtifacts) -> Result<bool> {
        let i = done.report.iteration;
        self.dir.persist(done)?;
        self.manifest.set(&iteration_stage(i), StageStatus::Complete, None);
        if i < self.planned {
            self.manifest.set(&iteration_stage(i + 1), StageStatus::Running, None);
        }
        self.manifest.write(self.dir.root())?;
        Ok(self.stop_after.is_none_or(|n| i < n))
    }
}

/// Run (or with `resume`, continue) the distillation cycles into `out`.
/// Succeeds only when every planned cycle has completed.
pub fn cmd_cycle(cfg: &Config, args: &CycleArgs, out: &Path) -> Result<()> {
    let (cfg, mut manifest, plan, corpus_dir, base_path) = if args.resume {
        let manifest = RunManifest::read(out)?;
        let cfg = manifest.config.clone();
        let dir = RunDir::open(out)?;
        let input = |k: &str| {
            manifest
                .inputs
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Input(format!("manifest in {} lacks input {k:?}", out.display())))
        };
        let (corpus_dir, base) = (input("corpus")?, input("base")?);
        (cfg, manifest.clone(), dir.plan()?, corpus_dir, base)
    } else {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| Error::Config(format!("cycle needs --{what} unless resuming")))
        };
        let corpus_dir = need(&args.corpus, "corpus")?;
        let base = need(&args.base, "base")?;
        let data_vocab = Vocab::load(&corpus_dir.join("vocab.txt"), cfg.tokenizer.mode)?;
        let plan: DistillPlan = match &args.plan {
            Some(p) => serde_json::from_str(&read_to_string(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => cfg.plan(data_vocab.len())?,
        };
        plan.validate()?;
        let stages: Vec<String> = (1..=plan.iterations).map(iteration_stage).collect();
        let mut manifest = RunManifest::new("cycle", cfg, &stages);
        manifest.inputs.insert("corpus".into(), corpus_dir.clone());
        manifest.inputs.insert("base".into(), base.clone());
        if let Some(p) = &args.plan {
            manifest.inputs.insert("plan".into(), p.clone());
        }
        manifest.seeds.insert("plan".into(), plan.seed);
        (cfg.clone(), manifest, plan, corpus_dir, base)
    };

    let data = Prepared::read(&corpus_dir, &cfg)?;
    let base = load_checkpoint(&base_path, Some(&plan.teacher_config))?;
    let dir = if args.resume { RunDir::open(out)? } else { RunDir::create(out, &plan)? };
    for (k, v) in [("plan", "plan.json"), ("reports", "reports.jsonl"), ("trace", "trace.jsonl")] {
        manifest.artifacts.insert(k.into(), v.into());
    }
    let state: CycleState = dir.load_state(&plan, base)?;
    for i in 1..=plan.iterations {
        let status = if i <= state.iteration {
            StageStatus::Complete
        } else if i == state.iteration + 1 {
            StageStatus::Running
        } else {
            StageStatus::Pending
        };
        manifest.set(&iteration_stage(i), status, None);
    }
    manifest.write(out)?;

    let mut observer = ManifestObserver {
        dir: dir.clone(),
        manifest: &mut manifest,
        planned: plan.iterations,
        stop_after: args.stop_after,
    };
    let result = resume_cycle(&plan, state, &data.inputs(), &mut observer);
    let state = match result {
        Ok(s) => s,
        Err(e) => {
            if let Error::Iteration { iteration, .. } = &e {
                manifest.set(&iteration_stage(*iteration), StageStatus::Failed, Some(e.to_string()));
                manifest.write(out)?;
            }
            return Err(e);
        }
    };

    if state.iteration < plan.iterations {
        return Err(Error::Incomplete {
            completed: state.iteration,
            planned: plan.iterations,
        });
    }
    let run = RunReports {
        task: data.test.language_tag().into(),
        mode: plan.mode,
        reports: state.reports,
    };
    let rendered = render_report(std::slice::from_ref(&run))?;
    write_atomic(&out.join("table.txt"), rendered.text.as_bytes())?;
    write_atomic(&out.join("cells.jsonl"), rendered.jsonl()?.as_bytes())?;
    write_atomic(&out.join("series.tsv"), score_series(&run).as_bytes())?;
    for k in ["table.txt", "cells.jsonl", "series.tsv"] {
        manifest.artifacts.insert(k.into(), k.into());
    }
    manifest.write(out)
}

/// Compare completed runs side by side. Returns the table text; with `out`,
/// also writes the table, a line-per-cell export and one score series per run.
pub fn cmd_report(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<String> {
    if run_dirs.is_empty() {
        return Err(Error::Input("report needs at least one run directory".into()));
    }
    let mut runs = Vec::new();
    for d in run_dirs {
        let dir = RunDir::open(d)?;
        let reports = dir.reports()?;
        if reports.is_empty() {
            return Err(Error::Input(format!("{}: no completed iterations to report", d.display())));
        }
        let plan = dir.plan()?;
        runs.push(RunReports {
            task: reports[0].task.clone(),
            mode: plan.mode,
            reports,
        });
    }
    let rendered = render_report(&runs)?;
    if let Some(out) = out {
        if run_dirs.iter().any(|d| d == out) {
            return Err(Error::Config("report output must not be a run directory".into()));
        }
        create_dir_all(out)?;
        write_atomic(&out.join("table.txt"), rendered.text.as_bytes())?;
        write_atomic(&out.join("cells.jsonl"), rendered.jsonl()?.as_bytes())?;
        for (i, run) in runs.iter().enumerate() {
            write_atomic(
                &out.join(format!("series_{}_{}.tsv", i + 1, run.mode.to_string().to_lowercase())),
                score_series(run).as_bytes(),
            )?;
        }
    }
    Ok(rendered.text)
}

