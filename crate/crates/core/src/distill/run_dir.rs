//! On-disk layout of one distillation run.
//!
//! ```text
//! plan.json
//! reports.jsonl            one IterationReport per completed cycle
//! trace.jsonl              one ErrorRecord per completed cycle
//! iter_<i>/synthetic.tsv   D_i with per-item status
//! iter_<i>/soft.jsonl      top-k records (soft mode only)
//! iter_<i>/same_size.ckpt
//! iter_<i>/smaller.ckpt
//! iter_<i>/report.json
//! ```
//!
//! A cycle's directory is complete before its report is appended, so the
//! report list is the authority on which cycles finished.

use std::path::{Path, PathBuf};

use super::{CycleObserver, CycleState, DistillPlan, IterationArtifacts, StudentTier, SyntheticItem, SyntheticSet};
use crate::corpus::{escape, unescape, Sentence};
use crate::diagnostics::{ErrorRecord, ErrorTrace};
use crate::error::{Error, Result};
use crate::eval::IterationReport;
use crate::fsio::{create_dir_all, read_jsonl, read_to_string, to_jsonl, write_atomic};
use crate::model::{checkpoint_digest, load_checkpoint, write_checkpoint, SoftRecord, TranslationModel};

const SYNTH_TAG: &str = "#distill-mt-synthetic";
const SYNTH_VERSION: &str = "v1";

/// Write `set` as a tab-separated file: a header line, then
/// `source \t output \t status` with status `ok`, `truncated` or `empty`.
pub fn save_synthetic(set: &SyntheticSet, path: &Path) -> Result<()> {
    let mut body = format!("{SYNTH_TAG}\t{SYNTH_VERSION}\t{}\n", set.iteration);
    for it in &set.items {
        let status = if it.truncated {
            "truncated"
        } else if it.is_empty() {
            "empty"
        } else {
            "ok"
        };
        body.push_str(&format!("{}\t{}\t{status}\n", escape(it.source.as_str()), escape(&it.output)));
    }
    write_atomic(path, body.as_bytes())
}

/// Read a file written by [`save_synthetic`]. Records are not stored there
/// and come back as `None`.
pub fn load_synthetic(path: &Path) -> Result<SyntheticSet> {
    let text = read_to_string(path)?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
    if header.len() != 3 || header[0] != SYNTH_TAG || header[1] != SYNTH_VERSION {
        return Err(err(1, "malformed synthetic-corpus header".into()));
    }
    let iteration = header[2]
        .parse()
        .map_err(|_| err(1, format!("bad iteration {:?}", header[2])))?;
    let mut items = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err(lineno, format!("expected 3 fields, found {}", f.len())));
        }
        let source = unescape(f[0]).map_err(|m| err(lineno, m))?;
        let source = Sentence::new(source).map_err(|e| err(lineno, e.to_string()))?;
        let output = unescape(f[1]).map_err(|m| err(lineno, m))?;
        let truncated = match f[2] {
            "truncated" => true,
            "ok" | "empty" => false,
            s => return Err(err(lineno, format!("unknown status {s:?}"))),
        };
        items.push(SyntheticItem {
            source,
            output,
            truncated,
            record: None,
        });
    }
    Ok(SyntheticSet { iteration, items })
}

/// A run directory. Creating one refuses to touch a directory that already
/// holds a run, so finished artifacts are never overwritten.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Start a new run in `root`, which must be absent or empty.
    pub fn create(root: &Path, plan: &DistillPlan) -> Result<Self> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(format!("reading {}", root.display()), e))?;
            if entries.next().is_some() {
                return Err(Error::Input(format!(
                    "{} is not empty; use --resume to continue a run",
                    root.display()
                )));
            }
        }
        create_dir_all(root)?;
        let dir = RunDir { root: root.to_path_buf() };
        write_atomic(&dir.plan_path(), (serde_json::to_string_pretty(plan)? + "\n").as_bytes())?;
        Ok(dir)
    }

    /// Open an existing run.
    pub fn open(root: &Path) -> Result<Self> {
        let dir = RunDir { root: root.to_path_buf() };
        if !dir.plan_path().is_file() {
            return Err(Error::Input(format!("{} holds no run (plan.json missing)", root.display())));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn plan_path(&self) -> PathBuf {
        self.root.join("plan.json")
    }

    pub fn reports_path(&self) -> PathBuf {
        self.root.join("reports.jsonl")
    }

    pub fn trace_path(&self) -> PathBuf {
        self.root.join("trace.jsonl")
    }

    pub fn iteration_dir(&self, i: u32) -> PathBuf {
        self.root.join(format!("iter_{i}"))
    }

    pub fn checkpoint_path(&self, i: u32, tier: StudentTier) -> PathBuf {
        self.iteration_dir(i).join(format!("{}.ckpt", tier.label()))
    }

    pub fn plan(&self) -> Result<DistillPlan> {
        Ok(serde_json::from_str(&read_to_string(&self.plan_path())?)?)
    }

    /// Reports of completed cycles, in order; empty when none finished.
    pub fn reports(&self) -> Result<Vec<IterationReport>> {
        let path = self.reports_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let reports: Vec<IterationReport> = read_jsonl(&path)?;
        for (i, r) in reports.iter().enumerate() {
            if r.iteration as usize != i + 1 {
                return Err(Error::Parse {
                    path,
                    line: i + 1,
                    message: format!("expected iteration {}, found {}", i + 1, r.iteration),
                });
            }
        }
        Ok(reports)
    }

    pub fn synthetic(&self, i: u32) -> Result<SyntheticSet> {
        let dir = self.iteration_dir(i);
        let mut set = load_synthetic(&dir.join("synthetic.tsv"))?;
        let soft = dir.join("soft.jsonl");
        if soft.exists() {
            let records: Vec<SoftRecord> = read_jsonl(&soft)?;
            if records.len() != set.items.len() {
                return Err(Error::Arity {
                    expected: set.items.len(),
                    actual: records.len(),
                });
            }
            for (item, rec) in set.items.iter_mut().zip(records) {
                item.record = Some(rec);
            }
        }
        Ok(set)
    }

    /// Write every artifact of one cycle, then append its report.
    pub fn persist(&self, done: &IterationArtifacts) -> Result<()> {
        let i = done.report.iteration;
        let dir = self.iteration_dir(i);
        create_dir_all(&dir)?;
        save_synthetic(done.synthetic, &dir.join("synthetic.tsv"))?;
        if done.synthetic.has_records() {
            let records: Vec<&SoftRecord> = done.synthetic.records().collect();
            write_atomic(&dir.join("soft.jsonl"), to_jsonl(&records)?.as_bytes())?;
        }
        for (tier, model) in [(StudentTier::SameSize, done.same_size), (StudentTier::Smaller, done.smaller)] {
            if let Some(m) = model {
                write_atomic(&self.checkpoint_path(i, tier), &write_checkpoint(m))?;
            }
        }
        write_atomic(
            &dir.join("report.json"),
            (serde_json::to_string_pretty(done.report)? + "\n").as_bytes(),
        )?;
        write_atomic(&self.trace_path(), to_jsonl(&done.trace.records)?.as_bytes())?;

        let mut reports = self.reports()?;
        reports.truncate(i as usize - 1);
        reports.push(done.report.clone());
        write_atomic(&self.reports_path(), to_jsonl(&reports)?.as_bytes())
    }

    /// Rebuild the state after the last completed cycle. `base` is the
    /// model the run started from.
    pub fn load_state(&self, plan: &DistillPlan, base: TranslationModel) -> Result<CycleState> {
        let mut state = CycleState::start(plan, base)?;
        let reports = self.reports()?;
        let Some(last) = reports.last() else {
            return Ok(state);
        };
        let n = last.iteration;
        if reports[0].teacher_checkpoint != checkpoint_digest(&state.teacher) {
            return Err(Error::Incompatible(
                "base checkpoint differs from the one this run started from".into(),
            ));
        }
        let mut records: Vec<ErrorRecord> = read_jsonl(&self.trace_path())?;
        records.truncate(n as usize);
        if records.len() != n as usize {
            return Err(Error::Input("error trace is shorter than the report list".into()));
        }
        state.trace = ErrorTrace {
            gamma: plan.gamma(),
            records,
        };
        for &tier in &plan.students {
            let model = load_checkpoint(&self.checkpoint_path(n, tier), None)?;
            let expected = match tier {
                StudentTier::SameSize => &last.same_size_checkpoint,
                StudentTier::Smaller => &last.smaller_checkpoint,
            };
            if expected.as_deref() != Some(checkpoint_digest(&model).as_str()) {
                return Err(Error::Checkpoint(format!(
                    "{} does not match its report digest",
                    self.checkpoint_path(n, tier).display()
                )));
            }
            state.students.insert(tier, model);
        }
        if let Some(t) = state.students.get(&StudentTier::SameSize) {
            state.teacher = t.clone();
        }
        let first = if plan.accumulate { 1 } else { n };
        state.datasets = (first..=n).map(|i| self.synthetic(i)).collect::<Result<_>>()?;
        state.iteration = n;
        state.reports = reports;
        Ok(state)
    }
}

impl CycleObserver for RunDir {
    fn iteration_done(&mut self, done: &IterationArtifacts) -> Result<bool> {
        self.persist(done)?;
        Ok(true)
    }
}
