//! chrF scoring, corpus evaluation, and result tables.
//!
//! chrF here is the pure character variant: whitespace is removed, clipped
//! n-gram precision and recall are averaged over orders `1..=max_ngram`
//! (skipping orders the reference is too short for), then combined into
//! `F_beta`. Corpus scores pool the n-gram statistics before the F-score.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::diagnostics::ErrorRecord;
use crate::distill::Mode;
use crate::error::{Error, Result};
use crate::model::{greedy_decode, TranslationModel};
use crate::tokenizer::{PromptContext, Vocab};
use crate::train::LossReport;

/// Shot settings every report is scored under.
pub const SHOT_SETTINGS: [usize; 3] = [0, 1, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub max_ngram: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams {
            max_ngram: 6,
            beta: 2.0,
        }
    }
}

impl ChrfParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_ngram == 0 || !(self.beta > 0.0) {
            return Err(Error::Config("chrF needs max_ngram >= 1 and beta > 0".into()));
        }
        Ok(())
    }
}

/// Per-order `(matches, hypothesis n-grams, reference n-grams)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChrfStats {
    pub orders: Vec<[u64; 3]>,
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

impl ChrfStats {
    pub fn sentence(hypothesis: &str, reference: &str, max_ngram: usize) -> Result<Self> {
        let hyp: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
        let reference: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        if reference.is_empty() {
            return Err(Error::Input("chrF reference is empty".into()));
        }
        let orders = (1..=max_ngram)
            .map(|n| {
                let h = ngram_counts(&hyp, n);
                let r = ngram_counts(&reference, n);
                let matches: u64 = h
                    .iter()
                    .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                    .sum();
                let hyp_total = hyp.len().saturating_sub(n - 1) as u64;
                let ref_total = reference.len().saturating_sub(n - 1) as u64;
                [matches, hyp_total, ref_total]
            })
            .collect();
        Ok(ChrfStats { orders })
    }

    pub fn add(&mut self, other: &ChrfStats) {
        if self.orders.len() < other.orders.len() {
            self.orders.resize(other.orders.len(), [0; 3]);
        }
        for (a, b) in self.orders.iter_mut().zip(&other.orders) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    /// chrF in `[0, 100]`.
    pub fn score(&self, beta: f64) -> f64 {
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut used = 0usize;
        for &[m, h, r] in &self.orders {
            if r == 0 {
                continue;
            }
            precision += if h > 0 { m as f64 / h as f64 } else { 0.0 };
            recall += m as f64 / r as f64;
            used += 1;
        }
        if used == 0 {
            return 0.0;
        }
        let p = precision / used as f64;
        let r = recall / used as f64;
        let b2 = beta * beta;
        let denom = b2 * p + r;
        if denom <= 0.0 {
            0.0
        } else {
            100.0 * (1.0 + b2) * p * r / denom
        }
    }
}

/// Sentence-level chrF.
pub fn chrf(hypothesis: &str, reference: &str, params: &ChrfParams) -> Result<f64> {
    params.validate()?;
    Ok(ChrfStats::sentence(hypothesis, reference, params.max_ngram)?.score(params.beta))
}

/// Corpus chrF over `(hypothesis, reference)` pairs with pooled statistics.
pub fn chrf_pooled<H: AsRef<str>, R: AsRef<str>>(pairs: &[(H, R)], params: &ChrfParams) -> Result<f64> {
    params.validate()?;
    let mut pooled = ChrfStats::default();
    for (h, r) in pairs {
        pooled.add(&ChrfStats::sentence(h.as_ref(), r.as_ref(), params.max_ngram)?);
    }
    Ok(pooled.score(params.beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub chrf: f64,
    pub scored: usize,
    /// Sentences that could not be translated, with the reason.
    pub excluded: Vec<(usize, String)>,
}

/// Translate every test source greedily and score against the references.
pub fn chrf_corpus(
    model: &TranslationModel,
    test: &Corpus,
    ctx: &PromptContext,
    vocab: &Vocab,
    params: &ChrfParams,
) -> Result<CorpusScore> {
    if test.is_empty() {
        return Err(Error::Input("test corpus is empty".into()));
    }
    let mut pooled = ChrfStats::default();
    let mut scored = 0;
    let mut excluded = Vec::new();
    for (i, pair) in test.pairs().iter().enumerate() {
        let hyp = ctx
            .prompt(&pair.source, vocab)
            .and_then(|prompt| greedy_decode(model, &prompt, model.config().max_decode_len));
        match hyp {
            Ok(d) => {
                let text = vocab.decode(d.tokens.ids());
                pooled.add(&ChrfStats::sentence(&text, pair.target.as_str(), params.max_ngram)?);
                scored += 1;
            }
            Err(e) => excluded.push((i, e.to_string())),
        }
    }
    Ok(CorpusScore {
        chrf: pooled.score(params.beta),
        scored,
        excluded,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    /// The large base model the run starts from.
    Base,
    /// Same-size student of this iteration (next teacher).
    SameSize,
    /// Small model trained on the human seed only.
    SmallBase,
    /// Smaller student of this iteration.
    Smaller,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub sentences: usize,
    pub usable: usize,
    pub truncated: usize,
    pub empty: usize,
}

/// Everything measured in one distillation cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub mode: Mode,
    pub task: String,
    /// role -> shot count -> corpus chrF.
    pub scores: BTreeMap<ModelRole, BTreeMap<usize, f64>>,
    pub losses: BTreeMap<ModelRole, LossReport>,
    pub errors: Option<ErrorRecord>,
    pub synthetic: SyntheticSummary,
    /// SHA-256 of the checkpoints involved, for chaining audits.
    pub teacher_checkpoint: String,
    pub same_size_checkpoint: Option<String>,
    pub smaller_checkpoint: Option<String>,
}

impl IterationReport {
    pub fn score(&self, role: ModelRole, shots: usize) -> Option<f64> {
        self.scores.get(&role).and_then(|m| m.get(&shots)).copied()
    }
}

/// One run's reports, labelled for side-by-side tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReports {
    pub task: String,
    pub mode: Mode,
    pub reports: Vec<IterationReport>,
}

/// One table cell, for line-delimited export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub block: String,
    pub row: String,
    pub iteration: u32,
    pub mode: Option<Mode>,
    pub task: String,
    pub shots: usize,
    pub chrf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub text: String,
    pub records: Vec<CellRecord>,
}

impl RenderedReport {
    pub fn jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn data_rows(&self) -> Vec<(String, String)> {
        let mut rows: Vec<(String, String)> = Vec::new();
        for r in &self.records {
            let key = (r.block.clone(), r.row.clone());
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        rows
    }
}

/// Table with a block per model tier: a Base row, then one row per iteration
/// and run (`DD1`, `SD1`, `DD2`, ...). Columns are shot settings x tasks.
pub fn render_report(runs: &[RunReports]) -> Result<RenderedReport> {
    if runs.iter().all(|r| r.reports.is_empty()) {
        return Err(Error::Input("no completed iterations to report".into()));
    }
    let mut tasks: Vec<String> = Vec::new();
    for r in runs {
        if !tasks.contains(&r.task) {
            tasks.push(r.task.clone());
        }
    }
    let max_iter = runs
        .iter()
        .flat_map(|r| r.reports.iter().map(|x| x.iteration))
        .max()
        .unwrap_or(0);

    let mut records = Vec::new();
    for (block, base_role, student_role) in [
        ("Large", ModelRole::Base, ModelRole::SameSize),
        ("Small", ModelRole::SmallBase, ModelRole::Smaller),
    ] {
        // Base row: first run per task that carries base scores.
        for task in &tasks {
            let base = runs
                .iter()
                .filter(|r| &r.task == task)
                .flat_map(|r| r.reports.iter())
                .find_map(|rep| rep.scores.get(&base_role));
            if let Some(scores) = base {
                for (&shots, &v) in scores {
                    records.push(CellRecord {
                        block: block.into(),
                        row: "Base".into(),
                        iteration: 0,
                        mode: None,
                        task: task.clone(),
                        shots,
                        chrf: v,
                    });
                }
            }
        }
        for it in 1..=max_iter {
            for run in runs {
                let Some(rep) = run.reports.iter().find(|r| r.iteration == it) else {
                    continue;
                };
                if let Some(scores) = rep.scores.get(&student_role) {
                    for (&shots, &v) in scores {
                        records.push(CellRecord {
                            block: block.into(),
                            row: format!("{}{it}", run.mode),
                            iteration: it,
                            mode: Some(run.mode),
                            task: run.task.clone(),
                            shots,
                            chrf: v,
                        });
                    }
                }
            }
        }
    }

    let mut shots: Vec<usize> = records.iter().map(|r| r.shots).collect();
    shots.sort_unstable();
    shots.dedup();
    let columns: Vec<(usize, &String)> = shots
        .iter()
        .flat_map(|&s| tasks.iter().map(move |t| (s, t)))
        .collect();

    let mut text = String::new();
    let _ = write!(text, "{:<6} {:<6}", "Model", "Row");
    for (s, t) in &columns {
        let _ = write!(text, " {:>18}", format!("{s}-shot {t}"));
    }
    text.push('\n');
    let rendered = RenderedReport {
        text: String::new(),
        records,
    };
    for (block, row) in rendered.data_rows() {
        let _ = write!(text, "{block:<6} {row:<6}");
        for (s, t) in &columns {
            let cell = rendered
                .records
                .iter()
                .find(|r| r.block == block && r.row == row && r.shots == *s && &r.task == *t);
            match cell {
                Some(c) => {
                    let _ = write!(text, " {:>18.1}", c.chrf);
                }
                None => {
                    let _ = write!(text, " {:>18}", "-");
                }
            }
        }
        text.push('\n');
    }
    Ok(RenderedReport { text, ..rendered })
}

/// Per-iteration score series (iteration 0 is the base), tab-separated.
pub fn score_series(run: &RunReports) -> String {
    let mut out = String::from("iteration");
    for role in ["large", "small"] {
        for s in SHOT_SETTINGS {
            let _ = write!(out, "\t{role}_{s}shot");
        }
    }
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    if let Some(first) = run.reports.first() {
        out.push('0');
        for role in [ModelRole::Base, ModelRole::SmallBase] {
            for s in SHOT_SETTINGS {
                let _ = write!(out, "\t{}", cell(first.score(role, s)));
            }
        }
        out.push('\n');
    }
    for rep in &run.reports {
        let _ = write!(out, "{}", rep.iteration);
        for role in [ModelRole::SameSize, ModelRole::Smaller] {
            for s in SHOT_SETTINGS {
                let _ = write!(out, "\t{}", cell(rep.score(role, s)));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ChrfParams {
        ChrfParams::default()
    }

    #[test]
    fn identity_and_empty() {
        assert_eq!(chrf("abc def", "abc def", &p()).unwrap(), 100.0);
        assert_eq!(chrf("", "abc", &p()).unwrap(), 0.0);
        assert!(matches!(chrf("abc", "   ", &p()), Err(Error::Input(_))));
    }

    #[test]
    fn whitespace_is_ignored() {
        let a = chrf("  ab cd ", "abcd", &p()).unwrap();
        assert_eq!(a, 100.0);
    }

    #[test]
    fn short_reference_skips_high_orders() {
        // Reference of two characters only has unigram and bigram statistics.
        let s = ChrfStats::sentence("ab", "ab", 6).unwrap();
        assert_eq!(s.orders[2], [0, 0, 0]);
        assert_eq!(s.score(2.0), 100.0);
    }

    #[test]
    fn pooled_single_sentence_matches_sentence_level() {
        let a = chrf("abcx", "abcd", &p()).unwrap();
        let b = chrf_pooled(&[("abcx", "abcd")], &p()).unwrap();
        assert_eq!(a, b);
    }

    fn report(iteration: u32, roles: &[ModelRole]) -> IterationReport {
        let mut scores = BTreeMap::new();
        for &r in roles {
            scores.insert(r, SHOT_SETTINGS.iter().map(|&s| (s, 10.0 * iteration as f64 + s as f64)).collect());
        }
        IterationReport {
            iteration,
            mode: Mode::Dd,
            task: "toy".into(),
            scores,
            losses: BTreeMap::new(),
            errors: None,
            synthetic: SyntheticSummary::default(),
            teacher_checkpoint: String::new(),
            same_size_checkpoint: None,
            smaller_checkpoint: None,
        }
    }

    #[test]
    fn base_only_report_has_one_row() {
        let run = RunReports {
            task: "toy".into(),
            mode: Mode::Dd,
            reports: vec![report(1, &[ModelRole::Base])],
        };
        let r = render_report(&[run]).unwrap();
        assert_eq!(r.data_rows().len(), 1);
    }

    #[test]
    fn rows_follow_iterations() {
        let reports = (1..=3).map(|i| report(i, &[ModelRole::Base, ModelRole::SameSize])).collect();
        let run = RunReports {
            task: "toy".into(),
            mode: Mode::Dd,
            reports,
        };
        let r = render_report(std::slice::from_ref(&run)).unwrap();
        let rows: Vec<String> = r.data_rows().into_iter().map(|x| x.1).collect();
        assert_eq!(rows, vec!["Base", "DD1", "DD2", "DD3"]);
        assert_eq!(score_series(&run).lines().count(), 1 + 4);
    }

    #[test]
    fn empty_runs_are_an_error() {
        let run = RunReports {
            task: "toy".into(),
            mode: Mode::Sd,
            reports: vec![],
        };
        assert!(render_report(&[run]).is_err());
    }
}
