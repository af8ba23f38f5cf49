//! Run sequence-level (DD) and soft-target (SD) distillation from the same
//! base on a small toy task and print both runs side by side, plus the
//! accumulated-error trace.

use distill_mt::cli::{train_base, Prepared};
use distill_mt::config::Config;
use distill_mt::distill::{run_cycle, Mode, NoObserver};
use distill_mt::eval::{render_report, RunReports};

fn main() -> distill_mt::Result<()> {
    let mut cfg = Config::default();
    cfg.corpus.monolingual = 400;
    cfg.distill.eval_shots = vec![0, 1];
    let data = Prepared::generate(&cfg)?;
    let (base, losses) = train_base(&cfg, &data)?;
    println!("base trained for {} epochs", losses.mean_loss.len());

    let mut runs = Vec::new();
    for mode in [Mode::Dd, Mode::Sd] {
        cfg.distill.mode = mode;
        let plan = cfg.plan(data.vocab.len())?;
        let reports = run_cycle(&plan, &base, &data.inputs(), &mut NoObserver)?;
        for r in &reports {
            let e = r.errors.as_ref().expect("recorded every cycle");
            println!(
                "{mode} cycle {}: d_synth {:.4} d_kl {} eps {:.4} I(smaller) {:.2}",
                r.iteration,
                e.delta_synth.unwrap_or(f64::NAN),
                e.delta_kl.map_or("-".into(), |d| format!("{d:.4}")),
                e.epsilon,
                e.init_distance_smaller.unwrap_or(f64::NAN)
            );
        }
        runs.push(RunReports {
            task: data.test.language_tag().into(),
            mode,
            reports,
        });
    }
    println!("\n{}", render_report(&runs)?.text);
    Ok(())
}
