//! Run base training plus distillation cycles in memory and print the score
//! trajectory. Takes an optional TOML config path; `DISTILL_SHOTS` (comma
//! separated) repeats the run under several shot settings.
//!
//! ```text
//! cargo run --release --example calibrate -- my.toml
//! ```

use std::time::Instant;

use distill_mt::cli::{train_base, Prepared};
use distill_mt::config::Config;
use distill_mt::distill::{run_cycle, NoObserver};
use distill_mt::eval::ModelRole;

fn main() -> distill_mt::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(p) => Config::load(p.as_ref())?,
        None => Config::default(),
    };
    let shots: Vec<usize> = std::env::var("DISTILL_SHOTS")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![cfg.distill.shots]);

    let data = Prepared::generate(&cfg)?;
    println!("vocab {} | monolingual {} | test {} | seed {}", data.vocab.len(), data.monolingual.len(), data.test.len(), data.human_seed.len());
    for s in shots {
        cfg.distill.shots = s;
        let t = Instant::now();
        let (base, losses) = train_base(&cfg, &data)?;
        let plan = cfg.plan(data.vocab.len())?;
        let reports = run_cycle(&plan, &base, &data.inputs(), &mut NoObserver)?;
        let first = &reports[0];
        let base_score = first.score(ModelRole::Base, s).unwrap_or(f64::NAN);
        let small_base = first.score(ModelRole::SmallBase, s);
        print!("shots {s}: base {base_score:.2} after {} epochs", losses.mean_loss.len());
        if let Some(sb) = small_base {
            print!(" small-base {sb:.2}");
        }
        for r in &reports {
            print!(" | it{} same {:.2}", r.iteration, r.score(ModelRole::SameSize, s).unwrap_or(f64::NAN));
            if let Some(x) = r.score(ModelRole::Smaller, s) {
                print!(" small {x:.2}");
            }
            if let Some(e) = &r.errors {
                print!(" eps {:.3}", e.epsilon);
            }
        }
        println!(" ({:.0?})", t.elapsed());
    }
    Ok(())
}
