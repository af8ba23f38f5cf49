//! Train a weak base model on the human seed, stopping once dev chrF
//! crosses the configured threshold, then score it at every shot setting.
//!
//! ```text
//! cargo run --release --example train_base
//! ```

use distill_mt::cli::{train_base, Prepared};
use distill_mt::config::Config;
use distill_mt::eval::chrf_corpus;
use distill_mt::tokenizer::PromptContext;

fn main() -> distill_mt::Result<()> {
    let cfg = Config::default();
    let data = Prepared::generate(&cfg)?;
    let (model, losses) = train_base(&cfg, &data)?;
    println!(
        "{} params, stopped after {} epochs (dev threshold {}), final loss {:.4}",
        model.param_count(),
        losses.mean_loss.len(),
        cfg.base.stop_at_dev_chrf,
        losses.final_loss
    );
    for shots in [0, 1, 4] {
        let ctx = PromptContext::from_pool(data.human_seed.pairs(), shots)?;
        let score = chrf_corpus(&model, &data.test, &ctx, &data.vocab, &cfg.eval)?;
        println!("{shots}-shot test chrF {:.2}", score.chrf);
    }
    Ok(())
}
