//! Compare analytic gradients with central finite differences for both
//! losses on a freshly initialized model.

use distill_mt::cli::Prepared;
use distill_mt::config::Config;
use distill_mt::model::{decode_with_topk, ModelConfig, Tier, TranslationModel};
use distill_mt::tokenizer::PromptContext;
use distill_mt::train::{grad_check, Example};

fn main() -> distill_mt::Result<()> {
    let cfg = Config::default();
    let data = Prepared::generate(&cfg)?;
    let v = data.vocab.len();
    let teacher = TranslationModel::init(ModelConfig::preset(Tier::Large, v, 1))?;
    let student = TranslationModel::init(ModelConfig::preset(Tier::Large, v, 2))?;
    let ctx = PromptContext::zero_shot();

    let ce = Example::from_pair(&data.human_seed.pairs()[0], &data.vocab, &ctx)?;
    let src = ctx.prompt(&data.monolingual[0], &data.vocab)?;
    let record = decode_with_topk(&teacher, &data.monolingual[0], &src, 20, 8)?;
    let kd = Example::from_record(&record, &data.vocab, &ctx)?;

    for (name, ex) in [("cross-entropy", &ce), ("top-k KL", &kd)] {
        let r = grad_check(&student, ex, 1e-8, 300, 1e-4, 0)?;
        println!(
            "{name:>13}: {} coordinates, max relative error {:.2e} (worst in {}) -> {}",
            r.coordinates,
            r.max_rel_error,
            r.worst.as_ref().map_or("-", |w| w.1.as_str()),
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
