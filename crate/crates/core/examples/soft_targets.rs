//! Record a teacher's top-k distribution along its greedy output and show
//! how much probability mass falls outside the recorded entries.

use distill_mt::cli::{train_base, Prepared};
use distill_mt::config::Config;
use distill_mt::model::decode_with_topk;
use distill_mt::tokenizer::PromptContext;

fn main() -> distill_mt::Result<()> {
    let mut cfg = Config::default();
    cfg.train.epochs = 20;
    cfg.base.early_stop = false;
    let data = Prepared::generate(&cfg)?;
    let (teacher, _) = train_base(&cfg, &data)?;

    let source = &data.monolingual[0];
    let prompt = PromptContext::zero_shot().prompt(source, &data.vocab)?;
    let record = decode_with_topk(&teacher, source, &prompt, 5, cfg.model.max_decode_len)?;
    println!("source {:?} -> {:?}", source.as_str(), data.vocab.decode(record.output()));
    for st in &record.soft {
        let top: Vec<String> = st
            .entries
            .iter()
            .map(|&(id, p)| format!("{}:{p:.3}", data.vocab.token(id).unwrap_or("?")))
            .collect();
        println!("  pos {} [{}] tail {:.4}", st.position, top.join(" "), 1.0 - st.mass());
    }
    Ok(())
}
