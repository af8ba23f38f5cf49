//! Character n-gram F-score on single sentences and pooled over a corpus.

use distill_mt::eval::{chrf, chrf_pooled, ChrfParams};

fn main() -> distill_mt::Result<()> {
    let p = ChrfParams::default();
    let cases = [
        ("ab cd ef", "ef cd ab"),
        ("ef cd ab", "ef cd ab"),
        ("ef cd", "ef cd ab"),
        ("", "ef cd ab"),
    ];
    for (hyp, reference) in cases {
        println!("{:>10} vs {:<10} chrF {:6.2}", format!("{hyp:?}"), format!("{reference:?}"), chrf(hyp, reference, &p)?);
    }

    // Pooling sums n-gram statistics first, so it is not the sentence mean.
    let pairs: Vec<(String, String)> = cases.iter().map(|(h, r)| (h.to_string(), r.to_string())).collect();
    let mean = cases.iter().map(|(h, r)| chrf(h, r, &p).unwrap()).sum::<f64>() / cases.len() as f64;
    println!("pooled {:.2}, mean of sentences {:.2}", chrf_pooled(&pairs, &p)?, mean);
    Ok(())
}
