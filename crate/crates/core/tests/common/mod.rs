//! Brute-force reference implementations shared by the test targets.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Counts of every character n-gram, by brute force over all windows.
pub fn ngram_counts(s: &[char], n: usize) -> HashMap<String, u64> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for i in 0..=s.len() - n {
            *m.entry(s[i..i + n].iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    m
}

/// `(matched, hyp total, ref total)` per order.
pub fn brute_stats(hyp: &str, reference: &str, max_n: usize) -> Vec<(u64, u64, u64)> {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    (1..=max_n)
        .map(|n| {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let matched = hc.iter().map(|(g, &c)| c.min(*rc.get(g).unwrap_or(&0))).sum();
            (matched, hc.values().sum(), rc.values().sum())
        })
        .collect()
}

pub fn brute_score(stats: &[(u64, u64, u64)], beta: f64) -> f64 {
    let used: Vec<_> = stats.iter().filter(|s| s.2 > 0).collect();
    if used.is_empty() {
        return 0.0;
    }
    let p = used.iter().map(|s| if s.1 == 0 { 0.0 } else { s.0 as f64 / s.1 as f64 }).sum::<f64>() / used.len() as f64;
    let r = used.iter().map(|s| s.0 as f64 / s.2 as f64).sum::<f64>() / used.len() as f64;
    let b2 = beta * beta;
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * (1.0 + b2) * p * r / (b2 * p + r)
    }
}

/// Text of `min..=max` characters, never all whitespace.
pub fn random_text(rng: &mut ChaCha8Rng, min: usize, max_len: usize) -> String {
    let len = rng.gen_range(min..=max_len);
    let alphabet: Vec<char> = "abcde fgh".chars().collect();
    let mut s: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
    if s.trim().is_empty() {
        s.pop();
        s.push('a');
    }
    s
}

