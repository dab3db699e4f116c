use std::collections::HashMap;

use crate::{Error, Result};

const MAX_ORDER: usize = 4;

fn ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 on whitespace tokens, scaled to 0–100.
///
/// Orders with no matches use `(m + 1) / (c + 1)`; an empty hypothesis side scores 0.
pub fn bleu(hypotheses: &[String], references: &[String]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch { hypotheses: hypotheses.len(), references: references.len() });
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = h.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngrams(&h, n);
            let rc = ngrams(&r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    for n in 0..MAX_ORDER {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len < ref_len { (1.0 - ref_len as f64 / hyp_len as f64).exp() } else { 1.0 };
    Ok(100.0 * bp * (log_sum / MAX_ORDER as f64).exp())
}
