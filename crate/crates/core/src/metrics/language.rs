use std::collections::HashMap;

/// Lowercased whitespace tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// (clipped matches, candidate n-gram count) for orders 1..=n, plus lengths for the brevity penalty.
fn bleu_stats(candidate: &[String], references: &[Vec<String>], n: usize) -> (Vec<(usize, usize)>, usize, usize) {
    let mut per_order = Vec::with_capacity(n);
    for order in 1..=n {
        let cand = ngram_counts(candidate, order);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, order) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        per_order.push((clipped, candidate.len().saturating_sub(order - 1)));
    }
    // Closest reference length; ties go to the shorter one.
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    (per_order, c, r)
}

fn combine(per_order: &[(usize, usize)], c: usize, r: usize) -> f64 {
    if c == 0 || per_order.iter().any(|&(m, t)| m == 0 || t == 0) {
        return 0.0;
    }
    let log_p: f64 = per_order.iter().map(|&(m, t)| (m as f64 / t as f64).ln()).sum::<f64>() / per_order.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

/// Sentence BLEU with uniform weights over orders 1..=n, clipped counts, brevity penalty, no smoothing.
pub fn bleu(candidate: &str, references: &[&str], n: usize) -> f64 {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let (per_order, c, r) = bleu_stats(&cand, &refs, n.max(1));
    combine(&per_order, c, r)
}

/// Corpus BLEU: n-gram statistics and lengths are summed before combining.
pub fn corpus_bleu(candidates: &[&str], references: &[Vec<&str>], n: usize) -> f64 {
    let n = n.max(1);
    let mut totals = vec![(0usize, 0usize); n];
    let (mut c_sum, mut r_sum) = (0, 0);
    for (cand, refs) in candidates.iter().zip(references) {
        let cand = tokenize(cand);
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        let (per_order, c, r) = bleu_stats(&cand, &refs, n);
        for (t, p) in totals.iter_mut().zip(per_order) {
            t.0 += p.0;
            t.1 += p.1;
        }
        c_sum += c;
        r_sum += r;
    }
    combine(&totals, c_sum, r_sum)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-L F1 over the longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let l = lcs_len(&c, &r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}
