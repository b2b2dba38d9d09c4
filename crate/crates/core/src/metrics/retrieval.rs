use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MetricError;

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    1.0 - dot / (na * nb).max(1e-12)
}

pub fn l2_normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let n = row.dot(&row).sqrt().max(1e-12);
        row /= n;
    }
}

fn same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<(), MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Fraction of motions whose own caption ranks in the `top_k` nearest (cosine)
/// among a pool of `pool` captions.
///
/// Rows are shuffled with `seed` and cut into consecutive pools (a remainder
/// smaller than `pool` is dropped). Ties count against the true caption.
pub fn r_precision(
    text: ArrayView2<f64>,
    motion: ArrayView2<f64>,
    pool: usize,
    top_k: usize,
    seed: u64,
) -> Result<f64, MetricError> {
    same_shape(text, motion)?;
    if pool == 0 || top_k == 0 {
        return Err(MetricError::Invalid("pool and top_k must be positive".into()));
    }
    let n = text.nrows();
    if n < pool {
        return Err(MetricError::TooFew { needed: pool, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut hits = 0usize;
    let mut total = 0usize;
    for chunk in order.chunks_exact(pool) {
        for &i in chunk {
            let own = cosine_distance(motion.row(i), text.row(i));
            let closer = chunk
                .iter()
                .filter(|&&j| j != i && cosine_distance(motion.row(i), text.row(j)) <= own)
                .count();
            hits += (closer < top_k) as usize;
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Mean Euclidean distance between matched text and motion embeddings.
pub fn mm_dist(text: ArrayView2<f64>, motion: ArrayView2<f64>) -> Result<f64, MetricError> {
    same_shape(text, motion)?;
    let n = text.nrows();
    if n == 0 {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    Ok(text.rows().into_iter().zip(motion.rows()).map(|(a, b)| dist(a, b)).sum::<f64>() / n as f64)
}

/// Mean distance over `n_pairs` pairs whose two indices are drawn independently and uniformly.
pub fn diversity(features: ArrayView2<f64>, n_pairs: usize, seed: u64) -> Result<f64, MetricError> {
    let m = features.nrows();
    if m < 2 {
        return Err(MetricError::TooFew { needed: 2, got: m });
    }
    if n_pairs == 0 {
        return Err(MetricError::Invalid("n_pairs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..n_pairs)
        .map(|_| {
            let i = rng.gen_range(0..m);
            let j = rng.gen_range(0..m);
            dist(features.row(i), features.row(j))
        })
        .sum();
    Ok(total / n_pairs as f64)
}

/// Mean pairwise distance within each group of repeated generations, averaged over groups.
pub fn multimodality(groups: &[ArrayView2<f64>]) -> Result<f64, MetricError> {
    let mut per_group = Vec::new();
    for g in groups {
        let m = g.nrows();
        if m < 2 {
            continue;
        }
        let mut sum = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                sum += dist(g.row(i), g.row(j));
            }
        }
        per_group.push(sum / (m * (m - 1) / 2) as f64);
    }
    if per_group.is_empty() {
        return Err(MetricError::TooFew { needed: 2, got: 1 });
    }
    Ok(per_group.iter().sum::<f64>() / per_group.len() as f64)
}
