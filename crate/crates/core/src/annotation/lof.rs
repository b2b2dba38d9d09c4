use ndarray::{Array1, Array2, ArrayView2};

use super::{stable_hash, AnnotationError};

const DENSITY_EPS: f64 = 1e-12;

/// Local outlier factor of every row, Euclidean metric.
///
/// Each point's neighborhood is exactly its `k` nearest other points, ordered by
/// (distance, index). Reachability densities use `1 / max(mean reach-distance, 1e-12)`.
pub fn lof_scores(points: ArrayView2<f64>, k: usize) -> Result<Vec<f64>, AnnotationError> {
    let m = points.nrows();
    if k == 0 || m <= k {
        return Err(AnnotationError::Lof(format!("need M > k >= 1, got M={m}, k={k}")));
    }
    let mut dist = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in i + 1..m {
            let d = points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    let k_distance: Vec<f64> = (0..m).map(|i| dist[(i, neighbors[i][k - 1])]).collect();
    let lrd: Vec<f64> = (0..m)
        .map(|i| {
            let reach: f64 = neighbors[i].iter().map(|&o| k_distance[o].max(dist[(i, o)])).sum::<f64>() / k as f64;
            1.0 / reach.max(DENSITY_EPS)
        })
        .collect();
    Ok((0..m).map(|i| neighbors[i].iter().map(|&o| lrd[o] / lrd[i]).sum::<f64>() / k as f64).collect())
}

/// Maps a caption to a fixed-width feature vector.
pub trait CaptionEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Array1<f64>;

    fn embed_all(&self, texts: &[&str]) -> Array2<f64> {
        let mut out = Array2::zeros((texts.len(), self.dim()));
        for (i, t) in texts.iter().enumerate() {
            out.row_mut(i).assign(&self.embed(t));
        }
        out
    }
}

/// Character 3-gram counts hashed into `dim` buckets, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl CaptionEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Array1<f64> {
        let padded: Vec<char> = format!("  {}  ", text.to_lowercase()).chars().collect();
        let mut v = Array1::<f64>::zeros(self.dim);
        for w in padded.windows(3) {
            let gram: String = w.iter().collect();
            v[(stable_hash(&[gram.as_bytes()]) % self.dim as u64) as usize] += 1.0;
        }
        let n = v.dot(&v).sqrt();
        if n > 0.0 {
            v /= n;
        }
        v
    }
}

/// Indices of the captions kept (LOF ≤ `threshold`) and every score.
///
/// Identical captions share one point: repeated copies would otherwise drive the
/// reach distance to zero and the density of their neighbors to infinity.
/// With `k` or fewer distinct captions nothing is scored and everything is kept.
pub fn filter_annotations(captions: &[&str], embedder: &dyn CaptionEmbedder, k: usize, threshold: f64) -> (Vec<usize>, Vec<f64>) {
    let mut distinct: Vec<&str> = captions.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() <= k {
        log::warn!("LOF filter skipped: {} distinct captions, need more than k={k}", distinct.len());
        return ((0..captions.len()).collect(), Vec::new());
    }
    let points = embedder.embed_all(&distinct);
    let unique_scores = lof_scores(points.view(), k).expect("size checked");
    let scores: Vec<f64> = captions
        .iter()
        .map(|c| unique_scores[distinct.binary_search(c).expect("caption is present")])
        .collect();
    let kept = (0..captions.len()).filter(|&i| scores[i] <= threshold).collect();
    (kept, scores)
}
