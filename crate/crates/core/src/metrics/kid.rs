use ndarray::{ArrayView1, ArrayView2};

use super::MetricError;

const MAX_BLOCK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KidMode {
    /// Mean of unbiased MMD² over consecutive blocks of `min(M, M', 100)` rows.
    UnbiasedBlocks,
    /// V-statistic over the full samples (diagonal kernel terms included).
    Biased,
}

fn kernel(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    (x.dot(&y) / x.len() as f64 + 1.0).powi(3)
}

/// Order-independent sum, so permuted inputs give bit-identical totals.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn mmd2(a: ArrayView2<f64>, b: ArrayView2<f64>, unbiased: bool) -> f64 {
    let within = |x: ArrayView2<f64>| {
        let m = x.nrows();
        let mut terms = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                if !(unbiased && i == j) {
                    terms.push(kernel(x.row(i), x.row(j)));
                }
            }
        }
        let denom = if unbiased { m * (m - 1) } else { m * m };
        sorted_sum(terms) / denom as f64
    };
    let mut cross = Vec::with_capacity(a.nrows() * b.nrows());
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            cross.push(kernel(a.row(i), b.row(j)));
        }
    }
    within(a) + within(b) - 2.0 * sorted_sum(cross) / (a.nrows() * b.nrows()) as f64
}

/// Kernel inception distance with the cubic polynomial kernel `(xᵀy/F + 1)³`.
pub fn kid(a: ArrayView2<f64>, b: ArrayView2<f64>, mode: KidMode) -> Result<f64, MetricError> {
    if a.ncols() != b.ncols() {
        return Err(MetricError::Shape(format!("feature widths {} vs {}", a.ncols(), b.ncols())));
    }
    let m = a.nrows().min(b.nrows());
    match mode {
        KidMode::Biased => {
            if m == 0 {
                return Err(MetricError::TooFew { needed: 1, got: 0 });
            }
            Ok(mmd2(a, b, false))
        }
        KidMode::UnbiasedBlocks => {
            if m < 2 {
                return Err(MetricError::TooFew { needed: 2, got: m });
            }
            let block = m.min(MAX_BLOCK);
            let blocks = m / block;
            let total: f64 = (0..blocks)
                .map(|k| {
                    let rows = ndarray::s![k * block..(k + 1) * block, ..];
                    mmd2(a.slice(rows), b.slice(rows), true)
                })
                .sum();
            Ok(total / blocks as f64)
        }
    }
}
