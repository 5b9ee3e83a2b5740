//! 1-D two-means clustering of projection values and the selection measures
//! derived from it.

/// Result of [`two_means_1d`]: two ordered centroids and a label per value.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeansResult {
    /// Smaller centroid.
    pub cp1: f64,
    /// Larger centroid.
    pub cp2: f64,
    /// One label in `{1, 2}` per input value, in input order.
    pub labels: Vec<u8>,
    /// Number of Lloyd passes executed.
    pub iterations: usize,
}

/// Lloyd's algorithm on scalars with centroids initialized at the minimum and
/// maximum value. Ties in the assignment go to label 1, so labels always form
/// a threshold partition. Terminates when labels stabilize or after
/// `max_iter` passes.
pub fn two_means_1d(values: &[f64], max_iter: usize) -> TwoMeansResult {
    assert!(!values.is_empty(), "two_means_1d needs a non-empty input");
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return TwoMeansResult {
            cp1: min,
            cp2: min,
            labels: vec![1; values.len()],
            iterations: 0,
        };
    }

    let mut cp1 = min;
    let mut cp2 = max;
    let mut labels = vec![0u8; values.len()];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // With cp1 < cp2, |v - cp1| <= |v - cp2| is exactly v <= midpoint.
        let mid = 0.5 * (cp1 + cp2);
        let mut changed = false;
        let mut sum1 = 0.0;
        let mut n1 = 0usize;
        let mut sum2 = 0.0;
        let mut n2 = 0usize;
        for (label, &v) in labels.iter_mut().zip(values) {
            let next = if v <= mid { 1 } else { 2 };
            if *label != next {
                *label = next;
                changed = true;
            }
            if next == 1 {
                sum1 += v;
                n1 += 1;
            } else {
                sum2 += v;
                n2 += 1;
            }
        }
        // Both clusters are non-empty: min <= mid < max always holds.
        cp1 = sum1 / n1 as f64;
        cp2 = sum2 / n2 as f64;
        if !changed {
            break;
        }
    }
    TwoMeansResult {
        cp1,
        cp2,
        labels,
        iterations,
    }
}

/// Range `max - min` of the signed values; 0 for a singleton.
pub fn diameter(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "diameter needs a non-empty input");
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max - min
}

/// Centroid separation relative to the larger sub-cluster diameter:
/// `|cp1 - cp2| / max(diam_1, diam_2)`.
///
/// When both sub-cluster diameters are 0 the ratio degenerates: a non-zero
/// separation scores `+inf` (two distinct point masses are maximally
/// structured), zero separation scores 0 (nothing to split).
pub fn selvalue(tm: &TwoMeansResult, values: &[f64]) -> f64 {
    debug_assert_eq!(tm.labels.len(), values.len());
    let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for (&label, &v) in tm.labels.iter().zip(values) {
        let b = &mut bounds[(label - 1) as usize];
        b.0 = b.0.min(v);
        b.1 = b.1.max(v);
    }
    let diam = |b: (f64, f64)| if b.1 > b.0 { b.1 - b.0 } else { 0.0 };
    let widest = diam(bounds[0]).max(diam(bounds[1]));
    let separation = (tm.cp2 - tm.cp1).abs();
    if widest > 0.0 {
        separation / widest
    } else if separation > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}
