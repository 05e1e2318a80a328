use super::{NearestNeighborIndex, Vec3};

/// Weighted mean Euclidean (not squared) distance from each query point to
/// its nearest target point. Zero when the weights sum to zero.
pub fn chamfer_one_directional(query: &[Vec3], target: &NearestNeighborIndex, weights: &[f64]) -> f64 {
    assert_eq!(query.len(), weights.len(), "one weight per query point");
    let mut num = 0.0;
    let mut den = 0.0;
    for (q, w) in query.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let (_, _, d) = target.nearest(q).expect("nonempty target");
        num += w * d;
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Unweighted one-directional Chamfer.
pub fn chamfer_mean(query: &[Vec3], target: &NearestNeighborIndex) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    let sum: f64 = query
        .iter()
        .map(|q| target.nearest(q).expect("nonempty target").2)
        .sum();
    sum / query.len() as f64
}

/// Mean of both one-directional terms.
pub fn chamfer_symmetric(a: &[Vec3], b: &[Vec3]) -> f64 {
    let ia = NearestNeighborIndex::new(a);
    let ib = NearestNeighborIndex::new(b);
    0.5 * (chamfer_mean(a, &ib) + chamfer_mean(b, &ia))
}
