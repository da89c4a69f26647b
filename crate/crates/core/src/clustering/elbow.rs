//! Elbow selection of K: best-of-restarts WCSS for each K in a range, then
//! the K whose point lies farthest below the chord joining the two ends of
//! the curve. Both axes are rescaled to [0, 1] before measuring, so the
//! choice does not depend on the units of the WCSS.

use serde::{Deserialize, Serialize};

use super::{kmeans_best_of, kmeans_from, ClusterModel, KMeansOptions};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Chord distances (in normalized units) below this flag the choice as
/// weak: the curve has no pronounced bend.
pub const LOW_CONFIDENCE_DISTANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub wcss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub points: Vec<ElbowPoint>,
    pub selected_k: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Normalized distance of the selected point below the chord.
    pub chord_distance: f64,
    pub low_confidence: bool,
}

/// Picks the elbow of a curve with strictly increasing `k`. Returns
/// `(k, normalized chord distance)`; ties resolve to the smaller k.
pub fn select_elbow(points: &[ElbowPoint]) -> (usize, f64) {
    let (first, last) = match (points.first(), points.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return (0, 0.0),
    };
    let span_k = (last.k - first.k) as f64;
    let span_w = first.wcss - last.wcss;
    if points.len() < 3 || span_k <= 0.0 || span_w <= 0.0 {
        return (first.k, 0.0);
    }
    let mut best = (first.k, 0.0);
    for p in points {
        let x = (p.k - first.k) as f64 / span_k;
        let y = (p.wcss - last.wcss) / span_w;
        // chord runs from (0, 1) to (1, 0): x + y = 1
        let d = (1.0 - x - y) / std::f64::consts::SQRT_2;
        if d > best.1 {
            best = (p.k, d);
        }
    }
    best
}

/// Index of the point farthest from its assigned centroid.
fn farthest_point(matrix: &EmbeddingMatrix, model: &ClusterModel) -> usize {
    let mut far = 0;
    let mut far_d = -1.0;
    for (i, (row, &a)) in matrix.rows().zip(&model.assignments).enumerate() {
        let d = super::sq_dist(row, model.centroid(a));
        if d > far_d {
            far_d = d;
            far = i;
        }
    }
    far
}

/// Runs best-of-`restarts` K-means for every k in `k_min..=k_max` and picks
/// the elbow. Returns the curve and the best model at the selected k.
pub fn elbow_select(
    matrix: &EmbeddingMatrix,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    seed: u64,
    options: KMeansOptions,
) -> Result<(ElbowCurve, ClusterModel)> {
    if k_min == 0 || k_min >= k_max || k_max > matrix.len() {
        return Err(Error::InvalidInput(format!(
            "elbow range [{k_min}, {k_max}] invalid for {} rows",
            matrix.len()
        )));
    }
    let mut models: Vec<ClusterModel> = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let mut best = kmeans_best_of(matrix, k, restarts, seed, options)?;
        if let Some(prev) = models.last() {
            if best.wcss > prev.wcss {
                // nest: previous optimum plus its worst-served point
                let mut init = prev.centroids.clone();
                let far = farthest_point(matrix, prev);
                init.extend(matrix.row(far).iter().map(|&v| f64::from(v)));
                let nested = kmeans_from(matrix, init, best.seed, options)?;
                log::debug!(
                    "k={k}: restarts reached {:.6e}, nested start reached {:.6e}",
                    best.wcss,
                    nested.wcss
                );
                if nested.wcss < best.wcss {
                    best = nested;
                }
            }
        }
        models.push(best);
    }
    let points: Vec<ElbowPoint> = models
        .iter()
        .map(|m| ElbowPoint {
            k: m.k,
            wcss: m.wcss,
        })
        .collect();
    let (selected_k, chord_distance) = select_elbow(&points);
    let curve = ElbowCurve {
        points,
        selected_k,
        restarts,
        seed,
        chord_distance,
        low_confidence: chord_distance < LOW_CONFIDENCE_DISTANCE,
    };
    let model = models.swap_remove(selected_k - k_min);
    Ok((curve, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(ws: &[f64]) -> Vec<ElbowPoint> {
        ws.iter()
            .enumerate()
            .map(|(i, &w)| ElbowPoint { k: i + 2, wcss: w })
            .collect()
    }

    #[test]
    fn sharp_corner_is_selected() {
        let (k, d) = select_elbow(&pts(&[100.0, 60.0, 20.0, 18.0, 17.0, 16.0]));
        assert_eq!(k, 4);
        assert!(d > LOW_CONFIDENCE_DISTANCE);
    }

    #[test]
    fn straight_line_has_no_elbow() {
        let (k, d) = select_elbow(&pts(&[5.0, 4.0, 3.0, 2.0, 1.0]));
        assert_eq!(k, 2);
        assert!(d.abs() < 1e-12);
        let (k, d) = select_elbow(&pts(&[1.0, 1.0, 1.0]));
        assert_eq!((k, d), (2, 0.0));
    }
}
