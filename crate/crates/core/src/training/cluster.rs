//! k-means initialization of view guesses for label-free training.

use crate::error::{MvpError, Result};
use crate::numerics::{squared_distance, Rng};

const MAX_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewClusters {
    /// Cluster rank per target, `0` = leftmost horizontal centroid.
    pub assignment: Vec<usize>,
    /// Initial view value per target, evenly spaced in `[-1, 1]` by rank.
    pub v_tilde: Vec<f64>,
    /// Cluster means in rank order.
    pub centers: Vec<Vec<f64>>,
}

fn horizontal_centroid(image: &[f64], width: usize) -> f64 {
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in image.iter().enumerate() {
        let w = v - lo;
        num += w * (i % width) as f64;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        (width as f64 - 1.0) / 2.0
    }
}

/// Clusters target images into `k` groups and assigns each group a view value.
///
/// Seeds are `k` distinct targets chosen at random; Lloyd iterations stop at
/// convergence or after 50 rounds. Clusters are ranked by the horizontal
/// intensity centroid of their mean image.
pub fn cluster_init_views(
    targets: &[Vec<f64>],
    width: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<ViewClusters> {
    if k < 2 {
        return Err(MvpError::contract("need at least two view clusters"));
    }
    if k > targets.len() {
        return Err(MvpError::contract(format!(
            "{k} clusters requested for {} targets",
            targets.len()
        )));
    }
    let dim = targets[0].len();
    if width == 0 || dim % width != 0 || targets.iter().any(|t| t.len() != dim) {
        return Err(MvpError::dim("cluster_init_views", "targets must share one image shape"));
    }
    let mut idx: Vec<usize> = (0..targets.len()).collect();
    rng.shuffle(&mut idx);
    let mut centers: Vec<Vec<f64>> = idx[..k].iter().map(|&i| targets[i].clone()).collect();
    let mut assignment = vec![usize::MAX; targets.len()];

    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (t, a) in targets.iter().zip(assignment.iter_mut()) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = squared_distance(t, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (t, &a) in targets.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(t) {
                *s += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let mut rank: Vec<usize> = (0..k).collect();
    let cx: Vec<f64> = centers.iter().map(|c| horizontal_centroid(c, width)).collect();
    rank.sort_by(|&a, &b| cx[a].total_cmp(&cx[b]).then(a.cmp(&b)));
    let mut position = vec![0; k];
    for (r, &c) in rank.iter().enumerate() {
        position[c] = r;
    }
    let value = |r: usize| -1.0 + 2.0 * r as f64 / (k - 1) as f64;
    let assignment: Vec<usize> = assignment.iter().map(|&a| position[a]).collect();
    Ok(ViewClusters {
        v_tilde: assignment.iter().map(|&r| value(r)).collect(),
        centers: rank.iter().map(|&c| centers[c].clone()).collect(),
        assignment,
    })
}
