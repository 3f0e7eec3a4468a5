use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::par::Exec;

/// Label of points that belong to no cluster.
pub const NOISE: i64 = -1;

/// Symmetric pairwise distance matrix, rows computed in parallel.
pub fn distance_matrix<T, F>(items: &[T], dist: F, exec: Exec) -> Vec<Vec<f64>>
where
    T: Sync,
    F: Fn(&T, &T) -> f64 + Sync + Send,
{
    let n = items.len();
    let upper = exec.map_range(n, |i| {
        (i + 1..n)
            .map(|j| dist(&items[i], &items[j]))
            .collect::<Vec<_>>()
    });
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in upper.into_iter().enumerate() {
        for (k, d) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    m
}

/// DBSCAN over arbitrary items with a caller-supplied distance.
///
/// See [`dbscan_matrix`] for the labelling rules.
pub fn dbscan<T, F>(items: &[T], dist: F, eps: f64, min_pts: usize) -> Result<Vec<i64>>
where
    T: Sync,
    F: Fn(&T, &T) -> f64 + Sync + Send,
{
    dbscan_matrix(&distance_matrix(items, dist, Exec::default()), eps, min_pts)
}

/// DBSCAN over a precomputed distance matrix.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are the connected components of core points,
/// numbered in order of their lowest-index core point. A non-core point
/// within `eps` of some core point joins the cluster of the lowest-index
/// such core point; everything else is [`NOISE`].
pub fn dbscan_matrix(dist: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("eps must be >= 0, got {eps}")));
    }
    if min_pts < 1 {
        return Err(Error::Argument("min_pts must be >= 1".into()));
    }
    let n = dist.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| i == j || dist[i][j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0i64;
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
                labels[i] = labels[c];
            }
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    #[test]
    fn one_dimensional_example() {
        let labels = dbscan(&[0.0, 0.1, 0.2, 10.0], abs, 0.3, 2).unwrap();
        assert_eq!(labels, vec![0, 0, 0, NOISE]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        assert_eq!(dbscan(&[1.0; 5], abs, 0.0, 5).unwrap(), vec![0; 5]);
        assert_eq!(dbscan(&[1.0; 5], abs, 0.0, 6).unwrap(), vec![NOISE; 5]);
    }

    #[test]
    fn zero_eps_distinct_points_are_noise() {
        assert_eq!(
            dbscan(&[0.0, 1.0, 2.0], abs, 0.0, 2).unwrap(),
            vec![NOISE; 3]
        );
    }

    #[test]
    fn min_pts_one_makes_every_point_core() {
        assert_eq!(
            dbscan(&[0.0, 5.0, 10.0], abs, 0.1, 1).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn border_point_goes_to_lowest_index_core() {
        // two groups of three coincident points; point 3 touches point 2 and point 4 only
        let far = 9.0;
        let mut d = vec![vec![far; 7]; 7];
        for g in [[0usize, 1, 2], [4, 5, 6]] {
            for &i in &g {
                for &j in &g {
                    d[i][j] = 0.0;
                }
            }
        }
        for (i, j) in [(2, 3), (3, 4)] {
            d[i][j] = 0.5;
            d[j][i] = 0.5;
        }
        d[3][3] = 0.0;
        let labels = dbscan_matrix(&d, 0.5, 4).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1]);
        // with min_pts 3 the bridge point is core and the groups merge
        assert_eq!(dbscan_matrix(&d, 0.5, 3).unwrap(), vec![0; 7]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(dbscan(&[0.0], abs, -1.0, 2).is_err());
        assert!(dbscan(&[0.0], abs, 0.1, 0).is_err());
    }
}
